use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsma-sim"))
        .args(args)
        .output()
        .expect("spawn rsma-sim")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small<'a>(dir: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "--out-dir",
        dir.to_str().unwrap(),
        "--m",
        "4",
        "--k",
        "2",
        "--draws",
        "3",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn sweep_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep"];
    args.extend(small(dir.path(), &["--snr-db", "0:10:20"]));
    let out = sim(&args);
    assert!(out.status.success(), "{}", stderr(&out));

    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# rsma-sim "));
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(
        lines.next().unwrap(),
        "scheme,snr_db,sigma_e2,draw,sum_rate_bits,rc_min_bits,iterations,t_final,solver_seconds"
    );
    // 3 schemes x 3 SNRs x 3 draws
    assert_eq!(lines.count(), 27);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["points"].as_array().unwrap().len(), 9);
    assert_eq!(summary["config"]["draws"], 3);
}

#[test]
fn json_format_and_quantized_codebooks() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep"];
    args.extend(small(
        dir.path(),
        &[
            "--snr-db",
            "10",
            "--format",
            "json",
            "--csit",
            "quantized",
            "--bits",
            "3",
            "--schemes",
            "mrt",
        ],
    ));
    let out = sim(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let records: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep_records.json")).unwrap()).unwrap();
    assert_eq!(records["records"].as_array().unwrap().len(), 3);
    assert!(records["gamma_hat"].as_f64().unwrap() > 0.0);
    for k in 0..2 {
        assert!(dir.path().join(format!("codebook_user{k}.bin")).is_file());
    }
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn converge_and_cdf_write_their_extra_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["converge"];
    args.extend(small(dir.path(), &[]));
    let out = sim(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let traces = fs::read_to_string(dir.path().join("converge_traces.csv")).unwrap();
    assert!(traces
        .lines()
        .any(|l| l == "scheme,snr_db,sigma_e2,draw,iteration,objective_nats"));
    assert!(traces.lines().any(|l| l.starts_with("proposed,20,")));

    let mut args = vec!["cdf"];
    args.extend(small(dir.path(), &["--target", "5"]));
    let out = sim(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("outage proposed at 5 bits"));
    assert!(dir.path().join("cdf.csv").is_file());
}

fn assert_parameter_error(out: &Output, key: &str) {
    assert_eq!(out.status.code(), Some(2), "{}", stderr(out));
    assert!(stderr(out).contains(&format!("`{key}`")), "{}", stderr(out));
}

#[test]
fn missing_out_dir_is_a_parameter_error() {
    assert_parameter_error(&sim(&["sweep", "--draws", "1"]), "out_dir");
    assert_parameter_error(&sim(&["sweep", "--out-dir", "/definitely/not/here"]), "out_dir");
}

#[test]
fn bad_inputs_are_parameter_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_parameter_error(&sim(&["sweep", "--out-dir", d, "--schemes", "proposed,foo"]), "schemes");
    assert_parameter_error(&sim(&["sweep", "--out-dir", d, "--schemes", "rbd"]), "schemes");
    assert_parameter_error(&sim(&["sweep", "--out-dir", d, "--snr-db", "0:5"]), "snr_db");
    assert_parameter_error(&sim(&["sweep", "--out-dir", d, "--sigma-e2", "x"]), "sigma_e2");
    assert_parameter_error(&sim(&["sweep", "--out-dir", d, "--k", "0"]), "k");
    assert_parameter_error(&sim(&["sweep", "--out-dir", d, "--csit", "quantized"]), "bits");
    assert_parameter_error(&sim(&["cdf", "--out-dir", d, "--snr-db", "0,10"]), "snr_db");
    assert_parameter_error(&sim(&["sweep", "--out-dir", d, "--threads", "0"]), "threads");
    // clap rejects unknown flags with the same exit code
    assert_eq!(sim(&["sweep", "--antennas", "4"]).status.code(), Some(2));
    assert!(fs::read_dir(d).unwrap().next().is_none());
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for threads in ["1", "4"] {
        let sub = dir.path().join(threads);
        fs::create_dir(&sub).unwrap();
        let mut args = vec!["sweep"];
        args.extend(small(&sub, &["--snr-db", "0,20", "--seed", "3", "--threads", threads]));
        let out = sim(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        csvs.push(fs::read(sub.join("sweep.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "m = 4\nk = 2\ndraws = 9\nsnr-db = [0.0, 10.0]\nschemes = [\"mrt\"]\nseed = 7\n",
    )
    .unwrap();
    let out = sim(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--draws",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["draws"], 2);
    assert_eq!(summary["config"]["m"], 4);
    assert_eq!(summary["config"]["seed"], 7);
    assert_eq!(summary["config"]["schemes"], serde_json::json!(["mrt"]));
    assert_eq!(summary["points"].as_array().unwrap().len(), 2);

    fs::write(&cfg, "antennas = 4\n").unwrap();
    let out = sim(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_parameter_error(&out, "config");
}
