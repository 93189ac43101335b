mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rsma_core::error::Category;
use rsma_core::evaluator::{
    experiment_codebooks, run_experiment, run_experiment_with_threads, write_cdf_csv, write_csv, write_json,
    write_trace_csv, EmpiricalCdf, ExperimentResult,
};
use rsma_core::{Error, Result};

use config::{resolve, Csit, Format, GridSpec, Resolved, SchemeSpec, Settings};

const VERSION: &str = env!("RSMA_VERSION");

#[derive(Parser)]
#[command(name = "rsma-sim", version = VERSION, about = "Robust rate-splitting precoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ergodic sum rate over an SNR grid.
    Sweep(RunArgs),
    /// Objective traces of the iterative designs at one operating point.
    Converge(RunArgs),
    /// Empirical CDF of the sum rate at one operating point.
    Cdf {
        #[command(flatten)]
        run: RunArgs,
        /// Report the outage probability at this sum-rate target (bits/s/Hz).
        #[arg(long)]
        target: Option<f64>,
    },
    /// Run the acceptance checks and print a pass/fail table.
    Selftest,
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML file with the same keys as the flags (kebab-case); flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Transmit antennas.
    #[arg(long)]
    m: Option<usize>,
    /// Receive antennas (and streams) per user.
    #[arg(long)]
    n: Option<usize>,
    /// Users.
    #[arg(long)]
    k: Option<usize>,
    /// SNR grid in dB: `start:step:stop` (inclusive) or `a,b,c`.
    #[arg(long)]
    snr_db: Option<String>,
    /// CSIT error variances: `start:step:stop` or `a,b,c`.
    #[arg(long)]
    sigma_e2: Option<String>,
    #[arg(long)]
    draws: Option<usize>,
    /// Comma-separated: proposed, rwmmse, mrt.
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    obj_tol: Option<f64>,
    #[arg(long)]
    bisect_tol: Option<f64>,
    /// Existing directory for the output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_enum)]
    csit: Option<Csit>,
    /// Feedback bits per user for quantized CSIT.
    #[arg(long)]
    bits: Option<u32>,
    /// Worker threads (default: all cores). Does not affect results.
    #[arg(long)]
    threads: Option<usize>,
    /// Record solver wall-clock time (makes outputs differ between runs).
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn settings(&self) -> Settings {
        Settings {
            m: self.m,
            n: self.n,
            k: self.k,
            snr_db: self.snr_db.clone().map(GridSpec::Text),
            sigma_e2: self.sigma_e2.clone().map(GridSpec::Text),
            draws: self.draws,
            schemes: self.schemes.clone().map(SchemeSpec::Text),
            seed: self.seed,
            max_iters: self.max_iters,
            obj_tol: self.obj_tol,
            bisect_tol: self.bisect_tol,
            out_dir: self.out_dir.clone(),
            format: self.format,
            csit: self.csit,
            bits: self.bits,
            threads: self.threads,
            timing: self.timing.then_some(true),
        }
    }
}

fn defaults(snr: &str, draws: usize, schemes: &str) -> Settings {
    Settings {
        snr_db: Some(GridSpec::Text(snr.into())),
        sigma_e2: Some(GridSpec::Single(0.1)),
        draws: Some(draws),
        schemes: Some(SchemeSpec::Text(schemes.into())),
        ..Settings::default()
    }
}

fn load(args: &RunArgs, base: Settings) -> Result<Resolved> {
    let mut s = base;
    if let Some(path) = &args.config {
        s = s.overlay(&Settings::from_file(path)?);
    }
    resolve(&s.overlay(&args.settings()))
}

fn execute(r: &Resolved) -> Result<ExperimentResult> {
    match r.threads {
        Some(t) => run_experiment_with_threads(&r.experiment, t),
        None => run_experiment(&r.experiment),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_outputs(name: &str, r: &Resolved, result: &ExperimentResult) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |file: String, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let mut w = create(&r.out_dir, &file)?;
        f(&mut w)?;
        w.flush()?;
        written.push(r.out_dir.join(file));
        Ok(())
    };
    match r.format {
        Format::Csv => emit(format!("{name}.csv"), &|w| write_csv(w, result, VERSION))?,
        Format::Json => emit(format!("{name}_records.json"), &|w| {
            #[derive(serde::Serialize)]
            struct Records<'a> {
                version: &'a str,
                #[serde(flatten)]
                result: &'a ExperimentResult,
            }
            serde_json::to_writer_pretty(
                w,
                &Records {
                    version: VERSION,
                    result,
                },
            )?;
            Ok(())
        })?,
    }
    emit(format!("{name}_summary.json"), &|w| write_json(w, result, VERSION))?;
    if let Some(feedback) = experiment_codebooks(&r.experiment)? {
        for (k, cb) in feedback.codebooks().iter().enumerate() {
            emit(format!("codebook_user{k}.bin"), &|w| cb.write_to(w, r.experiment.seed))?;
        }
    }
    Ok(written)
}

fn print_summary(result: &ExperimentResult) {
    println!(
        "{:<10} {:>7} {:>9} {:>10} {:>8} {:>6} {:>8} {:>8}",
        "scheme", "snr_db", "sigma_e2", "esr_bits", "std_err", "fail", "no_conv", "iters"
    );
    for p in &result.points {
        println!(
            "{:<10} {:>7} {:>9.4} {:>10.4} {:>8.4} {:>6} {:>8} {:>8.1}",
            p.scheme.name(),
            p.snr_db,
            p.sigma_e2,
            p.esr_bits,
            p.std_err_bits,
            p.failures,
            p.not_converged,
            p.mean_iterations
        );
    }
}

fn finish(name: &str, r: &Resolved, result: &ExperimentResult) -> Result<()> {
    for path in write_outputs(name, r, result)? {
        eprintln!("wrote {}", path.display());
    }
    print_summary(result);
    result.check_failures()
}

fn single_point(r: &Resolved) -> Result<()> {
    if r.experiment.snr_db.len() != 1 {
        return Err(Error::parameter("snr_db", "this command takes a single SNR"));
    }
    if r.experiment.sigma_e2.len() != 1 {
        return Err(Error::parameter(
            "sigma_e2",
            "this command takes a single error variance",
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sweep(args) => {
            let r = load(&args, defaults("0:5:40", 200, "proposed,rwmmse,mrt"))?;
            let result = execute(&r)?;
            finish("sweep", &r, &result)?;
        }
        Command::Converge(args) => {
            let mut r = load(&args, defaults("20", 20, "proposed,rwmmse"))?;
            single_point(&r)?;
            r.experiment.keep_traces = true;
            let result = execute(&r)?;
            let mut w = create(&r.out_dir, "converge_traces.csv")?;
            write_trace_csv(&mut w, &result, VERSION)?;
            w.flush()?;
            eprintln!("wrote {}", r.out_dir.join("converge_traces.csv").display());
            finish("converge", &r, &result)?;
        }
        Command::Cdf { run, target } => {
            let r = load(&run, defaults("30", 200, "proposed,rwmmse,mrt"))?;
            single_point(&r)?;
            let result = execute(&r)?;
            let mut w = create(&r.out_dir, "cdf.csv")?;
            write_cdf_csv(&mut w, &result, VERSION)?;
            w.flush()?;
            eprintln!("wrote {}", r.out_dir.join("cdf.csv").display());
            finish("cdf", &r, &result)?;
            if let Some(target) = target {
                for p in &result.points {
                    let rates = result.sum_rates(p.scheme, p.snr_db, p.sigma_e2);
                    let outage = EmpiricalCdf::new(&rates)?.eval(target);
                    println!("outage {} at {target} bits: {outage:.4}", p.scheme);
                }
            }
        }
        Command::Selftest => {
            let outcomes = rsma_verify::acceptance::run_all();
            for o in &outcomes {
                println!("{}", o.line());
            }
            let passed = outcomes.iter().filter(|o| o.passed).count();
            println!("{passed}/{} criteria passed", outcomes.len());
            return Ok(passed == outcomes.len());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                Category::Parameter => 2,
                Category::Numerical => 3,
                Category::Io => 4,
            })
        }
    }
}
