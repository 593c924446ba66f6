use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jdet_cli::compare::{compare, Table};
use jdet_cli::config::CompareBlock;
use jdet_cli::table1::{self, Table1Options};
use jdet_cli::{predict, simulate, to_json, write_artifact, CliError, RunConfig};
use jdet_core::montecarlo::TrialConfig;

#[derive(Parser)]
#[command(name = "jdet", version, about = "Joint detection and estimation: predictions, simulations, comparisons")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analytic detection, false-alarm and accuracy predictions.
    Predict(RunArgs),
    /// Monte Carlo experiments.
    Simulate(RunArgs),
    /// Theory vs simulation table with a verdict.
    Compare(CompareArgs),
    /// Integrated false-alarm sweep over the reference thresholds.
    Table1(Table1Args),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// Prediction table (`fa_density.csv` or a shift-density table).
    #[arg(long)]
    theory: PathBuf,
    /// Simulated density table.
    #[arg(long)]
    sim: PathBuf,
    /// Config whose `compare` block sets the pass/fail thresholds.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Threshold row to take from a swept theory table.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Amplitude rows to take from a swept theory table.
    #[arg(long)]
    amplitude: Option<f64>,
}

#[derive(Args)]
struct Table1Args {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also simulate every row with this many trials.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    Ok(RunConfig::load(&args.config)?.with_overrides(args.out.clone(), args.seed, args.workers))
}

fn run_predict(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let p = predict::run(&cfg)?;
    for e in &p.integrated {
        println!(
            "A = {} λ0 = {}: integrated false-alarm probability {:.4e} (tabulated {:.4e})",
            e.amplitude, e.lambda0, e.value, e.tabulated
        );
    }
    for f in &p.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run_simulate(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let s = simulate::run(&cfg)?;
    for l in &s.lines {
        println!("{l}");
    }
    for f in &s.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<(), CliError> {
    let (thresholds, lambda0, amplitude) = match &args.config {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            let single = |v: Option<Vec<f64>>| v.filter(|v| v.len() == 1).map(|v| v[0]);
            let l = single(cfg.decision.as_ref().and_then(|d| d.lambda0.as_ref()).map(|s| s.to_vec()));
            let a = single(cfg.model.as_ref().map(|m| m.amplitude.to_vec()));
            (cfg.compare.clone().unwrap_or_default(), l, a)
        }
        None => (CompareBlock::default(), None, None),
    };
    let mut theory = Table::read(&args.theory)?.select("lambda0", args.lambda0.or(lambda0))?;
    // Amplitude is a sweep column only when the abscissa is the state variable.
    if theory.index(&["x"]).is_some() {
        theory = theory.select("amplitude", args.amplitude.or(amplitude))?;
    }
    let sim = Table::read(&args.sim)?;
    let report = compare(&theory, &sim, &thresholds)?;
    println!("{:>14} {:>14} {:>14} {:>9} {:>12} {:>6}", "x", "theory", "simulation", "ratio", "poisson_sd", "pass");
    for p in report.points.iter().filter(|p| p.judged) {
        println!(
            "{:>14.6} {:>14.6e} {:>14.6e} {:>9.4} {:>12.4e} {:>6}",
            p.x, p.theory, p.simulation, p.ratio, p.poisson_sigma, p.pass
        );
    }
    println!(
        "{} of {} points judged, {} failed; integral ratio {:.4}",
        report.judged,
        report.points.len(),
        report.failed,
        report.integral_ratio
    );
    println!("verdict: {}", serde_json::to_string(&report.verdict).unwrap_or_default().trim_matches('"'));
    if let Some(dir) = &args.out {
        write_artifact(dir, "compare.csv", &report.to_csv())?;
        write_artifact(dir, "compare.json", &to_json(&report)?)?;
    }
    Ok(())
}

fn run_table1(args: &Table1Args) -> Result<(), CliError> {
    let mut opts = Table1Options::default();
    let mut out = PathBuf::from("out");
    let mut trials = None;
    if let Some(p) = &args.config {
        let cfg = RunConfig::load(p)?;
        if let Some(m) = &cfg.model {
            opts.amplitude = m.amplitude.to_vec()[0];
            opts.reference_width = m.reference_width;
        }
        opts.domain = cfg.width_domain();
        out = cfg.out_dir();
        trials = cfg.montecarlo.as_ref().map(|m| TrialConfig {
            n_trials: m.n_trials,
            seed: m.seed,
            workers: m.workers,
        });
    }
    if let Some(n) = args.trials {
        let t = trials.get_or_insert(TrialConfig::new(n, 1));
        t.n_trials = n;
    }
    if let Some(t) = trials.as_mut() {
        if let Some(s) = args.seed {
            t.seed = s;
        }
        if let Some(w) = args.workers {
            t.workers = w;
        }
    }
    opts.trials = trials;
    if let Some(o) = &args.out {
        out = o.clone();
    }
    let rows = table1::run(&opts)?;
    println!("{:>7} {:>12} {:>12} {:>8} {:>12}", "lambda0", "integrated", "reference", "ratio", "simulated");
    for r in &rows {
        let sim = r.simulated.map_or("-".to_string(), |(v, e)| format!("{v:.3e}±{e:.1e}"));
        println!(
            "{:>7} {:>12.3e} {:>12.3e} {:>8.4} {:>12}",
            r.lambda0, r.integrated, r.reference_expected, r.ratio, sim
        );
    }
    let path = write_artifact(&out, "table1.csv", &table1::to_csv(&rows))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Predict(a) => run_predict(a),
        Cmd::Simulate(a) => run_simulate(a),
        Cmd::Compare(a) => run_compare(a),
        Cmd::Table1(a) => run_table1(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
