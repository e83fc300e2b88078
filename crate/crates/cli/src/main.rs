use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loadscale::experiment::{
    format_report, report, run_experiment, stage_fit, stage_forecast, stage_groups, stage_synth,
    stage_theory, write_report, Experiment, ExperimentConfig, FitRecord, REPORT_FILE,
};

#[derive(Parser)]
#[command(
    name = "loadscale",
    version,
    about = "Aggregation scaling laws for load-forecast error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic population as data.csv.
    Synth(Common),
    /// Sample customer groups into groups.csv.
    Groups(Common),
    /// Forecast every group in groups.csv and write metrics.csv.
    Forecast(Common),
    /// Fit the scaling law to metrics.csv and write fits.csv and curve.csv.
    Fit(Common),
    /// Variance and CV-envelope Monte Carlo checks.
    Theory(Common),
    /// Groups, forecasts and fits in one pass.
    Run(Common),
    /// Merge fits from several runs into one ranked table.
    Report {
        /// fits.csv files or run directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for report.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the default desk-scale configuration as TOML.
    Config {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; the desk-scale defaults are used without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

struct Setup {
    exp: Experiment,
    out: PathBuf,
}

fn setup(c: &Common) -> Result<Setup, String> {
    let mut cfg = match (&c.config, c.seed) {
        (Some(path), _) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
        (None, Some(seed)) => ExperimentConfig::desk(seed),
        (None, None) => return Err("either --config or --seed is required".into()),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or("no output directory: pass --out or set `out` in the config")?;
    if let Some(n) = c.threads.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let exp = Experiment::new(cfg).map_err(|e| e.to_string())?;
    Ok(Setup { exp, out })
}

fn print_fits(fits: &[FitRecord]) {
    for f in fits {
        let w_star = f.w_star.map_or("-".to_string(), |w| format!("{w:.1}"));
        println!(
            "{} {} h={}: sqrt_a0={:.3} sqrt_a1={:.3} p={:.3} W*={}",
            f.forecaster, f.metric, f.horizon, f.sqrt_alpha0, f.sqrt_alpha1, f.p, w_star
        );
    }
}

fn written(s: &Setup, what: &str) {
    println!(
        "wrote {what} to {} (config {})",
        s.out.display(),
        &s.exp.hash[..12]
    );
}

fn execute(cmd: Command) -> Result<(), String> {
    let err = |e: loadscale::Error| e.to_string();
    match cmd {
        Command::Synth(c) => {
            let s = setup(&c)?;
            stage_synth(&s.exp, &s.out).map_err(err)?;
            written(&s, "data.csv");
        }
        Command::Groups(c) => {
            let s = setup(&c)?;
            let groups = stage_groups(&s.exp, &s.out).map_err(err)?;
            println!("{} groups", groups.len());
            written(&s, "groups.csv");
        }
        Command::Forecast(c) => {
            let s = setup(&c)?;
            let rows = stage_forecast(&s.exp, &s.out).map_err(err)?;
            println!("{} metric rows", rows.len());
            written(&s, "metrics.csv");
        }
        Command::Fit(c) => {
            let s = setup(&c)?;
            print_fits(&stage_fit(&s.exp, &s.out).map_err(err)?);
        }
        Command::Theory(c) => {
            let s = setup(&c)?;
            let (variance, checks) = stage_theory(&s.exp, &s.out).map_err(err)?;
            for v in &variance {
                println!(
                    "n={} closed_form={:.4} mc={:.4}",
                    v.n, v.closed_form, v.mc_variance
                );
            }
            for c in &checks {
                println!(
                    "n={} mean_cv={:.4} envelope={:.4} {}",
                    c.n,
                    c.mean_cv,
                    c.envelope,
                    if c.holds { "holds" } else { "violated" }
                );
            }
        }
        Command::Run(c) => {
            let s = setup(&c)?;
            print_fits(&run_experiment(&s.exp, &s.out).map_err(err)?);
        }
        Command::Report { inputs, out } => {
            let (hash, rows) = report(&inputs).map_err(err)?;
            std::fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            write_report(&out.join(REPORT_FILE), &hash, &rows).map_err(err)?;
            print!("{}", format_report(&rows));
        }
        Command::Config { seed } => {
            print!(
                "{}",
                ExperimentConfig::desk(seed).to_toml_string().map_err(err)?
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
