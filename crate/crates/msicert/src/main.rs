use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msicert::commands::{self, Status};
use msicert::config::{parse_gain, DerivBound, DerivSettings, ExperimentConfig, Mode, SystemSpec};

/// Certified maximum sampling intervals from noisy data.
#[derive(Debug, Parser)]
#[command(name = "msicert", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Experiment configuration (JSON); defaults apply when absent.
    #[arg(long, env = "MSICERT_CONFIG", global = true)]
    config: Option<PathBuf>,
    #[arg(long, env = "MSICERT_SEED", global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "MSICERT_OUT", global = true)]
    out: Option<PathBuf>,
    /// Fixed strictness margin for every solve.
    #[arg(long, env = "MSICERT_MARGIN", global = true)]
    margin: Option<f64>,
    /// Upper end of the bisection window.
    #[arg(long, env = "MSICERT_H_MAX", global = true)]
    h_max: Option<f64>,
    /// Bisection tolerance.
    #[arg(long, env = "MSICERT_TOL", global = true)]
    tol: Option<f64>,
    /// Worker threads for sweeps.
    #[arg(long, env = "MSICERT_JOBS", global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct Source {
    /// Read measured data from this dataset instead of generating it.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Noise level of the generated experiment.
    #[arg(long)]
    d_bar: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an experiment dataset, or simulate the sampled closed loop
    /// when `--h` is given.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Feedback gain, comma-separated row-major.
        #[arg(long)]
        gain: Option<String>,
        /// Largest sampling gap of the closed-loop simulation.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        periodic: bool,
        #[arg(long)]
        horizon: Option<f64>,
        /// Initial state, comma-separated.
        #[arg(long)]
        x0: Option<String>,
    },
    /// Replace derivatives by Euler estimates with certified error bounds.
    EstimateDeriv {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        a_bar: Option<f64>,
        #[arg(long)]
        b_bar: Option<f64>,
        /// Use the second-order closed-form bound instead of the exponential one.
        #[arg(long)]
        closed_form: bool,
    },
    /// Build the consistency set and check its inertia.
    BuildSet {
        #[command(flatten)]
        source: Source,
    },
    /// Largest certified sampling bound of a fixed gain.
    Analyze {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        gain: Option<String>,
        /// Use the known plant matrices instead of data.
        #[arg(long)]
        model_based: bool,
    },
    /// Alternate analysis and gain design to enlarge the certified bound.
    Design {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        gain: Option<String>,
    },
    /// Run the benchmark noise sweep and compare with the reference values.
    ReproduceExample {
        /// Comma-separated noise levels.
        #[arg(long)]
        noise_levels: Option<String>,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Re-check a certificate file.
    Verify { certificate: Option<PathBuf> },
}

fn list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("{what} entry `{s}`: {e}")))
        .collect()
}

fn apply_source(cfg: &mut ExperimentConfig, source: Source) {
    if let Some(path) = source.dataset {
        cfg.system = SystemSpec::Dataset { path };
    }
    if let Some(d) = source.d_bar {
        cfg.noise_levels = vec![d];
    }
}

fn apply_gain(cfg: &mut ExperimentConfig, gain: Option<String>) -> Result<(), String> {
    if let Some(text) = gain {
        let m = match cfg.model().map_err(|e| e.to_string())? {
            Some(sys) => sys.m(),
            None => 1,
        };
        cfg.gain = Some(parse_gain(&text, m)?);
    }
    Ok(())
}

fn configure(cli: Cli) -> Result<ExperimentConfig, String> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    let single = |cfg: &mut ExperimentConfig| {
        if cfg.noise_levels.len() > 1 {
            cfg.noise_levels.truncate(1);
        }
        if cfg.seeds.len() > 1 {
            cfg.seeds.truncate(1);
        }
    };
    let mode = match cli.command {
        Command::Simulate { source, gain, h, periodic, horizon, x0 } => {
            apply_source(&mut cfg, source);
            apply_gain(&mut cfg, gain)?;
            if h.is_some() {
                cfg.simulate.h = h;
            }
            cfg.simulate.periodic |= periodic;
            if let Some(t) = horizon {
                cfg.simulate.horizon = t;
            }
            if let Some(x) = x0 {
                cfg.simulate.x0 = list(&x, "x0")?;
            }
            Mode::Simulate
        }
        Command::EstimateDeriv { dataset, a_bar, b_bar, closed_form } => {
            if let Some(path) = dataset {
                cfg.system = SystemSpec::Dataset { path };
            }
            match (a_bar, b_bar, cfg.deriv.as_mut()) {
                (Some(a), Some(b), _) => {
                    cfg.deriv = Some(DerivSettings {
                        a_bar: a,
                        b_bar: b,
                        bound: DerivBound::default(),
                    })
                }
                (a, b, Some(d)) => {
                    d.a_bar = a.unwrap_or(d.a_bar);
                    d.b_bar = b.unwrap_or(d.b_bar);
                }
                (None, None, None) => {}
                _ => return Err("--a-bar and --b-bar must be given together".into()),
            }
            if let (true, Some(d)) = (closed_form, cfg.deriv.as_mut()) {
                d.bound = DerivBound::ClosedForm;
            }
            Mode::EstimateDeriv
        }
        Command::BuildSet { source } => {
            apply_source(&mut cfg, source);
            Mode::BuildSet
        }
        Command::Analyze { source, gain, model_based } => {
            apply_source(&mut cfg, source);
            apply_gain(&mut cfg, gain)?;
            cfg.model_based |= model_based;
            Mode::Analyze
        }
        Command::Design { source, gain } => {
            apply_source(&mut cfg, source);
            apply_gain(&mut cfg, gain)?;
            Mode::Design
        }
        Command::ReproduceExample { noise_levels, seeds } => {
            if let Some(t) = noise_levels {
                cfg.noise_levels = list(&t, "noise level")?;
            }
            if let Some(t) = seeds {
                cfg.seeds = list(&t, "seed")?;
            }
            Mode::ReproduceExample
        }
        Command::Verify { certificate } => {
            if certificate.is_some() {
                cfg.certificate = certificate;
            }
            Mode::Verify
        }
    };
    cfg.mode = Some(mode);
    if let Some(seed) = g.seed {
        cfg.seeds = vec![seed];
    }
    if !matches!(mode, Mode::ReproduceExample | Mode::Verify) && g.config.is_none() {
        single(&mut cfg);
    }
    if let Some(out) = g.out {
        cfg.output = out;
    }
    if let Some(m) = g.margin {
        cfg.margin = Some(m);
    }
    if let Some(h) = g.h_max {
        cfg.bisection.h_max = h;
    }
    if let Some(t) = g.tol {
        cfg.bisection.tol = t;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    // usage errors share the fatal code; 2 is reserved for partial results
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Status::Fatal.code() as u8 } else { 0 });
        }
    };
    let cfg = match configure(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Status::Fatal.code() as u8);
        }
    };
    match commands::run(&cfg) {
        Ok(out) => {
            for line in &out.report {
                println!("{line}");
            }
            for path in &out.written {
                eprintln!("wrote {}", path.display());
            }
            ExitCode::from(out.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Status::Fatal.code() as u8)
        }
    }
}
