use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hatfem::fem::BasisKind;
use hatfem::harness::{
    fem_spectrum, gd_simulation, kernel_spectrum_report, report, run_experiment, write_json, DatasetSpec,
    ExperimentConfig, ExperimentId,
};
use hatfem::plot::write_text;
use hatfem::Error;

#[derive(Parser)]
#[command(name = "hatfem", version, about = "Spectral-bias experiments for ReLU and Hat networks")]
struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mass-matrix spectra, conditioning fit and eigenfunction plots.
    FemSpectrum {
        #[arg(long, default_value = "relu")]
        basis: BasisKind,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256")]
        sizes: Vec<usize>,
        #[arg(long, default_value = "out/fem")]
        out: PathBuf,
    },
    /// Gradient descent on the discretized least-squares problem.
    GdSim {
        #[arg(long, default_value = "relu")]
        basis: BasisKind,
        /// Mesh sizes; one run per size.
        #[arg(long, value_delimiter = ',', default_value = "64")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out/gd")]
        out: PathBuf,
    },
    /// Train networks from a config file or a built-in recipe.
    Train {
        #[arg(long, conflicts_with = "experiment")]
        config: Option<PathBuf>,
        /// Built-in recipe id, e.g. exp1-sum135.
        #[arg(long)]
        experiment: Option<ExperimentId>,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved config as JSON and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Gaussian-kernel Gram spectrum of a dataset.
    KernelSpectrum {
        /// Experiment config whose dataset is used; the synthetic proxy otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/kernel")]
        out: PathBuf,
    },
    /// Collect every summary.json below a directory into report.md.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn resolve(config: Option<PathBuf>, experiment: Option<ExperimentId>) -> hatfem::Result<ExperimentConfig> {
    match (config, experiment) {
        (Some(path), _) => ExperimentConfig::load(&path),
        (None, Some(id)) => Ok(ExperimentConfig::recipe(id)),
        (None, None) => Err(Error::Config(vec!["train: pass --config or --experiment".into()])),
    }
}

fn run(cli: Cli) -> hatfem::Result<i32> {
    let say = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::FemSpectrum { basis, sizes, out } => {
            let s = fem_spectrum(basis, &sizes, &out)?;
            for e in &s.spectra {
                say(format!("n={:<5} lambda_min={:.6e} lambda_max={:.6e} cond={:.6e}", e.n, e.lambda_min, e.lambda_max, e.condition));
            }
            if let Some(slope) = s.slope {
                say(format!("log-log conditioning slope {slope:.4}"));
            }
            say(format!("wrote {}", out.display()));
        }
        Command::GdSim {
            basis,
            sizes,
            steps,
            seed,
            out,
        } => {
            let mut all = Vec::new();
            for n in sizes {
                let dir = out.join(format!("n{n}"));
                let s = gd_simulation(basis, n, steps, seed, &dir)?;
                say(format!(
                    "n={n} eta={:.4e} max decay deviation {:.3e} final loss {:.4e}",
                    s.step_size, s.max_decay_deviation, s.final_loss
                ));
                all.push(s);
            }
            write_json(&out.join("gd_summary.json"), &all)?;
        }
        Command::Train {
            config,
            experiment,
            seed,
            jobs,
            out,
            print_config,
        } => {
            let mut cfg = resolve(config, experiment)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.validate()?;
            if print_config {
                println!("{}", cfg.to_json());
                return Ok(0);
            }
            say(format!("{}: {} seed(s), {} epochs", cfg.id, cfg.seeds.len(), cfg.epochs));
            let s = run_experiment(&cfg, jobs)?;
            for g in &s.groups {
                let w = g.width.map(|w| format!(" width {w}")).unwrap_or_default();
                say(format!("{}{w}: median threshold epochs {:?}", s.id, g.median_threshold_epochs));
            }
            if s.any_diverged() {
                let bad: Vec<u64> = s.runs.iter().filter(|r| r.diverged).map(|r| r.seed).collect();
                say(format!("diverged seeds: {bad:?}"));
                return Ok(3);
            }
        }
        Command::KernelSpectrum {
            config,
            bandwidth,
            seed,
            out,
        } => {
            let spec = match config {
                Some(p) => ExperimentConfig::load(&p)?
                    .dataset
                    .ok_or_else(|| Error::Config(vec!["dataset: config has none".into()]))?,
                None => DatasetSpec::default_proxy(),
            };
            let s = kernel_spectrum_report(&spec, bandwidth, seed, &out)?;
            say(format!(
                "{}: {} points in d={}, s={:.4e}, mu in [{:.3e}, {:.3e}], noise band {}..={}",
                s.dataset, s.points, s.dim, s.bandwidth, s.mu_min, s.mu_max, s.band.0, s.band.1
            ));
        }
        Command::Report { out } => {
            let table = report(&out)?;
            write_text(&out.join("report.md"), &format!("# Run summary\n\n{table}"))?;
            print!("{table}");
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
