//! Command-line front end: run one experiment, sweep a parameter grid,
//! or export the adversary's embeddings for external projection.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use vflsim_core::harness::emit::{emit_results, EmitFormat};
use vflsim_core::harness::{
    build_dataset, build_session, dump_embeddings, expand_sweep, load_config, run_experiment,
    ResultRecord, SeedPlan,
};

#[derive(Parser)]
#[command(
    name = "vflsim",
    about = "Deterministic vertical federated learning simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    JsonLines,
    Csv,
}

impl From<Format> for EmitFormat {
    fn from(f: Format) -> EmitFormat {
        match f {
            Format::JsonLines => EmitFormat::JsonLines,
            Format::Csv => EmitFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json-lines")]
        format: Format,
        /// Override the config's seed list, e.g. --seeds 1,2,3
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Expand the [sweep] section and run every grid point.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json-lines")]
        format: Format,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Train the first seed's session and dump the adversary's
    /// bottom-model embeddings of the training set as CSV.
    DumpEmbeddings {
        config: PathBuf,
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn summarize(records: &[ResultRecord]) {
    for record in records {
        let agg = &record.aggregate;
        let attack = agg
            .attack_success_mean
            .map(|m| format!("{m:.4}"))
            .unwrap_or_else(|| "-".to_string());
        eprintln!(
            "{} defense={} attack={} task={:.4} (std {:.4}) attack_success={} epoch_s={:.4}",
            record.config.dataset.describe(),
            record
                .config
                .defense
                .to_stack()
                .map(|s| s.describe())
                .unwrap_or_default(),
            record.config.attack.kind,
            agg.task_metric_mean,
            agg.task_metric_std,
            attack,
            agg.mean_epoch_seconds,
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            format,
            seeds,
        } => {
            let mut cfg = load_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if cfg.sweep.is_some() {
                bail!(
                    "{} contains a [sweep] section; use `vflsim sweep`",
                    config.display()
                );
            }
            if let Some(seeds) = seeds {
                if seeds.is_empty() {
                    bail!("--seeds override must not be empty");
                }
                cfg.evaluation.seeds = seeds;
            }
            let record = run_experiment(&cfg)?;
            summarize(std::slice::from_ref(&record));
            emit_results(&[record], format.into(), out.as_deref())?;
            Ok(())
        }
        Command::Sweep {
            config,
            out,
            format,
            seeds,
        } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let mut points = expand_sweep(&text)?;
            if let Some(seeds) = &seeds {
                if seeds.is_empty() {
                    bail!("--seeds override must not be empty");
                }
                for point in &mut points {
                    point.evaluation.seeds = seeds.clone();
                }
            }
            eprintln!("sweep: {} points", points.len());
            let mut records = Vec::with_capacity(points.len());
            for point in &points {
                let record = run_experiment(point)?;
                summarize(std::slice::from_ref(&record));
                records.push(record);
            }
            emit_results(&records, format.into(), out.as_deref())?;
            Ok(())
        }
        Command::DumpEmbeddings { config, out, seeds } => {
            let mut cfg = load_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(seeds) = seeds {
                if seeds.is_empty() {
                    bail!("--seeds override must not be empty");
                }
                cfg.evaluation.seeds = seeds;
            }
            let seed = cfg.evaluation.seeds[0];
            let plan = SeedPlan::from_master(seed);
            let (train, _) = build_dataset(&cfg, &plan)?;
            let mut session = build_session(&cfg, &train, &plan)?;
            session.train()?;
            dump_embeddings(&session, &train.x, &train.y, &out)?;
            eprintln!(
                "wrote {} embedding rows (seed {seed}) to {}",
                train.len(),
                out.display()
            );
            Ok(())
        }
    }
}
