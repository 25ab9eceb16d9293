use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use protonet::cli::{
    exit_code, gen_synthetic, run_evaluation, run_experiment, run_training, ExperimentConfig,
};
use protonet::eval::{parse_report_csv, render_table};
use protonet::Error;

#[derive(Parser)]
#[command(name = "protonet", version, about = "Episodic prototypical-network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (INI).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[experiment] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (a file path for gen-synthetic).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Caps evaluation worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as a PFEB file.
    GenSynthetic(Common),
    /// Meta-train one head per episode config.
    Train(Common),
    /// Evaluate the untrained head, or a checkpoint, over the episode grid.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the full grid of episode configs and modes.
    Run(Common),
    /// Render a report CSV as an aligned table.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::from_file(&common.config, common.seed)?;
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(t) = common.threads {
        config.threads = t.max(1);
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenSynthetic(common) => {
            let config = load(&common)?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("synthetic.pfeb"));
            let d = gen_synthetic(&config, &out)?;
            println!(
                "wrote {} ({} examples, dim {}, {} classes)",
                out.display(),
                d.len(),
                d.dim(),
                d.n_classes()
            );
        }
        Command::Train(common) => {
            let config = load(&common)?;
            let out = run_training(&config)?;
            for (cfg, h) in &out.histories {
                if let Some(last) = h.records.last() {
                    println!(
                        "{}-way {}-shot: final loss {:.4}, val accuracy {:.2}%",
                        cfg.n_way,
                        cfg.k_shot,
                        last.loss,
                        100.0 * last.val_accuracy
                    );
                }
            }
        }
        Command::Eval { common, checkpoint } => {
            let config = load(&common)?;
            let out = run_evaluation(&config, checkpoint.as_deref())?;
            print!("{}", out.report.render_table());
        }
        Command::Run(common) => {
            let config = load(&common)?;
            let out = run_experiment(&config)?;
            print!("{}", out.report.render_table());
        }
        Command::Report { input } => {
            let text = std::fs::read_to_string(&input).map_err(|e| Error::Io {
                path: input.clone(),
                source: e,
            })?;
            print!("{}", render_table(&parse_report_csv(&text)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("protonet: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
