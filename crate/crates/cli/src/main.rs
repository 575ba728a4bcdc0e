use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gma3d_cli::commands::{self, CliResult};
use gma3d_cli::RunConfig;

/// Local-global motion aggregation for occluded scene flow on synthetic scenes.
#[derive(Parser)]
#[command(name = "gma3d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-frame scene.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a scene file; writes report.txt, params.gtc and pred.gtc.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print flow metrics of a prediction against a scene.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        scene: PathBuf,
    },
    /// Compare reverse-mode gradients with finite differences.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corrupt one analytic gradient entry (negative control).
        #[arg(long)]
        inject_fault: bool,
    },
    /// Train the five ablation variants on one scene.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the full model and the frozen-gate baseline on one scene.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration with every key.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Gen { config, out } => {
            let s = commands::cmd_gen(&config, &out)?;
            Ok(format!(
                "wrote {} ({} points, {} occluded, {} in frame 2)\n",
                out.display(),
                s.len(),
                s.occluded_count(),
                s.frame2.len()
            ))
        }
        Command::Train { config, scene, out } => {
            let r = commands::cmd_train(&config, &scene, &out)?;
            Ok(format!(
                "trained {} steps, final loss {:e}; outputs in {}\n",
                r.losses.len(),
                r.final_loss,
                out.display()
            ))
        }
        Command::Eval { pred, scene } => commands::cmd_eval(&pred, &scene),
        Command::Gradcheck {
            config,
            inject_fault,
        } => commands::cmd_gradcheck(config.as_deref(), inject_fault).map(|(_, text)| text),
        Command::Ablate { config, out } => commands::cmd_ablate(&config, &out).map(|(_, t)| t),
        Command::Experiment { config, out } => commands::cmd_experiment(&config, &out),
        Command::Config { config } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            Ok(cfg.render())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::from(commands::EXIT_OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
