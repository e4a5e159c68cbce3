//! Command-line surface: train, evaluate, gradcheck, gen-data and
//! extract-embeddings.
//!
//! Exit codes: 0 success, 1 usage/config, 2 I/O, 3 numeric failure,
//! 4 verification (gradcheck) failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use vidsphere::harness::{
    evaluate, extract_embeddings, gen_data, run_gradcheck, train_resume_with_progress,
    train_with_progress, Scope, SplitSel, TrainConfig,
};
use vidsphere::video::SyntheticSpec;
use vidsphere::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vidsphere",
    version,
    about = "3D residual networks with an angular-margin softmax head for video identity recognition"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model from a configuration file (or resume a checkpoint).
    Train {
        /// Flat `key = value` configuration file.
        #[arg(long, required_unless_present = "resume")]
        config: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics and checkpoints.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Resume from this checkpoint directory instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Total epochs when resuming (defaults to the stored horizon).
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset root; defaults to the one recorded in the checkpoint.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Split to evaluate: train, val or all.
        #[arg(long, default_value = "val")]
        split: String,
        /// Optional config to validate against the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        /// Scope: `loss`, `layer:<name>` or `model`.
        scope: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Generate a synthetic identity-video dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 64)]
        videos_per_class: usize,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 0.03)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write per-video embeddings and angle statistics for a checkpoint.
    ExtractEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Split to embed: train, val or all.
        #[arg(long, default_value = "all")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train {
            config,
            seed,
            out,
            resume,
            epochs,
        } => {
            let progress = |row: &vidsphere::harness::MetricsRow| {
                eprintln!(
                    "epoch {:3}  train_loss {:.4}  val_loss {:.4}  val_acc {:.4}  intra {:.4}  inter_min {:.4}",
                    row.epoch, row.train_loss, row.val_loss, row.val_acc, row.intra_mean, row.inter_min
                );
            };
            let outcome = match resume {
                Some(ckpt) => {
                    if seed.is_some() {
                        return Err(Error::Usage(
                            "--seed cannot change when resuming a checkpoint".into(),
                        ));
                    }
                    train_resume_with_progress(&ckpt, epochs, &out, progress)?
                }
                None => {
                    let path = config.expect("clap enforces --config without --resume");
                    let mut cfg = TrainConfig::parse_file(&path)?;
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    train_with_progress(&cfg, &out, progress)?
                }
            };
            println!(
                "trained {} epoch(s); final val_acc {:.4}; metrics at {}; checkpoint at {}",
                outcome.rows.len(),
                outcome.final_val_acc,
                outcome.metrics_path.display(),
                outcome.checkpoint_dir.display()
            );
            Ok(())
        }
        Cmd::Evaluate {
            checkpoint,
            data,
            split,
            config,
        } => {
            let split = SplitSel::parse(&split)?;
            let cfg = match config {
                Some(path) => Some(TrainConfig::parse_file(&path)?),
                None => None,
            };
            let report = evaluate(&checkpoint, data.as_deref(), split, cfg.as_ref())?;
            println!(
                "accuracy {:.4} over {} video(s); loss {:.4}",
                report.accuracy, report.count, report.loss
            );
            println!(
                "intra_mean {:.4} rad, intra_max {:.4} rad",
                report.stats.intra_mean, report.stats.intra_max
            );
            if let (Some(imin), Some(imean)) = (report.stats.inter_min, report.stats.inter_mean) {
                println!("inter_min {imin:.4} rad, inter_mean {imean:.4} rad");
            }
            Ok(())
        }
        Cmd::Gradcheck { scope, seed } => {
            let scope = Scope::parse(&scope)?;
            let report = run_gradcheck(&scope, seed)?;
            for line in report.lines() {
                println!("{line}");
            }
            if report.passed() {
                println!("gradcheck passed ({} group(s))", report.groups.len());
                Ok(())
            } else {
                Err(Error::Verification(format!(
                    "{} of {} gradient group(s) exceeded tolerance",
                    report.groups.iter().filter(|g| !g.passed()).count(),
                    report.groups.len()
                )))
            }
        }
        Cmd::GenData {
            out,
            classes,
            videos_per_class,
            frames,
            height,
            width,
            noise_std,
            seed,
        } => {
            let spec = SyntheticSpec::new(
                classes,
                videos_per_class,
                frames,
                height,
                width,
                noise_std,
            )?;
            let written = gen_data(&spec, &out, seed)?;
            println!(
                "wrote {written} video(s) across {classes} class(es) to {}",
                out.display()
            );
            Ok(())
        }
        Cmd::ExtractEmbeddings {
            checkpoint,
            data,
            split,
            out,
        } => {
            let split = SplitSel::parse(&split)?;
            let result = extract_embeddings(&checkpoint, data.as_deref(), split, &out)?;
            println!(
                "wrote {} embedding(s) to {}",
                result.count,
                result.embeddings_path.display()
            );
            println!(
                "intra_mean {:.4} rad; inter_min {:.4} rad",
                result.stats.intra_mean,
                result.stats.inter_min.map(|v| v as f64).unwrap_or(f64::NAN)
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
