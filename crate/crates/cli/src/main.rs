use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use xferbench::workbench::pipeline::{self, TrainPaths};
use xferbench::workbench::{
    downsample_manifest, ExperimentConfig, Manifest, Metric, Outcome, SynthOptions, Task,
};

/// Speech recognition pretraining and speech translation workbench.
#[derive(Parser)]
#[command(name = "xferbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; every stage derives its own seed from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Recompute outputs that already exist.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (features, manifest, frame labels).
    SynthData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// MFCC extraction, trimming and per-speaker CMVN.
    PrepareFeatures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a BPE table over the task targets of one or more manifests.
    TrainBpe {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the subword segmentation of every row.
    ApplyBpe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bpe: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an ASR or AST model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task: Task,
        /// Training manifests; several are concatenated.
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        bpe: PathBuf,
        /// Checkpoint from transfer-init.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a model whose encoder comes from a trained checkpoint.
    TransferInit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "ast")]
        task: Task,
        #[arg(long)]
        bpe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add speed-perturbed copies of every audio row.
    AugmentSpeed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.9,1.1")]
        factors: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random subset of a manifest with a target total duration.
    Downsample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        hours: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beam-search decode every row of a manifest.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus WER or BLEU of decoded output.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Diagnostic phone classifiers on encoder layers.
    Probe {
        #[command(subcommand)]
        action: ProbeAction,
    },
    /// Analyses over experiment results.
    Analyze {
        #[command(subcommand)]
        action: AnalyzeAction,
    },
}

#[derive(Subcommand)]
enum ProbeAction {
    /// Save per-layer activations and downsampled labels.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one probe per layer.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reps: PathBuf,
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Held-out accuracy and majority baselines.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reps: PathBuf,
        #[arg(long)]
        probes: PathBuf,
        #[arg(long)]
        layer: Option<String>,
        /// Output stem; `.json` and `.tsv` are written.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeAction {
    /// Spearman correlation of pretraining WER and AST BLEU.
    Correlate {
        #[command(flatten)]
        common: Common,
        /// Results table; the bundled dev table when omitted.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, default_value = "ast-20h")]
        baseline: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn experiment(common: &Common) -> Result<ExperimentConfig> {
    ExperimentConfig::load(common.config.as_deref()).context("reading the configuration")
}

fn report(stage: &str, outcome: Outcome, out: &Path) {
    match outcome {
        Outcome::Ran => log::info!("{stage}: wrote {}", out.display()),
        Outcome::Skipped => log::info!(
            "{stage}: {} is up to date (use --force to redo)",
            out.display()
        ),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData { common, out } => {
            let opts = SynthOptions::load(common.config.as_deref())?;
            report(
                "synth-data",
                pipeline::synth_data(&opts, common.seed, &out, common.force)?,
                &out,
            );
        }
        Command::PrepareFeatures {
            common,
            manifest,
            out,
        } => {
            let cfg = experiment(&common)?;
            report(
                "prepare-features",
                pipeline::prepare_features(&manifest, &cfg, &out, common.force)?,
                &out,
            );
        }
        Command::TrainBpe {
            common,
            manifest,
            task,
            out,
        } => {
            let cfg = experiment(&common)?;
            report(
                "train-bpe",
                pipeline::train_bpe(&manifest, task, &cfg, &out, common.force)?,
                &out,
            );
        }
        Command::ApplyBpe {
            common,
            manifest,
            bpe,
            task,
            out,
        } => {
            let cfg = experiment(&common)?;
            let o = pipeline::apply_bpe_stage(&manifest, &bpe, task, &cfg, &out, common.force)?;
            report("apply-bpe", o, &out);
        }
        Command::Train {
            common,
            task,
            manifest,
            dev,
            bpe,
            init,
            out,
        } => {
            let cfg = experiment(&common)?;
            let paths = TrainPaths {
                train: &manifest,
                dev: &dev,
                bpe: &bpe,
                init: init.as_deref(),
                out: &out,
            };
            report(
                "train",
                pipeline::train(task, &paths, &cfg, common.seed, common.force)?,
                &out,
            );
        }
        Command::TransferInit {
            common,
            checkpoint,
            task,
            bpe,
            out,
        } => {
            let cfg = experiment(&common)?;
            let o = pipeline::transfer_init(
                &checkpoint,
                task,
                &bpe,
                &cfg,
                common.seed,
                &out,
                common.force,
            )?;
            report("transfer-init", o, &out);
        }
        Command::AugmentSpeed {
            common,
            manifest,
            factors,
            out,
        } => {
            report(
                "augment-speed",
                pipeline::augment_speed(&manifest, &factors, &out, common.force)?,
                &out,
            );
        }
        Command::Downsample {
            common,
            manifest,
            hours,
            out,
        } => {
            if out.exists() && !common.force {
                report("downsample", Outcome::Skipped, &out);
            } else {
                let m = Manifest::load(&manifest)?;
                let seed = xferbench::workbench::derive_seed(common.seed, "downsample");
                let sub = downsample_manifest(&m, hours, seed)?;
                sub.save(&out)?;
                log::info!(
                    "downsample: kept {} of {} rows ({:.3} h)",
                    sub.len(),
                    m.len(),
                    sub.total_duration() / 3600.0
                );
            }
        }
        Command::Decode {
            common,
            checkpoint,
            manifest,
            out,
        } => {
            let cfg = experiment(&common)?;
            report(
                "decode",
                pipeline::decode(&checkpoint, &manifest, &cfg, &out, common.force)?,
                &out,
            );
        }
        Command::Score {
            common,
            metric,
            manifest,
            hyp,
            out,
        } => {
            let cfg = experiment(&common)?;
            let (o, r) = pipeline::score(metric, &manifest, &hyp, &cfg, &out, common.force)?;
            if let Some(r) = r {
                println!("{}\t{:.4}", r.metric, r.corpus_score);
            }
            report("score", o, &out);
        }
        Command::Probe { action } => match action {
            ProbeAction::Extract {
                common,
                checkpoint,
                manifest,
                labels,
                out,
            } => {
                let o =
                    pipeline::probe_extract(&checkpoint, &manifest, &labels, &out, common.force)?;
                report("probe extract", o, &out);
            }
            ProbeAction::Train {
                common,
                reps,
                layer,
                out,
            } => {
                let cfg = experiment(&common)?;
                let o = pipeline::probe_train(
                    &reps,
                    layer.as_deref(),
                    &cfg,
                    common.seed,
                    &out,
                    common.force,
                )?;
                report("probe train", o, &out);
            }
            ProbeAction::Report {
                common,
                reps,
                probes,
                layer,
                out,
            } => {
                let cfg = experiment(&common)?;
                let (o, r) = pipeline::probe_report(
                    &reps,
                    &probes,
                    layer.as_deref(),
                    &cfg,
                    common.seed,
                    &out,
                    common.force,
                )?;
                if let Some(r) = r {
                    print!("{}", r.to_tsv());
                }
                report("probe report", o, &out);
            }
        },
        Command::Analyze { action } => match action {
            AnalyzeAction::Correlate {
                common,
                records,
                baseline,
                out,
            } => {
                let (o, r) =
                    pipeline::analyze_correlate(records.as_deref(), &baseline, &out, common.force)?;
                if let Some(r) = r {
                    println!("spearman\t{:.4}\tn\t{}", r.spearman, r.n_points);
                }
                report("analyze correlate", o, &out);
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
