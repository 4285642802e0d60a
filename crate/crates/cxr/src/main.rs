use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cxr::commands::{cmd_cluster, cmd_ingest, cmd_report, cmd_train_dl, cmd_train_ml, MlModel, Outcome};
use cxr::config::{Overrides, RunConfig};
use cxr::report::{emit_report, ReportFormat};
use cxr::{Error, Result};
use cxr_core::arch::{ArchKind, Preset};

const DATASET_ENV: &str = "CXR_DATASET_ROOT";

/// Chest X-ray pneumonia classification benchmarks.
#[derive(Parser)]
#[command(name = "cxr", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for resplit, initialization, shuffling, augmentation, k-means and t-SNE.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Data-parallel training and decoding threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, global = true, value_enum)]
    arch: Option<ArchArg>,
    /// Kaggle-layout dataset folder [default: $CXR_DATASET_ROOT].
    #[arg(long, global = true)]
    dataset_root: Option<PathBuf>,
    /// Manifest CSV used instead of scanning the dataset folder.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    LenetMod,
    Densenet,
    DeepVit,
    Cct,
    CrossVit,
}

#[derive(Clone, Copy, ValueEnum)]
enum MlArg {
    Logreg,
    Svc,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a dataset folder into a manifest CSV.
    Ingest {
        /// Manifest to write [default: <out>/manifest.csv].
        #[arg(long)]
        manifest_out: Option<PathBuf>,
    },
    /// PCA + k-means clustering with a t-SNE view.
    Cluster,
    /// Logistic regression or SVC on principal components.
    TrainMl {
        #[arg(value_enum)]
        model: MlArg,
    },
    /// Train a network.
    TrainDl {
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Merge saved reports.
    Report {
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
}

fn overrides(c: &Common, resume: Option<PathBuf>) -> Overrides {
    Overrides {
        seed: c.seed,
        out: c.out.clone(),
        workers: c.workers,
        preset: c.preset.map(|p| match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }),
        arch: c.arch.map(|a| match a {
            ArchArg::LenetMod => ArchKind::LenetMod,
            ArchArg::Densenet => ArchKind::Densenet,
            ArchArg::DeepVit => ArchKind::DeepVit,
            ArchArg::Cct => ArchKind::Cct,
            ArchArg::CrossVit => ArchKind::CrossVit,
        }),
        dataset_root: c.dataset_root.clone(),
        default_dataset_root: std::env::var_os(DATASET_ENV).map(PathBuf::from),
        manifest: c.manifest.clone(),
        resume,
    }
}

fn print_outcome(o: &Outcome) -> Result<()> {
    emit_report(std::slice::from_ref(&o.report), ReportFormat::Table, &mut std::io::stdout().lock())?;
    eprintln!("artifacts in {}", o.dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let resolve = |resume| RunConfig::resolve(cli.common.config.as_deref(), &overrides(&cli.common, resume));
    match cli.command {
        Command::Ingest { manifest_out } => {
            let cfg = resolve(None)?;
            let root = cfg.dataset_root.clone().ok_or_else(|| {
                Error::Layout(format!("no dataset folder: pass --dataset-root or set {}", DATASET_ENV))
            })?;
            let out = manifest_out.unwrap_or_else(|| cfg.output_dir.join("manifest.csv"));
            let m = cmd_ingest(&root, &out)?;
            for split in cxr_core::data::Split::ALL {
                let [n, p] = m.class_counts(split);
                eprintln!("{:<5} normal {:>5}  pneumonia {:>5}", split.as_str(), n, p);
            }
            eprintln!("{} records written to {}", m.len(), out.display());
        }
        Command::Cluster => print_outcome(&cmd_cluster(&resolve(None)?)?)?,
        Command::TrainMl { model } => {
            let which = match model {
                MlArg::Logreg => MlModel::Logreg,
                MlArg::Svc => MlModel::Svc,
            };
            print_outcome(&cmd_train_ml(&resolve(None)?, which)?)?
        }
        Command::TrainDl { resume } => print_outcome(&cmd_train_dl(&resolve(resume)?)?)?,
        Command::Report { inputs, format } => {
            let format = match format {
                FormatArg::Table => ReportFormat::Table,
                FormatArg::Json => ReportFormat::Json,
                FormatArg::Csv => ReportFormat::Csv,
            };
            cmd_report(&inputs, format, &mut std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
