//! Command-line surface: corpus generation, training, evaluation,
//! prediction, gradient checks, benchmarks and ablations.
//!
//! Exit codes: 0 success, 1 failed check, 2 configuration, 3 I/O,
//! 4 divergence, 5 evaluation.

mod bench;
mod config;
mod gradsuite;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use bench::{conv_agreement, format_bench, run_bench, BenchRow, CONV_AGREEMENT};
pub use config::{RunConfig, CONFIG_KEYS};
pub use gradsuite::{format_suite, gradient_suite, SuiteItem, BLOCK_TOLERANCE, MODEL_TOLERANCE};

use crate::data::{
    load_split, read_labeled_image, read_split, split_dataset, synth_generate, write_splits, LabeledImage, Manifest,
    SplitName,
};
use crate::detector::{
    evaluate_model, load_checkpoint, predict, save_checkpoint, train, DetectorModel, LossBreakdown, MdrcPlacement,
    ModelConfig, Variant,
};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_runs, evaluate, read_predictions, write_predictions, EvalReport, GroundTruth, REPORT_COLUMNS};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Parser)]
#[command(name = "dcap", version, about = "Dilated-convolution attention detector for single-band imagery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus with train/val/test splits.
    #[command(alias = "synth")]
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the train split; writes a checkpoint and a loss log.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint or a directory of prediction files on a split.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: SplitName,
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        ckpt: Option<PathBuf>,
        /// Directory of `{id}.txt` prediction files.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write `{id}.txt` prediction files for a split.
    Predict {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitName,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Float64 gradient checks of every block and a tiny full model.
    Gradcheck {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Time paired implementations and check the conv paths agree.
    Bench {
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Train and evaluate a grid of variants over several seeds.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        /// Comma-separated subset of the grid.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long, default_value = "val")]
        split: SplitName,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Generation(_) | Error::Shape { .. } | Error::Geometry { .. } => 2,
        Error::Data(_) => 2,
        Error::Io { .. } => 3,
        Error::Divergence { .. } => 4,
        Error::EvalUndefined(_) | Error::Checkpoint(_) => 5,
        Error::NonScalarLoss(_) | Error::ProbeFailure { .. } => 1,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Corpus, splits and a copy of the config under `out`.
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    create_dir(out)?;
    let manifest = synth_generate(&cfg.synth, out)?;
    let split = split_dataset(&manifest.ids(), cfg.synth.seed)?;
    write_splits(&out.join("splits"), &split)?;
    write_file(&out.join(CONFIG_FILE), &cfg.to_text())?;
    Ok(manifest)
}

/// Trains from the config's initialization and writes the checkpoint,
/// the per-epoch loss log and the config under `out`.
pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(DetectorModel, Vec<LossBreakdown>)> {
    let images = load_split(data, SplitName::Train, cfg.model.num_classes)?;
    create_dir(out)?;
    let mut model = DetectorModel::new(&cfg.model)?;
    let mut log_text = format!("{}\n", LossBreakdown::CSV_HEADER);
    let log = train(&mut model, &images, &cfg.train, |epoch, l| {
        log_text.push_str(&l.csv_row(epoch));
        log_text.push('\n');
    });
    write_file(&out.join(TRAIN_LOG_FILE), &log_text)?;
    let log = log?;
    save_checkpoint(&out.join(CHECKPOINT_FILE), &model)?;
    write_file(&out.join(CONFIG_FILE), &cfg.to_text())?;
    Ok((model, log))
}

fn read_prediction_dir(dir: &Path, images: &[LabeledImage]) -> Result<Vec<Vec<crate::metrics::Detection>>> {
    images.iter().map(|img| read_predictions(&dir.join(format!("{}.txt", img.id)))).collect()
}

pub enum EvalSource<'a> {
    Checkpoint(&'a Path),
    Predictions(&'a Path),
}

/// Scores a split and, when `out` is given, writes `eval_{split}.csv`.
pub fn cmd_eval(cfg: &RunConfig, data: &Path, split: SplitName, source: EvalSource, out: Option<&Path>) -> Result<EvalReport> {
    let images = load_split(data, split, cfg.model.num_classes)?;
    let report = match source {
        EvalSource::Checkpoint(p) => evaluate_model(&load_checkpoint(p, &cfg.model)?, &images)?,
        EvalSource::Predictions(dir) => {
            let dets = read_prediction_dir(dir, &images)?;
            let gts: Vec<Vec<GroundTruth>> = images.iter().map(|i| i.boxes.clone()).collect();
            evaluate(&dets, &gts)?
        }
    };
    if let Some(out) = out {
        create_dir(out)?;
        write_file(&out.join(format!("eval_{split}.csv")), &report.to_csv())?;
    }
    Ok(report)
}

/// Writes one prediction file per image of the split.
pub fn cmd_predict(cfg: &RunConfig, data: &Path, split: SplitName, ckpt: &Path, out: &Path) -> Result<usize> {
    let ids = read_split(&data.join("splits"), split)?;
    let images = ids.iter().map(|id| read_labeled_image(data, id, cfg.model.num_classes)).collect::<Result<Vec<_>>>()?;
    let model = load_checkpoint(ckpt, &cfg.model)?;
    let dets = predict(&model, &images, cfg.nms_iou, cfg.conf_thresh)?;
    create_dir(out)?;
    for (img, d) in images.iter().zip(&dets) {
        write_predictions(&out.join(format!("{}.txt", img.id)), d)?;
    }
    Ok(images.len())
}

/// Variants of the ablation grid, in table order.
pub const ABLATION_GRID: [&str; 7] = ["base", "mdrc_conv", "mdrc_c3", "mdrc_d2", "dcap", "mdrc_ssca", "spp"];

/// Model config of a grid entry, derived from `base`.
pub fn ablation_config(name: &str, base: &ModelConfig) -> Result<ModelConfig> {
    let with = |variant, placement, dilations: &[usize]| ModelConfig {
        variant,
        mdrc_placement: placement,
        dilations: dilations.to_vec(),
        ..base.clone()
    };
    let d = base.dilations.as_slice();
    Ok(match name {
        "base" => with(Variant::Base, MdrcPlacement::ConvLayers, d),
        "mdrc_conv" => with(Variant::Mdrc, MdrcPlacement::ConvLayers, d),
        "mdrc_c3" => with(Variant::Mdrc, MdrcPlacement::C3Layers, d),
        "mdrc_d2" => with(Variant::Mdrc, MdrcPlacement::ConvLayers, &[2]),
        "dcap" => with(Variant::Dcap, MdrcPlacement::ConvLayers, d),
        "mdrc_ssca" => with(Variant::MdrcSsca, MdrcPlacement::ConvLayers, d),
        "spp" => with(Variant::Spp, MdrcPlacement::ConvLayers, d),
        other => {
            return Err(Error::Config(format!("unknown ablation variant `{other}` ({})", ABLATION_GRID.join("|"))))
        }
    })
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub name: String,
    pub reports: Vec<EvalReport>,
}

/// Trains every requested variant with seeds `cfg.seed .. cfg.seed + seeds`
/// on the train split and scores it on `split`.
pub fn cmd_ablate(cfg: &RunConfig, data: &Path, names: &[String], seeds: usize, split: SplitName) -> Result<Vec<AblationRow>> {
    if seeds == 0 {
        return Err(Error::Config("seeds must be at least 1".into()));
    }
    let train_set = load_split(data, SplitName::Train, cfg.model.num_classes)?;
    let eval_set = load_split(data, split, cfg.model.num_classes)?;
    let mut rows = Vec::new();
    for name in names {
        let base = ablation_config(name, &cfg.model)?;
        let mut reports = Vec::new();
        for k in 0..seeds as u64 {
            let seed = cfg.model.seed + k;
            let mut model = DetectorModel::new(&ModelConfig { seed, ..base.clone() })?;
            let tc = crate::detector::TrainConfig { seed, ..cfg.train.clone() };
            train(&mut model, &train_set, &tc, |_, _| {})?;
            reports.push(evaluate_model(&model, &eval_set)?);
        }
        rows.push(AblationRow { name: name.clone(), reports });
    }
    Ok(rows)
}

/// Text table and CSV; `mean±std` per column when there are two or more
/// seeds, plain means otherwise.
pub fn format_ablation(rows: &[AblationRow]) -> Result<(String, String)> {
    let with_std = rows.iter().all(|r| r.reports.len() >= 2);
    let mut csv = String::from("variant");
    for c in REPORT_COLUMNS {
        csv.push_str(&format!(",{c}"));
        if with_std {
            csv.push_str(&format!(",{c}_std"));
        }
    }
    csv.push('\n');
    let mut table = format!("{:<12}", "variant");
    for c in ["Precision", "Recall", "mAP50", "mAP50-95", "IoU"] {
        table.push_str(&format!(" {:>14}", c));
    }
    table.push('\n');
    for row in rows {
        csv.push_str(&row.name);
        table.push_str(&format!("{:<12}", row.name));
        if with_std {
            let s = aggregate_runs(&row.reports)?;
            for f in s.fields {
                csv.push_str(&format!(",{:.6},{:.6}", f.mean, f.std));
                table.push_str(&format!(" {:>14}", format!("{:.2}±{:.2}", 100.0 * f.mean, 100.0 * f.std)));
            }
        } else {
            let n = row.reports.len() as f64;
            for i in 0..REPORT_COLUMNS.len() {
                let mean = row.reports.iter().map(|r| r.values()[i]).sum::<f64>() / n;
                csv.push_str(&format!(",{mean:.6}"));
                table.push_str(&format!(" {:>14.2}", 100.0 * mean));
            }
        }
        csv.push('\n');
        table.push('\n');
    }
    Ok((table, csv))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Generate { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let m = cmd_generate(&cfg, &out)?;
            println!("wrote {} images to {}", m.entries.len(), out.display());
        }
        Command::Train { config, data, out } => {
            let cfg = load_config(config.as_deref())?;
            let (_, log) = cmd_train(&cfg, &data, &out)?;
            if let Some(last) = log.last() {
                println!("final epoch: {}", last.csv_row(log.len()));
            }
            println!("checkpoint: {}", out.join(CHECKPOINT_FILE).display());
        }
        Command::Eval { config, data, split, ckpt, predictions, out } => {
            let cfg = load_config(config.as_deref())?;
            let source = match (&ckpt, &predictions) {
                (Some(c), _) => EvalSource::Checkpoint(c),
                (None, Some(p)) => EvalSource::Predictions(p),
                (None, None) => return Err(Error::Config("pass --ckpt or --predictions".into())),
            };
            let report = cmd_eval(&cfg, &data, split, source, out.as_deref())?;
            print!("{}", report.to_table());
        }
        Command::Predict { config, data, split, ckpt, out } => {
            let cfg = load_config(config.as_deref())?;
            let n = cmd_predict(&cfg, &data, split, &ckpt, &out)?;
            println!("wrote predictions for {n} images to {}", out.display());
        }
        Command::Gradcheck { inject_fault } => {
            let items = gradient_suite(inject_fault.as_deref())?;
            print!("{}", format_suite(&items));
            let failed: Vec<&str> = items.iter().filter(|i| !i.passed()).map(|i| i.name).collect();
            if !failed.is_empty() {
                match &inject_fault {
                    Some(op) => eprintln!("gradient check failed for {} (fault injected into `{op}`)", failed.join(", ")),
                    None => eprintln!("gradient check failed for {}", failed.join(", ")),
                }
                return Ok(1);
            }
            println!("{} items passed", items.len());
        }
        Command::Bench { reps } => {
            let worst = conv_agreement()?;
            let rows = run_bench(reps)?;
            print!("{}", format_bench(&rows));
            println!("direct vs im2col max abs diff over 5 shapes: {worst:.2e}");
        }
        Command::Ablate { config, data, seeds, variants, split, out } => {
            let cfg = load_config(config.as_deref())?;
            let names = variants.unwrap_or_else(|| ABLATION_GRID.iter().map(|s| s.to_string()).collect());
            let rows = cmd_ablate(&cfg, &data, &names, seeds, split)?;
            let (table, csv) = format_ablation(&rows)?;
            print!("{table}");
            if let Some(out) = out {
                create_dir(&out)?;
                write_file(&out.join("ablation.csv"), &csv)?;
            }
        }
    }
    Ok(0)
}
