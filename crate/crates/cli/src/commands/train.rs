use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use dwa::data::{save_checkpoint, CheckpointMeta, Dataset};
use dwa::metrics::{score, MetricChannel};
use dwa::models::{build_model, Model, ModelConfig};
use dwa::training::{fit, EpochRecord, TrainConfig};

use crate::common::{bicubic_score, dataset, load_source, split_holdout, write_text, Global, ModelArgs, OptimArgs};
use crate::error::{CliResult, Context};

/// Train a model and write its checkpoint, history and summary.
#[derive(Args, Debug)]
pub struct TrainCmd {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Training images: a PNG directory, a manifest, or synthetic:SEED:COUNT:SIZE
    #[arg(long)]
    pub data: String,
    /// Validation images, scored after every epoch
    #[arg(long, conflicts_with = "holdout")]
    pub val_data: Option<String>,
    /// Hold out the last N images of --data for validation
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// Checkpoint path [default: <out-dir>/model.ckpt]
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// No per-epoch progress on stderr
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Serialize)]
struct Resolved<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    data: &'a str,
    val_data: Option<&'a str>,
    holdout: usize,
    ckpt: &'a PathBuf,
}

#[derive(Serialize)]
pub struct Summary {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub validation: Option<ValidationSummary>,
}

#[derive(Serialize)]
pub struct ValidationSummary {
    pub images: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub bicubic_psnr: f64,
    pub bicubic_ssim: f64,
}

/// Mean model and bicubic scores (RGB, no crop) over `data`.
pub fn validate(model: &Model<f32>, data: &Dataset) -> CliResult<ValidationSummary> {
    let mut s = ValidationSummary {
        images: data.len(),
        psnr: 0.0,
        ssim: 0.0,
        bicubic_psnr: 0.0,
        bicubic_ssim: 0.0,
    };
    for p in data.pairs() {
        let sr = model.forward(&p.lr).context(&p.name)?;
        let (mp, ms) = score(&sr, &p.hr, MetricChannel::Rgb, 0).context(&p.name)?;
        let (bp, bs) = bicubic_score(&p.lr, &p.hr, data.scale(), MetricChannel::Rgb, 0)?;
        s.psnr += mp;
        s.ssim += ms;
        s.bicubic_psnr += bp;
        s.bicubic_ssim += bs;
    }
    let n = data.len() as f64;
    s.psnr /= n;
    s.ssim /= n;
    s.bicubic_psnr /= n;
    s.bicubic_ssim /= n;
    Ok(s)
}

fn epochs_tsv(epochs: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\tlr\tval_psnr\tval_ssim\n");
    for e in epochs {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        out += &format!("{}\t{}\t{}\t{}\n", e.epoch, e.lr, opt(e.val_psnr), opt(e.val_ssim));
    }
    out
}

pub fn run(cmd: &TrainCmd, g: &Global) -> CliResult<()> {
    let model_cfg = cmd.model.config()?;
    let train_cfg = cmd.optim.resolve(&model_cfg, TrainConfig::default(), g.seed)?;
    let ckpt = cmd.ckpt.clone().unwrap_or_else(|| g.path("model.ckpt"));

    let images = load_source("--data", &cmd.data)?;
    let (train_images, held) = split_holdout(images, cmd.holdout)?;
    let data = dataset("--data", train_images, &model_cfg)?;
    let validation = match (&cmd.val_data, held.is_empty()) {
        (Some(v), _) => Some(dataset("--val-data", load_source("--val-data", v)?, &model_cfg)?),
        (None, false) => Some(dataset("--holdout", held, &model_cfg)?),
        (None, true) => None,
    };

    g.prepare()?;
    g.write_record(
        "train",
        Resolved {
            model: &model_cfg,
            train: &train_cfg,
            data: &cmd.data,
            val_data: cmd.val_data.as_deref(),
            holdout: cmd.holdout,
            ckpt: &ckpt,
        },
    )?;

    let mut model = build_model::<f32>(&model_cfg, train_cfg.seed).context("model")?;
    let (mut epoch_loss, mut epoch_steps) = (0.0, 0);
    let total_epochs = train_cfg.epochs;
    let quiet = cmd.quiet;
    let history = fit(&mut model, &train_cfg, &data, validation.as_ref(), |rec| {
        epoch_loss += rec.loss;
        epoch_steps += 1;
        if epoch_steps == train_cfg.steps_per_epoch {
            if !quiet {
                eprintln!(
                    "epoch {}/{total_epochs}  lr {:e}  mean loss {:.6}",
                    rec.epoch + 1,
                    rec.lr,
                    epoch_loss / epoch_steps as f64
                );
            }
            epoch_loss = 0.0;
            epoch_steps = 0;
        }
    })
    .context("training")?;

    let meta = CheckpointMeta {
        train: Some(train_cfg.clone()),
        seed: train_cfg.seed,
        step: history.steps.len() as u64,
    };
    save_checkpoint(&model, &meta, &ckpt).context(ckpt.display())?;
    write_text(&g.path("history.tsv"), &history.to_tsv())?;
    write_text(&g.path("epochs.tsv"), &epochs_tsv(&history.epochs))?;

    let summary = Summary {
        steps: history.steps.len(),
        initial_loss: history.steps.first().map_or(f64::NAN, |s| s.loss),
        final_loss: history.steps.last().map_or(f64::NAN, |s| s.loss),
        validation: validation.as_ref().map(|v| validate(&model, v)).transpose()?,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&g.path("summary.json"), &(json + "\n"))?;

    println!(
        "trained {} for {} steps: loss {} -> {}",
        model_cfg.kind, summary.steps, summary.initial_loss, summary.final_loss
    );
    if let Some(v) = &summary.validation {
        println!(
            "validation ({} images): psnr {:.4} dB, bicubic {:.4} dB, gain {:+.4} dB",
            v.images,
            v.psnr,
            v.bicubic_psnr,
            v.psnr - v.bicubic_psnr
        );
    }
    println!("checkpoint {}", ckpt.display());
    Ok(())
}
