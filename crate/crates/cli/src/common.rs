use std::fs;
use std::path::{Path, PathBuf};

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::Args;
use serde::Serialize;

use dwa::data::{load_checkpoint, CheckpointMeta, DataSource, Dataset, Image, SourceImage};
use dwa::metrics::{score, MetricChannel};
use dwa::models::{Model, ModelConfig, ModelKind};
use dwa::resize::bicubic_resize;
use dwa::training::{LossKind, TrainConfig};
use dwa::Activation;

use crate::error::{CliError, CliResult, Context};

/// Flags every subcommand sees.
#[derive(Debug, Clone)]
pub struct Global {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub argv: Vec<String>,
}

impl Global {
    pub fn prepare(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out_dir).context(format!("--out-dir {}", self.out_dir.display()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// `run.json`: the exact invocation and resolved configuration. No
    /// timestamps, so identical invocations write identical records.
    pub fn write_record(&self, command: &str, config: impl Serialize) -> CliResult<()> {
        #[derive(Serialize)]
        struct RunRecord<'a, C> {
            command: &'a str,
            version: &'a str,
            seed: u64,
            argv: &'a [String],
            config: C,
        }
        let record = RunRecord {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            argv: &self.argv,
            config,
        };
        let json = serde_json::to_string_pretty(&record).expect("run record serializes");
        write_text(&self.path("run.json"), &(json + "\n"))
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).context(path.display())
}

pub fn kind_parser() -> impl TypedValueParser<Value = ModelKind> {
    PossibleValuesParser::new(ModelKind::ALL.map(ModelKind::name)).map(|s| s.parse().expect("listed kind"))
}

pub fn activation_parser() -> impl TypedValueParser<Value = Activation> {
    PossibleValuesParser::new(Activation::ALL.map(Activation::name)).map(|s| s.parse().expect("listed activation"))
}

pub fn scale_parser() -> impl TypedValueParser<Value = usize> {
    PossibleValuesParser::new(["2", "3", "4"]).map(|s| s.parse().expect("listed scale"))
}

pub fn loss_parser() -> impl TypedValueParser<Value = LossKind> {
    PossibleValuesParser::new(["l1", "l2"]).map(|s| s.parse().expect("listed loss"))
}

pub fn channel_parser() -> impl TypedValueParser<Value = MetricChannel> {
    PossibleValuesParser::new(["rgb", "y"]).map(|s| s.parse().expect("listed channel"))
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "dwsr_dwa", value_parser = kind_parser())]
    pub model: ModelKind,
    #[arg(long, default_value = "2", value_parser = scale_parser())]
    pub scale: usize,
    /// Chain depth (DWSR-family kinds) [default: 10]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Feature channels per layer [default: 64]
    #[arg(long)]
    pub width: Option<usize>,
    /// Offset between the paired DWA convolutions (DWA kinds) [default: 1]
    #[arg(long)]
    pub stride: Option<usize>,
    /// Activation applied to the DWA differential maps [default: relu]
    #[arg(long, value_parser = activation_parser())]
    pub nonlinearity: Option<Activation>,
    /// U-Net levels (MWCNN kinds) [default: 2]
    #[arg(long)]
    pub levels: Option<usize>,
    /// Convolutions per U-Net block (MWCNN kinds) [default: 2]
    #[arg(long)]
    pub block_convs: Option<usize>,
}

impl ModelArgs {
    pub fn config(&self) -> CliResult<ModelConfig> {
        let kind = self.model;
        let reject = |flag: &str, what: &str| Err(CliError::validation(format!("{flag}: {kind} has no {what}")));
        if !kind.has_dwa() {
            if self.stride.is_some() {
                return reject("--stride", "DWA layer");
            }
            if self.nonlinearity.is_some() {
                return reject("--nonlinearity", "DWA layer");
            }
        }
        if kind.is_mwcnn() {
            if self.depth.is_some() {
                return reject("--depth", "chain depth (use --levels/--block-convs)");
            }
        } else {
            if self.levels.is_some() {
                return reject("--levels", "U-Net");
            }
            if self.block_convs.is_some() {
                return reject("--block-convs", "U-Net");
            }
        }
        if self.depth.is_some_and(|d| d < 2) {
            return Err(CliError::validation("--depth: must be at least 2"));
        }
        if self.width == Some(0) {
            return Err(CliError::validation("--width: must be at least 1"));
        }
        if self.levels == Some(0) || self.block_convs == Some(0) {
            return Err(CliError::validation("--levels and --block-convs must be at least 1"));
        }
        let mut cfg = ModelConfig::new(kind, self.scale);
        if let Some(d) = self.depth {
            cfg = cfg.with_depth(d);
        }
        if let Some(w) = self.width {
            cfg = cfg.with_width(w);
        }
        if let Some(s) = self.stride {
            cfg = cfg.with_stride(s);
        }
        if let Some(a) = self.nonlinearity {
            cfg = cfg.with_nonlinearity(a);
        }
        if let Some(l) = self.levels {
            cfg.mwcnn_levels = l;
        }
        if let Some(b) = self.block_convs {
            cfg.mwcnn_block_convs = b;
        }
        cfg.validate().context("model flags")?;
        Ok(cfg)
    }
}

/// Optimisation flags. Unset values fall back to per-command defaults.
#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    /// Training loss [default: l1 for DWSR kinds, l2 for MWCNN kinds]
    #[arg(long, value_parser = loss_parser())]
    pub loss: Option<LossKind>,
    /// Initial learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 weight regularisation added to every gradient
    #[arg(long)]
    pub l2_reg: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// HR patch side
    #[arg(long)]
    pub patch: Option<usize>,
}

impl OptimArgs {
    pub fn resolve(&self, model: &ModelConfig, defaults: TrainConfig, seed: u64) -> CliResult<TrainConfig> {
        let default_loss = if model.kind.is_mwcnn() {
            LossKind::L2
        } else {
            LossKind::L1
        };
        let cfg = TrainConfig {
            loss: self.loss.unwrap_or(default_loss),
            lr0: self.lr.unwrap_or(defaults.lr0),
            l2_reg: self.l2_reg.unwrap_or(defaults.l2_reg),
            epochs: self.epochs.unwrap_or(defaults.epochs),
            steps_per_epoch: self.steps_per_epoch.unwrap_or(defaults.steps_per_epoch),
            batch_size: self.batch.unwrap_or(defaults.batch_size),
            patch_size: self.patch.unwrap_or(defaults.patch_size),
            seed,
            ..defaults
        };
        let bad = |flag: &str, why: String| Err(CliError::validation(format!("{flag}: {why}")));
        if !(cfg.lr0.is_finite() && cfg.lr0 > 0.0) {
            return bad("--lr", format!("must be positive, got {}", cfg.lr0));
        }
        if !(cfg.l2_reg.is_finite() && cfg.l2_reg >= 0.0) {
            return bad("--l2-reg", format!("must be non-negative, got {}", cfg.l2_reg));
        }
        for (flag, v) in [
            ("--epochs", cfg.epochs),
            ("--steps-per-epoch", cfg.steps_per_epoch),
            ("--batch", cfg.batch_size),
        ] {
            if v == 0 {
                return bad(flag, "must be at least 1".into());
            }
        }
        let m = lcm(2 * model.scale, model.hr_multiple());
        if cfg.patch_size == 0 || !cfg.patch_size.is_multiple_of(m) {
            return bad(
                "--patch",
                format!(
                    "{} must be a positive multiple of {m} for {} at scale {}",
                    cfg.patch_size, model.kind, model.scale
                ),
            );
        }
        cfg.validate(model).context("training flags")?;
        Ok(cfg)
    }
}

pub fn load_source(flag: &str, spec: &str) -> CliResult<Vec<SourceImage>> {
    let source = spec.parse::<DataSource>().context(flag)?;
    source.load().context(format!("{flag} {spec}"))
}

/// Split off the last `holdout` images as a validation set.
pub fn split_holdout(mut images: Vec<SourceImage>, holdout: usize) -> CliResult<(Vec<SourceImage>, Vec<SourceImage>)> {
    if holdout >= images.len() && holdout > 0 {
        return Err(CliError::validation(format!(
            "--holdout {holdout}: only {} images available, at least one must remain for training",
            images.len()
        )));
    }
    let held = images.split_off(images.len() - holdout);
    Ok((images, held))
}

pub fn dataset(flag: &str, images: Vec<SourceImage>, cfg: &ModelConfig) -> CliResult<Dataset> {
    Dataset::from_sources(images, cfg.scale, cfg.hr_multiple()).context(flag)
}

pub fn load_model(path: &Path) -> CliResult<(Model<f32>, CheckpointMeta)> {
    load_checkpoint(path).context(format!("--ckpt {}", path.display()))
}

/// Load an LR PNG and crop it (top-left anchored) to the nearest size the
/// model accepts.
pub fn load_lr(path: &Path, cfg: &ModelConfig) -> CliResult<Image> {
    let lr = dwa::data::load_png(path).context(format!("--input {}", path.display()))?;
    let step = lr_multiple(cfg);
    let [_, _, h, w] = lr.shape();
    let (hc, wc) = (h / step * step, w / step * step);
    if hc == 0 || wc == 0 {
        return Err(CliError::validation(format!(
            "--input {}: {h}x{w} is smaller than the minimum {step}x{step} for {}",
            path.display(),
            cfg.kind
        )));
    }
    if (hc, wc) != (h, w) {
        eprintln!("note: cropping {} from {h}x{w} to {hc}x{wc}", path.display());
    }
    lr.crop(0, 0, hc, wc).context(format!("--input {}", path.display()))
}

fn lcm(a: usize, b: usize) -> usize {
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    a / x * b
}

/// Smallest LR side step `k` with `k * scale` a multiple of the HR multiple.
pub fn lr_multiple(cfg: &ModelConfig) -> usize {
    let m = cfg.hr_multiple();
    let mut k = 1;
    while !(k * cfg.scale).is_multiple_of(m) {
        k += 1;
    }
    k
}

/// PSNR/SSIM of bicubic upscaling against the HR image.
pub fn bicubic_score(
    lr: &Image,
    hr: &Image,
    scale: usize,
    channel: MetricChannel,
    crop: usize,
) -> CliResult<(f64, f64)> {
    let b = bicubic_resize(lr, scale as f64).context("bicubic baseline")?;
    score(&b, hr, channel, crop).context("bicubic baseline")
}
