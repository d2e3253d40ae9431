//! Losses, Adam, the step schedule, dihedral augmentation, patch sampling
//! and the training loop.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{score, MetricChannel};
use crate::models::{build_model, Model, ModelConfig};
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    L1,
    L2,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        })
    }
}

/// Mean absolute (`l1`) or mean squared (`l2`) error, recorded on the tape.
/// The absolute value takes subgradient 0 at exact ties.
pub fn loss<T: Float>(tape: &mut Tape<T>, kind: LossKind, pred: Var, target: Var) -> Result<Var> {
    match kind {
        LossKind::L1 => tape.l1_loss(pred, target),
        LossKind::L2 => tape.l2_loss(pred, target),
    }
}

/// Value-only [`loss`].
pub fn loss_value<T: Float>(kind: LossKind, pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    let mut tape = Tape::new();
    let (p, t) = (tape.constant(pred.clone()), tape.constant(target.clone()));
    let l = loss(&mut tape, kind, p, t)?;
    Ok(tape.value(l).data()[0].as_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lr0: f64,
    /// Coupled L2 coefficient added to every gradient.
    pub l2_reg: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    /// HR patch side.
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::L1,
            lr0: 1e-4,
            l2_reg: 1e-8,
            decay_factor: 0.8,
            decay_every: 20,
            epochs: 1,
            steps_per_epoch: 100,
            batch_size: 16,
            patch_size: 192,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.l2_reg.is_finite() && self.l2_reg >= 0.0) {
            return bad(format!("l2_reg must be non-negative, got {}", self.l2_reg));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) || self.decay_every == 0 {
            return bad("decay factor must lie in (0, 1] and decay_every >= 1".into());
        }
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 {
            return bad("epochs, steps_per_epoch and batch_size must be >= 1".into());
        }
        let r = model.scale;
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(2 * r) {
            return bad(format!(
                "patch size {} must be a multiple of 2*scale = {}",
                self.patch_size,
                2 * r
            ));
        }
        let m = model.hr_multiple();
        if !self.patch_size.is_multiple_of(m) {
            return bad(format!(
                "patch size {} must be a multiple of {m} for {}",
                self.patch_size, model.kind
            ));
        }
        Ok(())
    }
}

/// `lr0 * decay_factor ^ floor(epoch / decay_every)`
pub fn lr_at_epoch(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.decay_factor.powi((epoch / cfg.decay_every) as i32)
}

// ---------------------------------------------------------------- Adam

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self
    where
        T: 'a,
    {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One Adam update with coupled L2 (`g + l2_reg * theta`) and bias correction.
pub fn adam_step<T: Float>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    l2_reg: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        p.expect_same_shape(g)?;
        p.expect_same_shape(m)?;
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
    let (one, eps, decay) = (T::one(), T::of(ADAM_EPS), T::of(l2_reg));
    let c1 = T::of(1.0 - ADAM_BETA1.powi(t));
    let c2 = T::of(1.0 - ADAM_BETA2.powi(t));
    let lr = T::of(lr);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (j, (theta, &g)) in p.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
            let g = g + decay * *theta;
            m[j] = b1 * m[j] + (one - b1) * g;
            v[j] = b2 * v[j] + (one - b2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- augmentation

/// The 8 symmetries of the square: `id & 3` quarter turns counter-clockwise,
/// preceded by a horizontal mirror when `id >= 4`.
pub fn dihedral<T: Float>(t: &Tensor<T>, id: u8) -> Result<Tensor<T>> {
    if id >= 8 {
        return Err(Error::BadTransformId(id));
    }
    let mut out = t.clone();
    if id >= 4 {
        let [n, c, h, w] = out.shape();
        out = Tensor::from_fn([n, c, h, w], |[b, ch, y, x]| t.at([b, ch, y, w - 1 - x]));
    }
    for _ in 0..id & 3 {
        out = rotate90(&out);
    }
    Ok(out)
}

/// Counter-clockwise quarter turn.
fn rotate90<T: Float>(t: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = t.shape();
    Tensor::from_fn([n, c, w, h], |[b, ch, y, x]| t.at([b, ch, x, w - 1 - y]))
}

/// Apply the same dihedral transform to an HR/LR pair.
pub fn augment<T: Float>(hr: &Tensor<T>, lr: &Tensor<T>, id: u8) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((dihedral(hr, id)?, dihedral(lr, id)?))
}

// ---------------------------------------------------------------- patches

/// Seeded stream of aligned, augmented HR/LR patch batches.
pub struct PatchSampler {
    rng: ChaCha8Rng,
}

impl PatchSampler {
    pub fn new(seed: u64) -> Self {
        PatchSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// `(hr, lr)` of shapes `(batch, 3, p, p)` and `(batch, 3, p/r, p/r)`.
    /// Image, origin (a multiple of `r` on both axes) and transform id are
    /// drawn uniformly per patch.
    pub fn next_batch(&mut self, data: &Dataset, patch: usize, batch: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let r = data.scale();
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if patch == 0 || !patch.is_multiple_of(r) {
            return Err(Error::InvalidConfig(format!(
                "patch size {patch} must be a multiple of scale {r}"
            )));
        }
        for p in data.pairs() {
            let (h, w) = (p.hr.height(), p.hr.width());
            if h < patch || w < patch {
                return Err(Error::ImageTooSmall { h, w, patch });
            }
        }
        let lp = patch / r;
        let mut hrs = Vec::with_capacity(batch);
        let mut lrs = Vec::with_capacity(batch);
        for _ in 0..batch {
            let pair = &data.pairs()[self.rng.gen_range(0..data.len())];
            let y = r * self.rng.gen_range(0..=(pair.hr.height() - patch) / r);
            let x = r * self.rng.gen_range(0..=(pair.hr.width() - patch) / r);
            let id = self.rng.gen_range(0..8u8);
            let (hr, lr) = augment(
                &pair.hr.crop(y, x, patch, patch)?,
                &pair.lr.crop(y / r, x / r, lp, lp)?,
                id,
            )?;
            hrs.push(hr);
            lrs.push(lr);
        }
        Ok((Tensor::stack(&hrs)?, Tensor::stack(&lrs)?))
    }
}

/// One batch from a fresh sampler seeded with `seed`.
pub fn sample_patches(data: &Dataset, patch: usize, batch: usize, seed: u64) -> Result<(Tensor<f32>, Tensor<f32>)> {
    PatchSampler::new(seed).next_batch(data, patch, batch)
}

// ---------------------------------------------------------------- loop

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Tab-separated `step epoch lr loss` lines under a header. Floats use
    /// the shortest representation that parses back to the same value.
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "step\tepoch\tlr\tloss")?;
        for s in &self.steps {
            writeln!(w, "{}\t{}\t{}\t{}", s.step, s.epoch, s.lr, s.loss)?;
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// Inverse of [`TrainHistory::to_tsv`] (step records only).
    pub fn parse_tsv(text: &str) -> Result<Vec<StepRecord>> {
        let bad = |n: usize| Error::InvalidConfig(format!("history line {n} is malformed"));
        text.lines()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| !l.is_empty())
            .map(|(n, l)| {
                let f: Vec<&str> = l.split('\t').collect();
                let [step, epoch, lr, loss] = f[..] else {
                    return Err(bad(n + 1));
                };
                Ok(StepRecord {
                    step: step.parse().map_err(|_| bad(n + 1))?,
                    epoch: epoch.parse().map_err(|_| bad(n + 1))?,
                    lr: lr.parse().map_err(|_| bad(n + 1))?,
                    loss: loss.parse().map_err(|_| bad(n + 1))?,
                })
            })
            .collect()
    }
}

/// Mean PSNR/SSIM (RGB, no crop) of `model` over whole validation images.
pub fn evaluate(model: &Model<f32>, data: &Dataset) -> Result<(f64, f64)> {
    let mut totals = (0.0, 0.0);
    for p in data.pairs() {
        let sr = model.forward(&p.lr)?;
        let (psnr, ssim) = score(&sr, &p.hr, MetricChannel::Rgb, 0)?;
        totals.0 += psnr;
        totals.1 += ssim;
    }
    let n = data.len() as f64;
    Ok((totals.0 / n, totals.1 / n))
}

/// Build a model from `(model_cfg, train_cfg.seed)` and train it.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &Dataset,
    validation: Option<&Dataset>,
) -> Result<(Model<f32>, TrainHistory)> {
    train_cfg.validate(model_cfg)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = build_model::<f32>(model_cfg, train_cfg.seed)?;
    let history = fit(&mut model, train_cfg, data, validation, |_| {})?;
    Ok((model, history))
}

/// Train `model` in place. `on_step` sees every record as it is produced.
pub fn fit(
    model: &mut Model<f32>,
    cfg: &TrainConfig,
    data: &Dataset,
    validation: Option<&Dataset>,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainHistory> {
    cfg.validate(model.config())?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.scale() != model.config().scale {
        return Err(Error::InvalidConfig(format!(
            "dataset scale {} differs from model scale {}",
            data.scale(),
            model.config().scale
        )));
    }
    // distinct stream from the one used for weight init
    let mut sampler = PatchSampler::new(cfg.seed ^ 0x5eed_5a3d_1e50_0001);
    let mut state = AdamState::new(model.params().iter().map(|p| &p.value));
    let mut history = TrainHistory::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(epoch, cfg);
        for _ in 0..cfg.steps_per_epoch {
            let (hr, lr_patch) = sampler.next_batch(data, cfg.patch_size, cfg.batch_size)?;
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let pass = model.forward_on(&mut tape, &vars, &lr_patch)?;
            let target = tape.constant(hr);
            let l = loss(&mut tape, cfg.loss, pass.output, target)?;
            let value = tape.value(l).data()[0] as f64;
            if !value.is_finite() {
                return Err(Error::Diverged { step, loss: value });
            }
            let grads = tape.backward(l)?;
            let grads: Vec<Tensor<f32>> = vars.iter().map(|&v| grads.wrt(v)).collect();
            drop(tape);
            let mut params = model.param_tensors_mut();
            adam_step(&mut params, &grads, &mut state, lr, cfg.l2_reg)?;

            let record = StepRecord {
                step,
                epoch,
                lr,
                loss: value,
            };
            on_step(&record);
            history.steps.push(record);
            step += 1;
        }
        let (val_psnr, val_ssim) = match validation {
            Some(v) => {
                let (p, s) = evaluate(model, v)?;
                (Some(p), Some(s))
            }
            None => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            val_psnr,
            val_ssim,
        });
    }
    Ok(history)
}
