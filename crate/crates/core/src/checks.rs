//! Invariant suites shared by the `selftest` and `gradcheck` commands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::dwa::{dwa_differentials, DwaConfig, DwaParams};
use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckOptions, GradReport};
use crate::models::{build_model, ModelConfig, ModelKind};
use crate::ops::Activation;
use crate::resize::bicubic_resize;
use crate::tensor::{PaddingMode, Tensor};
use crate::wavelet::{dwt2, idwt2};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// `sum(y * r)` for a fixed random `r`, so every output element carries an
/// O(1) gradient.
fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = uniform(&mut rng, tape.value(y).shape(), -1.0, 1.0);
    let r = tape.constant(r);
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

fn named(tensors: Vec<Tensor<f64>>, names: &[&str]) -> Vec<(String, Tensor<f64>)> {
    names.iter().map(|n| n.to_string()).zip(tensors).collect()
}

/// Relative tolerance for single ops and the DWA layer.
pub const LAYER_TOL: f64 = 1e-4;
/// Relative tolerance for whole models.
pub const MODEL_TOL: f64 = 1e-3;

fn outcome(name: String, report: Result<GradReport>) -> CheckOutcome {
    match report {
        Ok(r) => {
            let worst = r
                .params
                .iter()
                .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
                .map(|p| {
                    format!(
                        "; worst {}[{}] analytic {:.3e} numeric {:.3e}",
                        p.name, p.worst_index, p.worst_analytic, p.worst_numeric
                    )
                })
                .unwrap_or_default();
            let checked: usize = r.params.iter().map(|p| p.checked).sum();
            let kinks: usize = r.params.iter().map(|p| p.kinks_skipped).sum();
            let mut detail = format!("max rel err {:.2e} (tol {:.0e})", r.max_rel_error, r.tol);
            if kinks > 0 {
                detail += &format!(", {kinks}/{checked} probes straddled a kink");
            }
            CheckOutcome::new(name, r.pass, if r.pass { detail } else { detail + &worst })
        }
        Err(e) => CheckOutcome::new(name, false, e.to_string()),
    }
}

/// Central-difference checks of every differentiable op, the DWA layer at
/// strides 0..=3, and an end-to-end depth-4 `dwsr_dwa` on a 16x16 input.
pub fn gradient_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = GradCheckOptions {
        seed,
        ..GradCheckOptions::with_tol(LAYER_TOL)
    };
    let mut out = Vec::new();

    for pad in [PaddingMode::Replicate, PaddingMode::Zero] {
        let params = named(
            vec![
                uniform(&mut rng, [2, 3, 6, 5], -1.0, 1.0),
                uniform(&mut rng, [4, 3, 3, 3], -0.5, 0.5),
                uniform(&mut rng, [4, 1, 1, 1], -0.5, 0.5),
            ],
            &["x", "weight", "bias"],
        );
        let f = move |t: &mut Tape<f64>, v: &[Var]| {
            let y = t.conv2d(v[0], v[1], v[2], pad)?;
            project(t, y, 1)
        };
        out.push(outcome(format!("conv2d ({pad:?})"), grad_check(f, &params, opts)));
    }

    for (dx, dy) in [(1, 0), (0, 2), (-2, 1), (3, -3)] {
        let params = named(vec![uniform(&mut rng, [1, 2, 5, 6], -1.0, 1.0)], &["x"]);
        let f = move |t: &mut Tape<f64>, v: &[Var]| {
            let y = t.shift2d(v[0], dx, dy, PaddingMode::Replicate)?;
            project(t, y, 2)
        };
        out.push(outcome(format!("shift2d ({dx},{dy})"), grad_check(f, &params, opts)));
    }

    for act in Activation::ALL {
        // keep ReLU inputs away from the kink
        let x = uniform(&mut rng, [1, 2, 4, 4], 0.05, 1.0).map(|v| if v < 0.5 { v - 0.55 } else { v });
        let params = named(vec![x], &["x"]);
        let f = move |t: &mut Tape<f64>, v: &[Var]| {
            let y = t.activation(v[0], act);
            project(t, y, 3)
        };
        out.push(outcome(
            format!("activation ({})", act.name()),
            grad_check(f, &params, opts),
        ));
    }

    let params = named(vec![uniform(&mut rng, [2, 3, 6, 4], -1.0, 1.0)], &["x"]);
    let f = |t: &mut Tape<f64>, v: &[Var]| {
        let y = t.dwt2(v[0])?;
        project(t, y, 4)
    };
    out.push(outcome("dwt2".into(), grad_check(f, &params, opts)));

    let params = named(vec![uniform(&mut rng, [2, 8, 3, 4], -1.0, 1.0)], &["x"]);
    let f = |t: &mut Tape<f64>, v: &[Var]| {
        let y = t.idwt2(v[0])?;
        project(t, y, 5)
    };
    out.push(outcome("idwt2".into(), grad_check(f, &params, opts)));

    for s in 0..=3 {
        let cfg = DwaConfig::new(3, 4, 5).with_stride(s);
        let p = DwaParams::<f64>::init(&cfg, &mut rng).expect("valid DWA config");
        let mut tensors = vec![uniform(&mut rng, [1, 3, 7, 6], -1.0, 1.0)];
        let mut names = vec!["x".to_string()];
        for (part, conv) in p.convs() {
            tensors.push(conv.weight.clone());
            tensors.push(conv.bias.clone());
            names.push(format!("{part}.weight"));
            names.push(format!("{part}.bias"));
        }
        let params: Vec<(String, Tensor<f64>)> = names.into_iter().zip(tensors).collect();
        let f = move |t: &mut Tape<f64>, v: &[Var]| {
            let conv = |i: usize| crate::ops::BoundConv {
                weight: v[1 + 2 * i],
                bias: v[2 + 2 * i],
                padding: cfg.padding,
            };
            let bound = crate::dwa::BoundDwa {
                h_anchor: conv(0),
                h_offset: conv(1),
                v_anchor: conv(2),
                v_offset: conv(3),
                fusion: conv(4),
            };
            let y = bound.forward(t, v[0], &cfg)?;
            project(t, y, 6)
        };
        out.push(outcome(format!("dwa layer (s={s})"), grad_check(f, &params, opts)));
    }

    out.push(model_gradient_check(ModelKind::DwsrDwa, seed));
    out
}

/// End-to-end check of one model kind (depth 4, width 4, scale 2) on a
/// 16x16 input, sampling up to 12 elements per parameter tensor.
pub fn model_gradient_check(kind: ModelKind, seed: u64) -> CheckOutcome {
    let name = format!("model {kind} (depth 4, 16x16)");
    let cfg = ModelConfig::new(kind, 2).with_depth(4).with_width(4);
    let model = match build_model::<f64>(&cfg, seed) {
        Ok(m) => m,
        Err(e) => return CheckOutcome::new(name, false, e.to_string()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let lr = uniform(&mut rng, [1, 3, 16, 16], 0.0, 1.0);
    let params: Vec<(String, Tensor<f64>)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    let f = |t: &mut Tape<f64>, v: &[Var]| {
        let pass = model.forward_on(t, v, &lr)?;
        project(t, pass.output, 7)
    };
    let opts = GradCheckOptions {
        max_samples: Some(12),
        seed,
        skip_kinks: true,
        ..GradCheckOptions::with_tol(MODEL_TOL)
    };
    outcome(name, grad_check(f, &params, opts))
}

/// `idwt2(dwt2(x)) == x` within 1e-6 (32-bit) and Parseval within 1e-9
/// (64-bit) over `count` random even-sized images up to 64x64.
pub fn wavelet_suite(seed: u64, count: usize) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_rt, mut worst_energy) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let (h, w) = (2 * rng.gen_range(1..=32), 2 * rng.gen_range(1..=32));
        let c = rng.gen_range(1..=3);
        let x = uniform(&mut rng, [1, c, h, w], 0.0, 1.0);
        let x32 = x.cast::<f32>();
        let back = dwt2(&x32).and_then(|s| idwt2(&s));
        match back {
            Ok(b) => worst_rt = worst_rt.max(b.max_abs_diff(&x32).map(f64::from).unwrap_or(f64::INFINITY)),
            Err(_) => worst_rt = f64::INFINITY,
        }
        match dwt2(&x) {
            Ok(s) => {
                let (e0, e1) = (x.sum_squares(), s.tensor().sum_squares());
                worst_energy = worst_energy.max((e0 - e1).abs() / e0.max(1.0));
            }
            Err(_) => worst_energy = f64::INFINITY,
        }
    }
    vec![
        CheckOutcome::new(
            format!("dwt round trip ({count} images, f32)"),
            worst_rt < 1e-6,
            format!("max abs err {worst_rt:.2e} (tol 1e-6)"),
        ),
        CheckOutcome::new(
            format!("parseval ({count} images, f64)"),
            worst_energy < 1e-9,
            format!("max rel energy err {worst_energy:.2e} (tol 1e-9)"),
        ),
    ]
}

/// Constant input, tied pairs and replicate padding give bitwise-zero
/// differential maps.
pub fn cmr_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut cases = 0;
    for s in 0..=3 {
        for &(c, h, w) in &[(3, 3, 3), (12, 8, 8), (3, 17, 9), (1, 4, 31)] {
            for act in Activation::ALL {
                let cfg = DwaConfig::new(c, 5, 4).with_stride(s).with_nonlinearity(act);
                let mut p = DwaParams::<f32>::init(&cfg, &mut rng).expect("valid DWA config");
                p.tie_pairs();
                let x = Tensor::from_fn([2, c, h, w], |[b, ch, _, _]| 0.1 + 0.3 * b as f32 + 0.05 * ch as f32);
                cases += 1;
                match dwa_differentials(&x, &p, &cfg) {
                    Ok((hm, vm)) if hm.data().iter().chain(vm.data()).all(|v| v.to_bits() == 0) => {}
                    Ok(_) => failures.push(format!("s={s} {c}x{h}x{w} {}", act.name())),
                    Err(e) => failures.push(format!("s={s} {c}x{h}x{w}: {e}")),
                }
            }
        }
    }
    vec![CheckOutcome::new(
        format!("common-mode rejection ({cases} cases)"),
        failures.is_empty(),
        if failures.is_empty() {
            "all differential maps exactly +0.0".to_string()
        } else {
            failures.join("; ")
        },
    )]
}

/// Zero-parameter models reproduce bicubic upscaling: exactly for the direct
/// kinds, within 1e-6 otherwise.
pub fn identity_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lr = Tensor::<f32>::from_fn([2, 3, 12, 16], |_| rng.gen());
    let mut out = Vec::new();
    for kind in ModelKind::ALL {
        for r in [2, 3, 4] {
            let cfg = ModelConfig::new(kind, r).with_width(4).with_depth(3);
            let res = build_model::<f32>(&cfg, seed).and_then(|mut m| {
                m.zero_params();
                let y = m.forward(&lr)?;
                let b = bicubic_resize(&lr, r as f64)?;
                y.max_abs_diff(&b)
            });
            let tol = if kind.is_direct() { 0.0 } else { 1e-6 };
            out.push(match res {
                Ok(err) => CheckOutcome::new(
                    format!("zero-network identity {kind} x{r}"),
                    err as f64 <= tol,
                    format!("max abs err {err:.2e} (tol {tol:.0e})"),
                ),
                Err(e) => CheckOutcome::new(format!("zero-network identity {kind} x{r}"), false, e.to_string()),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass() {
        let all: Vec<CheckOutcome> = [wavelet_suite(0, 50), cmr_suite(0), identity_suite(0)].concat();
        for o in &all {
            assert!(o.pass, "{}: {}", o.name, o.detail);
        }
    }
}
