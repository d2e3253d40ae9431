//! Central finite-difference checks of tape gradients (64-bit only).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tol: f64,
    /// Check a seeded random subset of at most this many elements per parameter.
    pub max_samples: Option<usize>,
    pub seed: u64,
    /// Exclude elements whose `±step` probes land on different pieces of a
    /// piecewise-linear op (a ReLU or L1 input changes sign). Excluded
    /// elements are counted; skipping more than a quarter of all probes fails
    /// the check.
    pub skip_kinks: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tol: 1e-4,
            max_samples: None,
            seed: 0,
            skip_kinks: false,
        }
    }
}

impl GradCheckOptions {
    pub fn with_tol(tol: f64) -> Self {
        GradCheckOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamReport {
    pub name: String,
    pub checked: usize,
    pub kinks_skipped: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub params: Vec<ParamReport>,
    pub tol: f64,
    pub max_rel_error: f64,
    pub pass: bool,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare analytic gradients of the scalar built by `f` with central
/// differences. `f` receives one trainable [`Var`] per entry of `params`.
pub fn grad_check<F>(f: F, params: &[(String, Tensor<f64>)], opts: GradCheckOptions) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(&f, params)?;
    compare_gradients(&f, params, &analytic, opts)
}

pub fn analytic_gradients<F>(f: &F, params: &[(String, Tensor<f64>)]) -> Result<Vec<Tensor<f64>>>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok(vars.iter().map(|&v| grads.wrt(v)).collect())
}

fn evaluate<F>(f: &F, params: &[Tensor<f64>], kinks: bool) -> Result<(f64, Vec<bool>)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let pattern = if kinks { tape.kink_pattern() } else { Vec::new() };
    Ok((tape.value(loss).data()[0], pattern))
}

/// Check supplied `analytic` gradients against central differences.
pub fn compare_gradients<F>(
    f: &F,
    params: &[(String, Tensor<f64>)],
    analytic: &[Tensor<f64>],
    opts: GradCheckOptions,
) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut working: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut reports = Vec::with_capacity(params.len());

    for (p, (name, original)) in params.iter().enumerate() {
        let n = original.len();
        let indices: Vec<usize> = match opts.max_samples {
            Some(m) if m < n => {
                let mut idx = sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        let mut report = ParamReport {
            name: name.clone(),
            checked: indices.len(),
            kinks_skipped: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        };
        for i in indices {
            let base = original.data()[i];
            working[p].data_mut()[i] = base + opts.step;
            let (plus, above) = evaluate(f, &working, opts.skip_kinks)?;
            working[p].data_mut()[i] = base - opts.step;
            let (minus, below) = evaluate(f, &working, opts.skip_kinks)?;
            working[p].data_mut()[i] = base;
            if above != below {
                report.kinks_skipped += 1;
                continue;
            }

            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[p].data()[i];
            let err = relative_error(a, numeric);
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
        reports.push(report);
    }

    let max_rel_error = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let checked: usize = reports.iter().map(|r| r.checked).sum();
    let kinks: usize = reports.iter().map(|r| r.kinks_skipped).sum();
    Ok(GradReport {
        pass: reports.iter().all(|r| r.max_rel_error < opts.tol) && 4 * kinks <= checked,
        params: reports,
        tol: opts.tol,
        max_rel_error,
    })
}

impl std::fmt::Display for GradReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in &self.params {
            writeln!(
                f,
                "  {:<24} checked {:>5}  kinks {:>3}  max rel err {:.3e}",
                r.name, r.checked, r.kinks_skipped, r.max_rel_error
            )?;
        }
        write!(
            f,
            "  => {} (max {:.3e}, tol {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.max_rel_error,
            self.tol
        )
    }
}
