use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use dwa::data::Dataset;
use dwa::metrics::MetricChannel;
use dwa::models::{ModelConfig, ModelKind};
use dwa::training::{evaluate, train, LossKind, TrainConfig};
use dwa::Activation;

use crate::common::{
    activation_parser, bicubic_score, dataset, kind_parser, load_source, scale_parser, split_holdout, write_text,
    Global, OptimArgs,
};
use crate::error::{CliError, CliResult, Context};

/// Sweep the DWA stride offset (and optionally depth) over several seeds.
#[derive(Args, Debug)]
pub struct AblateCmd {
    #[arg(long, default_value = "dwsr_dwa", value_parser = kind_parser())]
    pub model: ModelKind,
    #[arg(long, default_value = "2", value_parser = scale_parser())]
    pub scale: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2, 3])]
    pub strides: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [6usize])]
    pub depths: Vec<usize>,
    /// Training seeds [default: --seed, --seed+1, --seed+2]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, value_parser = activation_parser())]
    pub nonlinearity: Option<Activation>,
    /// Defaults: l2, lr 1e-3, 1 epoch of 200 steps, batch 16, patch 64
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value = "synthetic:0:9:64")]
    pub data: String,
    #[arg(long, conflicts_with = "holdout")]
    pub val_data: Option<String>,
    /// Hold out the last N images of --data for validation
    #[arg(long, default_value_t = 1)]
    pub holdout: usize,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Desk-scale defaults for sweep points.
pub fn sweep_defaults() -> TrainConfig {
    TrainConfig {
        loss: LossKind::L2,
        lr0: 1e-3,
        epochs: 1,
        steps_per_epoch: 200,
        batch_size: 16,
        patch_size: 64,
        ..TrainConfig::default()
    }
}

#[derive(Serialize)]
struct Resolved<'a> {
    model: ModelKind,
    scale: usize,
    strides: &'a [usize],
    depths: &'a [usize],
    seeds: &'a [u64],
    width: usize,
    nonlinearity: Option<Activation>,
    train: &'a TrainConfig,
    data: &'a str,
    val_data: Option<&'a str>,
    holdout: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub depth: usize,
    pub stride: usize,
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub final_loss: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn csv(points: &[Point], bicubic_psnr: f64) -> String {
    let mut out = String::from("depth,stride,seed,val_psnr,val_ssim,bicubic_psnr,final_loss\n");
    for p in points {
        out += &format!(
            "{},{},{},{},{},{},{}\n",
            p.depth, p.stride, p.seed, p.psnr, p.ssim, bicubic_psnr, p.final_loss
        );
    }
    out
}

/// Aligned per-(depth, stride) table followed by one trend line per depth
/// and an overall paired count.
pub fn summary(points: &[Point], bicubic_psnr: f64) -> String {
    let mut depths: Vec<usize> = points.iter().map(|p| p.depth).collect();
    depths.dedup();
    let mut out = format!(
        "{:>5}  {:>6}  {:>5}  {:>10}  {:>8}  {:>9}  {:>9}\n",
        "depth", "stride", "seeds", "psnr (dB)", "std", "ssim", "gain (dB)"
    );
    let mut trends = String::new();
    let (mut wins, mut pairs) = (0, 0);
    for &d in &depths {
        let at = |s: usize| -> Vec<&Point> { points.iter().filter(|p| p.depth == d && p.stride == s).collect() };
        let mut strides: Vec<usize> = points.iter().filter(|p| p.depth == d).map(|p| p.stride).collect();
        strides.sort();
        strides.dedup();
        let mut means = Vec::new();
        for &s in &strides {
            let pts = at(s);
            let (m, sd) = mean_std(&pts.iter().map(|p| p.psnr).collect::<Vec<_>>());
            let (ms, _) = mean_std(&pts.iter().map(|p| p.ssim).collect::<Vec<_>>());
            out += &format!(
                "{d:>5}  {s:>6}  {:>5}  {m:>10.4}  {sd:>8.4}  {ms:>9.5}  {:>+9.4}\n",
                pts.len(),
                m - bicubic_psnr
            );
            means.push((s, m));
        }
        let base = means.iter().find(|(s, _)| *s == 0).map(|&(_, m)| m);
        let best = means
            .iter()
            .filter(|(s, _)| *s >= 1)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let (Some(b0), Some(&(sb, mb))) = (base, best) {
            let verdict = if mb > b0 { "beats" } else { "does not beat" };
            trends += &format!(
                "depth {d}: best s>=1 (s={sb}, {mb:.4} dB) {verdict} s=0 ({b0:.4} dB) by {:+.4} dB\n",
                mb - b0
            );
            for p in at(0) {
                for q in points
                    .iter()
                    .filter(|q| q.depth == d && q.seed == p.seed && q.stride >= 1)
                {
                    pairs += 1;
                    wins += (q.psnr > p.psnr) as usize;
                }
            }
        }
    }
    if pairs > 0 {
        trends += &format!("s>=1 beats s=0 in {wins} of {pairs} same-seed comparisons\n");
    } else {
        trends += "trend: needs stride 0 and at least one stride >= 1\n";
    }
    out + &format!("bicubic baseline {bicubic_psnr:.4} dB\n") + &trends
}

pub fn run(cmd: &AblateCmd, g: &Global) -> CliResult<()> {
    if !cmd.model.has_dwa() {
        return Err(CliError::validation(format!(
            "--model {}: a stride sweep needs a DWA model kind",
            cmd.model
        )));
    }
    for (flag, empty) in [
        ("--strides", cmd.strides.is_empty()),
        ("--depths", cmd.depths.is_empty()),
        ("--seeds", cmd.seeds.as_ref().is_some_and(Vec::is_empty)),
    ] {
        if empty {
            return Err(CliError::validation(format!("{flag} must list at least one value")));
        }
    }
    let seeds = cmd
        .seeds
        .clone()
        .unwrap_or_else(|| (0..3).map(|i| g.seed.wrapping_add(i)).collect());

    let config_for = |depth: usize, stride: usize| -> CliResult<ModelConfig> {
        let mut cfg = ModelConfig::new(cmd.model, cmd.scale)
            .with_depth(depth)
            .with_width(cmd.width)
            .with_stride(stride);
        if let Some(a) = cmd.nonlinearity {
            cfg = cfg.with_nonlinearity(a);
        }
        cfg.validate()
            .context(format!("--depths {depth} / --strides {stride}"))?;
        Ok(cfg)
    };
    let mut jobs = Vec::new();
    for &depth in &cmd.depths {
        for &stride in &cmd.strides {
            let cfg = config_for(depth, stride)?;
            for &seed in &seeds {
                jobs.push((cfg.clone(), seed));
            }
        }
    }
    let base_cfg = &jobs[0].0;
    let mut train_cfg = cmd.optim.resolve(base_cfg, sweep_defaults(), 0)?;
    if cmd.optim.loss.is_none() {
        train_cfg.loss = LossKind::L2;
    }

    let (train_images, held) = split_holdout(load_source("--data", &cmd.data)?, cmd.holdout)?;
    let data = dataset("--data", train_images, base_cfg)?;
    let val: Dataset = match &cmd.val_data {
        Some(v) => dataset("--val-data", load_source("--val-data", v)?, base_cfg)?,
        None if held.is_empty() => return Err(CliError::validation("--holdout 0 needs --val-data")),
        None => dataset("--holdout", held, base_cfg)?,
    };
    let mut bicubic = 0.0;
    for p in val.pairs() {
        bicubic += bicubic_score(&p.lr, &p.hr, cmd.scale, MetricChannel::Rgb, 0)?.0;
    }
    let bicubic = bicubic / val.len() as f64;

    g.prepare()?;
    g.write_record(
        "ablate",
        Resolved {
            model: cmd.model,
            scale: cmd.scale,
            strides: &cmd.strides,
            depths: &cmd.depths,
            seeds: &seeds,
            width: cmd.width,
            nonlinearity: cmd.nonlinearity,
            train: &train_cfg,
            data: &cmd.data,
            val_data: cmd.val_data.as_deref(),
            holdout: cmd.holdout,
        },
    )?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cmd.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::runtime(format!("--jobs: {e}")))?;
    eprintln!("ablate: {} runs", jobs.len());
    let points: Vec<CliResult<Point>> = pool.install(|| {
        jobs.par_iter()
            .map(|(cfg, seed)| {
                let tc = TrainConfig {
                    seed: *seed,
                    ..train_cfg.clone()
                };
                let stride = cfg.dwa.map_or(0, |d| d.stride);
                let what = format!("depth {} stride {stride} seed {seed}", cfg.depth);
                let (model, history) = train(cfg, &tc, &data, None).context(&what)?;
                let (psnr, ssim) = evaluate(&model, &val).context(&what)?;
                eprintln!("  {what}: {psnr:.4} dB");
                Ok(Point {
                    depth: cfg.depth,
                    stride,
                    seed: *seed,
                    psnr,
                    ssim,
                    final_loss: history.steps.last().map_or(f64::NAN, |s| s.loss),
                })
            })
            .collect()
    });
    let points = points.into_iter().collect::<CliResult<Vec<Point>>>()?;

    write_text(&g.path("ablate.csv"), &csv(&points, bicubic))?;
    let text = summary(&points, bicubic);
    write_text(&g.path("ablate.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(depth: usize, stride: usize, seed: u64, psnr: f64) -> Point {
        Point {
            depth,
            stride,
            seed,
            psnr,
            ssim: 0.9,
            final_loss: 0.01,
        }
    }

    #[test]
    fn trend_counts_same_seed_wins() {
        let pts = vec![
            pt(6, 0, 0, 30.0),
            pt(6, 0, 1, 31.0),
            pt(6, 1, 0, 30.5),
            pt(6, 1, 1, 30.5),
            pt(6, 2, 0, 29.0),
            pt(6, 2, 1, 29.0),
        ];
        let s = summary(&pts, 29.5);
        assert!(
            s.contains("depth 6: best s>=1 (s=1, 30.5000 dB) does not beat s=0 (30.5000 dB)"),
            "{s}"
        );
        assert!(s.contains("s>=1 beats s=0 in 1 of 4 same-seed comparisons"), "{s}");
        assert!(s.contains("bicubic baseline 29.5000 dB"));
        let rows: Vec<&str> = s.lines().skip(1).take(3).collect();
        assert!(rows.iter().all(|r| r.len() == s.lines().next().unwrap().len()));
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let c = csv(&[pt(6, 0, 0, 30.0), pt(6, 1, 0, 31.0)], 29.0);
        assert_eq!(c.lines().count(), 3);
        assert_eq!(c.lines().nth(2).unwrap(), "6,1,0,31,0.9,29,0.01");
    }
}
