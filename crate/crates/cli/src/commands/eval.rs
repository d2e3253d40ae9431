use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use dwa::metrics::{score, MetricChannel};
use dwa::models::ModelConfig;
use dwa::resize::bicubic_resize;

use crate::common::{channel_parser, load_model, load_source, scale_parser, write_text, Global};
use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Score against the ground-truth HR image
    Hr,
    /// Score against bicubic upscaling of the LR image
    Bicubic,
}

/// Per-image and mean PSNR/SSIM of a model and the bicubic baseline.
#[derive(Args, Debug)]
pub struct EvalCmd {
    /// Model checkpoint; without it only the bicubic baseline is scored
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Evaluation images: a PNG directory, a manifest, or synthetic:SEED:COUNT:SIZE
    #[arg(long)]
    pub data: String,
    /// Upscaling factor (taken from the checkpoint when --ckpt is given)
    #[arg(long, value_parser = scale_parser())]
    pub scale: Option<usize>,
    #[arg(long, default_value = "rgb", value_parser = channel_parser())]
    pub metric_channel: MetricChannel,
    /// Pixels removed from every border before scoring
    #[arg(long, default_value_t = 0)]
    pub crop: usize,
    #[arg(long, value_enum, default_value_t = Reference::Hr)]
    pub against: Reference,
}

#[derive(Serialize)]
struct Resolved<'a> {
    ckpt: Option<&'a PathBuf>,
    model: Option<&'a ModelConfig>,
    data: &'a str,
    scale: usize,
    metric_channel: MetricChannel,
    crop: usize,
    against: Reference,
}

/// `name`, then (psnr, ssim) per scored method.
pub struct Row {
    pub name: String,
    pub values: Vec<(f64, f64)>,
}

/// Tab-separated table with a trailing `mean` row. Floats are printed in
/// shortest round-trip form so the mean can be recomputed from the rows.
pub fn table(methods: &[&str], rows: &[Row]) -> String {
    let mut out = String::from("image");
    for m in methods {
        out += &format!("\t{m}_psnr\t{m}_ssim");
    }
    out.push('\n');
    let mut sums = vec![(0.0, 0.0); methods.len()];
    for r in rows {
        out += &r.name;
        for (i, (p, s)) in r.values.iter().enumerate() {
            out += &format!("\t{p}\t{s}");
            sums[i].0 += p;
            sums[i].1 += s;
        }
        out.push('\n');
    }
    out += "mean";
    let n = rows.len() as f64;
    for (p, s) in sums {
        out += &format!("\t{}\t{}", p / n, s / n);
    }
    out.push('\n');
    out
}

pub fn run(cmd: &EvalCmd, g: &Global) -> CliResult<()> {
    let model = cmd.ckpt.as_deref().map(load_model).transpose()?.map(|(m, _)| m);
    let cfg = model.as_ref().map(|m| m.config().clone());
    let scale = match (&cfg, cmd.scale) {
        (Some(c), Some(s)) if c.scale != s => {
            return Err(CliError::validation(format!(
                "--scale {s} disagrees with the checkpoint's scale {}",
                c.scale
            )))
        }
        (Some(c), _) => c.scale,
        (None, Some(s)) => s,
        (None, None) => return Err(CliError::validation("--scale is required when --ckpt is not given")),
    };
    let multiple = cfg.as_ref().map_or(scale, ModelConfig::hr_multiple);
    let images = load_source("--data", &cmd.data)?;
    let data = dwa::data::Dataset::from_sources(images, scale, multiple).context("--data")?;

    g.prepare()?;
    g.write_record(
        "eval",
        Resolved {
            ckpt: cmd.ckpt.as_ref(),
            model: cfg.as_ref(),
            data: &cmd.data,
            scale,
            metric_channel: cmd.metric_channel,
            crop: cmd.crop,
            against: cmd.against,
        },
    )?;

    let mut rows = Vec::new();
    for p in data.pairs() {
        let bicubic = bicubic_resize(&p.lr, scale as f64).context(&p.name)?;
        let reference = match cmd.against {
            Reference::Hr => &p.hr,
            Reference::Bicubic => &bicubic,
        };
        let mut values = Vec::new();
        if let Some(m) = &model {
            let sr = m.forward(&p.lr).context(&p.name)?;
            values.push(score(&sr, reference, cmd.metric_channel, cmd.crop).context(&p.name)?);
        }
        values.push(score(&bicubic, reference, cmd.metric_channel, cmd.crop).context(&p.name)?);
        rows.push(Row {
            name: p.name.clone(),
            values,
        });
    }
    let methods: &[&str] = if model.is_some() {
        &["model", "bicubic"]
    } else {
        &["bicubic"]
    };
    let text = table(methods, &rows);
    write_text(&g.path("eval.tsv"), &text)?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_row_matches_printed_values() {
        let rows = vec![
            Row {
                name: "a".into(),
                values: vec![(30.123456789012345, 0.9), (f64::INFINITY, 1.0)],
            },
            Row {
                name: "b".into(),
                values: vec![(28.0, 0.8), (f64::INFINITY, 1.0)],
            },
        ];
        let t = table(&["model", "bicubic"], &rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "image\tmodel_psnr\tmodel_ssim\tbicubic_psnr\tbicubic_ssim");
        let parse = |l: &str| -> Vec<f64> { l.split('\t').skip(1).map(|v| v.parse().unwrap()).collect() };
        let (a, b, mean) = (parse(lines[1]), parse(lines[2]), parse(lines[3]));
        assert!(((a[0] + b[0]) / 2.0 - mean[0]).abs() < 1e-9);
        assert_eq!(mean[2], f64::INFINITY);
        assert!(lines[3].starts_with("mean\t"));
        assert!(lines[3].contains("inf"));
    }
}
