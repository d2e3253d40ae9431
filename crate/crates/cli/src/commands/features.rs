use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use dwa::data::{save_png, Image};
use dwa::models::ModelConfig;
use dwa::Tensor;

use crate::common::{load_lr, load_model, write_text, Global};
use crate::error::{CliError, CliResult, Context};

/// Write the most distinctive first-layer feature maps as PNGs.
#[derive(Args, Debug)]
pub struct DumpFeaturesCmd {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Low-resolution PNG
    #[arg(long)]
    pub input: PathBuf,
    /// Number of channels to write, ranked by summed distance to all others
    #[arg(long, default_value_t = 5)]
    pub top: usize,
}

#[derive(Serialize)]
struct Resolved<'a> {
    ckpt: &'a PathBuf,
    model: &'a ModelConfig,
    input: &'a PathBuf,
    top: usize,
}

/// For every channel, the sum of Euclidean distances to every other channel.
pub fn distance_sums(maps: &Tensor<f32>) -> Vec<f64> {
    let [_, c, h, w] = maps.shape();
    let plane = |i: usize| &maps.data()[i * h * w..(i + 1) * h * w];
    let mut sums = vec![0.0; c];
    for i in 0..c {
        for j in i + 1..c {
            let d = plane(i)
                .iter()
                .zip(plane(j))
                .map(|(a, b)| {
                    let d = (*a - *b) as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            sums[i] += d;
            sums[j] += d;
        }
    }
    sums
}

/// Channel indices by decreasing score; ties keep the lower index first.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Min-max normalise one channel of the first batch item to a gray RGB image.
fn channel_image(maps: &Tensor<f32>, ch: usize) -> Image {
    let [_, _, h, w] = maps.shape();
    let plane = &maps.data()[ch * h * w..(ch + 1) * h * w];
    let (lo, hi) = plane
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
    let span = hi - lo;
    Tensor::from_fn([1, 3, h, w], |[_, _, y, x]| {
        if span > 0.0 {
            (plane[y * w + x] - lo) / span
        } else {
            0.5
        }
    })
}

pub fn run(cmd: &DumpFeaturesCmd, g: &Global) -> CliResult<()> {
    if cmd.top == 0 {
        return Err(CliError::validation("--top must be at least 1"));
    }
    let (model, _) = load_model(&cmd.ckpt)?;
    let cfg = model.config();
    let lr = load_lr(&cmd.input, cfg)?;

    g.prepare()?;
    g.write_record(
        "dump-features",
        Resolved {
            ckpt: &cmd.ckpt,
            model: cfg,
            input: &cmd.input,
            top: cmd.top,
        },
    )?;

    let maps = model
        .first_layer_features(&lr)
        .context(format!("--input {}", cmd.input.display()))?
        .batch_item(0);
    let scores = distance_sums(&maps);
    let mut tsv = String::from("rank\tchannel\tdistance_sum\tfile\n");
    for (r, &ch) in rank(&scores).iter().take(cmd.top).enumerate() {
        let name = format!("feature_{:02}_ch{ch:03}.png", r + 1);
        let path = g.path(&name);
        save_png(&channel_image(&maps, ch), &path).context(path.display())?;
        tsv += &format!("{}\t{ch}\t{}\t{name}\n", r + 1, scores[ch]);
    }
    write_text(&g.path("features.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}
