use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use dwa::data::save_png;
use dwa::models::ModelConfig;
use dwa::resize::bicubic_resize;

use crate::common::{load_lr, load_model, Global};
use crate::error::{CliResult, Context};

/// Upscale one image with a trained model.
#[derive(Args, Debug)]
pub struct SrCmd {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Low-resolution PNG
    #[arg(long)]
    pub input: PathBuf,
    /// Output PNG [default: <out-dir>/sr.png]
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write SR - bicubic + 0.5 (mid-gray = no change) to this PNG
    #[arg(long)]
    pub residual: Option<PathBuf>,
    /// Also write the bicubic baseline to this PNG
    #[arg(long)]
    pub bicubic: Option<PathBuf>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    ckpt: &'a PathBuf,
    model: &'a ModelConfig,
    input: &'a PathBuf,
    output: &'a PathBuf,
    residual: Option<&'a PathBuf>,
    bicubic: Option<&'a PathBuf>,
}

pub fn run(cmd: &SrCmd, g: &Global) -> CliResult<()> {
    let (model, _) = load_model(&cmd.ckpt)?;
    let cfg = model.config();
    let lr = load_lr(&cmd.input, cfg)?;
    let output = cmd.output.clone().unwrap_or_else(|| g.path("sr.png"));

    g.prepare()?;
    g.write_record(
        "sr",
        Resolved {
            ckpt: &cmd.ckpt,
            model: cfg,
            input: &cmd.input,
            output: &output,
            residual: cmd.residual.as_ref(),
            bicubic: cmd.bicubic.as_ref(),
        },
    )?;

    let sr = model.forward(&lr).context(format!("--input {}", cmd.input.display()))?;
    save_png(&sr, &output).context(output.display())?;
    if cmd.residual.is_some() || cmd.bicubic.is_some() {
        let b = bicubic_resize(&lr, cfg.scale as f64).context("bicubic baseline")?;
        if let Some(path) = &cmd.residual {
            let residual = sr.zip_map(&b, |s, b| s - b + 0.5).context("residual")?;
            save_png(&residual, path).context(path.display())?;
        }
        if let Some(path) = &cmd.bicubic {
            save_png(&b, path).context(path.display())?;
        }
    }
    let [_, _, h, w] = sr.shape();
    println!("wrote {} ({w}x{h})", output.display());
    Ok(())
}
