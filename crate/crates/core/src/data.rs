//! Images, datasets, manifests and checkpoints.
//!
//! Images are `(1, 3, h, w)` `f32` tensors with values in `[0, 1]`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{build_model, Model, ModelConfig};
use crate::resize::bicubic_resize;
use crate::tensor::Tensor;
use crate::training::TrainConfig;

pub type Image = Tensor<f32>;

// ---------------------------------------------------------------- PNG

/// Decode an 8- or 16-bit grayscale/RGB PNG (alpha is dropped, gray is
/// replicated to three channels).
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let decode = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| decode(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| decode("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| decode(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);

    let samples: Vec<f32> = match info.bit_depth {
        png::BitDepth::Eight => buf[..info.buffer_size()].iter().map(|&v| v as f32 / 255.0).collect(),
        png::BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0)
            .collect(),
        other => return Err(decode(format!("unsupported bit depth {other:?}"))),
    };
    let (stride, gray) = match info.color_type {
        png::ColorType::Grayscale => (1, true),
        png::ColorType::GrayscaleAlpha => (2, true),
        png::ColorType::Rgb => (3, false),
        png::ColorType::Rgba => (4, false),
        other => return Err(decode(format!("unsupported color type {other:?}"))),
    };
    if samples.len() < h * w * stride {
        return Err(decode("short pixel buffer".into()));
    }
    Ok(Tensor::from_fn([1, 3, h, w], |[_, c, y, x]| {
        let base = (y * w + x) * stride;
        samples[if gray { base } else { base + c }]
    }))
}

/// Clamp to `[0, 1]` and quantize with round-half-up.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Write the first batch item as an 8-bit RGB PNG.
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let [_, c, h, w] = img.shape();
    if c != 3 {
        return Err(Error::ChannelMismatch { expected: 3, got: c });
    }
    let mut bytes = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                bytes.push(quantize(img.at([0, ch, y, x])));
            }
        }
    }
    let encode = |reason: String| Error::Encode {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| encode(e.to_string()))?;
    writer.write_image_data(&bytes).map_err(|e| encode(e.to_string()))?;
    writer.finish().map_err(|e| encode(e.to_string()))
}

// ---------------------------------------------------------------- synthetic data

/// Deterministic test images: smooth gradients, soft oriented edges, a
/// stripe pattern and band-limited sinusoidal texture, clamped to `[0, 1]`.
///
/// Image `i` depends only on `(seed, i, size)`, so a longer list extends a
/// shorter one.
pub fn gen_synthetic(seed: u64, count: usize, size: usize) -> Result<Vec<Image>> {
    if size < 32 || !size.is_multiple_of(2) {
        return Err(Error::BadSize(size));
    }
    Ok((0..count).map(|i| synthetic_image(seed, i as u64, size)).collect())
}

struct Edge {
    normal: (f64, f64),
    offset: f64,
    softness: f64,
    amp: [f64; 3],
}

struct Wave {
    freq: (f64, f64),
    phase: f64,
    amp: [f64; 3],
}

fn synthetic_image(seed: u64, index: u64, size: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = size as f64;
    let colour = |rng: &mut ChaCha8Rng, a: f64| [0; 3].map(|_| rng.gen_range(-a..a));

    let base: [f64; 3] = [0; 3].map(|_| rng.gen_range(0.25..0.75));
    let grad_x = colour(&mut rng, 0.3);
    let grad_y = colour(&mut rng, 0.3);

    let mut edges = Vec::new();
    for _ in 0..rng.gen_range(3..=6) {
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (px, py) = (rng.gen_range(0.2..0.8) * n, rng.gen_range(0.2..0.8) * n);
        let normal = (theta.cos(), theta.sin());
        edges.push(Edge {
            normal,
            offset: normal.0 * px + normal.1 * py,
            softness: rng.gen_range(0.15..0.6),
            amp: colour(&mut rng, 0.35),
        });
    }

    // a grating of period 6-12 px
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let period = rng.gen_range(6.0..12.0);
    let stripe_dir = (theta.cos() / period, theta.sin() / period);
    let stripe_amp = colour(&mut rng, 0.15);
    let (cx, cy, radius) = (
        rng.gen_range(0.3..0.7) * n,
        rng.gen_range(0.3..0.7) * n,
        rng.gen_range(0.15..0.3) * n,
    );

    let waves: Vec<Wave> = (0..6)
        .map(|_| {
            let f = rng.gen_range(0.02..0.2);
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            Wave {
                freq: (f * a.cos(), f * a.sin()),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                amp: colour(&mut rng, 0.04),
            }
        })
        .collect();

    Tensor::from_fn([1, 3, size, size], |[_, c, y, x]| {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = base[c] + grad_x[c] * (xf / n - 0.5) + grad_y[c] * (yf / n - 0.5);
        for e in &edges {
            let d = e.normal.0 * xf + e.normal.1 * yf - e.offset;
            v += e.amp[c] * 0.5 * (1.0 + (d / e.softness).tanh());
        }
        // stripes only inside a disc, so the image keeps flat regions too
        if (xf - cx).powi(2) + (yf - cy).powi(2) < radius * radius {
            let t = stripe_dir.0 * xf + stripe_dir.1 * yf;
            v += stripe_amp[c] * (std::f64::consts::TAU * t).sin().signum();
        }
        for wv in &waves {
            v += wv.amp[c] * (std::f64::consts::TAU * (wv.freq.0 * xf + wv.freq.1 * yf) + wv.phase).sin();
        }
        v.clamp(0.0, 1.0) as f32
    })
}

// ---------------------------------------------------------------- datasets

/// Where training/evaluation images come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// A directory of PNGs, or a manifest file.
    Path(PathBuf),
    Synthetic {
        seed: u64,
        count: usize,
        size: usize,
    },
}

impl FromStr for DataSource {
    type Err = Error;

    /// `DIR`, `MANIFEST` or `synthetic:SEED:COUNT:SIZE`.
    fn from_str(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("synthetic:") else {
            return Ok(DataSource::Path(PathBuf::from(s)));
        };
        let bad = || Error::InvalidConfig(format!("expected synthetic:SEED:COUNT:SIZE, got `{s}`"));
        let parts: Vec<&str> = rest.split(':').collect();
        let [seed, count, size] = parts[..] else {
            return Err(bad());
        };
        Ok(DataSource::Synthetic {
            seed: seed.parse().map_err(|_| bad())?,
            count: count.parse().map_err(|_| bad())?,
            size: size.parse().map_err(|_| bad())?,
        })
    }
}

/// A named HR image with an optional precomputed LR counterpart.
#[derive(Debug, Clone)]
pub struct SourceImage {
    pub name: String,
    pub hr: Image,
    pub lr: Option<Image>,
}

impl DataSource {
    pub fn load(&self) -> Result<Vec<SourceImage>> {
        match self {
            DataSource::Synthetic { seed, count, size } => Ok(gen_synthetic(*seed, *count, *size)?
                .into_iter()
                .enumerate()
                .map(|(i, hr)| SourceImage {
                    name: format!("synthetic_{seed}_{i:04}"),
                    hr,
                    lr: None,
                })
                .collect()),
            DataSource::Path(p) if p.is_dir() => {
                let manifest = p.join(MANIFEST_FILE);
                if manifest.is_file() {
                    return DatasetManifest::read(&manifest)?.load();
                }
                let mut files: Vec<PathBuf> = fs::read_dir(p)
                    .map_err(|e| Error::io(p, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
                    .collect();
                files.sort();
                files
                    .iter()
                    .map(|f| {
                        Ok(SourceImage {
                            name: file_stem(f),
                            hr: load_png(f)?,
                            lr: None,
                        })
                    })
                    .collect()
            }
            DataSource::Path(p) => DatasetManifest::read(p)?.load(),
        }
    }
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Aligned HR/LR pair; LR is exactly `1/scale` of HR in each dimension.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub name: String,
    pub hr: Image,
    pub lr: Image,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    scale: usize,
    pairs: Vec<ImagePair>,
}

impl Dataset {
    /// Crop each HR image (top-left anchored) to a multiple of `multiple`,
    /// which must itself be a multiple of `scale`, and derive LR by bicubic
    /// downscaling unless a precomputed LR is present.
    pub fn from_sources(images: Vec<SourceImage>, scale: usize, multiple: usize) -> Result<Self> {
        if scale == 0 || multiple == 0 || !multiple.is_multiple_of(scale) {
            return Err(Error::InvalidConfig(format!(
                "crop multiple {multiple} must be a positive multiple of scale {scale}"
            )));
        }
        if images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let pairs = images
            .into_iter()
            .map(|src| {
                let [_, c, h, w] = src.hr.shape();
                if c != 3 {
                    return Err(Error::ChannelMismatch { expected: 3, got: c });
                }
                let (hc, wc) = (h / multiple * multiple, w / multiple * multiple);
                if hc == 0 || wc == 0 {
                    return Err(Error::ImageTooSmall { h, w, patch: multiple });
                }
                let hr = src.hr.crop(0, 0, hc, wc)?;
                let lr = match src.lr {
                    Some(lr) => {
                        let (lh, lw) = (hc / scale, wc / scale);
                        if lr.height() < lh || lr.width() < lw {
                            return Err(Error::ShapeMismatch(format!(
                                "{}: LR {}x{} does not cover {lh}x{lw}",
                                src.name,
                                lr.height(),
                                lr.width()
                            )));
                        }
                        lr.crop(0, 0, lh, lw)?
                    }
                    None => bicubic_resize(&hr, 1.0 / scale as f64)?,
                };
                Ok(ImagePair { name: src.name, hr, lr })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { scale, pairs })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn pairs(&self) -> &[ImagePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

// ---------------------------------------------------------------- manifest

pub const MANIFEST_FILE: &str = "manifest.tsv";
const MANIFEST_MAGIC: &str = "# dwa-manifest 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub hr: PathBuf,
    pub hr_sha256: String,
    pub lr: Option<(PathBuf, String)>,
}

/// Text manifest:
///
/// ```text
/// # dwa-manifest 1
/// scale<TAB>2
/// <sha256><TAB><hr path>[<TAB><sha256><TAB><lr path>]
/// ```
///
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub scale: usize,
    pub entries: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl DatasetManifest {
    /// Hash the given files (HR, optional LR), paths relative to `root`.
    pub fn create(root: impl Into<PathBuf>, scale: usize, files: &[(PathBuf, Option<PathBuf>)]) -> Result<Self> {
        let root = root.into();
        let entries = files
            .iter()
            .map(|(hr, lr)| {
                Ok(ManifestEntry {
                    hr_sha256: sha256_file(&root.join(hr))?,
                    hr: hr.clone(),
                    lr: match lr {
                        Some(lr) => Some((lr.clone(), sha256_file(&root.join(lr))?)),
                        None => None,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetManifest { root, scale, entries })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MANIFEST_MAGIC}\nscale\t{}\n", self.scale);
        for e in &self.entries {
            s.push_str(&format!("{}\t{}", e.hr_sha256, e.hr.display()));
            if let Some((p, h)) = &e.lr {
                s.push_str(&format!("\t{h}\t{}", p.display()));
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn parse(text: &str, root: PathBuf) -> Result<Self> {
        let bad = |line: usize, why: &str| Error::Manifest(format!("line {line}: {why}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MANIFEST_MAGIC)) => {}
            _ => return Err(bad(1, "missing `# dwa-manifest 1` header")),
        }
        let scale = match lines.next() {
            Some((n, l)) => l
                .strip_prefix("scale\t")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(n, "expected `scale<TAB>N`"))?,
            None => return Err(bad(2, "missing scale line")),
        };
        let is_hash = |h: &str| h.len() == 64 && h.bytes().all(|b| b.is_ascii_hexdigit());
        let mut entries = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let entry = match f[..] {
                [h, p] if is_hash(h) => ManifestEntry {
                    hr: p.into(),
                    hr_sha256: h.into(),
                    lr: None,
                },
                [h, p, lh, lp] if is_hash(h) && is_hash(lh) => ManifestEntry {
                    hr: p.into(),
                    hr_sha256: h.into(),
                    lr: Some((lp.into(), lh.into())),
                },
                _ => return Err(bad(n, "expected `sha256<TAB>path[<TAB>sha256<TAB>path]`")),
            };
            entries.push(entry);
        }
        Ok(DatasetManifest { root, scale, entries })
    }

    /// Every listed file exists and hashes to its recorded value.
    pub fn verify(&self) -> Result<()> {
        let check = |p: &Path, expect: &str| {
            let full = self.root.join(p);
            if !full.is_file() {
                return Err(Error::Manifest(format!("missing file {}", full.display())));
            }
            let got = sha256_file(&full)?;
            if got != expect {
                return Err(Error::Manifest(format!("hash mismatch for {}", full.display())));
            }
            Ok(())
        };
        for e in &self.entries {
            check(&e.hr, &e.hr_sha256)?;
            if let Some((p, h)) = &e.lr {
                check(p, h)?;
            }
        }
        Ok(())
    }

    /// Verify, then decode every image.
    pub fn load(&self) -> Result<Vec<SourceImage>> {
        self.verify()?;
        self.entries
            .iter()
            .map(|e| {
                Ok(SourceImage {
                    name: file_stem(&e.hr),
                    hr: load_png(self.root.join(&e.hr))?,
                    lr: match &e.lr {
                        Some((p, _)) => Some(load_png(self.root.join(p))?),
                        None => None,
                    },
                })
            })
            .collect()
    }
}

// ---------------------------------------------------------------- checkpoints

pub const CHECKPOINT_MAGIC: &str = "DWA-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub seed: u64,
    pub step: u64,
    pub params: Vec<ParamEntry>,
}

/// Training provenance stored next to the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub train: Option<TrainConfig>,
    pub seed: u64,
    pub step: u64,
}

/// Layout (all text ASCII, `\n` line ends):
///
/// ```text
/// DWA-CHECKPOINT
/// version 1
/// header <N>
/// <N bytes of JSON CheckpointHeader>
/// payload <M>
/// <M bytes: parameters in declaration order, f32 little-endian>
/// ```
pub fn checkpoint_bytes(model: &Model<f32>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        model: model.config().clone(),
        train: meta.train.clone(),
        seed: meta.seed,
        step: meta.step,
        params: model
            .params()
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let payload_len = 4 * model.count_params();
    let mut out = Vec::with_capacity(json.len() + payload_len + 64);
    out.extend_from_slice(
        format!(
            "{CHECKPOINT_MAGIC}\nversion {CHECKPOINT_VERSION}\nheader {}\n",
            json.len()
        )
        .as_bytes(),
    );
    out.extend_from_slice(&json);
    out.extend_from_slice(format!("\npayload {payload_len}\n").as_bytes());
    for p in model.params() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(model: &Model<f32>, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(model, meta)?;
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(&bytes)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model<f32>, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes).map_err(|e| match e {
        Error::Decode { reason, .. } => Error::Decode {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

/// Split off one `\n`-terminated ASCII line.
fn take_line<'a>(bytes: &mut &'a [u8]) -> Option<&'a str> {
    let end = bytes.iter().position(|&b| b == b'\n')?;
    let line = std::str::from_utf8(&bytes[..end]).ok()?;
    *bytes = &bytes[end + 1..];
    Some(line)
}

fn sized_field(bytes: &mut &[u8], key: &str) -> Result<usize> {
    take_line(bytes)
        .and_then(|l| l.strip_prefix(key)?.strip_prefix(' ')?.parse().ok())
        .ok_or_else(|| Error::CorruptPayload(format!("missing `{key} <bytes>` line")))
}

pub fn parse_checkpoint(mut bytes: &[u8]) -> Result<(Model<f32>, CheckpointMeta)> {
    let rest = &mut bytes;
    if take_line(rest) != Some(CHECKPOINT_MAGIC) {
        return Err(Error::Decode {
            path: PathBuf::new(),
            reason: "not a checkpoint file".into(),
        });
    }
    let version = take_line(rest)
        .and_then(|l| l.strip_prefix("version "))
        .ok_or_else(|| Error::CorruptPayload("missing version line".into()))?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(Error::VersionMismatch {
            found: version.to_string(),
            expected: CHECKPOINT_VERSION.to_string(),
        });
    }
    let n = sized_field(rest, "header")?;
    if rest.len() < n + 1 || rest[n] != b'\n' {
        return Err(Error::CorruptPayload("truncated header".into()));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&rest[..n]).map_err(|e| Error::CorruptPayload(format!("header: {e}")))?;
    *rest = &rest[n + 1..];
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.format_version.to_string(),
            expected: CHECKPOINT_VERSION.to_string(),
        });
    }
    let m = sized_field(rest, "payload")?;
    if rest.len() != m {
        return Err(Error::CorruptPayload(format!(
            "payload declares {m} bytes, file holds {}",
            rest.len()
        )));
    }

    header.model.validate()?;
    let mut model = build_model::<f32>(&header.model, 0)?;
    let expected: Vec<ParamEntry> = model
        .params()
        .iter()
        .map(|p| ParamEntry {
            name: p.name.clone(),
            shape: p.value.shape(),
        })
        .collect();
    if expected != header.params {
        return Err(Error::CorruptPayload(format!(
            "config implies {} parameter tensors, checkpoint lists {} (or names/shapes differ)",
            expected.len(),
            header.params.len()
        )));
    }
    if m != 4 * model.count_params() {
        return Err(Error::CorruptPayload(format!(
            "payload holds {m} bytes, parameters need {}",
            4 * model.count_params()
        )));
    }
    let mut floats = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let values = header
        .params
        .iter()
        .map(|p| {
            let len = p.shape.iter().product();
            Tensor::new(p.shape, floats.by_ref().take(len).collect())
                .map_err(|e| Error::CorruptPayload(format!("{}: {e}", p.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    model.set_params(values)?;
    Ok((
        model,
        CheckpointMeta {
            train: header.train,
            seed: header.seed,
            step: header.step,
        },
    ))
}
