use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dwa::data::{gen_synthetic, save_checkpoint, save_png, CheckpointMeta};
use dwa::models::{build_model, ModelConfig, ModelKind};
use dwa::resize::bicubic_resize;

fn dwa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwa"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A 16x20 LR PNG cut from a synthetic image.
fn lr_png(path: &Path) {
    let hr = gen_synthetic(3, 1, 64).unwrap().remove(0);
    let lr = bicubic_resize(&hr, 0.5).unwrap().crop(0, 0, 16, 20).unwrap();
    save_png(&lr, path).unwrap();
}

fn zero_checkpoint(path: &Path, kind: ModelKind, scale: usize) {
    let cfg = ModelConfig::new(kind, scale).with_depth(3).with_width(4);
    let mut m = build_model::<f32>(&cfg, 0).unwrap();
    m.zero_params();
    save_checkpoint(&m, &CheckpointMeta::default(), path).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["--version"], &["train", "--help"]] {
        assert_eq!(dwa(dir.path(), args).status.code(), Some(0), "{args:?}");
    }
}

#[test]
fn validation_errors_exit_one_and_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[(&[&str], &str)] = &[
        (&["train", "--data", "synthetic:0:2:32", "--unknown"], "--unknown"),
        (&["train", "--data", "synthetic:0:2:32", "--patch", "30"], "--patch"),
        (&["train", "--data", "synthetic:0:2:32", "--scale", "5"], "--scale"),
        (
            &[
                "train",
                "--data",
                "synthetic:0:2:32",
                "--model",
                "dwsr",
                "--stride",
                "2",
            ],
            "--stride",
        ),
        (&["train", "--data", "synthetic:0:2:32", "--lr=-1"], "--lr"),
        (&["train", "--data", "synthetic:0:2", "--patch", "32"], "--data"),
        (&["train", "--data", "synthetic:0:2:32", "--holdout", "2"], "--holdout"),
        (&["eval", "--data", "synthetic:0:2:32"], "--scale"),
        (&["ablate", "--model", "dwsr"], "--model"),
        (&["train", "--data", "synthetic:0:2:32", "--loss", "huber"], "--loss"),
    ];
    for (args, flag) in cases {
        let o = dwa(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(flag), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn runtime_errors_exit_two_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = dwa(dir.path(), &["eval", "--data", "missing_dir", "--scale", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing_dir"));

    fs::write(
        dir.path().join("bad.ckpt"),
        b"DWA-CHECKPOINT\nversion 1\nheader 3\n{}\n",
    )
    .unwrap();
    fs::create_dir(dir.path().join("imgs")).unwrap();
    lr_png(&dir.path().join("imgs/a.png"));
    let o = dwa(dir.path(), &["eval", "--ckpt", "bad.ckpt", "--data", "imgs"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.ckpt"));

    let o = dwa(dir.path(), &["sr", "--ckpt", "nope.ckpt", "--input", "imgs/a.png"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.ckpt"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dwa(dir.path(), &["selftest", "--images", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    assert!(dir.path().join("out/selftest.tsv").is_file());
    assert!(dir.path().join("out/run.json").is_file());
}

#[test]
fn zero_checkpoint_sr_equals_bicubic_png() {
    let dir = tempfile::tempdir().unwrap();
    lr_png(&dir.path().join("lr.png"));
    for kind in ModelKind::ALL {
        for r in [2, 3, 4] {
            let tag = format!("{kind}_x{r}");
            zero_checkpoint(&dir.path().join(format!("{tag}.ckpt")), kind, r);
            let o = dwa(
                dir.path(),
                &[
                    "sr",
                    "--ckpt",
                    &format!("{tag}.ckpt"),
                    "--input",
                    "lr.png",
                    "--output",
                    &format!("{tag}_sr.png"),
                    "--bicubic",
                    &format!("{tag}_bic.png"),
                    "--residual",
                    &format!("{tag}_res.png"),
                ],
            );
            assert_eq!(o.status.code(), Some(0), "{tag}: {}", stderr(&o));
            let sr = fs::read(dir.path().join(format!("{tag}_sr.png"))).unwrap();
            let bic = fs::read(dir.path().join(format!("{tag}_bic.png"))).unwrap();
            assert!(sr == bic, "{tag}: SR and bicubic PNGs differ");
            // zero residual is flat mid-gray; 0.5 sits on a rounding tie, so
            // the ~1e-7 float residue of the DWT-path kinds may land on 127
            let res = dwa::data::load_png(dir.path().join(format!("{tag}_res.png"))).unwrap();
            let levels: &[f32] = if kind.is_direct() { &[128.0] } else { &[127.0, 128.0] };
            assert!(
                res.data().iter().all(|&v| levels.contains(&(v * 255.0).round())),
                "{tag}"
            );
        }
    }
}

#[test]
fn eval_bicubic_against_itself_is_infinite() {
    let dir = tempfile::tempdir().unwrap();
    let o = dwa(
        dir.path(),
        &[
            "eval",
            "--data",
            "synthetic:1:3:32",
            "--scale",
            "2",
            "--against",
            "bicubic",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for line in out.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f[1], "inf", "{line}");
        assert_eq!(f[2].parse::<f64>().unwrap(), 1.0, "{line}");
    }
    assert_eq!(fs::read_to_string(dir.path().join("out/eval.tsv")).unwrap(), out);
}

#[test]
fn eval_mean_is_mean_of_printed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = dwa(
        dir.path(),
        &[
            "train",
            "--data",
            "synthetic:0:3:32",
            "--depth",
            "3",
            "--width",
            "4",
            "--steps-per-epoch",
            "2",
            "--batch",
            "2",
            "--patch",
            "32",
            "--quiet",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for channel in ["rgb", "y"] {
        let o = dwa(
            dir.path(),
            &[
                "eval",
                "--ckpt",
                "out/model.ckpt",
                "--data",
                "synthetic:5:4:32",
                "--metric-channel",
                channel,
                "--crop",
                "2",
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let rows: Vec<Vec<f64>> = stdout(&o)
            .lines()
            .skip(1)
            .map(|l| l.split('\t').skip(1).map(|v| v.parse().unwrap()).collect())
            .collect();
        let (mean, images) = rows.split_last().unwrap();
        assert_eq!(images.len(), 4);
        assert_eq!(mean.len(), 4);
        for col in 0..4 {
            let m = images.iter().map(|r| r[col]).sum::<f64>() / images.len() as f64;
            assert!((m - mean[col]).abs() < 1e-9, "{channel} column {col}");
        }
    }
}

#[test]
fn dump_features_writes_ranked_pngs() {
    let dir = tempfile::tempdir().unwrap();
    lr_png(&dir.path().join("lr.png"));
    let cfg = ModelConfig::new(ModelKind::DwaDirectDwsr, 2)
        .with_depth(3)
        .with_width(8);
    let m = build_model::<f32>(&cfg, 4).unwrap();
    save_checkpoint(&m, &CheckpointMeta::default(), dir.path().join("m.ckpt")).unwrap();
    let o = dwa(
        dir.path(),
        &["dump-features", "--ckpt", "m.ckpt", "--input", "lr.png", "--top", "3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let tsv = fs::read_to_string(dir.path().join("out/features.tsv")).unwrap();
    let scores: Vec<f64> = tsv
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 3);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    for line in tsv.lines().skip(1) {
        let file = line.split('\t').nth(3).unwrap();
        let img = dwa::data::load_png(dir.path().join("out").join(file)).unwrap();
        assert_eq!(img.shape()[1], 3);
    }
}

#[test]
fn repeated_runs_write_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| -> Vec<String> {
        [
            "train",
            "--model",
            "mwcnn_mini_dwa",
            "--width",
            "4",
            "--data",
            "synthetic:2:3:32",
            "--holdout",
            "1",
            "--epochs",
            "2",
            "--steps-per-epoch",
            "3",
            "--batch",
            "2",
            "--patch",
            "32",
            "--seed",
            "9",
            "--quiet",
            "--out-dir",
            out,
        ]
        .map(String::from)
        .to_vec()
    };
    for out in ["a", "b"] {
        let a: Vec<String> = args(out);
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        assert_eq!(dwa(dir.path(), &a).status.code(), Some(0));
    }
    for f in ["model.ckpt", "history.tsv", "epochs.tsv", "summary.json"] {
        let (a, b) = (dir.path().join("a").join(f), dir.path().join("b").join(f));
        assert!(fs::read(a).unwrap() == fs::read(b).unwrap(), "{f} differs");
    }
    // run records differ only in the --out-dir value
    let (a, b) = (
        fs::read_to_string(dir.path().join("a/run.json")).unwrap(),
        fs::read_to_string(dir.path().join("b/run.json")).unwrap(),
    );
    assert_eq!(a.replace("\"a\"", "\"b\"").replace("\"a/", "\"b/"), b);
}

#[test]
fn ablate_writes_csv_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = dwa(
        dir.path(),
        &[
            "ablate",
            "--depths",
            "3,4",
            "--strides",
            "0,1",
            "--seeds",
            "5,6",
            "--width",
            "4",
            "--steps-per-epoch",
            "3",
            "--batch",
            "2",
            "--patch",
            "32",
            "--data",
            "synthetic:0:3:32",
            "--jobs",
            "2",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/ablate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    let table = fs::read_to_string(dir.path().join("out/ablate.txt")).unwrap();
    assert_eq!(table, stdout(&o));
    assert!(table.contains("depth 3: best s>=1"));
    assert!(table.contains("depth 4: best s>=1"));
    assert!(table.contains("of 4 same-seed comparisons"));
}
