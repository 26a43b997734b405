#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylerec_core::data::{ImageRecord, Manifest, Split};
use stylerec_core::features::{write_channel, FeatureChannel};

pub const STYLES: [&str; 3] = ["dark", "warm", "texture"];

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stylerec"))
}

pub fn stylerec(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Colored-noise image of one synthetic style: dark and desaturated, warm
/// and bright, or high-frequency saturated texture.
pub fn style_image(style: usize, side: u32, rng: &mut ChaCha8Rng) -> image::RgbImage {
    let base: [f64; 3] = match style {
        0 => {
            let v = rng.random_range(15.0..45.0);
            [v, v, v + rng.random_range(0.0..10.0)]
        }
        1 => [rng.random_range(215.0..250.0), rng.random_range(150.0..190.0), rng.random_range(60.0..100.0)],
        _ => [128.0; 3],
    };
    image::RgbImage::from_fn(side, side, |x, y| {
        let px = match style {
            2 => {
                let on = (x + y) % 2 == 0;
                let hue = rng.random_range(0..3);
                let mut c = [rng.random_range(0.0..80.0); 3];
                c[hue] = if on { rng.random_range(180.0..255.0) } else { rng.random_range(60.0..120.0) };
                c
            }
            _ => [0, 1, 2].map(|i| base[i] + rng.random_range(-12.0..12.0)),
        };
        image::Rgb(px.map(|v: f64| v.clamp(0.0, 255.0) as u8))
    })
}

/// Writes `per_class` PNGs per style under `dir` plus a manifest. With
/// `assign_splits`, records cycle train/train/train/val/test.
pub fn styles_dataset(dir: &Path, per_class: usize, side: u32, seed: u64, assign_splits: bool) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::fs::create_dir_all(dir.join("img")).unwrap();
    let mut records = Vec::new();
    for (s, style) in STYLES.iter().enumerate() {
        for i in 0..per_class {
            let id = format!("{style}-{i:04}");
            let rel = format!("img/{id}.png");
            style_image(s, side, &mut rng).save(dir.join(&rel)).unwrap();
            let mut r = ImageRecord::new(id, rel, &[style]);
            if assign_splits {
                r.split = [Split::Train, Split::Train, Split::Train, Split::Val, Split::Test][i % 5];
            }
            r.caption = Some(if i % 2 == 0 { format!("A {style} Flower photo") } else { format!("{style} street") });
            records.push(r);
        }
    }
    let manifest = Manifest::new(STYLES.iter().map(|s| s.to_string()).collect(), records, "synthetic styles").unwrap();
    let path = dir.join("manifest.jsonl");
    manifest.write(&path).unwrap();
    path
}

/// Manifest of `per_class` records over `classes` with cycling splits and
/// no image files, for feature-file driven tests.
pub fn label_manifest(dir: &Path, classes: &[&str], per_class: usize) -> (PathBuf, Manifest) {
    let mut records = Vec::new();
    for class in classes {
        for i in 0..per_class {
            let id = format!("{class}-{i:04}");
            let mut r = ImageRecord::new(id.clone(), format!("{id}.png"), &[class]);
            r.split = [Split::Train, Split::Train, Split::Train, Split::Val, Split::Test][i % 5];
            r.caption = Some(format!("{class} number {i}"));
            records.push(r);
        }
    }
    let m = Manifest::new(classes.iter().map(|s| s.to_string()).collect(), records, "labels").unwrap();
    let path = dir.join("manifest.jsonl");
    m.write(&path).unwrap();
    (path, m)
}

/// Channel whose coordinate `k` is shifted by `signal` for records of
/// class `k` when `informative(k)`; otherwise uniform noise.
pub fn synthetic_channel(
    m: &Manifest,
    name: &str,
    dim: usize,
    signal: f64,
    informative: impl Fn(usize) -> bool,
    seed: u64,
) -> FeatureChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = m.records().iter().map(|r| {
        let k = m.class_index(&r.labels[0]).unwrap();
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if informative(k) {
            x[k % dim] += signal;
        }
        (r.id.clone(), x)
    });
    FeatureChannel::from_rows(name, dim, rows).unwrap()
}

pub fn write_fvec(dir: &Path, channel: &FeatureChannel) -> PathBuf {
    let path = dir.join(format!("{}.fvec", channel.name()));
    write_channel(channel, &path).unwrap();
    path
}
