//! Deterministic synthetic datasets and scenes.
//!
//! Faces come from a fixed 64×64 template: a mid-gray canvas with dark 8×8
//! blocks in the two top corners and a light horizontal band across the
//! middle. Clutter is uniform noise. All intensities are multiples of 1/255
//! so a PNG round trip is lossless.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

pub const FACE_SIDE: usize = 64;

const BASE: f64 = 0.5;
const DARK: f64 = 0.1;
const LIGHT: f64 = 0.9;
const BLOCK: usize = 8;
const BAND_ROWS: std::ops::Range<usize> = 24..40;

/// Noise half-width added to separable faces.
pub const SEPARABLE_NOISE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Template plus small noise against pure noise: linearly separable.
    Separable,
    /// Randomly shifted, low-contrast, noisier faces: classes overlap.
    Noisy,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(SynthKind::Separable),
            "noisy" => Ok(SynthKind::Noisy),
            other => Err(Error::argument(format!(
                "unknown synthetic kind '{other}' (expected separable or noisy)"
            ))),
        }
    }
}

/// Template intensity at `(row, col)` of the 64×64 face.
pub fn template_value(row: usize, col: usize) -> f64 {
    let top_corner = row < BLOCK && !(BLOCK..FACE_SIDE - BLOCK).contains(&col);
    if top_corner {
        DARK
    } else if BAND_ROWS.contains(&row) {
        LIGHT
    } else {
        BASE
    }
}

fn to_level(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn from_levels(side: usize, levels: Vec<u8>) -> GrayImage {
    GrayImage::from_bytes(side, side, &levels).expect("square buffer")
}

fn face_levels(rng: &mut ChaCha8Rng, kind: SynthKind) -> Vec<u8> {
    let (dx, dy, contrast, noise) = match kind {
        SynthKind::Separable => (0i64, 0i64, 1.0, SEPARABLE_NOISE),
        SynthKind::Noisy => (
            rng.random_range(-4..=4),
            rng.random_range(-4..=4),
            rng.random_range(0.1..1.0),
            0.3,
        ),
    };
    let side = FACE_SIDE as i64;
    let mut out = Vec::with_capacity(FACE_SIDE * FACE_SIDE);
    for row in 0..side {
        for col in 0..side {
            let (r, c) = (row - dy, col - dx);
            let t = if (0..side).contains(&r) && (0..side).contains(&c) {
                template_value(r as usize, c as usize)
            } else {
                BASE
            };
            let v = BASE + contrast * (t - BASE) + rng.random_range(-noise..=noise);
            out.push(to_level(v));
        }
    }
    out
}

fn noise_levels(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random::<u8>()).collect()
}

pub fn synth_face(rng: &mut ChaCha8Rng, kind: SynthKind) -> GrayImage {
    from_levels(FACE_SIDE, face_levels(rng, kind))
}

pub fn synth_clutter(rng: &mut ChaCha8Rng) -> GrayImage {
    from_levels(FACE_SIDE, noise_levels(rng, FACE_SIDE * FACE_SIDE))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub faces: Vec<GrayImage>,
    pub clutters: Vec<GrayImage>,
}

/// `count` faces and `count` clutter images from one seed.
pub fn generate(kind: SynthKind, count: usize, seed: u64) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let faces = (0..count).map(|_| synth_face(&mut rng, kind)).collect();
    let clutters = (0..count).map(|_| synth_clutter(&mut rng)).collect();
    SynthDataset { faces, clutters }
}

/// Writes `faces/face_NNNN.png` and `clutter/clutter_NNNN.png`.
pub fn write_dataset(ds: &SynthDataset, out_dir: &Path) -> Result<()> {
    for (sub, prefix, images) in [("faces", "face", &ds.faces), ("clutter", "clutter", &ds.clutters)] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (i, img) in images.iter().enumerate() {
            img.save_png(&dir.join(format!("{prefix}_{i:04}.png")))?;
        }
    }
    Ok(())
}

/// A square noise picture, optionally with one separable face pasted with
/// its top-left corner at `face_at`. The background does not depend on
/// whether a face is pasted.
pub fn scene(side: usize, seed: u64, face_at: Option<(usize, usize)>) -> Result<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = noise_levels(&mut rng, side * side);
    let face = face_levels(&mut rng, SynthKind::Separable);
    if let Some((x, y)) = face_at {
        if x + FACE_SIDE > side || y + FACE_SIDE > side {
            return Err(Error::argument("pasted face does not fit in the scene"));
        }
        for r in 0..FACE_SIDE {
            let dst = (y + r) * side + x;
            levels[dst..dst + FACE_SIDE].copy_from_slice(&face[r * FACE_SIDE..(r + 1) * FACE_SIDE]);
        }
    }
    Ok(from_levels(side, levels))
}
