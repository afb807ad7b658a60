//! Dispersed filters and single-feature threshold classifiers.
//!
//! A [`FilterMask`] is a pair of disjoint pixel sets over a vectorized
//! window. With region weights `(v1, v2)` its feature value on an image `x`
//! is `g(x) = v1·m1(x) + v2·m2(x)`, where `m1` and `m2` are the mean
//! intensities over the black and white sets. A classifier labels `x` as a
//! face iff `g(x) > θ`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageVector;

/// Binary label. Faces are the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Face,
    Clutter,
}

impl Label {
    /// `+1` for faces, `-1` for clutter.
    pub fn sign(self) -> i8 {
        match self {
            Label::Face => 1,
            Label::Clutter => -1,
        }
    }

    pub fn is_face(self) -> bool {
        self == Label::Face
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Face => "face",
            Label::Clutter => "clutter",
        })
    }
}

/// Black and white pixel sets of a fully dispersed filter.
///
/// Indices are positions in the row-major vectorization of a
/// `width × height` window and are kept sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterMask {
    width: usize,
    height: usize,
    black: Vec<usize>,
    white: Vec<usize>,
}

impl FilterMask {
    pub fn new(
        width: usize,
        height: usize,
        mut black: Vec<usize>,
        mut white: Vec<usize>,
    ) -> Result<Self> {
        let len = width * height;
        if black.is_empty() || white.is_empty() {
            return Err(Error::argument("both filter regions need at least one pixel"));
        }
        black.sort_unstable();
        white.sort_unstable();
        if black.windows(2).any(|w| w[0] == w[1]) || white.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::argument("duplicate pixel index in filter region"));
        }
        if let Some(&i) = black.iter().chain(white.iter()).find(|&&i| i >= len) {
            return Err(Error::argument(format!(
                "pixel index {i} outside {width}x{height} window"
            )));
        }
        if sorted_intersect(&black, &white) {
            return Err(Error::argument("black and white regions overlap"));
        }
        Ok(FilterMask {
            width,
            height,
            black,
            white,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn black(&self) -> &[usize] {
        &self.black
    }

    pub fn white(&self) -> &[usize] {
        &self.white
    }

    /// Total number of engaged pixels, `N_b + N_w`.
    pub fn size(&self) -> usize {
        self.black.len() + self.white.len()
    }

    fn check(&self, x: &ImageVector) -> Result<()> {
        if x.source_width() != self.width || x.source_height() != self.height {
            return Err(Error::DimensionMismatch {
                expected: self.width * self.height,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `(m1, m2)` on raw values; the caller guarantees the length.
    pub(crate) fn means_of(&self, values: &[f64]) -> (f64, f64) {
        let mean = |idx: &[usize]| idx.iter().map(|&p| values[p]).sum::<f64>() / idx.len() as f64;
        (mean(&self.black), mean(&self.white))
    }
}

fn sorted_intersect(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => return true,
        }
    }
    false
}

/// Weights applied to the black and white region means.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionWeights {
    pub v1: f64,
    pub v2: f64,
}

impl Default for RegionWeights {
    fn default() -> Self {
        RegionWeights { v1: -1.0, v2: 1.0 }
    }
}

impl RegionWeights {
    pub fn combine(&self, (m1, m2): (f64, f64)) -> f64 {
        self.v1 * m1 + self.v2 * m2
    }
}

/// Mean intensities `(m1, m2)` of `x` over the black and white regions.
pub fn mean_intensities(mask: &FilterMask, x: &ImageVector) -> Result<(f64, f64)> {
    mask.check(x)?;
    Ok(mask.means_of(x.values()))
}

/// Feature value `g(x) = v1·m1 + v2·m2`.
pub fn feature_value(mask: &FilterMask, weights: &RegionWeights, x: &ImageVector) -> Result<f64> {
    Ok(weights.combine(mean_intensities(mask, x)?))
}

/// Separation score of a mask: its feature value on the class-difference
/// image `m_FC`. For default weights this equals the gap between the mean
/// face score and the mean clutter score.
pub fn separation_score(
    mask: &FilterMask,
    weights: &RegionWeights,
    m_fc: &ImageVector,
) -> Result<f64> {
    feature_value(mask, weights, m_fc)
}

/// Builds the mask maximizing `g(m_FC)` for the given region sizes: the
/// `n_black` smallest entries become black and the `n_white` largest become
/// white. Ties keep vector order (stable sort).
pub fn build_mask(m_fc: &ImageVector, n_black: usize, n_white: usize) -> Result<FilterMask> {
    let all: Vec<usize> = (0..m_fc.len()).collect();
    build_mask_within(m_fc, &all, n_black, n_white)
}

/// [`build_mask`] restricted to the positions in `candidates`.
///
/// `candidates` must be strictly increasing; only those entries of `m_FC`
/// are ranked.
pub fn build_mask_within(
    m_fc: &ImageVector,
    candidates: &[usize],
    n_black: usize,
    n_white: usize,
) -> Result<FilterMask> {
    if n_black == 0 || n_white == 0 {
        return Err(Error::argument("n_black and n_white must be at least 1"));
    }
    if n_black + n_white > candidates.len() {
        return Err(Error::argument(format!(
            "filter needs {} pixels but only {} are available",
            n_black + n_white,
            candidates.len()
        )));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument("candidate positions must be strictly increasing"));
    }
    let values = m_fc.values();
    if let Some(&p) = candidates.last() {
        if p >= values.len() {
            return Err(Error::argument(format!("candidate position {p} out of range")));
        }
    }
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let black = order[..n_black].to_vec();
    let white = order[order.len() - n_white..].to_vec();
    FilterMask::new(m_fc.source_width(), m_fc.source_height(), black, white)
}

/// Result of the threshold search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdFit {
    pub theta: f64,
    /// Clutter samples with `g > θ`.
    pub false_positives: usize,
    /// Face samples with `g ≤ θ`.
    pub false_negatives: usize,
    pub fp_rate: f64,
    pub fn_rate: f64,
}

impl ThresholdFit {
    pub fn errors(&self) -> usize {
        self.false_positives + self.false_negatives
    }
}

/// Finds `θ` minimizing the number of misclassified samples when faces are
/// the `g > θ` side.
///
/// Candidate placements are the half-open gaps `[u_k, u_{k+1})` between
/// consecutive distinct scores plus the two unbounded ends. Among optimal
/// bounded gaps the widest wins (lowest on ties) and `θ` is its midpoint.
/// When only unbounded placements are optimal the upper one is preferred,
/// giving `θ = max score` (everything clutter).
pub fn optimal_threshold(face_scores: &[f64], clutter_scores: &[f64]) -> Result<ThresholdFit> {
    if face_scores.is_empty() || clutter_scores.is_empty() {
        return Err(Error::argument("threshold search needs scores from both classes"));
    }
    if face_scores.iter().chain(clutter_scores).any(|s| s.is_nan()) {
        return Err(Error::argument("NaN score"));
    }
    let n_faces = face_scores.len();
    let n_clutter = clutter_scores.len();

    let mut scored: Vec<(f64, bool)> = face_scores
        .iter()
        .map(|&s| (s, true))
        .chain(clutter_scores.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    // One entry per distinct score: (value, faces <= value, clutter > value).
    let mut levels: Vec<(f64, usize, usize)> = Vec::new();
    let (mut faces_le, mut clutter_le) = (0, 0);
    let mut i = 0;
    while i < scored.len() {
        let u = scored[i].0;
        while i < scored.len() && scored[i].0 == u {
            if scored[i].1 {
                faces_le += 1;
            } else {
                clutter_le += 1;
            }
            i += 1;
        }
        levels.push((u, faces_le, n_clutter - clutter_le));
    }

    let below_all = n_clutter;
    let best = levels
        .iter()
        .map(|&(_, f, c)| f + c)
        .min()
        .expect("non-empty")
        .min(below_all);

    // Widest optimal bounded gap.
    let mut chosen: Option<(f64, f64)> = None;
    for pair in levels.windows(2) {
        let (lo, f, c) = pair[0];
        let hi = pair[1].0;
        if f + c == best && chosen.is_none_or(|(a, b)| hi - lo > b - a) {
            chosen = Some((lo, hi));
        }
    }
    let (last, f_last, c_last) = *levels.last().expect("non-empty");
    let theta = match chosen {
        Some((lo, hi)) => {
            let mid = lo + (hi - lo) / 2.0;
            if mid < hi { mid } else { lo }
        }
        None if f_last + c_last == best => last,
        None => {
            let first = levels[0].0;
            first - first.abs().max(1.0)
        }
    };

    let false_negatives = face_scores.iter().filter(|&&s| s <= theta).count();
    let false_positives = clutter_scores.iter().filter(|&&s| s > theta).count();
    debug_assert_eq!(false_negatives + false_positives, best);
    Ok(ThresholdFit {
        theta,
        false_positives,
        false_negatives,
        fp_rate: false_positives as f64 / n_clutter as f64,
        fn_rate: false_negatives as f64 / n_faces as f64,
    })
}

/// A mask, its region weights and a decision threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedClassifier {
    pub mask: FilterMask,
    pub weights: RegionWeights,
    pub theta: f64,
}

impl TrainedClassifier {
    pub fn new(mask: FilterMask, weights: RegionWeights, theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::argument("threshold must be finite"));
        }
        Ok(TrainedClassifier {
            mask,
            weights,
            theta,
        })
    }

    pub fn score(&self, x: &ImageVector) -> Result<f64> {
        feature_value(&self.mask, &self.weights, x)
    }

    /// `g(x) - θ`.
    pub fn margin(&self, x: &ImageVector) -> Result<f64> {
        Ok(self.score(x)? - self.theta)
    }

    pub fn classify(&self, x: &ImageVector) -> Result<Label> {
        Ok(self.label_for(self.score(x)?))
    }

    /// Face iff `g > θ`; the boundary `g = θ` is clutter.
    pub fn label_for(&self, g: f64) -> Label {
        if g > self.theta {
            Label::Face
        } else {
            Label::Clutter
        }
    }
}
