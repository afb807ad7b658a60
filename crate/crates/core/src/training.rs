//! Iterative sample reweighting.
//!
//! Each iteration forms the weighted class means, builds the mask that
//! maximizes the feature value of their difference, fits the threshold and
//! then raises the weight of every sample by `U(±margin)`, where `U` is a
//! hard step ([`hardlim`]) or a soft step ([`sigmoid`]). Weights are
//! renormalized per class after each update. The loop stops at zero
//! training error or after `max_iterations`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{
    build_mask_within, optimal_threshold, separation_score, RegionWeights, TrainedClassifier,
};
use crate::imaging::ImageVector;
use crate::locality::Region;

/// Filters at or below this many engaged pixels are sensitive to noise.
pub const SMALL_FILTER_WARNING: usize = 128;

/// Per-sample weights of each class; each class sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWeights {
    face: Vec<f64>,
    clutter: Vec<f64>,
}

impl SampleWeights {
    pub fn uniform(n_faces: usize, n_clutter: usize) -> Self {
        SampleWeights {
            face: vec![1.0 / n_faces as f64; n_faces],
            clutter: vec![1.0 / n_clutter as f64; n_clutter],
        }
    }

    /// Normalizes each class of raw nonnegative weights to sum to one.
    pub fn normalized(face: Vec<f64>, clutter: Vec<f64>) -> Result<Self> {
        Ok(SampleWeights {
            face: normalize(face, "face")?,
            clutter: normalize(clutter, "clutter")?,
        })
    }

    pub fn face(&self) -> &[f64] {
        &self.face
    }

    pub fn clutter(&self) -> &[f64] {
        &self.clutter
    }
}

fn normalize(mut w: Vec<f64>, class: &'static str) -> Result<Vec<f64>> {
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::argument(format!("{class} weights must be finite and nonnegative")));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights { class });
    }
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// How misclassification margins turn into weight increments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum UpdateRule {
    /// `+1` to every sample on the wrong side (or on the boundary).
    Hardlim,
    /// `+sigmoid(-y)` for faces and `+sigmoid(y)` for clutter.
    Sigmoid { epsilon: f64 },
}

impl UpdateRule {
    pub fn increment(&self, y: f64) -> f64 {
        match *self {
            UpdateRule::Hardlim => hardlim(y),
            UpdateRule::Sigmoid { epsilon } => sigmoid(y, epsilon),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Hardlim => "hardlim",
            UpdateRule::Sigmoid { .. } => "sigmoid",
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            UpdateRule::Hardlim => None,
            UpdateRule::Sigmoid { epsilon } => Some(epsilon),
        }
    }
}

/// Unit step with `hardlim(0) = 1`.
pub fn hardlim(y: f64) -> f64 {
    if y >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `1 / (1 + exp(-epsilon·y))`, evaluated without overflow for either sign.
pub fn sigmoid(y: f64, epsilon: f64) -> f64 {
    let z = epsilon * y;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub n_black: usize,
    pub n_white: usize,
    pub rule: UpdateRule,
    pub max_iterations: usize,
    /// Restricts mask construction to these pixels (local filters).
    pub region: Option<Region>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            n_black: 256,
            n_white: 256,
            rule: UpdateRule::Sigmoid { epsilon: 20.0 },
            max_iterations: 500,
            region: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_black == 0 || self.n_white == 0 {
            return Err(Error::argument("n_black and n_white must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::argument("max_iterations must be at least 1"));
        }
        if let UpdateRule::Sigmoid { epsilon } = self.rule {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::argument("sigmoid epsilon must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Weighted class means and their difference `m_FC = m_F - m_C`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedMeans {
    pub m_f: ImageVector,
    pub m_c: ImageVector,
    pub m_fc: ImageVector,
}

fn weighted_sum(images: &[ImageVector], weights: &[f64], len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for (img, &w) in images.iter().zip(weights) {
        for (a, &v) in acc.iter_mut().zip(img.values()) {
            *a += w * v;
        }
    }
    acc
}

fn check_dataset(faces: &[ImageVector], clutters: &[ImageVector]) -> Result<(usize, usize)> {
    let first = faces
        .first()
        .or(clutters.first())
        .ok_or_else(|| Error::argument("empty dataset"))?;
    let (w, h) = (first.source_width(), first.source_height());
    for v in faces.iter().chain(clutters) {
        if v.source_width() != w || v.source_height() != h {
            return Err(Error::DimensionMismatch {
                expected: w * h,
                found: v.len(),
            });
        }
    }
    Ok((w, h))
}

/// `m_F = Σ w_i^f f_i`, `m_C = Σ w_i^c c_i` and their difference.
pub fn weighted_means(
    faces: &[ImageVector],
    clutters: &[ImageVector],
    sw: &SampleWeights,
) -> Result<WeightedMeans> {
    if faces.len() != sw.face.len() || clutters.len() != sw.clutter.len() {
        return Err(Error::argument(format!(
            "{} faces / {} clutters but {} / {} weights",
            faces.len(),
            clutters.len(),
            sw.face.len(),
            sw.clutter.len()
        )));
    }
    if faces.is_empty() || clutters.is_empty() {
        return Err(Error::argument("both classes need at least one image"));
    }
    let (w, h) = check_dataset(faces, clutters)?;
    let m_f = weighted_sum(faces, &sw.face, w * h);
    let m_c = weighted_sum(clutters, &sw.clutter, w * h);
    let m_fc: Vec<f64> = m_f.iter().zip(&m_c).map(|(f, c)| f - c).collect();
    Ok(WeightedMeans {
        m_f: ImageVector::new(m_f, w, h)?,
        m_c: ImageVector::new(m_c, w, h)?,
        m_fc: ImageVector::new(m_fc, w, h)?,
    })
}

/// Adds `U(-y_i)` to every face weight and `U(y_i)` to every clutter weight,
/// then renormalizes each class.
///
/// Margins are `y_i = g(x_i) - θ` against the current classifier. With the
/// hard rule and no misclassified face (or clutter) sample the class sum
/// stays at its previous value, so renormalization is a no-op.
pub fn update_weights(
    sw: &SampleWeights,
    face_margins: &[f64],
    clutter_margins: &[f64],
    rule: &UpdateRule,
) -> Result<SampleWeights> {
    if face_margins.len() != sw.face.len() || clutter_margins.len() != sw.clutter.len() {
        return Err(Error::argument("margin count does not match weight count"));
    }
    let face = sw
        .face
        .iter()
        .zip(face_margins)
        .map(|(w, &y)| w + rule.increment(-y))
        .collect();
    let clutter = sw
        .clutter
        .iter()
        .zip(clutter_margins)
        .map(|(w, &y)| w + rule.increment(y))
        .collect();
    SampleWeights::normalized(face, clutter)
}

/// Summary of one training iteration, as exported to `history.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub theta: f64,
    pub s_star: f64,
}

/// Everything produced by one iteration.
#[derive(Clone, Debug)]
pub struct Step {
    pub record: IterationRecord,
    pub classifier: TrainedClassifier,
    pub errors: usize,
    pub face_margins: Vec<f64>,
    pub clutter_margins: Vec<f64>,
}

/// Step-by-step driver of the reweighting loop.
///
/// [`train`] runs it to completion; tests use it directly to observe the
/// weights between iterations.
pub struct Trainer<'a> {
    faces: &'a [ImageVector],
    clutters: &'a [ImageVector],
    cfg: TrainingConfig,
    candidates: Vec<usize>,
    weights: SampleWeights,
    iteration: usize,
    finished: bool,
}

impl<'a> Trainer<'a> {
    pub fn new(
        faces: &'a [ImageVector],
        clutters: &'a [ImageVector],
        cfg: TrainingConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if faces.is_empty() || clutters.is_empty() {
            return Err(Error::argument("training needs at least one face and one clutter image"));
        }
        let (w, h) = check_dataset(faces, clutters)?;
        let candidates = match &cfg.region {
            Some(region) => {
                if region.width() != w || region.height() != h {
                    return Err(Error::argument(format!(
                        "region {} is defined on a {}x{} canvas, images are {w}x{h}",
                        region.name(),
                        region.width(),
                        region.height()
                    )));
                }
                region.indices().to_vec()
            }
            None => (0..w * h).collect(),
        };
        let n = cfg.n_black + cfg.n_white;
        if n > candidates.len() {
            return Err(Error::argument(format!(
                "filter of {n} pixels does not fit in {} available pixels",
                candidates.len()
            )));
        }
        if n <= SMALL_FILTER_WARNING {
            log::warn!("filters with N = {n} <= {SMALL_FILTER_WARNING} pixels are sensitive to noise");
        }
        Ok(Trainer {
            faces,
            clutters,
            weights: SampleWeights::uniform(faces.len(), clutters.len()),
            cfg,
            candidates,
            iteration: 0,
            finished: false,
        })
    }

    /// Weights that the next iteration will use.
    pub fn weights(&self) -> &SampleWeights {
        &self.weights
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Runs one iteration. Returns `None` once the loop has terminated.
    pub fn step(&mut self) -> Result<Option<Step>> {
        if self.finished {
            return Ok(None);
        }
        self.iteration += 1;
        let means = weighted_means(self.faces, self.clutters, &self.weights)?;
        let mask = build_mask_within(&means.m_fc, &self.candidates, self.cfg.n_black, self.cfg.n_white)?;
        let weights = RegionWeights::default();
        let s_star = separation_score(&mask, &weights, &means.m_fc)?;

        let score = |x: &ImageVector| weights.combine(mask.means_of(x.values()));
        let face_scores: Vec<f64> = self.faces.iter().map(score).collect();
        let clutter_scores: Vec<f64> = self.clutters.iter().map(score).collect();
        let fit = optimal_threshold(&face_scores, &clutter_scores)?;
        let classifier = TrainedClassifier::new(mask, weights, fit.theta)?;

        let face_margins: Vec<f64> = face_scores.iter().map(|g| g - fit.theta).collect();
        let clutter_margins: Vec<f64> = clutter_scores.iter().map(|g| g - fit.theta).collect();

        let errors = fit.errors();
        if errors == 0 || self.iteration >= self.cfg.max_iterations {
            self.finished = true;
        } else {
            self.weights =
                update_weights(&self.weights, &face_margins, &clutter_margins, &self.cfg.rule)?;
        }

        Ok(Some(Step {
            record: IterationRecord {
                iteration: self.iteration,
                fp_rate: fit.fp_rate,
                fn_rate: fit.fn_rate,
                theta: fit.theta,
                s_star,
            },
            classifier,
            errors,
            face_margins,
            clutter_margins,
        }))
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    /// Classifier of the iteration with the fewest training errors
    /// (earliest on ties).
    pub classifier: TrainedClassifier,
    pub history: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub best_errors: usize,
    /// Whether some iteration reached zero training error.
    pub converged: bool,
}

/// Runs the reweighting loop to termination.
pub fn train(
    faces: &[ImageVector],
    clutters: &[ImageVector],
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome> {
    let mut trainer = Trainer::new(faces, clutters, cfg.clone())?;
    let mut history = Vec::new();
    let mut best: Option<(usize, usize, TrainedClassifier)> = None;
    while let Some(step) = trainer.step()? {
        log::debug!(
            "iteration {}: fp={:.4} fn={:.4} theta={:.6} s*={:.6}",
            step.record.iteration,
            step.record.fp_rate,
            step.record.fn_rate,
            step.record.theta,
            step.record.s_star
        );
        history.push(step.record);
        if best.as_ref().is_none_or(|(_, e, _)| step.errors < *e) {
            best = Some((step.record.iteration, step.errors, step.classifier));
        }
    }
    let (best_iteration, best_errors, classifier) = best.expect("at least one iteration runs");
    Ok(TrainingOutcome {
        classifier,
        history,
        best_iteration,
        best_errors,
        converged: best_errors == 0,
    })
}

/// Writes `iteration,fp_rate,fn_rate,theta,s_star` rows.
pub fn write_history_csv<W: Write>(history: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush().map_err(|e| Error::io("history.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vector(values: Vec<f64>, w: usize, h: usize) -> ImageVector {
        ImageVector::new(values, w, h).unwrap()
    }

    #[test]
    fn weighted_means_examples() {
        let f = vector(vec![0.1, 0.7, 0.3, 0.9], 2, 2);
        let c = vector(vec![0.5; 4], 2, 2);
        let m = weighted_means(
            &[f.clone(), f.clone()],
            std::slice::from_ref(&c),
            &SampleWeights::uniform(2, 1),
        )
        .unwrap();
        for (a, b) in m.m_f.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-15);
        }

        let g = vector(vec![0.0, 1.0, 1.0, 0.0], 2, 2);
        let sw = SampleWeights::normalized(vec![1.0, 0.0], vec![1.0]).unwrap();
        let m = weighted_means(&[f.clone(), g], &[c], &sw).unwrap();
        assert_eq!(m.m_f.values(), f.values());
    }

    #[test]
    fn weighted_means_match_hand_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let faces: Vec<ImageVector> = (0..3)
            .map(|_| vector((0..6).map(|_| rng.random()).collect(), 3, 2))
            .collect();
        let clutter = vec![vector(vec![0.2; 6], 3, 2)];
        let sw = SampleWeights::normalized(vec![0.2, 0.3, 0.5], vec![1.0]).unwrap();
        let m = weighted_means(&faces, &clutter, &sw).unwrap();
        for p in 0..6 {
            let mut expect = 0.0;
            expect += sw.face()[0] * faces[0].values()[p];
            expect += sw.face()[1] * faces[1].values()[p];
            expect += sw.face()[2] * faces[2].values()[p];
            assert!((m.m_f.values()[p] - expect).abs() < 1e-15);
            assert!((m.m_fc.values()[p] - (expect - 0.2)).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_means_errors() {
        let a = vector(vec![0.0; 4], 2, 2);
        let b = vector(vec![0.0; 6], 3, 2);
        assert!(weighted_means(std::slice::from_ref(&a), std::slice::from_ref(&a), &SampleWeights::uniform(2, 1)).is_err());
        assert!(weighted_means(std::slice::from_ref(&a), &[b], &SampleWeights::uniform(1, 1)).is_err());
    }

    #[test]
    fn step_functions() {
        assert_eq!(hardlim(-0.3), 0.0);
        assert_eq!(hardlim(0.0), 1.0);
        assert_eq!(hardlim(5.0), 1.0);

        assert_eq!(sigmoid(0.0, 3.0), 0.5);
        assert_eq!(sigmoid(0.0, 1e9), 0.5);
        assert_eq!(sigmoid(1.0, 20.0), 1.0 / (1.0 + (-20.0f64).exp()));
        assert_eq!(sigmoid(1.0, 1e4), 1.0);
        assert_eq!(sigmoid(-1.0, 1e4), 0.0);
        assert!(sigmoid(-800.0, 1.0).is_finite());
        // Large shape parameters approach the step function.
        for y in [-0.5, -0.01, 0.01, 0.5] {
            assert!((sigmoid(y, 1e6) - hardlim(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let y: f64 = rng.random_range(-2.0..2.0);
            let eps: f64 = rng.random_range(0.01..100.0);
            assert!((sigmoid(y, eps) + sigmoid(-y, eps) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn hardlim_update_example() {
        let sw = SampleWeights::uniform(2, 1);
        let out = update_weights(&sw, &[-1.0, 1.0], &[-1.0], &UpdateRule::Hardlim).unwrap();
        assert_eq!(out.face(), &[0.75, 0.25]);
        assert_eq!(out.clutter(), &[1.0]);
    }

    #[test]
    fn sigmoid_zero_margins_keep_uniform() {
        let sw = SampleWeights::uniform(4, 3);
        let rule = UpdateRule::Sigmoid { epsilon: 20.0 };
        let out = update_weights(&sw, &[0.0; 4], &[0.0; 3], &rule).unwrap();
        assert_eq!(out.face(), sw.face());
        for w in out.clutter() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hardlim_without_mistakes_is_unchanged() {
        let sw = SampleWeights::normalized(vec![0.2, 0.8], vec![0.5, 0.5]).unwrap();
        let out = update_weights(&sw, &[0.3, 0.1], &[-0.2, -0.4], &UpdateRule::Hardlim).unwrap();
        assert_eq!(out, sw);
    }

    #[test]
    fn zero_total_is_an_error() {
        assert!(matches!(
            SampleWeights::normalized(vec![0.0, 0.0], vec![1.0]),
            Err(Error::DegenerateWeights { class: "face" })
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainingConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.rule = UpdateRule::Sigmoid { epsilon: 0.0 };
        assert!(cfg.validate().is_err());
        cfg.rule = UpdateRule::Hardlim;
        cfg.max_iterations = 0;
        assert!(cfg.validate().is_err());
    }

    fn one_pixel_dataset() -> (Vec<ImageVector>, Vec<ImageVector>) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut make = |hot: f64| {
            let mut v: Vec<f64> = (0..16).map(|_| rng.random_range(0.4..0.6)).collect();
            v[5] = hot;
            vector(v, 4, 4)
        };
        let faces = (0..5).map(|_| make(1.0)).collect();
        let clutters = (0..5).map(|_| make(0.0)).collect();
        (faces, clutters)
    }

    #[test]
    fn one_pixel_separable_converges_immediately() {
        let (faces, clutters) = one_pixel_dataset();
        let cfg = TrainingConfig {
            n_black: 1,
            n_white: 1,
            ..TrainingConfig::default()
        };
        let out = train(&faces, &clutters, &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert!(out.converged);
        assert_eq!(out.classifier.mask.white(), &[5]);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let (faces, _) = one_pixel_dataset();
        let odd = vec![vector(vec![0.0; 9], 3, 3)];
        let cfg = TrainingConfig {
            n_black: 1,
            n_white: 1,
            ..TrainingConfig::default()
        };
        assert!(train(&faces, &odd, &cfg).is_err());
        assert!(train(&faces, &[], &cfg).is_err());
        let too_big = TrainingConfig {
            n_black: 10,
            n_white: 10,
            ..cfg
        };
        assert!(train(&faces, &faces, &too_big).is_err());
    }

    #[test]
    fn history_csv_header() {
        let rec = IterationRecord {
            iteration: 1,
            fp_rate: 0.0,
            fn_rate: 0.5,
            theta: 0.25,
            s_star: 1.0,
        };
        let mut buf = Vec::new();
        write_history_csv(&[rec], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,fp_rate,fn_rate,theta,s_star\n1,0.0,0.5,0.25,1.0\n"
        );
    }
}
