//! Dataset splitting, confusion rates and ROC curves.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{Label, TrainedClassifier};
use crate::imaging::ImageVector;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<ImageVector>,
    pub labels: Vec<Label>,
}

impl LabeledDataset {
    pub fn new(samples: Vec<ImageVector>, labels: Vec<Label>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::argument(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        Ok(LabeledDataset { samples, labels })
    }

    pub fn from_classes(faces: Vec<ImageVector>, clutters: Vec<ImageVector>) -> Self {
        let labels = std::iter::repeat_n(Label::Face, faces.len())
            .chain(std::iter::repeat_n(Label::Clutter, clutters.len()))
            .collect();
        let mut samples = faces;
        samples.extend(clutters);
        LabeledDataset { samples, labels }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Samples of one class, cloned, in dataset order.
    pub fn class(&self, label: Label) -> Vec<ImageVector> {
        self.samples
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|(s, _)| s.clone())
            .collect()
    }

    fn push(&mut self, sample: ImageVector, label: Label) {
        self.samples.push(sample);
        self.labels.push(label);
    }
}

/// Stratified shuffle split. Each class sends `round(train_frac · n)`
/// samples (clamped to `[1, n-1]`) to the training side.
pub fn split(ds: &LabeledDataset, train_frac: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::argument("train_frac must lie in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = LabeledDataset::default();
    let mut test = LabeledDataset::default();
    for label in [Label::Face, Label::Clutter] {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == label).collect();
        if idx.len() < 2 {
            return Err(Error::argument(format!(
                "class {label} has {} samples; splitting needs at least 2",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((train_frac * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        for (k, &i) in idx.iter().enumerate() {
            let side = if k < n_train { &mut train } else { &mut test };
            side.push(ds.samples[i].clone(), label);
        }
    }
    Ok((train, test))
}

/// Confusion counts and rates of one classifier on one dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    /// `FP / #clutter`, zero when there is no clutter.
    pub fp_rate: f64,
    /// `FN / #faces`, zero when there are no faces.
    pub fn_rate: f64,
    pub accuracy: f64,
    /// Set when one class is absent and its rate was reported as zero.
    pub missing_class: bool,
}

impl Confusion {
    pub fn from_predictions(pairs: impl IntoIterator<Item = (Label, Label)>) -> Result<Self> {
        let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
        for (truth, predicted) in pairs {
            match (truth, predicted) {
                (Label::Face, Label::Face) => tp += 1,
                (Label::Face, Label::Clutter) => fneg += 1,
                (Label::Clutter, Label::Face) => fp += 1,
                (Label::Clutter, Label::Clutter) => tn += 1,
            }
        }
        let total = tp + fp + tn + fneg;
        if total == 0 {
            return Err(Error::argument("confusion of an empty dataset"));
        }
        let (faces, clutter) = (tp + fneg, fp + tn);
        let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Ok(Confusion {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fneg,
            fp_rate: rate(fp, clutter),
            fn_rate: rate(fneg, faces),
            accuracy: (tp + tn) as f64 / total as f64,
            missing_class: faces == 0 || clutter == 0,
        })
    }
}

pub fn confusion(c: &TrainedClassifier, ds: &LabeledDataset) -> Result<Confusion> {
    let predictions = ds
        .samples
        .iter()
        .map(|x| c.classify(x))
        .collect::<Result<Vec<_>>>()?;
    Confusion::from_predictions(ds.labels.iter().copied().zip(predictions))
}

/// One operating point: samples with `score > threshold` are called faces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Sweeps the threshold from `+∞` down through every distinct score to
/// `−∞`. Consecutive thresholds giving the same `(fpr, tpr)` collapse into
/// one point carrying the smallest of them, so the rates at any `θ` are
/// those of the first point whose threshold is `≤ θ` (see [`rates_at`]).
pub fn roc(scores: &[(f64, Label)]) -> Result<Vec<RocPoint>> {
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::argument("NaN score"));
    }
    let n_pos = scores.iter().filter(|(_, l)| l.is_face()).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::argument("ROC needs samples of both classes"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let point = |t: f64, tp: usize, fp: usize| RocPoint {
        threshold: t,
        fpr: fp as f64 / n_neg as f64,
        tpr: tp as f64 / n_pos as f64,
    };
    let mut points: Vec<RocPoint> = vec![point(f64::INFINITY, 0, 0)];
    let push = |points: &mut Vec<RocPoint>, p: RocPoint| match points.last_mut() {
        Some(last) if last.fpr == p.fpr && last.tpr == p.tpr => last.threshold = p.threshold,
        _ => points.push(p),
    };
    // At threshold u the positives are the samples strictly above u.
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let u = sorted[i].0;
        push(&mut points, point(u, tp, fp));
        while i < sorted.len() && sorted[i].0 == u {
            if sorted[i].1.is_face() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    push(&mut points, point(f64::NEG_INFINITY, tp, fp));
    Ok(points)
}

/// `(fpr, tpr)` of the rule `score > theta`, read off a curve from [`roc`].
pub fn rates_at(curve: &[RocPoint], theta: f64) -> Option<(f64, f64)> {
    curve
        .iter()
        .find(|p| p.threshold <= theta)
        .map(|p| (p.fpr, p.tpr))
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &[RocPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

pub fn scores(c: &TrainedClassifier, ds: &LabeledDataset) -> Result<Vec<(f64, Label)>> {
    ds.samples
        .iter()
        .zip(&ds.labels)
        .map(|(x, &l)| Ok((c.score(x)?, l)))
        .collect()
}

/// The JSON summary written next to `roc.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub auc: f64,
}

/// Confusion, ROC and summary of one classifier on one dataset.
#[derive(Clone, Debug)]
pub struct Report {
    pub confusion: Confusion,
    pub curve: Vec<RocPoint>,
    pub summary: Summary,
}

pub fn evaluate(c: &TrainedClassifier, ds: &LabeledDataset) -> Result<Report> {
    let confusion = confusion(c, ds)?;
    let curve = roc(&scores(c, ds)?)?;
    let summary = Summary {
        accuracy: confusion.accuracy,
        fp_rate: confusion.fp_rate,
        fn_rate: confusion.fn_rate,
        auc: auc(&curve),
    };
    Ok(Report {
        confusion,
        curve,
        summary,
    })
}

/// Writes `threshold,fpr,tpr` rows.
pub fn write_roc_csv<W: Write>(curve: &[RocPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("roc.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{FilterMask, RegionWeights};
    use rand::{Rng, SeedableRng};
    use std::collections::HashSet;

    fn sample(v: f64) -> ImageVector {
        ImageVector::new(vec![0.0, v], 2, 1).unwrap()
    }

    fn tagged(n_faces: usize, n_clutter: usize) -> LabeledDataset {
        let faces = (0..n_faces).map(|i| sample(i as f64 / 100.0)).collect();
        let clutter = (0..n_clutter).map(|i| sample(0.5 + i as f64 / 100.0)).collect();
        LabeledDataset::from_classes(faces, clutter)
    }

    fn key(x: &ImageVector) -> u64 {
        x.values()[1].to_bits()
    }

    #[test]
    fn split_sizes() {
        let ds = tagged(10, 10);
        let (train, test) = split(&ds, 0.7, 1).unwrap();
        assert_eq!((train.count(Label::Face), train.count(Label::Clutter)), (7, 7));
        assert_eq!((test.count(Label::Face), test.count(Label::Clutter)), (3, 3));

        let (train, test) = split(&tagged(2, 2), 0.5, 1).unwrap();
        assert_eq!((train.len(), test.len()), (2, 2));

        assert!(split(&tagged(1, 5), 0.5, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn split_is_deterministic_partition() {
        let ds = tagged(13, 9);
        let (a1, b1) = split(&ds, 0.7, 42).unwrap();
        let (a2, b2) = split(&ds, 0.7, 42).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);

        let train: HashSet<u64> = a1.samples.iter().map(key).collect();
        let test: HashSet<u64> = b1.samples.iter().map(key).collect();
        assert!(train.is_disjoint(&test));
        let all: HashSet<u64> = ds.samples.iter().map(key).collect();
        assert_eq!(train.union(&test).copied().collect::<HashSet<_>>(), all);

        for (label, n) in [(Label::Face, 13.0), (Label::Clutter, 9.0)] {
            let t = a1.count(label) as f64;
            assert!((t - 0.7 * n).abs() <= 1.0);
        }
        let (a3, _) = split(&ds, 0.7, 43).unwrap();
        assert_ne!(a1, a3);
    }

    fn threshold_classifier(theta: f64) -> TrainedClassifier {
        let mask = FilterMask::new(2, 1, vec![0], vec![1]).unwrap();
        TrainedClassifier::new(mask, RegionWeights::default(), theta).unwrap()
    }

    #[test]
    fn confusion_examples() {
        // Faces score >= 0.5 here, clutter < 0.5.
        let faces = vec![sample(0.6), sample(0.9)];
        let clutter = vec![sample(0.1), sample(0.2)];
        let ds = LabeledDataset::from_classes(faces, clutter);
        let perfect = confusion(&threshold_classifier(0.5), &ds).unwrap();
        assert_eq!((perfect.fp_rate, perfect.fn_rate, perfect.accuracy), (0.0, 0.0, 1.0));

        let never = confusion(&threshold_classifier(10.0), &ds).unwrap();
        assert_eq!((never.fp_rate, never.fn_rate, never.accuracy), (0.0, 1.0, 0.5));

        let only_faces = LabeledDataset::from_classes(vec![sample(0.9)], vec![]);
        let c = confusion(&threshold_classifier(0.5), &only_faces).unwrap();
        assert!(c.missing_class);
        assert_eq!(c.fp_rate, 0.0);
        assert!(confusion(&threshold_classifier(0.5), &LabeledDataset::default()).is_err());
    }

    #[test]
    fn confusion_hand_tally() {
        let scores = [0.9, 0.35, 0.6, 0.2, 0.8, 0.45, 0.1, 0.7, 0.3, 0.55];
        let labels = [
            Label::Face, Label::Face, Label::Clutter, Label::Clutter, Label::Face,
            Label::Clutter, Label::Clutter, Label::Face, Label::Face, Label::Clutter,
        ];
        let ds = LabeledDataset::new(scores.iter().map(|&s| sample(s)).collect(), labels.to_vec()).unwrap();
        let c = confusion(&threshold_classifier(0.5), &ds).unwrap();
        // Faces 0.9 0.35 0.8 0.7 0.3 -> TP 3, FN 2. Clutter 0.6 0.2 0.45 0.1 0.55 -> FP 2, TN 3.
        assert_eq!((c.true_positives, c.false_negatives), (3, 2));
        assert_eq!((c.false_positives, c.true_negatives), (2, 3));
        assert_eq!(c.fp_rate, 0.4);
        assert_eq!(c.fn_rate, 0.4);
        assert_eq!(c.accuracy, 0.6);
    }

    #[test]
    fn roc_examples() {
        let sep = [(0.9, Label::Face), (0.8, Label::Face), (0.1, Label::Clutter)];
        let curve = roc(&sep).unwrap();
        assert!(curve.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));

        let same = [(0.5, Label::Face), (0.5, Label::Clutter), (0.5, Label::Face)];
        let curve = roc(&same).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!((curve[0].fpr, curve[0].tpr), (0.0, 0.0));
        assert_eq!((curve[1].fpr, curve[1].tpr), (1.0, 1.0));

        assert!(roc(&[(0.1, Label::Face)]).is_err());
    }

    /// Every threshold in the scores (and both infinities), evaluated
    /// directly.
    fn brute_force_points(scores: &[(f64, Label)]) -> HashSet<(u64, u64)> {
        let n_pos = scores.iter().filter(|s| s.1.is_face()).count() as f64;
        let n_neg = scores.len() as f64 - n_pos;
        let mut ts: Vec<f64> = scores.iter().map(|s| s.0).collect();
        ts.push(f64::INFINITY);
        ts.push(f64::NEG_INFINITY);
        ts.iter()
            .map(|&t| {
                let tp = scores.iter().filter(|s| s.1.is_face() && s.0 > t).count() as f64;
                let fp = scores.iter().filter(|s| !s.1.is_face() && s.0 > t).count() as f64;
                ((fp / n_neg).to_bits(), (tp / n_pos).to_bits())
            })
            .collect()
    }

    #[test]
    fn roc_matches_enumeration() {
        let scores = [
            (0.3, Label::Face),
            (0.7, Label::Clutter),
            (0.7, Label::Face),
            (0.1, Label::Clutter),
            (0.9, Label::Face),
            (0.4, Label::Clutter),
        ];
        let curve = roc(&scores).unwrap();
        let got: HashSet<(u64, u64)> = curve.iter().map(|p| (p.fpr.to_bits(), p.tpr.to_bits())).collect();
        assert_eq!(got.len(), curve.len());
        assert_eq!(got, brute_force_points(&scores));
    }

    #[test]
    fn roc_rates_match_confusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n = rng.random_range(2..30);
            let mut samples = Vec::new();
            let mut labels = Vec::new();
            for i in 0..n {
                // Coarse grid so ties with theta happen.
                samples.push(sample(f64::from(rng.random_range(0..10u8)) / 10.0));
                labels.push(if i % 2 == 0 { Label::Face } else { Label::Clutter });
            }
            let ds = LabeledDataset::new(samples, labels).unwrap();
            let theta = f64::from(rng.random_range(0..10u8)) / 10.0;
            let c = threshold_classifier(theta);
            let report = evaluate(&c, &ds).unwrap();
            let (fpr, tpr) = rates_at(&report.curve, theta).unwrap();
            assert_eq!(fpr, report.confusion.fp_rate);
            let faces = report.confusion.true_positives + report.confusion.false_negatives;
            assert_eq!(tpr, report.confusion.true_positives as f64 / faces as f64);
            let first = report.curve.first().unwrap();
            let last = report.curve.last().unwrap();
            assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
            assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }
    }

    #[test]
    fn auc_of_perfect_and_chance() {
        let sep = [(0.9, Label::Face), (0.1, Label::Clutter)];
        assert_eq!(auc(&roc(&sep).unwrap()), 1.0);
        let same = [(0.5, Label::Face), (0.5, Label::Clutter)];
        assert_eq!(auc(&roc(&same).unwrap()), 0.5);
    }
}
