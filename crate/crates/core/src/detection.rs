//! Face detection in full pictures.
//!
//! Square windows at several scales are cut from the picture, optionally
//! skipped when they contain too little skin, preprocessed exactly like
//! training images and labelled by the composite rule: a window is a face
//! only if every member classifier says so. A positive window survives only
//! when enough positive neighbours at the same scale agree, and overlapping
//! survivors are merged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{Label, TrainedClassifier};
use crate::imaging::{ColorImage, GrayImage, ImageVector, Picture, Preprocessor};

/// Smallest window side the detector accepts.
pub const MIN_WINDOW_SIDE: usize = 16;

/// Labels `x` as a face iff every classifier does (the minimum of the
/// individual `±1` labels).
pub fn composite_classify(x: &ImageVector, classifiers: &[TrainedClassifier]) -> Result<Label> {
    if classifiers.is_empty() {
        return Err(Error::argument("composite rule needs at least one classifier"));
    }
    let mut label = Label::Face;
    for c in classifiers {
        if c.classify(x)? == Label::Clutter {
            label = Label::Clutter;
        }
    }
    Ok(label)
}

/// A candidate square window.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionWindow {
    pub x: usize,
    pub y: usize,
    pub side: usize,
    /// `(N, g - θ)` for each classifier, in classifier order.
    pub margins: Vec<(usize, f64)>,
}

impl DetectionWindow {
    pub fn is_positive(&self) -> bool {
        self.margins.iter().all(|&(_, m)| m > 0.0)
    }
}

/// An accepted window together with the number of agreeing neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub x: usize,
    pub y: usize,
    pub side: usize,
    pub support: usize,
}

/// Intersection over union of two square boxes.
pub fn iou(a: (usize, usize, usize), b: (usize, usize, usize)) -> f64 {
    let (ax, ay, aside) = a;
    let (bx, by, bside) = b;
    let ix = (ax + aside).min(bx + bside).saturating_sub(ax.max(bx));
    let iy = (ay + aside).min(by + bside).saturating_sub(ay.max(by));
    let inter = (ix * iy) as f64;
    let union = (aside * aside + bside * bside) as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Window sides `round(min_side · scale_step^k)` up to `max_side`.
pub fn window_sides(min_side: usize, max_side: usize, scale_step: f64) -> Result<Vec<usize>> {
    if min_side > max_side {
        return Err(Error::argument("min_side exceeds max_side"));
    }
    if !(scale_step > 1.0 && scale_step.is_finite()) {
        return Err(Error::argument("scale_step must be greater than 1"));
    }
    let mut sides = Vec::new();
    let mut k = 0i32;
    loop {
        let s = (min_side as f64 * scale_step.powi(k)).round() as usize;
        if s > max_side {
            break;
        }
        if sides.last() != Some(&s) {
            sides.push(s);
        }
        k += 1;
    }
    Ok(sides)
}

/// Stride used for windows of the given side.
pub fn stride_for(side: usize, stride_frac: f64) -> usize {
    ((stride_frac * side as f64).round() as usize).max(1)
}

/// Enumerates all windows, scale by scale, on a regular grid with stride
/// `max(1, round(stride_frac · side))`. Pictures smaller than `min_side`
/// yield nothing.
pub fn sliding_windows(
    width: usize,
    height: usize,
    min_side: usize,
    max_side: usize,
    scale_step: f64,
    stride_frac: f64,
) -> Result<Vec<DetectionWindow>> {
    if !(stride_frac > 0.0 && stride_frac <= 1.0) {
        return Err(Error::argument("stride_frac must lie in (0, 1]"));
    }
    let mut out = Vec::new();
    for side in window_sides(min_side, max_side, scale_step)? {
        if side > width || side > height {
            break;
        }
        let stride = stride_for(side, stride_frac);
        for y in (0..=height - side).step_by(stride) {
            for x in (0..=width - side).step_by(stride) {
                out.push(DetectionWindow {
                    x,
                    y,
                    side,
                    margins: Vec::new(),
                });
            }
        }
    }
    Ok(out)
}

/// Decides whether an RGB pixel (0–255 scale) is skin.
pub trait SkinRule: Sync {
    fn is_skin(&self, rgb: [u8; 3]) -> bool;
}

/// `R>95, G>40, B>20, max−min>15, |R−G|>15, R>G, R>B`.
#[derive(Clone, Copy, Debug, Default)]
pub struct RgbSkinRule;

impl SkinRule for RgbSkinRule {
    fn is_skin(&self, [r, g, b]: [u8; 3]) -> bool {
        let (r, g, b) = (i32::from(r), i32::from(g), i32::from(b));
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        r > 95 && g > 40 && b > 20 && max - min > 15 && (r - g).abs() > 15 && r > g && r > b
    }
}

/// Per-pixel skin mask; `None` (grayscale input) means every pixel passes.
pub fn skin_prescreen<R: SkinRule + ?Sized>(color: Option<&ColorImage>, rule: &R) -> Option<Vec<bool>> {
    color.map(|c| c.pixels.iter().map(|&p| rule.is_skin(p)).collect())
}

/// Summed-area table over a boolean mask, for O(1) window counts.
struct SkinIntegral {
    width: usize,
    table: Vec<usize>,
}

impl SkinIntegral {
    fn new(mask: &[bool], width: usize, height: usize) -> Self {
        let w1 = width + 1;
        let mut table = vec![0usize; w1 * (height + 1)];
        for y in 0..height {
            let mut row = 0;
            for x in 0..width {
                row += usize::from(mask[y * width + x]);
                table[(y + 1) * w1 + x + 1] = table[y * w1 + x + 1] + row;
            }
        }
        SkinIntegral { width, table }
    }

    fn count(&self, x: usize, y: usize, side: usize) -> usize {
        let w1 = self.width + 1;
        let at = |xx: usize, yy: usize| self.table[yy * w1 + xx];
        at(x + side, y + side) + at(x, y) - at(x + side, y) - at(x, y + side)
    }
}

/// Minimum neighbour count for a window: `max(1, ceil(support_frac · side))`.
pub fn required_support(side: usize, support_frac: f64) -> usize {
    // The small slack keeps exact products such as 0.02 · 100 at 2.
    ((support_frac * side as f64 - 1e-9).ceil() as usize).max(1)
}

/// Keeps positives that have at least [`required_support`] other positives
/// of the same side whose corners lie within `±2·stride` on both axes.
pub fn verify_adjacency(
    positives: &[DetectionWindow],
    stride: usize,
    support_frac: f64,
) -> Vec<Detection> {
    let radius = 2 * stride;
    positives
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            let support = positives
                .iter()
                .enumerate()
                .filter(|&(j, o)| {
                    j != i && o.side == w.side && o.x.abs_diff(w.x) <= radius && o.y.abs_diff(w.y) <= radius
                })
                .count();
            (support >= required_support(w.side, support_frac)).then_some(Detection {
                x: w.x,
                y: w.y,
                side: w.side,
                support,
            })
        })
        .collect()
}

/// Greedy merge: visit detections by descending support (then larger side,
/// then smaller `(x, y)`) and drop any whose IoU with an already kept box
/// exceeds `iou_threshold`.
pub fn merge_detections(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order = dets.to_vec();
    order.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(b.side.cmp(&a.side))
            .then(a.x.cmp(&b.x))
            .then(a.y.cmp(&b.y))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept
            .iter()
            .all(|k| iou((k.x, k.y, k.side), (d.x, d.y, d.side)) <= iou_threshold)
        {
            kept.push(d);
        }
    }
    kept
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub min_side: usize,
    /// Defaults to the shorter picture side.
    pub max_side: Option<usize>,
    pub scale_step: f64,
    pub stride_frac: f64,
    pub support_frac: f64,
    pub use_skin: bool,
    /// Windows with a lower skin fraction are skipped.
    pub min_skin_fraction: f64,
    pub merge_iou: f64,
    pub preprocess: Preprocessor,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            min_side: 32,
            max_side: None,
            scale_step: 1.25,
            stride_frac: 0.1,
            support_frac: 0.02,
            use_skin: true,
            min_skin_fraction: 0.3,
            merge_iou: 0.3,
            preprocess: Preprocessor::default(),
        }
    }
}

/// Composite sliding-window detector.
pub struct Detector<R: SkinRule = RgbSkinRule> {
    classifiers: Vec<TrainedClassifier>,
    config: DetectorConfig,
    skin_rule: R,
}

impl Detector<RgbSkinRule> {
    pub fn new(classifiers: Vec<TrainedClassifier>, config: DetectorConfig) -> Result<Self> {
        Self::with_skin_rule(classifiers, config, RgbSkinRule)
    }
}

impl<R: SkinRule> Detector<R> {
    pub fn with_skin_rule(
        classifiers: Vec<TrainedClassifier>,
        config: DetectorConfig,
        skin_rule: R,
    ) -> Result<Self> {
        if classifiers.is_empty() {
            return Err(Error::argument("detector needs at least one classifier"));
        }
        let pre = config.preprocess;
        for c in &classifiers {
            if c.mask.width() != pre.width || c.mask.height() != pre.height {
                return Err(Error::DimensionMismatch {
                    expected: pre.width * pre.height,
                    found: c.mask.width() * c.mask.height(),
                });
            }
        }
        if config.min_side < MIN_WINDOW_SIDE {
            return Err(Error::argument(format!(
                "min_side must be at least {MIN_WINDOW_SIDE}"
            )));
        }
        Ok(Detector {
            classifiers,
            config,
            skin_rule,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Margins of every member classifier on one window.
    pub fn score_window(&self, gray: &GrayImage, w: &DetectionWindow) -> Result<Vec<(usize, f64)>> {
        let crop = gray.crop(w.x, w.y, w.side, w.side)?;
        let x = self.config.preprocess.prepare(&crop)?;
        self.classifiers
            .iter()
            .map(|c| Ok((c.mask.size(), c.margin(&x)?)))
            .collect()
    }

    /// All scored windows that pass the skin prescreen.
    pub fn scan(&self, picture: &Picture) -> Result<Vec<DetectionWindow>> {
        let gray = &picture.gray;
        let (width, height) = (gray.width(), gray.height());
        let max_side = self.config.max_side.unwrap_or(width.min(height));
        if self.config.min_side > max_side {
            return Ok(Vec::new());
        }
        let mut windows = sliding_windows(
            width,
            height,
            self.config.min_side,
            max_side,
            self.config.scale_step,
            self.config.stride_frac,
        )?;
        let skin = if self.config.use_skin {
            skin_prescreen(picture.color.as_ref(), &self.skin_rule)
                .map(|mask| SkinIntegral::new(&mask, width, height))
        } else {
            None
        };
        if let Some(skin) = &skin {
            let min_frac = self.config.min_skin_fraction;
            windows.retain(|w| skin.count(w.x, w.y, w.side) as f64 >= min_frac * (w.side * w.side) as f64);
        }
        windows
            .into_par_iter()
            .map(|mut w| {
                w.margins = self.score_window(gray, &w)?;
                Ok(w)
            })
            .collect()
    }

    pub fn detect(&self, picture: &Picture) -> Result<Vec<Detection>> {
        let windows = self.scan(picture)?;
        let mut accepted = Vec::new();
        let mut start = 0;
        while start < windows.len() {
            let side = windows[start].side;
            let end = windows[start..]
                .iter()
                .position(|w| w.side != side)
                .map_or(windows.len(), |n| start + n);
            let positives: Vec<DetectionWindow> = windows[start..end]
                .iter()
                .filter(|w| w.is_positive())
                .cloned()
                .collect();
            accepted.extend(verify_adjacency(
                &positives,
                stride_for(side, self.config.stride_frac),
                self.config.support_frac,
            ));
            start = end;
        }
        Ok(merge_detections(&accepted, self.config.merge_iou))
    }
}

/// Draws a one-pixel red outline for every detection on an RGB copy of the
/// picture.
pub fn annotate(picture: &Picture, dets: &[Detection]) -> image::RgbImage {
    let gray = &picture.gray;
    let (w, h) = (gray.width(), gray.height());
    let mut out = match &picture.color {
        Some(c) => image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            image::Rgb(c.pixels[y as usize * w + x as usize])
        }),
        None => {
            let bytes = gray.to_bytes();
            image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
                let v = bytes[y as usize * w + x as usize];
                image::Rgb([v, v, v])
            })
        }
    };
    let red = image::Rgb([255, 0, 0]);
    for d in dets {
        let (x1, y1) = (d.x + d.side - 1, d.y + d.side - 1);
        for x in d.x..=x1 {
            out.put_pixel(x as u32, d.y as u32, red);
            out.put_pixel(x as u32, y1 as u32, red);
        }
        for y in d.y..=y1 {
            out.put_pixel(d.x as u32, y as u32, red);
            out.put_pixel(x1 as u32, y as u32, red);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{FilterMask, RegionWeights};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn classifier(theta: f64) -> TrainedClassifier {
        let mask = FilterMask::new(2, 1, vec![0], vec![1]).unwrap();
        TrainedClassifier::new(mask, RegionWeights::default(), theta).unwrap()
    }

    #[test]
    fn composite_is_min_of_labels() {
        let x = ImageVector::new(vec![0.0, 0.5], 2, 1).unwrap();
        let (pos, neg) = (classifier(0.1), classifier(0.9));
        let all = [pos.clone(), pos.clone(), pos.clone()];
        assert_eq!(composite_classify(&x, &all).unwrap(), Label::Face);
        let mixed = [pos.clone(), neg, pos];
        assert_eq!(composite_classify(&x, &mixed).unwrap(), Label::Clutter);
        assert!(composite_classify(&x, &[]).is_err());
    }

    #[test]
    fn window_counts() {
        assert_eq!(sliding_windows(64, 64, 64, 64, 1.25, 0.1).unwrap().len(), 1);
        let w = sliding_windows(128, 128, 64, 64, 1.25, 0.5).unwrap();
        assert_eq!(w.len(), 9);
        let xs: Vec<usize> = w.iter().take(3).map(|w| w.x).collect();
        assert_eq!(xs, vec![0, 32, 64]);
        assert!(sliding_windows(100, 100, 120, 200, 1.25, 0.1).unwrap().is_empty());
        assert!(sliding_windows(100, 100, 10, 20, 1.0, 0.1).is_err());
        assert!(sliding_windows(100, 100, 10, 20, 1.5, 0.0).is_err());
    }

    #[test]
    fn sides_grow_geometrically() {
        assert_eq!(window_sides(64, 256, 1.25).unwrap(), vec![64, 80, 100, 125, 156, 195, 244]);
        assert_eq!(window_sides(16, 16, 2.0).unwrap(), vec![16]);
    }

    #[test]
    fn skin_rule_examples() {
        let rule = RgbSkinRule;
        assert!(rule.is_skin([200, 120, 90]));
        assert!(!rule.is_skin([0, 0, 255]));
        assert!(skin_prescreen(None, &rule).is_none());
        let img = ColorImage::new(2, 1, vec![[200, 120, 90], [0, 0, 255]]).unwrap();
        assert_eq!(skin_prescreen(Some(&img), &rule).unwrap(), vec![true, false]);
    }

    #[test]
    fn skin_integral_counts() {
        let mask = vec![true, false, true, true, true, false, false, true, true];
        let s = SkinIntegral::new(&mask, 3, 3);
        assert_eq!(s.count(0, 0, 3), 6);
        assert_eq!(s.count(1, 1, 2), 3);
        assert_eq!(s.count(0, 0, 1), 1);
    }

    fn window(x: usize, y: usize, side: usize) -> DetectionWindow {
        DetectionWindow {
            x,
            y,
            side,
            margins: vec![(2, 1.0)],
        }
    }

    #[test]
    fn support_requirements() {
        assert_eq!(required_support(100, 0.02), 2);
        assert_eq!(required_support(64, 0.02), 2);
        assert_eq!(required_support(20, 0.02), 1);
        assert_eq!(required_support(150, 0.02), 3);
    }

    #[test]
    fn isolated_positive_rejected() {
        assert!(verify_adjacency(&[window(10, 10, 100)], 2, 0.02).is_empty());
        // Neighbour too far away.
        let far = [window(10, 10, 100), window(15, 10, 100), window(10, 20, 100)];
        assert!(verify_adjacency(&far, 2, 0.02).is_empty());
    }

    #[test]
    fn dense_block_accepted() {
        let block: Vec<DetectionWindow> = (0..5)
            .flat_map(|r| (0..5).map(move |c| window(c * 2, r * 2, 100)))
            .collect();
        let out = verify_adjacency(&block, 2, 0.02);
        assert_eq!(out.len(), 25);
        let center = out.iter().find(|d| d.x == 4 && d.y == 4).unwrap();
        assert_eq!(center.support, 24);
        let corner = out.iter().find(|d| d.x == 0 && d.y == 0).unwrap();
        assert_eq!(corner.support, 8);
    }

    #[test]
    fn merge_examples() {
        assert!(merge_detections(&[], 0.3).is_empty());
        let a = Detection { x: 0, y: 0, side: 10, support: 2 };
        assert_eq!(merge_detections(&[a, a], 0.3), vec![a]);
        let b = Detection { x: 50, y: 50, side: 10, support: 1 };
        assert_eq!(merge_detections(&[a, b], 0.3).len(), 2);
        let c = Detection { x: 2, y: 0, side: 10, support: 5 };
        assert_eq!(merge_detections(&[a, c], 0.3), vec![c]);
    }

    #[test]
    fn iou_values() {
        assert_eq!(iou((0, 0, 10), (0, 0, 10)), 1.0);
        assert_eq!(iou((0, 0, 10), (10, 0, 10)), 0.0);
        assert!((iou((0, 0, 10), (5, 0, 10)) - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn composite_positives_are_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let members: Vec<TrainedClassifier> = [0.0, 0.1, -0.1].iter().map(|&t| classifier(t)).collect();
        for _ in 0..200 {
            let x = ImageVector::new(vec![rng.random(), rng.random()], 2, 1).unwrap();
            let every = members.iter().all(|c| c.classify(&x).unwrap() == Label::Face);
            assert_eq!(composite_classify(&x, &members).unwrap() == Label::Face, every);
        }
    }
}
