//! Correspondence, segmentation and localization metrics of one image's
//! detected components against its single true bud.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Component, GroundTruth};

pub const DEFAULT_ALPHA: f64 = 0.5;

/// IoU threshold separating true positives from other detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    alpha: f64,
}

impl MatchConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self { alpha })
        } else {
            Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    TruePositive,
    /// Overlaps the bud but with IoU below alpha.
    Split,
    /// No overlap with the bud.
    FalseAlarm,
}

impl VerdictKind {
    pub fn from_iou(iou: f64, alpha: f64) -> Self {
        if iou >= alpha {
            VerdictKind::TruePositive
        } else if iou > 0.0 {
            VerdictKind::Split
        } else {
            VerdictKind::FalseAlarm
        }
    }
}

/// Pixel counts shared by every overlap ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overlap {
    pub intersection: usize,
    pub component_area: usize,
    pub truth_area: usize,
}

impl Overlap {
    pub fn between(component: &Component, truth: &GroundTruth) -> Self {
        let intersection = component
            .pixels
            .iter()
            .filter(|&&(r, c)| truth.mask.contains(r, c))
            .count();
        Self {
            intersection,
            component_area: component.area(),
            truth_area: truth.area,
        }
    }

    pub fn union(&self) -> usize {
        self.component_area + self.truth_area - self.intersection
    }

    pub fn iou(&self) -> f64 {
        self.intersection as f64 / self.union() as f64
    }

    pub fn precision(&self) -> f64 {
        self.intersection as f64 / self.component_area as f64
    }

    pub fn recall(&self) -> f64 {
        self.intersection as f64 / self.truth_area as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScores {
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
}

pub fn iou(component: &Component, truth: &GroundTruth) -> f64 {
    Overlap::between(component, truth).iou()
}

/// Pixel-wise precision `|c ∩ t| / |c|`, recall `|c ∩ t| / |t|` and IoU.
pub fn seg_precision_recall(component: &Component, truth: &GroundTruth) -> SegmentationScores {
    let o = Overlap::between(component, truth);
    SegmentationScores {
        precision: o.precision(),
        recall: o.recall(),
        iou: o.iou(),
    }
}

/// Component area in units of the true bud's area.
pub fn normalized_area(component: &Component, truth: &GroundTruth) -> f64 {
    component.area() as f64 / truth.area as f64
}

/// Centroid distance in units of the true bud's diameter.
pub fn normalized_distance(component: &Component, truth: &GroundTruth) -> f64 {
    let dr = component.centroid.0 - truth.centroid.0;
    let dc = component.centroid.1 - truth.centroid.1;
    dr.hypot(dc) / truth.normalizing_diameter()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentVerdict {
    pub component_id: usize,
    pub kind: VerdictKind,
    pub area: usize,
    pub intersection: usize,
    pub iou: f64,
    pub seg_precision: f64,
    pub seg_recall: f64,
    pub normalized_area: f64,
    pub normalized_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEvaluation {
    pub image_id: String,
    pub alpha: f64,
    pub truth_area: usize,
    pub truth_diameter_clamped: bool,
    pub verdicts: Vec<ComponentVerdict>,
    /// The bud has no true-positive component.
    pub false_negative: bool,
}

impl ImageEvaluation {
    pub fn count(&self, kind: VerdictKind) -> usize {
        self.verdicts.iter().filter(|v| v.kind == kind).count()
    }

    pub fn true_positives(&self) -> usize {
        self.count(VerdictKind::TruePositive)
    }

    pub fn splits(&self) -> usize {
        self.count(VerdictKind::Split)
    }

    pub fn false_alarms(&self) -> usize {
        self.count(VerdictKind::FalseAlarm)
    }

    pub fn verdicts_of(&self, kind: VerdictKind) -> impl Iterator<Item = &ComponentVerdict> {
        self.verdicts.iter().filter(move |v| v.kind == kind)
    }
}

/// Labels every component as true positive, split or false alarm.
pub fn classify_components(
    image_id: impl Into<String>,
    components: &[Component],
    truth: &GroundTruth,
    cfg: MatchConfig,
) -> ImageEvaluation {
    let verdicts: Vec<ComponentVerdict> = components
        .iter()
        .map(|c| {
            let o = Overlap::between(c, truth);
            let iou = o.iou();
            let kind = VerdictKind::from_iou(iou, cfg.alpha);
            let (seg_precision, seg_recall) = match kind {
                VerdictKind::FalseAlarm => (0.0, 0.0),
                _ => (o.precision(), o.recall()),
            };
            ComponentVerdict {
                component_id: c.id,
                kind,
                area: o.component_area,
                intersection: o.intersection,
                iou,
                seg_precision,
                seg_recall,
                normalized_area: normalized_area(c, truth),
                normalized_distance: normalized_distance(c, truth),
            }
        })
        .collect();
    let false_negative = !verdicts.iter().any(|v| v.kind == VerdictKind::TruePositive);
    ImageEvaluation {
        image_id: image_id.into(),
        alpha: cfg.alpha,
        truth_area: truth.area,
        truth_diameter_clamped: truth.diameter_clamped,
        verdicts,
        false_negative,
    }
}

/// Component-level detection counts and their precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub splits: usize,
    pub false_alarms: usize,
    pub p_d: f64,
    pub r_d: f64,
    pub f1: f64,
}

impl DetectionCounts {
    /// Zero denominators give zero rates.
    pub fn from_totals(tp: usize, splits: usize, false_alarms: usize, fn_: usize) -> Self {
        let fp = splits + false_alarms;
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let p_d = ratio(tp, tp + fp);
        let r_d = ratio(tp, tp + fn_);
        let f1 = if p_d + r_d == 0.0 {
            0.0
        } else {
            2.0 * p_d * r_d / (p_d + r_d)
        };
        Self {
            tp,
            fp,
            fn_,
            splits,
            false_alarms,
            p_d,
            r_d,
            f1,
        }
    }

    /// Sums counts over images evaluated at one alpha.
    pub fn from_evaluations(evals: &[ImageEvaluation]) -> Result<Self> {
        if let Some(first) = evals.first() {
            if let Some(other) = evals.iter().find(|e| e.alpha != first.alpha) {
                return Err(Error::InconsistentConfig(format!(
                    "evaluations mix alpha {} and {}",
                    first.alpha, other.alpha
                )));
            }
        }
        let (mut tp, mut splits, mut fa, mut fn_) = (0, 0, 0, 0);
        for e in evals {
            tp += e.true_positives();
            splits += e.splits();
            fa += e.false_alarms();
            fn_ += usize::from(e.false_negative);
        }
        Ok(Self::from_totals(tp, splits, fa, fn_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{BinaryMask, Connectivity, Pixel};
    use proptest::prelude::*;

    fn block(r0: usize, c0: usize, h: usize, w: usize) -> Vec<Pixel> {
        (r0..r0 + h)
            .flat_map(|r| (c0..c0 + w).map(move |c| (r, c)))
            .collect()
    }

    fn truth_4x4() -> GroundTruth {
        let mask = BinaryMask::from_pixels(16, 16, block(0, 0, 4, 4)).unwrap();
        GroundTruth::from_mask(mask, Connectivity::Eight).unwrap()
    }

    fn comp(id: usize, pixels: Vec<Pixel>) -> Component {
        Component::from_pixels(id, pixels).unwrap()
    }

    #[test]
    fn alpha_range() {
        assert!(MatchConfig::new(0.0).is_err());
        assert!(MatchConfig::new(1.01).is_err());
        assert_eq!(MatchConfig::new(1.0).unwrap().alpha(), 1.0);
        assert_eq!(MatchConfig::default().alpha(), 0.5);
    }

    #[test]
    fn iou_examples() {
        let t = truth_4x4();
        assert_eq!(iou(&comp(0, block(0, 0, 4, 4)), &t), 1.0);
        assert_eq!(iou(&comp(0, block(8, 8, 2, 2)), &t), 0.0);
        // Shifted one column: |∩| = 12, |∪| = 20.
        let shifted = comp(0, block(0, 1, 4, 4));
        let o = Overlap::between(&shifted, &t);
        assert_eq!((o.intersection, o.union()), (12, 20));
        assert_eq!(iou(&shifted, &t), 0.6);
    }

    #[test]
    fn segmentation_examples() {
        let t = truth_4x4();
        let half = seg_precision_recall(&comp(0, block(0, 0, 2, 4)), &t);
        assert_eq!((half.precision, half.recall), (1.0, 0.5));
        let same = seg_precision_recall(&comp(0, block(0, 0, 4, 4)), &t);
        assert_eq!((same.precision, same.recall, same.iou), (1.0, 1.0, 1.0));
        let shifted = seg_precision_recall(&comp(0, block(0, 1, 4, 4)), &t);
        assert_eq!(
            (shifted.precision, shifted.recall, shifted.iou),
            (0.75, 0.75, 0.6)
        );
    }

    #[test]
    fn normalized_area_examples() {
        let t = truth_4x4();
        assert_eq!(normalized_area(&comp(0, vec![(9, 9), (9, 10)]), &t), 0.125);
        assert_eq!(normalized_area(&comp(0, block(0, 0, 4, 4)), &t), 1.0);

        let big = BinaryMask::from_pixels(40, 40, block(0, 0, 4, 4)).unwrap();
        let big = GroundTruth::from_mask(big, Connectivity::Eight).unwrap();
        let c = comp(0, block(10, 0, 29, 32));
        assert_eq!(c.area(), 58 * 16);
        assert_eq!(normalized_area(&c, &big), 58.0);
    }

    #[test]
    fn normalized_distance_examples() {
        let t = truth_4x4();
        assert_eq!(normalized_distance(&comp(0, block(0, 0, 4, 4)), &t), 0.0);
        let nd = normalized_distance(&comp(0, vec![(5, 5)]), &t);
        assert!((nd - 7.0 / 6.0).abs() < 1e-12);

        // Horizontal run of 11 pixels: diameter 10, centroid (0, 5).
        let run = BinaryMask::from_pixels(40, 3, (0..11).map(|c| (0, c))).unwrap();
        let run = GroundTruth::from_mask(run, Connectivity::Eight).unwrap();
        assert_eq!(run.diameter, 10.0);
        assert!((normalized_distance(&comp(0, vec![(0, 16)]), &run) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn classify_examples() {
        let t = truth_4x4();
        let cfg = MatchConfig::default();

        let exact = classify_components("a", &[comp(0, block(0, 0, 4, 4))], &t, cfg);
        assert_eq!(exact.true_positives(), 1);
        assert!(!exact.false_negative);

        let none = classify_components("b", &[], &t, cfg);
        assert!(none.verdicts.is_empty());
        assert!(none.false_negative);

        // 1-pixel overlap: block rows 3..5, cols 3..5 touches (3,3) only.
        let corner = comp(1, block(3, 3, 2, 2));
        assert_eq!(Overlap::between(&corner, &t).union(), 19);
        let comps = [
            comp(0, block(0, 1, 4, 4)),
            corner,
            comp(2, block(10, 10, 2, 2)),
        ];
        let e = classify_components("c", &comps, &t, cfg);
        let kinds: Vec<_> = e.verdicts.iter().map(|v| v.kind).collect();
        assert_eq!(
            kinds,
            [
                VerdictKind::TruePositive,
                VerdictKind::Split,
                VerdictKind::FalseAlarm
            ]
        );
        assert!((e.verdicts[1].iou - 1.0 / 19.0).abs() < 1e-15);
        assert!(!e.false_negative);
        let fa = &e.verdicts[2];
        assert_eq!((fa.seg_precision, fa.seg_recall), (0.0, 0.0));
        assert_eq!(fa.normalized_area, 0.25);
    }

    #[test]
    fn iou_equal_to_alpha_is_true_positive() {
        let t = truth_4x4();
        let half = comp(0, block(0, 0, 2, 4));
        let e = classify_components("x", &[half], &t, MatchConfig::new(0.5).unwrap());
        assert_eq!(e.verdicts[0].kind, VerdictKind::TruePositive);
    }

    #[test]
    fn counts_examples() {
        let c = DetectionCounts::from_totals(124, 10, 6, 16);
        assert_eq!(c.fp, 16);
        for v in [c.p_d, c.r_d, c.f1] {
            assert_eq!((v * 1000.0).round() / 1000.0, 0.886);
        }

        let t = truth_4x4();
        let cfg = MatchConfig::default();
        let empty: Vec<_> = (0..10)
            .map(|i| classify_components(i.to_string(), &[], &t, cfg))
            .collect();
        let c = DetectionCounts::from_evaluations(&empty).unwrap();
        assert_eq!((c.p_d, c.r_d, c.f1, c.fn_), (0.0, 0.0, 0.0, 10));

        let perfect: Vec<_> = (0..5)
            .map(|i| classify_components(i.to_string(), &[comp(0, block(0, 0, 4, 4))], &t, cfg))
            .collect();
        let c = DetectionCounts::from_evaluations(&perfect).unwrap();
        assert_eq!((c.p_d, c.r_d, c.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn counts_reject_mixed_alpha() {
        let t = truth_4x4();
        let a = classify_components("a", &[], &t, MatchConfig::new(0.5).unwrap());
        let b = classify_components("b", &[], &t, MatchConfig::new(0.1).unwrap());
        assert!(matches!(
            DetectionCounts::from_evaluations(&[a, b]),
            Err(Error::InconsistentConfig(_))
        ));
    }

    fn arb_components() -> impl Strategy<Value = Vec<Component>> {
        proptest::collection::vec((0usize..14, 0usize..14, 1usize..6, 1usize..6), 0..6).prop_map(
            |blocks| {
                blocks
                    .into_iter()
                    .enumerate()
                    .map(|(i, (r, c, h, w))| comp(i, block(r, c, h, w)))
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn taxonomy_across_alpha(comps in arb_components()) {
            let t = truth_4x4();
            let alphas = [0.1, 0.3, 0.5, 0.7, 1.0];
            let evals: Vec<_> = alphas
                .iter()
                .map(|&a| classify_components("p", &comps, &t, MatchConfig::new(a).unwrap()))
                .collect();
            for pair in evals.windows(2) {
                let (lo, hi) = (&pair[0], &pair[1]);
                prop_assert_eq!(lo.true_positives() + lo.splits(), hi.true_positives() + hi.splits());
                prop_assert_eq!(lo.false_alarms(), hi.false_alarms());
                prop_assert!(hi.true_positives() <= lo.true_positives());
                prop_assert!(hi.splits() >= lo.splits());
                for (a, b) in lo.verdicts.iter().zip(&hi.verdicts) {
                    if b.kind == VerdictKind::TruePositive {
                        prop_assert_eq!(a.kind, VerdictKind::TruePositive);
                    }
                }
            }
            for e in &evals {
                prop_assert_eq!(e.false_negative, e.true_positives() == 0);
                for v in &e.verdicts {
                    prop_assert!(v.iou <= v.seg_precision.min(v.seg_recall) + 1e-15);
                    if v.intersection > 0 {
                        let (p, r) = (v.seg_precision, v.seg_recall);
                        prop_assert!((v.iou - p * r / (p + r - p * r)).abs() <= 1e-12);
                    }
                }
            }
        }

        #[test]
        fn nd_invariant_under_translation_and_scaling(
            comps in arb_components(),
            dr in 0usize..10,
            dc in 0usize..10,
            s in 1usize..4,
        ) {
            use crate::raster::{centroid, diameter};
            let t = truth_4x4();
            let map = |p: &Pixel| ((p.0 + dr) * s, (p.1 + dc) * s);
            // A scaled bud is no longer connected, so assemble it by hand.
            let pixels: Vec<Pixel> = block(0, 0, 4, 4).iter().map(map).collect();
            let mask = BinaryMask::from_pixels(64, 64, pixels.iter().copied()).unwrap();
            let moved_truth = GroundTruth {
                area: pixels.len(),
                centroid: centroid(&pixels).unwrap(),
                diameter: diameter(&mask).unwrap(),
                diameter_clamped: false,
                mask,
            };
            for c in &comps {
                let moved = comp(c.id, c.pixels.iter().map(map).collect());
                let a = normalized_distance(c, &t);
                let b = normalized_distance(&moved, &moved_truth);
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn counts_add_over_concatenation(
            a in proptest::collection::vec(arb_components(), 0..6),
            b in proptest::collection::vec(arb_components(), 0..6),
        ) {
            let t = truth_4x4();
            let cfg = MatchConfig::default();
            let eval = |sets: &[Vec<Component>]| -> Vec<ImageEvaluation> {
                sets.iter().map(|c| classify_components("i", c, &t, cfg)).collect()
            };
            let (ea, eb) = (eval(&a), eval(&b));
            let joined: Vec<_> = ea.iter().chain(&eb).cloned().collect();
            let ca = DetectionCounts::from_evaluations(&ea).unwrap();
            let cb = DetectionCounts::from_evaluations(&eb).unwrap();
            let both = DetectionCounts::from_evaluations(&joined).unwrap();
            prop_assert_eq!(both.tp, ca.tp + cb.tp);
            prop_assert_eq!(both.splits, ca.splits + cb.splits);
            prop_assert_eq!(both.false_alarms, ca.false_alarms + cb.false_alarms);
            prop_assert_eq!(both.fn_, ca.fn_ + cb.fn_);
            let expect = DetectionCounts::from_totals(
                both.tp, both.splits, both.false_alarms, both.fn_,
            );
            prop_assert_eq!(both, expect);
        }
    }
}
