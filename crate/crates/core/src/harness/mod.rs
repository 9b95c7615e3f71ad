//! Detector sweeps: per-image evaluation, component-level pooling,
//! best-per-metric selection and plot-ready tables.

mod dataset;
mod figures;
mod table;

pub use dataset::{load_samples, read_manifest, ImageError, ManifestEntry, Sample};
pub use figures::{
    family_histograms, histogram, scatter_rows, write_scatter_csv, HistMetric, Histogram,
    HistogramBin, ScatterKind, ScatterRow,
};
pub use table::{
    best_per_metric, render_markdown, write_table_csv, MeanStd, Metric, Selection, TableRow,
};

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::GrayImage;
use crate::metrics::{
    classify_components, DetectionCounts, ImageEvaluation, MatchConfig, VerdictKind,
};
use crate::raster::{binarize, connected_components, BinaryMask, Connectivity};
use crate::swdetect::{threshold_votes, VoteMap, MAX_NU};

/// Binarization thresholds swept for probability-map detectors.
pub const TAU_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
/// Vote thresholds swept for sliding-window detectors.
pub const NU_GRID: [u32; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// Probability maps from a segmentation network, thresholded by tau.
    #[serde(rename = "FCN")]
    Fcn,
    /// Sliding-window vote maps, thresholded by nu.
    #[serde(rename = "SW")]
    Sw,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Fcn => "FCN",
            Family::Sw => "SW",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Tau(f64),
    Nu(u32),
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Tau(t) => write!(f, "{t}"),
            Threshold::Nu(n) => write!(f, "{n}"),
        }
    }
}

/// One detector configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub family: Family,
    /// Architecture label or window size.
    pub variant: String,
    pub threshold: Threshold,
    pub alpha: f64,
    #[serde(default)]
    pub connectivity: Connectivity,
}

impl DetectorSpec {
    pub fn new(
        family: Family,
        variant: impl Into<String>,
        threshold: Threshold,
        alpha: f64,
        connectivity: Connectivity,
    ) -> Result<Self> {
        let spec = Self {
            family,
            variant: variant.into(),
            threshold,
            alpha,
            connectivity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        MatchConfig::new(self.alpha)?;
        match (self.family, self.threshold) {
            (Family::Fcn, Threshold::Tau(t)) if (0.0..=1.0).contains(&t) => Ok(()),
            (Family::Sw, Threshold::Nu(n)) if (1..=MAX_NU).contains(&n) => Ok(()),
            (family, threshold) => Err(Error::InvalidParameter(format!(
                "threshold {threshold:?} is not legal for the {family} family"
            ))),
        }
    }

    /// `FCN_16s^0.6`, `SW_700^3`.
    pub fn label(&self) -> String {
        format!("{}_{}^{}", self.family, self.variant, self.threshold)
    }

    /// Thresholds a raw prediction into a detection mask.
    pub fn detect(&self, prediction: &GrayImage) -> Result<BinaryMask> {
        match self.threshold {
            Threshold::Tau(tau) => binarize(&prediction.to_probability_map(), tau),
            Threshold::Nu(nu) => threshold_votes(&VoteMap::from_gray(prediction), nu),
        }
    }

    pub fn evaluate_sample(&self, sample: &Sample) -> Result<ImageEvaluation> {
        let expected = sample.truth.mask.dims();
        if sample.prediction.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: sample.prediction.dims(),
            });
        }
        let mask = self.detect(&sample.prediction)?;
        let components = connected_components(&mask, self.connectivity);
        Ok(classify_components(
            sample.image_id.clone(),
            &components,
            &sample.truth,
            MatchConfig::new(self.alpha)?,
        ))
    }
}

/// Mean and sample standard deviation of a pool of component values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledStat {
    pub count: usize,
    /// `None` for an empty pool.
    pub mean: Option<f64>,
    /// `None` when fewer than two values were pooled.
    pub std: Option<f64>,
}

impl PooledStat {
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                count,
                mean: None,
                std: None,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = (count >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (count - 1) as f64).sqrt()
        });
        Self {
            count,
            mean: Some(mean),
            std,
        }
    }

    pub fn mean_std(&self) -> MeanStd {
        MeanStd {
            mean: self.mean,
            std: self.std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationPool {
    pub precision: PooledStat,
    pub recall: PooledStat,
    pub iou: PooledStat,
}

impl SegmentationPool {
    fn of(evals: &[ImageEvaluation], kind: VerdictKind) -> Self {
        let verdicts = || evals.iter().flat_map(move |e| e.verdicts_of(kind));
        let collect = |f: fn(&crate::metrics::ComponentVerdict) -> f64| -> Vec<f64> {
            verdicts().map(f).collect()
        };
        Self {
            precision: PooledStat::from_values(&collect(|v| v.seg_precision)),
            recall: PooledStat::from_values(&collect(|v| v.seg_recall)),
            iou: PooledStat::from_values(&collect(|v| v.iou)),
        }
    }
}

/// Pooled results of one detector over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub label: String,
    pub spec: DetectorSpec,
    pub images: usize,
    pub counts: DetectionCounts,
    /// Split components across all images.
    pub split_count: usize,
    /// Images with at least one split component.
    pub images_with_splits: usize,
    pub fa_count: usize,
    pub true_positive: SegmentationPool,
    pub split: SegmentationPool,
    pub false_alarm_na: PooledStat,
    pub false_alarm_nd: PooledStat,
    /// Images whose single-pixel bud had its diameter clamped to 1.
    pub clamped_truths: usize,
}

impl SweepSummary {
    /// Pools per-component metrics over all images (not per-image means).
    pub fn from_evaluations(spec: &DetectorSpec, evals: &[ImageEvaluation]) -> Result<Self> {
        if let Some(e) = evals.iter().find(|e| e.alpha != spec.alpha) {
            return Err(Error::InconsistentConfig(format!(
                "image {} evaluated at alpha {} for a detector at alpha {}",
                e.image_id, e.alpha, spec.alpha
            )));
        }
        let counts = DetectionCounts::from_evaluations(evals)?;
        let fa: Vec<_> = evals
            .iter()
            .flat_map(|e| e.verdicts_of(VerdictKind::FalseAlarm))
            .collect();
        let na: Vec<f64> = fa.iter().map(|v| v.normalized_area).collect();
        let nd: Vec<f64> = fa.iter().map(|v| v.normalized_distance).collect();
        Ok(Self {
            label: spec.label(),
            spec: spec.clone(),
            images: evals.len(),
            counts,
            split_count: counts.splits,
            images_with_splits: evals.iter().filter(|e| e.splits() > 0).count(),
            fa_count: counts.false_alarms,
            true_positive: SegmentationPool::of(evals, VerdictKind::TruePositive),
            split: SegmentationPool::of(evals, VerdictKind::Split),
            false_alarm_na: PooledStat::from_values(&na),
            false_alarm_nd: PooledStat::from_values(&nd),
            clamped_truths: evals.iter().filter(|e| e.truth_diameter_clamped).count(),
        })
    }

    /// Summary table row; `S` counts images with splits.
    pub fn table_row(&self) -> TableRow {
        TableRow {
            label: self.label.clone(),
            family: self.spec.family,
            p_d: self.counts.p_d,
            r_d: self.counts.r_d,
            f1: self.counts.f1,
            splits: self.images_with_splits,
            ps_tp: self.true_positive.precision.mean_std(),
            rs_tp: self.true_positive.recall.mean_std(),
            iou_tp: self.true_positive.iou.mean_std(),
            ps_s: self.split.precision.mean_std(),
            rs_s: self.split.recall.mean_std(),
            iou_s: self.split.iou.mean_std(),
            na: self.false_alarm_na.mean_std(),
            nd: self.false_alarm_nd.mean_std(),
        }
    }
}

/// A detector's summary plus the per-image evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorEvaluation {
    pub summary: SweepSummary,
    pub images: Vec<ImageEvaluation>,
    pub errors: Vec<ImageError>,
}

impl DetectorEvaluation {
    pub fn is_partial(&self) -> bool {
        !self.errors.is_empty()
    }
}

/// Evaluates one detector on every sample. Images that fail (e.g. size
/// mismatch) are recorded in `errors` and left out of the summary.
pub fn evaluate_detector(spec: &DetectorSpec, samples: &[Sample]) -> Result<DetectorEvaluation> {
    spec.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter("dataset has no images".into()));
    }
    let results: Vec<Result<ImageEvaluation>> = samples
        .par_iter()
        .map(|s| spec.evaluate_sample(s))
        .collect();
    let mut images = Vec::with_capacity(samples.len());
    let mut errors = Vec::new();
    for (sample, result) in samples.iter().zip(results) {
        match result {
            Ok(e) => images.push(e),
            Err(e) => errors.push(ImageError::new(&sample.image_id, &e)),
        }
    }
    Ok(DetectorEvaluation {
        summary: SweepSummary::from_evaluations(spec, &images)?,
        images,
        errors,
    })
}
