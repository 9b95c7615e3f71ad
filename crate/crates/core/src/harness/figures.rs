//! Plot-ready data: precision/recall scatter rows and unit-bin histograms
//! of per-detector means.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Family, TableRow};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScatterKind {
    /// Detection precision against detection recall.
    DetectionPr,
    /// Mean segmentation precision against recall over true positives.
    SegPrTp,
    /// Mean segmentation precision against recall over splits.
    SegPrSplit,
}

/// One dot: `x` is recall, `y` is precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub family: Family,
    pub label: String,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub x_std: Option<f64>,
    pub y_std: Option<f64>,
}

pub fn scatter_rows(rows: &[TableRow], kind: ScatterKind) -> Vec<ScatterRow> {
    rows.iter()
        .map(|r| {
            let (x, y, x_std, y_std) = match kind {
                ScatterKind::DetectionPr => (Some(r.r_d), Some(r.p_d), None, None),
                ScatterKind::SegPrTp => (r.rs_tp.mean, r.ps_tp.mean, r.rs_tp.std, r.ps_tp.std),
                ScatterKind::SegPrSplit => (r.rs_s.mean, r.ps_s.mean, r.rs_s.std, r.ps_s.std),
            };
            ScatterRow {
                family: r.family,
                label: r.label.clone(),
                x,
                y,
                x_std,
                y_std,
            }
        })
        .collect()
}

pub fn write_scatter_csv(rows: &[ScatterRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["family", "label", "x", "y", "x_std", "y_std"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.family.to_string(),
            r.label.clone(),
            opt(r.x),
            opt(r.y),
            opt(r.x_std),
            opt(r.y_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistMetric {
    /// Mean normalized area of false alarms.
    Na,
    /// Mean normalized distance of false alarms.
    Nd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub proportion: f64,
}

/// Unit-width bins `[k, k + 1)` from 0 up to the largest occupied bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub detectors: usize,
    pub bins: Vec<HistogramBin>,
}

/// Bins non-negative per-detector means.
pub fn histogram(means: &[f64]) -> Histogram {
    let index = |v: f64| v.max(0.0).floor() as usize;
    let n_bins = means.iter().map(|&v| index(v) + 1).max().unwrap_or(0);
    let mut counts = vec![0usize; n_bins];
    for &v in means {
        counts[index(v)] += 1;
    }
    let total = means.len() as f64;
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lower: k as f64,
            upper: (k + 1) as f64,
            count,
            proportion: count as f64 / total,
        })
        .collect();
    Histogram {
        bin_width: 1.0,
        detectors: means.len(),
        bins,
    }
}

/// One histogram per family over the detectors whose mean is defined.
pub fn family_histograms(rows: &[TableRow], metric: HistMetric) -> BTreeMap<Family, Histogram> {
    let mut means: BTreeMap<Family, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let m = match metric {
            HistMetric::Na => r.na.mean,
            HistMetric::Nd => r.nd.mean,
        };
        let entry = means.entry(r.family).or_default();
        entry.extend(m);
    }
    means.into_iter().map(|(f, v)| (f, histogram(&v))).collect()
}
