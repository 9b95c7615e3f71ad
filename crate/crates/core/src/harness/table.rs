//! Summary table rows, best-per-metric selection and Markdown rendering.
//!
//! Percentages print at one decimal, NA and ND at two. Winners are picked
//! on those printed values, so detectors that print the same are all marked.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Family;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// One detector's line in the summary table. Rates are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub family: Family,
    pub p_d: f64,
    pub r_d: f64,
    pub f1: f64,
    /// Images with at least one split.
    pub splits: usize,
    pub ps_tp: MeanStd,
    pub rs_tp: MeanStd,
    pub iou_tp: MeanStd,
    pub ps_s: MeanStd,
    pub rs_s: MeanStd,
    pub iou_s: MeanStd,
    pub na: MeanStd,
    pub nd: MeanStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "p_d")]
    DetectionPrecision,
    #[serde(rename = "r_d")]
    DetectionRecall,
    #[serde(rename = "f1")]
    F1,
    #[serde(rename = "s")]
    Splits,
    #[serde(rename = "p_s_tp")]
    TpPrecision,
    #[serde(rename = "r_s_tp")]
    TpRecall,
    #[serde(rename = "iou_tp")]
    TpIou,
    #[serde(rename = "p_s_s")]
    SplitPrecision,
    #[serde(rename = "r_s_s")]
    SplitRecall,
    #[serde(rename = "iou_s")]
    SplitIou,
    #[serde(rename = "na")]
    NormalizedArea,
    #[serde(rename = "nd")]
    NormalizedDistance,
}

enum Cell {
    Rate(f64),
    Count(usize),
    Percent(MeanStd),
    Ratio(MeanStd),
}

impl Metric {
    /// Column order of the summary table.
    pub const ALL: [Metric; 12] = [
        Metric::DetectionPrecision,
        Metric::DetectionRecall,
        Metric::F1,
        Metric::Splits,
        Metric::TpPrecision,
        Metric::TpRecall,
        Metric::TpIou,
        Metric::SplitPrecision,
        Metric::SplitRecall,
        Metric::SplitIou,
        Metric::NormalizedArea,
        Metric::NormalizedDistance,
    ];

    pub fn header(self) -> &'static str {
        match self {
            Metric::DetectionPrecision => "P_D",
            Metric::DetectionRecall => "R_D",
            Metric::F1 => "F1",
            Metric::Splits => "S",
            Metric::TpPrecision => "P_S^TP",
            Metric::TpRecall => "R_S^TP",
            Metric::TpIou => "IoU^TP",
            Metric::SplitPrecision => "P_S^S",
            Metric::SplitRecall => "R_S^S",
            Metric::SplitIou => "IoU^S",
            Metric::NormalizedArea => "NA",
            Metric::NormalizedDistance => "ND",
        }
    }

    pub fn lower_is_better(self) -> bool {
        matches!(
            self,
            Metric::Splits | Metric::NormalizedArea | Metric::NormalizedDistance
        )
    }

    fn cell(self, row: &TableRow) -> Cell {
        match self {
            Metric::DetectionPrecision => Cell::Rate(row.p_d),
            Metric::DetectionRecall => Cell::Rate(row.r_d),
            Metric::F1 => Cell::Rate(row.f1),
            Metric::Splits => Cell::Count(row.splits),
            Metric::TpPrecision => Cell::Percent(row.ps_tp),
            Metric::TpRecall => Cell::Percent(row.rs_tp),
            Metric::TpIou => Cell::Percent(row.iou_tp),
            Metric::SplitPrecision => Cell::Percent(row.ps_s),
            Metric::SplitRecall => Cell::Percent(row.rs_s),
            Metric::SplitIou => Cell::Percent(row.iou_s),
            Metric::NormalizedArea => Cell::Ratio(row.na),
            Metric::NormalizedDistance => Cell::Ratio(row.nd),
        }
    }

    /// Headline value: the rate, count, or pooled mean.
    pub fn value(self, row: &TableRow) -> Option<f64> {
        match self.cell(row) {
            Cell::Rate(v) => Some(v),
            Cell::Count(n) => Some(n as f64),
            Cell::Percent(m) | Cell::Ratio(m) => m.mean,
        }
    }

    /// The headline value at printed precision, as an integer.
    fn printed_key(self, row: &TableRow) -> Option<i64> {
        match self.cell(row) {
            Cell::Rate(v) => Some((v * 1000.0).round() as i64),
            Cell::Count(n) => Some(n as i64),
            Cell::Percent(m) => m.mean.map(|v| (v * 1000.0).round() as i64),
            Cell::Ratio(m) => m.mean.map(|v| (v * 100.0).round() as i64),
        }
    }

    pub fn format(self, row: &TableRow) -> String {
        fn pair(m: MeanStd, scale: f64, digits: usize) -> String {
            let Some(mean) = m.mean else {
                return "--".into();
            };
            let std = m
                .std
                .map_or_else(|| "--".to_string(), |s| format!("{:.*}", digits, s * scale));
            format!("{:.*}({})", digits, mean * scale, std)
        }
        match self.cell(row) {
            Cell::Rate(v) => format!("{:.1}", v * 100.0),
            Cell::Count(n) => n.to_string(),
            Cell::Percent(m) => pair(m, 100.0, 1),
            Cell::Ratio(m) => pair(m, 1.0, 2),
        }
    }
}

/// Winning detector labels per metric, within each family and overall.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Selection {
    pub family_best: BTreeMap<Family, BTreeMap<Metric, Vec<String>>>,
    pub overall_best: BTreeMap<Metric, Vec<String>>,
}

impl Selection {
    pub fn is_family_best(&self, family: Family, label: &str, metric: Metric) -> bool {
        self.family_best
            .get(&family)
            .and_then(|m| m.get(&metric))
            .is_some_and(|w| w.iter().any(|l| l == label))
    }

    pub fn is_overall_best(&self, label: &str, metric: Metric) -> bool {
        self.overall_best
            .get(&metric)
            .is_some_and(|w| w.iter().any(|l| l == label))
    }

    /// Labels that win at least one metric within their family.
    pub fn selected_labels(&self) -> BTreeSet<&str> {
        self.family_best
            .values()
            .flat_map(|m| m.values().flatten())
            .map(String::as_str)
            .collect()
    }
}

fn winners<'a>(rows: impl Iterator<Item = &'a TableRow>, metric: Metric) -> Vec<String> {
    let keyed: Vec<(i64, &str)> = rows
        .filter_map(|r| metric.printed_key(r).map(|k| (k, r.label.as_str())))
        .collect();
    let best = if metric.lower_is_better() {
        keyed.iter().map(|k| k.0).min()
    } else {
        keyed.iter().map(|k| k.0).max()
    };
    let mut out: Vec<String> = keyed
        .iter()
        .filter(|k| Some(k.0) == best)
        .map(|k| k.1.to_string())
        .collect();
    out.sort();
    out
}

/// Best detector per family and metric (highest, or lowest for S, NA and
/// ND), plus the best across families. Rows with an undefined mean do not
/// compete for that metric.
pub fn best_per_metric(rows: &[TableRow]) -> Result<Selection> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no detectors to compare".into()));
    }
    let mut labels = BTreeSet::new();
    if let Some(dup) = rows.iter().find(|r| !labels.insert(r.label.as_str())) {
        return Err(Error::InvalidParameter(format!(
            "detector label {} appears twice",
            dup.label
        )));
    }
    let families: BTreeSet<Family> = rows.iter().map(|r| r.family).collect();
    let mut selection = Selection::default();
    for family in families {
        let per_metric = Metric::ALL
            .iter()
            .map(|&m| (m, winners(rows.iter().filter(|r| r.family == family), m)))
            .filter(|(_, w)| !w.is_empty())
            .collect();
        selection.family_best.insert(family, per_metric);
    }
    selection.overall_best = Metric::ALL
        .iter()
        .map(|&m| (m, winners(rows.iter(), m)))
        .filter(|(_, w)| !w.is_empty())
        .collect();
    Ok(selection)
}

/// Markdown table: family winners in bold, overall winners also underlined.
pub fn render_markdown(rows: &[TableRow], selection: &Selection) -> String {
    let mut out = String::from("| Detector |");
    for m in Metric::ALL {
        let _ = write!(out, " {} |", m.header());
    }
    out.push_str("\n|:---|");
    for _ in Metric::ALL {
        out.push_str("---:|");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "| {} |", row.label);
        for m in Metric::ALL {
            let mut cell = m.format(row);
            if selection.is_family_best(row.family, &row.label, m) {
                cell = format!("**{cell}**");
                if selection.is_overall_best(&row.label, m) {
                    cell = format!("<u>{cell}</u>");
                }
            }
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

/// Full-precision CSV of the table; undefined values are empty fields.
pub fn write_table_csv(rows: &[TableRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "label".to_string(),
        "family".into(),
        "p_d".into(),
        "r_d".into(),
        "f1".into(),
        "s".into(),
    ];
    for name in [
        "p_s_tp", "r_s_tp", "iou_tp", "p_s_s", "r_s_s", "iou_s", "na", "nd",
    ] {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.label.clone(),
            r.family.to_string(),
            r.p_d.to_string(),
            r.r_d.to_string(),
            r.f1.to_string(),
            r.splits.to_string(),
        ];
        for m in [
            r.ps_tp, r.rs_tp, r.iou_tp, r.ps_s, r.rs_s, r.iou_s, r.na, r.nd,
        ] {
            rec.push(opt(m.mean));
            rec.push(opt(m.std));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
