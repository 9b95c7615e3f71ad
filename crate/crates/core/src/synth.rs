//! Synthetic single-bud scenes, perturbed detections with known outcomes,
//! and a deliberately naive pixel-set oracle for the metrics.
//!
//! A pixel belongs to a disk or ellipse iff its center lies inside the
//! shape. Everything is a pure function of the inputs and the seed.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_mask, write_pgm, GrayImage};
use crate::metrics::{ComponentVerdict, ImageEvaluation, VerdictKind};
use crate::raster::{BinaryMask, Component, Connectivity, GroundTruth, Pixel};

/// Largest raster side the oracle accepts.
pub const ORACLE_MAX_SIDE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BudShape {
    Disk { radius: f64 },
    Ellipse { radius_rows: f64, radius_cols: f64 },
    Rectangle { height: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// `(row, col)` of the bud center.
    pub center: (f64, f64),
    pub bud: BudShape,
    pub seed: u64,
}

fn out_of_bounds(what: &str) -> Error {
    Error::InvalidParameter(format!("{what} falls outside the image"))
}

/// Rasterizes the scene's bud.
pub fn make_truth(spec: &SceneSpec) -> Result<GroundTruth> {
    let (w, h) = (spec.width as i64, spec.height as i64);
    let (cr, cc) = spec.center;
    let pixels: Vec<(i64, i64)> = match spec.bud {
        BudShape::Disk { radius } => ellipse_pixels(cr, cc, radius, radius)?,
        BudShape::Ellipse {
            radius_rows,
            radius_cols,
        } => ellipse_pixels(cr, cc, radius_rows, radius_cols)?,
        BudShape::Rectangle { height, width } => {
            if height == 0 || width == 0 {
                return Err(Error::InvalidParameter(
                    "rectangle sides must be positive".into(),
                ));
            }
            let top = (cr - (height as f64 - 1.0) / 2.0).round() as i64;
            let left = (cc - (width as f64 - 1.0) / 2.0).round() as i64;
            (top..top + height as i64)
                .flat_map(|r| (left..left + width as i64).map(move |c| (r, c)))
                .collect()
        }
    };
    if pixels
        .iter()
        .any(|&(r, c)| r < 0 || c < 0 || r >= h || c >= w)
    {
        return Err(out_of_bounds("bud"));
    }
    let mask = BinaryMask::from_pixels(
        spec.width,
        spec.height,
        pixels.iter().map(|&(r, c)| (r as usize, c as usize)),
    )?;
    GroundTruth::from_mask(mask, Connectivity::Eight)
}

fn ellipse_pixels(cr: f64, cc: f64, ry: f64, rx: f64) -> Result<Vec<(i64, i64)>> {
    if !(ry >= 1.0 && rx >= 1.0) {
        return Err(Error::InvalidParameter(
            "bud radius must be at least 1".into(),
        ));
    }
    let mut out = Vec::new();
    for r in (cr - ry).floor() as i64..=(cr + ry).ceil() as i64 {
        for c in (cc - rx).floor() as i64..=(cc + rx).ceil() as i64 {
            let (dy, dx) = ((r as f64 - cr) / ry, (c as f64 - cc) / rx);
            if dy * dy + dx * dx <= 1.0 {
                out.push((r, c));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarmSpec {
    /// Centroid offset from the bud, in bud diameters.
    pub offset_diameters: f64,
    /// Area relative to the bud's.
    pub area_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// `(rows, cols)` translation of the detected bud.
    pub shift: (i64, i64),
    /// Positive grows the detection by that many pixels (square element),
    /// negative shrinks it.
    pub dilate_or_erode: i64,
    /// Number of vertical bands the detection is cut into.
    pub split_into: usize,
    pub false_alarms: Vec<FalseAlarmSpec>,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            shift: (0, 0),
            dilate_or_erode: 0,
            split_into: 1,
            false_alarms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentRole {
    /// The (possibly shifted and resized) detection of the bud.
    Bud,
    /// One band of a bud detection cut into pieces.
    Piece,
    FalseAlarm,
}

/// What the generator knows about one component it placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedComponent {
    pub role: ComponentRole,
    /// First pixel in raster order; identifies the component.
    pub anchor: Pixel,
    pub area: usize,
    /// Known in closed form only for some perturbations.
    pub iou: Option<f64>,
    pub kind: Option<VerdictKind>,
    pub normalized_area: Option<f64>,
    /// Requested offset; the placed block lands within half a pixel of it.
    pub nominal_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedScene {
    pub mask: BinaryMask,
    pub expected: Vec<ExpectedComponent>,
}

fn grow(pixels: &BTreeSet<(i64, i64)>, k: i64) -> BTreeSet<(i64, i64)> {
    let mut out = BTreeSet::new();
    for &(r, c) in pixels {
        for dr in -k..=k {
            for dc in -k..=k {
                out.insert((r + dr, c + dc));
            }
        }
    }
    out
}

fn shrink(pixels: &BTreeSet<(i64, i64)>, k: i64) -> BTreeSet<(i64, i64)> {
    pixels
        .iter()
        .copied()
        .filter(|&(r, c)| (-k..=k).all(|dr| (-k..=k).all(|dc| pixels.contains(&(r + dr, c + dc)))))
        .collect()
}

/// Overlap of two half-open integer intervals.
fn span_overlap(a0: i64, a_len: i64, b0: i64, b_len: i64) -> i64 {
    ((a0 + a_len).min(b0 + b_len) - a0.max(b0)).max(0)
}

fn truth_rectangle(truth: &GroundTruth) -> Option<(i64, i64, i64, i64)> {
    let px: Vec<Pixel> = truth.mask.positive_pixels().collect();
    let (r0, c0) = px[0];
    let (r1, c1) = px
        .iter()
        .fold((r0, c0), |m, &(r, c)| (m.0.max(r), m.1.max(c)));
    let c_min = px.iter().map(|p| p.1).min().expect("non-empty");
    let (h, w) = ((r1 - r0 + 1) as i64, (c1 - c_min + 1) as i64);
    (h * w == px.len() as i64).then_some((r0 as i64, c_min as i64, h, w))
}

/// Builds a detection mask from the truth and reports the components it
/// should decompose into.
pub fn perturb(truth: &GroundTruth, p: &PerturbationSpec, alpha: f64) -> Result<PerturbedScene> {
    if p.split_into == 0 {
        return Err(Error::InvalidParameter(
            "split_into must be at least 1".into(),
        ));
    }
    let (w, h) = truth.mask.dims();
    let in_bounds = |&(r, c): &(i64, i64)| r >= 0 && c >= 0 && r < h as i64 && c < w as i64;

    let base: BTreeSet<(i64, i64)> = truth
        .mask
        .positive_pixels()
        .map(|(r, c)| (r as i64 + p.shift.0, c as i64 + p.shift.1))
        .collect();
    let body = match p.dilate_or_erode {
        0 => base,
        k if k > 0 => grow(&base, k),
        k => shrink(&base, -k),
    };
    if body.is_empty() {
        return Err(Error::InvalidParameter(
            "erosion removes the whole detection".into(),
        ));
    }
    if !body.iter().all(in_bounds) {
        return Err(out_of_bounds("perturbed detection"));
    }

    // Cut into vertical bands separated by one empty column.
    let c_min = body.iter().map(|p| p.1).min().expect("non-empty");
    let c_max = body.iter().map(|p| p.1).max().expect("non-empty");
    let span = c_max - c_min + 1;
    let n = p.split_into as i64;
    let usable = span - (n - 1);
    if usable < n {
        return Err(Error::InvalidParameter(format!(
            "a detection {span} columns wide cannot be cut into {n} pieces"
        )));
    }
    let mut bands = Vec::with_capacity(p.split_into);
    let mut start = c_min;
    for i in 0..n {
        let width = usable / n + i64::from(i < usable % n);
        bands.push((start, start + width));
        start += width + 1;
    }
    let pieces: Vec<BTreeSet<(i64, i64)>> = bands
        .iter()
        .map(|&(lo, hi)| {
            body.iter()
                .copied()
                .filter(|p| p.1 >= lo && p.1 < hi)
                .collect()
        })
        .collect();

    let mut placed: BTreeSet<(i64, i64)> = pieces.iter().flatten().copied().collect();
    let mut expected = Vec::new();
    let rect = truth_rectangle(truth);
    for piece in &pieces {
        let anchor = *piece.iter().next().expect("bands span occupied columns");
        let mut exp = ExpectedComponent {
            role: if n == 1 {
                ComponentRole::Bud
            } else {
                ComponentRole::Piece
            },
            anchor: (anchor.0 as usize, anchor.1 as usize),
            area: piece.len(),
            iou: None,
            kind: None,
            normalized_area: None,
            nominal_distance: None,
        };
        if n == 1 {
            let closed_form = if p.shift == (0, 0) && p.dilate_or_erode == 0 {
                Some(1.0)
            } else {
                rect.map(|(r0, c0, rh, rw)| {
                    let k = p.dilate_or_erode;
                    let (dr0, dc0) = (r0 + p.shift.0 - k, c0 + p.shift.1 - k);
                    let (dh, dw) = (rh + 2 * k, rw + 2 * k);
                    let inter = span_overlap(r0, rh, dr0, dh) * span_overlap(c0, rw, dc0, dw);
                    inter as f64 / (rh * rw + dh * dw - inter) as f64
                })
            };
            exp.iou = closed_form;
            exp.kind = closed_form.map(|iou| VerdictKind::from_iou(iou, alpha));
        }
        expected.push(exp);
    }

    const DIRECTIONS: [(f64, f64); 8] = [
        (0.0, 1.0),
        (1.0, 0.0),
        (0.0, -1.0),
        (-1.0, 0.0),
        (
            std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::FRAC_1_SQRT_2,
        ),
        (
            std::f64::consts::FRAC_1_SQRT_2,
            -std::f64::consts::FRAC_1_SQRT_2,
        ),
        (
            -std::f64::consts::FRAC_1_SQRT_2,
            -std::f64::consts::FRAC_1_SQRT_2,
        ),
        (
            -std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::FRAC_1_SQRT_2,
        ),
    ];
    let truth_px: BTreeSet<(i64, i64)> = truth
        .mask
        .positive_pixels()
        .map(|(r, c)| (r as i64, c as i64))
        .collect();
    for fa in &p.false_alarms {
        if fa.area_fraction.is_nan() || fa.area_fraction <= 0.0 {
            return Err(Error::InvalidParameter(
                "area_fraction must be positive".into(),
            ));
        }
        let side = ((fa.area_fraction * truth.area as f64).sqrt().round() as i64).max(1);
        let reach = fa.offset_diameters * truth.normalizing_diameter();
        let half = (side as f64 - 1.0) / 2.0;
        let block = DIRECTIONS.iter().find_map(|&(dy, dx)| {
            let top = (truth.centroid.0 + dy * reach - half).round() as i64;
            let left = (truth.centroid.1 + dx * reach - half).round() as i64;
            let block: Vec<(i64, i64)> = (top..top + side)
                .flat_map(|r| (left..left + side).map(move |c| (r, c)))
                .collect();
            let fits = block.iter().all(in_bounds)
                && block.iter().all(|px| !truth_px.contains(px))
                && !block.iter().any(|&(r, c)| {
                    (-1..=1).any(|dr| (-1..=1).any(|dc| placed.contains(&(r + dr, c + dc))))
                });
            fits.then_some(block)
        });
        let block = block.ok_or_else(|| out_of_bounds("false alarm at every placement"))?;
        expected.push(ExpectedComponent {
            role: ComponentRole::FalseAlarm,
            anchor: (block[0].0 as usize, block[0].1 as usize),
            area: block.len(),
            iou: Some(0.0),
            kind: Some(VerdictKind::FalseAlarm),
            normalized_area: Some(block.len() as f64 / truth.area as f64),
            nominal_distance: Some(fa.offset_diameters),
        });
        placed.extend(block);
    }

    let mask =
        BinaryMask::from_pixels(w, h, placed.iter().map(|&(r, c)| (r as usize, c as usize)))?;
    Ok(PerturbedScene { mask, expected })
}

/// Re-derives an image evaluation with explicit coordinate sets and
/// all-pairs distances, sharing no code with the metrics path.
pub fn oracle_metrics(
    image_id: &str,
    components: &[Component],
    truth: &GroundTruth,
    alpha: f64,
) -> Result<ImageEvaluation> {
    let (w, h) = truth.mask.dims();
    if w > ORACLE_MAX_SIDE || h > ORACLE_MAX_SIDE {
        return Err(Error::OracleSize {
            width: w,
            height: h,
            limit: ORACLE_MAX_SIDE,
        });
    }
    let mut truth_set = BTreeSet::new();
    for r in 0..h {
        for c in 0..w {
            if truth.mask.values()[r * w + c] {
                truth_set.insert((r, c));
            }
        }
    }
    if truth_set.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let mean = |set: &BTreeSet<Pixel>| {
        let n = set.len() as f64;
        let sr: f64 = set.iter().map(|p| p.0 as f64).sum();
        let sc: f64 = set.iter().map(|p| p.1 as f64).sum();
        (sr / n, sc / n)
    };
    let truth_center = mean(&truth_set);
    let truth_list: Vec<&Pixel> = truth_set.iter().collect();
    let mut diameter = 0.0f64;
    for (i, a) in truth_list.iter().enumerate() {
        for b in &truth_list[i + 1..] {
            let (dr, dc) = (a.0 as f64 - b.0 as f64, a.1 as f64 - b.1 as f64);
            diameter = diameter.max((dr * dr + dc * dc).sqrt());
        }
    }
    let clamped = diameter == 0.0;
    let norm = if clamped { 1.0 } else { diameter };

    let mut verdicts = Vec::with_capacity(components.len());
    for comp in components {
        let set: BTreeSet<Pixel> = comp.pixels.iter().copied().collect();
        if set.is_empty() {
            return Err(Error::EmptyComponent);
        }
        let inter = set.intersection(&truth_set).count();
        let union = set.union(&truth_set).count();
        let iou = inter as f64 / union as f64;
        let kind = if iou >= alpha {
            VerdictKind::TruePositive
        } else if inter > 0 {
            VerdictKind::Split
        } else {
            VerdictKind::FalseAlarm
        };
        let (seg_precision, seg_recall) = if inter == 0 {
            (0.0, 0.0)
        } else {
            (
                inter as f64 / set.len() as f64,
                inter as f64 / truth_set.len() as f64,
            )
        };
        let center = mean(&set);
        let dist =
            ((center.0 - truth_center.0).powi(2) + (center.1 - truth_center.1).powi(2)).sqrt();
        verdicts.push(ComponentVerdict {
            component_id: comp.id,
            kind,
            area: set.len(),
            intersection: inter,
            iou,
            seg_precision,
            seg_recall,
            normalized_area: set.len() as f64 / truth_set.len() as f64,
            normalized_distance: dist / norm,
        });
    }
    let false_negative = verdicts.iter().all(|v| v.kind != VerdictKind::TruePositive);
    Ok(ImageEvaluation {
        image_id: image_id.to_string(),
        alpha,
        truth_area: truth_set.len(),
        truth_diameter_clamped: clamped,
        verdicts,
        false_negative,
    })
}

/// A generated scene with its perturbed detection.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCase {
    pub scene: SceneSpec,
    pub perturbation: PerturbationSpec,
    pub truth: GroundTruth,
    pub detection: PerturbedScene,
}

/// Draws a random scene of side at most `max_side` and a perturbation that fits it.
pub fn random_case(seed: u64, max_side: usize, alpha: f64) -> Result<SyntheticCase> {
    if max_side < 16 {
        return Err(Error::InvalidParameter(
            "scenes need a side of at least 16".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..200 {
        let width = rng.random_range(16..=max_side);
        let height = rng.random_range(16..=max_side);
        let limit = (width.min(height) / 4).clamp(2, 10);
        let bud = match rng.random_range(0..3) {
            0 => BudShape::Disk {
                radius: rng.random_range(1.0..limit as f64),
            },
            1 => BudShape::Ellipse {
                radius_rows: rng.random_range(1.0..limit as f64),
                radius_cols: rng.random_range(1.0..limit as f64),
            },
            _ => BudShape::Rectangle {
                height: rng.random_range(1..=2 * limit),
                width: rng.random_range(1..=2 * limit),
            },
        };
        let center = (
            rng.random_range(0.0..height as f64),
            rng.random_range(0.0..width as f64),
        );
        let scene = SceneSpec {
            width,
            height,
            center,
            bud,
            seed,
        };
        let Ok(truth) = make_truth(&scene) else {
            continue;
        };
        let fa_count = rng.random_range(0..=2);
        // Small buds tolerate proportionally small displacements.
        let reach = ((truth.diameter / 6.0) as i64).max(1);
        let jitter = |rng: &mut ChaCha8Rng, p: f64, lo: i64, hi: i64| {
            if rng.random_bool(p) {
                rng.random_range(lo..=hi)
            } else {
                0
            }
        };
        let perturbation = PerturbationSpec {
            shift: (
                jitter(&mut rng, 0.5, -reach, reach),
                jitter(&mut rng, 0.5, -reach, reach),
            ),
            dilate_or_erode: jitter(&mut rng, 0.4, -1, 1),
            split_into: if rng.random_bool(0.7) {
                1
            } else {
                rng.random_range(2..=3)
            },
            false_alarms: (0..fa_count)
                .map(|_| FalseAlarmSpec {
                    offset_diameters: rng.random_range(1.0..4.0),
                    area_fraction: rng.random_range(0.02..0.6),
                })
                .collect(),
        };
        if let Ok(detection) = perturb(&truth, &perturbation, alpha) {
            return Ok(SyntheticCase {
                scene,
                perturbation,
                truth,
                detection,
            });
        }
    }
    Err(Error::InvalidParameter(format!(
        "no valid scene found for seed {seed}"
    )))
}

/// One image of a generated corpus, as recorded in the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub image_id: String,
    pub seed: u64,
    pub scene: SceneSpec,
    pub perturbation: PerturbationSpec,
    pub expected: Vec<ExpectedComponent>,
    /// Oracle evaluation of the detection at the corpus alpha.
    pub oracle: ImageEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSidecar {
    pub alpha: f64,
    pub connectivity: Connectivity,
    pub images: Vec<CorpusEntry>,
}

/// Writes `count` cases as `truth_NNNN.pgm` / `pred_NNNN.pgm`, a
/// `manifest.csv`, and returns the sidecar describing them. Predictions are
/// 8-bit probability maps holding 0 or 255.
pub fn write_corpus(
    dir: &Path,
    count: usize,
    seed: u64,
    max_side: usize,
    alpha: f64,
) -> Result<CorpusSidecar> {
    fs::create_dir_all(dir)?;
    let mut manifest = csv::Writer::from_path(dir.join("manifest.csv"))?;
    manifest.write_record(["image_id", "prediction_path", "truth_path"])?;
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let case_seed = seed.wrapping_add(i as u64);
        let case = random_case(case_seed, max_side, alpha)?;
        let image_id = format!("img{i:04}");
        let (truth_name, pred_name) = (format!("truth_{i:04}.pgm"), format!("pred_{i:04}.pgm"));
        write_mask(dir.join(&truth_name), &case.truth.mask)?;
        write_pgm(
            dir.join(&pred_name),
            &GrayImage::from_mask(&case.detection.mask),
        )?;
        manifest.write_record([image_id.as_str(), pred_name.as_str(), truth_name.as_str()])?;
        let components =
            crate::raster::connected_components(&case.detection.mask, Connectivity::Eight);
        let oracle = oracle_metrics(&image_id, &components, &case.truth, alpha)?;
        images.push(CorpusEntry {
            image_id,
            seed: case_seed,
            scene: case.scene,
            perturbation: case.perturbation,
            expected: case.detection.expected,
            oracle,
        });
    }
    manifest.flush()?;
    Ok(CorpusSidecar {
        alpha,
        connectivity: Connectivity::Eight,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{connected_components, diameter};

    fn scene(bud: BudShape, center: (f64, f64)) -> SceneSpec {
        SceneSpec {
            width: 64,
            height: 64,
            center,
            bud,
            seed: 1,
        }
    }

    #[test]
    fn rectangle_area_is_exact() {
        let t = make_truth(&scene(
            BudShape::Rectangle {
                height: 5,
                width: 7,
            },
            (20.0, 20.0),
        ))
        .unwrap();
        assert_eq!(t.area, 35);
        assert_eq!(t.centroid, (20.0, 20.0));
    }

    #[test]
    fn disk_area_and_diameter() {
        let t = make_truth(&scene(BudShape::Disk { radius: 10.0 }, (30.0, 30.0))).unwrap();
        let pi_r2 = std::f64::consts::PI * 100.0;
        assert!((t.area as f64 - pi_r2).abs() / pi_r2 < 0.05);
        // All-pairs over the raster: the axis extremes are 20 apart.
        let px: Vec<Pixel> = t.mask.positive_pixels().collect();
        let brute = px
            .iter()
            .flat_map(|a| px.iter().map(move |b| (a, b)))
            .map(|(a, b)| {
                ((a.0 as f64 - b.0 as f64).powi(2) + (a.1 as f64 - b.1 as f64).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        assert_eq!(brute, 20.0);
        assert_eq!(diameter(&t.mask).unwrap(), brute);
        assert!((19.0..=20.5).contains(&t.diameter));
    }

    #[test]
    fn generation_is_deterministic() {
        let s = scene(
            BudShape::Ellipse {
                radius_rows: 4.0,
                radius_cols: 7.5,
            },
            (31.3, 22.8),
        );
        assert_eq!(make_truth(&s).unwrap(), make_truth(&s).unwrap());
        let a = random_case(99, 64, 0.5).unwrap();
        let b = random_case(99, 64, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_bounds_bud() {
        let err = make_truth(&scene(BudShape::Disk { radius: 5.0 }, (2.0, 30.0)));
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
        let err = make_truth(&scene(BudShape::Disk { radius: 0.5 }, (30.0, 30.0)));
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn identity_perturbation_is_a_true_positive() {
        let t = make_truth(&scene(BudShape::Disk { radius: 6.0 }, (30.0, 30.0))).unwrap();
        let p = perturb(&t, &PerturbationSpec::default(), 0.5).unwrap();
        assert_eq!(p.mask, t.mask);
        assert_eq!(p.expected.len(), 1);
        assert_eq!(p.expected[0].iou, Some(1.0));
        assert_eq!(p.expected[0].kind, Some(VerdictKind::TruePositive));
    }

    #[test]
    fn shifted_rectangle_closed_form() {
        let (w, h, k) = (9usize, 5usize, 3i64);
        let t = make_truth(&scene(
            BudShape::Rectangle {
                height: h,
                width: w,
            },
            (20.0, 20.0),
        ))
        .unwrap();
        let spec = PerturbationSpec {
            shift: (0, k),
            ..Default::default()
        };
        let p = perturb(&t, &spec, 0.5).unwrap();
        let closed = ((w as i64 - k) * h as i64) as f64 / ((w as i64 + k) * h as i64) as f64;
        assert_eq!(p.expected[0].iou, Some(closed));
        let comps = connected_components(&p.mask, Connectivity::Eight);
        let ev = oracle_metrics("r", &comps, &t, 0.5).unwrap();
        assert_eq!(ev.verdicts[0].iou, closed);
    }

    #[test]
    fn false_alarm_lands_where_requested() {
        let t = make_truth(&scene(BudShape::Disk { radius: 4.0 }, (20.0, 20.0))).unwrap();
        let spec = PerturbationSpec {
            false_alarms: vec![FalseAlarmSpec {
                offset_diameters: 3.0,
                area_fraction: 0.1,
            }],
            ..Default::default()
        };
        let p = perturb(&t, &spec, 0.5).unwrap();
        let comps = connected_components(&p.mask, Connectivity::Eight);
        assert_eq!(comps.len(), 2);
        let ev = oracle_metrics("fa", &comps, &t, 0.5).unwrap();
        let fa = ev
            .verdicts
            .iter()
            .find(|v| v.kind == VerdictKind::FalseAlarm)
            .unwrap();
        // Disk r=4 has 49 pixels; a 2x2 block is 4/49 ≈ 0.08.
        assert!((fa.normalized_area - 0.1).abs() < 0.05);
        assert!((fa.normalized_distance - 3.0).abs() < 0.1);
    }

    #[test]
    fn split_produces_separate_pieces() {
        let t = make_truth(&scene(
            BudShape::Rectangle {
                height: 6,
                width: 11,
            },
            (30.0, 30.0),
        ))
        .unwrap();
        let spec = PerturbationSpec {
            split_into: 3,
            ..Default::default()
        };
        let p = perturb(&t, &spec, 0.5).unwrap();
        let comps = connected_components(&p.mask, Connectivity::Eight);
        assert_eq!(comps.len(), 3);
        assert_eq!(comps.iter().map(Component::area).sum::<usize>(), 6 * 9);
        let anchors: BTreeSet<Pixel> = p.expected.iter().map(|e| e.anchor).collect();
        let firsts: BTreeSet<Pixel> = comps.iter().map(|c| c.pixels[0]).collect();
        assert_eq!(anchors, firsts);
        let too_many = PerturbationSpec {
            split_into: 7,
            ..Default::default()
        };
        assert!(perturb(&t, &too_many, 0.5).is_err());
    }

    #[test]
    fn oracle_edge_cases() {
        let t = make_truth(&scene(BudShape::Disk { radius: 3.0 }, (10.0, 10.0))).unwrap();
        let ev = oracle_metrics("e", &[], &t, 0.5).unwrap();
        assert!(ev.false_negative);
        let same = connected_components(&t.mask, Connectivity::Eight);
        let ev = oracle_metrics("s", &same, &t, 0.5).unwrap();
        let v = &ev.verdicts[0];
        assert_eq!(v.kind, VerdictKind::TruePositive);
        assert_eq!(
            (v.iou, v.seg_precision, v.seg_recall, v.normalized_area),
            (1.0, 1.0, 1.0, 1.0)
        );

        let big = GroundTruth::from_mask(
            BinaryMask::from_pixels(200, 10, [(1, 1)]).unwrap(),
            Connectivity::Eight,
        )
        .unwrap();
        assert!(matches!(
            oracle_metrics("big", &[], &big, 0.5),
            Err(Error::OracleSize { .. })
        ));
    }

    #[test]
    fn corpus_files_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let side = write_corpus(dir.path(), 3, 5, 32, 0.5).unwrap();
        assert_eq!(side.images.len(), 3);
        assert!(dir.path().join("truth_0002.pgm").exists());
        let manifest = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.lines().count(), 4);
    }
}
