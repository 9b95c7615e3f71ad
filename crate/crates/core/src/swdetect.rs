//! Sliding-windows detector: square patches at 50% displacement, a pluggable
//! patch classifier, per-pixel voting and a vote threshold.
//!
//! Windows are tiled from the origin at stride `floor(s / 2)`. When that
//! tiling stops short of the far border, one extra window is anchored flush
//! against it. Pixels at least `s` away from every border are then covered by
//! exactly four windows when `s` is even; border pixels may see fewer or more.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::GrayImage;
use crate::raster::{BinaryMask, ProbabilityMap};

/// Bud-pixel fraction a patch needs before the truth oracle calls it positive.
pub const DEFAULT_MIN_BUD_FRACTION: f64 = 0.2;

/// Window sizes swept by the baseline detector.
pub const WINDOW_SIZES: [usize; 10] = [100, 200, 300, 400, 500, 600, 700, 800, 900, 1000];

pub const MAX_NU: u32 = 4;

/// Top-left corner and side length of a square window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub width: usize,
    pub height: usize,
    pub window_size: usize,
    pub stride: usize,
    /// Row-major over origins.
    pub patches: Vec<Patch>,
}

fn axis_origins(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut origins: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|&o| o + size <= dim)
        .collect();
    let last = *origins.last().expect("size <= dim");
    if last + size < dim {
        origins.push(dim - size);
    }
    origins
}

/// Lays square windows of side `size` over a `width` x `height` image.
pub fn build_grid(width: usize, height: usize, size: usize) -> Result<PatchGrid> {
    if size == 0 {
        return Err(Error::InvalidParameter(
            "window size must be positive".into(),
        ));
    }
    if size > width || size > height {
        return Err(Error::WindowTooLarge {
            size,
            width,
            height,
        });
    }
    // A one-pixel window has no half-displacement; step by one.
    let stride = (size / 2).max(1);
    let rows = axis_origins(height, size, stride);
    let cols = axis_origins(width, size, stride);
    let patches = rows
        .iter()
        .flat_map(|&row| cols.iter().map(move |&col| Patch { row, col, size }))
        .collect();
    Ok(PatchGrid {
        width,
        height,
        window_size: size,
        stride,
        patches,
    })
}

/// Per-pixel count of positive windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMap {
    width: usize,
    height: usize,
    votes: Vec<u32>,
}

impl VoteMap {
    pub fn new(width: usize, height: usize, votes: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || votes.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "{} votes for a {width}x{height} map",
                votes.len()
            )));
        }
        Ok(Self {
            width,
            height,
            votes,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn votes(&self) -> &[u32] {
        &self.votes
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.votes[row * self.width + col]
    }

    /// Raw sample values are taken as vote counts.
    pub fn from_gray(image: &GrayImage) -> Self {
        Self {
            width: image.width,
            height: image.height,
            votes: image.samples.iter().map(|&v| u32::from(v)).collect(),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        let max = self.votes.iter().copied().max().unwrap_or(0);
        let maxval = if max <= 255 { 255 } else { 65535 };
        let samples = self.votes.iter().map(|&v| v.min(65535) as u16).collect();
        GrayImage::new(self.width, self.height, maxval, samples).expect("clamped votes")
    }

    /// Sums one vote over every pixel of each window.
    fn accumulate<'a>(
        width: usize,
        height: usize,
        windows: impl Iterator<Item = &'a Patch>,
    ) -> Self {
        // 2-D difference array, then prefix sums.
        let stride = width + 1;
        let mut diff = vec![0i64; stride * (height + 1)];
        for p in windows {
            let (r1, c1) = (p.row + p.size, p.col + p.size);
            diff[p.row * stride + p.col] += 1;
            diff[p.row * stride + c1] -= 1;
            diff[r1 * stride + p.col] -= 1;
            diff[r1 * stride + c1] += 1;
        }
        let mut votes = vec![0u32; width * height];
        let mut above = vec![0i64; width];
        for r in 0..height {
            let mut run = 0i64;
            for c in 0..width {
                run += diff[r * stride + c];
                above[c] += run;
                votes[r * width + c] = above[c] as u32;
            }
        }
        Self {
            width,
            height,
            votes,
        }
    }
}

/// Number of windows covering each pixel.
pub fn coverage(grid: &PatchGrid) -> VoteMap {
    VoteMap::accumulate(grid.width, grid.height, grid.patches.iter())
}

/// Decides whether a window holds a bud.
pub trait PatchClassifier: Sync {
    fn classify(&self, image: &ProbabilityMap, patch: &Patch) -> bool;
}

/// Same answer for every patch.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier(pub bool);

impl PatchClassifier for ConstantClassifier {
    fn classify(&self, _image: &ProbabilityMap, _patch: &Patch) -> bool {
        self.0
    }
}

/// Positive when the window's bud-pixel fraction reaches `min_fraction`
/// (and it holds at least one bud pixel).
#[derive(Debug, Clone)]
pub struct TruthOracleClassifier {
    width: usize,
    height: usize,
    min_fraction: f64,
    /// Summed-area table with one row and column of zero padding.
    integral: Vec<u64>,
}

impl TruthOracleClassifier {
    pub fn new(truth: &BinaryMask, min_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&min_fraction) {
            return Err(Error::InvalidParameter(format!(
                "bud fraction {min_fraction} outside [0, 1]"
            )));
        }
        let (w, h) = truth.dims();
        let mut integral = vec![0u64; (w + 1) * (h + 1)];
        for r in 0..h {
            let mut row_sum = 0;
            for c in 0..w {
                row_sum += u64::from(truth.get(r, c));
                integral[(r + 1) * (w + 1) + c + 1] = integral[r * (w + 1) + c + 1] + row_sum;
            }
        }
        Ok(Self {
            width: w,
            height: h,
            min_fraction,
            integral,
        })
    }

    pub fn bud_pixels(&self, patch: &Patch) -> u64 {
        let s = self.width + 1;
        let (r0, c0) = (patch.row, patch.col);
        let r1 = (patch.row + patch.size).min(self.height);
        let c1 = (patch.col + patch.size).min(self.width);
        self.integral[r1 * s + c1] + self.integral[r0 * s + c0]
            - self.integral[r0 * s + c1]
            - self.integral[r1 * s + c0]
    }
}

impl PatchClassifier for TruthOracleClassifier {
    fn classify(&self, _image: &ProbabilityMap, patch: &Patch) -> bool {
        let bud = self.bud_pixels(patch);
        let area = (patch.size * patch.size) as f64;
        bud > 0 && bud as f64 >= self.min_fraction * area
    }
}

#[derive(Debug, Deserialize)]
struct LabelRecord {
    row: usize,
    col: usize,
    size: usize,
    label: u8,
}

/// Precomputed labels keyed by `(row, col, size)`; unknown patches are negative.
#[derive(Debug, Default)]
pub struct CsvLabelClassifier {
    labels: HashMap<(usize, usize, usize), bool>,
    missing: AtomicUsize,
}

impl CsvLabelClassifier {
    /// Reads `row,col,size,label` records with `label` in {0, 1}.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut labels = HashMap::new();
        for record in csv::Reader::from_reader(reader).deserialize() {
            let rec: LabelRecord = record?;
            let positive = match rec.label {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "patch label must be 0 or 1, got {other}"
                    )))
                }
            };
            labels.insert((rec.row, rec.col, rec.size), positive);
        }
        Ok(Self {
            labels,
            missing: AtomicUsize::new(0),
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Lookups that found no label so far.
    pub fn missing_lookups(&self) -> usize {
        self.missing.load(Ordering::Relaxed)
    }
}

impl PatchClassifier for CsvLabelClassifier {
    fn classify(&self, _image: &ProbabilityMap, patch: &Patch) -> bool {
        match self.labels.get(&(patch.row, patch.col, patch.size)) {
            Some(&label) => label,
            None => {
                self.missing.fetch_add(1, Ordering::Relaxed);
                false
            }
        }
    }
}

/// Classifies every window and counts, per pixel, the positive windows
/// containing it.
pub fn vote(
    grid: &PatchGrid,
    classifier: &dyn PatchClassifier,
    image: &ProbabilityMap,
) -> Result<VoteMap> {
    if image.dims() != (grid.width, grid.height) {
        return Err(Error::DimensionMismatch {
            expected: (grid.width, grid.height),
            found: image.dims(),
        });
    }
    let positive: Vec<bool> = grid
        .patches
        .par_iter()
        .map(|p| classifier.classify(image, p))
        .collect();
    let windows = grid
        .patches
        .iter()
        .zip(&positive)
        .filter(|(_, &hit)| hit)
        .map(|(p, _)| p);
    Ok(VoteMap::accumulate(grid.width, grid.height, windows))
}

/// Positive iff `votes >= nu`.
pub fn threshold_votes(votes: &VoteMap, nu: u32) -> Result<BinaryMask> {
    if !(1..=MAX_NU).contains(&nu) {
        return Err(Error::InvalidParameter(format!(
            "vote threshold must lie in 1..={MAX_NU}, got {nu}"
        )));
    }
    let values = votes.votes.iter().map(|&v| v >= nu).collect();
    BinaryMask::new(votes.width, votes.height, values)
}
