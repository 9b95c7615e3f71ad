//! Rasters, binarization, connected components and component geometry.
//!
//! Coordinates are `(row, col)` pairs of pixel centers. A component's
//! centroid is the arithmetic mean of its pixel coordinates, so a 4x4 block
//! anchored at the origin has its centroid at `(1.5, 1.5)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(row, col)` of a pixel center.
pub type Pixel = (usize, usize);

/// Per-pixel bud probabilities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "probability {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Bud / non-bud pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// All-negative mask.
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: impl IntoIterator<Item = Pixel>,
    ) -> Result<Self> {
        let mut mask = Self::empty(width, height)?;
        for (r, c) in pixels {
            if r >= height || c >= width {
                return Err(Error::InvalidParameter(format!(
                    "pixel ({r}, {c}) outside a {width}x{height} mask"
                )));
            }
            mask.set(r, c, true);
        }
        Ok(mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col]
    }

    /// Bounds-checked lookup; anything outside the mask reads as background.
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width && self.get(row, col)
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.values[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.values.iter().any(|&v| v)
    }

    /// Positive pixels in raster order.
    pub fn positive_pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i / w, i % w))
    }

    /// True when every positive pixel of `self` is positive in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(&a, &b)| !a || b)
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::InvalidParameter(format!(
            "{len} values for a {width}x{height} raster"
        )));
    }
    Ok(())
}

/// Pixel adjacency used when grouping positive pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Edge neighbours only.
    #[serde(rename = "4")]
    Four,
    /// Edge and corner neighbours.
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidParameter(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

impl std::fmt::Display for Connectivity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Connectivity::Four => write!(f, "4"),
            Connectivity::Eight => write!(f, "8"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

impl BoundingBox {
    fn of(pixels: &[Pixel]) -> Self {
        let (r0, c0) = pixels[0];
        pixels.iter().fold(
            BoundingBox {
                min_row: r0,
                min_col: c0,
                max_row: r0,
                max_col: c0,
            },
            |b, &(r, c)| BoundingBox {
                min_row: b.min_row.min(r),
                min_col: b.min_col.min(c),
                max_row: b.max_row.max(r),
                max_col: b.max_col.max(c),
            },
        )
    }

    pub fn contains_point(&self, (row, col): (f64, f64)) -> bool {
        row >= self.min_row as f64
            && row <= self.max_row as f64
            && col >= self.min_col as f64
            && col <= self.max_col as f64
    }
}

/// One connected region of positive pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: usize,
    /// Pixels in raster order.
    pub pixels: Vec<Pixel>,
    pub centroid: (f64, f64),
    pub bbox: BoundingBox,
}

impl Component {
    pub fn from_pixels(id: usize, mut pixels: Vec<Pixel>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::EmptyComponent);
        }
        pixels.sort_unstable();
        pixels.dedup();
        let centroid = centroid(&pixels)?;
        let bbox = BoundingBox::of(&pixels);
        Ok(Self {
            id,
            pixels,
            centroid,
            bbox,
        })
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// Positive iff `value > tau`; ties fall to background.
pub fn binarize(map: &ProbabilityMap, tau: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!(
            "binarization threshold {tau} outside [0, 1]"
        )));
    }
    let values = map.values.iter().map(|&v| v > tau).collect();
    BinaryMask::new(map.width, map.height, values)
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels the connected components of `mask`.
///
/// Two-pass union-find labelling. Components are returned ordered by the
/// top-left corner of their bounding box (then by their first pixel in
/// raster order) and numbered from 0 in that order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    const UNLABELED: u32 = u32::MAX;
    let (w, h) = mask.dims();
    let mut labels = vec![UNLABELED; w * h];
    let mut sets = DisjointSet::new();

    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let mut neighbours = [UNLABELED; 4];
            if c > 0 {
                neighbours[0] = labels[r * w + c - 1];
            }
            if r > 0 {
                neighbours[1] = labels[(r - 1) * w + c];
                if connectivity == Connectivity::Eight {
                    if c > 0 {
                        neighbours[2] = labels[(r - 1) * w + c - 1];
                    }
                    if c + 1 < w {
                        neighbours[3] = labels[(r - 1) * w + c + 1];
                    }
                }
            }
            let mut label = UNLABELED;
            for &n in neighbours.iter().filter(|&&n| n != UNLABELED) {
                if label == UNLABELED {
                    label = n;
                } else {
                    sets.union(label, n);
                }
            }
            if label == UNLABELED {
                label = sets.make();
            }
            labels[r * w + c] = label;
        }
    }

    let mut groups: HashMap<u32, Vec<Pixel>> = HashMap::new();
    for (i, &label) in labels.iter().enumerate() {
        if label != UNLABELED {
            let root = sets.find(label);
            groups.entry(root).or_default().push((i / w, i % w));
        }
    }

    let mut components: Vec<Component> = groups
        .into_values()
        .map(|pixels| Component::from_pixels(0, pixels).expect("groups are non-empty"))
        .collect();
    components.sort_by_key(|c| (c.bbox.min_row, c.bbox.min_col, c.pixels[0]));
    for (id, c) in components.iter_mut().enumerate() {
        c.id = id;
    }
    components
}

/// Arithmetic mean of the pixel coordinates.
pub fn centroid(pixels: &[Pixel]) -> Result<(f64, f64)> {
    if pixels.is_empty() {
        return Err(Error::EmptyComponent);
    }
    let (sr, sc) = pixels.iter().fold((0u64, 0u64), |(sr, sc), &(r, c)| {
        (sr + r as u64, sc + c as u64)
    });
    let n = pixels.len() as f64;
    Ok((sr as f64 / n, sc as f64 / n))
}

/// Largest Euclidean distance between two positive pixel centers.
///
/// The farthest pair always lies on the convex hull of the boundary pixels,
/// so the all-pairs search only runs over hull vertices.
pub fn diameter(mask: &BinaryMask) -> Result<f64> {
    let boundary: Vec<(i64, i64)> = mask
        .positive_pixels()
        .filter(|&(r, c)| {
            r == 0
                || c == 0
                || !mask.contains(r - 1, c)
                || !mask.contains(r + 1, c)
                || !mask.contains(r, c - 1)
                || !mask.contains(r, c + 1)
        })
        .map(|(r, c)| (r as i64, c as i64))
        .collect();
    if boundary.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let hull = convex_hull(boundary);
    let mut best = 0i64;
    for (i, a) in hull.iter().enumerate() {
        for b in &hull[i + 1..] {
            let (dr, dc) = (a.0 - b.0, a.1 - b.1);
            best = best.max(dr * dr + dc * dc);
        }
    }
    Ok((best as f64).sqrt())
}

/// Monotone-chain hull; collinear points are dropped.
fn convex_hull(mut points: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    points.sort_unstable();
    points.dedup();
    if points.len() < 3 {
        return points;
    }
    fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(points.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 {
            Box::new(points.iter())
        } else {
            Box::new(points.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Bilinear resize with half-pixel-center alignment.
///
/// Output pixel `y` samples input coordinate `(y + 0.5) * in / out - 0.5`,
/// clamped to the input extent.
pub fn resize_bilinear(map: &ProbabilityMap, out_w: usize, out_h: usize) -> Result<ProbabilityMap> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParameter(format!(
            "output dimensions must be positive, got {out_w}x{out_h}"
        )));
    }
    let taps = |out: usize, input: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * input as f64 / out as f64 - 0.5)
                    .clamp(0.0, (input - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(input - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = taps(out_h, map.height);
    let cols = taps(out_w, map.width);

    let mut values = Vec::with_capacity(out_w * out_h);
    for &(r0, r1, wr) in &rows {
        for &(c0, c1, wc) in &cols {
            let (a, b) = (map.get(r0, c0), map.get(r0, c1));
            let (c, d) = (map.get(r1, c0), map.get(r1, c1));
            let top = a + wc * (b - a);
            let bottom = c + wc * (d - c);
            let v = top + wr * (bottom - top);
            let lo = a.min(b).min(c).min(d);
            let hi = a.max(b).max(c).max(d);
            values.push(v.clamp(lo, hi));
        }
    }
    ProbabilityMap::new(out_w, out_h, values)
}

/// The single true bud of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mask: BinaryMask,
    pub area: usize,
    pub centroid: (f64, f64),
    /// Largest distance between two bud pixel centers.
    pub diameter: f64,
    /// Set when the bud is a single pixel and ND normalizes by 1.0 instead.
    pub diameter_clamped: bool,
}

impl GroundTruth {
    /// Builds the truth from a mask holding exactly one bud under `connectivity`.
    pub fn from_mask(mask: BinaryMask, connectivity: Connectivity) -> Result<Self> {
        let components = connected_components(&mask, connectivity);
        match components.len() {
            0 => return Err(Error::EmptyTruth),
            1 => {}
            n => return Err(Error::MultipleBuds(n)),
        }
        let bud = &components[0];
        let diameter = diameter(&mask)?;
        Ok(Self {
            area: bud.area(),
            centroid: bud.centroid,
            diameter,
            diameter_clamped: diameter == 0.0,
            mask,
        })
    }

    /// Diameter used to normalize distances; never zero.
    pub fn normalizing_diameter(&self) -> f64 {
        if self.diameter_clamped {
            1.0
        } else {
            self.diameter
        }
    }
}
