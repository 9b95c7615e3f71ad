//! Post-processing and evaluation for single-bud detection masks.
//!
//! Probability maps (or sliding-window vote maps) are thresholded into
//! binary masks, split into connected components, and each component is
//! judged against the image's one true bud:
//!
//! - [`raster`]: masks, thresholding, connected components, geometry.
//! - [`metrics`]: true positive / split / false alarm taxonomy, detection
//!   precision and recall, segmentation precision and recall, normalized
//!   area and distance.
//! - [`swdetect`]: the sliding-windows baseline (grid, voting, threshold).
//! - [`harness`]: detector sweeps, pooled statistics, best-per-metric
//!   selection, scatter and histogram data.
//! - [`agrovars`]: error estimates for bud count, bud area and internode length.
//! - [`synth`]: synthetic scenes and a brute-force pixel-set oracle.

pub mod agrovars;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod swdetect;
pub mod synth;

pub use error::{Error, Result};
