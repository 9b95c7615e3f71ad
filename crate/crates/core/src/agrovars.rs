//! Error estimates for downstream vine measurements derived from detector
//! metrics: bud count, bud area and internode length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Caveat attached to every bud-area estimate.
pub const AREA_ERROR_CAVEAT: &str = "fpx adds false-alarm area normalized by bud area to \
precision complements normalized by detected area; the two normalizations are treated as \
interchangeable and fnx is assumed to be 0";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantAssumptions {
    pub buds_per_plant: f64,
    pub bud_diameter_mm: f64,
    pub internode_mm: f64,
}

impl Default for PlantAssumptions {
    fn default() -> Self {
        Self {
            buds_per_plant: 240.0,
            bud_diameter_mm: 5.0,
            internode_mm: 150.0,
        }
    }
}

impl PlantAssumptions {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("buds_per_plant", self.buds_per_plant),
            ("bud_diameter_mm", self.bud_diameter_mm),
            ("internode_mm", self.internode_mm),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudCountError {
    /// False positives counted per plant.
    pub excess: f64,
    /// Buds missed per plant.
    pub omitted: f64,
    /// `excess - omitted`.
    pub net: f64,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

/// Count error for a plant of `buds_per_plant` buds.
///
/// Detected true positives are `N * r_d`; each brings `1 / p_d - 1` false
/// positives along.
pub fn bud_count_error(
    assumptions: &PlantAssumptions,
    p_d: f64,
    r_d: f64,
) -> Result<BudCountError> {
    assumptions.validate()?;
    check_unit("p_d", p_d)?;
    check_unit("r_d", r_d)?;
    if p_d == 0.0 {
        return Err(Error::UndefinedCount);
    }
    let n = assumptions.buds_per_plant;
    let omitted = n * (1.0 - r_d);
    let excess = n * r_d * (1.0 / p_d - 1.0);
    Ok(BudCountError {
        excess,
        omitted,
        net: excess - omitted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaErrorTerms {
    pub fa_na_mean: f64,
    pub tp_precision_complement: f64,
    pub split_precision_complement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaErrorBreakdown {
    pub fnx: f64,
    pub fpx: f64,
    pub terms: AreaErrorTerms,
    pub caveat: String,
}

/// False-positive pixel fraction of a bud-area measurement.
pub fn area_error(na_mean: f64, p_s_tp: f64, p_s_split: f64) -> Result<AreaErrorBreakdown> {
    if !(na_mean >= 0.0 && na_mean.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mean normalized area must be non-negative, got {na_mean}"
        )));
    }
    check_unit("p_s_tp", p_s_tp)?;
    check_unit("p_s_split", p_s_split)?;
    let terms = AreaErrorTerms {
        fa_na_mean: na_mean,
        tp_precision_complement: 1.0 - p_s_tp,
        split_precision_complement: 1.0 - p_s_split,
    };
    Ok(AreaErrorBreakdown {
        fnx: 0.0,
        fpx: terms.fa_na_mean + terms.tp_precision_complement + terms.split_precision_complement,
        terms,
        caveat: AREA_ERROR_CAVEAT.to_string(),
    })
}

/// Worst-case relative internode error: a false alarm `nd_mean` diameters
/// off at each of the two endpoints.
pub fn internode_error(assumptions: &PlantAssumptions, nd_mean: f64) -> Result<f64> {
    assumptions.validate()?;
    if !(nd_mean >= 0.0 && nd_mean.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mean normalized distance must be non-negative, got {nd_mean}"
        )));
    }
    Ok(2.0 * nd_mean * assumptions.bud_diameter_mm / assumptions.internode_mm)
}
