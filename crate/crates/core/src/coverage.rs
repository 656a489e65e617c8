//! Binned state coverage: the fraction of the `100^D` bin combinations that
//! visited states fall into.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::domain::{StateDim, StateDimKind};
use crate::oracle::{bin_index, category_bin};

pub const COVERAGE_BINS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum CoverageError {
    #[error("expected {want} values, got {got}")]
    SchemaMismatch { got: usize, want: usize },
    #[error("bin {0} outside 1..={COVERAGE_BINS}")]
    BinOutOfRange(usize),
    #[error("ledgers cover different dimensions")]
    DimsMismatch,
}

pub type BinTuple = SmallVec<[u8; 8]>;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageLedger {
    dims: Vec<StateDim>,
    visited: HashSet<BinTuple>,
}

/// `k / 100^D` in scientific notation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    #[serde(rename = "D")]
    pub dims: usize,
    pub unique_bins: u64,
    pub fraction_sci_notation: String,
    pub log10_fraction: Option<f64>,
}

impl Default for CoverageSummary {
    fn default() -> Self {
        CoverageSummary {
            dims: 0,
            unique_bins: 0,
            fraction_sci_notation: sci_notation(None, 12),
            log10_fraction: None,
        }
    }
}

impl CoverageLedger {
    pub fn new(dims: Vec<StateDim>) -> Self {
        CoverageLedger {
            dims,
            visited: HashSet::new(),
        }
    }

    /// A ledger over `d` unnamed unit-interval dimensions.
    pub fn unit(d: usize) -> Self {
        Self::new((0..d).map(|i| StateDim::numeric(&format!("d{i}"), 0.0, 1.0)).collect())
    }

    pub fn dims(&self) -> &[StateDim] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.visited.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visited.is_empty()
    }

    pub fn bins_of(&self, point: &[f64]) -> Result<BinTuple, CoverageError> {
        if point.len() != self.dims.len() {
            return Err(CoverageError::SchemaMismatch {
                got: point.len(),
                want: self.dims.len(),
            });
        }
        Ok(self
            .dims
            .iter()
            .zip(point)
            .map(|(d, &v)| {
                let b = match &d.kind {
                    StateDimKind::Numeric { lo, hi } => bin_index(v, *lo, *hi, COVERAGE_BINS),
                    StateDimKind::Categorical { labels } => category_bin(v, labels.len(), COVERAGE_BINS),
                };
                b as u8
            })
            .collect())
    }

    /// Records a state given as coverage values; returns whether its bin
    /// combination was new.
    pub fn record(&mut self, point: &[f64]) -> Result<bool, CoverageError> {
        let t = self.bins_of(point)?;
        Ok(self.visited.insert(t))
    }

    /// Records a bin combination directly.
    pub fn insert_bins(&mut self, bins: &[usize]) -> Result<bool, CoverageError> {
        if bins.len() != self.dims.len() {
            return Err(CoverageError::SchemaMismatch {
                got: bins.len(),
                want: self.dims.len(),
            });
        }
        if let Some(&b) = bins.iter().find(|&&b| !(1..=COVERAGE_BINS).contains(&b)) {
            return Err(CoverageError::BinOutOfRange(b));
        }
        Ok(self.visited.insert(bins.iter().map(|&b| b as u8).collect()))
    }

    pub fn merge(&mut self, other: &CoverageLedger) -> Result<(), CoverageError> {
        if self.dims != other.dims {
            return Err(CoverageError::DimsMismatch);
        }
        self.visited.extend(other.visited.iter().cloned());
        Ok(())
    }

    /// `log10(|visited| / 100^D)`, or `None` when nothing was visited.
    pub fn log10_fraction(&self) -> Option<f64> {
        if self.visited.is_empty() {
            return None;
        }
        Some((self.visited.len() as f64).log10() - 2.0 * self.dims.len() as f64)
    }

    /// The fraction as an `f64`; underflows to 0 for large `D`.
    pub fn fraction(&self) -> f64 {
        self.log10_fraction().map_or(0.0, |l| 10f64.powf(l))
    }

    pub fn summary(&self) -> CoverageSummary {
        CoverageSummary {
            dims: self.dims.len(),
            unique_bins: self.visited.len() as u64,
            fraction_sci_notation: sci_notation(self.log10_fraction(), 12),
            log10_fraction: self.log10_fraction(),
        }
    }
}

/// Formats `10^log10` with `digits` significant digits, e.g. `1.00000000000e-4`.
pub fn sci_notation(log10: Option<f64>, digits: usize) -> String {
    let decimals = digits.saturating_sub(1);
    let Some(l) = log10 else {
        return format!("{:.decimals$}e0", 0.0);
    };
    let mut exp = l.floor();
    let mut mantissa = 10f64.powf(l - exp);
    // rounding can carry the mantissa to 10
    let scale = 10f64.powi(decimals as i32);
    if (mantissa * scale).round() / scale >= 10.0 {
        mantissa /= 10.0;
        exp += 1.0;
    }
    format!("{mantissa:.decimals$}e{}", exp as i64)
}
