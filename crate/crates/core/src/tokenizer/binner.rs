use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::tokenizer::event::{ClinicalEvent, EventKind};

/// Default number of quantile bins (deciles).
pub const DEFAULT_BIN_COUNT: usize = 10;
/// Groups with fewer observations fall back to the per-kind binner.
pub const DEFAULT_MIN_GROUP_SIZE: usize = 50;

/// Empirical-quantile discretizer for one group of numeric values.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileBinner {
    boundaries: Vec<f64>,
}

impl QuantileBinner {
    /// Boundary `i` (1-based) is the empirical `i/Q` quantile taken as the
    /// inverse of the empirical CDF, i.e. the `ceil(i*n/Q)`-th smallest value.
    pub fn fit(values: &[f64], bin_count: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("quantile binner values"));
        }
        if bin_count < 2 {
            return Err(Error::invalid(format!("bin count must be at least 2, got {bin_count}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("quantile binner values must be finite"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let boundaries = (1..bin_count)
            .map(|i| {
                // ceil(i*n/Q) without floating error
                let rank = (i * n).div_ceil(bin_count);
                sorted[rank.max(1) - 1]
            })
            .collect();
        Ok(QuantileBinner { boundaries })
    }

    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(Error::invalid("a binner needs at least one boundary"));
        }
        if boundaries.windows(2).any(|w| w[0] > w[1]) || boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("binner boundaries must be finite and nondecreasing"));
        }
        Ok(QuantileBinner { boundaries })
    }

    pub fn bin_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Smallest bin `b` with `value <= boundaries[b]`, else the top bin.
    pub fn bin(&self, value: f64) -> usize {
        self.boundaries.partition_point(|&b| b < value)
    }
}

/// Free-function form of [`QuantileBinner::fit`].
pub fn fit_quantile_binner(values: &[f64], bin_count: usize) -> Result<QuantileBinner> {
    QuantileBinner::fit(values, bin_count)
}

/// Binners keyed by `(kind, code)` with per-kind fallbacks.
#[derive(Debug, Clone, Default)]
pub struct BinnerRegistry {
    bin_count: usize,
    by_code: HashMap<(EventKind, String), QuantileBinner>,
    by_kind: HashMap<EventKind, QuantileBinner>,
}

impl BinnerRegistry {
    pub fn empty(bin_count: usize) -> Self {
        BinnerRegistry { bin_count, ..Default::default() }
    }

    /// Fit binners from every numeric event carrying a value.
    pub fn fit<'a>(
        events: impl IntoIterator<Item = &'a ClinicalEvent>,
        bin_count: usize,
        min_group_size: usize,
    ) -> Result<Self> {
        if bin_count < 2 {
            return Err(Error::invalid(format!("bin count must be at least 2, got {bin_count}")));
        }
        let mut groups: BTreeMap<(EventKind, String), Vec<f64>> = BTreeMap::new();
        for e in events {
            if let (true, Some(v)) = (e.kind.is_numeric(), e.value) {
                groups.entry((e.kind, e.code.clone())).or_default().push(v);
            }
        }
        let mut registry = BinnerRegistry::empty(bin_count);
        let mut per_kind: BTreeMap<EventKind, Vec<f64>> = BTreeMap::new();
        for ((kind, code), values) in groups {
            per_kind.entry(kind).or_default().extend_from_slice(&values);
            if values.len() >= min_group_size {
                registry.by_code.insert((kind, code), QuantileBinner::fit(&values, bin_count)?);
            }
        }
        for (kind, values) in per_kind {
            registry.by_kind.insert(kind, QuantileBinner::fit(&values, bin_count)?);
        }
        Ok(registry)
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn insert_code(&mut self, kind: EventKind, code: impl Into<String>, binner: QuantileBinner) {
        self.by_code.insert((kind, code.into()), binner);
    }

    pub fn insert_kind(&mut self, kind: EventKind, binner: QuantileBinner) {
        self.by_kind.insert(kind, binner);
    }

    /// Code-specific binner, falling back to the kind-wide one.
    pub fn lookup(&self, kind: EventKind, code: &str) -> Option<&QuantileBinner> {
        self.by_code.get(&(kind, code.to_string())).or_else(|| self.by_kind.get(&kind))
    }
}
