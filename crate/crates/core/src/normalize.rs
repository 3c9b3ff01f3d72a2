//! Quantile mapping of sample columns onto a reference curve.
//!
//! Two mappings are provided. The full mapping replaces every value by the
//! reference value at its within-column rank. The subset mapping matches a
//! grid of quantiles between column and reference and interpolates linearly
//! between neighbouring knots.

use serde::{Deserialize, Serialize};

use crate::depth::{self, DepthResult};
use crate::error::{Error, Result};
use crate::matrix::{self, Anchor, ExpressionMatrix};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    ComponentMedian,
    Deepest,
    DeepestPairAverage,
}

/// Target distribution for quantile mapping, one value per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCurve {
    values: Vec<f64>,
    source: ReferenceSource,
}

impl ReferenceCurve {
    pub fn new(values: Vec<f64>, source: ReferenceSource) -> Self {
        Self { values, source }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> ReferenceSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_non_decreasing(&self) -> bool {
        stats::is_non_decreasing(&self.values)
    }

    fn check_against(&self, m: &ExpressionMatrix) -> Result<()> {
        if self.values.len() != m.n_rows() {
            return Err(Error::Dimension(format!(
                "reference has length {}, matrix has {} rows",
                self.values.len(),
                m.n_rows()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("reference curve has non-finite values".into()));
        }
        if !self.is_non_decreasing() {
            return Err(Error::Domain(
                "reference curve must be non-decreasing; build it from column-sorted data".into(),
            ));
        }
        Ok(())
    }
}

/// Probability levels `0 = p_0 < p_1 < ... < p_L = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    levels: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 || levels[0] != 0.0 || *levels.last().unwrap() != 1.0 {
            return Err(Error::Config(
                "quantile grid must start at 0 and end at 1".into(),
            ));
        }
        if levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("quantile grid must be strictly increasing".into()));
        }
        Ok(Self { levels })
    }

    /// `L + 1` evenly spaced levels `k / L`.
    pub fn uniform(intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::Config("quantile grid needs at least one interval".into()));
        }
        Self::new((0..=intervals).map(|k| k as f64 / intervals as f64).collect())
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

/// Replace each value by the reference value at its within-column rank.
/// Tied values share the mean of the reference over their rank range.
pub fn quantile_normalize_full(m: &ExpressionMatrix, reference: &ReferenceCurve) -> Result<ExpressionMatrix> {
    reference.check_against(m)?;
    let refv = reference.values();
    // prefix sums give the tie averages in O(1)
    let mut prefix = Vec::with_capacity(refv.len() + 1);
    prefix.push(0.0);
    for v in refv {
        prefix.push(prefix.last().unwrap() + v);
    }
    Ok(m.map_columns(m.is_sorted(), |_, col| {
        let order = stats::sort_order(col);
        let mut out = vec![0.0; col.len()];
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && col[order[end]] == col[order[start]] {
                end += 1;
            }
            let value = if end - start == 1 || refv[start] == refv[end - 1] {
                refv[start]
            } else {
                (prefix[end] - prefix[start]) / (end - start) as f64
            };
            for &idx in &order[start..end] {
                out[idx] = value;
            }
            start = end;
        }
        out
    }))
}

/// Piecewise-linear map of one value given matched knots.
fn interpolate_knots(x: f64, col_knots: &[f64], ref_knots: &[f64]) -> f64 {
    // first knot >= x
    let hi = col_knots.partition_point(|&q| q < x);
    if hi < col_knots.len() && col_knots[hi] == x {
        // x sits on a knot; a run of equal knots maps to the midpoint of
        // the matching reference span
        let end = hi + col_knots[hi..].partition_point(|&q| q == x);
        let last = end - 1;
        if last == hi {
            return ref_knots[hi];
        }
        return 0.5 * (ref_knots[hi] + ref_knots[last]);
    }
    debug_assert!(hi > 0 && hi < col_knots.len());
    let lo = hi - 1;
    let (a, b) = (col_knots[lo], col_knots[hi]);
    let t = (x - a) / (b - a);
    ref_knots[lo] + t * (ref_knots[hi] - ref_knots[lo])
}

/// Match quantiles at the grid levels and interpolate between them.
pub fn quantile_normalize_subset(
    m: &ExpressionMatrix,
    reference: &ReferenceCurve,
    grid: &QuantileGrid,
) -> Result<ExpressionMatrix> {
    reference.check_against(m)?;
    let ref_knots: Vec<f64> = grid
        .levels()
        .iter()
        .map(|&p| stats::quantile_sorted(reference.values(), p))
        .collect();
    Ok(m.map_columns(m.is_sorted(), |_, col| {
        let mut sorted = col.to_vec();
        sorted.sort_by(f64::total_cmp);
        let col_knots: Vec<f64> = grid
            .levels()
            .iter()
            .map(|&p| stats::quantile_sorted(&sorted, p))
            .collect();
        col.iter()
            .map(|&x| interpolate_knots(x, &col_knots, &ref_knots))
            .collect()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    ComponentMedian,
    #[default]
    Deepest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    #[default]
    Full,
    Subset(QuantileGrid),
}

/// Normalization settings. The default prenormalizes by the median anchor,
/// uses the deepest sorted column as reference and maps all ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizeConfig {
    pub prenorm: Option<Anchor>,
    pub reference: ReferenceMode,
    pub mode: MappingMode,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        Self {
            prenorm: Some(Anchor::Median),
            reference: ReferenceMode::Deepest,
            mode: MappingMode::Full,
        }
    }
}

impl NormalizeConfig {
    /// Classic quantile normalization to the component-wise median.
    pub fn rma() -> Self {
        Self {
            prenorm: None,
            reference: ReferenceMode::ComponentMedian,
            mode: MappingMode::Full,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub matrix: ExpressionMatrix,
    pub reference: ReferenceCurve,
    pub borders: Option<depth::BorderSequence>,
    pub depth: Option<DepthResult>,
}

/// Prenormalize, sort, build the reference and map the (prenormalized,
/// unsorted) columns onto it. Output keeps the input row order.
pub fn normalize_pipeline(m: &ExpressionMatrix, cfg: &NormalizeConfig) -> Result<Normalized> {
    let work = match cfg.prenorm {
        Some(anchor) => matrix::linear_prenormalize(m, anchor)?,
        None => m.clone(),
    };
    let sorted = matrix::column_sort(&work);
    let (reference, borders, depth) = match cfg.reference {
        ReferenceMode::ComponentMedian => (matrix::component_wise_median(&sorted), None, None),
        ReferenceMode::Deepest => {
            let (r, bs, d) = depth::deepest_reference(&sorted)?;
            (r, Some(bs), Some(d))
        }
    };
    let matrix = match &cfg.mode {
        MappingMode::Full => quantile_normalize_full(&work, &reference)?,
        MappingMode::Subset(grid) => quantile_normalize_subset(&work, &reference, grid)?,
    };
    Ok(Normalized {
        matrix,
        reference,
        borders,
        depth,
    })
}
