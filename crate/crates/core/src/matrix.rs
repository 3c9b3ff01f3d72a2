//! Expression matrix model and elementary column transforms.
//!
//! Values are stored column-major: every sample column is a contiguous slice,
//! which is what the depth kernels and the quantile mappings iterate over.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// A features × samples matrix of finite values with sample identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
    sample_ids: Vec<String>,
    class_labels: Option<Vec<u32>>,
    sorted: bool,
}

/// Default sample identifiers: 1-based column indices.
pub fn default_sample_ids(n: usize) -> Vec<String> {
    (1..=n).map(|j| j.to_string()).collect()
}

impl ExpressionMatrix {
    /// Build from sample columns. `sample_ids` defaults to `"1".."n"`.
    pub fn from_columns(columns: Vec<Vec<f64>>, sample_ids: Option<Vec<String>>) -> Result<Self> {
        let n_cols = columns.len();
        if n_cols == 0 {
            return Err(Error::Dimension("matrix has no columns".into()));
        }
        let n_rows = columns[0].len();
        if n_rows == 0 {
            return Err(Error::Dimension("matrix has no rows".into()));
        }
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::Dimension(format!(
                    "column {} has length {}, expected {n_rows}",
                    j + 1,
                    col.len()
                )));
            }
            data.extend_from_slice(col);
        }
        Self::from_column_major(n_rows, n_cols, data, sample_ids)
    }

    /// Build from feature rows, each holding one value per sample.
    pub fn from_rows(rows: &[Vec<f64>], sample_ids: Option<Vec<String>>) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(Error::Dimension("matrix has no rows".into()));
        }
        let n_cols = rows[0].len();
        let mut data = vec![0.0; n_rows * n_cols];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                data[j * n_rows + i] = v;
            }
        }
        Self::from_column_major(n_rows, n_cols, data, sample_ids)
    }

    pub(crate) fn from_column_major(
        n_rows: usize,
        n_cols: usize,
        data: Vec<f64>,
        sample_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be non-empty, got {n_rows}x{n_cols}"
            )));
        }
        debug_assert_eq!(data.len(), n_rows * n_cols);
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at row {}, column {}",
                pos % n_rows + 1,
                pos / n_rows + 1
            )));
        }
        let sample_ids = match sample_ids {
            Some(ids) if ids.len() != n_cols => {
                return Err(Error::Dimension(format!(
                    "{} sample ids for {n_cols} columns",
                    ids.len()
                )))
            }
            Some(ids) => ids,
            None => default_sample_ids(n_cols),
        };
        Ok(Self {
            n_rows,
            n_cols,
            data,
            sample_ids,
            class_labels: None,
            sorted: false,
        })
    }

    /// Attach class labels (one per column).
    pub fn with_class_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.n_cols {
            return Err(Error::Dimension(format!(
                "{} class labels for {} columns",
                labels.len(),
                self.n_cols
            )));
        }
        self.class_labels = Some(labels);
        Ok(self)
    }

    /// Number of features (rows), the `G` of the model.
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Number of samples (columns).
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n_rows)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.n_rows + row]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_cols).map(|j| self.get(i, j)).collect()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn class_labels(&self) -> Option<&[u32]> {
        self.class_labels.as_deref()
    }

    /// True when every column is known to be non-decreasing.
    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    /// Column-major backing storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Checks that every value is a non-negative integer (count data).
    pub fn validate_counts(&self) -> Result<()> {
        match self
            .data
            .iter()
            .position(|&v| v < 0.0 || v.fract() != 0.0)
        {
            None => Ok(()),
            Some(pos) => Err(Error::Domain(format!(
                "value {} at row {}, column {} is not a non-negative integer count",
                self.data[pos],
                pos % self.n_rows + 1,
                pos / self.n_rows + 1
            ))),
        }
    }

    /// Sub-matrix of the given columns, in the given order; labels follow.
    /// Submatrix of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyResult);
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n_rows) {
            return Err(Error::Dimension(format!("row {bad} out of range")));
        }
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for col in self.columns() {
            data.extend(rows.iter().map(|&i| col[i]));
        }
        let ordered = rows.windows(2).all(|w| w[0] < w[1]);
        Ok(Self {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            data,
            sample_ids: self.sample_ids.clone(),
            class_labels: self.class_labels.clone(),
            sorted: self.sorted && ordered,
        })
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(cols.len() * self.n_rows);
        for &j in cols {
            if j >= self.n_cols {
                return Err(Error::Dimension(format!("column index {j} out of range")));
            }
            data.extend_from_slice(self.column(j));
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            data,
            sample_ids: cols.iter().map(|&j| self.sample_ids[j].clone()).collect(),
            class_labels: self
                .class_labels
                .as_ref()
                .map(|l| cols.iter().map(|&j| l[j]).collect()),
            sorted: self.sorted,
        })
    }

    /// Same shape and metadata, new column-major values.
    pub(crate) fn with_data(&self, data: Vec<f64>, sorted: bool) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data,
            sample_ids: self.sample_ids.clone(),
            class_labels: self.class_labels.clone(),
            sorted,
        }
    }

    /// Apply `f` to every column independently (in parallel) and collect the
    /// results in column order.
    pub(crate) fn map_columns<F>(&self, sorted: bool, f: F) -> Self
    where
        F: Fn(usize, &[f64]) -> Vec<f64> + Sync,
    {
        let cols: Vec<Vec<f64>> = (0..self.n_cols)
            .into_par_iter()
            .map(|j| f(j, self.column(j)))
            .collect();
        self.with_data(cols.concat(), sorted)
    }

    /// Apply `f` elementwise.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_data(self.data.iter().map(|&v| f(v)).collect(), self.sorted)
    }
}

/// Class membership for per-class analyses and two-group tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    labels: Vec<u32>,
    class_count: u32,
}

impl ClassPartition {
    /// Labels must cover `1..=max` with at least two members per class.
    pub fn new(labels: Vec<u32>) -> Result<Self> {
        let class_count = labels.iter().copied().max().unwrap_or(0);
        if class_count == 0 || labels.contains(&0) {
            return Err(Error::Partition("labels must be integers >= 1".into()));
        }
        for k in 1..=class_count {
            let size = labels.iter().filter(|&&l| l == k).count();
            if size < 2 {
                return Err(Error::Partition(format!(
                    "class {k} has {size} member(s); at least 2 are required"
                )));
            }
        }
        Ok(Self {
            labels,
            class_count,
        })
    }

    /// First half of `n` columns in class 1, second half in class 2.
    pub fn two_halves(n: usize) -> Result<Self> {
        let half = n / 2;
        Self::new((0..n).map(|j| if j < half { 1 } else { 2 }).collect())
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Column indices belonging to class `k`.
    pub fn members(&self, k: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(j, &l)| (l == k).then_some(j))
            .collect()
    }
}

/// Indices of rows with at most `max_zeros` zero entries.
pub fn rows_with_few_zeros(m: &ExpressionMatrix, max_zeros: usize) -> Result<Vec<usize>> {
    if max_zeros > m.n_cols() {
        return Err(Error::Domain(format!(
            "max_zeros {max_zeros} exceeds the number of samples {}",
            m.n_cols()
        )));
    }
    Ok((0..m.n_rows())
        .filter(|&i| (0..m.n_cols()).filter(|&j| m.get(i, j) == 0.0).count() <= max_zeros)
        .collect())
}

/// Keep rows with at most `max_zeros` zero entries.
pub fn filter_zero_rows(m: &ExpressionMatrix, max_zeros: usize) -> Result<ExpressionMatrix> {
    m.select_rows(&rows_with_few_zeros(m, max_zeros)?)
}

/// Elementwise `ln(x + 1)`.
pub fn log1_transform(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    if let Some(pos) = m.data.iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "negative value {} at row {}, column {}",
            m.data[pos],
            pos % m.n_rows + 1,
            pos / m.n_rows + 1
        )));
    }
    Ok(m.map_values(f64::ln_1p))
}

/// Elementwise base-2 logarithm; every value must be positive.
pub fn log2_transform(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    if let Some(&v) = m.data.iter().find(|&&v| v <= 0.0) {
        return Err(Error::Domain(format!("log2 of non-positive value {v}")));
    }
    Ok(m.map_values(f64::log2))
}

/// Sort every column ascending (the `X*` of quantile normalization).
pub fn column_sort(m: &ExpressionMatrix) -> ExpressionMatrix {
    if m.sorted {
        return m.clone();
    }
    m.map_columns(true, |_, col| {
        let mut c = col.to_vec();
        c.sort_by(f64::total_cmp);
        c
    })
}

/// Per-row medians across samples.
pub fn component_wise_median(m: &ExpressionMatrix) -> crate::normalize::ReferenceCurve {
    let values = (0..m.n_rows())
        .into_par_iter()
        .map(|i| {
            let mut row = m.row(i);
            stats::median_in_place(&mut row)
        })
        .collect();
    crate::normalize::ReferenceCurve::new(values, crate::normalize::ReferenceSource::ComponentMedian)
}

/// Column statistic equated by linear pre-normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    Median,
    Q75,
    Mean,
    Sum,
}

impl Anchor {
    pub fn evaluate(self, column: &[f64]) -> f64 {
        match self {
            Anchor::Median => stats::median(column).expect("non-empty column"),
            Anchor::Q75 => {
                let mut c = column.to_vec();
                c.sort_by(f64::total_cmp);
                stats::quantile_sorted(&c, 0.75)
            }
            Anchor::Mean => stats::mean(column),
            Anchor::Sum => column.iter().sum(),
        }
    }
}

impl std::str::FromStr for Anchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "median" => Ok(Anchor::Median),
            "q75" | "third-quartile" => Ok(Anchor::Q75),
            "mean" => Ok(Anchor::Mean),
            "sum" => Ok(Anchor::Sum),
            other => Err(Error::Config(format!("unknown anchor {other:?}"))),
        }
    }
}

/// Scale factors that bring each column's anchor statistic to the median of
/// the per-column anchors.
pub fn prenormalize_factors(m: &ExpressionMatrix, anchor: Anchor) -> Result<Vec<f64>> {
    let anchors: Vec<f64> = m.columns().map(|c| anchor.evaluate(c)).collect();
    for (j, &a) in anchors.iter().enumerate() {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::DegenerateScale {
                column: m.sample_ids[j].clone(),
                reason: format!("{anchor:?} anchor is {a}"),
            });
        }
    }
    let grand = stats::median(&anchors).expect("at least one column");
    Ok(anchors.iter().map(|a| grand / a).collect())
}

/// Multiply each column so that all share the same anchor statistic.
pub fn linear_prenormalize(m: &ExpressionMatrix, anchor: Anchor) -> Result<ExpressionMatrix> {
    let factors = prenormalize_factors(m, anchor)?;
    Ok(m.map_columns(m.sorted, |j, col| {
        col.iter().map(|v| v * factors[j]).collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(c: &[&[f64]]) -> ExpressionMatrix {
        ExpressionMatrix::from_columns(c.iter().map(|c| c.to_vec()).collect(), None).unwrap()
    }

    #[test]
    fn rows_and_columns_agree() {
        let m = ExpressionMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]], None)
            .unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (3, 2));
        assert_eq!(m.column(1), &[2.0, 4.0, 6.0]);
        assert_eq!(m.sample_ids(), &["1", "2"]);
        assert!(!m.is_sorted());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            ExpressionMatrix::from_columns(vec![vec![1.0, f64::NAN]], None),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn filter_zero_rows_keeps_rows_within_budget() {
        let m = ExpressionMatrix::from_rows(
            &[vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0], vec![0.0, 5.0, 6.0]],
            None,
        )
        .unwrap();
        let f = filter_zero_rows(&m, 1).unwrap();
        assert_eq!(f.n_rows(), 2);
        assert_eq!(f.row(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(f.row(1), vec![0.0, 5.0, 6.0]);
        assert_eq!(filter_zero_rows(&m, 3).unwrap(), m);
    }

    #[test]
    fn filter_all_zero_is_empty_result() {
        let m = cols(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(filter_zero_rows(&m, 0), Err(Error::EmptyResult)));
    }

    #[test]
    fn log1_values() {
        let e = std::f64::consts::E;
        let m = cols(&[&[0.0, e - 1.0, e * e - 1.0], &[0.0, 0.0, 0.0]]);
        let l = log1_transform(&m).unwrap();
        assert_eq!(l.get(0, 0), 0.0);
        assert!((l.get(1, 0) - 1.0).abs() < 1e-15);
        assert!((l.get(2, 0) - 2.0).abs() < 1e-15);
        assert!(matches!(
            log1_transform(&cols(&[&[-1.0], &[1.0]])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn column_sort_basic() {
        let m = cols(&[&[3.0, 1.0, 2.0], &[2.0, 2.0, 1.0]]);
        let s = column_sort(&m);
        assert!(s.is_sorted());
        assert_eq!(s.column(0), &[1.0, 2.0, 3.0]);
        assert_eq!(s.column(1), &[1.0, 2.0, 2.0]);
        assert_eq!(column_sort(&s), s);
    }

    #[test]
    fn component_median_examples() {
        let m = cols(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(component_wise_median(&m).values(), &[2.0, 3.0]);
        let single = cols(&[&[4.0, 1.0, 7.0]]);
        assert_eq!(component_wise_median(&single).values(), &[4.0, 1.0, 7.0]);
        // five points of R^3 as columns; median falls at (1, 1, 0)
        let five = cols(&[
            &[0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[1.0, 2.0, 5.0],
            &[3.0, 1.0, 5.0],
        ]);
        assert_eq!(component_wise_median(&five).values(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn prenormalize_median_anchor() {
        let m = cols(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]]);
        // anchors 2 and 4, grand anchor 3
        assert_eq!(prenormalize_factors(&m, Anchor::Median).unwrap(), vec![1.5, 0.75]);
        let p = linear_prenormalize(&m, Anchor::Median).unwrap();
        assert_eq!(p.column(0), &[1.5, 3.0, 4.5]);
        assert_eq!(p.column(1), &[1.5, 3.0, 4.5]);
    }

    #[test]
    fn prenormalize_sum_anchor() {
        let m = cols(&[&[1.0, 2.0, 3.0, 4.0], &[3.0, 6.0, 9.0, 12.0]]);
        let f = prenormalize_factors(&m, Anchor::Sum).unwrap();
        assert_eq!(f[0], 2.0);
        assert!((f[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn prenormalize_identical_and_degenerate() {
        let m = cols(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]);
        assert_eq!(linear_prenormalize(&m, Anchor::Q75).unwrap(), m);
        let z = cols(&[&[0.0, 0.0, 3.0], &[1.0, 2.0, 3.0]]);
        assert!(matches!(
            linear_prenormalize(&z, Anchor::Median),
            Err(Error::DegenerateScale { .. })
        ));
    }

    #[test]
    fn partition_validation() {
        assert!(ClassPartition::new(vec![1, 1, 2, 2]).is_ok());
        assert!(matches!(ClassPartition::new(vec![1, 1, 2]), Err(Error::Partition(_))));
        assert!(matches!(ClassPartition::new(vec![0, 0]), Err(Error::Partition(_))));
        let p = ClassPartition::two_halves(6).unwrap();
        assert_eq!(p.members(2), vec![3, 4, 5]);
    }
}
