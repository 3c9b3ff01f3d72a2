//! Probe-set summarization and two-group differential expression testing.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::matrix::{ClassPartition, ExpressionMatrix};
use crate::stats;

/// Probe intensities with contiguous per-gene probe blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeMatrix {
    pub values: ExpressionMatrix,
    probe_to_gene: Vec<usize>,
    /// `blocks[g]` is the half-open probe range of gene `g`.
    blocks: Vec<(usize, usize)>,
}

impl ProbeMatrix {
    pub fn new(values: ExpressionMatrix, probe_to_gene: Vec<usize>) -> Result<Self> {
        if probe_to_gene.len() != values.n_rows() {
            return Err(Error::Dimension(format!(
                "{} gene indices for {} probes",
                probe_to_gene.len(),
                values.n_rows()
            )));
        }
        let mut blocks: Vec<(usize, usize)> = Vec::new();
        for (p, &g) in probe_to_gene.iter().enumerate() {
            match blocks.len() {
                len if g == len => blocks.push((p, p + 1)),
                len if len > 0 && g == len - 1 => blocks[len - 1].1 = p + 1,
                _ => {
                    return Err(Error::Dimension(format!(
                        "probe {p} maps to gene {g}; genes must be numbered 0.. in contiguous blocks"
                    )))
                }
            }
        }
        Ok(Self {
            values,
            probe_to_gene,
            blocks,
        })
    }

    /// `n_genes` blocks of `probes_per_gene` consecutive probes.
    pub fn uniform(values: ExpressionMatrix, probes_per_gene: usize) -> Result<Self> {
        if probes_per_gene == 0 || !values.n_rows().is_multiple_of(probes_per_gene) {
            return Err(Error::Dimension(format!(
                "{} probes do not split into blocks of {probes_per_gene}",
                values.n_rows()
            )));
        }
        let map = (0..values.n_rows()).map(|p| p / probes_per_gene).collect();
        Self::new(values, map)
    }

    pub fn n_genes(&self) -> usize {
        self.blocks.len()
    }

    pub fn probe_to_gene(&self) -> &[usize] {
        &self.probe_to_gene
    }

    /// Row-major `probes × samples` copy of one gene's block.
    pub fn block(&self, gene: usize) -> Block {
        let (start, end) = self.blocks[gene];
        let n = self.values.n_cols();
        let mut data = Vec::with_capacity((end - start) * n);
        for p in start..end {
            for j in 0..n {
                data.push(self.values.get(p, j));
            }
        }
        Block {
            rows: end - start,
            cols: n,
            data,
        }
    }
}

/// Small dense row-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Block {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "block of {} values cannot be {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// Two-way decomposition `x[i][j] = overall + row[i] + col[j] + residual[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianPolish {
    pub overall: f64,
    pub row_effects: Vec<f64>,
    pub col_effects: Vec<f64>,
    pub residuals: Block,
    pub iterations: usize,
    pub converged: bool,
}

impl MedianPolish {
    /// Per-column summaries `overall + col[j]`.
    pub fn summaries(&self) -> Vec<f64> {
        self.col_effects.iter().map(|c| self.overall + c).collect()
    }
}

pub const MEDIAN_POLISH_MAX_ITER: usize = 20;
pub const MEDIAN_POLISH_TOL: f64 = 0.01;

/// Full median polish, rows swept first. Stops once the total absolute
/// median removed in one row+column sweep is at most `tol`.
pub fn median_polish(block: &Block, max_iter: usize, tol: f64) -> MedianPolish {
    let (p, n) = (block.rows, block.cols);
    let mut resid = block.data.clone();
    let mut row = vec![0.0; p];
    let mut col = vec![0.0; n];
    let mut overall = 0.0;
    let mut scratch = Vec::with_capacity(p.max(n));
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let mut change = 0.0;

        for i in 0..p {
            let r = &mut resid[i * n..(i + 1) * n];
            scratch.clear();
            scratch.extend_from_slice(r);
            let m = stats::median_in_place(&mut scratch);
            r.iter_mut().for_each(|v| *v -= m);
            row[i] += m;
            change += m.abs();
        }
        scratch.clear();
        scratch.extend_from_slice(&col);
        let m = stats::median_in_place(&mut scratch);
        col.iter_mut().for_each(|v| *v -= m);
        overall += m;

        for j in 0..n {
            scratch.clear();
            scratch.extend((0..p).map(|i| resid[i * n + j]));
            let m = stats::median_in_place(&mut scratch);
            for i in 0..p {
                resid[i * n + j] -= m;
            }
            col[j] += m;
            change += m.abs();
        }
        scratch.clear();
        scratch.extend_from_slice(&row);
        let m = stats::median_in_place(&mut scratch);
        row.iter_mut().for_each(|v| *v -= m);
        overall += m;

        if change <= tol {
            converged = true;
            break;
        }
    }

    MedianPolish {
        overall,
        row_effects: row,
        col_effects: col,
        residuals: Block {
            rows: p,
            cols: n,
            data: resid,
        },
        iterations,
        converged,
    }
}

pub const BIWEIGHT_C: f64 = 5.0;
pub const BIWEIGHT_EPS: f64 = 1e-4;

/// Tukey biweight location, iterated from the median with the MAD held
/// fixed. Returns the median when the MAD is zero.
pub fn biweight_location(values: &[f64], c: f64, eps: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("biweight of an empty sample".into()));
    }
    let median = stats::median(values).expect("non-empty");
    let mad = stats::mad(values).expect("non-empty");
    if mad == 0.0 {
        return Ok(median);
    }
    let scale = c * mad + eps;
    let mut t = median;
    for _ in 0..50 {
        let (mut num, mut den) = (0.0, 0.0);
        for &x in values {
            let u = (x - t) / scale;
            if u.abs() < 1.0 {
                let w = (1.0 - u * u).powi(2);
                num += w * x;
                den += w;
            }
        }
        if den == 0.0 {
            break;
        }
        let next = num / den;
        let delta = (next - t).abs();
        t = next;
        if delta <= 1e-9 {
            break;
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summarizer {
    MedianPolish,
    /// Per-column biweight within a gene block. With `center_probes`, the
    /// per-probe medians are removed first and their median added back.
    Biweight { c: f64, center_probes: bool },
}

impl Summarizer {
    pub fn biweight() -> Self {
        Summarizer::Biweight {
            c: BIWEIGHT_C,
            center_probes: false,
        }
    }
}

fn summarize_block(block: &Block, method: Summarizer) -> Result<Vec<f64>> {
    match method {
        Summarizer::MedianPolish => {
            Ok(median_polish(block, MEDIAN_POLISH_MAX_ITER, MEDIAN_POLISH_TOL).summaries())
        }
        Summarizer::Biweight { c, center_probes } => {
            let mut b = block.clone();
            if center_probes {
                let mut medians = Vec::with_capacity(b.rows);
                for i in 0..b.rows {
                    let r = &mut b.data[i * b.cols..(i + 1) * b.cols];
                    let m = stats::median(r).expect("non-empty row");
                    r.iter_mut().for_each(|v| *v -= m);
                    medians.push(m);
                }
                let shift = stats::median(&medians).expect("non-empty block");
                b.data.iter_mut().for_each(|v| *v += shift);
            }
            (0..b.cols)
                .map(|j| biweight_location(&b.column(j), c, BIWEIGHT_EPS))
                .collect()
        }
    }
}

/// Collapse each probe block to one value per sample.
pub fn summarize_genes(pm: &ProbeMatrix, method: Summarizer) -> Result<ExpressionMatrix> {
    let n = pm.values.n_cols();
    let rows = (0..pm.n_genes())
        .into_par_iter()
        .map(|g| summarize_block(&pm.block(g), method))
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(rows.iter().all(|r| r.len() == n));
    ExpressionMatrix::from_rows(&rows, Some(pm.values.sample_ids().to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: Vec<f64>,
    pub p_value: Vec<f64>,
    pub truth: Option<Vec<bool>>,
}

impl TestResult {
    pub fn with_truth(mut self, truth: Vec<bool>) -> Result<Self> {
        if truth.len() != self.p_value.len() {
            return Err(Error::Dimension(format!(
                "{} truth labels for {} tests",
                truth.len(),
                self.p_value.len()
            )));
        }
        self.truth = Some(truth);
        Ok(self)
    }
}

/// Two-sided Student t tail probability `P(|T| >= |t|)` with `df` degrees of
/// freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Welch statistic and two-sided p-value for one pair of samples. Zero
/// standard error gives `(0, 1)` for equal means and `(±inf, 0)` otherwise.
pub fn welch(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (na - 1.0);
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nb - 1.0);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let diff = ma - mb;
    if se2 == 0.0 {
        return if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, t_two_sided_p(t, df))
}

/// Per-gene Welch test, class 1 against class 2.
pub fn two_sample_ttest(gm: &ExpressionMatrix, groups: &ClassPartition) -> Result<TestResult> {
    if groups.class_count() != 2 {
        return Err(Error::Partition(format!(
            "two-sample test needs 2 classes, got {}",
            groups.class_count()
        )));
    }
    if groups.len() != gm.n_cols() {
        return Err(Error::Partition(format!(
            "{} labels for {} columns",
            groups.len(),
            gm.n_cols()
        )));
    }
    let (g1, g2) = (groups.members(1), groups.members(2));
    let (statistic, p_value): (Vec<f64>, Vec<f64>) = (0..gm.n_rows())
        .into_par_iter()
        .map(|i| {
            let a: Vec<f64> = g1.iter().map(|&j| gm.get(i, j)).collect();
            let b: Vec<f64> = g2.iter().map(|&j| gm.get(i, j)).collect();
            welch(&a, &b)
        })
        .unzip();
    Ok(TestResult {
        statistic,
        p_value,
        truth: None,
    })
}

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Power in percent and the number of false discoveries at level `alpha`
/// (a test is a discovery when `p < alpha`).
pub fn power_false_discovery(tr: &TestResult, alpha: f64) -> Result<(f64, usize)> {
    let truth = tr
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("test result carries no truth labels".into()))?;
    let n_true = truth.iter().filter(|&&t| t).count();
    if n_true == 0 {
        return Err(Error::Domain("power is undefined without true effects".into()));
    }
    let mut hits = 0;
    let mut false_hits = 0;
    for (&p, &t) in tr.p_value.iter().zip(truth) {
        if p < alpha {
            if t {
                hits += 1;
            } else {
                false_hits += 1;
            }
        }
    }
    Ok((100.0 * hits as f64 / n_true as f64, false_hits))
}

/// CSV: `gene,statistic,p,flagged,truth`.
pub fn write_test_csv<W: Write>(writer: W, tr: &TestResult, alpha: f64) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["gene", "statistic", "p", "flagged", "truth"])?;
    for (i, (&t, &p)) in tr.statistic.iter().zip(&tr.p_value).enumerate() {
        let truth = tr
            .truth
            .as_ref()
            .map(|v| v[i].to_string())
            .unwrap_or_default();
        wtr.write_record([
            (i + 1).to_string(),
            format!("{t}"),
            format!("{p}"),
            (p < alpha).to_string(),
            truth,
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<test writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polish_two_by_two() {
        let b = Block::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let mp = median_polish(&b, 20, 0.01);
        assert!(mp.residuals.data.iter().all(|&r| r == 0.0));
        let s = mp.summaries();
        assert_eq!(s[1] - s[0], 1.0);
        assert_eq!(mp.overall, 2.5);
        assert_eq!(mp.row_effects, vec![-1.0, 1.0]);
        assert_eq!(mp.col_effects, vec![-0.5, 0.5]);
    }

    #[test]
    fn polish_single_row() {
        let b = Block::from_rows(&[vec![3.0, 7.0, 1.0]]).unwrap();
        let mp = median_polish(&b, 20, 0.01);
        assert_eq!(mp.summaries(), vec![3.0, 7.0, 1.0]);
        assert!(mp.residuals.data.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn polish_additive_block() {
        let r = [0.5, -1.0, 2.0, 0.25];
        let c = [1.0, 3.0, -2.0];
        let rows: Vec<Vec<f64>> = r.iter().map(|ri| c.iter().map(|cj| ri + cj).collect()).collect();
        let mp = median_polish(&Block::from_rows(&rows).unwrap(), 20, 0.01);
        assert!(mp.residuals.data.iter().all(|&x| x.abs() < 1e-12));
        let s = mp.summaries();
        let shift = s[0] - c[0];
        for j in 0..3 {
            assert!((s[j] - c[j] - shift).abs() < 1e-12);
        }
    }

    #[test]
    fn biweight_examples() {
        assert_eq!(biweight_location(&[2.0, 2.0, 2.0], 5.0, 1e-4).unwrap(), 2.0);
        let sym = biweight_location(&[1.0, 2.0, 3.0, 4.0, 5.0], 5.0, 1e-4).unwrap();
        assert!((sym - 3.0).abs() < 1e-9);
        let r = biweight_location(&[1.0, 2.0, 3.0, 4.0, 100.0], 5.0, 1e-4).unwrap();
        assert!(r > 2.0 && r < 4.0);
        assert!((r - 2.5).abs() < (22.0f64 - 2.5).abs());
        assert!(biweight_location(&[], 5.0, 1e-4).is_err());
        // MAD zero: median
        assert_eq!(biweight_location(&[1.0, 1.0, 1.0, 9.0], 5.0, 1e-4).unwrap(), 1.0);
    }

    #[test]
    fn welch_degenerate_conventions() {
        assert_eq!(welch(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), (0.0, 1.0));
        let (t, p) = welch(&[0.0; 4], &[1.0; 4]);
        assert_eq!(p, 0.0);
        assert_eq!(t, f64::NEG_INFINITY);
        assert_eq!(welch(&[2.0; 3], &[2.0; 3]), (0.0, 1.0));
    }

    #[test]
    fn welch_known_value() {
        // reference values from scipy.stats.ttest_ind(equal_var=False)
        let a = [19.1, 20.2, 21.3, 18.7, 20.9];
        let b = [22.4, 21.8, 23.5, 22.9, 21.1, 24.0];
        let (t, p) = welch(&a, &b);
        assert!((t - (-3.864565260860852)).abs() < 1e-12, "t = {t}");
        assert!((p - 0.004264334468310489).abs() < 1e-10, "p = {p}");
    }

    #[test]
    fn t_tail_limits() {
        assert_eq!(t_two_sided_p(0.0, 5.0), 1.0);
        // df = 1 is Cauchy: P(|T| > 1) = 1/2
        assert!((t_two_sided_p(1.0, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(t_two_sided_p(f64::INFINITY, 3.0), 0.0);
    }

    #[test]
    fn power_counts() {
        let tr = TestResult {
            statistic: vec![0.0; 4],
            p_value: vec![0.0; 4],
            truth: None,
        }
        .with_truth(vec![true, false, false, true])
        .unwrap();
        assert_eq!(power_false_discovery(&tr, 0.05).unwrap(), (100.0, 2));
        let none = TestResult {
            p_value: vec![1.0; 4],
            ..tr.clone()
        };
        assert_eq!(power_false_discovery(&none, 0.05).unwrap(), (0.0, 0));
        let no_truth = TestResult { truth: None, ..tr };
        assert!(power_false_discovery(&no_truth, 0.05).is_err());
    }

    #[test]
    fn probe_blocks() {
        let values = ExpressionMatrix::from_rows(
            &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
            None,
        )
        .unwrap();
        let pm = ProbeMatrix::new(values.clone(), vec![0, 0, 1]).unwrap();
        assert_eq!(pm.n_genes(), 2);
        assert_eq!(pm.block(0).data, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(ProbeMatrix::new(values.clone(), vec![0, 1, 0]).is_err());
        assert!(ProbeMatrix::uniform(values, 2).is_err());
    }

    #[test]
    fn singleton_probe_sets_pass_through() {
        let values = ExpressionMatrix::from_rows(&[vec![1.0, 2.0, 5.0], vec![3.0, 4.0, 0.5]], None).unwrap();
        let pm = ProbeMatrix::uniform(values.clone(), 1).unwrap();
        assert_eq!(summarize_genes(&pm, Summarizer::MedianPolish).unwrap(), values);
        assert_eq!(summarize_genes(&pm, Summarizer::biweight()).unwrap(), values);
    }
}
