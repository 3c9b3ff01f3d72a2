//! Depth-ordered Tukey fences for outlying sample columns.
//!
//! Borders are visited from least deep to deepest. A border whose intra-pair
//! distance exceeds `G · IQR` contains a potential outlier, where the IQR is
//! estimated by the median of all intra-pair distances and the factor `G` is
//! calibrated by Monte Carlo under a matched multivariate normal null.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::{self, l2_distance, Border, BorderSequence, Members};
use crate::error::{Error, Result};
use crate::matrix::{self, ClassPartition, ExpressionMatrix};
use crate::stats;

/// Default fraction of columns flagged under the null.
pub const DEFAULT_TARGET_RATE: f64 = 1e-4;
/// Default number of Monte Carlo replicates.
pub const DEFAULT_REPLICATES: usize = 100;

/// Median of the border intra-pair distances, including the zero of an odd
/// final singleton.
pub fn robust_iqr(bs: &BorderSequence) -> f64 {
    stats::median(&bs.distances()).expect("border sequence is never empty")
}

/// Fitted Tukey factor and the per-replicate quantiles it summarizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyCalibration {
    pub g_factor: f64,
    /// `None` for a factor that was supplied rather than fitted.
    pub target_rate: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub per_replicate_quantiles: Vec<f64>,
}

impl TukeyCalibration {
    /// A fixed factor with no Monte Carlo record behind it.
    pub fn fixed(g_factor: f64) -> Self {
        Self {
            g_factor,
            target_rate: None,
            replicates: 0,
            seed: 0,
            per_replicate_quantiles: Vec::new(),
        }
    }
}

/// Clip negative eigenvalues to zero, then rescale so the diagonal of the
/// input is kept.
pub fn repair_psd(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if n != cov.ncols() {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("covariance has non-finite entries".into()));
    }
    let scale = cov.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::Numeric(format!("covariance is not symmetric at ({i}, {j})")));
            }
        }
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(sym);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let mut out = rebuilt.clone();
    for i in 0..n {
        let target = sym[(i, i)];
        let have = rebuilt[(i, i)];
        if target < 0.0 || (target > 0.0 && !(have > 0.0)) {
            return Err(Error::Numeric(format!(
                "covariance cannot be repaired: diagonal entry {i} is {target}"
            )));
        }
    }
    for i in 0..n {
        for j in 0..n {
            let si = ratio_sqrt(sym[(i, i)], rebuilt[(i, i)]);
            let sj = ratio_sqrt(sym[(j, j)], rebuilt[(j, j)]);
            out[(i, j)] = rebuilt[(i, j)] * si * sj;
        }
    }
    Ok(out)
}

fn ratio_sqrt(target: f64, have: f64) -> f64 {
    if have > 0.0 {
        (target / have).sqrt()
    } else {
        0.0
    }
}

/// Factor `L` with `L Lᵀ = cov` for a positive semi-definite `cov`.
fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Per-column ratio of its border distance to the robust IQR.
fn column_ratios(bs: &BorderSequence, iqr: f64) -> Vec<f64> {
    let mut ratios = Vec::with_capacity(bs.n);
    for b in &bs.borders {
        let r = if iqr > 0.0 {
            b.distance / iqr
        } else if b.distance > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        for _ in b.members.indices() {
            ratios.push(r);
        }
    }
    ratios
}

/// One null replicate: draw, sort, peel, and take the `1 - target_rate`
/// quantile of the per-column distance ratios.
fn replicate_quantile(
    factor: &DMatrix<f64>,
    n_features: usize,
    target_rate: f64,
    seed: u64,
    replicate: usize,
) -> Result<f64> {
    let n = factor.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    let mut columns = vec![vec![0.0; n_features]; n];
    let mut z = vec![0.0; n];
    for i in 0..n_features {
        for zk in z.iter_mut() {
            *zk = StandardNormal.sample(&mut rng);
        }
        for (j, col) in columns.iter_mut().enumerate() {
            let mut v = 0.0;
            for (k, zk) in z.iter().enumerate() {
                v += factor[(j, k)] * zk;
            }
            col[i] = v;
        }
    }
    let m = matrix::column_sort(&ExpressionMatrix::from_columns(columns, None)?);
    let (bs, _) = depth::depth_of(&m)?;
    let iqr = robust_iqr(&bs);
    let mut ratios = column_ratios(&bs, iqr);
    ratios.sort_by(f64::total_cmp);
    Ok(stats::quantile_sorted(&ratios, 1.0 - target_rate))
}

/// Monte Carlo estimate of the Tukey factor for `n` samples of
/// `n_features` features with inter-sample covariance `cov`.
///
/// Replicate `r` draws from its own ChaCha stream of `seed`, so the result
/// does not depend on scheduling.
pub fn calibrate_g(
    n: usize,
    n_features: usize,
    cov: &DMatrix<f64>,
    target_rate: f64,
    replicates: usize,
    seed: u64,
) -> Result<TukeyCalibration> {
    if n < 2 {
        return Err(Error::Dimension("calibration needs at least 2 samples".into()));
    }
    if n_features < 1 {
        return Err(Error::Dimension("calibration needs at least 1 feature".into()));
    }
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, expected {n}x{n}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::Config(format!("target rate {target_rate} is not in (0, 1)")));
    }
    if replicates < 1 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    let factor = psd_factor(&repair_psd(cov)?);
    let per_replicate_quantiles = (0..replicates)
        .into_par_iter()
        .map(|r| replicate_quantile(&factor, n_features, target_rate, seed, r))
        .collect::<Result<Vec<f64>>>()?;
    let g_factor = stats::median(&per_replicate_quantiles).expect("replicates >= 1");
    Ok(TukeyCalibration {
        g_factor,
        target_rate: Some(target_rate),
        replicates,
        seed,
        per_replicate_quantiles,
    })
}

/// Normal-consistency factor for the MAD.
pub const MAD_NORMAL_SCALE: f64 = 1.4826;

/// Robust inter-sample covariance: MAD scales, Spearman correlations mapped
/// to the Pearson scale by `2 sin(π ρ / 6)`, repaired to be PSD.
pub fn robust_covariance(m: &ExpressionMatrix) -> Result<DMatrix<f64>> {
    if m.n_rows() < 3 {
        return Err(Error::Dimension(format!(
            "robust covariance needs at least 3 features, got {}",
            m.n_rows()
        )));
    }
    let n = m.n_cols();
    let scales: Vec<f64> = m
        .columns()
        .map(|c| MAD_NORMAL_SCALE * stats::mad(c).expect("non-empty column"))
        .collect();
    if let Some(j) = scales.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateScale {
            column: m.sample_ids()[j].clone(),
            reason: "median absolute deviation is zero".into(),
        });
    }
    let centred_ranks: Vec<Vec<f64>> = m
        .columns()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|c| {
            let r = stats::average_ranks(c);
            let mean = stats::mean(&r);
            r.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centred_ranks
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        cov[(i, i)] = scales[i] * scales[i];
        for j in 0..i {
            let dot: f64 = centred_ranks[i]
                .iter()
                .zip(&centred_ranks[j])
                .map(|(a, b)| a * b)
                .sum();
            let rho = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            let r = (2.0 * (std::f64::consts::PI * rho / 6.0).sin()).clamp(-1.0, 1.0);
            let c = r * scales[i] * scales[j];
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    repair_psd(&cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    Class(u32),
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Global => write!(f, "global"),
            Scope::Class(k) => write!(f, "class {k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagRule {
    /// The pair member farther (L2) from the deepest element.
    FartherFromDeepest,
    /// Both members of the pair.
    BothMembers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedSample {
    pub column: usize,
    pub sample_id: String,
    pub rule: FlagRule,
}

/// One border with its members expressed as matrix columns and sample ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPair {
    pub columns: Vec<usize>,
    pub sample_ids: Vec<String>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub scope: Scope,
    pub pairs: Vec<ReportPair>,
    pub iqr_estimate: f64,
    pub g_factor: f64,
    pub benchmark: f64,
    /// Length of the flagged prefix of `pairs`.
    pub flagged_pairs: usize,
    pub flagged_samples: Vec<FlaggedSample>,
    pub deepest: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectScope {
    #[default]
    Global,
    PerClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectOptions {
    /// Flag both members of every flagged pair.
    pub both_members: bool,
}

/// Length of the prefix of borders whose distance strictly exceeds
/// `benchmark`.
pub fn flagged_prefix(bs: &BorderSequence, benchmark: f64) -> usize {
    bs.borders
        .iter()
        .take_while(|b| b.distance > benchmark)
        .count()
}

/// The member of `(a, b)` farther from `reference`; `a` on a tie.
pub fn farther_member(m: &ExpressionMatrix, a: usize, b: usize, reference: &[f64]) -> usize {
    let da = l2_distance(m.column(a), reference);
    let db = l2_distance(m.column(b), reference);
    if db > da {
        b
    } else {
        a
    }
}

/// Apply the flagging rule to one set of columns.
fn report_for(
    m: &ExpressionMatrix,
    cols: &[usize],
    g_factor: f64,
    scope: Scope,
    opts: DetectOptions,
) -> Result<OutlierReport> {
    let sub = m.select_columns(cols)?;
    let (local, _) = depth::depth_of(&sub)?;
    let bs = local.remap(cols);
    let iqr = robust_iqr(&bs);
    let benchmark = g_factor * iqr;
    let prefix = flagged_prefix(&bs, benchmark);

    let deepest_cols = bs.deepest().members.indices();
    let reference = depth::average_columns(m, &deepest_cols);

    let mut flagged_samples = Vec::new();
    for border in &bs.borders[..prefix] {
        let Members::Pair(a, b) = border.members else {
            continue;
        };
        let picked: Vec<(usize, FlagRule)> = if opts.both_members {
            vec![(a, FlagRule::BothMembers), (b, FlagRule::BothMembers)]
        } else {
            vec![(farther_member(m, a, b, &reference), FlagRule::FartherFromDeepest)]
        };
        for (column, rule) in picked {
            flagged_samples.push(FlaggedSample {
                column,
                sample_id: m.sample_ids()[column].clone(),
                rule,
            });
        }
    }

    let ids = m.sample_ids();
    Ok(OutlierReport {
        scope,
        pairs: bs
            .borders
            .iter()
            .map(|b: &Border| {
                let columns = b.members.indices();
                ReportPair {
                    sample_ids: columns.iter().map(|&j| ids[j].clone()).collect(),
                    columns,
                    distance: b.distance,
                }
            })
            .collect(),
        iqr_estimate: iqr,
        g_factor,
        benchmark,
        flagged_pairs: prefix,
        flagged_samples,
        deepest: deepest_cols.iter().map(|&j| ids[j].clone()).collect(),
    })
}

/// Flag outlying columns of a column-sorted matrix, globally or within each
/// class. Per-class runs reuse the global factor.
pub fn detect_outliers(
    m: &ExpressionMatrix,
    cal: &TukeyCalibration,
    scope: DetectScope,
    labels: Option<&ClassPartition>,
    opts: DetectOptions,
) -> Result<Vec<OutlierReport>> {
    if !m.is_sorted() {
        return Err(Error::NotSorted);
    }
    if !(cal.g_factor >= 0.0) {
        return Err(Error::Config(format!("Tukey factor {} is negative", cal.g_factor)));
    }
    match scope {
        DetectScope::Global => {
            let cols: Vec<usize> = (0..m.n_cols()).collect();
            Ok(vec![report_for(m, &cols, cal.g_factor, Scope::Global, opts)?])
        }
        DetectScope::PerClass => {
            let labels = labels
                .ok_or_else(|| Error::Partition("per-class detection needs class labels".into()))?;
            if labels.len() != m.n_cols() {
                return Err(Error::Partition(format!(
                    "{} labels for {} columns",
                    labels.len(),
                    m.n_cols()
                )));
            }
            (1..=labels.class_count())
                .map(|k| {
                    let cols = labels.members(k);
                    if cols.len() < 2 {
                        return Err(Error::Partition(format!("class {k} has fewer than 2 members")));
                    }
                    report_for(m, &cols, cal.g_factor, Scope::Class(k), opts)
                })
                .collect()
        }
    }
}

/// Group thousands with commas and keep one decimal
/// (`484,974.7`); a zero decimal is dropped.
pub fn format_distance(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded = format!("{:.1}", v.abs());
    let (int, frac) = rounded.split_once('.').expect("one decimal");
    let mut grouped = String::new();
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    let sign = if v < 0.0 { "-" } else { "" };
    if frac == "0" {
        format!("{sign}{grouped}")
    } else {
        format!("{sign}{grouped}.{frac}")
    }
}

/// Text table: pairs from least deep to deepest, their distances, the
/// benchmark and the factor.
/// Flagged distances and flagged sample ids carry a `*`.
pub fn format_report_table(report: &OutlierReport, title: &str) -> String {
    let flagged: Vec<&str> = report
        .flagged_samples
        .iter()
        .map(|f| f.sample_id.as_str())
        .collect();
    let mark = |id: &str| {
        if flagged.contains(&id) {
            format!("*{id}")
        } else {
            id.to_owned()
        }
    };
    let mut top = Vec::new();
    let mut bottom = Vec::new();
    let mut dist = Vec::new();
    for (k, p) in report.pairs.iter().enumerate() {
        top.push(mark(&p.sample_ids[0]));
        bottom.push(p.sample_ids.get(1).map(|s| mark(s)).unwrap_or_else(|| "-".into()));
        let d = format_distance(p.distance);
        dist.push(if k < report.flagged_pairs { format!("*{d}") } else { d });
    }
    let width = top
        .iter()
        .chain(&bottom)
        .chain(&dist)
        .map(|s| s.len())
        .max()
        .unwrap_or(1)
        + 2;
    let label_w = 22;
    let row = |label: &str, cells: &[String]| {
        let mut s = format!("{label:<label_w$}");
        for c in cells {
            s.push_str(&format!("{c:>width$}"));
        }
        s.push('\n');
        s
    };
    let mut out = format!("{title}\n");
    out.push_str(&row("pairs of gene", &top));
    out.push_str(&row("expressions", &bottom));
    out.push_str(&row("distance intra-pair", &dist));
    out.push_str(&format!(
        "{:<label_w$}{:>width$}\n",
        "outlier's benchmark",
        format_distance(report.benchmark)
    ));
    out.push_str(&format!(
        "{:<label_w$}{:>width$}\n",
        "Tukey's constant",
        format!("{:.2}", report.g_factor)
    ));
    out
}

/// CSV with one line per border:
/// `scope,rank,member_1,member_2,distance,benchmark,flagged,flagged_sample`.
pub fn write_reports_csv<W: Write>(writer: W, reports: &[OutlierReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "scope",
        "rank",
        "member_1",
        "member_2",
        "distance",
        "benchmark",
        "g_factor",
        "flagged",
        "flagged_sample",
    ])?;
    for r in reports {
        for (k, p) in r.pairs.iter().enumerate() {
            let flagged = k < r.flagged_pairs;
            let sample = if flagged {
                r.flagged_samples
                    .iter()
                    .filter(|f| p.columns.contains(&f.column))
                    .map(|f| f.sample_id.clone())
                    .collect::<Vec<_>>()
                    .join(";")
            } else {
                String::new()
            };
            wtr.write_record([
                r.scope.to_string(),
                (k + 1).to_string(),
                p.sample_ids[0].clone(),
                p.sample_ids.get(1).cloned().unwrap_or_default(),
                format!("{}", p.distance),
                format!("{}", r.benchmark),
                format!("{}", r.g_factor),
                flagged.to_string(),
                sample,
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<outlier writer>", e))?;
    Ok(())
}

/// JSON document with the calibration and every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierDocument {
    pub calibration: TukeyCalibration,
    pub reports: Vec<OutlierReport>,
}
