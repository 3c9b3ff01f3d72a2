//! Synthetic probe-level datasets and the RMA-versus-FDN comparison study.
//!
//! Probes are drawn as `center + t(df)`, floored at a small positive value,
//! shifted by `delta` for the probes of the first `affected_genes` genes in
//! the first half of the samples, then each sample is raised to its own power
//! `base_power + ε_j` to create a non-linear scale difference.

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, ClassPartition, ExpressionMatrix};
use crate::normalize::{self, NormalizeConfig};
use crate::pipeline::{self, ProbeMatrix, Summarizer, DEFAULT_ALPHA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_samples: usize,
    pub n_genes: usize,
    pub probes_per_gene: usize,
    /// Degrees of freedom of the probe t-distribution, one study block each.
    pub dfs: Vec<f64>,
    /// Shifts applied to the affected genes, one study row each.
    pub deltas: Vec<f64>,
    pub affected_genes: usize,
    pub distortion_range: (f64, f64),
    pub base_power: f64,
    pub center: f64,
    pub negative_floor: f64,
    pub n_datasets: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_samples: 12,
            n_genes: 1000,
            probes_per_gene: 11,
            dfs: vec![10.0, 5.0, 2.0],
            deltas: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            affected_genes: 100,
            distortion_range: (0.0, 2.0),
            base_power: 3.0,
            center: 3.0,
            negative_floor: 0.001,
            n_datasets: 20,
            alpha: DEFAULT_ALPHA,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_samples < 4 || !self.n_samples.is_multiple_of(2) {
            return bad(format!(
                "n_samples must be even and at least 4, got {}",
                self.n_samples
            ));
        }
        if self.n_genes < 1 || self.probes_per_gene < 1 || self.n_datasets < 1 {
            return bad("n_genes, probes_per_gene and n_datasets must be >= 1".into());
        }
        if self.affected_genes < 1 || self.affected_genes > self.n_genes {
            return bad(format!(
                "affected_genes must lie in 1..={}, got {}",
                self.n_genes, self.affected_genes
            ));
        }
        if self.dfs.is_empty() || self.dfs.iter().any(|&d| !(d > 0.0)) {
            return bad("dfs must be a non-empty list of positive values".into());
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !d.is_finite()) {
            return bad("deltas must be a non-empty list of finite values".into());
        }
        let (lo, hi) = self.distortion_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return bad(format!("invalid distortion range ({lo}, {hi})"));
        }
        if !(self.negative_floor > 0.0) {
            return bad("negative_floor must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} is not in (0, 1)", self.alpha));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_probes(&self) -> usize {
        self.n_genes * self.probes_per_gene
    }
}

/// Generator stream for one dataset. The stream depends on the dataset
/// index and the degrees of freedom but not on `delta`, so every delta row
/// of a study sees the same underlying draws.
fn dataset_rng(cfg: &SimulationConfig, df: f64, dataset_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ df.to_bits().rotate_left(17));
    rng.set_stream(dataset_seed);
    rng
}

/// One synthetic dataset and its truth vector (`true` for shifted genes).
pub fn generate_dataset(
    cfg: &SimulationConfig,
    df: f64,
    delta: f64,
    dataset_seed: u64,
) -> Result<(ProbeMatrix, Vec<bool>)> {
    cfg.validate()?;
    let mut rng = dataset_rng(cfg, df, dataset_seed);
    let (lo, hi) = cfg.distortion_range;
    let eps: Vec<f64> = (0..cfg.n_samples)
        .map(|_| if lo == hi { lo } else { rng.random_range(lo..hi) })
        .collect();
    let t = StudentT::new(df).map_err(|e| Error::Config(format!("t distribution: {e}")))?;

    let n_probes = cfg.n_probes();
    let shifted_probes = cfg.affected_genes * cfg.probes_per_gene;
    let half = cfg.n_samples / 2;
    let mut columns = Vec::with_capacity(cfg.n_samples);
    for (j, &e) in eps.iter().enumerate() {
        let power = cfg.base_power + e;
        let col: Vec<f64> = (0..n_probes)
            .map(|p| {
                let mut v = cfg.center + t.sample(&mut rng);
                if v <= 0.0 {
                    v = cfg.negative_floor;
                }
                if j < half && p < shifted_probes {
                    v += delta;
                }
                v.powf(power)
            })
            .collect();
        columns.push(col);
    }
    let values = ExpressionMatrix::from_columns(columns, None)?;
    let pm = ProbeMatrix::uniform(values, cfg.probes_per_gene)?;
    let truth = (0..cfg.n_genes).map(|g| g < cfg.affected_genes).collect();
    Ok((pm, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rma,
    FdnMedianPolish,
    FdnBiweight,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rma, Method::FdnMedianPolish, Method::FdnBiweight];

    pub fn label(self) -> &'static str {
        match self {
            Method::Rma => "RMA",
            Method::FdnMedianPolish => "FDN+median_polish",
            Method::FdnBiweight => "FDN+biweight",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rma" => Ok(Method::Rma),
            "fdn_median_polish" | "fdn+median_polish" | "fdn_mp" => Ok(Method::FdnMedianPolish),
            "fdn_biweight" | "fdn+biweight" | "fdn_m" => Ok(Method::FdnBiweight),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub df: f64,
    pub delta: f64,
    pub method: Method,
    pub mean_power: f64,
    pub mean_false_discoveries: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub n_datasets: usize,
    pub methods: Vec<Method>,
}

impl StudyReport {
    pub fn get(&self, df: f64, delta: f64, method: Method) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.df == df && r.delta == delta && r.method == method)
    }
}

/// Power (percent) and false discoveries of each method on one dataset.
pub fn evaluate_dataset(
    pm: &ProbeMatrix,
    truth: &[bool],
    methods: &BTreeSet<Method>,
    alpha: f64,
) -> Result<Vec<(Method, f64, usize)>> {
    let groups = ClassPartition::two_halves(pm.values.n_cols())?;
    let mut out = Vec::with_capacity(methods.len());

    let score = |genes: ExpressionMatrix| -> Result<(f64, usize)> {
        let tr = pipeline::two_sample_ttest(&genes, &groups)?.with_truth(truth.to_vec())?;
        let (power, fd) = pipeline::power_false_discovery(&tr, alpha)?;
        Ok((power, fd))
    };

    if methods.contains(&Method::Rma) {
        let norm = normalize::normalize_pipeline(&pm.values, &NormalizeConfig::rma())?;
        let logged = ProbeMatrix::uniform_like(pm, matrix::log2_transform(&norm.matrix)?)?;
        let (p, fd) = score(pipeline::summarize_genes(&logged, Summarizer::MedianPolish)?)?;
        out.push((Method::Rma, p, fd));
    }
    if methods.contains(&Method::FdnMedianPolish) || methods.contains(&Method::FdnBiweight) {
        let norm = normalize::normalize_pipeline(&pm.values, &NormalizeConfig::default())?;
        let logged = ProbeMatrix::uniform_like(pm, matrix::log2_transform(&norm.matrix)?)?;
        if methods.contains(&Method::FdnMedianPolish) {
            let (p, fd) = score(pipeline::summarize_genes(&logged, Summarizer::MedianPolish)?)?;
            out.push((Method::FdnMedianPolish, p, fd));
        }
        if methods.contains(&Method::FdnBiweight) {
            let (p, fd) = score(pipeline::summarize_genes(&logged, Summarizer::biweight())?)?;
            out.push((Method::FdnBiweight, p, fd));
        }
    }
    Ok(out)
}

impl ProbeMatrix {
    /// Same probe-to-gene map over new values.
    pub fn uniform_like(template: &ProbeMatrix, values: ExpressionMatrix) -> Result<ProbeMatrix> {
        ProbeMatrix::new(values, template.probe_to_gene().to_vec())
    }
}

/// Run every (df, delta) cell over `n_datasets` datasets and average.
///
/// Datasets run in parallel; results are reduced in dataset order so the
/// report does not depend on the thread count.
pub fn run_study(cfg: &SimulationConfig, methods: &BTreeSet<Method>) -> Result<StudyReport> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("at least one method is required".into()));
    }
    let mut rows = Vec::new();
    for &df in &cfg.dfs {
        for &delta in &cfg.deltas {
            let per_dataset = (0..cfg.n_datasets)
                .into_par_iter()
                .map(|d| {
                    let (pm, truth) = generate_dataset(cfg, df, delta, d as u64)?;
                    evaluate_dataset(&pm, &truth, methods, cfg.alpha)
                })
                .collect::<Result<Vec<_>>>()?;
            for &method in methods {
                let (mut power, mut fd) = (0.0, 0.0);
                for results in &per_dataset {
                    let &(_, p, f) = results
                        .iter()
                        .find(|r| r.0 == method)
                        .expect("every requested method is evaluated");
                    power += p;
                    fd += f as f64;
                }
                let k = cfg.n_datasets as f64;
                rows.push(StudyRow {
                    df,
                    delta,
                    method,
                    mean_power: power / k,
                    mean_false_discoveries: fd / k,
                });
            }
        }
    }
    Ok(StudyReport {
        rows,
        n_datasets: cfg.n_datasets,
        methods: methods.iter().copied().collect(),
    })
}

/// CSV: `df,delta,method,power,false_discoveries,n_datasets`.
pub fn write_study_csv<W: Write>(writer: W, report: &StudyReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["df", "delta", "method", "power", "false_discoveries", "n_datasets"])?;
    for r in &report.rows {
        wtr.write_record([
            format!("{}", r.df),
            format!("{}", r.delta),
            r.method.label().to_owned(),
            format!("{:.4}", r.mean_power),
            format!("{:.4}", r.mean_false_discoveries),
            report.n_datasets.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<study writer>", e))?;
    Ok(())
}

/// Parse the CSV written by [`write_study_csv`].
pub fn read_study_csv<R: std::io::Read>(reader: R) -> Result<StudyReport> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    let mut n_datasets = 0;
    let mut methods = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    row: i + 2,
                    message: format!("bad numeric field {k}"),
                })
        };
        let method: Method = rec.get(2).unwrap_or_default().parse()?;
        methods.insert(method);
        n_datasets = field(5)? as usize;
        rows.push(StudyRow {
            df: field(0)?,
            delta: field(1)?,
            method,
            mean_power: field(3)?,
            mean_false_discoveries: field(4)?,
        });
    }
    Ok(StudyReport {
        rows,
        n_datasets,
        methods: methods.into_iter().collect(),
    })
}

/// Text table with methods as columns and (df, delta) as rows: power block
/// first, then false discoveries.
pub fn format_study_table(report: &StudyReport, n_null_genes: Option<usize>) -> String {
    let methods = &report.methods;
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in &report.rows {
        if !keys.contains(&(r.df, r.delta)) {
            keys.push((r.df, r.delta));
        }
    }
    let w = 19;
    let mut out = String::new();
    let fd_title = match n_null_genes {
        Some(k) => format!("False discoveries (out of {k})"),
        None => "False discoveries".to_owned(),
    };
    out.push_str(&format!(
        "{:>6} {:>6} | {:^pw$} | {:^pw$}\n",
        "",
        "",
        "Power (%)",
        fd_title,
        pw = (w + 1) * methods.len() - 1
    ));
    out.push_str(&format!("{:>6} {:>6} |", "df", "delta"));
    for _ in 0..2 {
        for m in methods {
            out.push_str(&format!(" {:>w$}", m.label()));
        }
        out.push_str(" |");
    }
    out.pop();
    out.pop();
    out.push('\n');
    let mut last_df = None;
    for (df, delta) in keys {
        if last_df.is_some() && last_df != Some(df) {
            out.push('\n');
        }
        last_df = Some(df);
        out.push_str(&format!("{:>6} {:>6} |", df, delta));
        for m in methods {
            let v = report.get(df, delta, *m).map(|r| r.mean_power);
            out.push_str(&format!(" {:>w$}", v.map_or("-".into(), |v| format!("{v:.2}"))));
        }
        out.push_str(" |");
        for m in methods {
            let v = report.get(df, delta, *m).map(|r| r.mean_false_discoveries);
            out.push_str(&format!(" {:>w$}", v.map_or("-".into(), |v| format!("{v:.2}"))));
        }
        out.push('\n');
    }
    out.push_str(&format!("datasets per cell: {}\n", report.n_datasets));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimulationConfig {
        SimulationConfig {
            n_genes: 40,
            affected_genes: 8,
            probes_per_gene: 3,
            dfs: vec![10.0],
            deltas: vec![0.0],
            n_datasets: 2,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn truth_and_shape() {
        let cfg = small();
        let (pm, truth) = generate_dataset(&cfg, 10.0, 1.0, 0).unwrap();
        assert_eq!(pm.values.n_rows(), 120);
        assert_eq!(pm.values.n_cols(), 12);
        assert_eq!(pm.n_genes(), 40);
        assert_eq!(truth.iter().filter(|&&t| t).count(), 8);
        assert!(truth[..8].iter().all(|&t| t));
        assert!(pm.values.as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn shift_hits_only_affected_probes_of_first_half() {
        let cfg = SimulationConfig {
            distortion_range: (0.0, 0.0),
            base_power: 1.0,
            ..small()
        };
        let (a, _) = generate_dataset(&cfg, 10.0, 0.0, 3).unwrap();
        let (b, _) = generate_dataset(&cfg, 10.0, 2.0, 3).unwrap();
        for j in 0..12 {
            for p in 0..120 {
                let d = b.values.get(p, j) - a.values.get(p, j);
                let expected = if j < 6 && p < 24 { 2.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-12, "probe {p} sample {j}: {d}");
            }
        }
    }

    #[test]
    fn zero_distortion_uses_common_power() {
        let cfg = SimulationConfig {
            distortion_range: (0.0, 0.0),
            ..small()
        };
        let base = SimulationConfig {
            base_power: 1.0,
            ..cfg.clone()
        };
        let (cubed, _) = generate_dataset(&cfg, 10.0, 0.0, 1).unwrap();
        let (raw, _) = generate_dataset(&base, 10.0, 0.0, 1).unwrap();
        for (c, r) in cubed.values.as_slice().iter().zip(raw.values.as_slice()) {
            assert!((c - r.powi(3)).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = small();
        let a = generate_dataset(&cfg, 5.0, 0.5, 7).unwrap();
        let b = generate_dataset(&cfg, 5.0, 0.5, 7).unwrap();
        let c = generate_dataset(&cfg, 5.0, 0.5, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn config_validation_and_toml() {
        assert!(SimulationConfig::default().validate().is_ok());
        let odd = SimulationConfig {
            n_samples: 11,
            ..SimulationConfig::default()
        };
        assert!(odd.validate().is_err());
        let too_many = SimulationConfig {
            affected_genes: 2000,
            ..SimulationConfig::default()
        };
        assert!(too_many.validate().is_err());
        let cfg = SimulationConfig::from_toml("n_datasets = 5\ndeltas = [0.0, 2.0]\nseed = 9\n").unwrap();
        assert_eq!(cfg.n_datasets, 5);
        assert_eq!(cfg.deltas, vec![0.0, 2.0]);
        assert_eq!(cfg.n_genes, 1000);
        assert_eq!(SimulationConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(SimulationConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn rma_only_report_shape() {
        let cfg = small();
        let methods: BTreeSet<Method> = [Method::Rma].into();
        let report = run_study(&cfg, &methods).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].method, Method::Rma);
        let r = &report.rows[0];
        assert!((0.0..=100.0).contains(&r.mean_power));
        assert!(r.mean_false_discoveries <= 32.0);
    }

    #[test]
    fn study_csv_round_trip() {
        let cfg = small();
        let report = run_study(&cfg, &Method::ALL.into()).unwrap();
        let mut buf = Vec::new();
        write_study_csv(&mut buf, &report).unwrap();
        let back = read_study_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows.len(), 3);
        assert_eq!(back.methods, report.methods);
        for (a, b) in back.rows.iter().zip(&report.rows) {
            assert!((a.mean_power - b.mean_power).abs() < 1e-4);
        }
        let table = format_study_table(&report, Some(32));
        assert!(table.contains("FDN+biweight"));
        assert!(table.contains("out of 32"));
    }
}
