use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use fdnorm_core::depth::{depth_of, write_depth_csv};
use fdnorm_core::io::{self, load_labels, load_table, Table, TableFormat};
use fdnorm_core::matrix::{
    column_sort, linear_prenormalize, rows_with_few_zeros, ClassPartition, ExpressionMatrix,
};
use fdnorm_core::normalize::{
    normalize_pipeline, MappingMode, NormalizeConfig, QuantileGrid, ReferenceMode,
};
use fdnorm_core::outlier::{
    self, calibrate_g, detect_outliers, format_report_table, robust_covariance, DetectOptions,
    DetectScope, OutlierDocument, OutlierReport, Scope, TukeyCalibration, DEFAULT_REPLICATES,
    DEFAULT_TARGET_RATE,
};
use fdnorm_core::plot;
use fdnorm_core::simulate::{self, run_study, Method, SimulationConfig};
use fdnorm_core::DEFAULT_SEED;
use nalgebra::DMatrix;

use crate::args::{
    CalibrateArgs, CalibrationArgs, Cli, Command, DepthArgs, InputArgs, ModeArg, NormalizeArgs,
    OutliersArgs, PrenormArg, ReferenceArg, ReportArgs, SimulateArgs,
};
use crate::config::{FileConfig, InputSection};

const DEFAULT_QUANTILES: usize = 100;
const CURVE_POINTS: usize = 400;

pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

struct Session {
    out_dir: PathBuf,
    file: FileConfig,
    written: Vec<PathBuf>,
}

impl Session {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Create `name` in the output directory and hand a buffered writer to `f`.
    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    ) -> anyhow::Result<()> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> anyhow::Result<()> {
        self.write(name, |w| Ok(w.write_all(text.as_bytes())?))
    }
}

pub fn run(cli: Cli) -> Outcome {
    let file = FileConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("configuring {n} threads: {e}"))?;
    }
    let out_dir = cli
        .output_dir
        .clone()
        .or_else(|| file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let mut ctx = Session {
        out_dir,
        file,
        written: Vec::new(),
    };

    match cli.command {
        Command::Normalize(a) => normalize(&mut ctx, a)?,
        Command::Depth(a) => depth_cmd(&mut ctx, a)?,
        Command::Outliers(a) => outliers(&mut ctx, a)?,
        Command::Calibrate(a) => calibrate(&mut ctx, a)?,
        Command::Simulate(a) => simulate_cmd(&mut ctx, a)?,
        Command::Report(a) => report(&mut ctx, a)?,
    }
    for p in &ctx.written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn load_input(args: &InputArgs, cfg: &InputSection) -> anyhow::Result<Table> {
    let format = match (args.format, &cfg.format) {
        (Some(f), _) => f.into(),
        (None, Some(name)) => name.parse::<TableFormat>()?,
        (None, None) => TableFormat::from_path(&args.input),
    };
    let header = !args.no_header && cfg.header.unwrap_or(true);
    let row_names = args.row_names || cfg.row_names.unwrap_or(false);
    let table = load_table(&args.input, format, header, row_names)?;
    match args.max_zeros.or(cfg.max_zeros) {
        Some(k) => {
            let keep = rows_with_few_zeros(&table.matrix, k)?;
            let kept = table.select_rows(&keep)?;
            eprintln!(
                "kept {} of {} features with at most {k} zeros",
                kept.matrix.n_rows(),
                table.matrix.n_rows()
            );
            Ok(kept)
        }
        None => Ok(table),
    }
}

fn prenormalize(m: &ExpressionMatrix, prenorm: PrenormArg) -> anyhow::Result<ExpressionMatrix> {
    Ok(match prenorm.anchor() {
        Some(anchor) => linear_prenormalize(m, anchor)?,
        None => m.clone(),
    })
}

fn normalize(ctx: &mut Session, a: NormalizeArgs) -> Outcome {
    let sec = &ctx.file.normalize;
    let reference = a.reference.or(sec.reference).unwrap_or(ReferenceArg::Deepest);
    let mode = a.mode.or(sec.mode).unwrap_or(ModeArg::Full);
    let quantiles = a.quantiles.or(sec.quantiles);
    let prenorm = a.prenorm.or(sec.prenorm).unwrap_or(PrenormArg::Median);
    if mode == ModeArg::Full && a.quantiles.is_some() {
        return Err(Failure::Usage("--quantiles only applies to --mode subset".into()));
    }
    let mapping = match mode {
        ModeArg::Full => MappingMode::Full,
        ModeArg::Subset => MappingMode::Subset(QuantileGrid::uniform(
            quantiles.unwrap_or(DEFAULT_QUANTILES),
        )?),
    };
    let cfg = NormalizeConfig {
        prenorm: prenorm.anchor(),
        reference: match reference {
            ReferenceArg::Deepest => ReferenceMode::Deepest,
            ReferenceArg::ComponentMedian => ReferenceMode::ComponentMedian,
        },
        mode: mapping,
    };

    let table = load_input(&a.input, &ctx.file.input)?;
    let m = &table.matrix;
    let out = normalize_pipeline(m, &cfg)?;

    ctx.write("normalized.csv", |w| {
        Ok(io::write_table(w, &out.matrix, table.row_names.as_deref(), TableFormat::Csv)?)
    })?;
    ctx.write("reference.csv", |w| {
        Ok(io::write_vector(w, "reference", out.reference.values())?)
    })?;
    if let (Some(bs), Some(d)) = (&out.borders, &out.depth) {
        ctx.write("depth.csv", |w| Ok(write_depth_csv(w, m.sample_ids(), bs, d)?))?;
        let deepest: Vec<&str> = d.deepest.iter().map(|&j| m.sample_ids()[j].as_str()).collect();
        println!("deepest sample(s): {}", deepest.join(", "));
    }
    if a.boxplot_svg {
        let before = plot::boxplot_svg(
            &plot::log1_summaries(m)?,
            m.sample_ids(),
            "log(x+1) before normalization",
        )?;
        let after = plot::boxplot_svg(
            &plot::log1_summaries(&out.matrix)?,
            m.sample_ids(),
            "log(x+1) after normalization",
        )?;
        ctx.write_text("boxplot_before.svg", &before)?;
        ctx.write_text("boxplot_after.svg", &after)?;
    }
    if a.curves_svg {
        let sorted = column_sort(&prenormalize(m, prenorm)?);
        let d = match &out.depth {
            Some(d) => d.clone(),
            None => depth_of(&sorted)?.1,
        };
        let svg = plot::depth_curves_svg(&sorted, &d, "sorted samples by depth", CURVE_POINTS)?;
        ctx.write_text("curves.svg", &svg)?;
    }
    println!(
        "normalized {} features x {} samples to the {} reference",
        m.n_rows(),
        m.n_cols(),
        match reference {
            ReferenceArg::Deepest => "deepest",
            ReferenceArg::ComponentMedian => "component-wise median",
        }
    );
    Ok(())
}

fn depth_cmd(ctx: &mut Session, a: DepthArgs) -> Outcome {
    let prenorm = a.prenorm.or(ctx.file.depth.prenorm).unwrap_or(PrenormArg::Median);
    let table = load_input(&a.input, &ctx.file.input)?;
    let m = &table.matrix;
    let sorted = column_sort(&prenormalize(m, prenorm)?);
    let (bs, d) = depth_of(&sorted)?;
    ctx.write("depth.csv", |w| Ok(write_depth_csv(w, m.sample_ids(), &bs, &d)?))?;
    if a.curves_svg {
        let svg = plot::depth_curves_svg(&sorted, &d, "sorted samples by depth", CURVE_POINTS)?;
        ctx.write_text("curves.svg", &svg)?;
    }
    for (k, b) in bs.borders.iter().enumerate() {
        let ids: Vec<&str> = b
            .members
            .indices()
            .iter()
            .map(|&j| m.sample_ids()[j].as_str())
            .collect();
        println!(
            "border {:>3}  depth {:.4}  distance {}  [{}]",
            k + 1,
            (k + 1) as f64 / m.n_cols() as f64,
            outlier::format_distance(b.distance),
            ids.join(", ")
        );
    }
    Ok(())
}

struct CalibrationChoice {
    target_rate: f64,
    replicates: usize,
    seed: u64,
}

fn calibration_choice(ctx: &Session, a: &CalibrationArgs) -> CalibrationChoice {
    let sec = &ctx.file.outliers;
    CalibrationChoice {
        target_rate: a.target_rate.or(sec.target_rate).unwrap_or(DEFAULT_TARGET_RATE),
        replicates: a.replicates.or(sec.replicates).unwrap_or(DEFAULT_REPLICATES),
        seed: a.seed.or(ctx.file.seed).unwrap_or(DEFAULT_SEED),
    }
}

fn calibrate_for(m: &ExpressionMatrix, c: &CalibrationChoice) -> anyhow::Result<TukeyCalibration> {
    let cov = robust_covariance(m)?;
    Ok(calibrate_g(
        m.n_cols(),
        m.n_rows(),
        &cov,
        c.target_rate,
        c.replicates,
        c.seed,
    )?)
}

fn report_title(r: &OutlierReport) -> String {
    match r.scope {
        Scope::Global => "All samples".to_owned(),
        Scope::Class(k) => format!("Class {k}"),
    }
}

fn outliers(ctx: &mut Session, a: OutliersArgs) -> Outcome {
    let sec = &ctx.file.outliers;
    let prenorm = a.prenorm.or(sec.prenorm).unwrap_or(PrenormArg::None);
    let explicit_calibration = a.calibration.target_rate.is_some()
        || a.calibration.replicates.is_some()
        || a.calibration.seed.is_some();
    let g_factor = a.g_factor.or(if explicit_calibration { None } else { sec.g_factor });
    let opts = DetectOptions {
        both_members: a.both_members || sec.both_members.unwrap_or(false),
    };

    let table = load_input(&a.input, &ctx.file.input)?;
    let m = prenormalize(&table.matrix, prenorm)?;
    let classes = match &a.classes {
        Some(path) => {
            let labels = load_labels(path)?;
            if labels.len() != m.n_cols() {
                return Err(anyhow!(
                    "{} has {} labels for {} samples",
                    path.display(),
                    labels.len(),
                    m.n_cols()
                )
                .into());
            }
            Some(ClassPartition::new(labels)?)
        }
        None => None,
    };

    let cal = match g_factor {
        Some(g) => TukeyCalibration::fixed(g),
        None => calibrate_for(&m, &calibration_choice(ctx, &a.calibration))?,
    };
    let sorted = column_sort(&m);
    let mut reports = detect_outliers(&sorted, &cal, DetectScope::Global, None, opts)?;
    if let Some(classes) = &classes {
        reports.extend(detect_outliers(&sorted, &cal, DetectScope::PerClass, Some(classes), opts)?);
    }

    let text: String = reports
        .iter()
        .map(|r| format_report_table(r, &report_title(r)))
        .collect::<Vec<_>>()
        .join("\n");
    print!("{text}");
    ctx.write_text("outliers.txt", &text)?;
    ctx.write("outliers.csv", |w| Ok(outlier::write_reports_csv(w, &reports)?))?;
    let doc = OutlierDocument {
        calibration: cal.clone(),
        reports,
    };
    ctx.write("outliers.json", |w| Ok(serde_json::to_writer_pretty(w, &doc)?))?;
    ctx.write("calibration.json", |w| Ok(serde_json::to_writer_pretty(w, &cal)?))?;
    Ok(())
}

fn calibrate(ctx: &mut Session, a: CalibrateArgs) -> Outcome {
    let choice = calibration_choice(ctx, &a.calibration);
    let cal = match a.input_args() {
        Some(input) => {
            let prenorm = a.prenorm.or(ctx.file.outliers.prenorm).unwrap_or(PrenormArg::None);
            let table = load_input(&input, &ctx.file.input)?;
            calibrate_for(&prenormalize(&table.matrix, prenorm)?, &choice)?
        }
        None => {
            let n = a.samples.expect("clap requires --samples without --input");
            let g = a.features.expect("clap pairs --features with --samples");
            calibrate_g(
                n,
                g,
                &DMatrix::identity(n, n),
                choice.target_rate,
                choice.replicates,
                choice.seed,
            )?
        }
    };
    println!(
        "Tukey's constant {:.4} (target rate {}, {} replicates, seed {})",
        cal.g_factor,
        choice.target_rate,
        cal.replicates,
        cal.seed
    );
    ctx.write("calibration.json", |w| Ok(serde_json::to_writer_pretty(w, &cal)?))?;
    Ok(())
}

/// Defaults, then the `[simulate]` table and top-level seed of the config
/// file, then flags.
fn simulation_config(ctx: &Session, a: &SimulateArgs) -> anyhow::Result<SimulationConfig> {
    let mut table = toml::Table::try_from(SimulationConfig::default())?;
    if let Some(seed) = ctx.file.seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    if let Some(overlay) = &ctx.file.simulate {
        for (k, v) in overlay {
            table.insert(k.clone(), v.clone());
        }
    }
    let mut cfg: SimulationConfig = table
        .try_into()
        .context("invalid [simulate] section in config")?;
    if !a.df.is_empty() {
        cfg.dfs = a.df.clone();
    }
    if !a.delta.is_empty() {
        cfg.deltas = a.delta.clone();
    }
    if let Some(v) = a.datasets {
        cfg.n_datasets = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.samples {
        cfg.n_samples = v;
    }
    if let Some(v) = a.genes {
        cfg.n_genes = v;
    }
    if let Some(v) = a.probes {
        cfg.probes_per_gene = v;
    }
    if let Some(v) = a.affected {
        cfg.affected_genes = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate_cmd(ctx: &mut Session, a: SimulateArgs) -> Outcome {
    let cfg = simulation_config(ctx, &a)?;
    let methods: BTreeSet<Method> = if a.methods.is_empty() {
        Method::ALL.into()
    } else {
        a.methods.iter().map(|&m| m.into()).collect()
    };
    let report = run_study(&cfg, &methods)?;
    let table = simulate::format_study_table(&report, Some(cfg.n_genes - cfg.affected_genes));
    print!("{table}");
    ctx.write("study.csv", |w| Ok(simulate::write_study_csv(w, &report)?))?;
    ctx.write_text("study.txt", &table)?;
    ctx.write_text("simulation.toml", &cfg.to_toml())?;
    Ok(())
}

fn read_file(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn report(ctx: &mut Session, a: ReportArgs) -> Outcome {
    let text = if let Some(path) = &a.study {
        let report = simulate::read_study_csv(read_file(path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        simulate::format_study_table(&report, None)
    } else {
        let path = a.outliers.as_ref().expect("clap requires one source");
        let doc: OutlierDocument = serde_json::from_reader(read_file(path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        doc.reports
            .iter()
            .map(|r| format_report_table(r, &report_title(r)))
            .collect::<Vec<_>>()
            .join("\n")
    };
    print!("{text}");
    ctx.write_text("report.txt", &text)?;
    Ok(())
}
