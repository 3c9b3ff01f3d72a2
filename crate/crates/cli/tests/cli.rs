use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fdnorm_core::io::{load_matrix, TableFormat};
use fdnorm_core::outlier::OutlierDocument;
use fdnorm_core::simulate::read_study_csv;
use tempfile::TempDir;

fn fdnorm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdnorm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// 60 features x 8 samples; sample 5 is stretched away from the rest.
fn eight_samples(dir: &Path) -> PathBuf {
    let mut text = String::from("s1,s2,s3,s4,s5,s6,s7,s8\n");
    for i in 0..60 {
        let base = 10.0 + (i as f64 * 0.37).sin() * 4.0 + i as f64 * 0.5;
        let row: Vec<String> = (0..8)
            .map(|j| {
                let wobble = ((i * 7 + j * 13) % 11) as f64 * 0.05;
                let v = if j == 4 { base * 2.5 } else { base + wobble };
                format!("{v:.4}")
            })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write(dir, "m.csv", &text)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn normalize_identical_columns_is_identity() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "m.csv", "a,b\n3,3\n1,1\n2,2\n");
    let out = dir.path().join("out");
    let o = fdnorm(&[
        "normalize", "--input", s(&input), "--reference", "deepest", "--mode", "full",
        "--output-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let before = load_matrix(&input, TableFormat::Csv, true).unwrap();
    let after = load_matrix(&out.join("normalized.csv"), TableFormat::Csv, true).unwrap();
    assert_eq!(after, before);
    for f in ["reference.csv", "depth.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn normalize_writes_svgs_and_keeps_row_names() {
    let dir = TempDir::new().unwrap();
    let input = write(
        dir.path(),
        "m.tsv",
        "gene\tx\ty\tz\ng1\t1\t10\t5\ng2\t2\t30\t6\ng3\t4\t20\t9\ng4\t8\t40\t7\n",
    );
    let out = dir.path().join("out");
    let o = fdnorm(&[
        "normalize", "--input", s(&input), "--row-names", "--boxplot-svg", "--curves-svg",
        "--output-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("normalized.csv")).unwrap();
    assert!(text.starts_with("feature,x,y,z\ng1,"), "{text}");
    for f in ["boxplot_before.svg", "boxplot_after.svg", "curves.svg"] {
        let svg = fs::read_to_string(out.join(f)).unwrap();
        assert!(svg.starts_with("<svg"), "{f}");
    }
}

#[test]
fn subset_mode_and_component_median() {
    let dir = TempDir::new().unwrap();
    let input = eight_samples(dir.path());
    let out = dir.path().join("out");
    let o = fdnorm(&[
        "normalize", "--input", s(&input), "--reference", "component-median", "--mode", "subset",
        "--quantiles", "10", "--prenorm", "none", "--output-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    // no depth for the component-wise median reference
    assert!(!out.join("depth.csv").exists());
    let m = load_matrix(&out.join("normalized.csv"), TableFormat::Csv, true).unwrap();
    assert_eq!((m.n_rows(), m.n_cols()), (60, 8));
}

#[test]
fn outliers_global_and_per_class_tables() {
    let dir = TempDir::new().unwrap();
    let input = eight_samples(dir.path());
    let labels = write(dir.path(), "labels.txt", "1\n1\n1\n1\n2\n2\n2\n2\n");
    let out = dir.path().join("out");
    let o = fdnorm(&[
        "outliers", "--input", s(&input), "--classes", s(&labels), "--target-rate", "1e-4",
        "--replicates", "100", "--seed", "7", "--output-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for label in [
        "pairs of gene",
        "expressions",
        "distance intra-pair",
        "outlier's benchmark",
        "Tukey's constant",
        "All samples",
        "Class 1",
        "Class 2",
    ] {
        assert!(text.contains(label), "missing {label:?} in\n{text}");
    }
    let doc: OutlierDocument =
        serde_json::from_str(&fs::read_to_string(out.join("outliers.json")).unwrap()).unwrap();
    assert_eq!(doc.reports.len(), 3);
    assert_eq!(doc.calibration.seed, 7);
    assert_eq!(doc.calibration.replicates, 100);
    assert_eq!(doc.reports[0].pairs.len(), 4);
    let csv = fs::read_to_string(out.join("outliers.csv")).unwrap();
    assert!(csv.starts_with("scope,rank,member_1,member_2,distance,benchmark,g_factor,flagged,flagged_sample"));
}

#[test]
fn fixed_factor_flags_the_stretched_sample() {
    let dir = TempDir::new().unwrap();
    let input = eight_samples(dir.path());
    let out = dir.path().join("out");
    let o = fdnorm(&["outliers", "--input", s(&input), "--g-factor", "1.2", "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: OutlierDocument =
        serde_json::from_str(&fs::read_to_string(out.join("outliers.json")).unwrap()).unwrap();
    let flagged: Vec<&str> = doc.reports[0]
        .flagged_samples
        .iter()
        .map(|f| f.sample_id.as_str())
        .collect();
    assert_eq!(flagged, ["s5"]);
    assert!(stdout(&o).contains("*s5"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let input = eight_samples(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = fdnorm(&[
            "outliers", "--input", s(&input), "--replicates", "20", "--output-dir", s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = fdnorm(&[
            "simulate", "--df", "5", "--delta", "0", "1", "--datasets", "2", "--genes", "60",
            "--affected", "6", "--probes", "3", "--output-dir", s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in [
        "outliers.json", "outliers.csv", "outliers.txt", "calibration.json", "study.csv",
        "study.txt", "simulation.toml",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn simulate_single_cell_study() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = fdnorm(&[
        "simulate", "--df", "10", "--delta", "2", "--datasets", "5", "--seed", "1", "--output-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_study_csv(fs::File::open(out.join("study.csv")).unwrap()).unwrap();
    let cells: std::collections::BTreeSet<(u64, u64)> = report
        .rows
        .iter()
        .map(|r| (r.df.to_bits(), r.delta.to_bits()))
        .collect();
    assert_eq!(cells.len(), 1);
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.n_datasets, 5);
    for r in &report.rows {
        assert!(r.mean_power >= 98.0, "{r:?}");
    }
    let saved = fs::read_to_string(out.join("simulation.toml")).unwrap();
    assert!(saved.contains("seed = 1"), "{saved}");
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = TempDir::new().unwrap();
    let config = write(
        dir.path(),
        "run.toml",
        "seed = 11\n[simulate]\nn_genes = 40\naffected_genes = 4\nprobes_per_gene = 2\nn_datasets = 1\ndfs = [10.0]\ndeltas = [1.0]\n",
    );
    let out = dir.path().join("out");
    let o = fdnorm(&[
        "--config", s(&config), "simulate", "--datasets", "2", "--methods", "rma", "--output-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let saved = fs::read_to_string(out.join("simulation.toml")).unwrap();
    assert!(saved.contains("n_genes = 40"), "{saved}");
    assert!(saved.contains("n_datasets = 2"), "{saved}");
    assert!(saved.contains("seed = 11"), "{saved}");
    let report = read_study_csv(fs::File::open(out.join("study.csv")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 1);

    let bad = write(dir.path(), "bad.toml", "[simulate]\nn_gens = 3\n");
    let o = fdnorm(&["--config", s(&bad), "simulate", "--output-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn depth_and_calibrate_subcommands() {
    let dir = TempDir::new().unwrap();
    let input = eight_samples(dir.path());
    let out = dir.path().join("out");
    let o = fdnorm(&["depth", "--input", s(&input), "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let depth = fs::read_to_string(out.join("depth.csv")).unwrap();
    assert_eq!(depth.lines().count(), 9);
    assert!(depth.starts_with("sample_id,border_index,depth,intra_pair_distance,pair_partner_id"));

    let o = fdnorm(&[
        "calibrate", "--input", s(&input), "--replicates", "10", "--output-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = fdnorm(&[
        "calibrate", "--samples", "6", "--features", "100", "--replicates", "10", "--output-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("Tukey's constant"));
}

#[test]
fn report_rerenders_saved_outputs() {
    let dir = TempDir::new().unwrap();
    let input = eight_samples(dir.path());
    let out = dir.path().join("out");
    let o = fdnorm(&["outliers", "--input", s(&input), "--g-factor", "1.5", "--output-dir", s(&out)]);
    assert!(o.status.success());
    let original = fs::read_to_string(out.join("outliers.txt")).unwrap();
    let o = fdnorm(&["report", "--outliers", s(&out.join("outliers.json")), "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), original);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let input = eight_samples(dir.path());
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["normalize"],
        vec!["outliers", "--input", s(&input), "--g-factor", "1", "--seed", "3"],
        vec!["normalize", "--input", s(&input), "--quantiles", "4"],
        vec!["report", "--study", "a.csv", "--outliers", "b.json"],
        vec!["calibrate", "--samples", "5"],
    ];
    for args in cases {
        let o = fdnorm(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn data_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let ragged = write(dir.path(), "ragged.csv", "a,b\n1,2\n3\n");
    let text = write(dir.path(), "text.csv", "a,b\n1,x\n");
    let single = write(dir.path(), "single.csv", "a\n1\n2\n");
    let good = eight_samples(dir.path());
    let labels = write(dir.path(), "labels.txt", "1\n1\n2\n");
    let missing = dir.path().join("missing.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["normalize", "--input", s(&missing)],
        vec!["normalize", "--input", s(&ragged)],
        vec!["normalize", "--input", s(&text)],
        vec!["depth", "--input", s(&single)],
        vec!["outliers", "--input", s(&good), "--classes", s(&labels)],
        vec!["simulate", "--samples", "7"],
    ];
    for args in cases {
        let o = fdnorm(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"), "{args:?}");
    }
}
