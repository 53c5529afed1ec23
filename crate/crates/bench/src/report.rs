//! CSV, SVG and manifest emission.
//!
//! CSV bytes depend only on the report contents; the creation time is written
//! to `manifest.json` alone so that reruns give byte-identical CSV files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use flowlab_core::RNG_ALGORITHM;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{BenchError, BenchResult};
use crate::svg::Chart;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_HEADER: [&str; 9] = [
    "experiment",
    "seq_mode",
    "noise_mode",
    "T",
    "n_max",
    "seed_count",
    "metric",
    "mean",
    "stderr",
];

/// Shortest round-trip decimal form of `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// One group of runs sharing sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub seq_mode: String,
    pub noise_mode: String,
    #[serde(rename = "T")]
    pub steps: Option<usize>,
    pub n_max: Option<usize>,
    pub seeds: Vec<u64>,
}

impl Cell {
    pub fn untimed(seeds: Vec<u64>) -> Self {
        Self {
            seq_mode: String::new(),
            noise_mode: String::new(),
            steps: None,
            n_max: None,
            seeds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// Index into [`Report::cells`].
    pub cell: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
}

/// A per-run CSV table; each row belongs to a cell when `Some`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<(Option<usize>, Vec<String>)>,
}

impl Table {
    pub fn new(file: impl Into<String>, header: Vec<String>) -> Self {
        Self {
            file: file.into(),
            header,
            rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: Experiment,
    pub cells: Vec<Cell>,
    pub summary: Vec<SummaryRow>,
    pub tables: Vec<Table>,
    /// Plots keyed by file name; written only when plotting is enabled.
    pub plots: Vec<(String, Chart)>,
    /// Extra binary artifacts (e.g. a trained model), written as is.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            cells: Vec::new(),
            summary: Vec::new(),
            tables: Vec::new(),
            plots: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn push_cell(&mut self, cell: Cell) -> usize {
        self.cells.push(cell);
        self.cells.len() - 1
    }

    pub fn push_metric(&mut self, cell: usize, metric: &str, mean: f64, stderr: f64) -> BenchResult<()> {
        if !mean.is_finite() || !stderr.is_finite() {
            return Err(BenchError::Numerical(format!("metric {metric} is not finite")));
        }
        self.summary.push(SummaryRow {
            cell,
            metric: metric.to_string(),
            mean,
            stderr,
        });
        Ok(())
    }

    pub fn metric(&self, cell: usize, metric: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.cell == cell && r.metric == metric)
    }

    /// `summary.csv` contents.
    pub fn summary_csv(&self) -> BenchResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SUMMARY_HEADER)?;
        for row in &self.summary {
            let cell = &self.cells[row.cell];
            let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                self.experiment.name().to_string(),
                cell.seq_mode.clone(),
                cell.noise_mode.clone(),
                opt(cell.steps),
                opt(cell.n_max),
                cell.seeds.len().to_string(),
                row.metric.clone(),
                fmt_f64(row.mean),
                fmt_f64(row.stderr),
            ])?;
        }
        into_bytes(w)
    }
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> BenchResult<Vec<u8>> {
    w.into_inner()
        .map_err(|e| BenchError::config(format!("csv flush: {e}")))
}

fn table_csv(table: &Table) -> BenchResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for (_, row) in &table.rows {
        w.write_record(row)?;
    }
    into_bytes(w)
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestCell {
    #[serde(flatten)]
    pub cell: Cell,
    /// 1-based line numbers (header is line 1) per CSV file.
    pub rows: Vec<(String, Vec<usize>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub rng: String,
    pub config_hash: String,
    pub config: String,
    pub created_unix: u64,
    pub outputs: Vec<OutputEntry>,
    pub cells: Vec<ManifestCell>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> BenchResult<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| BenchError::path(&path, e))?;
    Ok(path)
}

/// Writes `summary.csv`, the per-run tables, artifacts, plots when `plot`,
/// and `manifest.json`; returns the written paths in that order.
pub fn emit_report(report: &Report, cfg: &ExperimentConfig, out_dir: &Path, plot: bool) -> BenchResult<Vec<PathBuf>> {
    if report.summary.is_empty() {
        return Err(BenchError::config("report has no summary rows"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| BenchError::path(out_dir, e))?;
    let mut files: Vec<(String, Vec<u8>)> = vec![(SUMMARY_FILE.to_string(), report.summary_csv()?)];
    for table in &report.tables {
        files.push((table.file.clone(), table_csv(table)?));
    }
    files.extend(report.artifacts.iter().cloned());
    if plot {
        for (name, chart) in &report.plots {
            files.push((name.clone(), chart.render().into_bytes()));
        }
    }

    let mut written = Vec::new();
    let mut outputs = Vec::new();
    for (name, bytes) in &files {
        written.push(write_file(out_dir, name, bytes)?);
        outputs.push(OutputEntry {
            file: name.clone(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
    }

    let cells = report
        .cells
        .iter()
        .enumerate()
        .map(|(id, cell)| {
            let summary_lines = report
                .summary
                .iter()
                .enumerate()
                .filter(|(_, r)| r.cell == id)
                .map(|(i, _)| i + 2)
                .collect();
            let mut rows = vec![(SUMMARY_FILE.to_string(), summary_lines)];
            for table in &report.tables {
                let lines: Vec<usize> = table
                    .rows
                    .iter()
                    .enumerate()
                    .filter(|(_, (c, _))| *c == Some(id))
                    .map(|(i, _)| i + 2)
                    .collect();
                if !lines.is_empty() {
                    rows.push((table.file.clone(), lines));
                }
            }
            ManifestCell {
                cell: cell.clone(),
                rows,
            }
        })
        .collect();
    let manifest = RunManifest {
        tool: "flowlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: report.experiment.name().into(),
        rng: RNG_ALGORITHM.into(),
        config_hash: cfg.hash(),
        config: cfg.canonical_toml(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        outputs,
        cells,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    written.push(write_file(out_dir, MANIFEST_FILE, &json)?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svg::Series;

    fn report() -> Report {
        let mut r = Report::new(Experiment::Edit);
        let c = r.push_cell(Cell {
            seq_mode: "target".into(),
            noise_mode: "estimated".into(),
            steps: Some(20),
            n_max: Some(14),
            seeds: vec![0, 1],
        });
        r.push_metric(c, "smoothness", 0.25, 0.01).unwrap();
        r.push_metric(c, "structure_distance", 1.0 / 3.0, 0.0).unwrap();
        let mut t = Table::new("runs.csv", vec!["seed".into(), "x".into()]);
        t.rows.push((Some(c), vec!["0".into(), "1.5".into()]));
        t.rows.push((Some(c), vec!["1".into(), "2.5".into()]));
        r.tables.push(t);
        r.plots.push(("p.svg".into(), Chart::new("p", "x", "y").with_series(Series::line("a", vec![(0.0, 0.0)]))));
        r
    }

    #[test]
    fn summary_columns_and_values() {
        let csv = String::from_utf8(report().summary_csv().unwrap()).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "experiment,seq_mode,noise_mode,T,n_max,seed_count,metric,mean,stderr");
        assert_eq!(lines[1], "edit,target,estimated,20,14,2,smoothness,0.25,0.01");
        assert_eq!(lines[2], "edit,target,estimated,20,14,2,structure_distance,0.3333333333333333,0.0");
    }

    #[test]
    fn non_finite_metric_is_numerical() {
        let mut r = report();
        assert_eq!(r.push_metric(0, "bad", f64::NAN, 0.0).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn emit_writes_files_and_traceable_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let files = emit_report(&report(), &cfg, dir.path(), true).unwrap();
        let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["summary.csv", "runs.csv", "p.svg", "manifest.json"]);
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest["config_hash"], cfg.hash());
        assert_eq!(manifest["rng"], RNG_ALGORITHM);
        assert_eq!(manifest["cells"][0]["rows"][0][1], serde_json::json!([2, 3]));
        assert_eq!(manifest["cells"][0]["rows"][1][0], "runs.csv");

        let again = tempfile::tempdir().unwrap();
        emit_report(&report(), &cfg, again.path(), false).unwrap();
        for f in ["summary.csv", "runs.csv"] {
            assert_eq!(
                std::fs::read(dir.path().join(f)).unwrap(),
                std::fs::read(again.path().join(f)).unwrap()
            );
        }
        assert!(!again.path().join("p.svg").exists());
    }

    #[test]
    fn unwritable_directory_is_a_path_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = emit_report(&report(), &ExperimentConfig::default(), &blocker.join("sub"), false).unwrap_err();
        assert!(matches!(err, BenchError::Path { .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn empty_report_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = Report::new(Experiment::Edit);
        assert!(emit_report(&r, &ExperimentConfig::default(), dir.path(), false).is_err());
    }
}
