//! Noise-level sweep over the benchmark experiment: analysis bounds of the
//! benchmark gain and bounds after gain iteration, one row per
//! `(table, d̄, seed)`, with medians next to the reference values.

use std::path::{Path, PathBuf};
use std::time::Instant;

use msicert_core::search::{analyze_msi, design_iterate, Plant, SearchError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{CertificateFile, PlantFile, Provenance, SOFTWARE_VERSION};
use crate::config::ExperimentConfig;
use crate::example::{self, REFERENCE_ANALYSIS, REFERENCE_DESIGN};
use crate::io::{self, IoError};
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Table {
    /// Analysis bound of the benchmark gain.
    Analysis,
    /// Bound after the analysis/design alternation.
    Design,
}

impl Table {
    pub fn name(&self) -> &'static str {
        match self {
            Table::Analysis => "analysis",
            Table::Design => "design",
        }
    }

    /// Reference value at `d_bar`, if `d_bar` is one of the benchmark levels.
    pub fn reference(&self, d_bar: f64) -> Option<f64> {
        let values = match self {
            Table::Analysis => &REFERENCE_ANALYSIS,
            Table::Design => &REFERENCE_DESIGN,
        };
        example::NOISE_LEVELS
            .iter()
            .position(|d| *d == d_bar)
            .map(|i| values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub table: Table,
    pub d_bar: f64,
    pub seed: u64,
    pub h: Option<f64>,
    pub runtime_s: f64,
    pub status: String,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.h.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub table: Table,
    pub d_bar: f64,
    /// Median over the rows that produced a bound.
    pub median_h: Option<f64>,
    pub reference_h: Option<f64>,
    pub relative_deviation: Option<f64>,
    pub rows: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub config_hash: String,
    pub software_version: String,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl ResultTable {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }

    pub fn rows_of(&self, table: Table) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.table == table)
    }

    pub fn summary_of(&self, table: Table) -> impl Iterator<Item = &SummaryRow> {
        self.summary.iter().filter(move |r| r.table == table)
    }
}

/// One computed row with its certificate, if any.
#[derive(Debug, Clone)]
pub struct RowOutput {
    pub row: ResultRow,
    pub certificate: Option<CertificateFile>,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("plot {path}: {message}")]
    Plot { path: PathBuf, message: String },
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

fn run_row(cfg: &ExperimentConfig, table: Table, d_bar: f64, seed: u64) -> RowOutput {
    let start = Instant::now();
    let oracle = cfg.solver.oracle();
    let bisection = cfg.bisection.config();
    let margin = cfg.margin_rule();
    let provenance = Provenance {
        seed: Some(seed),
        d_bar: Some(d_bar),
        config_hash: cfg.hash(),
    };
    let tau = cfg.gaps.times(cfg.samples);
    let outcome: Result<CertificateFile, String> = (|| {
        let exp = example::experiment_at(d_bar, &tau, seed).map_err(|e| e.to_string())?;
        let set = example::consistency_set(&exp).map_err(|e| e.to_string())?;
        let gain = example::reference_gain();
        let search = |e: SearchError| match e {
            SearchError::NoCertificate { .. } => "no-certificate".to_string(),
            other => other.to_string(),
        };
        match table {
            Table::Analysis => {
                let b = analyze_msi(&oracle, Plant::Data(&set), &gain, &bisection, margin)
                    .map_err(search)?;
                Ok(CertificateFile::analysis(
                    &b.witness,
                    PlantFile::data(&set),
                    &b.trace,
                    margin.at(b.h),
                    provenance,
                ))
            }
            Table::Design => {
                let sched = cfg.schedule.schedule();
                let out = design_iterate(&oracle, &set, &gain, &bisection, &sched, margin)
                    .map_err(search)?;
                Ok(CertificateFile::design(&out, &set, |h| margin.at(h), provenance))
            }
        }
    })();
    let runtime_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok(cert) => RowOutput {
            row: ResultRow {
                table,
                d_bar,
                seed,
                h: Some(cert.h),
                runtime_s,
                status: "ok".to_string(),
            },
            certificate: Some(cert),
        },
        Err(status) => RowOutput {
            row: ResultRow {
                table,
                d_bar,
                seed,
                h: None,
                runtime_s,
                status,
            },
            certificate: None,
        },
    }
}

/// Runs every `(table, d̄, seed)` row on a pool of `cfg.jobs` workers.
/// Failures are recorded per row; the sweep always completes.
pub fn run_reproduce_example(cfg: &ExperimentConfig) -> Result<(ResultTable, Vec<RowOutput>), HarnessError> {
    let mut tasks = Vec::new();
    for table in [Table::Analysis, Table::Design] {
        for &d in &cfg.noise_levels {
            for &seed in &cfg.seeds {
                tasks.push((table, d, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    let mut outputs: Vec<RowOutput> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(table, d, seed)| run_row(cfg, table, d, seed))
            .collect()
    });
    outputs.sort_by(|a, b| {
        (a.row.table, a.row.d_bar, a.row.seed)
            .partial_cmp(&(b.row.table, b.row.d_bar, b.row.seed))
            .expect("noise levels are finite")
    });
    let rows: Vec<ResultRow> = outputs.iter().map(|o| o.row.clone()).collect();
    let mut summary = Vec::new();
    for table in [Table::Analysis, Table::Design] {
        for &d in &cfg.noise_levels {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.table == table && r.d_bar == d).collect();
            let hs: Vec<f64> = group.iter().filter_map(|r| r.h).collect();
            let med = median(&hs);
            let reference = table.reference(d);
            summary.push(SummaryRow {
                table,
                d_bar: d,
                median_h: med,
                reference_h: reference,
                relative_deviation: med.zip(reference).map(|(m, r)| (m - r) / r),
                rows: group.len(),
                failed: group.len() - hs.len(),
            });
        }
    }
    Ok((
        ResultTable {
            config_hash: cfg.hash(),
            software_version: SOFTWARE_VERSION.to_string(),
            rows,
            summary,
        },
        outputs,
    ))
}

#[derive(Serialize)]
struct CsvRow {
    d_bar: f64,
    seed: u64,
    h: Option<f64>,
    runtime_s: f64,
    status: String,
}

#[derive(Serialize)]
struct CsvSummary {
    table: &'static str,
    d_bar: f64,
    median_h: Option<f64>,
    reference_h: Option<f64>,
    relative_deviation: Option<f64>,
    rows: usize,
    failed: usize,
}

/// CSV of one table: `d_bar, seed, h, runtime_s, status`.
pub fn table_csv(table: &ResultTable, which: Table) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in table.rows_of(which) {
        w.serialize(CsvRow {
            d_bar: r.d_bar,
            seed: r.seed,
            h: r.h,
            runtime_s: r.runtime_s,
            status: r.status.clone(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn summary_csv(table: &ResultTable) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &table.summary {
        w.serialize(CsvSummary {
            table: s.table.name(),
            d_bar: s.d_bar,
            median_h: s.median_h,
            reference_h: s.reference_h,
            relative_deviation: s.relative_deviation,
            rows: s.rows,
            failed: s.failed,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Serialize)]
struct ResultsJson<'a> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    table: &'a ResultTable,
}

/// Writes tables, summary, JSON results, plots and certificates into `dir`
/// and returns the written paths.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    table: &ResultTable,
    outputs: &[RowOutput],
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<(), HarnessError> {
        let path = dir.join(name);
        io::write_text(&path, &text)?;
        written.push(path);
        Ok(())
    };
    for which in [Table::Analysis, Table::Design] {
        put(format!("{}.csv", which.name()), table_csv(table, which)?)?;
    }
    put("summary.csv".into(), summary_csv(table)?)?;
    put(
        "results.json".into(),
        io::to_json("results.json", &ResultsJson { config: cfg, table })?,
    )?;
    for o in outputs {
        if let Some(cert) = &o.certificate {
            let name = format!(
                "certificates/{}_d{}_s{}.json",
                o.row.table.name(),
                o.row.d_bar,
                o.row.seed
            );
            put(name.clone(), io::to_json(&name, cert)?)?;
        }
    }
    for which in [Table::Analysis, Table::Design] {
        let path = dir.join(format!("{}.svg", which.name()));
        plot::plot_table(&path, table, which).map_err(|message| HarnessError::Plot {
            path: path.clone(),
            message,
        })?;
        written.push(path);
    }
    Ok(written)
}
