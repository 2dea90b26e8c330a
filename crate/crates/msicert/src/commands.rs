//! Subcommand bodies. Each takes a validated configuration, writes its
//! artifacts below `cfg.output` and reports an [`Outcome`].

use std::path::PathBuf;

use msicert_core::consistency::{
    build_consistency_set, check_sufficient_conditions, check_assumption_inertia, dualize, TOL_EIG,
};
use msicert_core::deriv::{bounds_to_noise_model, estimate_derivatives_with, NormPrior};
use msicert_core::search::{analyze_msi, design_iterate, Plant, SearchError};
use msicert_core::system::simulate_sampled_closed_loop;
use msicert_core::{ConsistencySet, DataSet, LtiSystem, Matrix, NoiseBound, SamplingSequence, Vector};
use serde::Serialize;

use crate::certificate::{self, CertificateFile, PlantFile, Provenance};
use crate::config::{ExperimentConfig, Mode, SystemSpec};
use crate::example;
use crate::harness;
use crate::io::{self, to_rows, DatasetMeta, Rows};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Some rows failed or no certificate exists in the window.
    Partial,
    Fatal,
}

impl Status {
    pub fn code(&self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Partial => 2,
            Status::Fatal => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    /// Human-readable report, one line per item.
    pub report: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    fn new(status: Status) -> Self {
        Self {
            status,
            report: Vec::new(),
            written: Vec::new(),
        }
    }

    fn line(&mut self, s: impl Into<String>) {
        self.report.push(s.into());
    }
}

/// Error that aborts a command.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CommandError(pub String);

fn fail(e: impl std::fmt::Display) -> CommandError {
    CommandError(e.to_string())
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    cfg.validate().map_err(fail)?;
    match cfg.mode.expect("validated configuration has a mode") {
        Mode::Simulate => simulate(cfg),
        Mode::EstimateDeriv => estimate_deriv(cfg),
        Mode::BuildSet => build_set(cfg),
        Mode::Analyze => analyze(cfg),
        Mode::Design => design(cfg),
        Mode::ReproduceExample => reproduce(cfg),
        Mode::Verify => verify(cfg),
    }
}

/// Measured data with its noise bound and, for generated data, the realized
/// disturbance.
struct Measured {
    data: DataSet,
    noise: NoiseBound,
    disturbance: Option<Matrix>,
    seed: Option<u64>,
    d_bar: Option<f64>,
}

fn measured(cfg: &ExperimentConfig) -> Result<Measured, CommandError> {
    match &cfg.system {
        SystemSpec::Dataset { path } => {
            let (data, noise, meta) = io::load_dataset(path).map_err(fail)?;
            Ok(Measured {
                data,
                noise,
                disturbance: None,
                seed: meta.seed,
                d_bar: None,
            })
        }
        _ => {
            let sys = cfg.model().map_err(fail)?.expect("known matrices");
            let (d_bar, seed) = (cfg.noise_levels[0], cfg.seeds[0]);
            let tau = cfg.gaps.times(cfg.samples);
            let exp = example::experiment_for(&sys, d_bar, &tau, seed).map_err(fail)?;
            Ok(Measured {
                data: exp.data,
                noise: exp.noise,
                disturbance: Some(exp.disturbance),
                seed: Some(seed),
                d_bar: Some(d_bar),
            })
        }
    }
}

fn consistency(m: &Measured) -> Result<ConsistencySet, CommandError> {
    let set = build_consistency_set(&m.data, &m.noise).map_err(fail)?;
    dualize(&set).map_err(fail)
}

fn provenance(cfg: &ExperimentConfig, m: Option<&Measured>) -> Provenance {
    Provenance {
        seed: m.and_then(|m| m.seed),
        d_bar: m.and_then(|m| m.d_bar),
        config_hash: cfg.hash(),
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let sys = cfg.model().map_err(fail)?.expect("known matrices");
    let mut out = Outcome::new(Status::Success);
    match cfg.simulate.h {
        None => {
            let m = measured(cfg)?;
            let path = cfg.output.join("dataset.json");
            let meta = DatasetMeta {
                seed: m.seed,
                generator: format!("simulate d_bar={}", cfg.noise_levels[0]),
            };
            io::save_dataset(&path, &m.data, &m.noise, meta).map_err(fail)?;
            out.line(format!("dataset: {} samples, d_bar = {}", m.data.len(), cfg.noise_levels[0]));
            out.written.push(path);
        }
        Some(h) => {
            let gain = cfg.gain(sys.n(), sys.m()).map_err(fail)?.expect("validated gain");
            let s = &cfg.simulate;
            let sampling = if s.periodic {
                SamplingSequence::periodic(h, s.horizon)
            } else {
                SamplingSequence::random(h, s.horizon, cfg.seeds.first().copied().unwrap_or(0))
            }
            .map_err(fail)?;
            let x0 = if s.x0.is_empty() {
                Vector::from_element(sys.n(), 1.0)
            } else if s.x0.len() == sys.n() {
                Vector::from_column_slice(&s.x0)
            } else {
                return Err(fail(format!("simulate.x0 has {} entries, expected {}", s.x0.len(), sys.n())));
            };
            let traj = simulate_sampled_closed_loop(&sys, &gain, &sampling, &x0, s.horizon).map_err(fail)?;
            let path = cfg.output.join("trajectory.csv");
            io::write_text(&path, &trajectory_csv(&traj.grid, &traj.states, &traj.inputs)?).map_err(fail)?;
            let ratio = traj.final_state().norm() / x0.norm();
            out.line(format!(
                "closed loop over [0, {}] with {} samples (max gap {:.4}): |x(T)|/|x0| = {ratio:.3e}",
                s.horizon,
                sampling.len(),
                sampling.max_gap().unwrap_or(0.0)
            ));
            out.written.push(path);
        }
    }
    Ok(out)
}

fn trajectory_csv(grid: &[f64], x: &Matrix, u: &Matrix) -> Result<String, CommandError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((0..x.nrows()).map(|i| format!("x{i}")));
    header.extend((0..u.nrows()).map(|i| format!("u{i}")));
    w.write_record(&header).map_err(fail)?;
    for (k, t) in grid.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(x.column(k).iter().map(f64::to_string));
        rec.extend(u.column(k).iter().map(f64::to_string));
        w.write_record(&rec).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| fail(e.error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Relative tolerance on gap equality for derivative estimation.
const EQUIDISTANT_TOL: f64 = 1e-9;

fn estimate_deriv(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let SystemSpec::Dataset { path } = &cfg.system else {
        unreachable!("validated: dataset system")
    };
    let settings = cfg.deriv.expect("validated: deriv settings");
    let (data, _, meta) = io::load_dataset(path).map_err(fail)?;
    let tau = data.tau();
    if tau.len() < 2 {
        return Err(fail("derivative estimation needs at least two samples"));
    }
    let h = tau[1] - tau[0];
    if tau.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > EQUIDISTANT_TOL * h.abs().max(1.0)) {
        return Err(fail("derivative estimation needs equidistant samples"));
    }
    let prior = NormPrior::new(settings.a_bar, settings.b_bar).map_err(fail)?;
    let est = estimate_derivatives_with(data.x(), data.u(), &prior, h, settings.bound.form())
        .map_err(fail)?;
    let len = est.xdot_est.ncols();
    let n = data.n();
    let agg = bounds_to_noise_model(&est.per_sample_bound, n).map_err(fail)?;
    let out_data = DataSet::new(
        tau[..len].to_vec(),
        data.x().columns(0, len).into_owned(),
        data.u().columns(0, len).into_owned(),
        est.xdot_est,
        Matrix::identity(n, n),
    )
    .map_err(fail)?;
    let target = cfg.output.join("dataset.json");
    let meta = DatasetMeta {
        seed: meta.seed,
        generator: format!(
            "estimate-deriv a_bar={} b_bar={} bound={:?} from {}",
            settings.a_bar, settings.b_bar, settings.bound, meta.generator
        ),
    };
    io::save_dataset(&target, &out_data, &agg.noise, meta).map_err(fail)?;
    let mut out = Outcome::new(Status::Success);
    out.line(format!("h = {h}, {len} estimates, d_bar = {:.6e}", agg.d_bar));
    if agg.degenerate {
        out.line("warning: all error bounds are zero; the noise bound is degenerate");
    }
    out.written.push(target);
    Ok(out)
}

#[derive(Serialize)]
struct InertiaJson {
    invertible: bool,
    positive_count: usize,
    required_positive: usize,
    pass: bool,
}

#[derive(Serialize)]
struct SufficientJson {
    z_full_row_rank: bool,
    bd_invertible: bool,
    strict_noise_bound: Option<bool>,
    sd_zero: bool,
    all_pass: Option<bool>,
    warnings: Vec<&'static str>,
}

#[derive(Serialize)]
struct ConsistencyJson {
    n: usize,
    m: usize,
    m_d: usize,
    #[serde(rename = "Pc")]
    pc: Rows,
    #[serde(rename = "Pc_dual")]
    pc_dual: Option<Rows>,
    inertia: InertiaJson,
    sufficient_conditions: SufficientJson,
    config_hash: String,
}

fn build_set(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let m = measured(cfg)?;
    let set = build_consistency_set(&m.data, &m.noise).map_err(fail)?;
    let inertia = check_assumption_inertia(&set, TOL_EIG);
    let suff = check_sufficient_conditions(&m.data, &m.noise, m.disturbance.as_ref());
    let dual = dualize(&set).ok();
    let doc = ConsistencyJson {
        n: set.n(),
        m: set.m(),
        m_d: set.md(),
        pc: to_rows(set.pc()),
        pc_dual: dual.as_ref().and_then(|d| d.pc_dual()).map(to_rows),
        inertia: InertiaJson {
            invertible: inertia.invertible,
            positive_count: inertia.positive_count,
            required_positive: set.md(),
            pass: inertia.pass,
        },
        sufficient_conditions: SufficientJson {
            z_full_row_rank: suff.z_full_row_rank,
            bd_invertible: suff.bd_invertible,
            strict_noise_bound: suff.strict_noise_bound,
            sd_zero: suff.sd_zero,
            all_pass: suff.all_pass(),
            warnings: suff.warnings.clone(),
        },
        config_hash: cfg.hash(),
    };
    let path = cfg.output.join("consistency_set.json");
    io::write_json(&path, &doc).map_err(fail)?;
    let status = if inertia.pass && dual.is_some() {
        Status::Success
    } else {
        Status::Partial
    };
    let mut out = Outcome::new(status);
    out.line(format!(
        "inertia: {} positive eigenvalues (need {}), invertible {}: {}",
        inertia.positive_count,
        set.md(),
        inertia.invertible,
        if inertia.pass { "pass" } else { "FAIL" }
    ));
    out.line(format!(
        "sufficient conditions: Z full row rank {}, Bd invertible {}, strict noise bound {}, Sd = 0 {}",
        suff.z_full_row_rank,
        suff.bd_invertible,
        suff.strict_noise_bound.map_or("n/a".to_string(), |b| b.to_string()),
        suff.sd_zero
    ));
    for w in &suff.warnings {
        out.line(format!("warning: {w}"));
    }
    out.written.push(path);
    Ok(out)
}

fn search_outcome(e: SearchError) -> Result<Outcome, CommandError> {
    match e {
        SearchError::NoCertificate { .. } => {
            let mut out = Outcome::new(Status::Partial);
            out.line(e.to_string());
            Ok(out)
        }
        other => Err(fail(other)),
    }
}

fn write_certificate(cfg: &ExperimentConfig, cert: &CertificateFile) -> Result<Outcome, CommandError> {
    let path = cfg.output.join("certificate.json");
    io::write_json(&path, cert).map_err(fail)?;
    let mut out = Outcome::new(Status::Success);
    out.line(format!(
        "{:?} certificate: h = {:.6}, K = {:?}, margin {:.3e}",
        cert.kind, cert.h, cert.k, cert.margins.achieved
    ));
    out.written.push(path);
    Ok(out)
}

fn analyze(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let oracle = cfg.solver.oracle();
    let bisection = cfg.bisection.config();
    let margin = cfg.margin_rule();
    if cfg.model_based {
        let sys: LtiSystem = cfg.model().map_err(fail)?.expect("known matrices");
        let gain = cfg.gain(sys.n(), sys.m()).map_err(fail)?.expect("validated gain");
        let b = match analyze_msi(&oracle, Plant::Model(&sys), &gain, &bisection, margin) {
            Ok(b) => b,
            Err(e) => return search_outcome(e),
        };
        let cert = CertificateFile::analysis(
            &b.witness,
            PlantFile::model(&sys),
            &b.trace,
            margin.at(b.h),
            provenance(cfg, None),
        );
        return write_certificate(cfg, &cert);
    }
    let m = measured(cfg)?;
    let set = consistency(&m)?;
    let gain = cfg.gain(set.n(), set.m()).map_err(fail)?.expect("validated gain");
    let b = match analyze_msi(&oracle, Plant::Data(&set), &gain, &bisection, margin) {
        Ok(b) => b,
        Err(e) => return search_outcome(e),
    };
    let cert = CertificateFile::analysis(
        &b.witness,
        PlantFile::data(&set),
        &b.trace,
        margin.at(b.h),
        provenance(cfg, Some(&m)),
    );
    write_certificate(cfg, &cert)
}

fn design(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let oracle = cfg.solver.oracle();
    let margin = cfg.margin_rule();
    let m = measured(cfg)?;
    let set = consistency(&m)?;
    let gain = cfg.gain(set.n(), set.m()).map_err(fail)?.expect("validated gain");
    let outcome = match design_iterate(
        &oracle,
        &set,
        &gain,
        &cfg.bisection.config(),
        &cfg.schedule.schedule(),
        margin,
    ) {
        Ok(o) => o,
        Err(e) => return search_outcome(e),
    };
    let cert = CertificateFile::design(&outcome, &set, |h| margin.at(h), provenance(cfg, Some(&m)));
    let mut out = write_certificate(cfg, &cert)?;
    out.line(format!(
        "initial gain certified up to h = {:.6}; {} rounds",
        outcome.initial_h,
        outcome.rounds.len()
    ));
    Ok(out)
}

fn reproduce(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let (table, outputs) = harness::run_reproduce_example(cfg).map_err(fail)?;
    let written = harness::write_outputs(&cfg.output, cfg, &table, &outputs).map_err(fail)?;
    let failed = table.failed();
    let mut out = Outcome::new(if failed == 0 { Status::Success } else { Status::Partial });
    out.line(format!("{:<9} {:>7} {:>10} {:>10} {:>8} {:>6}", "table", "d_bar", "median h", "reference", "dev", "failed"));
    for s in &table.summary {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        out.line(format!(
            "{:<9} {:>7} {:>10} {:>10} {:>8} {:>6}",
            s.table.name(),
            s.d_bar,
            fmt(s.median_h),
            fmt(s.reference_h),
            s.relative_deviation.map_or("-".to_string(), |d| format!("{:+.1}%", 100.0 * d)),
            s.failed
        ));
    }
    if failed > 0 {
        out.line(format!("{failed} rows failed"));
    }
    out.written = written;
    Ok(out)
}

fn verify(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let path = cfg.certificate.as_ref().expect("validated: certificate path");
    let cert: CertificateFile = io::read_json(path).map_err(fail)?;
    let report = certificate::verify_certificate(&cert, &cfg.solver.oracle()).map_err(fail)?;
    let mut out = Outcome::new(if report.passed() { Status::Success } else { Status::Fatal });
    out.line(format!(
        "{:?} certificate at h = {}: witness {} (margin {:.3e}), re-solve {} (margin {:.3e})",
        report.kind,
        report.h,
        if report.witness.passed { "valid" } else { "INVALID" },
        report.witness.margin,
        report.resolve.as_str(),
        report.resolve_margin
    ));
    for v in &report.witness.violations {
        out.line(format!("violation: {v}"));
    }
    out.line(if report.passed() { "PASS" } else { "FAIL" });
    Ok(out)
}
