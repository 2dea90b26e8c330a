//! Experiment configuration: one JSON document drives every subcommand.
//! Command-line flags override individual fields; the resulting value is
//! validated for the selected mode before any computation and hashed into
//! every emitted artifact.

use std::path::{Path, PathBuf};

use msicert_core::deriv::BoundForm;
use msicert_core::search::IterationSchedule;
use msicert_core::{BisectionConfig, FeedbackGain, LtiSystem, Matrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::example;
use crate::io::{self, from_rows, to_rows, IoError, Rows};
use crate::solver::ClarabelOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    EstimateDeriv,
    BuildSet,
    Analyze,
    Design,
    ReproduceExample,
    Verify,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::EstimateDeriv => "estimate-deriv",
            Mode::BuildSet => "build-set",
            Mode::Analyze => "analyze",
            Mode::Design => "design",
            Mode::ReproduceExample => "reproduce-example",
            Mode::Verify => "verify",
        }
    }
}

/// Where the plant comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    /// The benchmark plant; data are generated with the configured noise
    /// level, seed and sampling schedule.
    Example,
    /// Known matrices.
    Model {
        #[serde(rename = "A")]
        a: Rows,
        #[serde(rename = "B")]
        b: Rows,
        #[serde(rename = "Bd")]
        bd: Rows,
    },
    /// Unknown plant, measured data only.
    Dataset { path: PathBuf },
}

/// Sampling gaps `first` before sample `switch_at`, `second` from then on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSchedule {
    pub first: f64,
    pub second: f64,
    pub switch_at: usize,
}

impl Default for GapSchedule {
    fn default() -> Self {
        Self {
            first: 1.5,
            second: 3.0,
            switch_at: 50,
        }
    }
}

impl GapSchedule {
    pub fn times(&self, samples: usize) -> Vec<f64> {
        let mut tau = Vec::with_capacity(samples);
        let mut t = 0.0;
        for k in 0..samples {
            if k > 0 {
                t += if k < self.switch_at { self.first } else { self.second };
            }
            tau.push(t);
        }
        tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub box_bound: f64,
    pub centering: Option<f64>,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let o = ClarabelOracle::default();
        Self {
            box_bound: o.box_bound,
            centering: o.centering,
            max_iter: o.max_iter,
        }
    }
}

impl SolverSettings {
    pub fn oracle(&self) -> ClarabelOracle {
        ClarabelOracle {
            box_bound: self.box_bound,
            centering: self.centering,
            max_iter: self.max_iter,
            ..ClarabelOracle::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BisectionSettings {
    pub h_min: f64,
    pub h_max: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub prescan_points: usize,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        Self {
            h_min: example::ANALYSIS_WINDOW.0,
            h_max: example::ANALYSIS_WINDOW.1,
            tol: 0.005,
            max_iters: 60,
            prescan_points: 8,
        }
    }
}

impl BisectionSettings {
    pub fn config(&self) -> BisectionConfig {
        BisectionConfig {
            h_min: self.h_min,
            h_max: self.h_max,
            abs_tol: self.tol,
            max_iters: self.max_iters,
            prescan_points: self.prescan_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSettings {
    pub growth: f64,
    pub max_outer_iters: usize,
    pub stall_limit: usize,
    pub handoff_backoff: f64,
    pub recenter: bool,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        let s = example::design_schedule();
        Self {
            growth: s.h_growth_factor,
            max_outer_iters: s.max_outer_iters,
            stall_limit: s.stall_limit,
            handoff_backoff: s.handoff_backoff,
            recenter: s.recenter,
        }
    }
}

impl ScheduleSettings {
    pub fn schedule(&self) -> IterationSchedule {
        IterationSchedule {
            h_growth_factor: self.growth,
            max_outer_iters: self.max_outer_iters,
            stall_limit: self.stall_limit,
            handoff_backoff: self.handoff_backoff,
            recenter: self.recenter,
        }
    }
}

/// Per-sample error bound attached to Euler estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivBound {
    /// Second-order closed form; can undershoot the true error.
    ClosedForm,
    /// Full exponential remainder; sound for every plant within the priors.
    #[default]
    Exponential,
}

impl DerivBound {
    pub fn form(&self) -> BoundForm {
        match self {
            DerivBound::ClosedForm => BoundForm::ClosedForm,
            DerivBound::Exponential => BoundForm::Exponential,
        }
    }
}

/// Norm bounds for derivative estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivSettings {
    pub a_bar: f64,
    pub b_bar: f64,
    #[serde(default)]
    pub bound: DerivBound,
}

/// Closed-loop simulation of the configured gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSettings {
    /// Upper bound on the sampling gaps; gaps are drawn uniformly in
    /// `(0, h]` unless `periodic` is set.
    pub h: Option<f64>,
    pub periodic: bool,
    pub horizon: f64,
    pub x0: Vec<f64>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            h: None,
            periodic: false,
            horizon: 100.0,
            x0: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub system: SystemSpec,
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub gaps: GapSchedule,
    /// Feedback gain, `m × n` rows; the benchmark gain when absent and the
    /// system is the example.
    pub gain: Option<Rows>,
    /// Use the known matrices instead of data (example or model systems).
    pub model_based: bool,
    pub solver: SolverSettings,
    /// Strictness margin; `1e-7 (1 + h)` when absent.
    pub margin: Option<f64>,
    pub bisection: BisectionSettings,
    pub schedule: ScheduleSettings,
    pub deriv: Option<DerivSettings>,
    pub simulate: SimulateSettings,
    /// Certificate to check in `verify` mode.
    pub certificate: Option<PathBuf>,
    pub output: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: None,
            system: SystemSpec::Example,
            noise_levels: example::NOISE_LEVELS.to_vec(),
            seeds: example::SEEDS.to_vec(),
            samples: example::SAMPLES,
            gaps: GapSchedule::default(),
            gain: None,
            model_based: false,
            solver: SolverSettings::default(),
            margin: None,
            bisection: BisectionSettings::default(),
            schedule: ScheduleSettings::default(),
            deriv: None,
            simulate: SimulateSettings::default(),
            certificate: None,
            output: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid configuration for `{mode}`: {message}")]
    Invalid { mode: &'static str, message: String },
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Ok(io::read_json(path)?)
    }

    /// SHA-256 of the compact JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("configuration encodes as JSON");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn margin_rule(&self) -> msicert_core::search::MarginRule {
        match self.margin {
            Some(m) => msicert_core::search::MarginRule::Fixed(m),
            None => msicert_core::search::MarginRule::Default,
        }
    }

    /// Matrices of a `Model` or `Example` system.
    pub fn model(&self) -> Result<Option<LtiSystem>, ConfigError> {
        let mode = self.mode_str();
        match &self.system {
            SystemSpec::Example => Ok(Some(example::system())),
            SystemSpec::Dataset { .. } => Ok(None),
            SystemSpec::Model { a, b, bd } => {
                let n = a.len();
                let m = b.first().map_or(0, Vec::len);
                let md = bd.first().map_or(0, Vec::len);
                let a = from_rows("config", "system.A", a, n, n)?;
                let b = from_rows("config", "system.B", b, n, m)?;
                let bd = from_rows("config", "system.Bd", bd, n, md)?;
                LtiSystem::new(a, b, bd)
                    .map(Some)
                    .map_err(|e| invalid(mode, e.to_string()))
            }
        }
    }

    /// Configured gain, the benchmark gain for the example, or `None`.
    pub fn gain(&self, n: usize, m: usize) -> Result<Option<FeedbackGain>, ConfigError> {
        match &self.gain {
            Some(rows) => Ok(Some(FeedbackGain::new(from_rows("config", "gain", rows, m, n)?))),
            None if self.system == SystemSpec::Example => Ok(Some(example::reference_gain())),
            None => Ok(None),
        }
    }

    fn mode_str(&self) -> &'static str {
        self.mode.map_or("unspecified", |m| m.as_str())
    }

    /// Checks that every field the selected mode needs is present and sane.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mode = self.mode.ok_or_else(|| invalid("unspecified", "mode is not set".into()))?;
        let name = mode.as_str();
        let fail = |msg: &str| Err(invalid(name, msg.to_string()));
        if self.jobs == 0 {
            return fail("jobs must be at least 1");
        }
        if let Some(m) = self.margin {
            if !(m > 0.0 && m.is_finite()) {
                return fail("margin must be positive");
            }
        }
        let b = &self.bisection;
        if !(b.h_min > 0.0 && b.h_min < b.h_max && b.h_max.is_finite() && b.tol > 0.0) {
            return fail("bisection window must satisfy 0 < h_min < h_max and tol > 0");
        }
        if b.prescan_points < 2 {
            return fail("bisection needs at least two prescan points");
        }
        if self.schedule.schedule().validate().is_err() {
            return fail("schedule needs growth > 1, handoff_backoff in (0, 1] and stall_limit > 0");
        }
        if let Some(c) = self.solver.centering {
            if !(c > 0.0 && c < 1.0) {
                return fail("solver.centering must lie in (0, 1)");
            }
        }
        if !(self.solver.box_bound > 0.0) {
            return fail("solver.box_bound must be positive");
        }
        if self.noise_levels.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return fail("noise levels must be finite and nonnegative");
        }
        let generated = self.system == SystemSpec::Example && !self.model_based;
        let single_realization = |cfg: &Self| -> Result<(), ConfigError> {
            if cfg.noise_levels.len() != 1 || cfg.seeds.len() != 1 {
                return Err(invalid(
                    name,
                    "generating a dataset needs exactly one noise level and one seed".into(),
                ));
            }
            if cfg.samples < 2 {
                return Err(invalid(name, "samples must be at least 2".into()));
            }
            Ok(())
        };
        match mode {
            Mode::Simulate => {
                if matches!(self.system, SystemSpec::Dataset { .. }) {
                    return fail("simulation needs known matrices");
                }
                if let Some(h) = self.simulate.h {
                    if self.gain.is_none() && self.system != SystemSpec::Example {
                        return fail("closed-loop simulation needs a gain");
                    }
                    if !(h > 0.0 && self.simulate.horizon > 0.0) {
                        return fail("simulate.h and simulate.horizon must be positive");
                    }
                } else {
                    single_realization(self)?;
                }
            }
            Mode::EstimateDeriv => {
                if !matches!(self.system, SystemSpec::Dataset { .. }) {
                    return fail("derivative estimation reads a dataset");
                }
                match self.deriv {
                    Some(d) if d.a_bar >= 0.0 && d.b_bar >= 0.0 => {}
                    _ => return fail("deriv.a_bar and deriv.b_bar are required and nonnegative"),
                }
            }
            Mode::BuildSet | Mode::Design => {
                if self.model_based {
                    return fail("this mode works from data only");
                }
                if matches!(self.system, SystemSpec::Model { .. }) {
                    return fail("this mode needs a dataset or the example experiment");
                }
                if generated {
                    single_realization(self)?;
                }
                if mode == Mode::Design && self.gain.is_none() && self.system != SystemSpec::Example {
                    return fail("design needs an initial gain");
                }
            }
            Mode::Analyze => {
                if self.gain.is_none() && self.system != SystemSpec::Example {
                    return fail("analysis needs a gain");
                }
                if self.model_based && matches!(self.system, SystemSpec::Dataset { .. }) {
                    return fail("model-based analysis needs known matrices");
                }
                if !self.model_based && matches!(self.system, SystemSpec::Model { .. }) {
                    return fail("data-driven analysis needs a dataset; set model_based for known matrices");
                }
                if generated {
                    single_realization(self)?;
                }
            }
            Mode::ReproduceExample => {
                if self.system != SystemSpec::Example {
                    return fail("the reproduction harness runs the example system");
                }
                if self.noise_levels.is_empty() || self.seeds.is_empty() {
                    return fail("noise_levels and seeds must be nonempty");
                }
            }
            Mode::Verify => {
                if self.certificate.is_none() {
                    return fail("verify needs a certificate path");
                }
            }
        }
        if let SystemSpec::Model { .. } = self.system {
            self.model()?;
        }
        Ok(())
    }
}

fn invalid(mode: &'static str, message: String) -> ConfigError {
    ConfigError::Invalid { mode, message }
}

/// Gain rows from a comma-separated row-major list.
pub fn parse_gain(text: &str, m: usize) -> Result<Rows, String> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("gain entry `{s}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if m == 0 || values.len() % m != 0 {
        return Err(format!("{} gain entries do not fill {m} rows", values.len()));
    }
    let n = values.len() / m;
    Ok(to_rows(&Matrix::from_row_slice(m, n, &values)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_mode(mode: Mode) -> ExperimentConfig {
        ExperimentConfig {
            mode: Some(mode),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_are_valid_for_the_harness() {
        with_mode(Mode::ReproduceExample).validate().unwrap();
        assert!(with_mode(Mode::Analyze).validate().is_err(), "seven noise levels");
        let one = ExperimentConfig {
            noise_levels: vec![0.01],
            seeds: vec![3],
            ..with_mode(Mode::Analyze)
        };
        one.validate().unwrap();
        assert!(ExperimentConfig::default().validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = with_mode(Mode::ReproduceExample);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds.push(9);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn gap_schedule_matches_example_times() {
        assert_eq!(GapSchedule::default().times(100), example::sample_times(100));
    }

    #[test]
    fn gain_parsing() {
        assert_eq!(parse_gain("-3.75, -11.5", 1).unwrap(), vec![vec![-3.75, -11.5]]);
        assert!(parse_gain("1,2,3", 2).is_err());
        assert!(parse_gain("1,x", 1).is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let cfg = with_mode(Mode::Design);
        let text = io::to_json("c", &cfg).unwrap();
        let back: ExperimentConfig = io::parse_json("c", &text).unwrap();
        assert_eq!(back, cfg);
        let err = io::parse_json::<ExperimentConfig>("c", r#"{"bisection": {"h_mx": 2}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bisection"), "{err}");
    }
}
