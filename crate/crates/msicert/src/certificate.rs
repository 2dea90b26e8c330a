//! Certificate documents and their re-verification.
//!
//! A certificate records the plant description, the gain, the bound `h` and
//! the witness. Verification rebuilds the constraint set from the file
//! alone, checks the recorded witness by eigenvalue evaluation and re-solves
//! feasibility at the recorded `h` with the recorded gain.

use std::collections::BTreeMap;

use msicert_core::consistency::{dualize, ConsistencyError};
use msicert_core::lmi::{
    assemble_analysis, assemble_design, assemble_model_based, AnalysisCertificate, LmiError,
    LmiProblem,
};
use msicert_core::sdp::{verify_witness, WitnessCheck};
use msicert_core::search::{DesignOutcome, TraceEntry};
use msicert_core::system::SystemError;
use msicert_core::{ConsistencySet, FeasibilityStatus, FeedbackGain, LtiSystem, Matrix, SdpOracle};
use serde::{Deserialize, Serialize};

use crate::io::{from_rows, to_rows, IoError, Rows};

pub const SOFTWARE_VERSION: &str = concat!("msicert ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    ModelBased,
    Analysis,
    Design,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantFile {
    Model {
        #[serde(rename = "A")]
        a: Rows,
        #[serde(rename = "B")]
        b: Rows,
        #[serde(rename = "Bd")]
        bd: Rows,
    },
    Data {
        n: usize,
        m: usize,
        m_d: usize,
        #[serde(rename = "Pc")]
        pc: Rows,
    },
}

impl PlantFile {
    pub fn model(sys: &LtiSystem) -> Self {
        PlantFile::Model {
            a: to_rows(sys.a()),
            b: to_rows(sys.b()),
            bd: to_rows(sys.bd()),
        }
    }

    pub fn data(set: &ConsistencySet) -> Self {
        PlantFile::Data {
            n: set.n(),
            m: set.m(),
            m_d: set.md(),
            pc: to_rows(set.pc()),
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            PlantFile::Model { a, b, .. } => (a.len(), b.first().map_or(0, Vec::len)),
            PlantFile::Data { n, m, .. } => (*n, *m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    /// Strictness margin the witness was accepted with.
    pub requested: f64,
    /// Smallest `-λ_max` over the constraints at the witness.
    pub achieved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRow {
    pub phase: String,
    pub h: f64,
    pub status: String,
}

impl TraceRow {
    pub fn from_trace(trace: &[TraceEntry]) -> Vec<Self> {
        trace
            .iter()
            .map(|e| TraceRow {
                phase: format!("{:?}", e.phase).to_lowercase(),
                h: e.h,
                status: e.status.as_str().to_string(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRow {
    pub round: usize,
    pub h_try: f64,
    pub growth: f64,
    pub design: String,
    pub handoff_analysis: Option<String>,
    pub h_after: f64,
}

/// Where a certificate came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub d_bar: Option<f64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub kind: CertificateKind,
    pub h: f64,
    #[serde(rename = "K")]
    pub k: Rows,
    /// Decision values by variable name; design certificates also carry the
    /// fixed `Q1` and `R`.
    pub witnesses: BTreeMap<String, Rows>,
    pub margins: Margins,
    pub trace: Vec<TraceRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<RoundRow>,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub plant: PlantFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_note: Option<String>,
    pub software_version: String,
}

fn witness_map(named: Vec<(&'static str, Matrix)>) -> BTreeMap<String, Rows> {
    named
        .into_iter()
        .map(|(k, v)| (k.to_string(), to_rows(&v)))
        .collect()
}

impl CertificateFile {
    /// Analysis certificate; the kind follows the plant description.
    pub fn analysis(
        cert: &AnalysisCertificate,
        plant: PlantFile,
        trace: &[TraceEntry],
        requested_margin: f64,
        provenance: Provenance,
    ) -> Self {
        let kind = match plant {
            PlantFile::Model { .. } => CertificateKind::ModelBased,
            PlantFile::Data { .. } => CertificateKind::Analysis,
        };
        Self {
            kind,
            h: cert.h,
            k: to_rows(&cert.gain),
            witnesses: witness_map(cert.named()),
            margins: Margins {
                requested: requested_margin,
                achieved: cert.margin,
            },
            trace: TraceRow::from_trace(trace),
            rounds: Vec::new(),
            provenance,
            plant,
            schedule_note: None,
            software_version: SOFTWARE_VERSION.to_string(),
        }
    }

    /// Certificate for the outcome of the alternation: a design witness when
    /// a design step improved on the initial gain, else the initial analysis.
    pub fn design(
        outcome: &DesignOutcome,
        set: &ConsistencySet,
        margin_at: impl Fn(f64) -> f64,
        provenance: Provenance,
    ) -> Self {
        let rounds = outcome
            .rounds
            .iter()
            .map(|r| RoundRow {
                round: r.round,
                h_try: r.h_try,
                growth: r.growth,
                design: r.design.as_str().to_string(),
                handoff_analysis: r.handoff_analysis.map(|s| s.as_str().to_string()),
                h_after: r.h_after,
            })
            .collect();
        let mut file = match (&outcome.design, &outcome.analysis) {
            (Some(d), _) => Self {
                kind: CertificateKind::Design,
                h: d.h,
                k: to_rows(&d.gain),
                witnesses: witness_map(d.named()),
                margins: Margins {
                    requested: margin_at(d.h),
                    achieved: d.margin,
                },
                trace: TraceRow::from_trace(&outcome.initial_trace),
                rounds: Vec::new(),
                provenance,
                plant: PlantFile::data(set),
                schedule_note: None,
                software_version: SOFTWARE_VERSION.to_string(),
            },
            (None, Some(a)) => Self::analysis(
                a,
                PlantFile::data(set),
                &outcome.initial_trace,
                margin_at(a.h),
                provenance,
            ),
            (None, None) => unreachable!("an outcome always carries one witness"),
        };
        file.rounds = rounds;
        file.schedule_note = Some(outcome.schedule_note.clone());
        file
    }

    pub fn gain(&self) -> Result<FeedbackGain, CertificateError> {
        let (n, m) = self.plant.dims();
        Ok(FeedbackGain::new(from_rows("certificate", "K", &self.k, m, n)?))
    }

    fn witness(&self, name: &str, rows: usize, cols: usize) -> Result<Matrix, CertificateError> {
        let value = self
            .witnesses
            .get(name)
            .ok_or_else(|| CertificateError::MissingWitness(name.to_string()))?;
        Ok(from_rows("certificate", &format!("witnesses.{name}"), value, rows, cols)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CertificateError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("plant: {0}")]
    System(#[from] SystemError),
    #[error("plant: {0}")]
    Consistency(#[from] ConsistencyError),
    #[error("constraint assembly: {0}")]
    Lmi(#[from] LmiError),
    #[error("witness `{0}` is missing")]
    MissingWitness(String),
    #[error("certificate kind does not match its plant description")]
    KindMismatch,
    #[error("recorded gain differs from the design witness")]
    GainMismatch,
}

/// Rebuilt constraint set of a certificate.
pub struct Rebuilt {
    pub problem: LmiProblem,
    /// Analysis conditions at the recorded `(K, h)`, used for the re-solve.
    pub analysis: LmiProblem,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub kind: CertificateKind,
    pub h: f64,
    /// Recorded witness against the rebuilt constraints.
    pub witness: WitnessCheck,
    /// Independent feasibility solve at the recorded `(K, h)`.
    pub resolve: FeasibilityStatus,
    pub resolve_margin: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.witness.passed && self.resolve == FeasibilityStatus::Feasible
    }
}

/// Reconstructs the certificate's problem and decision vector from the file.
pub fn rebuild(cert: &CertificateFile) -> Result<Rebuilt, CertificateError> {
    let gain = cert.gain()?;
    let h = cert.h;
    match (&cert.plant, cert.kind) {
        (PlantFile::Model { a, b, bd }, CertificateKind::ModelBased) => {
            let n = a.len();
            let m = b.first().map_or(0, Vec::len);
            let md = bd.first().map_or(0, Vec::len);
            let sys = LtiSystem::new(
                from_rows("certificate", "plant.A", a, n, n)?,
                from_rows("certificate", "plant.B", b, n, m)?,
                from_rows("certificate", "plant.Bd", bd, n, md)?,
            )?;
            let problem = assemble_model_based(&sys, &gain, h)?;
            let x = pack(&problem, cert)?;
            Ok(Rebuilt {
                analysis: problem.clone(),
                problem,
                x,
            })
        }
        (PlantFile::Data { n, m, m_d, pc }, kind @ (CertificateKind::Analysis | CertificateKind::Design)) => {
            let pc = from_rows("certificate", "plant.Pc", pc, 2 * n + m, 2 * n + m)?;
            let set = dualize(&ConsistencySet::from_pc(pc, *n, *m, *m_d)?)?;
            let analysis = assemble_analysis(&set, &gain, h)?;
            let problem = if kind == CertificateKind::Design {
                let q1 = cert.witness("Q1", *n, *n)?;
                let r = cert.witness("R", *n, *n)?;
                if cert.witness("K", *m, *n)? != *gain.matrix() {
                    return Err(CertificateError::GainMismatch);
                }
                assemble_design(&set, &q1, &r, h)?
            } else {
                analysis.clone()
            };
            let x = pack(&problem, cert)?;
            Ok(Rebuilt { problem, analysis, x })
        }
        _ => Err(CertificateError::KindMismatch),
    }
}

fn pack(problem: &LmiProblem, cert: &CertificateFile) -> Result<Vec<f64>, CertificateError> {
    let values = problem
        .variables()
        .iter()
        .map(|v| Ok((v.name.as_str(), cert.witness(&v.name, v.rows, v.cols)?)))
        .collect::<Result<Vec<_>, CertificateError>>()?;
    Ok(problem.pack_named(&values)?)
}

/// Checks the recorded witness and re-solves the analysis conditions at the
/// recorded `(K, h)` with `oracle`.
pub fn verify_certificate<O: SdpOracle + ?Sized>(
    cert: &CertificateFile,
    oracle: &O,
) -> Result<VerifyReport, CertificateError> {
    let rebuilt = rebuild(cert)?;
    let witness = verify_witness(&rebuilt.problem, &rebuilt.x, cert.margins.requested);
    let res = oracle.solve_feasibility(&rebuilt.analysis, cert.margins.requested);
    Ok(VerifyReport {
        kind: cert.kind,
        h: cert.h,
        witness,
        resolve: res.status,
        resolve_margin: res.achieved_margin,
    })
}
