//! Searches over the sampling bound `h`: bisection for analysis and the
//! alternating analysis/design iteration for gain synthesis.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::consistency::ConsistencySet;
use crate::linalg::{spectral_norm, symmetrize, sym_inverse};
use crate::lmi::{
    assemble_analysis, assemble_design, assemble_model_based, default_margin, AnalysisCertificate,
    DesignCertificate, LmiError,
};
use crate::sdp::{FeasibilityStatus, SdpOracle};
use crate::system::{FeedbackGain, LtiSystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid bisection configuration: {0}")]
    Config(&'static str),
    #[error("no certificate for any h in [{h_min}, {h_max}]")]
    NoCertificate { h_min: f64, h_max: f64 },
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error("analysis witness has a singular P1")]
    SingularHandoff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionConfig {
    pub h_min: f64,
    pub h_max: f64,
    pub abs_tol: f64,
    pub max_iters: usize,
    pub prescan_points: usize,
}

impl BisectionConfig {
    pub fn new(h_min: f64, h_max: f64) -> Result<Self, SearchError> {
        let cfg = Self {
            h_min,
            h_max,
            abs_tol: 0.005,
            max_iters: 60,
            prescan_points: 8,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.h_min > 0.0) {
            return Err(SearchError::Config("h_min must be positive"));
        }
        if !(self.h_min < self.h_max) || !self.h_max.is_finite() {
            return Err(SearchError::Config("h_min must be below a finite h_max"));
        }
        if !(self.abs_tol > 0.0) {
            return Err(SearchError::Config("abs_tol must be positive"));
        }
        if self.prescan_points < 2 {
            return Err(SearchError::Config("prescan needs at least two points"));
        }
        Ok(())
    }

    fn prescan_grid(&self) -> Vec<f64> {
        let k = self.prescan_points - 1;
        (0..=k)
            .map(|i| self.h_min + (self.h_max - self.h_min) * (i as f64) / (k as f64))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSchedule {
    pub h_growth_factor: f64,
    pub max_outer_iters: usize,
    pub stall_limit: usize,
    /// Fraction of the certified bound at which the analysis witness for
    /// the handoff is solved, in `(0, 1]`.
    pub handoff_backoff: f64,
    /// After a failed growth step, re-solves the design at the current
    /// bound to refresh the gain and the handoff witness.
    pub recenter: bool,
}

impl Default for IterationSchedule {
    fn default() -> Self {
        Self {
            h_growth_factor: 1.25,
            max_outer_iters: 40,
            stall_limit: 3,
            handoff_backoff: 1.0,
            recenter: false,
        }
    }
}

impl IterationSchedule {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.h_growth_factor > 1.0) || !self.h_growth_factor.is_finite() {
            return Err(SearchError::Config("growth factor must exceed 1"));
        }
        if !(self.handoff_backoff > 0.0 && self.handoff_backoff <= 1.0) {
            return Err(SearchError::Config("handoff backoff must lie in (0, 1]"));
        }
        if self.stall_limit == 0 {
            return Err(SearchError::Config("stall limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Prescan,
    Bisect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub phase: Phase,
    pub h: f64,
    pub status: FeasibilityStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bisection<W> {
    /// Largest certified `h`.
    pub h: f64,
    pub witness: W,
    pub trace: Vec<TraceEntry>,
    /// Set when a feasible point was seen above an infeasible one.
    pub non_monotone: bool,
}

/// Largest `h` in `[h_min, h_max]` for which `probe` returns a witness, to
/// within `abs_tol`. A linear prescan picks the largest feasible grid
/// point; bisection then refines between it and the next grid point.
pub fn msi_bisection<W, F>(cfg: &BisectionConfig, mut probe: F) -> Result<Bisection<W>, SearchError>
where
    F: FnMut(f64) -> Result<W, FeasibilityStatus>,
{
    cfg.validate()?;
    let grid = cfg.prescan_grid();
    let mut trace = Vec::new();
    let mut best: Option<(usize, W)> = None;
    let mut seen_infeasible = false;
    let mut non_monotone = false;
    for (i, &h) in grid.iter().enumerate() {
        let outcome = probe(h);
        let status = match &outcome {
            Ok(_) => FeasibilityStatus::Feasible,
            Err(s) => *s,
        };
        trace.push(TraceEntry { phase: Phase::Prescan, h, status });
        match outcome {
            Ok(w) => {
                non_monotone |= seen_infeasible;
                best = Some((i, w));
            }
            Err(_) => seen_infeasible = true,
        }
    }
    let (idx, mut witness) = best.ok_or(SearchError::NoCertificate {
        h_min: cfg.h_min,
        h_max: cfg.h_max,
    })?;
    let mut lo = grid[idx];
    if idx + 1 < grid.len() {
        let mut hi = grid[idx + 1];
        let mut iters = 0;
        while hi - lo > cfg.abs_tol && iters < cfg.max_iters {
            let mid = 0.5 * (lo + hi);
            match probe(mid) {
                Ok(w) => {
                    trace.push(TraceEntry { phase: Phase::Bisect, h: mid, status: FeasibilityStatus::Feasible });
                    lo = mid;
                    witness = w;
                }
                Err(status) => {
                    trace.push(TraceEntry { phase: Phase::Bisect, h: mid, status });
                    hi = mid;
                }
            }
            iters += 1;
        }
    }
    Ok(Bisection {
        h: lo,
        witness,
        trace,
        non_monotone,
    })
}

/// Plant description for analysis.
#[derive(Debug, Clone, Copy)]
pub enum Plant<'a> {
    Model(&'a LtiSystem),
    Data(&'a ConsistencySet),
}

/// Strictness margin used at sampling bound `h`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MarginRule {
    /// `1e-7 (1 + h)`.
    #[default]
    Default,
    Fixed(f64),
}

impl MarginRule {
    pub fn at(&self, h: f64) -> f64 {
        match self {
            MarginRule::Default => default_margin(h),
            MarginRule::Fixed(e) => *e,
        }
    }
}

/// Single analysis solve at `h`; `Ok` carries a verified witness.
pub fn analyze_at<O: SdpOracle + ?Sized>(
    oracle: &O,
    plant: Plant<'_>,
    gain: &FeedbackGain,
    h: f64,
    margin: MarginRule,
) -> Result<Result<AnalysisCertificate, FeasibilityStatus>, LmiError> {
    let problem = match plant {
        Plant::Model(sys) => assemble_model_based(sys, gain, h)?,
        Plant::Data(set) => assemble_analysis(set, gain, h)?,
    };
    let eps = margin.at(h);
    let res = oracle.solve_feasibility(&problem, eps);
    if res.status != FeasibilityStatus::Feasible {
        return Ok(Err(res.status));
    }
    Ok(Ok(AnalysisCertificate::from_solution(
        &problem,
        &res.values,
        gain,
        res.achieved_margin,
    )?))
}

/// Bisection over the analysis conditions for a fixed gain.
pub fn analyze_msi<O: SdpOracle + ?Sized>(
    oracle: &O,
    plant: Plant<'_>,
    gain: &FeedbackGain,
    cfg: &BisectionConfig,
    margin: MarginRule,
) -> Result<Bisection<AnalysisCertificate>, SearchError> {
    let mut assembly_error = None;
    let out = msi_bisection(cfg, |h| match analyze_at(oracle, plant, gain, h, margin) {
        Ok(r) => r,
        Err(e) => {
            assembly_error.get_or_insert(e);
            Err(FeasibilityStatus::SolverFailure)
        }
    });
    if let Some(e) = assembly_error {
        return Err(e.into());
    }
    out
}

/// Single design solve at `h` with `Q1`, `R` fixed.
pub fn design_at<O: SdpOracle + ?Sized>(
    oracle: &O,
    set: &ConsistencySet,
    q1: &crate::Matrix,
    r: &crate::Matrix,
    h: f64,
    margin: MarginRule,
) -> Result<Result<DesignCertificate, FeasibilityStatus>, LmiError> {
    let problem = assemble_design(set, q1, r, h)?;
    let res = oracle.solve_feasibility(&problem, margin.at(h));
    if res.status != FeasibilityStatus::Feasible {
        return Ok(Err(res.status));
    }
    Ok(Ok(DesignCertificate::from_solution(
        &problem,
        &res.values,
        q1,
        r,
        res.achieved_margin,
    )?))
}

/// One outer round of the alternation.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRound {
    pub round: usize,
    /// Sampling bound the design step was attempted at.
    pub h_try: f64,
    /// Growth factor in effect for the next round.
    pub growth: f64,
    pub design: FeasibilityStatus,
    /// Analysis solve for the new gain that supplies the next handoff;
    /// `None` when no new gain was produced.
    pub handoff_analysis: Option<FeasibilityStatus>,
    /// Certified bound after the round.
    pub h_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutcome {
    /// Certified bound for `gain`.
    pub h: f64,
    pub gain: crate::Matrix,
    /// Design witness certifying `(gain, h)`; `None` when no design step
    /// improved on the initial gain.
    pub design: Option<DesignCertificate>,
    /// Analysis witness certifying `(gain, h)`; present for the initial gain.
    pub analysis: Option<AnalysisCertificate>,
    /// Bound certified for the initial gain.
    pub initial_h: f64,
    pub initial_trace: Vec<TraceEntry>,
    pub rounds: Vec<DesignRound>,
    /// Description of the alternation choices, for result metadata.
    pub schedule_note: String,
}

/// `Q1 = P1⁻¹` and `R` from an analysis witness. The analysis conditions
/// are invariant under `(P, R, λ) ↦ c·(P, R, λ)`; `c` is chosen so that
/// `‖Q1‖₂ = ‖R‖₂`, which keeps the design problem well scaled.
pub fn handoff(cert: &AnalysisCertificate) -> Result<(crate::Matrix, crate::Matrix), SearchError> {
    let (q1, _) = sym_inverse(&symmetrize(&cert.p1)).ok_or(SearchError::SingularHandoff)?;
    let r = symmetrize(&cert.r);
    let (nq, nr) = (spectral_norm(&q1), spectral_norm(&r));
    if !(nq > 0.0 && nr > 0.0 && nq.is_finite() && nr.is_finite()) {
        return Err(SearchError::SingularHandoff);
    }
    let c = libm::sqrt(nq / nr);
    Ok((symmetrize(&q1) / c, r * c))
}

/// Alternates analysis (gain fixed) and design (`Q1 = P1⁻¹`, `R` fixed)
/// while growing `h` geometrically; the growth factor halves its excess
/// over 1 after every failed design step. The analysis witness handed to
/// the design step is solved at `handoff_backoff · h`, away from the
/// feasibility boundary of the current gain.
pub fn design_iterate<O: SdpOracle + ?Sized>(
    oracle: &O,
    set: &ConsistencySet,
    k0: &FeedbackGain,
    cfg: &BisectionConfig,
    sched: &IterationSchedule,
    margin: MarginRule,
) -> Result<DesignOutcome, SearchError> {
    sched.validate()?;
    let init = analyze_msi(oracle, Plant::Data(set), k0, cfg, margin)?;
    let initial_h = init.h;
    let mut h = initial_h;
    let mut seed = match analyze_at(oracle, Plant::Data(set), k0, sched.handoff_backoff * h, margin)? {
        Ok(a) if sched.handoff_backoff < 1.0 => a,
        _ => init.witness.clone(),
    };
    let mut growth = sched.h_growth_factor;
    let mut stalls = 0;
    let mut best: Option<DesignCertificate> = None;
    let mut rounds = Vec::new();

    for round in 0..sched.max_outer_iters {
        let (q1, r) = handoff(&seed)?;
        let h_try = h * growth;
        match design_at(oracle, set, &q1, &r, h_try, margin)? {
            Ok(design) => {
                h = h_try;
                stalls = 0;
                let next = analyze_at(
                    oracle,
                    Plant::Data(set),
                    &design.feedback(),
                    sched.handoff_backoff * h,
                    margin,
                )?;
                let status = next.as_ref().err().copied().unwrap_or(FeasibilityStatus::Feasible);
                if let Ok(a) = next {
                    seed = a;
                }
                best = Some(design);
                rounds.push(DesignRound {
                    round,
                    h_try,
                    growth,
                    design: FeasibilityStatus::Feasible,
                    handoff_analysis: Some(status),
                    h_after: h,
                });
            }
            Err(status) => {
                growth = 1.0 + 0.5 * (growth - 1.0);
                let mut refreshed = None;
                if sched.recenter {
                    if let Ok(d) = design_at(oracle, set, &q1, &r, h, margin)? {
                        let next = analyze_at(
                            oracle,
                            Plant::Data(set),
                            &d.feedback(),
                            sched.handoff_backoff * h,
                            margin,
                        )?;
                        refreshed = Some(next.as_ref().err().copied().unwrap_or(FeasibilityStatus::Feasible));
                        if let Ok(a) = next {
                            seed = a;
                            if h > initial_h {
                                best = Some(d);
                            }
                        }
                    }
                }
                if refreshed != Some(FeasibilityStatus::Feasible) {
                    stalls += 1;
                }
                rounds.push(DesignRound {
                    round,
                    h_try,
                    growth,
                    design: status,
                    handoff_analysis: refreshed,
                    h_after: h,
                });
                if stalls >= sched.stall_limit {
                    break;
                }
            }
        }
    }

    let schedule_note = alloc::format!(
        "growth {} with halving backoff (recenter {}), stall limit {}, max rounds {}, handoff at {} h; Q1 = inverse(P1) and R taken from the analysis witness of the current gain",
        sched.h_growth_factor, sched.recenter, sched.stall_limit, sched.max_outer_iters, sched.handoff_backoff
    );
    let (h, gain, design, analysis) = match best {
        Some(d) if d.h > initial_h => (d.h, d.gain.clone(), Some(d), None),
        _ => (initial_h, k0.matrix().clone(), None, Some(init.witness)),
    };
    Ok(DesignOutcome {
        h,
        gain,
        design,
        analysis,
        initial_h,
        initial_trace: init.trace,
        rounds,
        schedule_note,
    })
}
