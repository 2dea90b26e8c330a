//! Semidefinite feasibility oracle contract and solver-independent witness
//! verification.
//!
//! A backend only proposes an assignment. Whether a result counts as
//! `Feasible` is decided here by direct eigenvalue evaluation of every
//! constraint and variable sign condition.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::linalg::{max_eigenvalue, min_eigenvalue};
use crate::lmi::{LmiProblem, Relation, Sign};

pub use crate::lmi::default_margin;

/// Slack allowed on scalar lower bounds and semidefinite constraints.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    /// The backend reports an interior point, but it misses the `ε/2` band.
    Marginal,
    SolverFailure,
}

impl FeasibilityStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeasibilityStatus::Feasible => "feasible",
            FeasibilityStatus::Infeasible => "infeasible",
            FeasibilityStatus::Marginal => "marginal",
            FeasibilityStatus::SolverFailure => "solver-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    /// Decision vector in the layout of the problem's variables; empty when
    /// the backend returned nothing.
    pub values: Vec<f64>,
    /// `min` over constraints of `-λ_max(F)` (`λ_min(F)` for `⪰ 0`); positive
    /// when every constraint holds strictly.
    pub achieved_margin: f64,
    pub solver_diagnostics: String,
}

/// Semidefinite feasibility backend. Implementations hold no state shared
/// between calls.
pub trait SdpOracle {
    fn solve_feasibility(&self, problem: &LmiProblem, margin: f64) -> FeasibilityResult;
}

impl<T: SdpOracle + ?Sized> SdpOracle for &T {
    fn solve_feasibility(&self, problem: &LmiProblem, margin: f64) -> FeasibilityResult {
        (**self).solve_feasibility(problem, margin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessCheck {
    pub passed: bool,
    /// Same quantity as [`FeasibilityResult::achieved_margin`].
    pub margin: f64,
    pub violations: Vec<String>,
}

/// Checks `x` against every constraint and sign condition of `problem`:
/// `λ_max ≤ -ε/2` for `≺ 0`, `λ_min ≥ 0` for `⪰ 0` (up to a relative
/// slack), `λ_min ≥ ε/2` for positive definite variables and scalar lower
/// bounds exactly up to [`BOUND_SLACK`].
pub fn verify_witness(problem: &LmiProblem, x: &[f64], margin: f64) -> WitnessCheck {
    let mut violations = Vec::new();
    if x.len() != problem.decision_len() || x.iter().any(|v| !v.is_finite()) {
        return WitnessCheck {
            passed: false,
            margin: f64::NEG_INFINITY,
            violations: alloc::vec![String::from("decision vector missing or not finite")],
        };
    }
    let band = 0.5 * margin;
    let mut achieved = f64::INFINITY;
    for (c, f) in problem.constraints().iter().zip(problem.evaluate(x)) {
        match c.relation {
            Relation::NegativeDefinite => {
                let top = max_eigenvalue(&f);
                achieved = achieved.min(-top);
                if !(top <= -band) {
                    violations.push(format!("{}: lambda_max = {top:e} > {:e}", c.name, -band));
                }
            }
            Relation::PositiveSemidefinite => {
                let low = min_eigenvalue(&f);
                achieved = achieved.min(low);
                let slack = BOUND_SLACK * f.amax().max(1.0);
                if !(low >= -slack) {
                    violations.push(format!("{}: lambda_min = {low:e} < 0", c.name));
                }
            }
        }
    }
    for (name, value) in problem.named_values(x) {
        let decl = problem.variable(&name).expect("declared variable");
        match decl.sign {
            Sign::Free => {}
            Sign::PositiveDefinite => {
                let low = min_eigenvalue(&value);
                if !(low >= band) {
                    violations.push(format!("{name}: lambda_min = {low:e} < {band:e}"));
                }
            }
            Sign::AtLeast(bound) => {
                let v = value[(0, 0)];
                if !(v >= bound - BOUND_SLACK) {
                    violations.push(format!("{name} = {v:e} below {bound:e}"));
                }
            }
        }
    }
    WitnessCheck {
        passed: violations.is_empty(),
        margin: achieved,
        violations,
    }
}

/// What a backend reports about its own solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReport {
    /// Candidate decision vector, if any.
    pub values: Option<Vec<f64>>,
    /// Optimal uniform slack `t*` of the margin-maximizing formulation,
    /// in the backend's scaled units.
    pub slack: Option<f64>,
    /// Numerical breakdown (iteration limit, stalled progress, bad input).
    pub numerical_failure: bool,
    pub diagnostics: String,
}

/// Status decision shared by every backend:
/// verified witness → `Feasible`; else numerical breakdown →
/// `SolverFailure`; else claimed slack `≥ ε` → `Marginal`; else `Infeasible`.
pub fn classify(problem: &LmiProblem, report: BackendReport, margin: f64) -> FeasibilityResult {
    let BackendReport {
        values,
        slack,
        numerical_failure,
        mut diagnostics,
    } = report;
    let values = values.unwrap_or_default();
    let check = verify_witness(problem, &values, margin);
    let status = if check.passed {
        FeasibilityStatus::Feasible
    } else if numerical_failure {
        FeasibilityStatus::SolverFailure
    } else if slack.is_some_and(|t| t >= margin) {
        FeasibilityStatus::Marginal
    } else {
        FeasibilityStatus::Infeasible
    };
    if !check.passed && !values.is_empty() {
        if let Some(first) = check.violations.first() {
            diagnostics.push_str("; verification: ");
            diagnostics.push_str(first);
        }
    }
    FeasibilityResult {
        status,
        values,
        achieved_margin: check.margin,
        solver_diagnostics: diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{LmiBuilder, ProblemKind, Structure};
    use crate::Matrix;
    use alloc::vec;

    fn scalar_problem() -> LmiProblem {
        let mut b = LmiBuilder::new(ProblemKind::ModelBased, 1.0);
        let x = b.scalar("x", Sign::Free);
        let p = b.declare("P", 1, 1, Structure::Symmetric, Sign::PositiveDefinite);
        b.constrain("x<-1", Relation::NegativeDefinite, move |a| {
            Matrix::from_element(1, 1, a.scalar(x) + 1.0)
        });
        b.constrain("P<=2", Relation::PositiveSemidefinite, move |a| {
            Matrix::from_element(1, 1, 2.0 - a.get(p)[(0, 0)])
        });
        b.build().unwrap()
    }

    #[test]
    fn verification_is_independent_of_claims() {
        let p = scalar_problem();
        let good = verify_witness(&p, &[-2.0, 1.0], 1e-6);
        assert!(good.passed);
        assert_eq!(good.margin, 1.0);
        let edge = verify_witness(&p, &[-1.0, 1.0], 1e-6);
        assert!(!edge.passed);
        let not_pd = verify_witness(&p, &[-2.0, 0.0], 1e-6);
        assert!(!not_pd.passed);
        assert!(!verify_witness(&p, &[f64::NAN, 1.0], 1e-6).passed);
        assert!(!verify_witness(&p, &[-2.0], 1e-6).passed);
    }

    #[test]
    fn classification_order() {
        let p = scalar_problem();
        let report = |values: Option<Vec<f64>>, slack, fail| BackendReport {
            values,
            slack,
            numerical_failure: fail,
            diagnostics: String::new(),
        };
        let r = classify(&p, report(Some(vec![-2.0, 1.0]), Some(1.0), true), 1e-6);
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        let r = classify(&p, report(Some(vec![-0.5, 1.0]), Some(0.1), true), 1e-6);
        assert_eq!(r.status, FeasibilityStatus::SolverFailure);
        let r = classify(&p, report(Some(vec![-0.5, 1.0]), Some(0.1), false), 1e-6);
        assert_eq!(r.status, FeasibilityStatus::Marginal);
        let r = classify(&p, report(None, Some(-1.0), false), 1e-6);
        assert_eq!(r.status, FeasibilityStatus::Infeasible);
    }
}
