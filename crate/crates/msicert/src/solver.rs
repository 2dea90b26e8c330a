//! Interior-point backend for [`SdpOracle`] built on Clarabel.
//!
//! The feasibility problem is posed as a margin maximization over the
//! decision vector `x` and a uniform slack `t`:
//!
//! ```text
//! maximize t  subject to
//!     -F_i(x) / σ_i - t I ⪰ 0      for every F_i ≺ 0,   σ_i = max(1, ‖F_i(0)‖₂)
//!      F_j(x) / σ_j       ⪰ 0      for every F_j ⪰ 0
//!      X - t I            ⪰ 0      for every positive definite variable X
//!      x_k ≥ bound                 for every scalar lower bound
//!     |x_k| ≤ box,  optionally t ≤ cap
//! ```
//!
//! Most conditions are homogeneous, so the box only fixes a scale. With
//! centering enabled, a second solve caps `t` at a fraction of the first
//! optimum; the interior-point iterates then stop near the center of that
//! sub-level set instead of at the extreme max-margin point. Every returned
//! point is classified by [`classify`], which re-verifies it.
//!
//! For an infeasible homogeneous system the supremum `t = 0` sits at
//! `x = 0`, where the iterates often break down. A numerical failure on such
//! a system is retried once with `X ⪰ I` in place of `X ⪰ t I`, which has
//! the same feasibility and a nondegenerate optimum.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use msicert_core::linalg::spectral_norm;
use msicert_core::lmi::{LmiProblem, Relation, Sign, Structure};
use msicert_core::sdp::{classify, BackendReport, FeasibilityResult, FeasibilityStatus, SdpOracle};
use msicert_core::Matrix;

// Links the system BLAS/LAPACK used by Clarabel's semidefinite cones.
extern crate openblas_src;

/// Backend configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarabelOracle {
    /// Bound on the magnitude of every decision entry.
    pub box_bound: f64,
    /// Upper bound on the slack in the single-solve mode; `None` leaves it
    /// to the box.
    pub slack_cap: Option<f64>,
    /// When set to `α ∈ (0, 1)`, a second solve caps the slack at `α·t*`
    /// of the uncapped solve. The central point is returned only if it
    /// verifies; otherwise the first point stands.
    pub centering: Option<f64>,
    pub max_iter: u32,
}

impl Default for ClarabelOracle {
    fn default() -> Self {
        Self {
            box_bound: 1e4,
            slack_cap: Some(1.0),
            centering: Some(0.03),
            max_iter: 200,
        }
    }
}

/// Triplet accumulator for the constraint matrix `A` in `s = b - A z`.
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn push(&mut self, col: usize, value: f64) {
        if value != 0.0 {
            self.i.push(self.b.len() - 1);
            self.j.push(col);
            self.v.push(value);
        }
    }

    /// Appends a PSD block `S = B - Σ_c A_c z_c` in Clarabel's scaled
    /// upper-triangular layout (column-wise, off-diagonals times √2).
    fn psd_block(&mut self, constant: &Matrix, columns: &[(usize, Matrix)]) {
        let n = constant.nrows();
        let s2 = std::f64::consts::SQRT_2;
        for c in 0..n {
            for r in 0..=c {
                let w = if r == c { 1.0 } else { s2 };
                self.b.push(w * constant[(r, c)]);
                for (col, a) in columns {
                    self.push(*col, w * a[(r, c)]);
                }
            }
        }
    }
}

/// What the slack `t` does in one solve.
#[derive(Debug, Clone, Copy)]
enum Slack {
    /// Maximize `t`, optionally capped.
    Maximize(Option<f64>),
    /// Maximize `t` with positive definite variables normalized to `X ⪰ I`
    /// instead of `X ⪰ t I`; only valid for homogeneous problems.
    Normalized,
}

impl ClarabelOracle {
    fn solve(&self, problem: &LmiProblem, slack: Slack) -> BackendReport {
        let p = problem.decision_len();
        let t = p;
        let nz = p + 1;
        let mut rows = Rows { i: vec![], j: vec![], v: vec![], b: vec![] };

        if let Slack::Maximize(Some(cap)) = slack {
            rows.b.push(cap);
            rows.push(t, 1.0);
        }
        for decl in problem.variables() {
            if let Sign::AtLeast(bound) = decl.sign {
                for k in 0..decl.entries() {
                    rows.b.push(-bound);
                    rows.push(decl.offset + k, -1.0);
                }
            }
        }
        for k in 0..p {
            rows.b.push(self.box_bound);
            rows.push(k, 1.0);
            rows.b.push(self.box_bound);
            rows.push(k, -1.0);
        }
        let nonneg = rows.b.len();
        let mut cones: Vec<SupportedConeT<f64>> = vec![SupportedConeT::NonnegativeConeT(nonneg)];

        for c in problem.constraints() {
            let size = c.size();
            let sigma = spectral_norm(&c.constant).max(1.0);
            let eye = Matrix::identity(size, size);
            let (constant, sign) = match c.relation {
                Relation::NegativeDefinite => (-&c.constant / sigma, 1.0),
                Relation::PositiveSemidefinite => (&c.constant / sigma, -1.0),
            };
            let mut columns: Vec<(usize, Matrix)> = c
                .terms
                .iter()
                .map(|(k, f)| (*k, f * (sign / sigma)))
                .collect();
            if c.relation == Relation::NegativeDefinite {
                columns.push((t, eye));
            }
            rows.psd_block(&constant, &columns);
            cones.push(SupportedConeT::PSDTriangleConeT(size));
        }
        for decl in problem.variables() {
            if decl.sign == Sign::PositiveDefinite && decl.structure == Structure::Symmetric {
                let n = decl.rows;
                let mut columns: Vec<(usize, Matrix)> =
                    (0..decl.entries()).map(|k| (decl.offset + k, -decl.basis(k))).collect();
                let constant = match slack {
                    Slack::Normalized => -Matrix::identity(n, n),
                    Slack::Maximize(_) => {
                        columns.push((t, Matrix::identity(n, n)));
                        Matrix::zeros(n, n)
                    }
                };
                rows.psd_block(&constant, &columns);
                cones.push(SupportedConeT::PSDTriangleConeT(n));
            }
        }

        let m = rows.b.len();
        let a = CscMatrix::new_from_triplets(m, nz, rows.i, rows.j, rows.v);
        let pmat = CscMatrix::<f64>::zeros((nz, nz));
        let mut q = vec![0.0; nz];
        q[t] = -1.0;
        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .build()
        {
            Ok(s) => s,
            Err(e) => return failure(format!("clarabel settings: {e}")),
        };
        let mut solver = match DefaultSolver::new(&pmat, &q, &a, &rows.b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return failure(format!("clarabel setup: {e:?}")),
        };
        solver.solve();
        let sol = &solver.solution;
        let numerical_failure = matches!(
            sol.status,
            SolverStatus::MaxIterations
                | SolverStatus::MaxTime
                | SolverStatus::NumericalError
                | SolverStatus::InsufficientProgress
                | SolverStatus::Unsolved
                | SolverStatus::CallbackTerminated
        );
        let infeasible = matches!(
            sol.status,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible
        );
        let finite = !infeasible && sol.x.iter().all(|v| v.is_finite());
        let slack = (finite && sol.x.len() == nz).then(|| sol.x[t]);
        BackendReport {
            values: (finite && sol.x.len() == nz).then(|| sol.x[..p].to_vec()),
            slack,
            numerical_failure,
            diagnostics: format!(
                "clarabel {:?} after {} iterations, t* = {}",
                sol.status,
                sol.iterations,
                slack.map_or("n/a".to_string(), |s| format!("{s:e}"))
            ),
        }
    }
}

impl ClarabelOracle {
    fn max_margin(&self, problem: &LmiProblem, margin: f64) -> FeasibilityResult {
        let Some(alpha) = self.centering else {
            return classify(problem, self.solve(problem, Slack::Maximize(self.slack_cap)), margin);
        };
        let first = self.solve(problem, Slack::Maximize(None));
        let slack = first.slack;
        let first = classify(problem, first, margin);
        match slack {
            Some(t) if first.status == FeasibilityStatus::Feasible && t > 0.0 => {
                let second = classify(problem, self.solve(problem, Slack::Maximize(Some(alpha * t))), margin);
                if second.status == FeasibilityStatus::Feasible {
                    second
                } else {
                    first
                }
            }
            _ => first,
        }
    }
}

/// `x ↦ c·x` for `c ≥ 1` preserves every constraint and sign condition.
fn is_homogeneous(problem: &LmiProblem) -> bool {
    problem.constraints().iter().all(|c| c.constant.iter().all(|v| *v == 0.0))
        && problem
            .variables()
            .iter()
            .all(|v| !matches!(v.sign, Sign::AtLeast(b) if b < 0.0))
}

fn failure(msg: String) -> BackendReport {
    BackendReport {
        values: None,
        slack: None,
        numerical_failure: true,
        diagnostics: msg,
    }
}

impl SdpOracle for ClarabelOracle {
    fn solve_feasibility(&self, problem: &LmiProblem, margin: f64) -> FeasibilityResult {
        let result = self.max_margin(problem, margin);
        if result.status != FeasibilityStatus::SolverFailure {
            return result;
        }
        if !is_homogeneous(problem) {
            return result;
        }
        // An infeasible homogeneous system has its max-margin optimum at
        // x = 0, where every cone degenerates; normalizing the definite
        // variables moves the optimum away from it.
        let retry = classify(problem, self.solve(problem, Slack::Normalized), margin);
        match retry.status {
            FeasibilityStatus::Feasible | FeasibilityStatus::Infeasible => FeasibilityResult {
                solver_diagnostics: format!("{}; normalized: {}", result.solver_diagnostics, retry.solver_diagnostics),
                ..retry
            },
            _ => result,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use msicert_core::lmi::{LmiBuilder, ProblemKind};

    fn scalar(c: &[(f64, f64)]) -> LmiProblem {
        // constraints a·x + b ≺ 0
        let mut b = LmiBuilder::new(ProblemKind::ModelBased, 1.0);
        let x = b.scalar("x", Sign::Free);
        for (i, &(a, c0)) in c.iter().enumerate() {
            b.constrain(&format!("c{i}"), Relation::NegativeDefinite, move |v| {
                Matrix::from_element(1, 1, a * v.scalar(x) + c0)
            });
        }
        b.build().unwrap()
    }

    #[test]
    fn trivial_scalar_cases() {
        let o = ClarabelOracle::default();
        let r = o.solve_feasibility(&scalar(&[(1.0, 1.0)]), 1e-7);
        assert_eq!(r.status, FeasibilityStatus::Feasible, "{}", r.solver_diagnostics);
        assert!(r.values[0] < -1.0);
        let r = o.solve_feasibility(&scalar(&[(1.0, 1.0), (-1.0, 1.0)]), 1e-7);
        assert_eq!(r.status, FeasibilityStatus::Infeasible, "{}", r.solver_diagnostics);
    }

    #[test]
    fn positive_definite_variable_and_psd_constraint() {
        // 0 ≺ P ⪯ I with P 2x2, and P - [[0.5, 0],[0, 0.5]] ⪰ 0
        let mut b = LmiBuilder::new(ProblemKind::ModelBased, 1.0);
        let p = b.declare("P", 2, 2, Structure::Symmetric, Sign::PositiveDefinite);
        b.constrain("upper", Relation::PositiveSemidefinite, move |a| {
            Matrix::identity(2, 2) - a.get(p)
        });
        b.constrain("lower", Relation::PositiveSemidefinite, move |a| {
            a.get(p) - Matrix::identity(2, 2) * 0.5
        });
        let prob = b.build().unwrap();
        let r = ClarabelOracle::default().solve_feasibility(&prob, 1e-7);
        assert_eq!(r.status, FeasibilityStatus::Feasible, "{}", r.solver_diagnostics);
    }
}
