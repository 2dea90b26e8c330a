//! Data matrices, quadratic noise bounds and the set of plants consistent with
//! them.
//!
//! With `Z = [X; U]`, every plant `(A, B)` that could have produced the data
//! under an admissible disturbance satisfies
//!
//! ```text
//! [[A B]ᵀ; I]ᵀ · P_c · [[A B]ᵀ; I] ⪰ 0,
//! P_c = [-Z 0; Ẋ B_d] · [Q_d S_d; S_dᵀ R_d] · [-Z 0; Ẋ B_d]ᵀ.
//! ```
//!
//! When `P_c` is invertible with exactly `m_d` positive eigenvalues the same
//! set has the primal description `[[A B]; I]ᵀ · P̃_c · [[A B]; I] ⪰ 0` with
//! `P̃_c = [-R̃_c S̃_cᵀ; S̃_c -Q̃_c]` built from the blocks of `P_c⁻¹`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{
    self, max_eigenvalue, min_eigenvalue, rank, relative_asymmetry, sym_eigenvalues, sym_inverse,
    symmetrize, Inertia,
};
use crate::Matrix;

/// Eigenvalues within this fraction of the spectral norm count as zero.
pub const TOL_EIG: f64 = 1e-9;
/// Dualization refuses matrices with a larger spectral condition number.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("{0} is not symmetric")]
    NotSymmetric(&'static str),
    #[error("Q_d must be negative definite (largest eigenvalue {0})")]
    QdNotNegative(f64),
    #[error("inertia assumption not verified: {positive} positive eigenvalues (need {required}), invertible: {invertible}")]
    AssumptionNotVerified {
        positive: usize,
        required: usize,
        invertible: bool,
    },
    #[error("P_c is numerically singular (condition number {0:e})")]
    IllConditioned(f64),
    #[error("dual multiplier not available; run dualize first")]
    NoDual,
}

/// Sampled triples `(ẋ(τ_k), x(τ_k), u(τ_k))`, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    tau: Vec<f64>,
    x: Matrix,
    u: Matrix,
    xdot: Matrix,
    bd: Matrix,
}

impl DataSet {
    pub fn new(
        tau: Vec<f64>,
        x: Matrix,
        u: Matrix,
        xdot: Matrix,
        bd: Matrix,
    ) -> Result<Self, ConsistencyError> {
        let len = tau.len();
        if x.ncols() != len || u.ncols() != len || xdot.ncols() != len {
            return Err(ConsistencyError::Dimension("column counts of X, U, Xdot and tau differ"));
        }
        if xdot.nrows() != x.nrows() || bd.nrows() != x.nrows() {
            return Err(ConsistencyError::Dimension("rows of Xdot/Bd != rows of X"));
        }
        Ok(Self { tau, x, u, xdot, bd })
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }
    pub fn x(&self) -> &Matrix {
        &self.x
    }
    pub fn u(&self) -> &Matrix {
        &self.u
    }
    pub fn xdot(&self) -> &Matrix {
        &self.xdot
    }
    pub fn bd(&self) -> &Matrix {
        &self.bd
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn m(&self) -> usize {
        self.u.nrows()
    }
    pub fn md(&self) -> usize {
        self.bd.ncols()
    }
    /// Number of samples `N`.
    pub fn len(&self) -> usize {
        self.tau.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// `Z = [X; U]`.
    pub fn z(&self) -> Matrix {
        let (n, m, len) = (self.n(), self.m(), self.len());
        let mut z = Matrix::zeros(n + m, len);
        z.view_mut((0, 0), (n, len)).copy_from(&self.x);
        z.view_mut((n, 0), (m, len)).copy_from(&self.u);
        z
    }
}

/// Quadratic disturbance bound `[Dᵀ; I]ᵀ [Q_d S_d; S_dᵀ R_d] [Dᵀ; I] ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBound {
    qd: Matrix,
    sd: Matrix,
    rd: Matrix,
}

impl NoiseBound {
    pub fn new(qd: Matrix, sd: Matrix, rd: Matrix) -> Result<Self, ConsistencyError> {
        if !qd.is_square() || !rd.is_square() {
            return Err(ConsistencyError::Dimension("Q_d and R_d must be square"));
        }
        if sd.shape() != (qd.nrows(), rd.nrows()) {
            return Err(ConsistencyError::Dimension("S_d must be N x m_d"));
        }
        if relative_asymmetry(&qd) > 1e-12 {
            return Err(ConsistencyError::NotSymmetric("Q_d"));
        }
        if relative_asymmetry(&rd) > 1e-12 {
            return Err(ConsistencyError::NotSymmetric("R_d"));
        }
        let eigs = sym_eigenvalues(&qd);
        let scale = eigs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let top = eigs.last().copied().unwrap_or(0.0);
        if !(top < -TOL_EIG * scale) || qd.nrows() == 0 {
            return Err(ConsistencyError::QdNotNegative(top));
        }
        Ok(Self { qd, sd, rd })
    }

    /// Pointwise bound `‖d_k‖₂ ≤ d̄` over `samples` samples, encoded as
    /// `Q_d = -I`, `S_d = 0`, `R_d = d̄² N I`.
    pub fn pointwise(d_bar: f64, samples: usize, md: usize) -> Self {
        Self {
            qd: -Matrix::identity(samples, samples),
            sd: Matrix::zeros(samples, md),
            rd: Matrix::identity(md, md) * (d_bar * d_bar * samples as f64),
        }
    }

    pub fn qd(&self) -> &Matrix {
        &self.qd
    }
    pub fn sd(&self) -> &Matrix {
        &self.sd
    }
    pub fn rd(&self) -> &Matrix {
        &self.rd
    }
    pub fn samples(&self) -> usize {
        self.qd.nrows()
    }
    pub fn md(&self) -> usize {
        self.rd.nrows()
    }

    /// `D Q_d Dᵀ + D S_d + S_dᵀ Dᵀ + R_d` for a disturbance matrix `D` (m_d × N).
    pub fn form(&self, d: &Matrix) -> Matrix {
        let ds = d * &self.sd;
        symmetrize(&(d * &self.qd * d.transpose() + &ds + ds.transpose() + &self.rd))
    }

    /// Whether `D` lies in the bound set, with its smallest form eigenvalue.
    pub fn contains(&self, d: &Matrix, tol: f64) -> (bool, f64) {
        let margin = min_eigenvalue(&self.form(d));
        (margin >= -tol, margin)
    }
}

/// Primal multiplier `P̃_c` with the conditioning of the inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMultiplier {
    pub matrix: Matrix,
    pub condition: f64,
}

/// Partitioned `P_c` with inertia and, once verified, its dual.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencySet {
    pc: Matrix,
    n: usize,
    m: usize,
    md: usize,
    inertia: Inertia,
    dual: Option<DualMultiplier>,
}

impl ConsistencySet {
    /// Rebuilds a set from a stored `P_c`. The dual is not restored; call
    /// [`dualize`] again.
    pub fn from_pc(pc: Matrix, n: usize, m: usize, md: usize) -> Result<Self, ConsistencyError> {
        if pc.shape() != (2 * n + m, 2 * n + m) {
            return Err(ConsistencyError::Dimension("P_c must be (2n+m) square"));
        }
        if relative_asymmetry(&pc) > 1e-10 {
            return Err(ConsistencyError::NotSymmetric("P_c"));
        }
        let pc = symmetrize(&pc);
        let inertia = Inertia::of(&pc, TOL_EIG);
        Ok(Self {
            pc,
            n,
            m,
            md,
            inertia,
            dual: None,
        })
    }

    pub fn pc(&self) -> &Matrix {
        &self.pc
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn md(&self) -> usize {
        self.md
    }
    pub fn inertia(&self) -> Inertia {
        self.inertia
    }
    pub fn dual(&self) -> Option<&DualMultiplier> {
        self.dual.as_ref()
    }

    /// `P̃_c`, if [`dualize`] has succeeded.
    pub fn pc_dual(&self) -> Option<&Matrix> {
        self.dual.as_ref().map(|d| &d.matrix)
    }

    /// `Q_c`, (n+m) × (n+m).
    pub fn qc(&self) -> Matrix {
        let k = self.n + self.m;
        self.pc.view((0, 0), (k, k)).into_owned()
    }

    /// `S_c`, (n+m) × n.
    pub fn sc(&self) -> Matrix {
        let k = self.n + self.m;
        self.pc.view((0, k), (k, self.n)).into_owned()
    }

    /// `R_c`, n × n.
    pub fn rc(&self) -> Matrix {
        let k = self.n + self.m;
        self.pc.view((k, k), (self.n, self.n)).into_owned()
    }
}

/// Evaluates `P_c` from data and noise bound, symmetrizes it and records its
/// inertia. The dual part is left empty.
pub fn build_consistency_set(
    data: &DataSet,
    noise: &NoiseBound,
) -> Result<ConsistencySet, ConsistencyError> {
    let (n, m, md, len) = (data.n(), data.m(), data.md(), data.len());
    if noise.samples() != len {
        return Err(ConsistencyError::Dimension("noise bound sample count != data length"));
    }
    if noise.md() != md {
        return Err(ConsistencyError::Dimension("noise bound m_d != columns of B_d"));
    }
    // outer = [-Z 0; Ẋ B_d], (2n+m) × (N+m_d)
    let mut outer = Matrix::zeros(2 * n + m, len + md);
    outer.view_mut((0, 0), (n + m, len)).copy_from(&(-data.z()));
    outer.view_mut((n + m, 0), (n, len)).copy_from(data.xdot());
    outer.view_mut((n + m, len), (n, md)).copy_from(data.bd());

    let mut pd = Matrix::zeros(len + md, len + md);
    pd.view_mut((0, 0), (len, len)).copy_from(noise.qd());
    pd.view_mut((0, len), (len, md)).copy_from(noise.sd());
    pd.view_mut((len, 0), (md, len)).copy_from(&noise.sd().transpose());
    pd.view_mut((len, len), (md, md)).copy_from(noise.rd());

    let pc = symmetrize(&(&outer * pd * outer.transpose()));
    let inertia = Inertia::of(&pc, TOL_EIG);
    Ok(ConsistencySet {
        pc,
        n,
        m,
        md,
        inertia,
        dual: None,
    })
}

/// Result of a quadratic-form membership evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub member: bool,
    /// Smallest eigenvalue of the n × n form.
    pub margin: f64,
}

fn stacked_ab(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, m) = (a.nrows(), b.ncols());
    let mut ab = Matrix::zeros(n, n + m);
    ab.view_mut((0, 0), (n, n)).copy_from(a);
    ab.view_mut((0, n), (n, m)).copy_from(b);
    ab
}

/// Tests `[[A B]ᵀ; I]ᵀ P_c [[A B]ᵀ; I] ⪰ -tol·I`.
pub fn membership_test(
    a: &Matrix,
    b: &Matrix,
    set: &ConsistencySet,
    tol: f64,
) -> Result<Membership, ConsistencyError> {
    let (n, m) = (set.n, set.m);
    if a.shape() != (n, n) || b.shape() != (n, m) {
        return Err(ConsistencyError::Dimension("candidate does not match the data dimensions"));
    }
    let mut basis = Matrix::zeros(2 * n + m, n);
    basis
        .view_mut((0, 0), (n + m, n))
        .copy_from(&stacked_ab(a, b).transpose());
    basis
        .view_mut((n + m, 0), (n, n))
        .copy_from(&Matrix::identity(n, n));
    let form = linalg::congruence(&basis, &set.pc);
    let margin = min_eigenvalue(&form);
    Ok(Membership {
        member: margin >= -tol,
        margin,
    })
}

/// Tests the primal form `[[A B]; I]ᵀ P̃_c [[A B]; I] ⪰ -tol·I`, (n+m) × (n+m).
pub fn primal_membership_test(
    a: &Matrix,
    b: &Matrix,
    set: &ConsistencySet,
    tol: f64,
) -> Result<Membership, ConsistencyError> {
    let (n, m) = (set.n, set.m);
    if a.shape() != (n, n) || b.shape() != (n, m) {
        return Err(ConsistencyError::Dimension("candidate does not match the data dimensions"));
    }
    let dual = set.pc_dual().ok_or(ConsistencyError::NoDual)?;
    let mut basis = Matrix::zeros(2 * n + m, n + m);
    basis.view_mut((0, 0), (n, n + m)).copy_from(&stacked_ab(a, b));
    basis
        .view_mut((n, 0), (n + m, n + m))
        .copy_from(&Matrix::identity(n + m, n + m));
    let form = linalg::congruence(&basis, dual);
    let margin = min_eigenvalue(&form);
    Ok(Membership {
        member: margin >= -tol,
        margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InertiaReport {
    pub invertible: bool,
    pub positive_count: usize,
    pub pass: bool,
}

/// Invertibility (no eigenvalue within `tol_eig · ‖P_c‖₂` of zero) and
/// exactly `m_d` positive eigenvalues.
pub fn check_assumption_inertia(set: &ConsistencySet, tol_eig: f64) -> InertiaReport {
    let inertia = Inertia::of(&set.pc, tol_eig);
    let invertible = inertia.zero == 0;
    InertiaReport {
        invertible,
        positive_count: inertia.positive,
        pass: invertible && inertia.positive == set.md,
    }
}

/// Sufficient conditions for the inertia assumption, evaluated one by one.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientConditionsReport {
    /// (i) `Z` has full row rank.
    pub z_full_row_rank: bool,
    /// (ii) `B_d` is square and invertible.
    pub bd_invertible: bool,
    /// (iii) `D̂ Q_d D̂ᵀ + R_d ≻ 0`; `None` when `D̂` is unavailable.
    pub strict_noise_bound: Option<bool>,
    /// `S_d = 0`.
    pub sd_zero: bool,
    pub warnings: Vec<&'static str>,
}

impl SufficientConditionsReport {
    /// `Some(true)` when every condition holds, `Some(false)` when one fails,
    /// `None` when (iii) could not be evaluated and the rest hold.
    pub fn all_pass(&self) -> Option<bool> {
        if !(self.z_full_row_rank && self.bd_invertible && self.sd_zero) {
            return Some(false);
        }
        self.strict_noise_bound
    }
}

pub fn check_sufficient_conditions(
    data: &DataSet,
    noise: &NoiseBound,
    dhat: Option<&Matrix>,
) -> SufficientConditionsReport {
    let z = data.z();
    let z_full_row_rank = rank(&z, 1e-12) == z.nrows();
    let bd = data.bd();
    let bd_invertible = bd.is_square() && rank(bd, 1e-12) == bd.nrows();
    let sd_zero = noise.sd().iter().all(|&v| v == 0.0);
    let mut warnings = Vec::new();
    let strict_noise_bound = match dhat {
        Some(d) if d.shape() == (noise.md(), noise.samples()) => {
            let form = d * noise.qd() * d.transpose() + noise.rd();
            let eigs = sym_eigenvalues(&form);
            let scale = eigs.iter().map(|v| v.abs()).fold(0.0, f64::max);
            Some(eigs.first().is_some_and(|&v| v > TOL_EIG * scale))
        }
        Some(_) => {
            warnings.push("realized disturbance has the wrong shape; condition (iii) skipped");
            None
        }
        None => {
            warnings.push("realized disturbance unavailable; condition (iii) skipped");
            None
        }
    };
    SufficientConditionsReport {
        z_full_row_rank,
        bd_invertible,
        strict_noise_bound,
        sd_zero,
        warnings,
    }
}

/// Inverts `P_c` and forms `P̃_c = [-R̃_c S̃_cᵀ; S̃_c -Q̃_c]` with blocks of
/// sizes `(n, n+m)`.
pub fn dualize(set: &ConsistencySet) -> Result<ConsistencySet, ConsistencyError> {
    let report = check_assumption_inertia(set, TOL_EIG);
    if !report.pass {
        return Err(ConsistencyError::AssumptionNotVerified {
            positive: report.positive_count,
            required: set.md,
            invertible: report.invertible,
        });
    }
    let (inv, condition) =
        sym_inverse(&set.pc).ok_or(ConsistencyError::IllConditioned(f64::INFINITY))?;
    if !(condition <= MAX_CONDITION) {
        return Err(ConsistencyError::IllConditioned(condition));
    }
    let (n, k) = (set.n, set.n + set.m);
    let q_t = inv.view((0, 0), (k, k)).into_owned();
    let s_t = inv.view((0, k), (k, n)).into_owned();
    let r_t = inv.view((k, k), (n, n)).into_owned();

    let mut dual = Matrix::zeros(n + k, n + k);
    dual.view_mut((0, 0), (n, n)).copy_from(&(-r_t));
    dual.view_mut((0, n), (n, k)).copy_from(&s_t.transpose());
    dual.view_mut((n, 0), (k, n)).copy_from(&s_t);
    dual.view_mut((n, n), (k, k)).copy_from(&(-q_t));

    let mut out = set.clone();
    out.dual = Some(DualMultiplier {
        matrix: symmetrize(&dual),
        condition,
    });
    Ok(out)
}

/// Reverses [`dualize`]: reassembles `P_c⁻¹` from `P̃_c` and inverts it.
pub fn undualize(dual: &Matrix, n: usize, m: usize) -> Result<Matrix, ConsistencyError> {
    let k = n + m;
    if dual.shape() != (n + k, n + k) {
        return Err(ConsistencyError::Dimension("P̃_c must be (2n+m) square"));
    }
    let r_t = -dual.view((0, 0), (n, n)).into_owned();
    let s_t = dual.view((n, 0), (k, n)).into_owned();
    let q_t = -dual.view((n, n), (k, k)).into_owned();
    let mut inv = Matrix::zeros(n + k, n + k);
    inv.view_mut((0, 0), (k, k)).copy_from(&q_t);
    inv.view_mut((0, k), (k, n)).copy_from(&s_t);
    inv.view_mut((k, 0), (n, k)).copy_from(&s_t.transpose());
    inv.view_mut((k, k), (n, n)).copy_from(&r_t);
    let (pc, _) = sym_inverse(&inv).ok_or(ConsistencyError::IllConditioned(f64::INFINITY))?;
    Ok(pc)
}

/// Largest eigenvalue of `Q_c`; negative iff `Q_c ≺ 0`.
pub fn qc_max_eigenvalue(set: &ConsistencySet) -> f64 {
    max_eigenvalue(&set.qc())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    fn scalar_set(d_bar: f64) -> ConsistencySet {
        let data = DataSet::new(
            vec![0.0],
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[1.0]),
        )
        .unwrap();
        let noise = NoiseBound::new(m(1, 1, &[-1.0]), m(1, 1, &[0.0]), m(1, 1, &[d_bar * d_bar])).unwrap();
        build_consistency_set(&data, &noise).unwrap()
    }

    #[test]
    fn scalar_pc_by_hand() {
        let d = 0.3;
        let set = scalar_set(d);
        let expected = Matrix::from_diagonal(&crate::Vector::from_vec(vec![-1.0, 0.0, d * d]));
        assert_relative_eq!(set.pc().clone(), expected, epsilon = 1e-15);
    }

    #[test]
    fn scalar_membership_by_hand() {
        let d = 0.3;
        let set = scalar_set(d);
        let inside = membership_test(&m(1, 1, &[0.0]), &m(1, 1, &[5.0]), &set, 0.0).unwrap();
        assert!(inside.member);
        assert_relative_eq!(inside.margin, d * d, epsilon = 1e-15);
        let outside = membership_test(&m(1, 1, &[2.0 * d]), &m(1, 1, &[0.0]), &set, 0.0).unwrap();
        assert!(!outside.member);
        assert_relative_eq!(outside.margin, -3.0 * d * d, epsilon = 1e-15);
        assert!(membership_test(&m(2, 2, &[0.0; 4]), &m(1, 1, &[0.0]), &set, 0.0).is_err());
    }

    #[test]
    fn inertia_check_cases() {
        // zero eigenvalue from the rank-deficient Z
        let r = check_assumption_inertia(&scalar_set(0.3), TOL_EIG);
        assert!(!r.invertible && !r.pass);

        let pc = Matrix::from_diagonal(&crate::Vector::from_vec(vec![-1.0, -1.0, 4.0]));
        let set = ConsistencySet::from_pc(pc, 1, 1, 1).unwrap();
        let r = check_assumption_inertia(&set, TOL_EIG);
        assert_eq!(r, InertiaReport { invertible: true, positive_count: 1, pass: true });
    }

    #[test]
    fn dualize_scalar_without_input() {
        // n = 1, m = 0: P_c = diag(-1, 4) describes |A| ≤ 2
        let set = ConsistencySet::from_pc(m(2, 2, &[-1.0, 0.0, 0.0, 4.0]), 1, 0, 1).unwrap();
        let dual = dualize(&set).unwrap();
        assert_relative_eq!(
            dual.pc_dual().unwrap().clone(),
            m(2, 2, &[-0.25, 0.0, 0.0, 1.0]),
            epsilon = 1e-15
        );
        let empty = Matrix::zeros(1, 0);
        for a in [-2.5, -1.9, 0.0, 1.5, 1.99, 2.01, 3.0] {
            let am = m(1, 1, &[a]);
            let dual_form = membership_test(&am, &empty, &dual, 0.0).unwrap().member;
            let primal_form = primal_membership_test(&am, &empty, &dual, 0.0).unwrap().member;
            assert_eq!(dual_form, a.abs() <= 2.0);
            assert_eq!(primal_form, a.abs() <= 2.0);
        }
        let back = undualize(dual.pc_dual().unwrap(), 1, 0).unwrap();
        assert_relative_eq!(back, set.pc().clone(), max_relative = 1e-12);
    }

    #[test]
    fn dualize_refuses_without_assumption() {
        assert!(matches!(
            dualize(&scalar_set(0.3)),
            Err(ConsistencyError::AssumptionNotVerified { .. })
        ));
        let set = ConsistencySet::from_pc(m(2, 2, &[-1.0, 0.0, 0.0, 1e-13]), 1, 0, 1).unwrap();
        assert!(dualize(&set).is_err());
    }

    #[test]
    fn noise_bound_validation() {
        assert!(matches!(
            NoiseBound::new(m(1, 1, &[1.0]), m(1, 1, &[0.0]), m(1, 1, &[1.0])),
            Err(ConsistencyError::QdNotNegative(_))
        ));
        assert!(NoiseBound::new(m(2, 2, &[-1.0, 0.5, 0.0, -1.0]), m(2, 1, &[0.0; 2]), m(1, 1, &[1.0])).is_err());
        assert!(NoiseBound::new(m(2, 2, &[-1.0, 0.0, 0.0, -1.0]), m(1, 1, &[0.0]), m(1, 1, &[1.0])).is_err());
        let nb = NoiseBound::pointwise(0.05, 100, 2);
        assert_relative_eq!(nb.rd()[(0, 0)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn sufficient_conditions_are_evaluated_independently() {
        // U ≡ 0: Z loses rank
        let data = DataSet::new(
            vec![0.0, 1.0, 2.0],
            m(1, 3, &[1.0, 2.0, 3.0]),
            m(1, 3, &[0.0; 3]),
            m(1, 3, &[0.1, 0.2, 0.3]),
            m(1, 1, &[1.0]),
        )
        .unwrap();
        let noise = NoiseBound::pointwise(0.1, 3, 1);
        let r = check_sufficient_conditions(&data, &noise, None);
        assert!(!r.z_full_row_rank && r.bd_invertible && r.sd_zero);
        assert_eq!(r.strict_noise_bound, None);
        assert_eq!(r.all_pass(), Some(false));
        assert_eq!(r.warnings.len(), 1);

        // strict inclusion: Σ d̂² < d̄² N
        let dhat = m(1, 3, &[0.09, -0.05, 0.02]);
        assert_eq!(check_sufficient_conditions(&data, &noise, Some(&dhat)).strict_noise_bound, Some(true));
        let edge = m(1, 3, &[0.1, 0.1, 0.1]);
        assert_eq!(check_sufficient_conditions(&data, &noise, Some(&edge)).strict_noise_bound, Some(false));
    }
}
