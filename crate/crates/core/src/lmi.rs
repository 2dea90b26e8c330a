//! Affine matrix-inequality problems over named decision variables.
//!
//! Three families are assembled here, all for a fixed sampling bound `h`:
//!
//! - the model-based time-delay conditions for a known `(A, B)` and gain `K`
//!   (2n and 3n square),
//! - the data-driven analysis conditions: the model-based ones made robust
//!   over the consistency set through the primal multiplier `λ·P̃_c`
//!   (3n and 4n square),
//! - the data-driven design conditions for fixed `Q1 = P1⁻¹` and `R`, affine
//!   in `K` and the remaining variables through the dual multiplier
//!   `λ̃·P_c` ((4n+m) square).
//!
//! Each constraint is written as the formula it stands for, as a function of
//! an [`Assignment`]. [`LmiBuilder::build`] turns that formula into constant
//! and coefficient matrices by evaluating it at the origin and at unit
//! vectors, and rejects formulas that fail a two-point affinity probe.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::consistency::ConsistencySet;
use crate::linalg::{congruence, min_eigenvalue, relative_asymmetry, sym_inverse, BlockLayout, BlockMatrix};
use crate::system::{FeedbackGain, LtiSystem};
use crate::Matrix;

/// Lower bound imposed on every S-procedure multiplier.
pub const MULTIPLIER_FLOOR: f64 = 1e-9;

/// Relative tolerance of the affinity probe.
pub const AFFINITY_TOL: f64 = 1e-10;

/// Strictness margin `ε` used for `≺ 0` at sampling bound `h`.
pub fn default_margin(h: f64) -> f64 {
    1e-7 * (1.0 + h)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmiError {
    #[error("sampling bound must be positive, got {0}")]
    NonPositiveH(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("{0} must be positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("dual multiplier missing: the inertia assumption has not been verified")]
    NoDual,
    #[error("constraint {name} is not affine (probe defect {defect:e})")]
    NotAffine { name: String, defect: f64 },
    #[error("constraint {0} is not symmetric")]
    NotSymmetric(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
}

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Symmetric,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sign {
    Free,
    /// `X ≻ 0`; realized with the same strictness margin as the constraints.
    PositiveDefinite,
    /// Scalar lower bound `x ≥ value`.
    AtLeast(f64),
}

/// Declared decision block. Entries occupy `offset..offset + entries()` of
/// the decision vector: column-major for full blocks, upper triangle
/// column by column for symmetric ones.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableDecl {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub structure: Structure,
    pub sign: Sign,
    pub offset: usize,
}

impl VariableDecl {
    pub fn entries(&self) -> usize {
        match self.structure {
            Structure::Full => self.rows * self.cols,
            Structure::Symmetric => self.rows * (self.rows + 1) / 2,
        }
    }

    fn unpack(&self, x: &[f64]) -> Matrix {
        let v = &x[self.offset..self.offset + self.entries()];
        match self.structure {
            Structure::Full => Matrix::from_column_slice(self.rows, self.cols, v),
            Structure::Symmetric => {
                let mut m = Matrix::zeros(self.rows, self.rows);
                let mut k = 0;
                for j in 0..self.rows {
                    for i in 0..=j {
                        m[(i, j)] = v[k];
                        m[(j, i)] = v[k];
                        k += 1;
                    }
                }
                m
            }
        }
    }

    fn pack(&self, m: &Matrix, out: &mut [f64]) {
        let out = &mut out[self.offset..self.offset + self.entries()];
        match self.structure {
            Structure::Full => out.copy_from_slice(m.as_slice()),
            Structure::Symmetric => {
                let mut k = 0;
                for j in 0..self.rows {
                    for i in 0..=j {
                        out[k] = 0.5 * (m[(i, j)] + m[(j, i)]);
                        k += 1;
                    }
                }
            }
        }
    }

    /// Matrix `∂X/∂x_k` for local entry `k`.
    pub fn basis(&self, k: usize) -> Matrix {
        let mut x = vec![0.0; self.offset + self.entries()];
        x[self.offset + k] = 1.0;
        self.unpack(&x)
    }
}

/// Values of every declared variable, indexed by [`VarId`].
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    values: Vec<Matrix>,
}

impl Assignment {
    pub fn get(&self, id: VarId) -> &Matrix {
        &self.values[id]
    }

    pub fn scalar(&self, id: VarId) -> f64 {
        self.values[id][(0, 0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `F(x) ≺ 0`
    NegativeDefinite,
    /// `F(x) ⪰ 0`
    PositiveSemidefinite,
}

/// `F(x) = constant + Σ_k x_k · coefficient_k`, symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub name: String,
    pub relation: Relation,
    pub constant: Matrix,
    /// Nonzero coefficients as `(decision index, matrix)`.
    pub terms: Vec<(usize, Matrix)>,
}

impl AffineConstraint {
    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, x: &[f64]) -> Matrix {
        let mut out = self.constant.clone();
        for (k, coeff) in &self.terms {
            if x[*k] != 0.0 {
                out += coeff * x[*k];
            }
        }
        out
    }
}

type Formula = Arc<dyn Fn(&Assignment) -> Matrix + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    ModelBased,
    Analysis,
    Design,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::ModelBased => "model-based",
            ProblemKind::Analysis => "data-driven-analysis",
            ProblemKind::Design => "data-driven-design",
        }
    }
}

/// Feasibility problem: find `x` with every constraint satisfied and every
/// variable sign constraint respected.
#[derive(Clone)]
pub struct LmiProblem {
    pub kind: ProblemKind,
    pub h: f64,
    variables: Vec<VariableDecl>,
    constraints: Vec<AffineConstraint>,
    formulas: Vec<Formula>,
    dim: usize,
}

impl fmt::Debug for LmiProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LmiProblem")
            .field("kind", &self.kind)
            .field("h", &self.h)
            .field("variables", &self.variables)
            .field("constraints", &self.constraints)
            .finish()
    }
}

impl LmiProblem {
    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn constraints(&self) -> &[AffineConstraint] {
        &self.constraints
    }

    /// Length of the decision vector.
    pub fn decision_len(&self) -> usize {
        self.dim
    }

    pub fn variable(&self, name: &str) -> Option<&VariableDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn unpack(&self, x: &[f64]) -> Assignment {
        Assignment {
            values: self.variables.iter().map(|v| v.unpack(x)).collect(),
        }
    }

    /// Named values of a decision vector.
    pub fn named_values(&self, x: &[f64]) -> Vec<(String, Matrix)> {
        self.variables
            .iter()
            .map(|v| (v.name.clone(), v.unpack(x)))
            .collect()
    }

    pub fn value(&self, x: &[f64], name: &str) -> Result<Matrix, LmiError> {
        self.variable(name)
            .map(|v| v.unpack(x))
            .ok_or_else(|| LmiError::UnknownVariable(name.to_string()))
    }

    /// Decision vector from named values; every variable must be given.
    pub fn pack_named(&self, values: &[(&str, Matrix)]) -> Result<Vec<f64>, LmiError> {
        let mut x = vec![0.0; self.dim];
        for decl in &self.variables {
            let (_, m) = values
                .iter()
                .find(|(n, _)| *n == decl.name)
                .ok_or_else(|| LmiError::UnknownVariable(decl.name.clone()))?;
            if m.shape() != (decl.rows, decl.cols) {
                return Err(LmiError::Dimension("value shape does not match its declaration"));
            }
            decl.pack(m, &mut x);
        }
        Ok(x)
    }

    /// Every constraint matrix at `x`, from the stored affine data.
    pub fn evaluate(&self, x: &[f64]) -> Vec<Matrix> {
        self.constraints.iter().map(|c| c.evaluate(x)).collect()
    }

    /// Every constraint matrix at `x`, from the defining formulas.
    pub fn evaluate_formulas(&self, x: &[f64]) -> Vec<Matrix> {
        let a = self.unpack(x);
        self.formulas.iter().map(|f| f(&a)).collect()
    }

    /// Largest relative entry of `F(v1) + F(v2) - F(v1 + v2) - F(0)` over all
    /// constraints, evaluated on the defining formulas.
    pub fn affinity_defect(&self, v1: &[f64], v2: &[f64]) -> f64 {
        let sum: Vec<f64> = v1.iter().zip(v2).map(|(a, b)| a + b).collect();
        let zero = vec![0.0; self.dim];
        let (f1, f2, f12, f0) = (
            self.evaluate_formulas(v1),
            self.evaluate_formulas(v2),
            self.evaluate_formulas(&sum),
            self.evaluate_formulas(&zero),
        );
        (0..self.formulas.len())
            .map(|i| {
                let scale = [&f1[i], &f2[i], &f12[i], &f0[i]]
                    .iter()
                    .map(|m| m.amax())
                    .fold(1.0, f64::max);
                (&f1[i] + &f2[i] - &f12[i] - &f0[i]).amax() / scale
            })
            .fold(0.0, f64::max)
    }
}

/// Collects declarations and constraint formulas.
pub struct LmiBuilder {
    kind: ProblemKind,
    h: f64,
    variables: Vec<VariableDecl>,
    pending: Vec<(String, Relation, Formula)>,
    dim: usize,
}

impl fmt::Debug for LmiBuilder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LmiBuilder")
            .field("kind", &self.kind)
            .field("variables", &self.variables)
            .finish()
    }
}

impl LmiBuilder {
    pub fn new(kind: ProblemKind, h: f64) -> Self {
        Self {
            kind,
            h,
            variables: Vec::new(),
            pending: Vec::new(),
            dim: 0,
        }
    }

    pub fn declare(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        structure: Structure,
        sign: Sign,
    ) -> VarId {
        assert!(
            structure == Structure::Full || rows == cols,
            "symmetric variable {name} must be square"
        );
        let decl = VariableDecl {
            name: name.to_string(),
            rows,
            cols,
            structure,
            sign,
            offset: self.dim,
        };
        self.dim += decl.entries();
        self.variables.push(decl);
        self.variables.len() - 1
    }

    pub fn scalar(&mut self, name: &str, sign: Sign) -> VarId {
        self.declare(name, 1, 1, Structure::Full, sign)
    }

    pub fn constrain<F>(&mut self, name: &str, relation: Relation, formula: F)
    where
        F: Fn(&Assignment) -> Matrix + Send + Sync + 'static,
    {
        self.pending
            .push((name.to_string(), relation, Arc::new(formula)));
    }

    /// Extracts affine data from each formula and checks it.
    pub fn build(self) -> Result<LmiProblem, LmiError> {
        let vars = &self.variables;
        let unpack = |x: &[f64]| Assignment {
            values: vars.iter().map(|v| v.unpack(x)).collect(),
        };
        let zero = vec![0.0; self.dim];
        let mut constraints = Vec::with_capacity(self.pending.len());
        let mut formulas = Vec::with_capacity(self.pending.len());
        for (name, relation, formula) in self.pending {
            let constant = formula(&unpack(&zero));
            if !constant.is_square() || relative_asymmetry(&constant) > 1e-12 {
                return Err(LmiError::NotSymmetric(name));
            }
            let mut terms = Vec::new();
            let mut unit = zero.clone();
            for k in 0..self.dim {
                unit[k] = 1.0;
                let coeff = formula(&unpack(&unit)) - &constant;
                unit[k] = 0.0;
                if relative_asymmetry(&coeff) > 1e-12 {
                    return Err(LmiError::NotSymmetric(name));
                }
                if coeff.amax() > 0.0 {
                    terms.push((k, coeff));
                }
            }
            constraints.push(AffineConstraint {
                name,
                relation,
                constant,
                terms,
            });
            formulas.push(formula);
        }
        let problem = LmiProblem {
            kind: self.kind,
            h: self.h,
            variables: self.variables,
            constraints,
            formulas,
            dim: self.dim,
        };
        problem.check_affine()?;
        Ok(problem)
    }
}

impl LmiProblem {
    /// Two-point probe on the formulas plus agreement of the stored affine
    /// data with the formulas at a random point.
    fn check_affine(&self) -> Result<(), LmiError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_d0fa_771e);
        let mut draw = || -> Vec<f64> { (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let (v1, v2) = (draw(), draw());
        let sum: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let zero = vec![0.0; self.dim];
        let (f1, f2, f12, f0) = (
            self.evaluate_formulas(&v1),
            self.evaluate_formulas(&v2),
            self.evaluate_formulas(&sum),
            self.evaluate_formulas(&zero),
        );
        let stored = self.evaluate(&v1);
        for (i, c) in self.constraints.iter().enumerate() {
            let scale = [&f1[i], &f2[i], &f12[i], &f0[i]]
                .iter()
                .map(|m| m.amax())
                .fold(1.0, f64::max);
            let defect = (&f1[i] + &f2[i] - &f12[i] - &f0[i]).amax() / scale;
            let drift = (&stored[i] - &f1[i]).amax() / scale;
            let worst = defect.max(drift);
            if !(worst <= AFFINITY_TOL) {
                return Err(LmiError::NotAffine {
                    name: c.name.clone(),
                    defect: worst,
                });
            }
        }
        Ok(())
    }
}

fn check_h(h: f64) -> Result<(), LmiError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(LmiError::NonPositiveH(h));
    }
    Ok(())
}

fn eye(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

/// Time-delay conditions for a known plant: variables `P1 ≻ 0`, `R ≻ 0`,
/// `P2`, `P3`; constraints of size 2n and 3n.
pub fn assemble_model_based(
    sys: &LtiSystem,
    gain: &FeedbackGain,
    h: f64,
) -> Result<LmiProblem, LmiError> {
    check_h(h)?;
    let (n, m) = (sys.n(), sys.m());
    let k = gain.matrix();
    if k.shape() != (m, n) {
        return Err(LmiError::Dimension("K must be m x n"));
    }
    let acl = sys.closed_loop(gain);
    let bk = sys.b() * k;

    let mut b = LmiBuilder::new(ProblemKind::ModelBased, h);
    let p1 = b.declare("P1", n, n, Structure::Symmetric, Sign::PositiveDefinite);
    let r = b.declare("R", n, n, Structure::Symmetric, Sign::PositiveDefinite);
    let p2 = b.declare("P2", n, n, Structure::Full, Sign::Free);
    let p3 = b.declare("P3", n, n, Structure::Full, Sign::Free);

    let two = BlockLayout::new(&[("x", n), ("xd", n)]);
    let three = BlockLayout::new(&[("x", n), ("xd", n), ("v", n)]);

    {
        let acl = acl.clone();
        b.constrain("model-2n", Relation::NegativeDefinite, move |a| {
            let (p1, p2, p3, r) = (a.get(p1), a.get(p2), a.get(p3), a.get(r));
            let mut f = BlockMatrix::zeros(&two, &two);
            f.set("x", "x", &(p2.transpose() * &acl + acl.transpose() * p2))
                .set_sym("xd", "x", &(p1 - p2 + p3.transpose() * &acl))
                .set("xd", "xd", &(-p3 - p3.transpose() + r * h));
            f.into_matrix()
        });
    }
    b.constrain("model-3n", Relation::NegativeDefinite, move |a| {
        let (p1, p2, p3, r) = (a.get(p1), a.get(p2), a.get(p3), a.get(r));
        let mut f = BlockMatrix::zeros(&three, &three);
        f.set("x", "x", &(p2.transpose() * &acl + acl.transpose() * p2))
            .set_sym("xd", "x", &(p1 - p2 + p3.transpose() * &acl))
            .set("xd", "xd", &(-p3 - p3.transpose()))
            .set_sym("v", "x", &(bk.transpose() * p2 * (-h)))
            .set_sym("v", "xd", &(bk.transpose() * p3 * (-h)))
            .set("v", "v", &(r * (-h)));
        f.into_matrix()
    });
    b.build()
}

/// Row layout shared by the factors of the two analysis conditions: an
/// identity part, the three "middle" rows, the uncertainty output `w` and the
/// uncertainty input `z = [zx; zu]`.
fn analysis_rows(n: usize, m: usize, top: &[&'static str]) -> BlockLayout {
    let mut blocks: Vec<(&'static str, usize)> = top.iter().map(|&t| (t, n)).collect();
    blocks.extend_from_slice(&[("m1", n), ("m2", n), ("m3", n), ("w", n), ("zx", n), ("zu", m)]);
    BlockLayout::new(&blocks)
}

/// Robust analysis conditions over the consistency set for a fixed gain:
/// variables `λ1, λ2 ≥ 10⁻⁹`, `P1 ≻ 0`, `R ≻ 0`, `P2`, `P3`; constraints of
/// size 3n and 4n.
pub fn assemble_analysis(
    set: &ConsistencySet,
    gain: &FeedbackGain,
    h: f64,
) -> Result<LmiProblem, LmiError> {
    check_h(h)?;
    let (n, m) = (set.n(), set.m());
    let k = gain.matrix().clone();
    if k.shape() != (m, n) {
        return Err(LmiError::Dimension("K must be m x n"));
    }
    let dual = set.pc_dual().ok_or(LmiError::NoDual)?.clone();

    let mut b = LmiBuilder::new(ProblemKind::Analysis, h);
    let l1 = b.scalar("lambda1", Sign::AtLeast(MULTIPLIER_FLOOR));
    let l2 = b.scalar("lambda2", Sign::AtLeast(MULTIPLIER_FLOOR));
    let p1 = b.declare("P1", n, n, Structure::Symmetric, Sign::PositiveDefinite);
    let r = b.declare("R", n, n, Structure::Symmetric, Sign::PositiveDefinite);
    let p2 = b.declare("P2", n, n, Structure::Full, Sign::Free);
    let p3 = b.declare("P3", n, n, Structure::Full, Sign::Free);

    // 3n condition: columns (x, ẋ, w)
    let rows9 = analysis_rows(n, m, &["tx", "txd"]);
    let cols9 = BlockLayout::new(&[("x", n), ("xd", n), ("w", n)]);
    let mut f9 = BlockMatrix::zeros(&rows9, &cols9);
    f9.set("tx", "x", &eye(n))
        .set("txd", "xd", &eye(n))
        .set("m1", "xd", &eye(n))
        .set("m2", "xd", &(-eye(n)))
        .set("m2", "w", &eye(n))
        .set("m3", "xd", &(eye(n) * (0.5 * h)))
        .set("w", "w", &eye(n))
        .set("zx", "x", &eye(n))
        .set("zu", "x", &k);
    let f9 = f9.into_matrix();
    {
        let dual = dual.clone();
        b.constrain("analysis-3n", Relation::NegativeDefinite, move |a| {
            let mut mid = BlockMatrix::zeros(&rows9, &rows9);
            // P_R2 = [P1 0; P2 P3; 0 R] maps (tx, txd) to (m1, m2, m3)
            mid.set_sym("m1", "tx", a.get(p1))
                .set_sym("m2", "tx", a.get(p2))
                .set_sym("m2", "txd", a.get(p3))
                .set_sym("m3", "txd", a.get(r))
                .set_span(("w", "zu"), ("w", "zu"), &(&dual * a.scalar(l1)));
            congruence(&f9, mid.as_matrix())
        });
    }

    // 4n condition: columns (x, ẋ, v, w)
    let rows10 = analysis_rows(n, m, &["tx", "txd", "tv"]);
    let cols10 = BlockLayout::new(&[("x", n), ("xd", n), ("v", n), ("w", n)]);
    let mut f10 = BlockMatrix::zeros(&rows10, &cols10);
    f10.set("tx", "x", &eye(n))
        .set("txd", "xd", &eye(n))
        .set("tv", "v", &eye(n))
        .set("m1", "xd", &eye(n))
        .set("m2", "xd", &(-eye(n)))
        .set("m2", "w", &eye(n))
        .set("m3", "v", &(eye(n) * (-0.5 * h)))
        .set("w", "w", &eye(n))
        .set("zx", "x", &eye(n))
        .set("zu", "x", &k)
        .set("zu", "v", &(&k * (-h)));
    let f10 = f10.into_matrix();
    b.constrain("analysis-4n", Relation::NegativeDefinite, move |a| {
        let mut mid = BlockMatrix::zeros(&rows10, &rows10);
        // P_R = diag([P1 0; P2 P3], R)
        mid.set_sym("m1", "tx", a.get(p1))
            .set_sym("m2", "tx", a.get(p2))
            .set_sym("m2", "txd", a.get(p3))
            .set_sym("m3", "tv", a.get(r))
            .set_span(("w", "zu"), ("w", "zu"), &(&dual * a.scalar(l2)));
        congruence(&f10, mid.as_matrix())
    });
    b.build()
}

/// Row and column layouts of the design factors.
fn design_layouts(n: usize, m: usize) -> (BlockLayout, BlockLayout) {
    let rows = BlockLayout::new(&[
        ("t1", n),
        ("t2", n),
        ("t3", n),
        ("m1", n),
        ("m2", n),
        ("m3", n),
        ("wx", n),
        ("wu", m),
        ("z", n),
    ]);
    let cols = BlockLayout::new(&[("x", n), ("xd", n), ("v", n), ("wx", n), ("wu", m)]);
    (rows, cols)
}

/// Robust design conditions for fixed `Q1 ≻ 0` and `R ≻ 0`: variables `K`,
/// `Q2`, `Q3`, `λ̃1, λ̃2 ≥ 10⁻⁹`; constraints of size 4n+m, plus
/// `Q3 + Q3ᵀ ≻ 0`.
pub fn assemble_design(
    set: &ConsistencySet,
    q1_fixed: &Matrix,
    r_fixed: &Matrix,
    h: f64,
) -> Result<LmiProblem, LmiError> {
    check_h(h)?;
    let (n, m) = (set.n(), set.m());
    if q1_fixed.shape() != (n, n) || r_fixed.shape() != (n, n) {
        return Err(LmiError::Dimension("Q1 and R must be n x n"));
    }
    if relative_asymmetry(q1_fixed) > 1e-10 || !(min_eigenvalue(q1_fixed) > 0.0) {
        return Err(LmiError::NotPositiveDefinite("Q1"));
    }
    if relative_asymmetry(r_fixed) > 1e-10 || !(min_eigenvalue(r_fixed) > 0.0) {
        return Err(LmiError::NotPositiveDefinite("R"));
    }
    let (r_inv, _) = sym_inverse(r_fixed).ok_or(LmiError::NotPositiveDefinite("R"))?;
    let pc = set.pc().clone();
    let q1 = q1_fixed.clone();
    let rf = r_fixed.clone();

    let mut b = LmiBuilder::new(ProblemKind::Design, h);
    let kv = b.declare("K", m, n, Structure::Full, Sign::Free);
    let q2 = b.declare("Q2", n, n, Structure::Full, Sign::Free);
    let q3 = b.declare("Q3", n, n, Structure::Full, Sign::Free);
    let l1 = b.scalar("lambda1", Sign::AtLeast(MULTIPLIER_FLOOR));
    let l2 = b.scalar("lambda2", Sign::AtLeast(MULTIPLIER_FLOOR));

    {
        let (pc, q1, rf) = (pc.clone(), q1.clone(), rf.clone());
        b.constrain("design-schur", Relation::NegativeDefinite, move |a| {
            let (rows, cols) = design_layouts(n, m);
            let kt = a.get(kv).transpose();
            let mut f = BlockMatrix::zeros(&rows, &cols);
            f.set("t1", "x", &eye(n))
                .set("t2", "xd", &eye(n))
                .set("t3", "v", &eye(n))
                .set("m2", "x", &eye(n))
                .set("m2", "xd", &(-eye(n)))
                .set("m2", "v", &rf)
                .set("m3", "v", &(eye(n) * (-0.5 / h)))
                .set("m1", "wx", &eye(n))
                .set("m1", "wu", &kt)
                .set("wx", "wx", &eye(n))
                .set("wu", "wu", &eye(m))
                .set("z", "xd", &eye(n));
            let mut mid = BlockMatrix::zeros(&rows, &rows);
            // Q_R = diag([Q1 0; Q2 Q3], R)
            mid.set_sym("m1", "t1", &q1)
                .set_sym("m2", "t1", a.get(q2))
                .set_sym("m2", "t2", a.get(q3))
                .set_sym("m3", "t3", &rf)
                .set_span(("wx", "z"), ("wx", "z"), &(&pc * a.scalar(l1)));
            congruence(f.as_matrix(), mid.as_matrix())
        });
    }
    {
        let pc = pc.clone();
        b.constrain("design-delay", Relation::NegativeDefinite, move |a| {
            let (rows, cols) = design_layouts(n, m);
            let kt = a.get(kv).transpose();
            let mut f = BlockMatrix::zeros(&rows, &cols);
            f.set("t1", "x", &eye(n))
                .set("t2", "xd", &eye(n))
                .set("t3", "v", &eye(n))
                .set("m2", "x", &eye(n))
                .set("m2", "xd", &(-eye(n)))
                .set("m3", "v", &(eye(n) * (-0.5 * h)))
                .set("m1", "wx", &eye(n))
                .set("m1", "wu", &kt)
                .set("m3", "wu", &(&kt * (-h)))
                .set("wx", "wx", &eye(n))
                .set("wu", "wu", &eye(m))
                .set("z", "xd", &eye(n));
            let mut mid = BlockMatrix::zeros(&rows, &rows);
            // Q̄_R = diag([Q1 0; Q2 Q3], R⁻¹)
            mid.set_sym("m1", "t1", &q1)
                .set_sym("m2", "t1", a.get(q2))
                .set_sym("m2", "t2", a.get(q3))
                .set_sym("m3", "t3", &r_inv)
                .set_span(("wx", "z"), ("wx", "z"), &(&pc * a.scalar(l2)));
            congruence(f.as_matrix(), mid.as_matrix())
        });
    }
    b.constrain("Q3-sym-part", Relation::NegativeDefinite, move |a| {
        let q3 = a.get(q3);
        -(q3 + q3.transpose())
    });
    b.build()
}

/// Witness of the analysis conditions (model-based or data-driven) at `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisCertificate {
    pub h: f64,
    pub gain: Matrix,
    pub p1: Matrix,
    pub p2: Matrix,
    pub p3: Matrix,
    pub r: Matrix,
    /// Multipliers; `None` for the model-based conditions.
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    /// Smallest `-λ_max` over all constraints at the witness.
    pub margin: f64,
}

impl AnalysisCertificate {
    pub fn from_solution(
        problem: &LmiProblem,
        x: &[f64],
        gain: &FeedbackGain,
        margin: f64,
    ) -> Result<Self, LmiError> {
        let scalar = |name: &str| problem.value(x, name).ok().map(|v| v[(0, 0)]);
        Ok(Self {
            h: problem.h,
            gain: gain.matrix().clone(),
            p1: problem.value(x, "P1")?,
            p2: problem.value(x, "P2")?,
            p3: problem.value(x, "P3")?,
            r: problem.value(x, "R")?,
            lambda1: scalar("lambda1"),
            lambda2: scalar("lambda2"),
            margin,
        })
    }

    /// Named values in the variable naming of the analysis problems.
    pub fn named(&self) -> Vec<(&'static str, Matrix)> {
        let mut out = vec![
            ("P1", self.p1.clone()),
            ("P2", self.p2.clone()),
            ("P3", self.p3.clone()),
            ("R", self.r.clone()),
        ];
        if let Some(l) = self.lambda1 {
            out.push(("lambda1", Matrix::from_element(1, 1, l)));
        }
        if let Some(l) = self.lambda2 {
            out.push(("lambda2", Matrix::from_element(1, 1, l)));
        }
        out
    }
}

/// Witness of the design conditions at `h`, including the fixed `Q1`, `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignCertificate {
    pub h: f64,
    pub gain: Matrix,
    pub q1: Matrix,
    pub q2: Matrix,
    pub q3: Matrix,
    pub r: Matrix,
    pub lambda1: f64,
    pub lambda2: f64,
    pub margin: f64,
}

impl DesignCertificate {
    pub fn from_solution(
        problem: &LmiProblem,
        x: &[f64],
        q1: &Matrix,
        r: &Matrix,
        margin: f64,
    ) -> Result<Self, LmiError> {
        Ok(Self {
            h: problem.h,
            gain: problem.value(x, "K")?,
            q1: q1.clone(),
            q2: problem.value(x, "Q2")?,
            q3: problem.value(x, "Q3")?,
            r: r.clone(),
            lambda1: problem.value(x, "lambda1")?[(0, 0)],
            lambda2: problem.value(x, "lambda2")?[(0, 0)],
            margin,
        })
    }

    pub fn feedback(&self) -> FeedbackGain {
        FeedbackGain::new(self.gain.clone())
    }

    /// Decision values by variable name, followed by the fixed `Q1`, `R`.
    pub fn named(&self) -> Vec<(&'static str, Matrix)> {
        vec![
            ("K", self.gain.clone()),
            ("Q2", self.q2.clone()),
            ("Q3", self.q3.clone()),
            ("lambda1", Matrix::from_element(1, 1, self.lambda1)),
            ("lambda2", Matrix::from_element(1, 1, self.lambda2)),
            ("Q1", self.q1.clone()),
            ("R", self.r.clone()),
        ]
    }
}

/// Human-readable variable summary, e.g. for diagnostics.
pub fn describe(problem: &LmiProblem) -> String {
    let vars: Vec<String> = problem
        .variables()
        .iter()
        .map(|v| format!("{}[{}x{}]", v.name, v.rows, v.cols))
        .collect();
    let cons: Vec<String> = problem
        .constraints()
        .iter()
        .map(|c| format!("{}({})", c.name, c.size()))
        .collect();
    format!(
        "{} h={} vars: {} constraints: {}",
        problem.kind.as_str(),
        problem.h,
        vars.join(", "),
        cons.join(", ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn symmetric_packing_round_trip() {
        let mut b = LmiBuilder::new(ProblemKind::ModelBased, 1.0);
        b.declare("S", 2, 2, Structure::Symmetric, Sign::Free);
        b.declare("F", 1, 2, Structure::Full, Sign::Free);
        b.constrain("c", Relation::NegativeDefinite, |_| Matrix::zeros(1, 1));
        let p = b.build().unwrap();
        assert_eq!(p.decision_len(), 5);
        let s = m(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        let f = m(1, 2, &[4.0, 5.0]);
        let x = p.pack_named(&[("S", s.clone()), ("F", f.clone())]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(p.value(&x, "S").unwrap(), s);
        assert_eq!(p.value(&x, "F").unwrap(), f);
    }

    #[test]
    fn non_affine_formula_is_rejected() {
        let mut b = LmiBuilder::new(ProblemKind::ModelBased, 1.0);
        let x = b.scalar("x", Sign::Free);
        b.constrain("square", Relation::NegativeDefinite, move |a| {
            Matrix::from_element(1, 1, a.scalar(x) * a.scalar(x))
        });
        assert!(matches!(b.build(), Err(LmiError::NotAffine { .. })));
    }

    #[test]
    fn asymmetric_formula_is_rejected() {
        let mut b = LmiBuilder::new(ProblemKind::ModelBased, 1.0);
        let x = b.scalar("x", Sign::Free);
        b.constrain("skew", Relation::NegativeDefinite, move |a| {
            m(2, 2, &[0.0, a.scalar(x), 0.0, 0.0])
        });
        assert!(matches!(b.build(), Err(LmiError::NotSymmetric(_))));
    }

    #[test]
    fn model_based_scalar_hand_witness() {
        // A = -1, B = 0, K = 0, h = 0.1 with P1 = P2 = P3 = R = 1
        let sys = LtiSystem::with_identity_disturbance(m(1, 1, &[-1.0]), m(1, 1, &[0.0])).unwrap();
        let p = assemble_model_based(&sys, &FeedbackGain::new(m(1, 1, &[0.0])), 0.1).unwrap();
        let one = m(1, 1, &[1.0]);
        let x = p
            .pack_named(&[("P1", one.clone()), ("P2", one.clone()), ("P3", one.clone()), ("R", one)])
            .unwrap();
        let f = p.evaluate(&x);
        // [[-2, -1], [-1, -1.9]] and [[-2, -1, 0], [-1, -2, 0], [0, 0, -0.1]]
        assert_relative_eq!(f[0], m(2, 2, &[-2.0, -1.0, -1.0, -1.9]), epsilon = 1e-15);
        assert_relative_eq!(
            f[1],
            m(3, 3, &[-2.0, -1.0, 0.0, -1.0, -2.0, 0.0, 0.0, 0.0, -0.1]),
            epsilon = 1e-15
        );
        assert!(crate::linalg::max_eigenvalue(&f[0]) < 0.0);
        assert!(crate::linalg::max_eigenvalue(&f[1]) < 0.0);
    }

    #[test]
    fn rejects_bad_h_and_shapes() {
        let sys = LtiSystem::with_identity_disturbance(m(1, 1, &[-1.0]), m(1, 1, &[1.0])).unwrap();
        let k = FeedbackGain::new(m(1, 1, &[0.0]));
        assert_eq!(
            assemble_model_based(&sys, &k, 0.0).unwrap_err(),
            LmiError::NonPositiveH(0.0)
        );
        let bad = FeedbackGain::new(m(1, 2, &[0.0, 0.0]));
        assert!(assemble_model_based(&sys, &bad, 1.0).is_err());
    }
}
