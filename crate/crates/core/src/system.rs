//! Continuous-time LTI plants, exact zero-order-hold propagation, sampled-data
//! closed-loop simulation and open-loop experiment data generation.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::consistency::DataSet;
use crate::linalg::{expm, rank};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error("disturbance matrix must have full column rank (rank {rank} < {cols})")]
    DisturbanceRank { rank: usize, cols: usize },
    #[error("sampling times must start at 0 and increase strictly (violated at index {0})")]
    Sampling(usize),
    #[error("sampling sequence needs at least two instants")]
    EmptySampling,
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("horizon {horizon} exceeds the last sampling time {last}")]
    HorizonBeyondSampling { horizon: f64, last: f64 },
    #[error("declared disturbance bound must be nonnegative, got {0}")]
    NegativeBound(f64),
    #[error("disturbance law must declare a pointwise bound")]
    UndeclaredBound,
    #[error("disturbance sample {index} has norm {norm} above the declared bound {bound}")]
    BoundViolated { index: usize, norm: f64, bound: f64 },
}

fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Plant `ẋ = A x + B u + B_d d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    bd: Matrix,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, bd: Matrix) -> Result<Self, SystemError> {
        if !a.is_square() {
            return Err(SystemError::Dimension("A must be square"));
        }
        let n = a.nrows();
        if b.nrows() != n {
            return Err(SystemError::Dimension("rows(B) != rows(A)"));
        }
        if bd.nrows() != n {
            return Err(SystemError::Dimension("rows(Bd) != rows(A)"));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&bd, "Bd")] {
            if !all_finite(m) {
                return Err(SystemError::NonFinite(name));
            }
        }
        let r = rank(&bd, 1e-12);
        if r < bd.ncols() {
            return Err(SystemError::DisturbanceRank {
                rank: r,
                cols: bd.ncols(),
            });
        }
        Ok(Self { a, b, bd })
    }

    /// Plant with `B_d = I`.
    pub fn with_identity_disturbance(a: Matrix, b: Matrix) -> Result<Self, SystemError> {
        let n = a.nrows();
        Self::new(a, b, Matrix::identity(n, n))
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn bd(&self) -> &Matrix {
        &self.bd
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn md(&self) -> usize {
        self.bd.ncols()
    }

    /// `A + B K`.
    pub fn closed_loop(&self, gain: &FeedbackGain) -> Matrix {
        &self.a + &self.b * gain.matrix()
    }
}

/// State-feedback gain `K` (m × n).
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGain(Matrix);

impl FeedbackGain {
    pub fn new(k: Matrix) -> Self {
        Self(k)
    }

    /// Checks `K` against the plant dimensions.
    pub fn for_system(k: Matrix, sys: &LtiSystem) -> Result<Self, SystemError> {
        if k.shape() != (sys.m(), sys.n()) {
            return Err(SystemError::Dimension("K must be m x n"));
        }
        Ok(Self(k))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Sampling instants `0 = t_0 < t_1 < …`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSequence {
    times: Vec<f64>,
}

impl SamplingSequence {
    pub fn new(times: Vec<f64>) -> Result<Self, SystemError> {
        if times.is_empty() {
            return Err(SystemError::EmptySampling);
        }
        if times[0] != 0.0 {
            return Err(SystemError::Sampling(0));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(SystemError::Sampling(i + 1));
            }
        }
        Ok(Self { times })
    }

    /// Sequence starting at zero with the given gaps.
    pub fn from_gaps(gaps: &[f64]) -> Result<Self, SystemError> {
        let mut times = Vec::with_capacity(gaps.len() + 1);
        let mut t = 0.0;
        times.push(t);
        for &g in gaps {
            t += g;
            times.push(t);
        }
        Self::new(times)
    }

    /// Periodic sampling with `gap`, covering at least `horizon`.
    pub fn periodic(gap: f64, horizon: f64) -> Result<Self, SystemError> {
        if !(gap > 0.0) {
            return Err(SystemError::NonPositiveDuration(gap));
        }
        let count = libm::ceil(horizon / gap).max(1.0) as usize;
        Self::new((0..=count).map(|k| k as f64 * gap).collect())
    }

    /// Gaps drawn uniformly from `(0, h]` until `horizon` is covered.
    pub fn random(h: f64, horizon: f64, seed: u64) -> Result<Self, SystemError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(SystemError::NonPositiveDuration(h));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut times = alloc::vec![0.0];
        let mut t = 0.0;
        while t < horizon {
            let u: f64 = rng.random();
            let next = t + h * (1.0 - u);
            if !(next > t) {
                continue;
            }
            t = next;
            times.push(t);
        }
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.times.last().expect("non-empty by construction")
    }

    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    /// Largest realized gap, i.e. the sampling bound this sequence respects.
    pub fn max_gap(&self) -> Option<f64> {
        self.gaps().reduce(f64::max)
    }

    pub fn min_gap(&self) -> Option<f64> {
        self.gaps().reduce(f64::min)
    }
}

/// Sampled state/input record on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Matrix,
    pub inputs: Matrix,
    pub derivatives: Option<Matrix>,
}

impl Trajectory {
    pub fn new(
        grid: Vec<f64>,
        states: Matrix,
        inputs: Matrix,
        derivatives: Option<Matrix>,
    ) -> Result<Self, SystemError> {
        let len = grid.len();
        if states.ncols() != len || inputs.ncols() != len {
            return Err(SystemError::Dimension("trajectory column counts differ"));
        }
        if let Some(d) = &derivatives {
            if d.ncols() != len || d.nrows() != states.nrows() {
                return Err(SystemError::Dimension("derivative record shape"));
            }
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SystemError::Dimension("trajectory grid must increase"));
        }
        Ok(Self {
            grid,
            states,
            inputs,
            derivatives,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn final_state(&self) -> Vector {
        self.states.column(self.states.ncols() - 1).into_owned()
    }

    /// State at the grid point closest to `t`.
    pub fn state_near(&self, t: f64) -> Vector {
        let idx = self
            .grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.states.column(idx).into_owned()
    }
}

/// Exact one-step propagation matrices `(exp(A dt), ∫₀^dt exp(A s) ds · B)`
/// for arbitrary `A`, computed from the augmented exponential
/// `exp([[A, B], [0, 0]] dt)`.
pub fn zoh_matrices(a: &Matrix, b: &Matrix, dt: f64) -> Result<(Matrix, Matrix), SystemError> {
    if !(dt > 0.0) {
        return Err(SystemError::NonPositiveDuration(dt));
    }
    if !all_finite(a) {
        return Err(SystemError::NonFinite("A"));
    }
    if !all_finite(b) {
        return Err(SystemError::NonFinite("B"));
    }
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = expm(&aug);
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// Zero-order-hold discretization of the control channel over `dt`.
pub fn discretize_zoh(sys: &LtiSystem, dt: f64) -> Result<(Matrix, Matrix), SystemError> {
    zoh_matrices(sys.a(), sys.b(), dt)
}

/// Output grid for [`simulate_sampled_closed_loop_with`]. Sampling instants
/// are always included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputGrid {
    /// Uniform spacing of (shortest sampling gap) / `count`.
    PerShortestGap(usize),
    /// Uniform spacing.
    Spacing(f64),
    /// Only the sampling instants and the horizon.
    SamplesOnly,
}

impl Default for OutputGrid {
    fn default() -> Self {
        OutputGrid::PerShortestGap(20)
    }
}

/// Memoized ZOH matrices keyed by step length.
struct ZohCache<'a> {
    a: &'a Matrix,
    b: &'a Matrix,
    steps: BTreeMap<u64, (Matrix, Matrix)>,
}

impl<'a> ZohCache<'a> {
    fn new(a: &'a Matrix, b: &'a Matrix) -> Self {
        Self {
            a,
            b,
            steps: BTreeMap::new(),
        }
    }

    fn step(&mut self, x: &Vector, u: &Vector, dt: f64) -> Result<Vector, SystemError> {
        let key = dt.to_bits();
        if !self.steps.contains_key(&key) {
            let pair = zoh_matrices(self.a, self.b, dt)?;
            if self.steps.len() > 4096 {
                self.steps.clear();
            }
            self.steps.insert(key, pair);
        }
        let (ad, bd) = &self.steps[&key];
        Ok(ad * x + bd * u)
    }
}

/// Sampled-data closed loop `u(t) = K x(t_k)` on `[t_k, t_{k+1})`, recorded on
/// the default grid (20 points per shortest sampling gap).
pub fn simulate_sampled_closed_loop(
    sys: &LtiSystem,
    gain: &FeedbackGain,
    sampling: &SamplingSequence,
    x0: &Vector,
    horizon: f64,
) -> Result<Trajectory, SystemError> {
    simulate_sampled_closed_loop_with(sys, gain, sampling, x0, horizon, OutputGrid::default())
}

pub fn simulate_sampled_closed_loop_with(
    sys: &LtiSystem,
    gain: &FeedbackGain,
    sampling: &SamplingSequence,
    x0: &Vector,
    horizon: f64,
    grid: OutputGrid,
) -> Result<Trajectory, SystemError> {
    if sampling.len() < 2 {
        return Err(SystemError::EmptySampling);
    }
    if !(horizon > 0.0) {
        return Err(SystemError::NonPositiveDuration(horizon));
    }
    if horizon > sampling.last() {
        return Err(SystemError::HorizonBeyondSampling {
            horizon,
            last: sampling.last(),
        });
    }
    if x0.len() != sys.n() {
        return Err(SystemError::Dimension("x0 length"));
    }
    if gain.matrix().shape() != (sys.m(), sys.n()) {
        return Err(SystemError::Dimension("K must be m x n"));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(SystemError::NonFinite("x0"));
    }

    let spacing = match grid {
        OutputGrid::PerShortestGap(count) => {
            sampling.min_gap().unwrap_or(horizon) / count.max(1) as f64
        }
        OutputGrid::Spacing(dt) => {
            if !(dt > 0.0) {
                return Err(SystemError::NonPositiveDuration(dt));
            }
            dt
        }
        OutputGrid::SamplesOnly => f64::INFINITY,
    };
    let times = output_times(sampling.times(), horizon, spacing);

    let k = gain.matrix();
    let mut cache = ZohCache::new(sys.a(), sys.b());
    let mut states = Matrix::zeros(sys.n(), times.len());
    let mut inputs = Matrix::zeros(sys.m(), times.len());
    let mut derivs = Matrix::zeros(sys.n(), times.len());

    let samples = sampling.times();
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut interval = 0usize;
    let mut u = k * &x;
    for (col, &target) in times.iter().enumerate() {
        // advance through every sampling instant before `target`
        while interval + 1 < samples.len() && samples[interval + 1] <= target {
            let next = samples[interval + 1];
            if next > t {
                x = cache.step(&x, &u, next - t)?;
                t = next;
            }
            interval += 1;
            u = k * &x;
        }
        if target > t {
            x = cache.step(&x, &u, target - t)?;
            t = target;
        }
        states.set_column(col, &x);
        inputs.set_column(col, &u);
        derivs.set_column(col, &(sys.a() * &x + sys.b() * &u));
    }
    Trajectory::new(times, states, inputs, Some(derivs))
}

/// Merged uniform grid and sampling instants in `[0, horizon]`; where a grid
/// point and a sampling instant coincide up to rounding, the instant is kept.
fn output_times(samples: &[f64], horizon: f64, spacing: f64) -> Vec<f64> {
    let mut tagged: Vec<(f64, bool)> = samples
        .iter()
        .copied()
        .filter(|&t| t <= horizon)
        .map(|t| (t, true))
        .collect();
    if spacing.is_finite() {
        let count = libm::floor(horizon / spacing) as usize;
        tagged.extend(
            (0..=count)
                .map(|i| i as f64 * spacing)
                .filter(|&t| t <= horizon)
                .map(|t| (t, false)),
        );
    }
    tagged.push((horizon, true));
    tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tol = 1e-12 * horizon.max(1.0);
    let mut times: Vec<(f64, bool)> = Vec::with_capacity(tagged.len());
    for (t, is_sample) in tagged {
        match times.last_mut() {
            Some(last) if (t - last.0).abs() <= tol => {
                if is_sample && !last.1 {
                    *last = (t, true);
                }
            }
            _ => times.push((t, is_sample)),
        }
    }
    times.into_iter().map(|(t, _)| t).collect()
}

/// Per-sample signal source for experiment generation.
pub trait SignalLaw {
    fn dim(&self) -> usize;

    fn sample(&self, index: usize, rng: &mut dyn RngCore) -> Vector;

    /// Pointwise bound `‖s_k‖₂ ≤ bound` the law guarantees, if any.
    fn pointwise_bound(&self) -> Option<f64> {
        None
    }
}

/// Independent entries uniform in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformBox {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
}

impl SignalLaw for UniformBox {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, _index: usize, rng: &mut dyn RngCore) -> Vector {
        Vector::from_fn(self.dim, |_, _| {
            if self.hi > self.lo {
                rng.random_range(self.lo..=self.hi)
            } else {
                self.lo
            }
        })
    }
}

/// Uniform on the Euclidean ball of the given radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformBall {
    pub dim: usize,
    pub radius: f64,
}

impl SignalLaw for UniformBall {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, _index: usize, rng: &mut dyn RngCore) -> Vector {
        if self.radius == 0.0 || self.dim == 0 {
            return Vector::zeros(self.dim);
        }
        // rejection from the enclosing cube is exact and cheap in low dimension
        loop {
            let v = Vector::from_fn(self.dim, |_, _| rng.random_range(-1.0..=1.0));
            if v.norm_squared() <= 1.0 {
                return v * self.radius;
            }
        }
    }

    fn pointwise_bound(&self) -> Option<f64> {
        Some(self.radius)
    }
}

/// Identically zero signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroSignal {
    pub dim: usize,
}

impl SignalLaw for ZeroSignal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, _index: usize, _rng: &mut dyn RngCore) -> Vector {
        Vector::zeros(self.dim)
    }

    fn pointwise_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Open-loop experiment on the perturbed plant.
///
/// Input and disturbance are drawn at each `τ_k` and held constant until
/// `τ_{k+1}`; the state is propagated exactly. The recorded derivative is
/// `ẋ(τ_k) = A x(τ_k) + B u(τ_k) + B_d d(τ_k)`. Returns the data set and the
/// realized disturbance matrix `D̂` (m_d × N).
pub fn generate_experiment_data(
    sys: &LtiSystem,
    tau: &[f64],
    x0: &Vector,
    input_law: &dyn SignalLaw,
    disturbance_law: &dyn SignalLaw,
    seed: u64,
) -> Result<(DataSet, Matrix), SystemError> {
    if tau.is_empty() {
        return Err(SystemError::EmptySampling);
    }
    if let Some(i) = tau.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(SystemError::Sampling(i + 1));
    }
    if x0.len() != sys.n() {
        return Err(SystemError::Dimension("x0 length"));
    }
    if input_law.dim() != sys.m() {
        return Err(SystemError::Dimension("input law dimension != m"));
    }
    if disturbance_law.dim() != sys.md() {
        return Err(SystemError::Dimension("disturbance law dimension != m_d"));
    }
    let bound = disturbance_law
        .pointwise_bound()
        .ok_or(SystemError::UndeclaredBound)?;
    if !(bound >= 0.0) {
        return Err(SystemError::NegativeBound(bound));
    }

    let (n, m, md, count) = (sys.n(), sys.m(), sys.md(), tau.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
    let mut dist_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());

    let mut joint_b = Matrix::zeros(n, m + md);
    joint_b.view_mut((0, 0), (n, m)).copy_from(sys.b());
    joint_b.view_mut((0, m), (n, md)).copy_from(sys.bd());
    let mut cache = ZohCache::new(sys.a(), &joint_b);

    let mut xs = Matrix::zeros(n, count);
    let mut us = Matrix::zeros(m, count);
    let mut xdots = Matrix::zeros(n, count);
    let mut dhat = Matrix::zeros(md, count);

    let mut x = x0.clone();
    for k in 0..count {
        let u = input_law.sample(k, &mut input_rng);
        let d = disturbance_law.sample(k, &mut dist_rng);
        let norm = d.norm();
        if norm > bound * (1.0 + 1e-12) {
            return Err(SystemError::BoundViolated {
                index: k,
                norm,
                bound,
            });
        }
        xs.set_column(k, &x);
        us.set_column(k, &u);
        dhat.set_column(k, &d);
        xdots.set_column(k, &(sys.a() * &x + sys.b() * &u + sys.bd() * &d));
        if k + 1 < count {
            let mut ud = Vector::zeros(m + md);
            ud.rows_mut(0, m).copy_from(&u);
            ud.rows_mut(m, md).copy_from(&d);
            x = cache.step(&x, &ud, tau[k + 1] - tau[k])?;
        }
    }
    let data = DataSet::new(tau.to_vec(), xs, us, xdots, sys.bd().clone())
        .map_err(|_| SystemError::Dimension("data set assembly"))?;
    Ok((data, dhat))
}
