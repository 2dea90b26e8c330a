//! The benchmark plant: a double integrator with light damping, its
//! reference gain and the noisy experiment used to build consistency sets.

use msicert_core::consistency::{build_consistency_set, dualize, ConsistencyError};
use msicert_core::system::{generate_experiment_data, SystemError, UniformBall, UniformBox};
use msicert_core::search::IterationSchedule;
use msicert_core::{ConsistencySet, DataSet, FeedbackGain, LtiSystem, Matrix, NoiseBound, Vector};

/// Noise levels `d̄` of the sweep.
pub const NOISE_LEVELS: [f64; 7] = [0.001, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05];
/// Reference analysis bounds for the reference gain, per noise level.
pub const REFERENCE_ANALYSIS: [f64; 7] = [1.59, 1.49, 1.38, 1.17, 1.0, 0.86, 0.67];
/// Reference bounds after gain iteration, per noise level.
pub const REFERENCE_DESIGN: [f64; 7] = [142.6, 28.5, 13.8, 6.3, 4.0, 2.9, 2.2];
/// Reference model-based bound for the reference gain.
pub const REFERENCE_MODEL_BASED: f64 = 1.62;
/// Number of samples in the experiment.
pub const SAMPLES: usize = 100;
/// Seeds of the fixed realizations reported by the sweep.
pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Analysis search window for the reference gain.
pub const ANALYSIS_WINDOW: (f64, f64) = (0.05, 1.7);

/// Alternation schedule used for the design sweep: default growth, handoff
/// witness at `0.9 h`, design re-solve after each failed growth step and
/// at most 100 rounds.
pub fn design_schedule() -> IterationSchedule {
    IterationSchedule {
        max_outer_iters: 100,
        handoff_backoff: 0.9,
        recenter: true,
        ..IterationSchedule::default()
    }
}

/// `A = [0 1; 0 -0.1]`, `B = [0; 0.1]`, `B_d = I`.
pub fn system() -> LtiSystem {
    LtiSystem::with_identity_disturbance(
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -0.1]),
        Matrix::from_row_slice(2, 1, &[0.0, 0.1]),
    )
    .expect("benchmark plant is well formed")
}

/// `K = -[3.75 11.5]`.
pub fn reference_gain() -> FeedbackGain {
    FeedbackGain::new(Matrix::from_row_slice(1, 2, &[-3.75, -11.5]))
}

/// Sampling instants: `τ_0 = 0`, gaps of 1.5 up to `τ_49`, then gaps of 3.
pub fn sample_times(samples: usize) -> Vec<f64> {
    let mut tau = Vec::with_capacity(samples);
    let mut t = 0.0;
    for k in 0..samples {
        if k > 0 {
            t += if k < 50 { 1.5 } else { 3.0 };
        }
        tau.push(t);
    }
    tau
}

#[derive(Debug, thiserror::Error)]
pub enum ExampleError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
}

/// One realization of the experiment at noise level `d_bar`.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub data: DataSet,
    pub noise: NoiseBound,
    /// Disturbance realization, one column per sample.
    pub disturbance: Matrix,
}

/// Inputs uniform in `[-1, 1]`, disturbances uniform in the ball of radius
/// `d_bar`, held constant between samples, `x(0) = 0`.
pub fn experiment(d_bar: f64, samples: usize, seed: u64) -> Result<Experiment, ExampleError> {
    experiment_at(d_bar, &sample_times(samples), seed)
}

/// [`experiment`] with explicit sampling instants.
pub fn experiment_at(d_bar: f64, tau: &[f64], seed: u64) -> Result<Experiment, ExampleError> {
    experiment_for(&system(), d_bar, tau, seed)
}

/// The benchmark experiment protocol applied to an arbitrary plant: inputs
/// uniform in `[-1, 1]` per channel, disturbances uniform in the ball of
/// radius `d_bar`, `x(0) = 0`.
pub fn experiment_for(
    sys: &LtiSystem,
    d_bar: f64,
    tau: &[f64],
    seed: u64,
) -> Result<Experiment, ExampleError> {
    let (data, disturbance) = generate_experiment_data(
        sys,
        tau,
        &Vector::zeros(sys.n()),
        &UniformBox { dim: sys.m(), lo: -1.0, hi: 1.0 },
        &UniformBall { dim: sys.md(), radius: d_bar },
        seed,
    )?;
    let noise = NoiseBound::pointwise(d_bar, tau.len(), sys.md());
    Ok(Experiment { data, noise, disturbance })
}

/// Consistency set of one realization, with its dual multiplier.
pub fn consistency_set(exp: &Experiment) -> Result<ConsistencySet, ExampleError> {
    let set = build_consistency_set(&exp.data, &exp.noise)?;
    Ok(dualize(&set)?)
}
