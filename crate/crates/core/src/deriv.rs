//! Forward-Euler state-derivative estimates from equidistant, noiseless state
//! samples, with per-sample error bounds derived from norm bounds
//! `‖A‖₂ ≤ ā`, `‖B‖₂ ≤ b̄`.
//!
//! Two bounds are provided. [`derivative_error_bound`] is the second-order
//! closed form; it treats the Taylor remainder of `e^{Ah}` as
//! `½(A q)²` with `q ∈ [0, h]` and therefore undershoots the true error
//! whenever the neglected cubic and higher terms matter, e.g. for
//! `ẋ = x`, `h = 1`. [`exponential_error_bound`] sums the full remainder
//! series and holds for every plant within the norm bounds; it agrees with
//! the closed form to second order in `āh`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::consistency::NoiseBound;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DerivError {
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("sampling gap must be positive, got {0}")]
    NonPositiveGap(f64),
    #[error("gap must be nonnegative, got {0}")]
    NegativeGap(f64),
    #[error("norm bounds must be nonnegative")]
    NegativePrior,
    #[error("per-sample bound list is empty")]
    EmptyBounds,
    #[error("per-sample bound {0} is not finite")]
    NonFiniteBound(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
}

/// Known bounds `‖A_tr‖₂ ≤ a_bar`, `‖B_tr‖₂ ≤ b_bar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPrior {
    a_bar: f64,
    b_bar: f64,
}

impl NormPrior {
    pub fn new(a_bar: f64, b_bar: f64) -> Result<Self, DerivError> {
        if !(a_bar >= 0.0 && b_bar >= 0.0) {
            return Err(DerivError::NegativePrior);
        }
        Ok(Self { a_bar, b_bar })
    }

    pub fn a_bar(&self) -> f64 {
        self.a_bar
    }

    pub fn b_bar(&self) -> f64 {
        self.b_bar
    }
}

/// Derivative estimates for samples `1..N-1` and their error bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivEstimate {
    pub xdot_est: Matrix,
    pub per_sample_bound: Vec<f64>,
}

/// Column `k` is `(x_{k+1} - x_k) / h`; the last sample has no estimate.
pub fn euler_derivative(x: &Matrix, h: f64) -> Result<Matrix, DerivError> {
    if x.ncols() < 2 {
        return Err(DerivError::TooFewSamples(x.ncols()));
    }
    if !(h > 0.0) {
        return Err(DerivError::NonPositiveGap(h));
    }
    let len = x.ncols() - 1;
    let ahead = x.columns(1, len);
    let here = x.columns(0, len);
    Ok((ahead - here) / h)
}

/// `x̄ = (ā h / 2) · (ā ‖x‖₂ + (1 + ā h / 3) · b̄ ‖u‖₂)`.
///
/// Second-order in `āh`; not an upper bound on the Euler error in general
/// (see the module documentation).
pub fn derivative_error_bound(
    x: &Vector,
    u: &Vector,
    prior: &NormPrior,
    h: f64,
) -> Result<f64, DerivError> {
    if !(h >= 0.0) {
        return Err(DerivError::NegativeGap(h));
    }
    let a = prior.a_bar;
    Ok(0.5 * a * h * (a * x.norm() + (1.0 + a * h / 3.0) * prior.b_bar * u.norm()))
}

/// `Σ_{k≥2} s^k / k! = e^s - 1 - s`, accurate for small `s`.
fn exp_remainder(s: f64) -> f64 {
    if s < 1e-2 {
        let mut term = 0.5 * s * s;
        let mut sum = term;
        for k in 3..=8 {
            term *= s / k as f64;
            sum += term;
        }
        sum
    } else {
        libm::expm1(s) - s
    }
}

/// `x̄ = ((e^{āh} - 1 - āh) / h) ‖x‖₂ + ((e^{āh} - 1 - āh) / (āh)) b̄ ‖u‖₂`.
///
/// Bounds `‖(e^{Ah} - I - Ah) / h‖₂` and `‖(∫₀ʰ e^{As} ds - hI) B / h‖₂` term
/// by term over the exponential series.
pub fn exponential_error_bound(
    x: &Vector,
    u: &Vector,
    prior: &NormPrior,
    h: f64,
) -> Result<f64, DerivError> {
    if !(h >= 0.0) {
        return Err(DerivError::NegativeGap(h));
    }
    let s = prior.a_bar * h;
    if s == 0.0 {
        return Ok(0.0);
    }
    let r = exp_remainder(s);
    Ok(r / h * x.norm() + r / s * prior.b_bar * u.norm())
}

/// Which per-sample bound accompanies the Euler estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundForm {
    /// [`derivative_error_bound`].
    #[default]
    ClosedForm,
    /// [`exponential_error_bound`].
    Exponential,
}

/// Euler estimates with closed-form bounds for equidistant samples `x`, `u`.
pub fn estimate_derivatives(
    x: &Matrix,
    u: &Matrix,
    prior: &NormPrior,
    h: f64,
) -> Result<DerivEstimate, DerivError> {
    estimate_derivatives_with(x, u, prior, h, BoundForm::ClosedForm)
}

/// Euler estimates with the selected per-sample bound.
pub fn estimate_derivatives_with(
    x: &Matrix,
    u: &Matrix,
    prior: &NormPrior,
    h: f64,
    form: BoundForm,
) -> Result<DerivEstimate, DerivError> {
    let bound = match form {
        BoundForm::ClosedForm => derivative_error_bound,
        BoundForm::Exponential => exponential_error_bound,
    };
    if u.ncols() != x.ncols() {
        return Err(DerivError::Dimension("X and U column counts differ"));
    }
    let xdot_est = euler_derivative(x, h)?;
    let per_sample_bound = (0..xdot_est.ncols())
        .map(|k| {
            bound(
                &x.column(k).into_owned(),
                &u.column(k).into_owned(),
                prior,
                h,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DerivEstimate {
        xdot_est,
        per_sample_bound,
    })
}

/// Noise bound built from per-sample bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedNoise {
    pub noise: NoiseBound,
    /// `d̄ = max_k x̄_k`.
    pub d_bar: f64,
    /// Set when `d̄ = 0`, i.e. `R_d = 0`.
    pub degenerate: bool,
}

/// `Q_d = -I_N`, `S_d = 0`, `R_d = d̄² N I_{m_d}` with `d̄ = max_k x̄_k` and
/// `N = bounds.len()`.
pub fn bounds_to_noise_model(bounds: &[f64], md: usize) -> Result<AggregatedNoise, DerivError> {
    if bounds.is_empty() {
        return Err(DerivError::EmptyBounds);
    }
    if let Some(i) = bounds.iter().position(|b| !b.is_finite()) {
        return Err(DerivError::NonFiniteBound(i));
    }
    let d_bar = bounds.iter().copied().fold(0.0, f64::max);
    Ok(AggregatedNoise {
        noise: NoiseBound::pointwise(d_bar, bounds.len(), md),
        d_bar,
        degenerate: d_bar == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_row_slice(1, v.len(), v)
    }

    #[test]
    fn finite_differences() {
        assert_eq!(euler_derivative(&row(&[1.0, 1.0]), 0.5).unwrap(), row(&[0.0]));
        assert_eq!(euler_derivative(&row(&[0.0, 1.0, 3.0]), 1.0).unwrap(), row(&[1.0, 2.0]));
        assert_eq!(euler_derivative(&row(&[1.0]), 1.0), Err(DerivError::TooFewSamples(1)));
        assert_eq!(euler_derivative(&row(&[1.0, 2.0]), 0.0), Err(DerivError::NonPositiveGap(0.0)));
    }

    #[test]
    fn scalar_decay_estimate_within_bound() {
        // ẋ = -x from x(0) = 1, sampled every 0.01; the first estimate targets ẋ(0) = -1
        let h = 0.01;
        let xs = row(&[1.0, libm::exp(-h), libm::exp(-2.0 * h)]);
        let est = euler_derivative(&xs, h).unwrap();
        assert_relative_eq!(est[(0, 0)], -0.995_016_625, epsilon = 1e-8);
        let prior = NormPrior::new(1.0, 0.0).unwrap();
        let bound = derivative_error_bound(&Vector::from_vec(vec![1.0]), &Vector::zeros(1), &prior, h).unwrap();
        assert_relative_eq!(bound, 0.005, epsilon = 1e-15);
        assert!((est[(0, 0)] + 1.0).abs() <= bound);
    }

    #[test]
    fn closed_form_values() {
        let one = Vector::from_vec(vec![1.0]);
        let prior = NormPrior::new(1.0, 1.0).unwrap();
        assert_eq!(derivative_error_bound(&one, &one, &prior, 0.0).unwrap(), 0.0);
        let v = derivative_error_bound(&one, &one, &prior, 0.1).unwrap();
        assert_relative_eq!(v, 0.05 * (1.0 + (1.0 + 0.1 / 3.0)), epsilon = 1e-15);
        assert_relative_eq!(v, 0.101_666_666_666_666_7, epsilon = 1e-15);

        let prior = NormPrior::new(1.0, 0.0).unwrap();
        let x = Vector::from_vec(vec![2.0, 0.0]);
        let u = Vector::from_vec(vec![123.0]);
        assert_relative_eq!(derivative_error_bound(&x, &u, &prior, 0.2).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(
            derivative_error_bound(&x, &u, &prior, -0.1),
            Err(DerivError::NegativeGap(-0.1))
        );
        assert!(NormPrior::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn aggregation_uses_maximum() {
        let agg = bounds_to_noise_model(&[0.1, 0.2], 2).unwrap();
        assert_relative_eq!(agg.d_bar, 0.2);
        assert_relative_eq!(agg.noise.rd().clone(), Matrix::identity(2, 2) * 0.08, epsilon = 1e-15);
        assert_eq!(agg.noise.qd().clone(), -Matrix::identity(2, 2));

        let zero = bounds_to_noise_model(&[0.0, 0.0, 0.0], 1).unwrap();
        assert!(zero.degenerate);
        assert_eq!(zero.noise.rd()[(0, 0)], 0.0);

        assert_eq!(bounds_to_noise_model(&[], 1), Err(DerivError::EmptyBounds));
        assert_eq!(bounds_to_noise_model(&[0.1, f64::NAN], 1), Err(DerivError::NonFiniteBound(1)));

        let benchmark = bounds_to_noise_model(&vec![0.05; 100], 2).unwrap();
        assert_relative_eq!(benchmark.noise.rd()[(1, 1)], 0.25, epsilon = 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn bound_is_monotone(
            a in 0.0f64..3.0, b in 0.0f64..3.0, h in 0.0f64..1.0,
            xn in 0.0f64..5.0, un in 0.0f64..5.0, bump in 0.0f64..0.5,
        ) {
            let x = |s: f64| Vector::from_vec(vec![s]);
            let base = derivative_error_bound(&x(xn), &x(un), &NormPrior::new(a, b).unwrap(), h).unwrap();
            let up = [
                derivative_error_bound(&x(xn), &x(un), &NormPrior::new(a, b).unwrap(), h + bump),
                derivative_error_bound(&x(xn), &x(un), &NormPrior::new(a + bump, b).unwrap(), h),
                derivative_error_bound(&x(xn), &x(un), &NormPrior::new(a, b + bump).unwrap(), h),
                derivative_error_bound(&x(xn + bump), &x(un), &NormPrior::new(a, b).unwrap(), h),
                derivative_error_bound(&x(xn), &x(un + bump), &NormPrior::new(a, b).unwrap(), h),
            ];
            for v in up {
                proptest::prop_assert!(v.unwrap() >= base);
            }
        }
    }
}
