//! Confidence radii from Talagrand's inequality with a Rademacher
//! replacement for the unknown expected deviation.
//!
//! With `L = −log(2α) ≥ 0` the general radius is
//!
//! ```text
//! r = ‖R_n‖ + sqrt( (2/n) L (σ² + 2U‖R_n‖) ) + U L / (3n)
//! ```
//!
//! and for covariance operators, taking `U = σ` so that `v_n ≈ σ²/n`,
//!
//! ```text
//! r = ‖R_n‖ + σ sqrt(2L/n) + σ L / (3n).
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{check_grid, CovOperator, SchattenP};
use crate::stats::{empirical_covariance, rademacher_norm_estimate, weak_variance_gaussian, FunctionalSample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusParams {
    pub n: usize,
    /// `‖R_n‖`, the norm of the Rademacher average.
    pub rademacher_norm: f64,
    /// Weak standard deviation `σ`.
    pub sigma: f64,
    /// Almost-sure bound `U`; conventionally `σ` for unbounded data.
    pub u_bound: f64,
    pub alpha: f64,
}

impl RadiusParams {
    /// Parameters with `U = σ`.
    pub fn new(n: usize, rademacher_norm: f64, sigma: f64, alpha: f64) -> Self {
        RadiusParams {
            n,
            rademacher_norm,
            sigma,
            u_bound: sigma,
            alpha,
        }
    }

    pub fn with_u_bound(mut self, u: f64) -> Self {
        self.u_bound = u;
        self
    }

    fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        if self.n == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        for (name, v) in [
            ("rademacher_norm", self.rademacher_norm),
            ("sigma", self.sigma),
            ("u_bound", self.u_bound),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `L = −log(2α)`, nonnegative on `(0, 1/2]`.
pub fn log_term(alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    Ok(-(2.0 * alpha).ln())
}

pub fn confidence_radius_general(p: &RadiusParams) -> Result<f64> {
    p.validate()?;
    let l = log_term(p.alpha)?;
    let n = p.n as f64;
    let var = p.sigma * p.sigma + 2.0 * p.u_bound * p.rademacher_norm;
    Ok(p.rademacher_norm + (2.0 / n * l * var).sqrt() + p.u_bound * l / (3.0 * n))
}

/// Covariance-operator radius; `u_bound` is ignored and `U = σ` is used.
pub fn confidence_radius_covariance(p: &RadiusParams) -> Result<f64> {
    p.validate()?;
    let l = log_term(p.alpha)?;
    let n = p.n as f64;
    Ok(p.rademacher_norm + p.sigma * (2.0 * l / n).sqrt() + p.sigma * l / (3.0 * n))
}

/// Whether `s` lies within `radius` of `s_hat` in the p-Schatten norm.
pub fn membership(s_hat: &CovOperator, s: &CovOperator, p: SchattenP, radius: f64) -> Result<bool> {
    check_grid(s_hat.grid(), s.grid())?;
    Ok(s_hat.distance(s, p)? <= radius)
}

/// Ball `{Σ : ‖Σ̂ − Σ‖_p ≤ radius}` around the centred empirical covariance.
#[derive(Clone, Debug)]
pub struct ConfidenceSet {
    pub center: CovOperator,
    pub p_norm: SchattenP,
    pub params: RadiusParams,
    pub radius: f64,
}

impl ConfidenceSet {
    pub fn contains(&self, s: &CovOperator) -> Result<bool> {
        membership(&self.center, s, self.p_norm, self.radius)
    }
}

/// Covariance confidence set with `σ = √2‖Σ̂‖_p` and `‖R_n‖` averaged over
/// `rademacher_draws` sign vectors.
pub fn confidence_set(
    sample: &FunctionalSample,
    p: SchattenP,
    alpha: f64,
    rademacher_draws: usize,
    seed: u64,
) -> Result<ConfidenceSet> {
    validate_alpha(alpha)?;
    if sample.len() < 2 {
        return Err(Error::InvalidArgument("confidence set needs at least 2 curves".into()));
    }
    let center = empirical_covariance(sample, true);
    let rn = rademacher_norm_estimate(sample, p, rademacher_draws, seed)?;
    let params = RadiusParams::new(sample.len(), rn, weak_variance_gaussian(&center, p), alpha);
    let radius = confidence_radius_covariance(&params)?;
    Ok(ConfidenceSet {
        center,
        p_norm: p,
        params,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::DMatrix;

    use super::*;
    use crate::operator::Grid;

    #[test]
    fn half_alpha_collapses_to_rademacher_norm() {
        let p = RadiusParams::new(30, 0.7, 2.0, 0.5);
        assert_eq!(confidence_radius_general(&p).unwrap(), 0.7);
        assert_eq!(confidence_radius_covariance(&p).unwrap(), 0.7);
    }

    #[test]
    fn general_radius_hand_value() {
        // L = ln 10; 0.2 + sqrt(0.02 · L · 1.4) + L/300
        let p = RadiusParams::new(100, 0.2, 1.0, 0.05);
        let r = confidence_radius_general(&p).unwrap();
        assert!((r - 0.461_589_408).abs() < 1e-6, "{r}");
    }

    #[test]
    fn covariance_radius_hand_value() {
        // 0.5 + 2 sqrt(2L/50) + 2L/150
        let p = RadiusParams::new(50, 0.5, 2.0, 0.05);
        let r = confidence_radius_covariance(&p).unwrap();
        assert!((r - 1.137_671_986).abs() < 1e-6, "{r}");
    }

    #[test]
    fn doubling_sigma_doubles_sqrt_term() {
        let l = log_term(0.05).unwrap();
        let base = RadiusParams::new(40, 0.0, 1.0, 0.05).with_u_bound(0.3);
        let double = RadiusParams::new(40, 0.0, 2.0, 0.05).with_u_bound(0.3);
        let tail = 0.3 * l / 120.0;
        let a = confidence_radius_general(&base).unwrap() - tail;
        let b = confidence_radius_general(&double).unwrap() - tail;
        assert!((b - 2.0 * a).abs() < 1e-14);
    }

    #[test]
    fn smaller_alpha_gives_larger_radius() {
        let a = confidence_radius_covariance(&RadiusParams::new(50, 0.5, 2.0, 0.01)).unwrap();
        let b = confidence_radius_covariance(&RadiusParams::new(50, 0.5, 2.0, 0.05)).unwrap();
        assert!(a > b);
    }

    #[test]
    fn alpha_outside_range_rejected() {
        for alpha in [0.0, -0.1, 0.51, f64::NAN] {
            let p = RadiusParams::new(10, 0.1, 1.0, alpha);
            assert!(matches!(confidence_radius_general(&p), Err(Error::InvalidAlpha(_))));
            assert!(matches!(confidence_radius_covariance(&p), Err(Error::InvalidAlpha(_))));
        }
        let bad = RadiusParams::new(10, -0.1, 1.0, 0.05);
        assert!(confidence_radius_general(&bad).is_err());
        assert!(confidence_radius_general(&RadiusParams::new(0, 0.1, 1.0, 0.05)).is_err());
    }

    #[test]
    fn membership_examples() {
        let g = Arc::new(Grid::uniform(3).unwrap());
        let a = CovOperator::from_weighted(g.clone(), DMatrix::identity(3, 3)).unwrap();
        let b = a.scale(2.0);
        assert!(membership(&a, &a, SchattenP::TRACE, 0.0).unwrap());
        assert!(!membership(&a, &b, SchattenP::TRACE, 0.0).unwrap());
        assert!(membership(&a, &b, SchattenP::OPERATOR, 1.0).unwrap());
        let other = CovOperator::zeros(Arc::new(Grid::uniform(4).unwrap()));
        assert!(membership(&a, &other, SchattenP::TRACE, 1.0).is_err());
    }

    #[test]
    fn confidence_set_contains_its_center() {
        use crate::simulate::{random_covariance, sample_gaussian, DecaySpec};
        let g = Arc::new(Grid::uniform(5).unwrap());
        let s = random_covariance(&DecaySpec::new(5, 2.0), g, 3).unwrap();
        let x = sample_gaussian(&s, 40, 4).unwrap();
        let set = confidence_set(&x, SchattenP::HILBERT_SCHMIDT, 0.05, 1, 5).unwrap();
        assert!(set.contains(&set.center).unwrap());
        assert!(set.radius > set.params.rademacher_norm);
        let tighter = confidence_set(&x, SchattenP::HILBERT_SCHMIDT, 0.5, 1, 5).unwrap();
        assert_eq!(tighter.radius, tighter.params.rademacher_norm);
    }
}
