//! Square roots and Procrustes geometry of covariance operators.
//!
//! With `Σ = R Rᵀ`, the Procrustes distance is
//! `d(Σ₁, Σ₂)² = min_{S orthogonal} ‖R₁ − R₂ S‖²_HS`
//! `= tr Σ₁ + tr Σ₂ − 2 ‖R₂ᵀ R₁‖_tr`, attained at `S = U Vᵀ` where
//! `R₂ᵀ R₁ = U D Vᵀ`. Everything is evaluated on weighted matrices.

use nalgebra::{DMatrix, SVD};

use super::{check_grid, sorted_eigen, CovOperator, PSD_TOL};
use crate::error::{Error, Result};

fn sqrt_weighted(s: &CovOperator) -> Result<DMatrix<f64>> {
    let (values, vectors) = sorted_eigen(s.weighted_matrix());
    let max = values.first().copied().unwrap_or(0.0).max(0.0);
    let min = values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL * max || (max == 0.0 && min < 0.0) {
        return Err(Error::NotPsd { min, max });
    }
    let roots: Vec<f64> = values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
        vectors[(i, j)] * roots[j]
    });
    Ok(scaled * vectors.transpose())
}

/// The PSD square root `R` with `R ∘ R = S`.
pub fn operator_sqrt(s: &CovOperator) -> Result<CovOperator> {
    let r = sqrt_weighted(s)?;
    CovOperator::from_weighted(s.grid().clone(), r)
}

struct Alignment {
    r1: DMatrix<f64>,
    r2: DMatrix<f64>,
    rotation: DMatrix<f64>,
    nuclear: f64,
}

fn align(s1: &CovOperator, s2: &CovOperator) -> Result<Alignment> {
    check_grid(s1.grid(), s2.grid())?;
    let r1 = sqrt_weighted(s1)?;
    let r2 = sqrt_weighted(s2)?;
    let cross = r2.transpose() * &r1;
    let svd = SVD::new(cross, true, true);
    let nuclear = svd.singular_values.sum();
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => unreachable!("SVD requested with both factors"),
    };
    Ok(Alignment {
        r1,
        r2,
        rotation: u * v_t,
        nuclear,
    })
}

/// The orthogonal matrix `S` minimizing `‖R₁ − R₂ S‖_HS`, in weighted
/// coordinates.
pub fn procrustes_alignment(s1: &CovOperator, s2: &CovOperator) -> Result<DMatrix<f64>> {
    Ok(align(s1, s2)?.rotation)
}

pub fn procrustes_distance(s1: &CovOperator, s2: &CovOperator) -> Result<f64> {
    let a = align(s1, s2)?;
    let d2 = s1.trace() + s2.trace() - 2.0 * a.nuclear;
    Ok(d2.max(0.0).sqrt())
}

/// Point `γ` on the Procrustes path from `s1` (γ = 0) to `s2` (γ = 1):
/// `R_γ = R₁ + γ (R₂ S − R₁)`, returning `R_γ R_γᵀ`. Values `γ > 1`
/// extrapolate past `s2`.
pub fn interpolate(s1: &CovOperator, s2: &CovOperator, gamma: f64) -> Result<CovOperator> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "interpolation parameter must be a finite value >= 0, got {gamma}"
        )));
    }
    if gamma == 0.0 {
        check_grid(s1.grid(), s2.grid())?;
        return Ok(s1.clone());
    }
    let a = align(s1, s2)?;
    let r_gamma = &a.r1 + (&a.r2 * &a.rotation - &a.r1) * gamma;
    let m = &r_gamma * r_gamma.transpose();
    // R_γ R_γᵀ is symmetric up to roundoff.
    let m = (&m + m.transpose()) * 0.5;
    CovOperator::from_weighted(s1.grid().clone(), m)
}
