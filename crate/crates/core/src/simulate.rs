//! Generators for experimental inputs: random covariance operators with a
//! prescribed eigenvalue decay, and Gaussian / t-process curve samplers built
//! on the Karhunen–Loève expansion.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{interpolate, sorted_eigen, CovOperator, Grid, PSD_TOL};
use crate::rng::{derive_seed, rng_from_seed, stream_rng};
use crate::stats::FunctionalSample;

/// Spectrum `λ_m = scale · m^{−β}`, `m = 1..=dimension`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySpec {
    pub dimension: usize,
    pub exponent: f64,
    pub scale: f64,
}

impl DecaySpec {
    pub fn new(dimension: usize, exponent: f64) -> Self {
        DecaySpec {
            dimension,
            exponent,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidArgument("decay dimension must be >= 1".into()));
        }
        if !(self.exponent >= 0.0 && self.exponent.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "decay exponent must be finite and >= 0, got {}",
                self.exponent
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "decay scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn spectrum(&self) -> Vec<f64> {
        (1..=self.dimension)
            .map(|m| self.scale * (m as f64).powf(-self.exponent))
            .collect()
    }
}

/// `d × r` matrix with orthonormal columns, Haar distributed: QR of a
/// standard Gaussian matrix with the signs of `diag(R)` folded into `Q`.
pub fn random_orthonormal(d: usize, r: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let g = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rdiag = qr.r().diagonal();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if rdiag[j] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// `U diag(λ) Uᵀ` with `U` orthonormal in the weighted inner product.
pub fn random_covariance(spec: &DecaySpec, grid: Arc<Grid>, seed: u64) -> Result<CovOperator> {
    spec.validate()?;
    let d = grid.len();
    if spec.dimension > d {
        return Err(Error::InvalidArgument(format!(
            "decay dimension {} exceeds grid size {d}",
            spec.dimension
        )));
    }
    let u = random_orthonormal(d, spec.dimension, seed);
    let lambda = DVector::from_vec(spec.spectrum());
    let mut ul = u.clone();
    for (j, mut col) in ul.column_iter_mut().enumerate() {
        col *= lambda[j];
    }
    let m = &ul * u.transpose();
    let m = (&m + m.transpose()) * 0.5;
    CovOperator::from_weighted(grid, m)
}

/// Precomputed Karhunen–Loève factor `A` with `f = A z`, `z ~ N(0, I)`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    grid: Arc<Grid>,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(s: &CovOperator) -> Result<Self> {
        let (values, vectors) = sorted_eigen(s.weighted_matrix());
        let max = values.first().copied().unwrap_or(0.0).max(0.0);
        let min = values.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL * max || (max == 0.0 && min < 0.0) {
            return Err(Error::NotPsd { min, max });
        }
        let sw = s.grid().sqrt_weights();
        let d = s.dim();
        let factor = DMatrix::from_fn(d, d, |i, j| {
            vectors[(i, j)] * values[j].max(0.0).sqrt() / sw[i]
        });
        Ok(GaussianSampler {
            grid: s.grid().clone(),
            factor,
        })
    }

    fn normals(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, 0);
        let d = self.grid.len();
        DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn to_sample(&self, x: DMatrix<f64>) -> Result<FunctionalSample> {
        let rows = x.column_iter().map(|c| c.iter().copied().collect()).collect();
        FunctionalSample::from_rows(self.grid.clone(), rows)
    }

    /// `n` mean-zero Gaussian curves.
    pub fn sample(&self, n: usize, seed: u64) -> Result<FunctionalSample> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be >= 1".into()));
        }
        self.to_sample(&self.factor * self.normals(n, seed))
    }

    /// `n` t-process curves with `nu` degrees of freedom and covariance `S`:
    /// `f = Z / sqrt(V/ν)` with `Z ~ N(0, (ν−2)/ν · S)` and `V ~ χ²_ν`.
    ///
    /// The normal stream is the one used by [`GaussianSampler::sample`], so
    /// with the same seed each t curve is the Gaussian curve times a positive
    /// scalar.
    pub fn sample_t(&self, nu: f64, n: usize, seed: u64) -> Result<FunctionalSample> {
        if !(nu > 2.0) {
            return Err(Error::InvalidArgument(format!(
                "t-process needs nu > 2 for a finite covariance, got {nu}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be >= 1".into()));
        }
        let chi = ChiSquared::new(nu)
            .map_err(|e| Error::InvalidArgument(format!("chi-squared({nu}): {e}")))?;
        let mut rng = stream_rng(seed, 1);
        let shrink = ((nu - 2.0) / nu).sqrt();
        let mut x = &self.factor * self.normals(n, seed);
        for mut col in x.column_iter_mut() {
            let v: f64 = chi.sample(&mut rng);
            col *= shrink / (v / nu).sqrt();
        }
        self.to_sample(x)
    }
}

pub fn sample_gaussian(s: &CovOperator, n: usize, seed: u64) -> Result<FunctionalSample> {
    GaussianSampler::new(s)?.sample(n, seed)
}

pub fn sample_t_process(s: &CovOperator, nu: f64, n: usize, seed: u64) -> Result<FunctionalSample> {
    GaussianSampler::new(s)?.sample_t(nu, n, seed)
}

/// Keeps the leading eigenpair and multiplies every other eigenvalue by `factor`.
pub fn inflate_nonprincipal(s: &CovOperator, factor: f64) -> Result<CovOperator> {
    let (mut values, vectors) = sorted_eigen(s.weighted_matrix());
    for v in values.iter_mut().skip(1) {
        *v *= factor;
    }
    let d = values.len();
    let scaled = DMatrix::from_fn(d, d, |i, j| vectors[(i, j)] * values[j]);
    let m = scaled * vectors.transpose();
    CovOperator::from_weighted(s.grid().clone(), (&m + m.transpose()) * 0.5)
}

/// Default separation of the surrogate pair along the Procrustes path.
pub const SURROGATE_GAMMA: f64 = 0.25;

/// Eigenvalue decay of the surrogate pair.
pub const SURROGATE_EXPONENT: f64 = 3.0;

/// Full-rank decay `m^{−3}` on a grid of `d` points.
pub fn surrogate_decay(d: usize) -> DecaySpec {
    DecaySpec::new(d, SURROGATE_EXPONENT)
}

/// Two covariance operators with the same eigenvalue decay and closely
/// related eigenfunctions, standing in for a real pair of similar
/// covariances (e.g. two sub-populations of growth curves).
///
/// The first is `random_covariance(spec)`; the second sits at
/// `SURROGATE_GAMMA` on the Procrustes path towards an independent draw.
pub fn similar_pair(spec: &DecaySpec, grid: Arc<Grid>, seed: u64) -> Result<(CovOperator, CovOperator)> {
    let a = random_covariance(spec, grid.clone(), derive_seed(seed, &[0]))?;
    let far = random_covariance(spec, grid, derive_seed(seed, &[1]))?;
    let b = interpolate(&a, &far, SURROGATE_GAMMA)?;
    Ok((a, b))
}

/// Average of two operators with every non-principal eigenvalue scaled by
/// 5: a third class lying between the two but with larger variance.
pub fn inflated_midpoint(a: &CovOperator, b: &CovOperator) -> Result<CovOperator> {
    inflate_nonprincipal(&a.add(b)?.scale(0.5), 5.0)
}
