//! Discretized L²(I) linear algebra.
//!
//! A [`CovOperator`] stores the kernel `K[i][j] ≈ c(s_i, s_j)` of an integral
//! operator. Its action on a curve is `(K f)_i = Σ_j K[i][j] f_j w_j`, so the
//! operator is represented in an orthonormal coordinate system by the
//! *weighted matrix* `M = W^{1/2} K W^{1/2}`. Spectra, Schatten norms, square
//! roots and Procrustes alignment are all computed on `M`.

mod geometry;
mod grid;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use geometry::{interpolate, operator_sqrt, procrustes_alignment, procrustes_distance};
pub use grid::Grid;

/// Relative asymmetry tolerated before a kernel is rejected.
const SYMMETRY_TOL: f64 = 1e-8;

/// Negative eigenvalues above `-PSD_TOL * λ_max` are treated as roundoff.
pub const PSD_TOL: f64 = 1e-8;

/// Exponent `p ∈ [1, ∞]` of a Schatten norm. `p = ∞` is the operator norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SchattenP(f64);

impl SchattenP {
    pub const TRACE: SchattenP = SchattenP(1.0);
    pub const HILBERT_SCHMIDT: SchattenP = SchattenP(2.0);
    pub const OPERATOR: SchattenP = SchattenP(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p >= 1.0 {
            Ok(SchattenP(p))
        } else {
            Err(Error::InvalidNorm(p))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl FromStr for SchattenP {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" | "op" | "operator" => Ok(SchattenP::OPERATOR),
            "trace" | "tr" => Ok(SchattenP::TRACE),
            "hs" => Ok(SchattenP::HILBERT_SCHMIDT),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("unknown Schatten exponent {s:?}")))
                .and_then(SchattenP::new),
        }
    }
}

impl TryFrom<String> for SchattenP {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SchattenP> for String {
    fn from(p: SchattenP) -> String {
        p.to_string()
    }
}

impl fmt::Display for SchattenP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// ℓp norm of a spectrum, the p-Schatten norm of the operator it belongs to.
pub fn spectrum_norm(spectrum: &[f64], p: SchattenP) -> f64 {
    let max = spectrum.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 || p.is_infinite() {
        return max;
    }
    match p.value() {
        1.0 => spectrum.iter().map(|l| l.abs()).sum(),
        2.0 => spectrum.iter().map(|l| l * l).sum::<f64>().sqrt(),
        x => {
            let s: f64 = spectrum.iter().map(|l| (l.abs() / max).powf(x)).sum();
            max * s.powf(1.0 / x)
        }
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn check_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// A function in L²(I) sampled on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Curve {
    grid: Arc<Grid>,
    values: DVector<f64>,
}

impl Curve {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Curve {
            grid,
            values: DVector::from_vec(values),
        })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let d = grid.len();
        Curve {
            grid,
            values: DVector::zeros(d),
        }
    }

    pub(crate) fn from_vector(grid: Arc<Grid>, values: DVector<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Curve { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub(crate) fn vector(&self) -> &DVector<f64> {
        &self.values
    }

    /// L² norm.
    pub fn norm(&self) -> f64 {
        weighted_dot(&self.values, &self.values, self.grid.weights()).sqrt()
    }

    /// `‖self − other‖_{L²}`.
    pub fn distance(&self, other: &Curve) -> Result<f64> {
        check_grid(&self.grid, &other.grid)?;
        let diff = &self.values - &other.values;
        Ok(weighted_dot(&diff, &diff, self.grid.weights()).sqrt())
    }

    pub fn scale(&self, c: f64) -> Curve {
        Curve::from_vector(self.grid.clone(), &self.values * c)
    }
}

fn weighted_dot(f: &DVector<f64>, g: &DVector<f64>, w: &[f64]) -> f64 {
    f.iter().zip(g.iter()).zip(w).map(|((a, b), w)| a * b * w).sum()
}

/// `⟨f, g⟩ = Σ_i f_i g_i w_i`.
pub fn inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    check_grid(&f.grid, &g.grid)?;
    Ok(weighted_dot(&f.values, &g.values, f.grid.weights()))
}

/// A self-adjoint integral operator on L²(I), stored by its kernel.
///
/// The spectrum of the weighted matrix is computed on first use and cached.
#[derive(Clone, Debug)]
pub struct CovOperator {
    grid: Arc<Grid>,
    kernel: DMatrix<f64>,
    spectrum: OnceLock<Vec<f64>>,
}

impl CovOperator {
    /// Builds an operator from a kernel matrix; the kernel is symmetrized as
    /// `(K + Kᵀ)/2` after checking that it is symmetric up to roundoff.
    pub fn from_kernel(grid: Arc<Grid>, kernel: DMatrix<f64>) -> Result<Self> {
        let d = grid.len();
        if kernel.nrows() != d || kernel.ncols() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                got: kernel.nrows().max(kernel.ncols()),
            });
        }
        if let Some(i) = kernel.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let scale = kernel.amax().max(f64::MIN_POSITIVE);
        let asym = (&kernel - kernel.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::from_kernel_unchecked(grid, kernel))
    }

    pub(crate) fn from_kernel_unchecked(grid: Arc<Grid>, kernel: DMatrix<f64>) -> Self {
        let kernel = (&kernel + kernel.transpose()) * 0.5;
        CovOperator {
            grid,
            kernel,
            spectrum: OnceLock::new(),
        }
    }

    /// Inverse of [`CovOperator::weighted_matrix`]: `K = W^{-1/2} M W^{-1/2}`.
    pub fn from_weighted(grid: Arc<Grid>, m: DMatrix<f64>) -> Result<Self> {
        let d = grid.len();
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                got: m.nrows().max(m.ncols()),
            });
        }
        let sw = grid.sqrt_weights();
        let kernel = DMatrix::from_fn(d, d, |i, j| m[(i, j)] / (sw[i] * sw[j]));
        Self::from_kernel(grid, kernel)
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let d = grid.len();
        Self::from_kernel_unchecked(grid, DMatrix::zeros(d, d))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `M = W^{1/2} K W^{1/2}`, the matrix of the operator in L²-orthonormal
    /// coordinates.
    pub fn weighted_matrix(&self) -> DMatrix<f64> {
        let sw = self.grid.sqrt_weights();
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.kernel[(i, j)] * sw[i] * sw[j])
    }

    /// Eigenvalues of the weighted matrix in decreasing order.
    pub fn spectrum(&self) -> &[f64] {
        self.spectrum.get_or_init(|| {
            let mut ev: Vec<f64> = SymmetricEigen::new(self.weighted_matrix())
                .eigenvalues
                .iter()
                .copied()
                .collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            ev
        })
    }

    pub fn schatten_norm(&self, p: SchattenP) -> f64 {
        if p == SchattenP::HILBERT_SCHMIDT && self.spectrum.get().is_none() {
            // ‖M‖_F needs no eigendecomposition.
            let w = self.grid.weights();
            let d = self.dim();
            let mut s = 0.0;
            for j in 0..d {
                for i in 0..d {
                    let k = self.kernel[(i, j)];
                    s += k * k * w[i] * w[j];
                }
            }
            return s.sqrt();
        }
        spectrum_norm(self.spectrum(), p)
    }

    /// `tr(M) = Σ_i K_ii w_i`.
    pub fn trace(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.kernel[(i, i)] * self.grid.weights()[i])
            .sum()
    }

    pub fn scale(&self, c: f64) -> CovOperator {
        Self::from_kernel_unchecked(self.grid.clone(), &self.kernel * c)
    }

    pub fn add(&self, other: &CovOperator) -> Result<CovOperator> {
        check_grid(&self.grid, &other.grid)?;
        Ok(Self::from_kernel_unchecked(
            self.grid.clone(),
            &self.kernel + &other.kernel,
        ))
    }

    pub fn sub(&self, other: &CovOperator) -> Result<CovOperator> {
        check_grid(&self.grid, &other.grid)?;
        Ok(Self::from_kernel_unchecked(
            self.grid.clone(),
            &self.kernel - &other.kernel,
        ))
    }

    /// `‖self − other‖_p`.
    pub fn distance(&self, other: &CovOperator, p: SchattenP) -> Result<f64> {
        Ok(self.sub(other)?.schatten_norm(p))
    }

    /// `Σ_i c_i S_i` over operators sharing one grid.
    pub fn linear_combination(ops: &[&CovOperator], coefs: &[f64]) -> Result<CovOperator> {
        let first = ops
            .first()
            .ok_or_else(|| Error::Empty("linear combination of no operators".into()))?;
        if ops.len() != coefs.len() {
            return Err(Error::LengthMismatch {
                expected: ops.len(),
                got: coefs.len(),
            });
        }
        let d = first.dim();
        let mut k: DMatrix<f64> = DMatrix::zeros(d, d);
        for (op, &c) in ops.iter().zip(coefs) {
            check_grid(&first.grid, &op.grid)?;
            if c != 0.0 {
                k.zip_apply(&op.kernel, |a, b| *a += c * b);
            }
        }
        Ok(Self::from_kernel_unchecked(first.grid.clone(), k))
    }

    /// Rejects operators with an eigenvalue below `-PSD_TOL · λ_max`.
    pub fn check_psd(&self) -> Result<()> {
        let spec = self.spectrum();
        let max = spec.first().copied().unwrap_or(0.0).max(0.0);
        let min = spec.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL * max || (max == 0.0 && min < 0.0) {
            Err(Error::NotPsd { min, max })
        } else {
            Ok(())
        }
    }
}

/// `f ⊗ f`, the rank-one operator `φ ↦ ⟨f, φ⟩ f`.
pub fn tensor_square(f: &Curve) -> CovOperator {
    let v = f.vector();
    CovOperator::from_kernel_unchecked(f.grid().clone(), v * v.transpose())
}

pub fn schatten_norm(s: &CovOperator, p: SchattenP) -> f64 {
    s.schatten_norm(p)
}

/// Symmetric eigendecomposition with eigenvalues sorted decreasingly and each
/// eigenvector's largest-magnitude entry made positive.
pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let d = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let pivot = v.iter().fold(0.0f64, |m, &x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(col, &(v * sign));
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SVD;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(d: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(d).unwrap())
    }

    fn random_curve(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Curve {
        let v = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Curve::new(grid.clone(), v).unwrap()
    }

    fn diagonal_op(grid: &Arc<Grid>, spectrum: &[f64]) -> CovOperator {
        CovOperator::from_weighted(grid.clone(), DMatrix::from_diagonal(&DVector::from_row_slice(spectrum)))
            .unwrap()
    }

    #[test]
    fn inner_product_of_unit_constant() {
        let g = uniform(100);
        let one = Curve::new(g.clone(), vec![1.0; 100]).unwrap();
        assert!((inner_product(&one, &one).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sine_cosine_orthogonal() {
        let g = uniform(1000);
        let tau = std::f64::consts::TAU;
        let s = Curve::new(g.clone(), g.points().iter().map(|x| (tau * x).sin()).collect()).unwrap();
        let c = Curve::new(g.clone(), g.points().iter().map(|x| (tau * x).cos()).collect()).unwrap();
        assert!(inner_product(&s, &c).unwrap().abs() <= 1e-6);
    }

    #[test]
    fn inner_product_matches_summation_oracle() {
        let g = Arc::new(Grid::trapezoid((0..16).map(|i| (i as f64).powf(1.3)).collect()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_curve(&g, &mut rng);
        let h = random_curve(&g, &mut rng);
        let mut oracle = 0.0;
        for i in 0..16 {
            oracle += f.values()[i] * h.values()[i] * g.weights()[i];
        }
        assert_eq!(inner_product(&f, &h).unwrap(), oracle);
        assert_eq!(inner_product(&h, &f).unwrap(), inner_product(&f, &h).unwrap());
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = Curve::zeros(uniform(4));
        let b = Curve::zeros(uniform(5));
        assert!(matches!(inner_product(&a, &b), Err(Error::GridMismatch)));
        assert!(Curve::new(uniform(4), vec![1.0; 3]).is_err());
        assert!(Curve::new(uniform(2), vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn tensor_square_of_zero_is_zero() {
        let t = tensor_square(&Curve::zeros(uniform(5)));
        assert_eq!(t.schatten_norm(SchattenP::TRACE), 0.0);
        assert!(t.kernel().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tensor_square_trace_norm_is_squared_length() {
        let g = uniform(4);
        // ‖f‖² = 4 · 2 · 1/4 = 2
        let f = Curve::new(g, vec![2f64.sqrt(); 4]).unwrap();
        let t = tensor_square(&f);
        assert!((t.schatten_norm(SchattenP::TRACE) - 2.0).abs() < 1e-12);
        let spec = t.spectrum();
        assert!((spec[0] - 2.0).abs() < 1e-12);
        assert!(spec[1..].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn tensor_square_spectrum_matches_dense_eigensolver() {
        let g = Arc::new(Grid::trapezoid((0..8).map(|i| i as f64 * i as f64).collect()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_curve(&g, &mut rng);
        let sw: Vec<f64> = g.weights().iter().map(|w| w.sqrt()).collect();
        let u = DVector::from_fn(8, |i, _| f.values()[i] * sw[i]);
        let oracle = SymmetricEigen::new(&u * u.transpose()).eigenvalues;
        let mut oracle: Vec<f64> = oracle.iter().copied().collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in tensor_square(&f).spectrum().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((oracle[0] - f.norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn schatten_norms_of_explicit_spectrum() {
        let g = uniform(3);
        let s = diagonal_op(&g, &[3.0, 1.0, 0.0]);
        assert!((s.schatten_norm(SchattenP::TRACE) - 4.0).abs() < 1e-12);
        assert!((s.schatten_norm(SchattenP::HILBERT_SCHMIDT) - 10f64.sqrt()).abs() < 1e-12);
        assert!((s.schatten_norm(SchattenP::OPERATOR) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_trace_norm() {
        // kernel δ_ij / w_i has weighted matrix I.
        let g = uniform(4);
        let k = DMatrix::from_diagonal_element(4, 4, 4.0);
        let s = CovOperator::from_kernel(g, k).unwrap();
        assert!((s.schatten_norm(SchattenP::TRACE) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn schatten_norm_agrees_with_singular_values() {
        let g = uniform(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let m = &a + a.transpose();
        let s = CovOperator::from_weighted(g, m.clone()).unwrap();
        let sv = SVD::new(m, false, false).singular_values;
        for p in [1.0, 1.5, 2.0, 3.0] {
            let oracle = sv.iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p);
            let got = s.schatten_norm(SchattenP::new(p).unwrap());
            assert!((got - oracle).abs() <= 1e-10 * oracle, "p={p}");
        }
        let got = s.schatten_norm(SchattenP::OPERATOR);
        assert!((got - sv.max()).abs() <= 1e-10 * sv.max());
    }

    #[test]
    fn hilbert_schmidt_shortcut_matches_spectrum() {
        let g = Arc::new(Grid::trapezoid(vec![0.0, 0.2, 0.3, 0.7, 1.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let s = CovOperator::from_kernel(g, &a + a.transpose()).unwrap();
        let fast = s.schatten_norm(SchattenP::HILBERT_SCHMIDT);
        let slow = spectrum_norm(s.spectrum(), SchattenP::HILBERT_SCHMIDT);
        assert!((fast - slow).abs() < 1e-12 * slow);
    }

    #[test]
    fn p_below_one_rejected() {
        assert!(matches!(SchattenP::new(0.5), Err(Error::InvalidNorm(_))));
        assert!("0.9".parse::<SchattenP>().is_err());
        assert_eq!("inf".parse::<SchattenP>().unwrap(), SchattenP::OPERATOR);
        assert_eq!("2".parse::<SchattenP>().unwrap(), SchattenP::HILBERT_SCHMIDT);
        assert_eq!(SchattenP::OPERATOR.to_string(), "inf");
    }

    #[test]
    fn asymmetric_kernel_rejected() {
        let g = uniform(2);
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(CovOperator::from_kernel(g, k), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn psd_check() {
        let g = uniform(2);
        assert!(diagonal_op(&g, &[1.0, -1e-12]).check_psd().is_ok());
        assert!(diagonal_op(&g, &[1.0, -1e-3]).check_psd().is_err());
    }
}
