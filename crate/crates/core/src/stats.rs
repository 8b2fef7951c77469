//! Sample statistics of functional data: means, empirical covariance
//! operators, Rademacher averages and weak-variance estimators.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::operator::{check_grid, spectrum_norm, CovOperator, Curve, Grid, SchattenP};
use crate::rng::{derive_seed, rng_from_seed};

/// Largest sample for which all `2^n` sign vectors are enumerated.
pub const MAX_ENUMERATION: usize = 24;

/// i.i.d. curves on a common grid, optionally labelled.
#[derive(Clone, Debug)]
pub struct FunctionalSample {
    grid: Arc<Grid>,
    curves: Vec<Curve>,
    label: Option<String>,
}

impl FunctionalSample {
    pub fn new(curves: Vec<Curve>) -> Result<Self> {
        let grid = curves
            .first()
            .ok_or_else(|| Error::Empty("functional sample has no curves".into()))?
            .grid()
            .clone();
        for c in &curves[1..] {
            check_grid(&grid, c.grid())?;
        }
        Ok(FunctionalSample {
            grid,
            curves,
            label: None,
        })
    }

    pub fn from_rows(grid: Arc<Grid>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let curves = rows
            .into_iter()
            .map(|r| Curve::new(grid.clone(), r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(curves)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn scale(&self, c: f64) -> Self {
        FunctionalSample {
            grid: self.grid.clone(),
            curves: self.curves.iter().map(|f| f.scale(c)).collect(),
            label: self.label.clone(),
        }
    }

    /// Curves at the given indices, keeping the label.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let curves = idx
            .iter()
            .map(|&i| {
                self.curves.get(i).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("curve index {i} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut s = Self::new(curves)?;
        s.label = self.label.clone();
        Ok(s)
    }

    /// Concatenation of samples on a common grid.
    pub fn concat(samples: &[&FunctionalSample]) -> Result<Self> {
        let curves = samples
            .iter()
            .flat_map(|s| s.curves.iter().cloned())
            .collect();
        Self::new(curves)
    }

    /// `d × n` matrix with one curve per column.
    pub(crate) fn data_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.curves.iter().map(|c| c.vector().clone()).collect::<Vec<_>>())
    }

    fn centered_matrix(&self, center: bool) -> DMatrix<f64> {
        let mut x = self.data_matrix();
        if center {
            let mean = x.column_mean();
            for mut col in x.column_iter_mut() {
                col -= &mean;
            }
        }
        x
    }
}

/// Covariance operators with the number of curves behind each, optionally labelled.
#[derive(Clone, Debug)]
pub struct OperatorSample {
    operators: Vec<CovOperator>,
    ranks: Vec<usize>,
    label: Option<String>,
}

impl OperatorSample {
    pub fn new(operators: Vec<CovOperator>, ranks: Vec<usize>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::Empty("operator sample has no operators".into()))?;
        if ranks.len() != operators.len() {
            return Err(Error::LengthMismatch {
                expected: operators.len(),
                got: ranks.len(),
            });
        }
        if ranks.contains(&0) {
            return Err(Error::InvalidArgument("ranks must be positive".into()));
        }
        for op in &operators[1..] {
            check_grid(first.grid(), op.grid())?;
        }
        Ok(OperatorSample {
            operators,
            ranks,
            label: None,
        })
    }

    /// Splits `sample` into consecutive groups of `group_size` curves and
    /// turns each group into one operator. Groups are summarized by their
    /// second moment `m⁻¹ Σ f ⊗ f` (rank `m` for mean-zero data) unless
    /// `center` is set, in which case the centered covariance is used.
    pub fn from_curve_groups(sample: &FunctionalSample, group_size: usize, center: bool) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::InvalidArgument("group size must be positive".into()));
        }
        if !sample.len().is_multiple_of(group_size) {
            return Err(Error::InvalidArgument(format!(
                "{} curves do not split into groups of {group_size}",
                sample.len()
            )));
        }
        let mut ops = Vec::with_capacity(sample.len() / group_size);
        for chunk in sample.curves.chunks(group_size) {
            let g = FunctionalSample::new(chunk.to_vec())?;
            ops.push(empirical_covariance(&g, center));
        }
        let n = ops.len();
        let mut out = Self::new(ops, vec![group_size; n])?;
        out.label = sample.label.clone();
        Ok(out)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn operators(&self) -> &[CovOperator] {
        &self.operators
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.operators[0].grid()
    }

    pub fn mean_operator(&self) -> CovOperator {
        let w = vec![1.0; self.len()];
        weighted_mean_operator(&self.operators, &w).expect("nonempty, weights positive")
    }
}

/// Independent ±1 signs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RademacherDraw {
    signs: Vec<i8>,
    seed: Option<u64>,
}

impl RademacherDraw {
    pub fn sample(n: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let signs = (0..n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        RademacherDraw {
            signs,
            seed: Some(seed),
        }
    }

    pub fn from_signs(signs: Vec<i8>) -> Result<Self> {
        if let Some(s) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!("Rademacher sign must be ±1, got {s}")));
        }
        Ok(RademacherDraw { signs, seed: None })
    }

    pub fn all_positive(n: usize) -> Self {
        RademacherDraw {
            signs: vec![1; n],
            seed: None,
        }
    }

    /// All `2^n` sign vectors, bit `i` of the counter giving sign `i`.
    pub fn enumerate(n: usize) -> impl Iterator<Item = RademacherDraw> {
        assert!(n <= MAX_ENUMERATION, "refusing to enumerate 2^{n} sign vectors");
        (0u64..1 << n).map(move |mask| RademacherDraw {
            signs: (0..n)
                .map(|i| if mask >> i & 1 == 1 { -1 } else { 1 })
                .collect(),
            seed: None,
        })
    }

    pub fn negated(&self) -> Self {
        RademacherDraw {
            signs: self.signs.iter().map(|s| -s).collect(),
            seed: None,
        }
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    fn sum(&self) -> f64 {
        self.signs.iter().map(|&s| s as f64).sum()
    }
}

/// Seed of the `i`-th draw in a multi-draw estimate; draw 0 uses `seed` itself.
pub fn draw_seed(seed: u64, i: usize) -> u64 {
    if i == 0 {
        seed
    } else {
        derive_seed(seed, &[i as u64])
    }
}

pub fn sample_mean(s: &FunctionalSample) -> Curve {
    let n = s.len() as f64;
    let mut acc = DVector::zeros(s.grid.len());
    for c in &s.curves {
        acc += c.vector();
    }
    Curve::from_vector(s.grid.clone(), acc / n)
}

/// `n⁻¹ Σ (f_i − f̄) ⊗ (f_i − f̄)` when `center`, `n⁻¹ Σ f_i ⊗ f_i` otherwise.
pub fn empirical_covariance(s: &FunctionalSample, center: bool) -> CovOperator {
    let x = s.centered_matrix(center);
    let k = &x * x.transpose() / s.len() as f64;
    CovOperator::from_kernel_unchecked(s.grid.clone(), k)
}

/// `R_n = n⁻¹ Σ ε_i { (f_i − f̄)^{⊗2} − Σ̂ }`.
pub fn rademacher_average(s: &FunctionalSample, draw: &RademacherDraw) -> Result<CovOperator> {
    rademacher_average_impl(s, draw, None)
}

/// `n⁻¹ Σ ε_i { (f_i − f̄)^{⊗2} − C }` for an arbitrary centre `C`.
pub fn rademacher_average_about(
    s: &FunctionalSample,
    draw: &RademacherDraw,
    center: &CovOperator,
) -> Result<CovOperator> {
    check_grid(s.grid(), center.grid())?;
    rademacher_average_impl(s, draw, Some(center))
}

fn rademacher_average_impl(
    s: &FunctionalSample,
    draw: &RademacherDraw,
    center: Option<&CovOperator>,
) -> Result<CovOperator> {
    if draw.len() != s.len() {
        return Err(Error::LengthMismatch {
            expected: s.len(),
            got: draw.len(),
        });
    }
    let n = s.len() as f64;
    let x = s.centered_matrix(true);
    let mut xe = x.clone();
    for (mut col, &e) in xe.column_iter_mut().zip(draw.signs()) {
        if e < 0 {
            col.neg_mut();
        }
    }
    let mut k = xe * x.transpose();
    let total = draw.sum();
    if total != 0.0 {
        match center {
            Some(c) => k.zip_apply(c.kernel(), |a, b| *a -= total * b),
            None => {
                let sigma_hat = &x * x.transpose() / n;
                k.zip_apply(&sigma_hat, |a, b| *a -= total * b);
            }
        }
    }
    Ok(CovOperator::from_kernel_unchecked(s.grid.clone(), k / n))
}

/// Average of `‖R_n‖_p` over `n_draws` independent sign vectors.
pub fn rademacher_norm_estimate(
    s: &FunctionalSample,
    p: SchattenP,
    n_draws: usize,
    seed: u64,
) -> Result<f64> {
    if n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be at least 1".into()));
    }
    let mut total = 0.0;
    for i in 0..n_draws {
        let draw = RademacherDraw::sample(s.len(), draw_seed(seed, i));
        total += rademacher_average(s, &draw)?.schatten_norm(p);
    }
    Ok(total / n_draws as f64)
}

/// `E_ε ‖R_n‖_p` computed exactly by enumerating every sign vector.
pub fn rademacher_norm_exhaustive(s: &FunctionalSample, p: SchattenP) -> Result<f64> {
    if s.len() > MAX_ENUMERATION {
        return Err(Error::InvalidArgument(format!(
            "exhaustive enumeration limited to n <= {MAX_ENUMERATION}, got {}",
            s.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for draw in RademacherDraw::enumerate(s.len()) {
        total += rademacher_average(s, &draw)?.schatten_norm(p);
        count += 1;
    }
    Ok(total / count as f64)
}

/// Curve-level Rademacher average `n⁻¹ Σ ε_i (f_i − f̄)`.
pub fn rademacher_curve_average(s: &FunctionalSample, draw: &RademacherDraw) -> Result<Curve> {
    if draw.len() != s.len() {
        return Err(Error::LengthMismatch {
            expected: s.len(),
            got: draw.len(),
        });
    }
    let mean = sample_mean(s);
    let mut acc = DVector::zeros(s.grid.len());
    for (c, &e) in s.curves.iter().zip(draw.signs()) {
        acc += (c.vector() - mean.vector()) * e as f64;
    }
    Ok(Curve::from_vector(s.grid.clone(), acc / s.len() as f64))
}

/// `Σ_i w_i S_i / Σ_i w_i`.
pub fn weighted_mean_operator(ops: &[CovOperator], weights: &[f64]) -> Result<CovOperator> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("weights must have a positive sum".into()));
    }
    let refs: Vec<&CovOperator> = ops.iter().collect();
    let coefs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    CovOperator::linear_combination(&refs, &coefs)
}

/// Weighted operator Rademacher sum `Σ_i w_i ε_i (S_i − C) / Σ_i w_i`.
pub fn weighted_rademacher_operator(
    ops: &[CovOperator],
    weights: &[f64],
    center: &CovOperator,
    signs: &[i8],
) -> Result<CovOperator> {
    if ops.len() != weights.len() || ops.len() != signs.len() {
        return Err(Error::LengthMismatch {
            expected: ops.len(),
            got: weights.len().min(signs.len()),
        });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("weights must have a positive sum".into()));
    }
    let d = center.dim();
    let mut k: DMatrix<f64> = DMatrix::zeros(d, d);
    let mut signed_weight = 0.0;
    for ((op, &w), &e) in ops.iter().zip(weights).zip(signs) {
        check_grid(center.grid(), op.grid())?;
        let c = w * e as f64;
        if c != 0.0 {
            k.zip_apply(op.kernel(), |a, b| *a += c * b);
            signed_weight += c;
        }
    }
    k.zip_apply(center.kernel(), |a, b| *a += -signed_weight * b);
    Ok(CovOperator::from_kernel_unchecked(center.grid().clone(), k / total))
}

/// Gaussian bound on the weak standard deviation: `√2 ‖Σ‖_p`.
pub fn weak_variance_gaussian(s: &CovOperator, p: SchattenP) -> f64 {
    std::f64::consts::SQRT_2 * s.schatten_norm(p)
}

/// Empirical weak standard deviation `σ̂ = ‖n⁻¹ Σ f_i^{⊗2} − f̄^{⊗2}‖_p^{1/2}`.
///
/// Zero for a degenerate sample; callers dividing by it must guard.
pub fn weak_variance_empirical(s: &FunctionalSample, p: SchattenP) -> Result<f64> {
    if s.len() < 2 {
        return Err(Error::InvalidArgument(
            "empirical weak variance needs at least 2 curves".into(),
        ));
    }
    Ok(empirical_covariance(s, true).schatten_norm(p).sqrt())
}

/// Operator-level weak standard deviation from fourth moments:
/// `σ̂ = ‖n⁻¹ Σ T_i ⊗ T_i − Σ̂ ⊗ Σ̂‖_p^{1/2}` with `T_i = (f_i − f̄)^{⊗2}`,
/// the norm taken on the `d² × d²` covariance of the vectorised `T_i`.
///
/// Scales like `‖Σ̂‖_p`, so it can replace the Gaussian rule
/// `√2 ‖Σ̂‖_p` for non-Gaussian data.
pub fn weak_variance_fourth_moment(s: &FunctionalSample, p: SchattenP) -> Result<f64> {
    if s.len() < 2 {
        return Err(Error::InvalidArgument(
            "fourth-moment weak variance needs at least 2 curves".into(),
        ));
    }
    let n = s.len() as f64;
    let d = s.grid.len();
    let sw = s.grid.sqrt_weights();
    let mut x = s.centered_matrix(true);
    for (i, mut row) in x.row_iter_mut().enumerate() {
        row *= sw[i];
    }
    let y = DMatrix::from_fn(d * d, s.len(), |r, j| x[(r / d, j)] * x[(r % d, j)]);
    let mean = y.column_mean();
    let c = (&y * y.transpose()) / n - &mean * mean.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let spectrum = c.symmetric_eigenvalues();
    Ok(spectrum_norm(spectrum.as_slice(), p).sqrt())
}

/// Pooled weak variance `σ²_pool = N⁻¹ Σ n_i σ_i²` (squared scale).
pub fn pooled_weak_variance(sigmas: &[f64], counts: &[usize]) -> Result<f64> {
    if sigmas.is_empty() {
        return Err(Error::Empty("no weak variances to pool".into()));
    }
    if sigmas.len() != counts.len() {
        return Err(Error::LengthMismatch {
            expected: sigmas.len(),
            got: counts.len(),
        });
    }
    if counts.contains(&0) {
        return Err(Error::InvalidArgument("sample counts must be positive".into()));
    }
    let total: usize = counts.iter().sum();
    let acc: f64 = sigmas
        .iter()
        .zip(counts)
        .map(|(s, &n)| n as f64 * s * s)
        .sum();
    Ok(acc / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(d: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(d).unwrap())
    }

    fn random_sample(d: usize, n: usize, seed: u64) -> FunctionalSample {
        let g = grid(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        FunctionalSample::from_rows(g, rows).unwrap()
    }

    #[test]
    fn mean_of_single_curve() {
        let s = random_sample(5, 1, 1);
        assert_eq!(sample_mean(&s).values(), s.curves()[0].values());
    }

    #[test]
    fn mean_of_symmetric_pair_is_zero() {
        let s = random_sample(5, 1, 2);
        let f = s.curves()[0].clone();
        let pair = FunctionalSample::new(vec![f.clone(), f.scale(-1.0)]).unwrap();
        assert!(sample_mean(&pair).values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mean_matches_summation_oracle() {
        let s = random_sample(8, 5, 3);
        let m = sample_mean(&s);
        for j in 0..8 {
            let mut acc = 0.0;
            for c in s.curves() {
                acc += c.values()[j];
            }
            assert!((m.values()[j] - acc / 5.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn covariance_of_single_curve_centered_is_zero() {
        let s = random_sample(4, 1, 4);
        let c = empirical_covariance(&s, true);
        assert!(c.kernel().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn covariance_of_symmetric_pair_is_tensor_square() {
        let s = random_sample(6, 1, 5);
        let f = s.curves()[0].clone();
        let pair = FunctionalSample::new(vec![f.clone(), f.scale(-1.0)]).unwrap();
        let c = empirical_covariance(&pair, true);
        let t = crate::operator::tensor_square(&f);
        assert!((c.kernel() - t.kernel()).amax() < 1e-15);
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(FunctionalSample::new(vec![]).is_err());
        assert!(OperatorSample::new(vec![], vec![]).is_err());
    }

    #[test]
    fn rademacher_all_positive_is_zero() {
        let s = random_sample(5, 7, 6);
        let r = rademacher_average(&s, &RademacherDraw::all_positive(7)).unwrap();
        assert!(r.kernel().amax() < 1e-15);
    }

    #[test]
    fn rademacher_single_curve_is_zero() {
        let s = random_sample(5, 1, 7);
        let r = rademacher_average(&s, &RademacherDraw::sample(1, 3)).unwrap();
        assert!(r.kernel().amax() == 0.0);
    }

    #[test]
    fn rademacher_length_mismatch() {
        let s = random_sample(5, 4, 8);
        assert!(rademacher_average(&s, &RademacherDraw::sample(3, 3)).is_err());
    }

    #[test]
    fn rademacher_sign_flip_preserves_norm() {
        let s = random_sample(6, 9, 9);
        let draw = RademacherDraw::sample(9, 11);
        let a = rademacher_average(&s, &draw).unwrap();
        let b = rademacher_average(&s, &draw.negated()).unwrap();
        for p in [SchattenP::TRACE, SchattenP::HILBERT_SCHMIDT, SchattenP::OPERATOR] {
            assert!((a.schatten_norm(p) - b.schatten_norm(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_curves_give_zero_rademacher_norm() {
        let s = random_sample(5, 1, 10);
        let f = s.curves()[0].clone();
        let same = FunctionalSample::new(vec![f; 6]).unwrap();
        assert_eq!(rademacher_norm_estimate(&same, SchattenP::TRACE, 5, 1).unwrap(), 0.0);
    }

    #[test]
    fn single_draw_estimate_is_one_average() {
        let s = random_sample(5, 8, 11);
        let est = rademacher_norm_estimate(&s, SchattenP::TRACE, 1, 77).unwrap();
        let direct = rademacher_average(&s, &RademacherDraw::sample(8, 77))
            .unwrap()
            .schatten_norm(SchattenP::TRACE);
        assert_eq!(est, direct);
    }

    #[test]
    fn enumeration_covers_all_sign_vectors() {
        let all: Vec<_> = RademacherDraw::enumerate(3).collect();
        assert_eq!(all.len(), 8);
        let mut set: Vec<Vec<i8>> = all.iter().map(|d| d.signs().to_vec()).collect();
        set.sort();
        set.dedup();
        assert_eq!(set.len(), 8);
        assert!(RademacherDraw::from_signs(vec![1, 0]).is_err());
    }

    #[test]
    fn gaussian_weak_variance_examples() {
        let g = grid(4);
        let id = CovOperator::from_weighted(g.clone(), DMatrix::identity(4, 4)).unwrap();
        let w = weak_variance_gaussian(&id, SchattenP::HILBERT_SCHMIDT);
        assert!((w - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(weak_variance_gaussian(&CovOperator::zeros(g), SchattenP::TRACE), 0.0);
    }

    #[test]
    fn empirical_weak_variance_examples() {
        let s = random_sample(6, 1, 12);
        let f = s.curves()[0].clone();
        let same = FunctionalSample::new(vec![f.clone(); 4]).unwrap();
        assert_eq!(weak_variance_empirical(&same, SchattenP::TRACE).unwrap(), 0.0);
        let pair = FunctionalSample::new(vec![f.clone(), f.scale(-1.0)]).unwrap();
        for p in [SchattenP::TRACE, SchattenP::HILBERT_SCHMIDT, SchattenP::OPERATOR] {
            let w = weak_variance_empirical(&pair, p).unwrap();
            assert!((w - f.norm()).abs() < 1e-12);
        }
        assert!(weak_variance_empirical(&s, SchattenP::TRACE).is_err());
    }

    #[test]
    fn empirical_weak_variance_matches_direct_formula() {
        let s = random_sample(7, 10, 13);
        let n = s.len() as f64;
        let mean = sample_mean(&s);
        let mut k = DMatrix::zeros(7, 7);
        for c in s.curves() {
            for i in 0..7 {
                for j in 0..7 {
                    k[(i, j)] += c.values()[i] * c.values()[j] / n;
                }
            }
        }
        for i in 0..7 {
            for j in 0..7 {
                k[(i, j)] -= mean.values()[i] * mean.values()[j];
            }
        }
        let oracle = CovOperator::from_kernel(s.grid().clone(), k)
            .unwrap()
            .schatten_norm(SchattenP::TRACE)
            .sqrt();
        let got = weak_variance_empirical(&s, SchattenP::TRACE).unwrap();
        assert!((got - oracle).abs() <= 1e-12);
    }

    #[test]
    fn weak_variance_permutation_invariant() {
        let s = random_sample(6, 9, 14);
        let idx: Vec<usize> = (0..9).rev().collect();
        let t = s.subset(&idx).unwrap();
        let a = weak_variance_empirical(&s, SchattenP::TRACE).unwrap();
        let b = weak_variance_empirical(&t, SchattenP::TRACE).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn pooled_variance_examples() {
        assert!((pooled_weak_variance(&[2.5; 3], &[4, 7, 9]).unwrap().sqrt() - 2.5).abs() < 1e-12);
        assert_eq!(pooled_weak_variance(&[1.0, 3.0], &[1, 1]).unwrap(), 5.0);
        assert!(pooled_weak_variance(&[], &[]).is_err());
        assert!(pooled_weak_variance(&[1.0], &[0]).is_err());
    }

    #[test]
    fn pooled_variance_matches_weighted_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let sigmas: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..3.0)).collect();
        let counts: Vec<usize> = (0..6).map(|_| rng.random_range(1..50)).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..6 {
            num += counts[i] as f64 * sigmas[i] * sigmas[i];
            den += counts[i] as f64;
        }
        assert!((pooled_weak_variance(&sigmas, &counts).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn curve_groups_form_second_moments() {
        let s = random_sample(4, 6, 16);
        let ops = OperatorSample::from_curve_groups(&s, 3, false).unwrap();
        assert_eq!(ops.len(), 2);
        assert_eq!(ops.ranks(), &[3, 3]);
        let first = FunctionalSample::new(s.curves()[..3].to_vec()).unwrap();
        let k = empirical_covariance(&first, false);
        assert!((ops.operators()[0].kernel() - k.kernel()).amax() < 1e-15);
        assert!(OperatorSample::from_curve_groups(&s, 4, false).is_err());
    }

    #[test]
    fn rademacher_about_own_covariance_matches_default() {
        let s = random_sample(5, 9, 17);
        let draw = RademacherDraw::sample(9, 3);
        let own = empirical_covariance(&s, true);
        let a = rademacher_average(&s, &draw).unwrap();
        let b = rademacher_average_about(&s, &draw, &own).unwrap();
        assert!((a.kernel() - b.kernel()).amax() < 1e-14);
        let other = CovOperator::zeros(grid(4));
        assert!(rademacher_average_about(&s, &draw, &other).is_err());
    }

    #[test]
    fn fourth_moment_weak_variance_oracle() {
        let s = random_sample(3, 7, 18);
        let n = 7.0;
        let sw: Vec<f64> = s.grid().weights().iter().map(|w| w.sqrt()).collect();
        let mean = sample_mean(&s);
        let x: Vec<Vec<f64>> = s
            .curves()
            .iter()
            .map(|c| (0..3).map(|a| (c.values()[a] - mean.values()[a]) * sw[a]).collect())
            .collect();
        let mut c = DMatrix::zeros(9, 9);
        let mut m = vec![0.0; 9];
        for xi in &x {
            for r in 0..9 {
                m[r] += xi[r / 3] * xi[r % 3] / n;
            }
        }
        for r in 0..9 {
            for q in 0..9 {
                let mut acc = 0.0;
                for xi in &x {
                    acc += xi[r / 3] * xi[r % 3] * xi[q / 3] * xi[q % 3];
                }
                c[(r, q)] = acc / n - m[r] * m[q];
            }
        }
        let expected = c.symmetric_eigenvalues().iter().map(|l| l.abs()).sum::<f64>().sqrt();
        let got = weak_variance_fourth_moment(&s, SchattenP::TRACE).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn fourth_moment_weak_variance_scaling_and_degenerate() {
        let s = random_sample(4, 10, 19);
        let a = weak_variance_fourth_moment(&s, SchattenP::HILBERT_SCHMIDT).unwrap();
        let b = weak_variance_fourth_moment(&s.scale(3.0), SchattenP::HILBERT_SCHMIDT).unwrap();
        assert!((b - 9.0 * a).abs() < 1e-10 * b);
        let g = grid(3);
        let f = Curve::new(g.clone(), vec![1.0, -2.0, 0.5]).unwrap();
        let pair = FunctionalSample::new(vec![f.clone(), f.scale(-1.0)]).unwrap();
        assert!(weak_variance_fourth_moment(&pair, SchattenP::TRACE).unwrap() < 1e-7);
        assert!(weak_variance_fourth_moment(&FunctionalSample::new(vec![f]).unwrap(), SchattenP::TRACE).is_err());
    }
}
