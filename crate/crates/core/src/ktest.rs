//! k-sample test for equality of covariance operators, a permutation-test
//! baseline, and Monte Carlo size / power curves.
//!
//! The statistic is `Σ_i ‖Σ̂⁽ⁱ⁾ − Σ̂‖_p` with `Σ̂ = N⁻¹ Σ_i n_i Σ̂⁽ⁱ⁾`.
//! The null is rejected when it exceeds
//!
//! ```text
//! c_R Σ_i ‖R_i‖_p + c_D [ sqrt(Σ_i σ²_pool / n_i) sqrt(2L) + (Σ_i σ_pool / n_i) L/3 ]
//! ```
//!
//! where `R_i = n_i⁻¹ Σ_j ε_ij ((f_j⁽ⁱ⁾ − f̄⁽ⁱ⁾)^{⊗2} − Σ̂)`, `L = −log(2α)`,
//! and `(c_R, c_D) = (1 − k^{−1/2}, (k+2)/(k+3))` for the tuned test or
//! `(1, 1)` otherwise.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concentration::{log_term, validate_alpha};
use crate::error::{Error, Result};
use crate::operator::{check_grid, interpolate, CovOperator, Grid, SchattenP};
use crate::rng::{derive_seed, rng_from_seed};
use crate::simulate::GaussianSampler;
use crate::stats::{
    draw_seed, empirical_covariance, pooled_weak_variance, rademacher_average_about,
    weak_variance_fourth_moment, weak_variance_gaussian, FunctionalSample, RademacherDraw,
};

/// Significance levels scanned by [`KSampleComponents::p_value`].
pub const ALPHA_GRID: [f64; 10] = [0.001, 0.005, 0.01, 0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5];

/// Estimator of each sample's weak standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeakVarianceRule {
    /// `√2 ‖Σ̂⁽ⁱ⁾‖_p`.
    #[default]
    Gaussian,
    /// Fourth-moment estimate, see [`weak_variance_fourth_moment`].
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSampleConfig {
    pub p_norm: SchattenP,
    pub alpha: f64,
    pub tuned: bool,
    pub weak_variance: WeakVarianceRule,
    /// Number of sign vectors averaged in the Rademacher term.
    pub rademacher_draws: usize,
    pub seed: u64,
}

impl Default for KSampleConfig {
    fn default() -> Self {
        KSampleConfig {
            p_norm: SchattenP::HILBERT_SCHMIDT,
            alpha: 0.05,
            tuned: true,
            weak_variance: WeakVarianceRule::Gaussian,
            rademacher_draws: 1,
            seed: 0,
        }
    }
}

/// `(c_R, c_D)` for `k` samples.
pub fn tuning_coefficients(k: usize, tuned: bool) -> (f64, f64) {
    if tuned {
        let k = k as f64;
        (1.0 - k.powf(-0.5), (k + 2.0) / (k + 3.0))
    } else {
        (1.0, 1.0)
    }
}

/// The α-independent parts of the test, so thresholds at several levels
/// share one pass over the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSampleComponents {
    pub counts: Vec<usize>,
    pub p_norm: SchattenP,
    pub statistic: f64,
    pub per_sample_norms: Vec<f64>,
    /// `Σ_i ‖R_i‖_p`, averaged over sign draws.
    pub rademacher_sum: f64,
    /// Pooled weak variance `σ²_pool`.
    pub sigma_pool_sq: f64,
}

impl KSampleComponents {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn deviation_term(&self, alpha: f64) -> Result<f64> {
        let l = log_term(alpha)?;
        let sigma = self.sigma_pool_sq.sqrt();
        let inv_n: f64 = self.counts.iter().map(|&n| 1.0 / n as f64).sum();
        Ok((self.sigma_pool_sq * inv_n).sqrt() * (2.0 * l).sqrt() + sigma * inv_n * l / 3.0)
    }

    pub fn threshold(&self, alpha: f64, tuned: bool) -> Result<f64> {
        let (c_r, c_d) = tuning_coefficients(self.k(), tuned);
        Ok(c_r * self.rademacher_sum + c_d * self.deviation_term(alpha)?)
    }

    pub fn rejects(&self, alpha: f64, tuned: bool) -> Result<bool> {
        Ok(self.statistic > self.threshold(alpha, tuned)?)
    }

    /// Smallest level on [`ALPHA_GRID`] at which the test rejects.
    pub fn p_value(&self, tuned: bool) -> Option<f64> {
        ALPHA_GRID
            .iter()
            .copied()
            .find(|&a| self.rejects(a, tuned).unwrap_or(false))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSampleResult {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub alpha: f64,
    pub p_norm: SchattenP,
    pub tuned: bool,
    pub per_sample_norms: Vec<f64>,
    pub rademacher_term: f64,
    pub sigma_pool: f64,
    /// Smallest grid level at which the test rejects, if any.
    pub p_value: Option<f64>,
    #[serde(rename = "elapsed_ms", with = "duration_ms")]
    pub elapsed: Duration,
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1e3))
    }
}

fn validate_samples(samples: &[FunctionalSample]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "k-sample test needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "sample {i} has {} curves; at least 2 are required",
                s.len()
            )));
        }
        check_grid(samples[0].grid(), s.grid())?;
    }
    Ok(())
}

pub fn k_sample_components(samples: &[FunctionalSample], config: &KSampleConfig) -> Result<KSampleComponents> {
    validate_samples(samples)?;
    if config.rademacher_draws == 0 {
        return Err(Error::InvalidArgument("rademacher_draws must be >= 1".into()));
    }
    let p = config.p_norm;
    let counts: Vec<usize> = samples.iter().map(|s| s.len()).collect();
    let total: usize = counts.iter().sum();
    let covs: Vec<CovOperator> = samples.iter().map(|s| empirical_covariance(s, true)).collect();
    let weights: Vec<f64> = counts.iter().map(|&n| n as f64 / total as f64).collect();
    let pooled = CovOperator::linear_combination(&covs.iter().collect::<Vec<_>>(), &weights)?;

    let mut per_sample_norms = Vec::with_capacity(covs.len());
    for c in &covs {
        per_sample_norms.push(c.distance(&pooled, p)?);
    }
    let statistic = per_sample_norms.iter().sum();

    let mut rademacher_sum = 0.0;
    for r in 0..config.rademacher_draws {
        let signs = RademacherDraw::sample(total, draw_seed(config.seed, r));
        let mut offset = 0;
        for s in samples {
            let draw = RademacherDraw::from_signs(signs.signs()[offset..offset + s.len()].to_vec())?;
            offset += s.len();
            rademacher_sum += rademacher_average_about(s, &draw, &pooled)?.schatten_norm(p);
        }
    }
    rademacher_sum /= config.rademacher_draws as f64;

    let sigmas = match config.weak_variance {
        WeakVarianceRule::Gaussian => covs.iter().map(|c| weak_variance_gaussian(c, p)).collect(),
        WeakVarianceRule::Empirical => samples
            .iter()
            .map(|s| weak_variance_fourth_moment(s, p))
            .collect::<Result<Vec<_>>>()?,
    };
    let sigma_pool_sq = pooled_weak_variance(&sigmas, &counts)?;

    Ok(KSampleComponents {
        counts,
        p_norm: p,
        statistic,
        per_sample_norms,
        rademacher_sum,
        sigma_pool_sq,
    })
}

pub fn k_sample_test(samples: &[FunctionalSample], config: &KSampleConfig) -> Result<KSampleResult> {
    validate_alpha(config.alpha)?;
    let start = Instant::now();
    let c = k_sample_components(samples, config)?;
    let threshold = c.threshold(config.alpha, config.tuned)?;
    let elapsed = start.elapsed();
    let (c_r, _) = tuning_coefficients(c.k(), config.tuned);
    Ok(KSampleResult {
        statistic: c.statistic,
        threshold,
        reject: c.statistic > threshold,
        alpha: config.alpha,
        p_norm: config.p_norm,
        tuned: config.tuned,
        rademacher_term: c_r * c.rademacher_sum,
        sigma_pool: c.sigma_pool_sq.sqrt(),
        p_value: c.p_value(config.tuned),
        per_sample_norms: c.per_sample_norms,
        elapsed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_perms: usize,
    #[serde(rename = "elapsed_ms", with = "duration_ms")]
    pub elapsed: Duration,
}

fn covariance_of_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let d = x.nrows();
    let n = idx.len() as f64;
    let mut sub = DMatrix::from_fn(d, idx.len(), |i, j| x[(i, idx[j])]);
    let mean = sub.column_mean();
    for mut col in sub.column_iter_mut() {
        col -= &mean;
    }
    &sub * sub.transpose() / n
}

fn split_distance(grid: &Arc<Grid>, x: &DMatrix<f64>, idx: &[usize], n_a: usize, p: SchattenP) -> f64 {
    let a = covariance_of_columns(x, &idx[..n_a]);
    let b = covariance_of_columns(x, &idx[n_a..]);
    CovOperator::from_kernel_unchecked(grid.clone(), a - b).schatten_norm(p)
}

/// Two-sample permutation test on `‖Σ̂_a − Σ̂_b‖_p`, with p-value
/// `(1 + #{permuted ≥ observed}) / (n_perms + 1)`.
pub fn permutation_test_two_sample(
    a: &FunctionalSample,
    b: &FunctionalSample,
    p: SchattenP,
    n_perms: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if n_perms == 0 {
        return Err(Error::InvalidArgument("n_perms must be >= 1".into()));
    }
    check_grid(a.grid(), b.grid())?;
    let start = Instant::now();
    let pooled = FunctionalSample::concat(&[a, b])?;
    let x = pooled.data_matrix();
    let grid = a.grid();
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    let observed = split_distance(grid, &x, &idx, a.len(), p);
    let mut rng = rng_from_seed(seed);
    let mut exceed = 0usize;
    for _ in 0..n_perms {
        idx.shuffle(&mut rng);
        if split_distance(grid, &x, &idx, a.len(), p) >= observed {
            exceed += 1;
        }
    }
    Ok(PermutationResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (n_perms + 1) as f64,
        n_perms,
        elapsed: start.elapsed(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    #[default]
    Concentration,
    Permutation,
}

impl std::str::FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "concentration" | "conc" => Ok(TestMethod::Concentration),
            "permutation" | "perm" => Ok(TestMethod::Permutation),
            other => Err(Error::InvalidArgument(format!("unknown test method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub n: usize,
    pub alpha: f64,
    pub p_norm: SchattenP,
    pub n_reps: usize,
    pub method: TestMethod,
    pub tuned: bool,
    pub n_perms: usize,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            n: 50,
            alpha: 0.05,
            p_norm: SchattenP::HILBERT_SCHMIDT,
            n_reps: 1000,
            method: TestMethod::Concentration,
            tuned: true,
            n_perms: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub gamma: f64,
    pub power: f64,
    /// Monte Carlo standard error `sqrt(power (1 − power) / n_reps)`.
    pub se: f64,
    pub mean_elapsed_ms: f64,
}

/// Binomial Monte Carlo standard error.
pub fn mc_se(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

fn two_sample_rejects(
    a: &FunctionalSample,
    b: &FunctionalSample,
    config: &PowerConfig,
    seed: u64,
) -> Result<(bool, Duration)> {
    match config.method {
        TestMethod::Concentration => {
            let cfg = KSampleConfig {
                p_norm: config.p_norm,
                alpha: config.alpha,
                tuned: config.tuned,
                seed,
                ..KSampleConfig::default()
            };
            let r = k_sample_test(&[a.clone(), b.clone()], &cfg)?;
            Ok((r.reject, r.elapsed))
        }
        TestMethod::Permutation => {
            let r = permutation_test_two_sample(a, b, config.p_norm, config.n_perms, seed)?;
            Ok((r.p_value <= config.alpha, r.elapsed))
        }
    }
}

/// Rejection rate of the two-sample test of `Σ⁽¹⁾` against each point
/// `interpolate(Σ⁽¹⁾, Σ⁽²⁾, γ)` of the Procrustes path.
///
/// Replication `r` uses seed `derive_seed(seed, [r])` for every `γ`, so the
/// curve is built from common random numbers. Output is independent of the
/// number of worker threads.
pub fn power_curve(
    sigma1: &CovOperator,
    sigma2: &CovOperator,
    gammas: &[f64],
    config: &PowerConfig,
) -> Result<Vec<PowerPoint>> {
    validate_alpha(config.alpha)?;
    if config.n < 2 {
        return Err(Error::InvalidArgument("power curve needs n >= 2".into()));
    }
    if config.n_reps == 0 {
        return Err(Error::InvalidArgument("n_reps must be >= 1".into()));
    }
    let base = GaussianSampler::new(sigma1)?;
    let mut out = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let alt = GaussianSampler::new(&interpolate(sigma1, sigma2, gamma)?)?;
        let reps = (0..config.n_reps)
            .into_par_iter()
            .map(|r| {
                let rs = derive_seed(config.seed, &[r as u64]);
                let a = base.sample(config.n, derive_seed(rs, &[0]))?;
                let b = alt.sample(config.n, derive_seed(rs, &[1]))?;
                two_sample_rejects(&a, &b, config, derive_seed(rs, &[2]))
            })
            .collect::<Result<Vec<_>>>()?;
        let rejections = reps.iter().filter(|(r, _)| *r).count();
        let elapsed: f64 = reps.iter().map(|(_, t)| t.as_secs_f64() * 1e3).sum();
        let power = rejections as f64 / config.n_reps as f64;
        out.push(PowerPoint {
            gamma,
            power,
            se: mc_se(power, config.n_reps),
            mean_elapsed_ms: elapsed / config.n_reps as f64,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub alpha: f64,
    pub size: f64,
    pub se: f64,
}

/// Empirical size of the k-sample test when all `k` samples of size `n`
/// are Gaussian with covariance `sigma`. Each replication is tested at
/// every level in `alphas`.
pub fn size_calibration(
    sigma: &CovOperator,
    k: usize,
    n: usize,
    alphas: &[f64],
    config: &KSampleConfig,
    n_reps: usize,
) -> Result<Vec<SizePoint>> {
    for &a in alphas {
        validate_alpha(a)?;
    }
    if n_reps == 0 {
        return Err(Error::InvalidArgument("n_reps must be >= 1".into()));
    }
    let sampler = GaussianSampler::new(sigma)?;
    let rejections = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let rs = derive_seed(config.seed, &[r as u64]);
            let samples = (0..k)
                .map(|i| sampler.sample(n, derive_seed(rs, &[i as u64])))
                .collect::<Result<Vec<_>>>()?;
            let cfg = KSampleConfig {
                seed: derive_seed(rs, &[k as u64]),
                ..*config
            };
            let c = k_sample_components(&samples, &cfg)?;
            alphas
                .iter()
                .map(|&a| c.rejects(a, config.tuned))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let size = rejections.iter().filter(|r| r[j]).count() as f64 / n_reps as f64;
            SizePoint {
                alpha,
                size,
                se: mc_se(size, n_reps),
            }
        })
        .collect())
}
