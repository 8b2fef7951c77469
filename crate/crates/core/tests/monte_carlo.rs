//! Monte Carlo checks of samplers, estimators and test calibration.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use covconc::cluster::init_state;
use covconc::harness::{compute_records, ClassificationSpec, CoverageSpec, Experiment, ExperimentConfig};
use covconc::ktest::{k_sample_test, permutation_test_two_sample, KSampleConfig};
use covconc::rng::{derive_seed, rng_from_seed};
use covconc::simulate::{random_covariance, sample_gaussian, DecaySpec, GaussianSampler};
use covconc::stats::{draw_seed, empirical_covariance, rademacher_average, rademacher_norm_exhaustive};
use covconc::{CovOperator, FunctionalSample, Grid, RademacherDraw, SchattenP};

fn grid(d: usize) -> Arc<Grid> {
    Arc::new(Grid::uniform(d).unwrap())
}

fn operator(d: usize, beta: f64, seed: u64) -> CovOperator {
    random_covariance(&DecaySpec::new(d, beta), grid(d), seed).unwrap()
}

fn relative_hs_error(x: &FunctionalSample, s: &CovOperator) -> f64 {
    let hs = SchattenP::HILBERT_SCHMIDT;
    empirical_covariance(x, false).distance(s, hs).unwrap() / s.schatten_norm(hs)
}

#[test]
fn gaussian_fourth_moments_follow_isserlis() {
    let d = 6;
    let s = operator(d, 1.0, 1);
    let k = s.kernel();
    let n = 100_000;
    let x = sample_gaussian(&s, n, 2).unwrap();
    let rows: Vec<&[f64]> = x.curves().iter().map(|c| c.values()).collect();
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in a..d {
            for c in b..d {
                for e in c..d {
                    let (mut m1, mut m2) = (0.0, 0.0);
                    for r in &rows {
                        let v = r[a] * r[b] * r[c] * r[e];
                        m1 += v;
                        m2 += v * v;
                    }
                    let mean = m1 / n as f64;
                    let se = ((m2 / n as f64 - mean * mean) / n as f64).sqrt();
                    let deviation = mean - k[(a, b)] * k[(c, e)];
                    let isserlis = k[(a, c)] * k[(b, e)] + k[(a, e)] * k[(b, c)];
                    worst = worst.max((deviation - isserlis).abs() / se);
                }
            }
        }
    }
    assert!(worst < 5.0, "largest deviation {worst:.2} standard errors");
}

#[test]
fn rademacher_expectation_matches_monte_carlo() {
    let s = operator(5, 1.0, 3);
    let x = sample_gaussian(&s, 10, 4).unwrap();
    let exact = rademacher_norm_exhaustive(&x, SchattenP::TRACE).unwrap();
    let draws = 100_000;
    let values: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let draw = RademacherDraw::sample(10, draw_seed(5, i));
            rademacher_average(&x, &draw).unwrap().schatten_norm(SchattenP::TRACE)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / draws as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
    let se = sd / (draws as f64).sqrt();
    assert!((mean - exact).abs() <= 3.0 * se, "mc {mean} exact {exact} se {se}");

    let x12 = sample_gaussian(&s, 12, 6).unwrap();
    let exact12 = rademacher_norm_exhaustive(&x12, SchattenP::TRACE).unwrap();
    let sampled: Vec<f64> = (0..4096)
        .map(|i| {
            let draw = RademacherDraw::sample(12, draw_seed(7, i));
            rademacher_average(&x12, &draw).unwrap().schatten_norm(SchattenP::TRACE)
        })
        .collect();
    let m = sampled.iter().sum::<f64>() / 4096.0;
    let sd = (sampled.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4095.0).sqrt();
    assert!((m - exact12).abs() <= 2.0 * sd / 64.0, "sampled {m} exact {exact12}");
}

#[test]
fn confidence_set_covers_true_covariance() {
    let records = compute_records(&ExperimentConfig::new("coverage", 0, Experiment::Coverage(CoverageSpec::default()))).unwrap();
    assert!(records[0].value >= 0.95, "coverage {}", records[0].value);
}

#[test]
fn gaussian_sampler_is_consistent() {
    let s = operator(6, 2.0, 8);
    let sampler = GaussianSampler::new(&s).unwrap();
    let errors = |n: usize| -> Vec<f64> {
        (0..40u64)
            .into_par_iter()
            .map(|r| relative_hs_error(&sampler.sample(n, derive_seed(9, &[n as u64, r])).unwrap(), &s))
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (e2, e3, e4) = (errors(100), errors(1000), errors(10_000));
    assert!(mean(&e2) > mean(&e3) && mean(&e3) > mean(&e4));
    let good = e4.iter().filter(|&&e| e <= 0.1).count();
    assert!(good >= 38, "{good}/40 seeds within 0.1");
}

#[test]
fn eigenbasis_coordinates_are_uncorrelated() {
    let d = 8;
    let s = operator(d, 1.0, 10);
    let n = 20_000;
    let x = sample_gaussian(&s, n, 11).unwrap();
    let w: Vec<f64> = x.grid().weights().iter().map(|w| w.sqrt()).collect();
    let eig = SymmetricEigen::new(s.weighted_matrix());
    let coords = DMatrix::from_fn(n, d, |i, m| {
        let f = x.curves()[i].values();
        (0..d).map(|t| w[t] * f[t] * eig.eigenvectors[(t, m)]).sum::<f64>()
    });
    let cov = coords.transpose() * &coords / n as f64;
    for a in 0..d {
        for b in 0..a {
            let corr = cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt();
            assert!(corr.abs() <= 4.0 / (n as f64).sqrt(), "corr({a}, {b}) = {corr}");
        }
    }
}

#[test]
fn t_process_with_huge_nu_looks_gaussian() {
    let s = operator(16, 4.0, 12);
    let sampler = GaussianSampler::new(&s).unwrap();
    let accepted = (0..200u64)
        .into_par_iter()
        .filter(|&r| {
            let rs = derive_seed(13, &[r]);
            let t = sampler.sample_t(1e6, 50, derive_seed(rs, &[0])).unwrap();
            let g = sampler.sample(50, derive_seed(rs, &[1])).unwrap();
            let config = KSampleConfig {
                seed: derive_seed(rs, &[2]),
                ..KSampleConfig::default()
            };
            !k_sample_test(&[t, g], &config).unwrap().reject
        })
        .count();
    assert!(accepted >= 180, "accepted {accepted}/200");
}

#[test]
fn t_process_covariance_is_consistent() {
    let s = operator(6, 2.0, 14);
    let sampler = GaussianSampler::new(&s).unwrap();
    let errors: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|r| relative_hs_error(&sampler.sample_t(6.0, 50_000, derive_seed(15, &[r])).unwrap(), &s))
        .collect();
    let good = errors.iter().filter(|&&e| e <= 0.1).count();
    assert!(good >= 19, "{good}/20 seeds within 0.1: {errors:?}");
}

#[test]
fn permutation_test_is_calibrated_under_the_null() {
    let s = operator(8, 2.0, 16);
    let sampler = GaussianSampler::new(&s).unwrap();
    let rejections = (0..500u64)
        .into_par_iter()
        .filter(|&r| {
            let rs = derive_seed(17, &[r]);
            let pool = sampler.sample(50, derive_seed(rs, &[0])).unwrap();
            let mut idx: Vec<usize> = (0..50).collect();
            idx.shuffle(&mut rng_from_seed(derive_seed(rs, &[1])));
            let a = pool.subset(&idx[..25]).unwrap();
            let b = pool.subset(&idx[25..]).unwrap();
            let p = permutation_test_two_sample(&a, &b, SchattenP::HILBERT_SCHMIDT, 100, derive_seed(rs, &[2])).unwrap();
            p.p_value <= 0.05
        })
        .count();
    let rate = rejections as f64 / 500.0;
    assert!((0.02..=0.09).contains(&rate), "rejection rate {rate}");
}

#[test]
fn dirichlet_initialisation_is_symmetric() {
    let n = 10_000;
    let k = 3;
    let s = init_state(n, k, 18).unwrap();
    for j in 0..k {
        let col = s.rho().column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!((mean - 1.0 / k as f64).abs() <= 3.0 * se, "column {j}: {mean} ± {se}");
    }
}

#[test]
fn trinary_classification_accuracy() {
    let spec = ClassificationSpec {
        classes: 3,
        group_sizes: vec![16],
        ..ClassificationSpec::default()
    };
    let records = compute_records(&ExperimentConfig::new("trinary", 0, Experiment::Classification(spec))).unwrap();
    assert!(records[0].value >= 0.88, "accuracy {}", records[0].value);
}
