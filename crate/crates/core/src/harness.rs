//! Experiment orchestration and result persistence.
//!
//! An [`ExperimentConfig`] names one of the desk-scale experiments and its
//! parameters. [`run_experiment`] computes a list of [`ResultRecord`]s and,
//! when an output directory is set, writes them as `<id>.jsonl` and a
//! plot-ready `<id>.csv`.
//!
//! Seeds: operators are drawn from `derive_seed(seed, [0, ..])` and Monte
//! Carlo replications from `derive_seed(seed, [1, ..])`, so changing the
//! replication count never changes the operators. Records are produced in
//! a fixed order and never depend on the thread count. Timings are omitted
//! unless `record_timing` is set, which keeps result files byte-identical
//! across runs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::classify::{ClassifierConfig, Tail, TrainedClassifier};
use crate::cluster::{adjusted_rand_index, run_clustering, ClusterConfig, CountRule};
use crate::concentration::{confidence_set, validate_alpha};
use crate::error::{Error, Result};
use crate::io::{group_by_key, read_keyed_curves};
use crate::ktest::{
    k_sample_components, mc_se, power_curve, size_calibration, KSampleConfig, PowerConfig, TestMethod,
    WeakVarianceRule,
};
use crate::operator::{CovOperator, Grid, SchattenP};
use crate::rng::{derive_seed, rng_from_seed};
use crate::simulate::{
    inflated_midpoint, random_covariance, similar_pair, surrogate_decay, DecaySpec, GaussianSampler,
};
use crate::stats::{FunctionalSample, OperatorSample};

const OPERATORS: u64 = 0;
const REPLICATIONS: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    /// Directory receiving `<id>.jsonl` and `<id>.csv`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub record_timing: bool,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn new(id: impl Into<String>, seed: u64, experiment: Experiment) -> Self {
        ExperimentConfig {
            id: id.into(),
            seed,
            output: None,
            record_timing: false,
            experiment,
        }
    }

    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output = Some(dir.into());
        self
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(Error::InvalidArgument(format!("invalid experiment id {:?}", self.id)));
        }
        self.experiment.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Size(SizeSpec),
    Power(PowerSpec),
    Coverage(CoverageSpec),
    Classification(ClassificationSpec),
    Clustering(ClusteringSpec),
    Phoneme(PhonemeSpec),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Size(_) => "size",
            Experiment::Power(_) => "power",
            Experiment::Coverage(_) => "coverage",
            Experiment::Classification(_) => "classification",
            Experiment::Clustering(_) => "clustering",
            Experiment::Phoneme(_) => "phoneme",
        }
    }

    fn validate(&self) -> Result<()> {
        let reps = match self {
            Experiment::Size(s) => {
                s.alphas.iter().try_for_each(|&a| validate_alpha(a))?;
                positive("k", s.k)?;
                s.n.iter().try_for_each(|&n| at_least("n", n, 2))?;
                s.reps
            }
            Experiment::Power(s) => {
                validate_alpha(s.alpha)?;
                at_least("n", s.n, 2)?;
                if s.method == TestMethod::Permutation {
                    positive("n_perms", s.n_perms)?;
                }
                s.reps
            }
            Experiment::Coverage(s) => {
                validate_alpha(s.alpha)?;
                at_least("n", s.n, 2)?;
                s.reps
            }
            Experiment::Classification(s) => {
                if !(2..=3).contains(&s.classes) {
                    return Err(Error::InvalidArgument("classification supports 2 or 3 classes".into()));
                }
                s.group_sizes.iter().try_for_each(|&m| positive("group_size", m))?;
                positive("train_groups", s.train_groups)?;
                positive("test_groups", s.test_groups)?;
                s.reps
            }
            Experiment::Clustering(s) => {
                positive("classes", s.classes)?;
                positive("rank", s.rank)?;
                positive("max_iter", s.max_iter)?;
                at_least("per_class * classes", s.per_class * s.classes, s.k.max(1))?;
                s.runs
            }
            Experiment::Phoneme(s) => {
                validate_alpha(s.alpha)?;
                at_least("n_per_sample", s.n_per_sample, 2)?;
                s.ks.iter().try_for_each(|&k| at_least("k", k, 2))?;
                if !s.data.exists() {
                    return Err(Error::io(
                        &s.data,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "phoneme data not found"),
                    ));
                }
                s.reps
            }
        };
        positive("replication count", reps)
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    at_least(name, v, 1)
}

fn at_least(name: &str, v: usize, min: usize) -> Result<()> {
    if v < min {
        return Err(Error::InvalidArgument(format!("{name} must be >= {min}, got {v}")));
    }
    Ok(())
}

fn grid(d: usize) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::uniform(d)?))
}

/// Empirical size of the k-sample test under a Gaussian null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeSpec {
    pub dim: usize,
    pub exponent: f64,
    pub k: usize,
    pub n: Vec<usize>,
    pub alphas: Vec<f64>,
    pub p_norm: SchattenP,
    pub tuned: bool,
    pub weak_variance: WeakVarianceRule,
    pub reps: usize,
}

impl Default for SizeSpec {
    fn default() -> Self {
        SizeSpec {
            dim: 16,
            exponent: 4.0,
            k: 4,
            n: vec![50, 200],
            alphas: vec![0.01, 0.05],
            p_norm: SchattenP::HILBERT_SCHMIDT,
            tuned: true,
            weak_variance: WeakVarianceRule::Gaussian,
            reps: 2000,
        }
    }
}

impl SizeSpec {
    pub fn operator(&self, seed: u64) -> Result<CovOperator> {
        random_covariance(&DecaySpec::new(self.dim, self.exponent), grid(self.dim)?, derive_seed(seed, &[OPERATORS]))
    }
}

/// Power of a two-sample test along the Procrustes path between two
/// operators with the same decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerSpec {
    pub dim: usize,
    pub exponent: f64,
    pub n: usize,
    pub gammas: Vec<f64>,
    pub p_norms: Vec<SchattenP>,
    pub alpha: f64,
    pub method: TestMethod,
    pub tuned: bool,
    pub n_perms: usize,
    pub reps: usize,
}

impl Default for PowerSpec {
    fn default() -> Self {
        PowerSpec {
            dim: 16,
            exponent: 4.0,
            n: 50,
            gammas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            p_norms: vec![SchattenP::HILBERT_SCHMIDT, SchattenP::OPERATOR],
            alpha: 0.05,
            method: TestMethod::Concentration,
            tuned: true,
            n_perms: 100,
            reps: 1000,
        }
    }
}

impl PowerSpec {
    /// Endpoints of the Procrustes path.
    pub fn operators(&self, seed: u64) -> Result<(CovOperator, CovOperator)> {
        let spec = DecaySpec::new(self.dim, self.exponent);
        let g = grid(self.dim)?;
        Ok((
            random_covariance(&spec, g.clone(), derive_seed(seed, &[OPERATORS, 0]))?,
            random_covariance(&spec, g, derive_seed(seed, &[OPERATORS, 1]))?,
        ))
    }

    pub fn config(&self, p_norm: SchattenP, seed: u64) -> PowerConfig {
        PowerConfig {
            n: self.n,
            alpha: self.alpha,
            p_norm,
            n_reps: self.reps,
            method: self.method,
            tuned: self.tuned,
            n_perms: self.n_perms,
            seed: derive_seed(seed, &[REPLICATIONS]),
        }
    }
}

/// Coverage of the true covariance by the Gaussian-rule confidence set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageSpec {
    pub dim: usize,
    pub exponent: f64,
    pub n: usize,
    pub alpha: f64,
    pub p_norm: SchattenP,
    pub rademacher_draws: usize,
    pub reps: usize,
}

impl Default for CoverageSpec {
    fn default() -> Self {
        CoverageSpec {
            dim: 6,
            exponent: 4.0,
            n: 200,
            alpha: 0.05,
            p_norm: SchattenP::HILBERT_SCHMIDT,
            rademacher_draws: 1,
            reps: 2000,
        }
    }
}

/// Group classification with the operator-mode classifier on the
/// similar-decay surrogate pair (and, for three classes, its inflated
/// midpoint).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassificationSpec {
    pub dim: usize,
    pub classes: usize,
    pub group_sizes: Vec<usize>,
    pub train_groups: usize,
    pub test_groups: usize,
    /// Degrees of freedom of a t-process; Gaussian when absent.
    pub nu: Option<f64>,
    pub p_norm: SchattenP,
    pub tail: Tail,
    pub reps: usize,
}

impl Default for ClassificationSpec {
    fn default() -> Self {
        ClassificationSpec {
            dim: 16,
            classes: 2,
            group_sizes: vec![1, 4, 16],
            train_groups: 100,
            test_groups: 100,
            nu: None,
            p_norm: SchattenP::TRACE,
            tail: Tail::Gaussian,
            reps: 30,
        }
    }
}

impl ClassificationSpec {
    pub fn operators(&self, seed: u64) -> Result<Vec<CovOperator>> {
        let (a, b) = similar_pair(&surrogate_decay(self.dim), grid(self.dim)?, derive_seed(seed, &[OPERATORS]))?;
        let mut ops = vec![a, b];
        if self.classes == 3 {
            ops.push(inflated_midpoint(&ops[0], &ops[1])?);
        }
        Ok(ops)
    }

    /// Accuracy of one replication at group size `m`: train on
    /// `train_groups` groups per class, test on `test_groups` fresh groups
    /// per class.
    pub fn accuracy(&self, operators: &[CovOperator], m: usize, rep_seed: u64) -> Result<f64> {
        let samplers = operators.iter().map(GaussianSampler::new).collect::<Result<Vec<_>>>()?;
        let groups = |s: &GaussianSampler, count: usize, seed: u64| -> Result<OperatorSample> {
            let x = match self.nu {
                Some(nu) => s.sample_t(nu, count * m, seed)?,
                None => s.sample(count * m, seed)?,
            };
            OperatorSample::from_curve_groups(&x, m, false)
        };
        let train = samplers
            .iter()
            .enumerate()
            .map(|(j, s)| Ok(groups(s, self.train_groups, derive_seed(rep_seed, &[j as u64, 0]))?.with_label(format!("class{j}"))))
            .collect::<Result<Vec<_>>>()?;
        let config = ClassifierConfig {
            p_norm: self.p_norm,
            tail: self.tail,
            seed: derive_seed(rep_seed, &[u64::MAX]),
            ..ClassifierConfig::default()
        };
        let clf = TrainedClassifier::train_operators(&train, &config)?;
        let mut correct = 0usize;
        for (j, s) in samplers.iter().enumerate() {
            let test = groups(s, self.test_groups, derive_seed(rep_seed, &[j as u64, 1]))?;
            for op in test.operators() {
                if clf.classify_operator(op)?.index == j {
                    correct += 1;
                }
            }
        }
        Ok(correct as f64 / (self.test_groups * samplers.len()) as f64)
    }
}

/// Clustering of rank-`rank` operators drawn from classes sharing one
/// spectrum with independent random eigenbases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringSpec {
    pub dim: usize,
    pub exponent: f64,
    pub classes: usize,
    pub per_class: usize,
    pub rank: usize,
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub p_norm: SchattenP,
    pub count: CountRule,
    pub runs: usize,
}

impl Default for ClusteringSpec {
    fn default() -> Self {
        ClusteringSpec {
            dim: 16,
            exponent: 4.0,
            classes: 3,
            per_class: 200,
            rank: 4,
            k: 3,
            max_iter: 15,
            tol: 1e-6,
            p_norm: SchattenP::TRACE,
            count: CountRule::Balanced,
            runs: 10,
        }
    }
}

impl ClusteringSpec {
    /// Operators of one run with their true classes. Each observation is
    /// the uncentred covariance of `rank` Gaussian curves.
    pub fn data(&self, run_seed: u64) -> Result<(Vec<usize>, OperatorSample)> {
        let spec = DecaySpec::new(self.dim, self.exponent);
        let g = grid(self.dim)?;
        let mut ops = Vec::with_capacity(self.classes * self.per_class);
        let mut truth = Vec::with_capacity(ops.capacity());
        for c in 0..self.classes {
            let sigma = random_covariance(&spec, g.clone(), derive_seed(run_seed, &[OPERATORS, c as u64]))?;
            let x = GaussianSampler::new(&sigma)?.sample(self.per_class * self.rank, derive_seed(run_seed, &[REPLICATIONS, c as u64]))?;
            ops.extend_from_slice(OperatorSample::from_curve_groups(&x, self.rank, false)?.operators());
            truth.extend(std::iter::repeat_n(c, self.per_class));
        }
        let n = ops.len();
        Ok((truth, OperatorSample::new(ops, vec![self.rank; n])?))
    }

    pub fn config(&self, run_seed: u64) -> ClusterConfig {
        ClusterConfig {
            k: self.k,
            max_iter: self.max_iter,
            tol: self.tol,
            p_norm: self.p_norm,
            count: self.count,
            seed: derive_seed(run_seed, &[2]),
        }
    }
}

/// Power on real curves: `k − 1` samples from the reference label against
/// one from the alternative, each of `n_per_sample` curves drawn without
/// replacement. The size at each `k` uses `k` reference samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhonemeSpec {
    /// Labelled curves: label in the first column.
    pub data: PathBuf,
    pub grid_header: bool,
    pub reference: String,
    pub alternative: String,
    pub n_per_sample: usize,
    pub ks: Vec<usize>,
    pub alpha: f64,
    pub p_norm: SchattenP,
    pub tuned: bool,
    pub reps: usize,
}

impl Default for PhonemeSpec {
    fn default() -> Self {
        PhonemeSpec {
            data: PathBuf::from("phoneme.csv"),
            grid_header: false,
            reference: "aa".into(),
            alternative: "ao".into(),
            n_per_sample: 40,
            ks: vec![2, 3, 4, 5, 6],
            alpha: 0.05,
            p_norm: SchattenP::HILBERT_SCHMIDT,
            tuned: true,
            reps: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub kind: String,
    pub params: Map<String, Value>,
    pub metric: String,
    pub value: f64,
    /// Monte Carlo standard error.
    pub se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
    pub seed: u64,
}

struct Recorder<'a> {
    config: &'a ExperimentConfig,
    records: Vec<ResultRecord>,
}

impl Recorder<'_> {
    fn push(&mut self, params: Value, metric: &str, value: f64, se: f64, elapsed_ms: Option<f64>) -> Result<()> {
        if !value.is_finite() || !(se >= 0.0) {
            return Err(Error::InvalidArgument(format!("non-finite result for {metric}: {value} ± {se}")));
        }
        let Value::Object(params) = params else {
            unreachable!("params are built as objects")
        };
        self.records.push(ResultRecord {
            experiment: self.config.id.clone(),
            kind: self.config.experiment.kind().into(),
            params,
            metric: metric.into(),
            value,
            se,
            elapsed_ms: elapsed_ms.filter(|_| self.config.record_timing),
            seed: self.config.seed,
        });
        Ok(())
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (mean, sd, sd / n.sqrt())
}

/// Computes the records of `config` without writing anything.
pub fn compute_records(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let seed = config.seed;
    let mut rec = Recorder {
        config,
        records: Vec::new(),
    };
    match &config.experiment {
        Experiment::Size(s) => {
            let sigma = s.operator(seed)?;
            for (i, &n) in s.n.iter().enumerate() {
                let kc = KSampleConfig {
                    p_norm: s.p_norm,
                    tuned: s.tuned,
                    weak_variance: s.weak_variance,
                    seed: derive_seed(seed, &[REPLICATIONS, i as u64]),
                    ..KSampleConfig::default()
                };
                for pt in size_calibration(&sigma, s.k, n, &s.alphas, &kc, s.reps)? {
                    let params = json!({"k": s.k, "n": n, "alpha": pt.alpha, "p_norm": s.p_norm, "dim": s.dim, "reps": s.reps});
                    rec.push(params, "size", pt.size, pt.se, None)?;
                }
            }
        }
        Experiment::Power(s) => {
            let (a, b) = s.operators(seed)?;
            for &p in &s.p_norms {
                for pt in power_curve(&a, &b, &s.gammas, &s.config(p, seed))? {
                    let params = json!({"gamma": pt.gamma, "n": s.n, "alpha": s.alpha, "p_norm": p, "method": s.method, "reps": s.reps});
                    rec.push(params, "power", pt.power, pt.se, Some(pt.mean_elapsed_ms))?;
                }
            }
        }
        Experiment::Coverage(s) => {
            let spec = DecaySpec::new(s.dim, s.exponent);
            let sigma = random_covariance(&spec, grid(s.dim)?, derive_seed(seed, &[OPERATORS]))?;
            let sampler = GaussianSampler::new(&sigma)?;
            let covered = (0..s.reps)
                .into_par_iter()
                .map(|r| {
                    let rs = derive_seed(seed, &[REPLICATIONS, r as u64]);
                    let x = sampler.sample(s.n, derive_seed(rs, &[0]))?;
                    confidence_set(&x, s.p_norm, s.alpha, s.rademacher_draws, derive_seed(rs, &[1]))?.contains(&sigma)
                })
                .collect::<Result<Vec<bool>>>()?;
            let rate = covered.iter().filter(|&&c| c).count() as f64 / s.reps as f64;
            let params = json!({"n": s.n, "alpha": s.alpha, "p_norm": s.p_norm, "dim": s.dim, "reps": s.reps});
            rec.push(params, "coverage", rate, mc_se(rate, s.reps), None)?;
        }
        Experiment::Classification(s) => {
            let ops = s.operators(seed)?;
            let process = s.nu.map_or("gaussian".to_string(), |nu| format!("t{nu}"));
            for &m in &s.group_sizes {
                let acc = (0..s.reps)
                    .into_par_iter()
                    .map(|r| s.accuracy(&ops, m, derive_seed(seed, &[REPLICATIONS, r as u64])))
                    .collect::<Result<Vec<f64>>>()?;
                let (mean, sd, se) = mean_and_se(&acc);
                let params = json!({"classes": s.classes, "group_size": m, "process": process, "p_norm": s.p_norm, "reps": s.reps});
                rec.push(params.clone(), "accuracy", mean, se, None)?;
                rec.push(params, "accuracy_sd", sd, 0.0, None)?;
            }
        }
        Experiment::Clustering(s) => {
            let runs = (0..s.runs)
                .into_par_iter()
                .map(|r| {
                    let rs = derive_seed(seed, &[REPLICATIONS, r as u64]);
                    let (truth, data) = s.data(rs)?;
                    let start = Instant::now();
                    let run = run_clustering(&data, &s.config(rs))?;
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    Ok((adjusted_rand_index(&truth, &run.assignments)?, run.trace.len(), ms))
                })
                .collect::<Result<Vec<_>>>()?;
            let base = json!({"classes": s.classes, "per_class": s.per_class, "rank": s.rank, "k": s.k, "p_norm": s.p_norm});
            for (r, &(ari, iters, ms)) in runs.iter().enumerate() {
                let mut params = base.clone();
                params["run"] = json!(r);
                params["iterations"] = json!(iters);
                rec.push(params, "ari", ari, 0.0, Some(ms))?;
            }
            let perfect = runs.iter().filter(|r| r.0 >= 1.0 - 1e-12).count() as f64 / s.runs as f64;
            rec.push(base.clone(), "perfect_fraction", perfect, mc_se(perfect, s.runs), None)?;
            let aris: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let (mean, _, se) = mean_and_se(&aris);
            rec.push(base, "mean_ari", mean, se, None)?;
        }
        Experiment::Phoneme(s) => phoneme(s, &mut rec)?,
    }
    Ok(rec.records)
}

fn phoneme(s: &PhonemeSpec, rec: &mut Recorder<'_>) -> Result<()> {
    let groups = group_by_key(read_keyed_curves(&s.data, s.grid_header)?)?;
    let find = |label: &str| {
        groups
            .iter()
            .find(|g| g.label() == Some(label))
            .ok_or_else(|| Error::InvalidArgument(format!("label {label:?} not found in {}", s.data.display())))
    };
    let (reference, alternative) = (find(&s.reference)?, find(&s.alternative)?);
    let seed = rec.config.seed;
    let n = s.n_per_sample;
    for &k in &s.ks {
        if k * n > reference.len() || n > alternative.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} needs {} {:?} and {n} {:?} curves",
                k * n,
                s.reference,
                s.alternative
            )));
        }
        let outcomes = (0..s.reps)
            .into_par_iter()
            .map(|r| {
                let rs = derive_seed(seed, &[REPLICATIONS, k as u64, r as u64]);
                let mut rng = rng_from_seed(derive_seed(rs, &[0]));
                let mut ref_idx: Vec<usize> = (0..reference.len()).collect();
                ref_idx.shuffle(&mut rng);
                let mut alt_idx: Vec<usize> = (0..alternative.len()).collect();
                alt_idx.shuffle(&mut rng);
                let chunk = |i: usize| reference.subset(&ref_idx[i * n..(i + 1) * n]);
                let mut null: Vec<FunctionalSample> = (0..k).map(chunk).collect::<Result<_>>()?;
                let kc = KSampleConfig {
                    p_norm: s.p_norm,
                    alpha: s.alpha,
                    tuned: s.tuned,
                    seed: derive_seed(rs, &[1]),
                    ..KSampleConfig::default()
                };
                let size_reject = k_sample_components(&null, &kc)?.rejects(s.alpha, s.tuned)?;
                null[k - 1] = alternative.subset(&alt_idx[..n])?;
                let power_reject = k_sample_components(&null, &kc)?.rejects(s.alpha, s.tuned)?;
                Ok((power_reject, size_reject))
            })
            .collect::<Result<Vec<(bool, bool)>>>()?;
        let power = outcomes.iter().filter(|o| o.0).count() as f64 / s.reps as f64;
        let size = outcomes.iter().filter(|o| o.1).count() as f64 / s.reps as f64;
        let params = json!({"k": k, "n_per_sample": n, "alpha": s.alpha, "p_norm": s.p_norm, "reps": s.reps});
        rec.push(params.clone(), "power", power, mc_se(power, s.reps), None)?;
        rec.push(params, "size", size, mc_se(size, s.reps), None)?;
    }
    Ok(())
}

/// Computes the records and writes them when an output directory is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let records = compute_records(config)?;
    if let Some(dir) = &config.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(dir.join(format!("{}.jsonl", config.id)), &records)?;
        write_csv(dir.join(format!("{}.csv", config.id)), &records)?;
    }
    Ok(records)
}

pub fn write_jsonl(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// One row per record with the union of parameter names as columns.
pub fn write_csv(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut keys: Vec<&String> = records.iter().flat_map(|r| r.params.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["experiment", "kind", "metric"];
    header.extend(keys.iter().map(|k| k.as_str()));
    header.extend(["value", "se", "elapsed_ms", "seed"]);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.experiment.clone(), r.kind.clone(), r.metric.clone()];
        row.extend(keys.iter().map(|k| match r.params.get(*k) {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => v.to_string(),
        }));
        row.push(r.value.to_string());
        row.push(r.se.to_string());
        row.push(r.elapsed_ms.map_or(String::new(), |t| t.to_string()));
        row.push(r.seed.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
