//! EM-style soft clustering of covariance operators with
//! concentration-based responsibilities.
//!
//! One step, from responsibilities `ρ` (n × k):
//!
//! ```text
//! w_j   = Σ_i ρ_ij,                 τ_j = w_j / n
//! Σ̂_j   = Σ_i ρ_ij S_i / w_j
//! R_j   = Σ_i ρ_ij ε_i (S_i − Σ̂_j) / w_j
//! σ     = √2 ‖Σ_j τ_j Σ̂_j‖_p
//! ρ'_ij ∝ exp{ −(c_j / 2) (max(0, ‖S_i − Σ̂_j‖_p − ‖R_j‖_p) / σ)² }
//! ```
//!
//! with `c_j = n / k` by default (see [`CountRule`]). Signs `ε` are redrawn
//! every step, per cluster stream.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{log_phi, softmax, Tail};
use crate::error::{Error, Result};
use crate::operator::{CovOperator, SchattenP};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{weak_variance_gaussian, weighted_mean_operator, weighted_rademacher_operator, OperatorSample, RademacherDraw};

/// Total responsibility below which a cluster is treated as empty.
pub const EMPTY_CLUSTER_WEIGHT: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct ClusterState {
    rho: DMatrix<f64>,
    tau: Vec<f64>,
    sigmas: Vec<CovOperator>,
    rademacher_norms: Vec<f64>,
    sigma_pool: f64,
    iteration: usize,
    streams: Vec<u64>,
    reseeded: Vec<usize>,
}

fn column_means(rho: &DMatrix<f64>) -> Vec<f64> {
    let n = rho.nrows() as f64;
    rho.column_iter().map(|c| c.sum() / n).collect()
}

impl ClusterState {
    /// State with the given responsibilities; cluster `j` draws its signs
    /// from stream `streams[j]` (default `j`).
    pub fn from_responsibilities(rho: DMatrix<f64>, streams: Option<Vec<u64>>) -> Result<Self> {
        let (n, k) = rho.shape();
        if k == 0 || n < k {
            return Err(Error::InvalidArgument(format!(
                "need n >= k >= 1, got n = {n}, k = {k}"
            )));
        }
        for (i, row) in rho.row_iter().enumerate() {
            if row.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "responsibility row {i} is not a probability vector"
                )));
            }
        }
        let streams = streams.unwrap_or_else(|| (0..k as u64).collect());
        if streams.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: streams.len(),
            });
        }
        Ok(ClusterState {
            tau: column_means(&rho),
            rho,
            sigmas: Vec::new(),
            rademacher_norms: Vec::new(),
            sigma_pool: 0.0,
            iteration: 0,
            streams,
            reseeded: Vec::new(),
        })
    }

    /// Responsibilities; each row is a probability vector.
    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    /// Mixture weights: column means of the responsibilities that produced
    /// the current operators (of `rho` itself before the first step).
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Cluster operators `Σ̂_j`; empty before the first step.
    pub fn sigmas(&self) -> &[CovOperator] {
        &self.sigmas
    }

    pub fn rademacher_norms(&self) -> &[f64] {
        &self.rademacher_norms
    }

    pub fn sigma_pool(&self) -> f64 {
        self.sigma_pool
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn streams(&self) -> &[u64] {
        &self.streams
    }

    /// Clusters reseeded during the step that produced this state.
    pub fn reseeded(&self) -> &[usize] {
        &self.reseeded
    }

    pub fn n(&self) -> usize {
        self.rho.nrows()
    }

    pub fn k(&self) -> usize {
        self.rho.ncols()
    }

    /// Row-wise argmax of `rho`, first index on ties.
    pub fn assignments(&self) -> Vec<usize> {
        self.rho
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Relabels clusters: new cluster `j` is old cluster `perm[j]`.
    pub fn permute_clusters(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation of the clusters".into()));
        }
        let pick = |v: &[f64]| -> Vec<f64> {
            if v.is_empty() {
                Vec::new()
            } else {
                perm.iter().map(|&p| v[p]).collect()
            }
        };
        Ok(ClusterState {
            rho: DMatrix::from_fn(self.n(), k, |i, j| self.rho[(i, perm[j])]),
            tau: pick(&self.tau),
            sigmas: if self.sigmas.is_empty() {
                Vec::new()
            } else {
                perm.iter().map(|&p| self.sigmas[p].clone()).collect()
            },
            rademacher_norms: pick(&self.rademacher_norms),
            sigma_pool: self.sigma_pool,
            iteration: self.iteration,
            streams: perm.iter().map(|&p| self.streams[p]).collect(),
            reseeded: self
                .reseeded
                .iter()
                .map(|&r| perm.iter().position(|&p| p == r).expect("permutation"))
                .collect(),
        })
    }
}

/// Rows of `rho` drawn from Dirichlet(1/2, …, 1/2).
pub fn init_state(n: usize, k: usize, seed: u64) -> Result<ClusterState> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "need n >= k >= 1, got n = {n}, k = {k}"
        )));
    }
    let gamma = Gamma::new(0.5, 1.0).expect("valid gamma parameters");
    let mut rng = rng_from_seed(seed);
    let mut rho = DMatrix::zeros(n, k);
    for i in 0..n {
        loop {
            let row: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 && total.is_finite() {
                for (j, x) in row.into_iter().enumerate() {
                    rho[(i, j)] = x / total;
                }
                break;
            }
        }
    }
    ClusterState::from_responsibilities(rho, None)
}

/// Signs of cluster stream `stream` at iteration `iteration` (0-based step index).
pub fn cluster_signs(seed: u64, iteration: usize, stream: u64, n: usize) -> RademacherDraw {
    RademacherDraw::sample(n, derive_seed(seed, &[iteration as u64, stream]))
}

fn distance_matrix(ops: &[CovOperator], centers: &[CovOperator], p: SchattenP) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = ops
        .par_iter()
        .map(|s| centers.iter().map(|c| s.distance(c, p)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(ops.len(), centers.len(), |i, j| rows[i][j]))
}

/// Moves the point farthest (in ρ-weighted distance to the non-empty
/// clusters) into each empty cluster. Returns the reseeded clusters.
fn rescue_empty(rho: &mut DMatrix<f64>, ops: &[CovOperator], p: SchattenP) -> Result<Vec<usize>> {
    let k = rho.ncols();
    let weights: Vec<f64> = rho.column_iter().map(|c| c.sum()).collect();
    let empty: Vec<usize> = (0..k).filter(|&j| weights[j] < EMPTY_CLUSTER_WEIGHT).collect();
    if empty.is_empty() {
        return Ok(empty);
    }
    let live: Vec<usize> = (0..k).filter(|&j| weights[j] >= EMPTY_CLUSTER_WEIGHT).collect();
    let centers = live
        .iter()
        .map(|&j| weighted_mean_operator(ops, rho.column(j).as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let d = distance_matrix(ops, &centers, p)?;
    let score: Vec<f64> = (0..ops.len())
        .map(|i| live.iter().enumerate().map(|(c, &j)| rho[(i, j)] * d[(i, c)]).sum())
        .collect();
    let mut taken = vec![false; ops.len()];
    for &j in &empty {
        let mut best: Option<usize> = None;
        for i in 0..ops.len() {
            if !taken[i] && best.is_none_or(|b| score[i] > score[b]) {
                best = Some(i);
            }
        }
        let i = best.ok_or_else(|| Error::InvalidArgument("no point left to reseed an empty cluster".into()))?;
        taken[i] = true;
        for l in 0..k {
            rho[(i, l)] = if l == j { 1.0 } else { 0.0 };
        }
    }
    Ok(empty)
}

/// Sample size used in the responsibility exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountRule {
    /// `n / k` for every cluster; equals `n_j` for a balanced hard partition.
    #[default]
    Balanced,
    /// `w_j = Σ_i ρ_ij`. Large clusters then penalise distance more
    /// sharply than small ones, which tends to make the responsibilities
    /// oscillate between clusters.
    Effective,
}

/// One update of operators, Rademacher norms, pooled weak variance and
/// responsibilities, with [`CountRule::Balanced`].
pub fn em_step(state: &ClusterState, data: &OperatorSample, p: SchattenP, seed: u64) -> Result<ClusterState> {
    em_step_with(state, data, p, seed, CountRule::Balanced)
}

pub fn em_step_with(
    state: &ClusterState,
    data: &OperatorSample,
    p: SchattenP,
    seed: u64,
    count: CountRule,
) -> Result<ClusterState> {
    let ops = data.operators();
    let n = ops.len();
    if n != state.n() {
        return Err(Error::LengthMismatch {
            expected: state.n(),
            got: n,
        });
    }
    let k = state.k();
    let mut rho = state.rho.clone();
    let reseeded = rescue_empty(&mut rho, ops, p)?;
    let weights: Vec<f64> = rho.column_iter().map(|c| c.sum()).collect();
    let tau = column_means(&rho);

    let mut sigmas = Vec::with_capacity(k);
    let mut rademacher_norms = Vec::with_capacity(k);
    for j in 0..k {
        let w = rho.column(j);
        let sigma = weighted_mean_operator(ops, w.as_slice())?;
        let signs = cluster_signs(seed, state.iteration, state.streams[j], n);
        let r = weighted_rademacher_operator(ops, w.as_slice(), &sigma, signs.signs())?;
        rademacher_norms.push(r.schatten_norm(p));
        sigmas.push(sigma);
    }
    let pooled = CovOperator::linear_combination(&sigmas.iter().collect::<Vec<_>>(), &tau)?;
    let sigma_pool = weak_variance_gaussian(&pooled, p);
    if !(sigma_pool > 0.0) {
        return Err(Error::InvalidArgument("pooled weak variance is zero".into()));
    }

    let counts: Vec<f64> = match count {
        CountRule::Balanced => vec![n as f64 / k as f64; k],
        CountRule::Effective => weights.clone(),
    };
    let d = distance_matrix(ops, &sigmas, p)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let lw: Vec<f64> = (0..k)
                .map(|j| log_phi(d[(i, j)], rademacher_norms[j], sigma_pool, counts[j], Tail::Gaussian))
                .collect();
            softmax(&lw)
        })
        .collect();
    let new_rho = DMatrix::from_fn(n, k, |i, j| rows[i][j]);

    Ok(ClusterState {
        rho: new_rho,
        tau,
        sigmas,
        rademacher_norms,
        sigma_pool,
        iteration: state.iteration + 1,
        streams: state.streams.clone(),
        reseeded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub p_norm: SchattenP,
    pub count: CountRule,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: 2,
            max_iter: 20,
            tol: 1e-6,
            p_norm: SchattenP::TRACE,
            count: CountRule::Balanced,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    /// `max |ρ' − ρ|` over all entries.
    pub max_change: f64,
    pub tau: Vec<f64>,
    pub sigma_pool: f64,
    pub rademacher_norms: Vec<f64>,
    pub reseeded: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ClusterRun {
    pub assignments: Vec<usize>,
    pub state: ClusterState,
    pub trace: Vec<IterationSummary>,
    pub converged: bool,
}

/// Iterates [`em_step`] from `initial` until `max |Δρ| < tol` or
/// `max_iter` steps.
pub fn run_from(initial: ClusterState, data: &OperatorSample, config: &ClusterConfig) -> Result<ClusterRun> {
    if config.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    if !(config.tol >= 0.0) {
        return Err(Error::InvalidArgument("tol must be >= 0".into()));
    }
    let step_seed = derive_seed(config.seed, &[1]);
    let mut state = initial;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iter {
        let next = em_step_with(&state, data, config.p_norm, step_seed, config.count)?;
        let max_change = (next.rho() - state.rho()).amax();
        trace.push(IterationSummary {
            iteration: next.iteration,
            max_change,
            tau: next.tau.clone(),
            sigma_pool: next.sigma_pool,
            rademacher_norms: next.rademacher_norms.clone(),
            reseeded: next.reseeded.clone(),
        });
        state = next;
        if max_change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(ClusterRun {
        assignments: state.assignments(),
        state,
        trace,
        converged,
    })
}

/// Dirichlet initialisation from `derive_seed(seed, [0])`, then [`run_from`].
pub fn run_clustering(data: &OperatorSample, config: &ClusterConfig) -> Result<ClusterRun> {
    if data.is_empty() {
        return Err(Error::Empty("no operators to cluster".into()));
    }
    let init = init_state(data.len(), config.k, derive_seed(config.seed, &[0]))?;
    run_from(init, data, config)
}

/// Counts `m[t][c]` of items with true label `t` in cluster `c`.
pub fn confusion_matrix(truth: &[usize], clusters: &[usize]) -> Result<Vec<Vec<usize>>> {
    if truth.len() != clusters.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: clusters.len(),
        });
    }
    let rows = truth.iter().max().map_or(0, |m| m + 1);
    let cols = clusters.iter().max().map_or(0, |m| m + 1);
    let mut m = vec![vec![0; cols]; rows];
    for (&t, &c) in truth.iter().zip(clusters) {
        m[t][c] += 1;
    }
    Ok(m)
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let table = confusion_matrix(a, b)?;
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let n = a.len();
    let sum_cells: f64 = table.iter().flatten().map(|&x| choose2(x)).sum();
    let sum_rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols = table.first().map_or(0, Vec::len);
    let sum_cols: f64 = (0..cols).map(|c| choose2(table.iter().map(|r| r[c]).sum())).sum();
    let expected = sum_rows * sum_cols / choose2(n).max(1.0);
    let max = 0.5 * (sum_rows + sum_cols);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::classify::operator_summary;
    use crate::operator::Grid;
    use crate::simulate::{random_covariance, sample_gaussian, DecaySpec};

    fn data(n_per: usize, classes: usize, seed: u64) -> (OperatorSample, Vec<usize>) {
        let g = Arc::new(Grid::uniform(6).unwrap());
        let mut ops = Vec::new();
        let mut truth = Vec::new();
        for c in 0..classes {
            let s = random_covariance(&DecaySpec::new(6, 4.0), g.clone(), seed + c as u64).unwrap();
            let x = sample_gaussian(&s, n_per * 4, seed + 10 + c as u64).unwrap();
            ops.extend(OperatorSample::from_curve_groups(&x, 4, false).unwrap().operators().to_vec());
            truth.extend(std::iter::repeat_n(c, n_per));
        }
        let ranks = vec![4; ops.len()];
        (OperatorSample::new(ops, ranks).unwrap(), truth)
    }

    #[test]
    fn single_cluster_init_is_all_ones() {
        let s = init_state(5, 1, 3).unwrap();
        assert!(s.rho().iter().all(|&x| x == 1.0));
        assert!(init_state(2, 3, 0).is_err());
        assert!(init_state(3, 0, 0).is_err());
    }

    #[test]
    fn init_rows_on_simplex() {
        let s = init_state(50, 4, 9).unwrap();
        for row in s.rho().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
        assert!((s.tau().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_step_gives_mean() {
        let (d, _) = data(5, 2, 1);
        let s = init_state(d.len(), 1, 0).unwrap();
        let next = em_step(&s, &d, SchattenP::TRACE, 0).unwrap();
        assert!(next.rho().iter().all(|&x| x == 1.0));
        assert!((next.sigmas()[0].kernel() - d.mean_operator().kernel()).amax() < 1e-12);
    }

    #[test]
    fn tau_is_column_mean_of_input_rho() {
        let (d, _) = data(6, 2, 2);
        let s = init_state(d.len(), 3, 5).unwrap();
        let next = em_step(&s, &d, SchattenP::TRACE, 4).unwrap();
        let n = d.len() as f64;
        for j in 0..3 {
            let direct: f64 = (0..d.len()).map(|i| s.rho()[(i, j)]).sum::<f64>() / n;
            assert_eq!(next.tau()[j], direct);
        }
    }

    #[test]
    fn step_invariants() {
        let (d, _) = data(6, 3, 3);
        let s = init_state(d.len(), 3, 6).unwrap();
        let next = em_step(&s, &d, SchattenP::TRACE, 1).unwrap();
        for row in next.rho().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!((next.tau().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let pooled = CovOperator::linear_combination(&next.sigmas().iter().collect::<Vec<_>>(), next.tau()).unwrap();
        assert!((weak_variance_gaussian(&pooled, SchattenP::TRACE) - next.sigma_pool()).abs() < 1e-10);
        for s in next.sigmas() {
            s.check_psd().unwrap();
        }
    }

    #[test]
    fn hard_assignment_matches_classifier_summaries() {
        let (d, truth) = data(5, 2, 4);
        let n = d.len();
        let rho = DMatrix::from_fn(n, 2, |i, j| if truth[i] == j { 1.0 } else { 0.0 });
        let s = ClusterState::from_responsibilities(rho, None).unwrap();
        let seed = 77;
        let next = em_step(&s, &d, SchattenP::TRACE, seed).unwrap();
        for j in 0..2 {
            let members: Vec<usize> = (0..n).filter(|&i| truth[i] == j).collect();
            let ops: Vec<CovOperator> = members.iter().map(|&i| d.operators()[i].clone()).collect();
            let all = cluster_signs(seed, 0, j as u64, n);
            let signs: Vec<i8> = members.iter().map(|&i| all.signs()[i]).collect();
            let oracle = operator_summary(&ops, &signs, SchattenP::TRACE).unwrap();
            assert!((next.sigmas()[j].kernel() - oracle.mean.kernel()).amax() < 1e-10);
            assert!((next.rademacher_norms()[j] - oracle.rademacher_norm).abs() < 1e-10);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let (d, _) = data(5, 3, 5);
        let s = init_state(d.len(), 3, 8).unwrap();
        let perm = [2, 0, 1];
        let sp = s.permute_clusters(&perm).unwrap();
        let mut a = s;
        let mut b = sp;
        for _ in 0..3 {
            a = em_step(&a, &d, SchattenP::TRACE, 11).unwrap();
            b = em_step(&b, &d, SchattenP::TRACE, 11).unwrap();
            let ap = a.permute_clusters(&perm).unwrap();
            assert!((ap.rho() - b.rho()).amax() < 1e-12);
            for (x, y) in ap.rademacher_norms().iter().zip(b.rademacher_norms()) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn degenerate_k_equals_n_terminates() {
        let (d, _) = data(2, 2, 6);
        let cfg = ClusterConfig {
            k: d.len(),
            max_iter: 1,
            tol: 0.0,
            ..ClusterConfig::default()
        };
        let run = run_clustering(&d, &cfg).unwrap();
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.assignments.len(), d.len());
        for row in run.state.rho().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let (d, _) = data(4, 2, 7);
        let n = d.len();
        let rho = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let s = ClusterState::from_responsibilities(rho, None).unwrap();
        let next = em_step(&s, &d, SchattenP::TRACE, 0).unwrap();
        assert_eq!(next.reseeded(), &[1]);
        assert!(next.tau()[1] > 0.0);
    }

    #[test]
    fn separates_distinct_classes() {
        let (d, truth) = data(30, 3, 8);
        let cfg = ClusterConfig { k: 3, max_iter: 15, seed: 2, ..ClusterConfig::default() };
        let run = run_clustering(&d, &cfg).unwrap();
        assert!(adjusted_rand_index(&truth, &run.assignments).unwrap() > 0.8);
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        let x = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((x - (-0.5)).abs() < 1e-12);
        assert_eq!(confusion_matrix(&[0, 1, 1], &[1, 0, 0]).unwrap(), vec![vec![0, 1], vec![2, 0]]);
    }
}
