//! Concentration-based approximate Bayes classifier for single curves and
//! for groups of curves summarised by their covariance operator.
//!
//! For label `j` with `n_j` training observations, centre `c_j`,
//! Rademacher norm `‖R_j‖` and weak standard deviation `σ̂_j`, an
//! observation at distance `D_j` from `c_j` has weight
//!
//! ```text
//! φ_j = exp{ −(n_j / 2) (max(0, D_j − ‖R_j‖) / σ̂_j)² }
//! ```
//!
//! and the posterior is `π_j φ_j / Σ_l π_l φ_l`, evaluated in the log domain.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{check_grid, CovOperator, Curve, Grid, SchattenP};
use crate::stats::{
    draw_seed, rademacher_curve_average, sample_mean, weak_variance_empirical, weak_variance_gaussian,
    weighted_rademacher_operator, FunctionalSample, OperatorSample, RademacherDraw,
};

pub const MODEL_FORMAT: &str = "covconc-classifier";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Curve,
    Operator,
}

/// Tail used for `φ_j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// `exp(−n r² / 2σ²)`.
    #[default]
    Gaussian,
    /// `exp(−n r² / (4‖R‖U + 2σ² + 2rU/3))` with `U = σ̂`.
    Talagrand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub p_norm: SchattenP,
    pub tail: Tail,
    /// Prior label probabilities in training order; uniform when absent.
    pub priors: Option<Vec<f64>>,
    pub rademacher_draws: usize,
    /// Sign stream shared by every label, so identical training sets give
    /// identical summaries.
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            p_norm: SchattenP::TRACE,
            tail: Tail::Gaussian,
            priors: None,
            rademacher_draws: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Center {
    Curve(Curve),
    Operator(CovOperator),
}

#[derive(Clone, Debug)]
pub struct LabelSummary {
    pub label: String,
    pub count: usize,
    pub center: Center,
    pub rademacher_norm: f64,
    pub weak_sd: f64,
}

/// Centre, Rademacher norm and Gaussian-rule weak deviation of a set of
/// operators for one fixed sign vector.
#[derive(Clone, Debug)]
pub struct OperatorSummary {
    pub mean: CovOperator,
    pub rademacher_norm: f64,
    pub weak_sd: f64,
}

/// Mean operator `Σ̄`, `‖n⁻¹ Σ ε_i (S_i − Σ̄)‖_p` and `√2 ‖Σ̄‖_p`.
pub fn operator_summary(ops: &[CovOperator], signs: &[i8], p: SchattenP) -> Result<OperatorSummary> {
    if ops.is_empty() {
        return Err(Error::Empty("no operators to summarise".into()));
    }
    let ones = vec![1.0; ops.len()];
    let refs: Vec<&CovOperator> = ops.iter().collect();
    let mean = CovOperator::linear_combination(&refs, &vec![1.0 / ops.len() as f64; ops.len()])?;
    let r = weighted_rademacher_operator(ops, &ones, &mean, signs)?;
    Ok(OperatorSummary {
        rademacher_norm: r.schatten_norm(p),
        weak_sd: weak_variance_gaussian(&mean, p),
        mean,
    })
}

/// `log φ` for one label; `distance` is `D_j`.
pub fn log_phi(distance: f64, rademacher_norm: f64, weak_sd: f64, count: f64, tail: Tail) -> f64 {
    let r = (distance - rademacher_norm).max(0.0);
    if r == 0.0 {
        return 0.0;
    }
    match tail {
        Tail::Gaussian => -count * r * r / (2.0 * weak_sd * weak_sd),
        Tail::Talagrand => {
            let u = weak_sd;
            -count * r * r / (4.0 * rademacher_norm * u + 2.0 * weak_sd * weak_sd + 2.0 * r * u / 3.0)
        }
    }
}

/// Normalised `exp(log_weights)`.
pub fn softmax(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub label: String,
    pub posterior: Vec<f64>,
    /// Another label attains the same maximal weight; the first was chosen.
    pub tie: bool,
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    mode: Mode,
    p_norm: SchattenP,
    tail: Tail,
    priors: Option<Vec<f64>>,
    grid: Arc<Grid>,
    labels: Vec<LabelSummary>,
}

fn check_labels(names: &[String]) -> Result<()> {
    if names.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 2 labels, got {}",
            names.len()
        )));
    }
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(Error::InvalidArgument(format!("duplicate label {a:?}")));
        }
    }
    Ok(())
}

fn check_priors(priors: &Option<Vec<f64>>, k: usize) -> Result<Option<Vec<f64>>> {
    let Some(p) = priors else { return Ok(None) };
    if p.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: p.len(),
        });
    }
    if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("priors must be positive and finite".into()));
    }
    let total: f64 = p.iter().sum();
    Ok(Some(p.iter().map(|x| x / total).collect()))
}

fn default_label(label: Option<&str>, i: usize) -> String {
    label.map(str::to_owned).unwrap_or_else(|| format!("class{i}"))
}

fn check_weak_sd(label: &str, sd: f64) -> Result<()> {
    if sd > 0.0 && sd.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "label {label:?} has zero weak variance"
        )))
    }
}

impl TrainedClassifier {
    /// Curve-mode training: one sample per label, labelled by
    /// [`FunctionalSample::label`] or `class<i>`.
    pub fn train_curves(samples: &[FunctionalSample], config: &ClassifierConfig) -> Result<Self> {
        let names: Vec<String> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| default_label(s.label(), i))
            .collect();
        check_labels(&names)?;
        if config.rademacher_draws == 0 {
            return Err(Error::InvalidArgument("rademacher_draws must be >= 1".into()));
        }
        let grid = samples[0].grid().clone();
        let mut labels = Vec::with_capacity(samples.len());
        for (s, name) in samples.iter().zip(names) {
            check_grid(&grid, s.grid())?;
            if s.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "label {name:?} has {} observations; at least 2 are required",
                    s.len()
                )));
            }
            let mut rn = 0.0;
            for r in 0..config.rademacher_draws {
                let draw = RademacherDraw::sample(s.len(), draw_seed(config.seed, r));
                rn += rademacher_curve_average(s, &draw)?.norm();
            }
            let weak_sd = weak_variance_empirical(s, config.p_norm)?;
            check_weak_sd(&name, weak_sd)?;
            labels.push(LabelSummary {
                count: s.len(),
                center: Center::Curve(sample_mean(s)),
                rademacher_norm: rn / config.rademacher_draws as f64,
                weak_sd,
                label: name,
            });
        }
        Ok(TrainedClassifier {
            mode: Mode::Curve,
            p_norm: config.p_norm,
            tail: config.tail,
            priors: check_priors(&config.priors, labels.len())?,
            grid,
            labels,
        })
    }

    /// Operator-mode training: one operator sample per label.
    pub fn train_operators(samples: &[OperatorSample], config: &ClassifierConfig) -> Result<Self> {
        let names: Vec<String> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| default_label(s.label(), i))
            .collect();
        check_labels(&names)?;
        if config.rademacher_draws == 0 {
            return Err(Error::InvalidArgument("rademacher_draws must be >= 1".into()));
        }
        let grid = samples[0].grid().clone();
        let mut labels = Vec::with_capacity(samples.len());
        for (s, name) in samples.iter().zip(names) {
            check_grid(&grid, s.grid())?;
            if s.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "label {name:?} has {} observations; at least 2 are required",
                    s.len()
                )));
            }
            let mut rn = 0.0;
            let mut summary = None;
            for r in 0..config.rademacher_draws {
                let draw = RademacherDraw::sample(s.len(), draw_seed(config.seed, r));
                let sm = operator_summary(s.operators(), draw.signs(), config.p_norm)?;
                rn += sm.rademacher_norm;
                summary = Some(sm);
            }
            let sm = summary.expect("at least one draw");
            check_weak_sd(&name, sm.weak_sd)?;
            labels.push(LabelSummary {
                count: s.len(),
                center: Center::Operator(sm.mean),
                rademacher_norm: rn / config.rademacher_draws as f64,
                weak_sd: sm.weak_sd,
                label: name,
            });
        }
        Ok(TrainedClassifier {
            mode: Mode::Operator,
            p_norm: config.p_norm,
            tail: config.tail,
            priors: check_priors(&config.priors, labels.len())?,
            grid,
            labels,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn p_norm(&self) -> SchattenP {
        self.p_norm
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn labels(&self) -> &[LabelSummary] {
        &self.labels
    }

    pub fn label_names(&self) -> Vec<&str> {
        self.labels.iter().map(|l| l.label.as_str()).collect()
    }

    /// Distances `D_j` from a curve (curve mode) to every label centre.
    pub fn curve_distances(&self, g: &Curve) -> Result<Vec<f64>> {
        check_grid(&self.grid, g.grid())?;
        self.labels
            .iter()
            .map(|l| match &l.center {
                Center::Curve(c) => c.distance(g),
                Center::Operator(_) => Err(Error::InvalidArgument(
                    "operator-mode classifier cannot score a single curve".into(),
                )),
            })
            .collect()
    }

    /// Distances `D_j` from an operator (operator mode) to every label centre.
    pub fn operator_distances(&self, s: &CovOperator) -> Result<Vec<f64>> {
        check_grid(&self.grid, s.grid())?;
        self.labels
            .iter()
            .map(|l| match &l.center {
                Center::Operator(c) => c.distance(s, self.p_norm),
                Center::Curve(_) => Err(Error::InvalidArgument(
                    "curve-mode classifier cannot score an operator".into(),
                )),
            })
            .collect()
    }

    fn log_weights(&self, distances: &[f64]) -> Vec<f64> {
        self.labels
            .iter()
            .zip(distances)
            .enumerate()
            .map(|(j, (l, &d))| {
                let prior = self.priors.as_ref().map_or(0.0, |p| p[j].ln());
                prior + log_phi(d, l.rademacher_norm, l.weak_sd, l.count as f64, self.tail)
            })
            .collect()
    }

    pub fn posterior_from_distances(&self, distances: &[f64]) -> Result<Vec<f64>> {
        if distances.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                expected: self.labels.len(),
                got: distances.len(),
            });
        }
        Ok(softmax(&self.log_weights(distances)))
    }

    pub fn posterior_curve(&self, g: &Curve) -> Result<Vec<f64>> {
        self.posterior_from_distances(&self.curve_distances(g)?)
    }

    pub fn posterior_operator(&self, s: &CovOperator) -> Result<Vec<f64>> {
        self.posterior_from_distances(&self.operator_distances(s)?)
    }

    pub fn predict_from_distances(&self, distances: &[f64]) -> Result<Prediction> {
        let posterior = self.posterior_from_distances(distances)?;
        let lw = self.log_weights(distances);
        let best = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * best.abs().max(1.0);
        let winners: Vec<usize> = (0..lw.len()).filter(|&j| (lw[j] - best).abs() <= tol).collect();
        let index = winners[0];
        Ok(Prediction {
            index,
            label: self.labels[index].label.clone(),
            posterior,
            tie: winners.len() > 1,
        })
    }

    pub fn classify_curve(&self, g: &Curve) -> Result<Prediction> {
        self.predict_from_distances(&self.curve_distances(g)?)
    }

    pub fn classify_operator(&self, s: &CovOperator) -> Result<Prediction> {
        self.predict_from_distances(&self.operator_distances(s)?)
    }

    pub fn to_model(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            mode: self.mode,
            p_norm: self.p_norm,
            tail: self.tail,
            priors: self.priors.clone(),
            grid: (*self.grid).clone(),
            labels: self
                .labels
                .iter()
                .map(|l| LabelRecord {
                    label: l.label.clone(),
                    count: l.count,
                    rademacher_norm: l.rademacher_norm,
                    weak_sd: l.weak_sd,
                    center: match &l.center {
                        Center::Curve(c) => c.values().to_vec(),
                        Center::Operator(s) => s.kernel().transpose().as_slice().to_vec(),
                    },
                })
                .collect(),
        }
    }

    pub fn from_model(model: ModelFile) -> Result<Self> {
        if model.format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "not a classifier model (format {:?})",
                model.format
            )));
        }
        if model.version != MODEL_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                model.version
            )));
        }
        let grid = Arc::new(model.grid);
        let d = grid.len();
        let names: Vec<String> = model.labels.iter().map(|l| l.label.clone()).collect();
        check_labels(&names)?;
        let mut labels = Vec::with_capacity(model.labels.len());
        for l in model.labels {
            check_weak_sd(&l.label, l.weak_sd)?;
            let center = match model.mode {
                Mode::Curve => Center::Curve(Curve::new(grid.clone(), l.center)?),
                Mode::Operator => {
                    if l.center.len() != d * d {
                        return Err(Error::LengthMismatch {
                            expected: d * d,
                            got: l.center.len(),
                        });
                    }
                    let k = DMatrix::from_row_slice(d, d, &l.center);
                    Center::Operator(CovOperator::from_kernel(grid.clone(), k)?)
                }
            };
            labels.push(LabelSummary {
                label: l.label,
                count: l.count,
                center,
                rademacher_norm: l.rademacher_norm,
                weak_sd: l.weak_sd,
            });
        }
        Ok(TrainedClassifier {
            mode: model.mode,
            p_norm: model.p_norm,
            tail: model.tail,
            priors: check_priors(&model.priors, labels.len())?,
            grid,
            labels,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_model())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_model(serde_json::from_str(s)?)
    }
}

/// Self-describing serialised classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub p_norm: SchattenP,
    pub tail: Tail,
    pub priors: Option<Vec<f64>>,
    pub grid: Grid,
    pub labels: Vec<LabelRecord>,
}

/// One label of a [`ModelFile`]; `center` holds curve values or the
/// row-major kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub label: String,
    pub count: usize,
    pub rademacher_norm: f64,
    pub weak_sd: f64,
    pub center: Vec<f64>,
}
