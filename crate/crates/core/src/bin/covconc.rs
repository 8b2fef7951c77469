use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use covconc::classify::{ClassifierConfig, Mode, Tail, TrainedClassifier};
use covconc::cluster::{confusion_matrix, run_clustering, ClusterConfig, CountRule};
use covconc::harness::{run_experiment, ExperimentConfig, PowerSpec, SizeSpec};
use covconc::io;
use covconc::ktest::{
    k_sample_test, permutation_test_two_sample, power_curve, size_calibration, KSampleConfig, TestMethod,
    WeakVarianceRule,
};
use covconc::rng::derive_seed;
use covconc::simulate::{random_covariance, DecaySpec, GaussianSampler};
use covconc::stats::empirical_covariance;
use covconc::{Error, FunctionalSample, Grid, OperatorSample, Result, SchattenP};

#[derive(Parser)]
#[command(name = "covconc", version, about = "Concentration inference for covariance operators of functional data")]
struct Cli {
    /// Master seed [default: 0; for `experiment`, the config's seed].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (a directory for `simulate` and `experiment`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random covariance operator and curves from it.
    Simulate(SimulateArgs),
    /// k-sample concentration test for equal covariance operators.
    Ktest(KtestArgs),
    /// Two-sample permutation test.
    Permtest(PermtestArgs),
    /// Power curve along the Procrustes path between two random operators.
    Power(PowerArgs),
    /// Empirical size of the k-sample test under a Gaussian null.
    Calibrate(CalibrateArgs),
    /// Train a classifier or predict with one.
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Cluster covariance operators.
    Cluster(ClusterArgs),
    /// Run an experiment described by a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Process {
    Gauss,
    T,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Eigenvalue decay exponent: λ_m = scale · m^(-decay).
    #[arg(long, default_value_t = 4.0)]
    decay: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Process::Gauss)]
    process: Process,
    #[arg(long, default_value_t = 4.0)]
    nu: f64,
}

#[derive(Args)]
struct CurveInput {
    /// First row of each CSV holds the grid points.
    #[arg(long)]
    grid_header: bool,
}

#[derive(Args)]
struct KtestArgs {
    /// One curves CSV per sample.
    #[arg(required = true, num_args = 2..)]
    samples: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Schatten exponent: 1, 2, inf or any p >= 1.
    #[arg(long, default_value = "2")]
    p_norm: SchattenP,
    #[arg(long, overrides_with = "untuned")]
    tuned: bool,
    #[arg(long)]
    untuned: bool,
    #[arg(long, value_enum, default_value_t = WeakVariance::Gaussian)]
    weak_variance: WeakVariance,
    #[arg(long, default_value_t = 1)]
    draws: usize,
    /// Omit `elapsed_ms` so output is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    input: CurveInput,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeakVariance {
    Gaussian,
    Empirical,
}

#[derive(Args)]
struct PermtestArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value = "2")]
    p_norm: SchattenP,
    #[arg(long, default_value_t = 100)]
    perms: usize,
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    input: CurveInput,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])]
    gammas: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value = "concentration")]
    method: TestMethod,
    #[arg(long, default_value_t = 4.0)]
    decay: f64,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "2")]
    p_norm: SchattenP,
    #[arg(long, default_value_t = 100)]
    perms: usize,
    /// Write 0 in the timing column.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05])]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 4.0)]
    decay: f64,
    #[arg(long, default_value = "2")]
    p_norm: SchattenP,
    #[arg(long)]
    untuned: bool,
}

#[derive(Subcommand)]
enum ClassifyCommand {
    /// Train from one curves CSV per label (label = file stem) or a
    /// labelled CSV.
    Train(TrainArgs),
    /// Posterior label probabilities for each curve or group of curves.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Curve,
    Operator,
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    Gaussian,
    Talagrand,
}

#[derive(Args)]
struct TrainArgs {
    inputs: Vec<PathBuf>,
    /// Single CSV whose first column is the label.
    #[arg(long, conflicts_with = "inputs")]
    labeled: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Curve)]
    mode: ModeArg,
    /// Consecutive curves per group in operator mode.
    #[arg(long, default_value_t = 16)]
    group_size: usize,
    #[arg(long, default_value = "1")]
    p_norm: SchattenP,
    #[arg(long, value_enum, default_value_t = TailArg::Gaussian)]
    tail: TailArg,
    #[arg(long, value_delimiter = ',')]
    priors: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    draws: usize,
    #[command(flatten)]
    input: CurveInput,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    curves: PathBuf,
    /// Consecutive curves per group in operator mode.
    #[arg(long, default_value_t = 16)]
    group_size: usize,
    #[command(flatten)]
    input: CurveInput,
}

#[derive(Args)]
struct ClusterArgs {
    /// Curves CSV whose first column is a group id; each group becomes one
    /// operator.
    #[arg(long, required_unless_present = "operators", conflicts_with = "operators")]
    curves: Option<PathBuf>,
    /// Directory of operator CSVs.
    #[arg(long)]
    operators: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value = "1")]
    p_norm: SchattenP,
    #[arg(long, value_enum, default_value_t = CountArg::Balanced)]
    count: CountArg,
    /// True labels, one per operator, one per line.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Where to write the confusion matrix CSV (requires --truth).
    #[arg(long, requires = "truth")]
    confusion: Option<PathBuf>,
    #[command(flatten)]
    input: CurveInput,
}

#[derive(Clone, Copy, ValueEnum)]
enum CountArg {
    Balanced,
    Effective,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
            }
            let mut f = File::create(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
            f.write_all(text.as_bytes()).map_err(|e| Error::Io { path: path.into(), source: e })
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_line(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn strip_timing(v: &mut Value, no_timing: bool) {
    if no_timing {
        if let Value::Object(m) = v {
            m.remove("elapsed_ms");
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_deref();
    match cli.command {
        Command::Simulate(a) => simulate(a, seed, out),
        Command::Ktest(a) => {
            let samples = a
                .samples
                .iter()
                .map(|p| io::read_curves(p, a.input.grid_header))
                .collect::<Result<Vec<_>>>()?;
            let config = KSampleConfig {
                p_norm: a.p_norm,
                alpha: a.alpha,
                tuned: !a.untuned,
                weak_variance: match a.weak_variance {
                    WeakVariance::Gaussian => WeakVarianceRule::Gaussian,
                    WeakVariance::Empirical => WeakVarianceRule::Empirical,
                },
                rademacher_draws: a.draws,
                seed,
            };
            let mut v = serde_json::to_value(k_sample_test(&samples, &config)?)?;
            strip_timing(&mut v, a.no_timing);
            emit(out, &json_line(&v)?)
        }
        Command::Permtest(a) => {
            let x = io::read_curves(&a.a, a.input.grid_header)?;
            let y = io::read_curves(&a.b, a.input.grid_header)?;
            let mut v = serde_json::to_value(permutation_test_two_sample(&x, &y, a.p_norm, a.perms, seed)?)?;
            strip_timing(&mut v, a.no_timing);
            emit(out, &json_line(&v)?)
        }
        Command::Power(a) => {
            let spec = PowerSpec {
                dim: a.dim,
                exponent: a.decay,
                n: a.n,
                gammas: a.gammas,
                p_norms: vec![a.p_norm],
                alpha: a.alpha,
                method: a.method,
                tuned: true,
                n_perms: a.perms,
                reps: a.reps,
            };
            let (s1, s2) = spec.operators(seed)?;
            let mut text = String::from("gamma,power,se,mean_elapsed_ms\n");
            for p in power_curve(&s1, &s2, &spec.gammas, &spec.config(a.p_norm, seed))? {
                let t = if a.no_timing { 0.0 } else { p.mean_elapsed_ms };
                text += &format!("{},{},{},{}\n", p.gamma, p.power, p.se, t);
            }
            emit(out, &text)
        }
        Command::Calibrate(a) => {
            let spec = SizeSpec {
                dim: a.dim,
                exponent: a.decay,
                ..SizeSpec::default()
            };
            let sigma = spec.operator(seed)?;
            let config = KSampleConfig {
                p_norm: a.p_norm,
                tuned: !a.untuned,
                seed: derive_seed(seed, &[1]),
                ..KSampleConfig::default()
            };
            let mut text = String::from("alpha,size,se\n");
            for p in size_calibration(&sigma, a.k, a.n, &a.alphas, &config, a.reps)? {
                text += &format!("{},{},{}\n", p.alpha, p.size, p.se);
            }
            emit(out, &text)
        }
        Command::Classify(ClassifyCommand::Train(a)) => train(a, seed, out),
        Command::Classify(ClassifyCommand::Predict(a)) => predict(a, out),
        Command::Cluster(a) => cluster(a, seed, out),
        Command::Experiment(a) => {
            let mut config = ExperimentConfig::read(&a.config)?;
            if cli.out.is_some() {
                config.output = cli.out.clone();
            }
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            let mut text = String::new();
            for r in run_experiment(&config)? {
                text += &serde_json::to_string(&r)?;
                text.push('\n');
            }
            if config.output.is_none() {
                print!("{text}");
            }
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let dir = out.unwrap_or(Path::new("."));
    let spec = DecaySpec::new(a.dim, a.decay).with_scale(a.scale);
    let grid = std::sync::Arc::new(Grid::uniform(a.dim)?);
    let sigma = random_covariance(&spec, grid, derive_seed(seed, &[0]))?;
    let sampler = GaussianSampler::new(&sigma)?;
    let x = match a.process {
        Process::Gauss => sampler.sample(a.n, derive_seed(seed, &[1]))?,
        Process::T => sampler.sample_t(a.nu, a.n, derive_seed(seed, &[1]))?,
    };
    io::write_curves(dir.join("curves.csv"), &x, false)?;
    io::write_operator(dir.join("operator.csv"), &sigma)?;
    println!("{}", dir.join("curves.csv").display());
    println!("{}", dir.join("operator.csv").display());
    Ok(())
}

fn file_label(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn train(a: TrainArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let samples: Vec<FunctionalSample> = match &a.labeled {
        Some(path) => io::group_by_key(io::read_keyed_curves(path, a.input.grid_header)?)?,
        None => {
            let mut labels: Vec<String> = a.inputs.iter().map(|p| file_label(p)).collect();
            if (1..labels.len()).any(|i| labels[..i].contains(&labels[i])) {
                labels = a.inputs.iter().map(|p| p.with_extension("").display().to_string()).collect();
            }
            a.inputs
                .iter()
                .zip(labels)
                .map(|(p, l)| Ok(io::read_curves(p, a.input.grid_header)?.with_label(l)))
                .collect::<Result<_>>()?
        }
    };
    let config = ClassifierConfig {
        p_norm: a.p_norm,
        tail: match a.tail {
            TailArg::Gaussian => Tail::Gaussian,
            TailArg::Talagrand => Tail::Talagrand,
        },
        priors: a.priors,
        rademacher_draws: a.draws,
        seed,
    };
    let clf = match a.mode {
        ModeArg::Curve => TrainedClassifier::train_curves(&samples, &config)?,
        ModeArg::Operator => {
            let groups = samples
                .iter()
                .map(|s| {
                    let usable = s.len() - s.len() % a.group_size;
                    let idx: Vec<usize> = (0..usable).collect();
                    let g = OperatorSample::from_curve_groups(&s.subset(&idx)?, a.group_size, false)?;
                    Ok(match s.label() {
                        Some(l) => g.with_label(l),
                        None => g,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            TrainedClassifier::train_operators(&groups, &config)?
        }
    };
    emit(out, &(clf.to_json()? + "\n"))
}

fn predict(a: PredictArgs, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| Error::Io {
        path: a.model.clone(),
        source: e,
    })?;
    let clf = TrainedClassifier::from_json(&text)?;
    let x = io::read_curves(&a.curves, a.input.grid_header)?;
    let predictions = match clf.mode() {
        Mode::Curve => x.curves().iter().map(|c| clf.classify_curve(c)).collect::<Result<Vec<_>>>()?,
        Mode::Operator => OperatorSample::from_curve_groups(&x, a.group_size, false)?
            .operators()
            .iter()
            .map(|s| clf.classify_operator(s))
            .collect::<Result<Vec<_>>>()?,
    };
    let mut csv = String::from("row,label");
    for l in clf.label_names() {
        csv += &format!(",posterior_{l}");
    }
    csv += ",tie\n";
    for (i, p) in predictions.iter().enumerate() {
        csv += &format!("{},{}", i + 1, p.label);
        for q in &p.posterior {
            csv += &format!(",{q}");
        }
        csv += &format!(",{}\n", p.tie);
    }
    emit(out, &csv)
}

fn cluster(a: ClusterArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let (names, data) = match (&a.curves, &a.operators) {
        (Some(path), _) => {
            let groups = io::group_by_key(io::read_keyed_curves(path, a.input.grid_header)?)?;
            let names = groups.iter().map(|g| g.label().unwrap_or_default().to_owned()).collect();
            let ops = groups.iter().map(|g| empirical_covariance(g, false)).collect();
            let ranks = groups.iter().map(FunctionalSample::len).collect();
            (names, OperatorSample::new(ops, ranks)?)
        }
        (None, Some(dir)) => {
            let (paths, data) = io::read_operator_dir(dir, None)?;
            (paths.iter().map(|p| file_label(p)).collect::<Vec<_>>(), data)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    let config = ClusterConfig {
        k: a.k,
        max_iter: a.max_iter,
        tol: a.tol,
        p_norm: a.p_norm,
        count: match a.count {
            CountArg::Balanced => CountRule::Balanced,
            CountArg::Effective => CountRule::Effective,
        },
        seed,
    };
    let run = run_clustering(&data, &config)?;
    let report = serde_json::json!({
        "observations": names,
        "assignments": run.assignments,
        "tau": run.state.tau(),
        "iterations": run.trace.len(),
        "converged": run.converged,
    });
    emit(out, &json_line(&report)?)?;
    if let Some(truth_path) = &a.truth {
        let text = std::fs::read_to_string(truth_path).map_err(|e| Error::Io {
            path: truth_path.clone(),
            source: e,
        })?;
        let labels: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if labels.len() != run.assignments.len() {
            return Err(Error::LengthMismatch {
                expected: run.assignments.len(),
                got: labels.len(),
            });
        }
        let mut classes: Vec<&str> = Vec::new();
        for l in &labels {
            if !classes.contains(l) {
                classes.push(l);
            }
        }
        let truth: Vec<usize> = labels.iter().map(|l| classes.iter().position(|c| c == l).unwrap()).collect();
        let m = confusion_matrix(&truth, &run.assignments)?;
        let mut csv = String::from("label");
        for j in 0..a.k {
            csv += &format!(",cluster{}", j + 1);
        }
        csv.push('\n');
        for (c, row) in classes.iter().zip(&m) {
            csv += c;
            for j in 0..a.k {
                csv += &format!(",{}", row.get(j).copied().unwrap_or(0));
            }
            csv.push('\n');
        }
        match &a.confusion {
            Some(p) => emit(Some(p), &csv)?,
            None => eprint!("{csv}"),
        }
    }
    Ok(())
}
