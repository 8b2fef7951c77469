//! Power of the k-sample test on labelled real curves: k − 1 samples of the
//! reference label against one of the alternative.
//!
//! Usage: `cargo run --example phoneme_protocol -- phoneme.csv [aa ao]`,
//! where the first column of the CSV is the label. Without arguments a
//! synthetic labelled file stands in for the data.

use covconc::harness::{compute_records, Experiment, ExperimentConfig, PhonemeSpec};
use covconc::io::write_keyed_curves;
use covconc::rng::derive_seed;
use covconc::simulate::{random_covariance, DecaySpec, GaussianSampler};

fn main() -> covconc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut spec = PhonemeSpec { reps: 200, ..PhonemeSpec::default() };
    match args.first() {
        Some(path) => {
            spec.data = path.into();
            if let [_, r, a, ..] = args.as_slice() {
                spec.reference = r.clone();
                spec.alternative = a.clone();
            }
        }
        None => {
            let grid = std::sync::Arc::new(covconc::Grid::uniform(32)?);
            let decay = DecaySpec::new(32, 2.0);
            let (a, b) = (random_covariance(&decay, grid.clone(), 1)?, random_covariance(&decay, grid, 2)?);
            let mut rows = Vec::new();
            for (label, op, n) in [("aa", &a, 300), ("ao", &b, 100)] {
                let x = GaussianSampler::new(op)?.sample(n, derive_seed(2, &[n as u64]))?;
                rows.extend(x.curves().iter().map(|c| (label.to_string(), c.clone())));
            }
            spec.data = std::env::temp_dir().join("covconc-synthetic-phoneme.csv");
            write_keyed_curves(&spec.data, &rows)?;
            println!("no data given; using synthetic curves in {}", spec.data.display());
        }
    }
    let records = compute_records(&ExperimentConfig::new("phoneme", 0, Experiment::Phoneme(spec)))?;
    println!("k  power   size");
    for pair in records.chunks(2) {
        println!("{}  {:.3}   {:.3}", pair[0].params["k"], pair[0].value, pair[1].value);
    }
    Ok(())
}
