//! Confidence ball for a covariance operator and its coverage of the truth.

use std::sync::Arc;

use covconc::concentration::confidence_set;
use covconc::simulate::{random_covariance, sample_gaussian, DecaySpec};
use covconc::{Grid, SchattenP};

fn main() -> covconc::Result<()> {
    let grid = Arc::new(Grid::uniform(6)?);
    let sigma = random_covariance(&DecaySpec::new(6, 4.0), grid, 11)?;

    for n in [50, 200, 800] {
        let x = sample_gaussian(&sigma, n, 12)?;
        let set = confidence_set(&x, SchattenP::HILBERT_SCHMIDT, 0.05, 1, 13)?;
        let dist = set.center.distance(&sigma, SchattenP::HILBERT_SCHMIDT)?;
        println!(
            "n = {n:4}: radius {:.4} (Rademacher {:.4}), ‖Σ̂ − Σ‖ = {dist:.4}, covered: {}",
            set.radius,
            set.params.rademacher_norm,
            set.contains(&sigma)?
        );
    }
    Ok(())
}
