//! Gaussian and t-process samples with a common covariance operator.

use std::sync::Arc;

use covconc::simulate::{random_covariance, DecaySpec, GaussianSampler};
use covconc::stats::empirical_covariance;
use covconc::{Grid, SchattenP};

fn main() -> covconc::Result<()> {
    let grid = Arc::new(Grid::uniform(16)?);
    let spec = DecaySpec::new(16, 4.0);
    let sigma = random_covariance(&spec, grid, 7)?;
    println!("leading eigenvalues {:?}", &sigma.spectrum()[..4]);
    let sampler = GaussianSampler::new(&sigma)?;
    let hs = SchattenP::HILBERT_SCHMIDT;
    for n in [100, 1000, 10000] {
        let g = empirical_covariance(&sampler.sample(n, 1)?, true);
        let t = empirical_covariance(&sampler.sample_t(4.0, n, 1)?, true);
        println!(
            "n = {n:5}: relative HS error gaussian {:.3}, t(4) {:.3}",
            g.distance(&sigma, hs)? / sigma.schatten_norm(hs),
            t.distance(&sigma, hs)? / sigma.schatten_norm(hs)
        );
    }
    Ok(())
}
