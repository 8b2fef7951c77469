//! Procrustes geometry: the interpolation path between two operators and
//! distances along it.

use std::sync::Arc;

use covconc::simulate::{random_covariance, DecaySpec};
use covconc::{interpolate, procrustes_distance, Grid, SchattenP};

fn main() -> covconc::Result<()> {
    let grid = Arc::new(Grid::uniform(12)?);
    let spec = DecaySpec::new(12, 2.0);
    let a = random_covariance(&spec, grid.clone(), 1)?;
    let b = random_covariance(&spec, grid, 2)?;
    let total = procrustes_distance(&a, &b)?;
    println!("Procrustes distance d(a, b) = {total:.5}");
    println!("gamma  d(a, s)   d(s, b)   ‖s − a‖_HS  trace");
    for i in 0..=10 {
        let g = i as f64 / 10.0;
        let s = interpolate(&a, &b, g)?;
        println!(
            "{g:.1}    {:.5}   {:.5}   {:.5}     {:.5}",
            procrustes_distance(&a, &s)?,
            procrustes_distance(&s, &b)?,
            s.distance(&a, SchattenP::HILBERT_SCHMIDT)?,
            s.trace()
        );
    }
    Ok(())
}
