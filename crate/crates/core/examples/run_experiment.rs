//! Size calibration through the experiment harness, written as JSON lines
//! and CSV.

use covconc::harness::{run_experiment, Experiment, ExperimentConfig, SizeSpec};

fn main() -> covconc::Result<()> {
    let dir = std::env::temp_dir().join("covconc-example");
    let config = ExperimentConfig::new(
        "size",
        0,
        Experiment::Size(SizeSpec { reps: 400, ..SizeSpec::default() }),
    )
    .with_output(&dir);
    println!("{}", serde_json::to_string_pretty(&config)?);
    for r in run_experiment(&config)? {
        println!("n = {} alpha = {}: size {:.4} ± {:.4}", r.params["n"], r.params["alpha"], r.value, r.se);
    }
    println!("records written to {}", dir.display());
    Ok(())
}
