//! EM-style clustering of rank-4 operators from three classes.

use covconc::cluster::{adjusted_rand_index, confusion_matrix, run_clustering};
use covconc::harness::ClusteringSpec;

fn main() -> covconc::Result<()> {
    let spec = ClusteringSpec::default();
    let (truth, data) = spec.data(3)?;
    let run = run_clustering(&data, &spec.config(3))?;
    for it in &run.trace {
        println!(
            "iteration {:2}: max change {:.2e}, tau {:?}",
            it.iteration,
            it.max_change,
            it.tau.iter().map(|t| (t * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
    }
    println!("confusion (rows: true class, columns: cluster)");
    for row in confusion_matrix(&truth, &run.assignments)? {
        println!("  {row:?}");
    }
    println!("ARI {:.4}", adjusted_rand_index(&truth, &run.assignments)?);
    Ok(())
}
