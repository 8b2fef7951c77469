//! Classifying single curves and groups of curves between two operators
//! with similar eigenvalue decay.

use std::sync::Arc;

use covconc::classify::{ClassifierConfig, TrainedClassifier};
use covconc::simulate::{similar_pair, surrogate_decay, GaussianSampler};
use covconc::{Grid, OperatorSample};

fn main() -> covconc::Result<()> {
    let grid = Arc::new(Grid::uniform(16)?);
    let (a, b) = similar_pair(&surrogate_decay(16), grid, 5)?;
    let samplers = [GaussianSampler::new(&a)?, GaussianSampler::new(&b)?];

    for m in [1, 4, 16] {
        let train = samplers
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let x = s.sample(100 * m, 100 + j as u64)?;
                Ok(OperatorSample::from_curve_groups(&x, m, false)?.with_label(["a", "b"][j]))
            })
            .collect::<covconc::Result<Vec<_>>>()?;
        let clf = TrainedClassifier::train_operators(&train, &ClassifierConfig::default())?;

        let mut correct = 0;
        for (j, s) in samplers.iter().enumerate() {
            let test = OperatorSample::from_curve_groups(&s.sample(100 * m, 200 + j as u64)?, m, false)?;
            for op in test.operators() {
                correct += usize::from(clf.classify_operator(op)?.index == j);
            }
        }
        println!("group size {m:2}: accuracy {:.3}", correct as f64 / 200.0);
    }

    let x = samplers[0].sample(40, 300)?.with_label("a");
    let y = samplers[1].sample(40, 301)?.with_label("b");
    let clf = TrainedClassifier::train_curves(&[x, y], &ClassifierConfig::default())?;
    let probe = samplers[1].sample(1, 302)?;
    let p = clf.classify_curve(&probe.curves()[0])?;
    println!("single curve from b: label {} posterior {:?}", p.label, p.posterior);
    Ok(())
}
