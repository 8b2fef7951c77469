//! Power of the concentration test and of the permutation baseline along
//! the Procrustes path, with mean time per test.

use covconc::harness::PowerSpec;
use covconc::ktest::{power_curve, PowerConfig, TestMethod};
use covconc::SchattenP;

fn main() -> covconc::Result<()> {
    let spec = PowerSpec { reps: 200, ..PowerSpec::default() };
    let (s1, s2) = spec.operators(0)?;
    for method in [TestMethod::Concentration, TestMethod::Permutation] {
        let config = PowerConfig { method, ..spec.config(SchattenP::HILBERT_SCHMIDT, 0) };
        println!("{method:?}");
        println!("  gamma  power    se      ms/test");
        for p in power_curve(&s1, &s2, &spec.gammas, &config)? {
            println!("  {:.1}    {:.3}   {:.3}   {:.3}", p.gamma, p.power, p.se, p.mean_elapsed_ms);
        }
    }
    Ok(())
}
