//! Reading curves on a non-uniform grid from CSV and writing operators.

use covconc::io::{parse_curves, write_operator};
use covconc::stats::empirical_covariance;
use covconc::SchattenP;

fn main() -> covconc::Result<()> {
    let text = "0,0.1,0.5,1\n1.0,0.8,0.1,-0.2\n0.4,0.5,0.9,1.1\n-0.3,0.0,0.2,0.6\n";
    let x = parse_curves(text.as_bytes(), true)?;
    println!("{} curves, grid {:?}", x.len(), x.grid().points());
    println!("trapezoid weights {:?}", x.grid().weights());
    let s = empirical_covariance(&x, true);
    println!("trace norm {:.4}, spectrum {:?}", s.schatten_norm(SchattenP::TRACE), s.spectrum());
    let path = std::env::temp_dir().join("covconc-operator.csv");
    write_operator(&path, &s)?;
    println!("kernel written to {}", path.display());
    Ok(())
}
