//! The sixteen sign choices, their structure matrices and I^2.

use manifold_maps::SignSignature;
use nalgebra::DMatrix;

fn main() -> manifold_maps::Result<()> {
    for sig in SignSignature::all() {
        let i1 = sig.source_structure(1)?;
        let i2 = sig.target_structure(1)?;
        let sq1 = (i1.dense() * i1.dense())[(0, 0)];
        let sq2 = (i2.dense() * i2.dense())[(0, 0)];
        let kind = |s: f64| if s < 0.0 { "complex" } else { "product" };
        println!(
            "{sig}  I1^2 = {sq1:+}  ({})  I2^2 = {sq2:+}  ({})",
            kind(sq1),
            kind(sq2)
        );
    }
    let j = SignSignature::from_ints([1, -1, 1, -1])?.source_structure(2)?;
    assert_eq!(j.dense() * j.dense(), -DMatrix::<f64>::identity(4, 4));
    println!("\nsymplectic J for m = 2:\n{}", j.dense());
    Ok(())
}
