//! Under the first-formalism signs the signed block equations reduce to the
//! plain symplectic ones.

use manifold_maps::solver::{transform_rhs, transform_rhs_blocks};
use manifold_maps::FIRST_FORMALISM;
use nalgebra::DMatrix;

fn main() -> manifold_maps::Result<()> {
    let t = DMatrix::from_fn(4, 4, |i, j| ((i * 4 + j) as f64 * 0.37).sin());
    let y = DMatrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
    let z = DMatrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.1 * (i + j) as f64 });

    let blocks = transform_rhs_blocks(FIRST_FORMALISM, &t, &y, &z)?;
    let dense = transform_rhs(
        &FIRST_FORMALISM.source_structure(2)?,
        &FIRST_FORMALISM.target_structure(2)?,
        &t,
        &y,
        &z,
    );
    println!("block form:\n{blocks:.6}");
    println!("max |block - dense| = {:.3e}", (&blocks - dense).amax());
    Ok(())
}
