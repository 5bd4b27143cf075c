//! Block-form Hamiltonians over paired coordinates: forms, restrictions and
//! the flow with opposite signs.

use manifold_maps::cartan::{
    cartan_flow, evaluate_form, full_form, restrict_form, BlockFormHamiltonian, PairedCoordinates,
    RestrictionMode,
};
use manifold_maps::ode::TauGrid;
use manifold_maps::FIRST_FORMALISM;
use nalgebra::DMatrix;

fn main() -> manifold_maps::Result<()> {
    let h = BlockFormHamiltonian::from_real(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]))?;
    println!("H            = {}", full_form(&h));
    println!(
        "merged at 0  = {}",
        restrict_form(&h, RestrictionMode::DiagonalMerge, 0)?
    );
    println!(
        "sliced at 0  = {}",
        restrict_form(&h, RestrictionMode::ZeroSlice, 0)?
    );

    let coords = PairedCoordinates::real(&[1.0, 0.5], &[1.0, -0.5])?;
    let h0 = evaluate_form(&h, &coords)?;
    let traj = cartan_flow(&h, FIRST_FORMALISM, &coords, &TauGrid::new(0.0, 5.0, 5000)?)?;
    let end = traj.last();
    let last = PairedCoordinates::new(end.rows(0, 2).into(), end.rows(2, 2).into(), coords.kind())?;
    println!(
        "H(0) = {:.12}  H(5) = {:.12}",
        h0.re,
        evaluate_form(&h, &last)?.re
    );
    let re =
        |v: &nalgebra::DVector<num_complex::Complex64>| v.iter().map(|c| c.re).collect::<Vec<_>>();
    println!(
        "X(5) = {:.4?}  Xbar(5) = {:.4?}",
        re(last.x()),
        re(last.xbar())
    );
    Ok(())
}
