//! Solve T directly and through T = S K R, with tau-dependent fields.

use manifold_maps::ode::TauGrid;
use manifold_maps::solver::{self, MapProblem};
use manifold_maps::{CoefficientField, SignSignature};
use nalgebra::{DMatrix, DVector};

fn main() -> manifold_maps::Result<()> {
    let h = CoefficientField::tau_dependent(1, |tau| {
        DMatrix::from_row_slice(2, 2, &[1.0 + 0.5 * tau.sin(), 0.2, 0.2, 1.0])
    })?;
    let c = CoefficientField::tau_dependent(1, |tau| {
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0 + tau])
    })?;
    let sig = SignSignature::from_ints([1, -1, 1, 1])?;

    for steps in [50, 100, 200, 400] {
        let problem = MapProblem::new(
            h.clone(),
            c.clone(),
            sig,
            DVector::from_vec(vec![1.0, 0.5]),
            TauGrid::new(0.0, 2.0, steps)?,
        )?;
        let direct = solver::solve_t_direct(&problem)?;
        let f = solver::factorize(&problem, &direct)?;
        let gap = solver::factorization_agreement(&f.t_composed, &direct.t)?;
        println!("steps {steps:4}  max |S K R - T| / |T| = {gap:.3e}");
    }
    Ok(())
}
