//! Map a frequency-2 oscillator onto a unit oscillator and check that the
//! mapped trajectory obeys the target dynamics.

use manifold_maps::ode::TauGrid;
use manifold_maps::solver::{self, MapProblem};
use manifold_maps::{CoefficientField, FIRST_FORMALISM};
use nalgebra::{DMatrix, DVector};

fn main() -> manifold_maps::Result<()> {
    let source =
        CoefficientField::constant(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])))?;
    let target = CoefficientField::constant(DMatrix::identity(2, 2))?;
    let problem = MapProblem::new(
        source,
        target,
        FIRST_FORMALISM,
        DVector::from_vec(vec![1.0, 0.0]),
        TauGrid::new(0.0, 1.0, 250)?,
    )?
    .with_t0(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])))?;

    let sol = solver::solve_t_direct(&problem)?;
    println!("T(1) =\n{:.6}", sol.t.last());
    println!("eta(1) = {:.6?}", sol.eta.last().as_slice());
    println!("max |eta' - I2 C eta| = {:.3e}", sol.max_residual_target());

    let study = solver::map_property_order(&problem, 3)?;
    for (n, r) in study.steps.iter().zip(&study.max_residuals) {
        println!("  steps {n:5}  residual {r:.3e}");
    }
    println!("observed order {:.2}", study.order);

    let poisson = solver::poisson_structure_report(sol.t.last())?;
    println!(
        "bracket defect {:.4} (symplectic: {})",
        poisson.defect, poisson.is_symplectic
    );
    Ok(())
}
