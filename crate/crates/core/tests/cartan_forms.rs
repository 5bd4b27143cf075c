use manifold_maps::cartan::{
    cartan_flow, evaluate_form, full_form, restrict_form, BlockFormHamiltonian, PairedCoordinates,
    RestrictionMode,
};
use manifold_maps::kaehler::kaehler_real_hamiltonian;
use manifold_maps::ode::TauGrid;
use manifold_maps::solver::{self, MapProblem};
use manifold_maps::{SignSignature, FIRST_FORMALISM};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn form_is_conserved_along_opposite_sign_flow() {
    let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.1, 0.8, 0.3, -0.5, 0.2, 1.2]);
    let h = BlockFormHamiltonian::from_real(&m).unwrap();
    let signs = SignSignature::from_ints([1, -1, 1, -1]).unwrap();
    let coords = PairedCoordinates::real(&[1.0, -0.5, 0.25], &[0.3, 0.7, -1.0]).unwrap();
    let grid = TauGrid::new(0.0, 5.0, 5000).unwrap();
    let traj = cartan_flow(&h, signs, &coords, &grid).unwrap();
    let h0 = h.quadratic_value(&coords.state()).unwrap();
    for state in &traj.values {
        let hv = h.quadratic_value(state).unwrap();
        assert!((hv - h0).norm() < 1e-8 * h0.norm().max(1.0), "{hv} vs {h0}");
    }
}

#[test]
fn pairing_is_conserved_for_symmetric_m() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, -0.7]);
    let h = BlockFormHamiltonian::from_real(&m).unwrap();
    let coords = PairedCoordinates::real(&[0.5, -1.0], &[2.0, 0.25]).unwrap();
    let traj = cartan_flow(
        &h,
        FIRST_FORMALISM,
        &coords,
        &TauGrid::new(0.0, 5.0, 5000).unwrap(),
    )
    .unwrap();
    let h0 = evaluate_form(&h, &coords).unwrap();
    for state in &traj.values {
        let p = PairedCoordinates::new(
            state.rows(0, 2).into(),
            state.rows(2, 2).into(),
            coords.kind(),
        )
        .unwrap();
        assert!((evaluate_form(&h, &p).unwrap() - h0).norm() < 1e-8);
    }
}

#[test]
fn map_between_block_forms_reproduces_target_flow() {
    let eye = DMatrix::<f64>::identity(2, 2);
    let src = kaehler_real_hamiltonian(&eye).unwrap();
    let tgt = kaehler_real_hamiltonian(&(eye * 2.0)).unwrap();
    let grid = TauGrid::new(0.0, 1.0, 1000).unwrap();
    let xi0 = DVector::from_vec(vec![1.0, 0.5, 0.25, -1.0]);
    let p = MapProblem::new(
        src.coefficient_field().unwrap(),
        tgt.coefficient_field().unwrap(),
        FIRST_FORMALISM,
        xi0.clone(),
        grid,
    )
    .unwrap();
    let sol = solver::solve_t_direct(&p).unwrap();
    let coords = PairedCoordinates::real(&[1.0, 0.5], &[0.25, -1.0]).unwrap();
    let direct = cartan_flow(&tgt, FIRST_FORMALISM, &coords, &grid).unwrap();
    for (eta, want) in sol.eta.values.iter().zip(&direct.values) {
        assert!((eta.map(|v| c(v, 0.0)) - want).camax() < 1e-8);
    }
}

fn small() -> impl Strategy<Value = f64> {
    -3.0..3.0f64
}

proptest! {
    #[test]
    fn restriction_matches_substitution(
        entries in prop::collection::vec(small(), 9),
        v in prop::collection::vec(small(), 6),
        index in 0usize..3,
    ) {
        let h = BlockFormHamiltonian::from_real(&DMatrix::from_row_slice(3, 3, &entries)).unwrap();
        let full = full_form(&h);
        let vc: Vec<Complex64> = v.iter().map(|&a| c(a, 0.0)).collect();

        let merged = restrict_form(&h, RestrictionMode::DiagonalMerge, index).unwrap();
        prop_assert_eq!(merged.dim(), 5);
        let mut embed = vc[..5].to_vec();
        embed.insert(3 + index, vc[index]);
        let want = full.evaluate(&embed).unwrap();
        let got = merged.evaluate(&vc[..5]).unwrap();
        prop_assert!((got - want).norm() < 1e-9 * (1.0 + want.norm()));

        let sliced = restrict_form(&h, RestrictionMode::ZeroSlice, index).unwrap();
        prop_assert_eq!(sliced.dim(), 4);
        let mut embed = vc[..4].to_vec();
        embed.insert(index, c(0.0, 0.0));
        embed.insert(3 + index, c(0.0, 0.0));
        let want = full.evaluate(&embed).unwrap();
        let got = sliced.evaluate(&vc[..4]).unwrap();
        prop_assert!((got - want).norm() < 1e-9 * (1.0 + want.norm()));
    }

    #[test]
    fn form_value_is_bilinear_pairing(entries in prop::collection::vec(small(), 4), v in prop::collection::vec(small(), 4)) {
        let m = DMatrix::from_row_slice(2, 2, &entries);
        let h = BlockFormHamiltonian::from_real(&m).unwrap();
        let coords = PairedCoordinates::real(&v[..2], &v[2..]).unwrap();
        let mut want = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                want += v[2 + i] * m[(i, j)] * v[j];
            }
        }
        let got = evaluate_form(&h, &coords).unwrap();
        prop_assert!((got.re - want).abs() < 1e-12 * (1.0 + want.abs()) && got.im == 0.0);
        let full = full_form(&h).evaluate(&v.iter().map(|&a| c(a, 0.0)).collect::<Vec<_>>()).unwrap();
        prop_assert!((full - got).norm() < 1e-12 * (1.0 + want.abs()));
    }
}
