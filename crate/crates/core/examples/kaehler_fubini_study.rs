//! Metric, connection and curvature of the Fubini-Study potential, with the
//! fitted holomorphic sectional curvature.

use manifold_maps::kaehler::{self, KaehlerPotential, MetricField};

fn main() -> manifold_maps::Result<()> {
    let n = 2;
    let pot = KaehlerPotential::fubini_study(n, 1.0)?;
    let points = kaehler::sample_points(n, 4, 0.5, 7);

    let field = MetricField::from_potential(&pot, kaehler::DEFAULT_METRIC_STEP);
    let worst = kaehler::hermitian_validate(&field, &points)
        .iter()
        .map(|r| r.hermitian_violation)
        .fold(0.0, f64::max);
    println!("hermitian violation {worst:.2e}");

    let mut tables = Vec::new();
    for p in &points {
        let g = kaehler::metric_from_potential(&pot, p, kaehler::DEFAULT_METRIC_STEP)?;
        let gamma = kaehler::christoffel_kaehler(&pot, p, kaehler::DEFAULT_CONNECTION_STEP)?;
        let closed =
            kaehler::kaehler_condition_residual(&field, p, kaehler::DEFAULT_CONNECTION_STEP)?;
        println!(
            "z = ({})  det g = {:.5}  max |Gamma| = {:.4}  closedness {closed:.1e}",
            p.z()
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            g.g.determinant().re,
            gamma.gamma_holo.max_abs()
        );
        tables.push(kaehler::curvature(
            &pot,
            p,
            kaehler::DEFAULT_CURVATURE_STEP,
        )?);
    }

    let fit = kaehler::fit_holomorphic_curvature(&tables)?;
    println!(
        "K = {:.8}  worst model residual {:.2e}",
        fit.k,
        fit.max_residual()
    );
    for t in &tables {
        println!(
            "  einstein residual {:.2e}",
            kaehler::einstein_residual(t, &t.metric, fit.k, n)
        );
    }
    Ok(())
}
