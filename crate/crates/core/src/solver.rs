//! Transformation matrices between two quadratic systems.
//!
//! A source system `xi' = I1 X(xi, tau) xi` and a target system
//! `eta' = I2 Y(eta, tau) eta` are related by `eta = T xi` when
//!
//! ```text
//! T' + (dt/dtau) T I1 X = I2 Y T
//! ```
//!
//! [`solve_t_direct`] co-integrates `(xi, T)` with `Y` evaluated at
//! `eta = T xi`, so that `eta` satisfies the target equations identically
//! when `dt/dtau = 1`. The same `T` factors as `S K R`, where
//! `S' = I2 Y S`, `R' = -R I1 Z` with `Z = (dt/dtau) X`, and `K` is the
//! constant block matrix `[[a, d], [b, c]]`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::ode::{
    differentiate, integrate, Interpolation, MatrixField, OdeState, TabulatedField, TauGrid,
    Trajectory, ROUNDOFF_FLOOR,
};
use crate::structure::{BlockMatrix, CoefficientField, SignSignature, StructureMatrix};

/// Factors with a condition number above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// A map whose Poisson-structure defect is at most this is reported symplectic.
pub const SYMPLECTIC_TOLERANCE: f64 = 1e-10;

/// Relative size of the transformation-equation residual that raises the
/// warning flag on a [`MapSolution`].
pub const RESIDUAL_WARNING: f64 = 1e-4;

pub type TimeRate = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Everything needed to construct a map between two quadratic systems.
#[derive(Clone)]
pub struct MapProblem {
    source: CoefficientField,
    target: CoefficientField,
    signature: SignSignature,
    i1: StructureMatrix,
    i2: StructureMatrix,
    dt_dtau: Option<TimeRate>,
    xi0: DVector<f64>,
    t0: DMatrix<f64>,
    grid: TauGrid,
    interpolation: Interpolation,
}

impl fmt::Debug for MapProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapProblem")
            .field("m", &self.m())
            .field("source", &self.source)
            .field("target", &self.target)
            .field("signature", &self.signature)
            .field(
                "dt_dtau",
                &self.dt_dtau.as_ref().map(|_| "custom").unwrap_or("1"),
            )
            .field("xi0", &self.xi0.as_slice())
            .field("grid", &self.grid)
            .finish()
    }
}

impl MapProblem {
    /// A problem with `T0 = I` and `dt/dtau = 1`.
    pub fn new(
        source: CoefficientField,
        target: CoefficientField,
        signature: SignSignature,
        xi0: DVector<f64>,
        grid: TauGrid,
    ) -> Result<Self> {
        let m = source.m();
        if target.m() != m {
            return invalid(format!(
                "source field has block size {m} but target field has {}",
                target.m()
            ));
        }
        if xi0.len() != 2 * m {
            return invalid(format!(
                "initial state has length {} but expected {}",
                xi0.len(),
                2 * m
            ));
        }
        Ok(Self {
            i1: signature.source_structure(m)?,
            i2: signature.target_structure(m)?,
            source,
            target,
            signature,
            dt_dtau: None,
            xi0,
            t0: DMatrix::identity(2 * m, 2 * m),
            grid,
            interpolation: Interpolation::Linear,
        })
    }

    pub fn with_t0(mut self, t0: DMatrix<f64>) -> Result<Self> {
        let n = 2 * self.m();
        if t0.shape() != (n, n) {
            return invalid(format!("T0 must be {n}x{n}, got {:?}", t0.shape()));
        }
        self.t0 = t0;
        Ok(self)
    }

    /// Sets an explicit proper-time rate `dt/dtau` as a function of `tau`.
    pub fn with_dt_dtau<F>(mut self, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if let Some(tau) = self.grid.nodes().find(|&t| !f(t).is_finite()) {
            return invalid(format!("dt/dtau is not finite at tau = {tau}"));
        }
        self.dt_dtau = Some(Arc::new(f));
        Ok(self)
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn with_grid(mut self, grid: TauGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn m(&self) -> usize {
        self.source.m()
    }

    pub fn source(&self) -> &CoefficientField {
        &self.source
    }

    pub fn target(&self) -> &CoefficientField {
        &self.target
    }

    pub fn signature(&self) -> SignSignature {
        self.signature
    }

    pub fn i1(&self) -> &StructureMatrix {
        &self.i1
    }

    pub fn i2(&self) -> &StructureMatrix {
        &self.i2
    }

    pub fn xi0(&self) -> &DVector<f64> {
        &self.xi0
    }

    pub fn t0(&self) -> &DMatrix<f64> {
        &self.t0
    }

    pub fn grid(&self) -> &TauGrid {
        &self.grid
    }

    pub fn has_unit_rate(&self) -> bool {
        self.dt_dtau.is_none()
    }

    pub fn dt_dtau(&self, tau: f64) -> f64 {
        self.dt_dtau.as_ref().map_or(1.0, |f| f(tau))
    }
}

/// Result of [`solve_t_direct`].
#[derive(Debug, Clone)]
pub struct MapSolution {
    pub xi: Trajectory<DVector<f64>>,
    pub t: Trajectory<DMatrix<f64>>,
    /// `eta = T xi` at every node.
    pub eta: Trajectory<DVector<f64>>,
    /// `Z(tau) = (dt/dtau) X(xi(tau), tau)` on the grid.
    pub z_tab: TabulatedField,
    /// `Y(tau) = Y(eta(tau), tau)` on the grid.
    pub y_tab: TabulatedField,
    /// Frobenius norm of `T' + T I1 Z - I2 Y T`, with `T'` by finite differences.
    pub residual_full: Vec<f64>,
    /// Defect of the target equations for `eta`, see [`verify_target_dynamics`].
    pub residual_target: Vec<f64>,
    /// Set when some `residual_full` exceeds `1e-4 (1 + |T|)`.
    pub warning: bool,
}

impl MapSolution {
    pub fn max_residual_full(&self) -> f64 {
        self.residual_full.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_residual_target(&self) -> f64 {
        self.residual_target.iter().copied().fold(0.0, f64::max)
    }
}

/// Joint state of the direct solve.
#[derive(Debug, Clone, PartialEq)]
struct MapState {
    xi: DVector<f64>,
    t: DMatrix<f64>,
}

impl OdeState for MapState {
    fn axpy(&self, a: f64, other: &Self) -> Self {
        Self {
            xi: self.xi.axpy(a, &other.xi),
            t: OdeState::axpy(&self.t, a, &other.t),
        }
    }
    fn scale(&self, a: f64) -> Self {
        Self {
            xi: &self.xi * a,
            t: &self.t * a,
        }
    }
    fn max_abs(&self) -> f64 {
        let (a, b) = (OdeState::max_abs(&self.xi), OdeState::max_abs(&self.t));
        if a.is_nan() || b.is_nan() {
            f64::NAN
        } else {
            a.max(b)
        }
    }
    fn distance(&self, other: &Self) -> f64 {
        let a = (&self.xi - &other.xi).norm_squared();
        let b = (&self.t - &other.t).norm_squared();
        (a + b).sqrt()
    }
    fn shape(&self) -> (usize, usize) {
        self.t.shape()
    }
}

/// Matrix form of the transformation equation's right side,
/// `I2 Y T - T I1 Z`.
pub fn transform_rhs(
    i1: &StructureMatrix,
    i2: &StructureMatrix,
    t: &DMatrix<f64>,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> DMatrix<f64> {
    i2.mul_left(&(y * t)) - i1.mul_right(t) * z
}

/// Block form of the transformation equation's right side:
///
/// ```text
/// T1' = e3 (Y3 T1 + Y4 T3) - e2 T2 Z1 - e1 T1 Z3
/// T2' = e3 (Y3 T2 + Y4 T4) - e2 T2 Z2 - e1 T1 Z4
/// T3' = e4 (Y1 T1 + Y2 T3) - e2 T4 Z1 - e1 T3 Z3
/// T4' = e4 (Y1 T2 + Y2 T4) - e2 T4 Z2 - e1 T3 Z4
/// ```
pub fn transform_rhs_blocks(
    sig: SignSignature,
    t: &DMatrix<f64>,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let t = BlockMatrix::split(t)?;
    let y = BlockMatrix::split(y)?;
    let z = BlockMatrix::split(z)?;
    if y.m != t.m || z.m != t.m {
        return invalid("T, Y and Z must share one block size");
    }
    let (e1, e2, e3, e4) = (
        sig.eps1.value(),
        sig.eps2.value(),
        sig.eps3.value(),
        sig.eps4.value(),
    );
    let d1 = (&y.b3 * &t.b1 + &y.b4 * &t.b3) * e3 - &t.b2 * &z.b1 * e2 - &t.b1 * &z.b3 * e1;
    let d2 = (&y.b3 * &t.b2 + &y.b4 * &t.b4) * e3 - &t.b2 * &z.b2 * e2 - &t.b1 * &z.b4 * e1;
    let d3 = (&y.b1 * &t.b1 + &y.b2 * &t.b3) * e4 - &t.b4 * &z.b1 * e2 - &t.b3 * &z.b3 * e1;
    let d4 = (&y.b1 * &t.b2 + &y.b2 * &t.b4) * e4 - &t.b4 * &z.b2 * e2 - &t.b3 * &z.b4 * e1;
    Ok(BlockMatrix::from_blocks(d1, d2, d3, d4)?.join())
}

/// Integrates `xi' = I X(xi, tau) xi`, i.e. `xi' = I dH/dxi`.
pub fn hamilton_flow(
    field: &CoefficientField,
    structure: &StructureMatrix,
    x0: &DVector<f64>,
    grid: &TauGrid,
) -> Result<Trajectory<DVector<f64>>> {
    if field.m() != structure.m() {
        return invalid(format!(
            "field block size {} does not match structure block size {}",
            field.m(),
            structure.m()
        ));
    }
    if x0.len() != field.dim() {
        return invalid(format!(
            "initial state has length {} but expected {}",
            x0.len(),
            field.dim()
        ));
    }
    integrate(
        |xi: &DVector<f64>, tau| structure.mul_vec(&(field.coefficient_unchecked(xi, tau) * xi)),
        x0.clone(),
        grid,
    )
}

/// Solves the transformation equation directly, co-integrated with the
/// source flow, and tabulates `Z` and `Y` along the solution.
pub fn solve_t_direct(problem: &MapProblem) -> Result<MapSolution> {
    let grid = problem.grid;
    if grid.len() < 5 {
        return invalid("direct solve needs at least 4 steps to form residuals");
    }
    let (src, tgt, i1, i2) = (&problem.source, &problem.target, &problem.i1, &problem.i2);

    let rhs = |s: &MapState, tau: f64| {
        let x = src.coefficient_unchecked(&s.xi, tau);
        let eta = &s.t * &s.xi;
        let y = tgt.coefficient_unchecked(&eta, tau);
        let rate = problem.dt_dtau(tau);
        let dxi = i1.mul_vec(&(&x * &s.xi));
        let dt = i2.mul_left(&(&y * &s.t)) - (i1.mul_right(&s.t) * &x) * rate;
        MapState { xi: dxi, t: dt }
    };
    let start = MapState {
        xi: problem.xi0.clone(),
        t: problem.t0.clone(),
    };
    let joint = integrate(rhs, start, &grid)?;

    let mut xis = Vec::with_capacity(grid.len());
    let mut ts = Vec::with_capacity(grid.len());
    for s in joint.values {
        xis.push(s.xi);
        ts.push(s.t);
    }
    let xi = Trajectory { grid, values: xis };
    let t = Trajectory { grid, values: ts };
    let eta = Trajectory {
        grid,
        values: t
            .values
            .iter()
            .zip(&xi.values)
            .map(|(t, x)| t * x)
            .collect(),
    };

    let mut zs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    for (k, tau) in grid.nodes().enumerate() {
        zs.push(src.coefficient_unchecked(&xi.values[k], tau) * problem.dt_dtau(tau));
        ys.push(tgt.coefficient_unchecked(&eta.values[k], tau));
    }

    let t_dot = differentiate(&t)?;
    let mut warning = false;
    let residual_full = (0..grid.len())
        .map(|k| {
            let defect = &t_dot[k] - transform_rhs(i1, i2, &t.values[k], &ys[k], &zs[k]);
            let r = defect.norm();
            if !(r <= RESIDUAL_WARNING * (1.0 + t.values[k].norm())) {
                warning = true;
            }
            r
        })
        .collect();
    let residual_target = verify_target_dynamics(&eta, tgt, i2)?;

    Ok(MapSolution {
        z_tab: TabulatedField::new(grid, zs, problem.interpolation)?,
        y_tab: TabulatedField::new(grid, ys, problem.interpolation)?,
        xi,
        t,
        eta,
        residual_full,
        residual_target,
        warning,
    })
}

fn check_factor_inputs(
    field: &impl MatrixField,
    structure: &StructureMatrix,
    init: &DMatrix<f64>,
    grid: &TauGrid,
) -> Result<()> {
    let n = structure.dim();
    if init.shape() != (n, n) {
        return invalid(format!(
            "initial factor must be {n}x{n}, got {:?}",
            init.shape()
        ));
    }
    if !field.covers(grid) {
        return invalid("coefficient table does not cover the integration range");
    }
    let probe = field.at(grid.tau0());
    if probe.shape() != (n, n) {
        return invalid(format!(
            "coefficients must be {n}x{n}, got {:?}",
            probe.shape()
        ));
    }
    Ok(())
}

/// Integrates the left factor `S' = I2 Y(tau) S`.
pub fn solve_s(
    y: &impl MatrixField,
    i2: &StructureMatrix,
    s0: &DMatrix<f64>,
    grid: &TauGrid,
) -> Result<Trajectory<DMatrix<f64>>> {
    check_factor_inputs(y, i2, s0, grid)?;
    integrate(
        |s: &DMatrix<f64>, tau| i2.mul_left(&(y.at(tau) * s)),
        s0.clone(),
        grid,
    )
}

/// Integrates the right factor `R' = -R I1 Z(tau)`.
pub fn solve_r(
    z: &impl MatrixField,
    i1: &StructureMatrix,
    r0: &DMatrix<f64>,
    grid: &TauGrid,
) -> Result<Trajectory<DMatrix<f64>>> {
    check_factor_inputs(z, i1, r0, grid)?;
    integrate(
        |r: &DMatrix<f64>, tau| -(i1.mul_right(r) * z.at(tau)),
        r0.clone(),
        grid,
    )
}

/// The four constant `m x m` matrices of the composition.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionConstants {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl CompositionConstants {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        // validates shapes
        BlockMatrix::from_blocks(a.clone(), d.clone(), b.clone(), c.clone())?;
        Ok(Self { a, b, c, d })
    }

    /// `a = c = I`, `b = d = 0`.
    pub fn identity(m: usize) -> Self {
        Self {
            a: DMatrix::identity(m, m),
            b: DMatrix::zeros(m, m),
            c: DMatrix::identity(m, m),
            d: DMatrix::zeros(m, m),
        }
    }

    /// Reads the constants off `K = [[a, d], [b, c]]`.
    pub fn from_kernel(k: &DMatrix<f64>) -> Result<Self> {
        let blocks = BlockMatrix::split(k)?;
        Ok(Self {
            a: blocks.b1,
            d: blocks.b2,
            b: blocks.b3,
            c: blocks.b4,
        })
    }

    /// `K = [[a, d], [b, c]]`.
    pub fn kernel(&self) -> DMatrix<f64> {
        BlockMatrix {
            m: self.a.nrows(),
            b1: self.a.clone(),
            b2: self.d.clone(),
            b3: self.b.clone(),
            b4: self.c.clone(),
        }
        .join()
    }
}

/// `T = S K R` node by node. In blocks,
/// `T1 = (S1 a + S2 b) R1 + (S1 d + S2 c) R3` and likewise for `T2..T4`.
pub fn compose_t(
    s: &Trajectory<DMatrix<f64>>,
    r: &Trajectory<DMatrix<f64>>,
    constants: &CompositionConstants,
) -> Result<Trajectory<DMatrix<f64>>> {
    if s.grid != r.grid {
        return invalid("S and R trajectories must share a grid");
    }
    let k = constants.kernel();
    if let Some(s0) = s.values.first() {
        if s0.ncols() != k.nrows() || r.values[0].nrows() != k.ncols() {
            return invalid(format!(
                "composition constants of size {} do not fit factors of size {}",
                k.nrows(),
                s0.ncols()
            ));
        }
    }
    Ok(Trajectory {
        grid: s.grid,
        values: s
            .values
            .iter()
            .zip(&r.values)
            .map(|(s, r)| s * &k * r)
            .collect(),
    })
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Constants making `S(tau) K R(tau) = T_target` at the node `tau`:
/// `K = S(tau)^-1 T_target R(tau)^-1`.
pub fn solve_constants_for_endpoint(
    s: &Trajectory<DMatrix<f64>>,
    r: &Trajectory<DMatrix<f64>>,
    t_target: &DMatrix<f64>,
    tau: f64,
) -> Result<CompositionConstants> {
    if s.grid != r.grid {
        return invalid("S and R trajectories must share a grid");
    }
    let Some(k) = s.grid.index_of(tau) else {
        return invalid(format!("tau = {tau} is not a grid node"));
    };
    let (sk, rk) = (&s.values[k], &r.values[k]);
    if t_target.shape() != sk.shape() {
        return invalid(format!(
            "target matrix must be {:?}, got {:?}",
            sk.shape(),
            t_target.shape()
        ));
    }
    for f in [sk, rk] {
        let cond = condition_number(f);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::SingularFactor {
                tau,
                condition: cond,
            });
        }
    }
    let s_inv = sk.clone().try_inverse().ok_or(Error::SingularFactor {
        tau,
        condition: f64::INFINITY,
    })?;
    let r_inv = rk.clone().try_inverse().ok_or(Error::SingularFactor {
        tau,
        condition: f64::INFINITY,
    })?;
    CompositionConstants::from_kernel(&(s_inv * t_target * r_inv))
}

/// Output of [`factorize`].
#[derive(Debug, Clone)]
pub struct FactorizedSolution {
    pub s: Trajectory<DMatrix<f64>>,
    pub r: Trajectory<DMatrix<f64>>,
    pub constants: CompositionConstants,
    pub t_composed: Trajectory<DMatrix<f64>>,
}

/// Builds `T` from the two factor systems with `S(tau0) = R(tau0) = I` and
/// constants matching `T0` at `tau0`.
///
/// When both fields are state independent the coefficients are evaluated
/// exactly; otherwise the tables recorded by the direct solve are used.
pub fn factorize(problem: &MapProblem, solution: &MapSolution) -> Result<FactorizedSolution> {
    let grid = problem.grid;
    let n = 2 * problem.m();
    let eye = DMatrix::identity(n, n);
    let exact = problem.source.is_state_independent() && problem.target.is_state_independent();
    let (s, r) = if exact {
        let zero = DVector::zeros(n);
        let y = |tau: f64| problem.target.eval(&zero, tau);
        let z = |tau: f64| problem.source.eval(&zero, tau) * problem.dt_dtau(tau);
        (
            solve_s(&y, &problem.i2, &eye, &grid)?,
            solve_r(&z, &problem.i1, &eye, &grid)?,
        )
    } else {
        (
            solve_s(&solution.y_tab, &problem.i2, &eye, &grid)?,
            solve_r(&solution.z_tab, &problem.i1, &eye, &grid)?,
        )
    };
    let constants = solve_constants_for_endpoint(&s, &r, &problem.t0, grid.tau0())?;
    let t_composed = compose_t(&s, &r, &constants)?;
    Ok(FactorizedSolution {
        s,
        r,
        constants,
        t_composed,
    })
}

/// `max_k |A_k - B_k|_F / (1 + |B_k|_F)`.
pub fn factorization_agreement(
    composed: &Trajectory<DMatrix<f64>>,
    direct: &Trajectory<DMatrix<f64>>,
) -> Result<f64> {
    if composed.grid != direct.grid {
        return invalid("trajectories must share a grid");
    }
    Ok(composed
        .values
        .iter()
        .zip(&direct.values)
        .map(|(c, d)| (c - d).norm() / (1.0 + d.norm()))
        .fold(0.0, f64::max))
}

/// Per-node defect `|D eta - I2 Y(eta, tau) eta|` of the target equations,
/// with `D eta` a fourth-order finite-difference derivative of the trajectory.
pub fn verify_target_dynamics(
    eta: &Trajectory<DVector<f64>>,
    target: &CoefficientField,
    i2: &StructureMatrix,
) -> Result<Vec<f64>> {
    if target.m() != i2.m() {
        return invalid("target field and structure matrix disagree on block size");
    }
    if eta.first().len() != target.dim() {
        return invalid(format!(
            "trajectory states have length {} but the field expects {}",
            eta.first().len(),
            target.dim()
        ));
    }
    let deriv = differentiate(eta)?;
    Ok(eta
        .iter()
        .zip(deriv)
        .map(|((tau, e), d)| (d - i2.mul_vec(&(target.coefficient_unchecked(e, tau) * e))).norm())
        .collect())
}

/// How far a matrix is from preserving the canonical Poisson structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonReport {
    /// `|T^T J T - J|_F`.
    pub defect: f64,
    pub is_symplectic: bool,
}

pub fn poisson_structure_report(t: &DMatrix<f64>) -> Result<PoissonReport> {
    if t.nrows() != t.ncols() || !t.nrows().is_multiple_of(2) || t.nrows() == 0 {
        return invalid(format!(
            "expected a square even-dimensional matrix, got {:?}",
            t.shape()
        ));
    }
    let j = StructureMatrix::symplectic(t.nrows() / 2)?;
    let defect = (t.transpose() * j.mul_left(t) - j.dense()).norm();
    Ok(PoissonReport {
        defect,
        is_symplectic: defect <= SYMPLECTIC_TOLERANCE,
    })
}

/// Target-equation residuals of the direct solve under successive grid halving.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPropertyStudy {
    pub steps: Vec<usize>,
    /// Largest [`verify_target_dynamics`] residual at each grid.
    pub max_residuals: Vec<f64>,
    /// `log2` ratios of successive residuals.
    pub pairwise_orders: Vec<f64>,
    /// Least-squares slope of `log residual` against `log h` over all grids.
    pub order: f64,
}

/// Solves `problem` on its grid and `refinements - 1` successive halvings.
pub fn map_property_order(problem: &MapProblem, refinements: usize) -> Result<MapPropertyStudy> {
    if refinements < 2 {
        return invalid("order estimate needs at least two grids");
    }
    let mut steps = Vec::with_capacity(refinements);
    let mut max_residuals = Vec::with_capacity(refinements);
    for k in 0..refinements {
        let grid = problem.grid.refined(1 << k);
        let sol = solve_t_direct(&problem.clone().with_grid(grid))?;
        steps.push(grid.steps());
        max_residuals.push(sol.max_residual_target());
    }
    if let Some(&r) = max_residuals.iter().find(|&&r| !(r > ROUNDOFF_FLOOR)) {
        return Err(Error::OrderIndeterminate { error: r });
    }
    let pairwise_orders = max_residuals
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    // halving h adds log2(1/2) per grid, so x_k = -k
    let n = refinements as f64;
    let xs: Vec<f64> = (0..refinements).map(|k| -(k as f64)).collect();
    let ys: Vec<f64> = max_residuals.iter().map(|r| r.log2()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(MapPropertyStudy {
        steps,
        max_residuals,
        pairwise_orders,
        order: sxy / sxx,
    })
}
