//! Fixed-step classical Runge-Kutta integration on uniform grids.
//!
//! Every integration in the crate (source flow, transformation matrix, the
//! two factor systems) runs on a [`TauGrid`] so that trajectories produced by
//! different solves share nodes and can be compared node by node.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// States whose norm exceeds this abort the integration.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Differences below this are treated as roundoff when estimating orders.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// A value that can be advanced by an explicit integrator.
pub trait OdeState: Clone {
    /// `self + a * other`.
    fn axpy(&self, a: f64, other: &Self) -> Self;
    fn scale(&self, a: f64) -> Self;
    /// Largest absolute entry; NaN if any entry is NaN.
    fn max_abs(&self) -> f64;
    /// Euclidean (Frobenius) distance.
    fn distance(&self, other: &Self) -> f64;
    /// Size of the value, for shape checks.
    fn shape(&self) -> (usize, usize);
}

fn max_abs_iter<'a>(it: impl Iterator<Item = &'a f64>) -> f64 {
    let mut out = 0.0f64;
    for v in it {
        if v.is_nan() {
            return f64::NAN;
        }
        out = out.max(v.abs());
    }
    out
}

impl OdeState for f64 {
    fn axpy(&self, a: f64, other: &Self) -> Self {
        self + a * other
    }
    fn scale(&self, a: f64) -> Self {
        a * self
    }
    fn max_abs(&self) -> f64 {
        if self.is_nan() {
            f64::NAN
        } else {
            self.abs()
        }
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
    fn shape(&self) -> (usize, usize) {
        (1, 1)
    }
}

impl OdeState for DVector<f64> {
    fn axpy(&self, a: f64, other: &Self) -> Self {
        let mut out = self.clone();
        out.zip_apply(other, |x, y| *x += a * y);
        out
    }
    fn scale(&self, a: f64) -> Self {
        self * a
    }
    fn max_abs(&self) -> f64 {
        max_abs_iter(self.iter())
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
}

impl OdeState for DMatrix<f64> {
    fn axpy(&self, a: f64, other: &Self) -> Self {
        let mut out = self.clone();
        out.zip_apply(other, |x, y| *x += a * y);
        out
    }
    fn scale(&self, a: f64) -> Self {
        self * a
    }
    fn max_abs(&self) -> f64 {
        max_abs_iter(self.iter())
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn shape(&self) -> (usize, usize) {
        self.shape()
    }
}

impl OdeState for DVector<Complex64> {
    fn axpy(&self, a: f64, other: &Self) -> Self {
        self + other * Complex64::from(a)
    }
    fn scale(&self, a: f64) -> Self {
        self * Complex64::from(a)
    }
    fn max_abs(&self) -> f64 {
        let mut out = 0.0f64;
        for v in self.iter() {
            if v.re.is_nan() || v.im.is_nan() {
                return f64::NAN;
            }
            out = out.max(v.norm());
        }
        out
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
}

/// A uniform grid of `steps + 1` nodes on `[tau0, tau1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    tau0: f64,
    tau1: f64,
    steps: usize,
}

impl TauGrid {
    pub fn new(tau0: f64, tau1: f64, steps: usize) -> Result<Self> {
        if !tau0.is_finite() || !tau1.is_finite() {
            return invalid("grid endpoints must be finite");
        }
        if tau1 <= tau0 {
            return invalid(format!("grid needs tau1 > tau0, got [{tau0}, {tau1}]"));
        }
        if steps == 0 {
            return invalid("grid needs at least one step");
        }
        Ok(Self { tau0, tau1, steps })
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        (self.tau1 - self.tau0) / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.tau1
        } else {
            self.tau0 + k as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.node(k))
    }

    /// The same interval with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            steps: self.steps * factor.max(1),
            ..*self
        }
    }

    /// Index of the node equal to `tau`, if any (within a tiny fraction of a step).
    pub fn index_of(&self, tau: f64) -> Option<usize> {
        let x = (tau - self.tau0) / self.h();
        let k = x.round();
        if k < 0.0 || k > self.steps as f64 || (x - k).abs() > 1e-9 {
            None
        } else {
            Some(k as usize)
        }
    }

    pub fn contains(&self, tau: f64) -> bool {
        let slack = 1e-12 * (self.tau1 - self.tau0);
        tau >= self.tau0 - slack && tau <= self.tau1 + slack
    }
}

/// Values sampled at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub grid: TauGrid,
    pub values: Vec<T>,
}

impl<T> Trajectory<T> {
    pub fn new(grid: TauGrid, values: Vec<T>) -> Result<Self>
    where
        T: OdeState,
    {
        if values.len() != grid.len() {
            return invalid(format!(
                "trajectory has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            ));
        }
        if let Some(first) = values.first() {
            let shape = first.shape();
            if values.iter().any(|v| v.shape() != shape) {
                return invalid("trajectory values must share one shape");
            }
        }
        Ok(Self { grid, values })
    }

    pub fn first(&self) -> &T {
        &self.values[0]
    }

    pub fn last(&self) -> &T {
        self.values.last().expect("trajectories are never empty")
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &T)> {
        self.grid.nodes().zip(self.values.iter())
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Trajectory<U> {
        Trajectory {
            grid: self.grid,
            values: self.values.iter().map(f).collect(),
        }
    }
}

fn check_finite<T: OdeState>(v: &T, tau: f64) -> Result<()> {
    let n = v.max_abs();
    // NaN fails this comparison
    if n <= DIVERGENCE_LIMIT {
        Ok(())
    } else {
        Err(Error::Diverged { tau })
    }
}

/// One classical RK4 step.
pub fn rk4_step<T, F>(rhs: &F, y: &T, tau: f64, h: f64) -> Result<T>
where
    T: OdeState,
    F: Fn(&T, f64) -> T,
{
    let half = 0.5 * h;
    let k1 = rhs(y, tau);
    check_finite(&k1, tau)?;
    let k2 = rhs(&y.axpy(half, &k1), tau + half);
    check_finite(&k2, tau + half)?;
    let k3 = rhs(&y.axpy(half, &k2), tau + half);
    check_finite(&k3, tau + half)?;
    let k4 = rhs(&y.axpy(h, &k3), tau + h);
    check_finite(&k4, tau + h)?;
    let next = y
        .axpy(h / 6.0, &k1)
        .axpy(h / 3.0, &k2)
        .axpy(h / 3.0, &k3)
        .axpy(h / 6.0, &k4);
    check_finite(&next, tau + h)?;
    Ok(next)
}

/// Integrates `y' = rhs(y, tau)` from `y0` with classical RK4 on `grid`.
pub fn integrate<T, F>(rhs: F, y0: T, grid: &TauGrid) -> Result<Trajectory<T>>
where
    T: OdeState,
    F: Fn(&T, f64) -> T,
{
    check_finite(&y0, grid.tau0())?;
    let h = grid.h();
    let mut values = Vec::with_capacity(grid.len());
    values.push(y0);
    for k in 0..grid.steps() {
        let next = rk4_step(&rhs, &values[k], grid.node(k), h)?;
        values.push(next);
    }
    Ok(Trajectory {
        grid: *grid,
        values,
    })
}

/// Empirical order of accuracy by step halving.
///
/// Integrates on `grid`, then with `2, 4, ..., 2^refinements` times as many
/// steps. Successive endpoint differences `e_k` are formed and the returned
/// estimate is `log2(e_{k} / e_{k+1})` for the finest pair.
pub fn convergence_order<T, F>(rhs: F, y0: T, grid: &TauGrid, refinements: usize) -> Result<f64>
where
    T: OdeState,
    F: Fn(&T, f64) -> T,
{
    if refinements < 2 {
        return invalid("convergence order needs at least two refinements");
    }
    let mut endpoints = Vec::with_capacity(refinements + 1);
    for r in 0..=refinements {
        let g = grid.refined(1 << r);
        endpoints.push(integrate(&rhs, y0.clone(), &g)?.last().clone());
    }
    let diffs: Vec<f64> = endpoints.windows(2).map(|w| w[0].distance(&w[1])).collect();
    let n = diffs.len();
    let (coarse, fine) = (diffs[n - 2], diffs[n - 1]);
    if coarse < ROUNDOFF_FLOOR || fine < ROUNDOFF_FLOOR {
        return Err(Error::OrderIndeterminate {
            error: coarse.min(fine),
        });
    }
    Ok((coarse / fine).log2())
}

/// A matrix-valued function of `tau` alone.
pub trait MatrixField {
    fn at(&self, tau: f64) -> DMatrix<f64>;

    /// Whether evaluation is meaningful everywhere on `grid`.
    fn covers(&self, _grid: &TauGrid) -> bool {
        true
    }
}

impl<F> MatrixField for F
where
    F: Fn(f64) -> DMatrix<f64>,
{
    fn at(&self, tau: f64) -> DMatrix<f64> {
        self(tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Linear,
    /// Piecewise cubic Hermite with centered-difference slopes.
    Cubic,
}

/// Matrices sampled on a grid, interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedField {
    pub grid: TauGrid,
    pub samples: Vec<DMatrix<f64>>,
    pub interpolation: Interpolation,
}

impl TabulatedField {
    pub fn new(
        grid: TauGrid,
        samples: Vec<DMatrix<f64>>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        Trajectory::new(grid, samples.clone())?;
        Ok(Self {
            grid,
            samples,
            interpolation,
        })
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    fn slope(&self, k: usize) -> DMatrix<f64> {
        let h = self.grid.h();
        let last = self.samples.len() - 1;
        if last == 0 {
            return DMatrix::zeros(self.samples[0].nrows(), self.samples[0].ncols());
        }
        if k == 0 {
            (&self.samples[1] - &self.samples[0]) / h
        } else if k == last {
            (&self.samples[last] - &self.samples[last - 1]) / h
        } else {
            (&self.samples[k + 1] - &self.samples[k - 1]) / (2.0 * h)
        }
    }
}

impl MatrixField for TabulatedField {
    /// Evaluation outside the grid clamps to the nearest endpoint.
    fn at(&self, tau: f64) -> DMatrix<f64> {
        let h = self.grid.h();
        let mut x = ((tau - self.grid.tau0()) / h).clamp(0.0, self.grid.steps() as f64);
        if (x - x.round()).abs() < 1e-9 {
            x = x.round();
        }
        let k = (x.floor() as usize).min(self.grid.steps() - 1);
        let t = x - k as f64;
        let (y0, y1) = (&self.samples[k], &self.samples[k + 1]);
        if t == 0.0 {
            return y0.clone();
        }
        if t == 1.0 {
            return y1.clone();
        }
        match self.interpolation {
            Interpolation::Linear => y0 * (1.0 - t) + y1 * t,
            Interpolation::Cubic => {
                let t2 = t * t;
                let t3 = t2 * t;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                y0 * h00 + self.slope(k) * (h10 * h) + y1 * h01 + self.slope(k + 1) * (h11 * h)
            }
        }
    }

    fn covers(&self, grid: &TauGrid) -> bool {
        self.grid.contains(grid.tau0()) && self.grid.contains(grid.tau1())
    }
}

/// Fourth-order finite-difference derivative of a trajectory at every node:
/// five-point central stencils inside, one-sided fourth-order stencils at the
/// two nodes nearest each end.
pub fn differentiate<T: OdeState>(traj: &Trajectory<T>) -> Result<Vec<T>> {
    let v = &traj.values;
    let n = v.len();
    if n < 5 {
        return invalid(format!(
            "finite-difference derivative needs at least 5 nodes, got {n}"
        ));
    }
    let inv = 1.0 / (12.0 * traj.grid.h());
    // weights sum to zero, so differences against a pivot node keep
    // constant trajectories exactly stationary
    let combo = |pivot: usize, terms: &[(f64, usize)]| {
        let mut acc = v[pivot].scale(0.0);
        for &(c, i) in terms {
            acc = acc.axpy(c * inv, &v[i].axpy(-1.0, &v[pivot]));
        }
        acc
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let d = match k {
            0 => combo(0, &[(48.0, 1), (-36.0, 2), (16.0, 3), (-3.0, 4)]),
            1 => combo(1, &[(-3.0, 0), (18.0, 2), (-6.0, 3), (1.0, 4)]),
            k if k == n - 2 => combo(
                n - 2,
                &[(3.0, n - 1), (-18.0, n - 3), (6.0, n - 4), (-1.0, n - 5)],
            ),
            k if k == n - 1 => combo(
                n - 1,
                &[(-48.0, n - 2), (36.0, n - 3), (-16.0, n - 4), (3.0, n - 5)],
            ),
            k => combo(
                k,
                &[(1.0, k - 2), (-8.0, k - 1), (8.0, k + 1), (-1.0, k + 2)],
            ),
        };
        out.push(d);
    }
    Ok(out)
}
