//! Numeric Hermitian and Kaehler geometry in complex coordinates.
//!
//! A point of a real `2n`-manifold with coordinates `(x, xbar)` has complex
//! coordinates `z = x + i xbar`. Metrics are stored by their mixed components
//! only, as the `n x n` matrix `G[(a, b)] = g_{a bbar}`; pure-type components
//! vanish for Hermitian metrics and are never represented. The contravariant
//! metric `g^{a bbar}` is `G^{-1}[(b, a)]`.
//!
//! Derivatives are taken in the real coordinates with sixth-order central
//! stencils and converted with `d/dz = (d/dx - i d/dxbar) / 2`,
//! `d/dzbar = (d/dx + i d/dxbar) / 2`. Potentials are differentiated by
//! nesting the stencil, up to fourth order for the curvature.
//!
//! Curvature uses the Kaehler expression
//!
//! ```text
//! R_{a bbar m nbar} = -d_m d_nbar g_{a bbar} + g^{r sbar} (d_m g_{a sbar}) (d_nbar g_{r bbar})
//! ```
//!
//! whose sign makes the Fubini-Study family have positive constant
//! holomorphic sectional curvature `K` in the model
//! `R = K/2 (g_{a bbar} g_{m nbar} + g_{a nbar} g_{m bbar})`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cartan::BlockFormHamiltonian;
use crate::error::{invalid, Error, Result};

// Default steps are powers of two so that shifts of dyadic points are exact.

/// Default step for metrics, `2^-10`.
pub const DEFAULT_METRIC_STEP: f64 = 1.0 / 1024.0;
/// Default step for Christoffel symbols and the Kaehler-condition check, `2^-7`.
pub const DEFAULT_CONNECTION_STEP: f64 = 1.0 / 128.0;
/// Default step for curvature (fourth derivatives of the potential), `2^-6`.
pub const DEFAULT_CURVATURE_STEP: f64 = 1.0 / 64.0;
/// Fourth differences below this step are dominated by roundoff.
pub const MIN_CURVATURE_STEP: f64 = 1e-4;
/// Metrics with a larger condition number are singular.
pub const MAX_METRIC_CONDITION: f64 = 1e12;
/// Allowed non-Hermitian part of a differentiated metric.
pub const HERMITIAN_TOLERANCE: f64 = 1e-8;
/// Allowed disagreement between an analytic metric and the differentiated potential.
pub const ANALYTIC_TOLERANCE: f64 = 1e-5;

// sixth-order central first derivative
const OFFSETS: [f64; 6] = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
const WEIGHTS: [f64; 6] = [
    -1.0 / 60.0,
    9.0 / 60.0,
    -45.0 / 60.0,
    45.0 / 60.0,
    -9.0 / 60.0,
    1.0 / 60.0,
];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// A point with complex coordinates `z` and their conjugates.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPoint {
    z: DVector<Complex64>,
    zbar: DVector<Complex64>,
}

impl ComplexPoint {
    pub fn new(z: DVector<Complex64>) -> Self {
        let zbar = z.map(|v| v.conj());
        Self { z, zbar }
    }

    pub fn from_slice(z: &[Complex64]) -> Self {
        Self::new(DVector::from_column_slice(z))
    }

    /// Checks that `zbar` is the conjugate of `z`.
    pub fn from_pair(z: DVector<Complex64>, zbar: DVector<Complex64>) -> Result<Self> {
        if z.len() != zbar.len() {
            return invalid("z and zbar must have equal length");
        }
        let defect = z
            .iter()
            .zip(zbar.iter())
            .map(|(a, b)| (a.conj() - b).norm())
            .fold(0.0, f64::max);
        if defect > 1e-12 {
            return invalid(format!(
                "zbar is not the conjugate of z (defect {defect:e})"
            ));
        }
        Ok(Self { z, zbar })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &DVector<Complex64> {
        &self.z
    }

    pub fn zbar(&self) -> &DVector<Complex64> {
        &self.zbar
    }

    /// `(x^1..x^n, xbar^1..xbar^n)`.
    pub fn real_coords(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.z[i].re
            } else {
                self.z[i - n].im
            }
        })
    }

    pub fn from_real_coords(r: &DVector<f64>) -> Self {
        let n = r.len() / 2;
        Self::new(DVector::from_fn(n, |i, _| c(r[i], r[n + i])))
    }

    /// `|z|^2 = sum z^a zbar^a`.
    pub fn norm_squared(&self) -> f64 {
        self.z.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// `z = x + i xbar`.
pub fn complexify(x: &[f64], xbar: &[f64]) -> Result<ComplexPoint> {
    if x.len() != xbar.len() {
        return invalid(format!(
            "x has length {} but xbar has length {}",
            x.len(),
            xbar.len()
        ));
    }
    Ok(ComplexPoint::new(DVector::from_iterator(
        x.len(),
        x.iter().zip(xbar).map(|(&a, &b)| c(a, b)),
    )))
}

/// Inverse of [`complexify`]: `x = (z + zbar)/2`, `xbar = (z - zbar)/(2i)`.
pub fn realify(p: &ComplexPoint) -> (Vec<f64>, Vec<f64>) {
    let x =
        p.z.iter()
            .zip(p.zbar.iter())
            .map(|(z, zb)| ((z + zb) * 0.5).re)
            .collect();
    let xbar =
        p.z.iter()
            .zip(p.zbar.iter())
            .map(|(z, zb)| ((z - zb) / c(0.0, 2.0)).re)
            .collect();
    (x, xbar)
}

/// Spacing of the lattice that [`sample_points`] rounds to.
pub const SAMPLE_LATTICE: f64 = 1.0 / 4096.0;

/// Deterministic sample points with real and imaginary parts in
/// `[-radius, radius]`, rounded to multiples of [`SAMPLE_LATTICE`].
pub fn sample_points(n: usize, count: usize, radius: f64, seed: u64) -> Vec<ComplexPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw =
        move || (rng.gen_range(-radius..=radius) / SAMPLE_LATTICE).round() * SAMPLE_LATTICE;
    (0..count)
        .map(|_| {
            ComplexPoint::new(DVector::from_fn(n, |_, _| {
                let re = draw();
                c(re, draw())
            }))
        })
        .collect()
}

pub type PotentialFn = dyn Fn(&ComplexPoint) -> f64 + Send + Sync;
pub type MetricFn = dyn Fn(&ComplexPoint) -> DMatrix<Complex64> + Send + Sync;

/// A real potential `phi` with `g_{a bbar} = d^2 phi / dz^a dzbar^b`.
#[derive(Clone)]
pub struct KaehlerPotential {
    n: usize,
    phi: Arc<PotentialFn>,
    analytic_metric: Option<Arc<MetricFn>>,
}

impl std::fmt::Debug for KaehlerPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KaehlerPotential")
            .field("n", &self.n)
            .field("analytic_metric", &self.analytic_metric.is_some())
            .finish()
    }
}

impl KaehlerPotential {
    pub fn new<F>(n: usize, phi: F) -> Result<Self>
    where
        F: Fn(&ComplexPoint) -> f64 + Send + Sync + 'static,
    {
        if n == 0 {
            return invalid("complex dimension must be at least 1");
        }
        Ok(Self {
            n,
            phi: Arc::new(phi),
            analytic_metric: None,
        })
    }

    pub fn with_analytic_metric<G>(mut self, g: G) -> Self
    where
        G: Fn(&ComplexPoint) -> DMatrix<Complex64> + Send + Sync + 'static,
    {
        self.analytic_metric = Some(Arc::new(g));
        self
    }

    /// `phi = sum z^a zbar^a`, with `g = I`.
    pub fn flat(n: usize) -> Result<Self> {
        Ok(Self::new(n, |p| p.norm_squared())?
            .with_analytic_metric(move |_| DMatrix::identity(n, n)))
    }

    /// `phi = scale * ln(1 + |z|^2)`, with
    /// `g_{a bbar} = scale (delta_ab / (1 + |z|^2) - zbar^a z^b / (1 + |z|^2)^2)`.
    pub fn fubini_study(n: usize, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return invalid(format!("Fubini-Study scale must be positive, got {scale}"));
        }
        Ok(
            Self::new(n, move |p| scale * (1.0 + p.norm_squared()).ln())?.with_analytic_metric(
                move |p| {
                    let s = 1.0 + p.norm_squared();
                    DMatrix::from_fn(n, n, |a, b| {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        (c(delta / s, 0.0) - p.zbar[a] * p.z[b] / (s * s)) * scale
                    })
                },
            ),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval(&self, p: &ComplexPoint) -> f64 {
        (self.phi)(p)
    }

    pub fn has_analytic_metric(&self) -> bool {
        self.analytic_metric.is_some()
    }

    fn check_point(&self, p: &ComplexPoint) -> Result<()> {
        if p.n() != self.n {
            return invalid(format!(
                "point has dimension {} but the potential expects {}",
                p.n(),
                self.n
            ));
        }
        Ok(())
    }
}

/// Mixed metric components at a point with their inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMetricTable {
    pub point: ComplexPoint,
    /// `g[(a, b)] = g_{a bbar}`.
    pub g: DMatrix<Complex64>,
    /// Matrix inverse of `g`.
    pub g_inv: DMatrix<Complex64>,
}

fn hermitian_violation(g: &DMatrix<Complex64>) -> f64 {
    (g - g.adjoint())
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

impl HermitianMetricTable {
    pub fn new(point: ComplexPoint, g: DMatrix<Complex64>) -> Result<Self> {
        let n = point.n();
        if g.shape() != (n, n) {
            return invalid(format!("metric must be {n}x{n}, got {:?}", g.shape()));
        }
        let violation = hermitian_violation(&g);
        if !(violation <= HERMITIAN_TOLERANCE) {
            return Err(Error::NonHermitian { violation });
        }
        let g_inv = invert_metric(&g)?;
        Ok(Self { point, g, g_inv })
    }

    pub fn n(&self) -> usize {
        self.point.n()
    }

    /// `g^{a bbar}`.
    pub fn contravariant(&self, a: usize, b: usize) -> Complex64 {
        self.g_inv[(b, a)]
    }
}

fn invert_metric(g: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let sv = g.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_METRIC_CONDITION) {
        return Err(Error::SingularMetric { condition });
    }
    g.clone()
        .try_inverse()
        .ok_or(Error::SingularMetric { condition })
}

/// A Hermitian metric given pointwise as the matrix `g_{a bbar}`.
#[derive(Clone)]
pub struct MetricField {
    n: usize,
    f: Arc<MetricFn>,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricField").field("n", &self.n).finish()
    }
}

impl MetricField {
    pub fn new<F>(n: usize, f: F) -> Self
    where
        F: Fn(&ComplexPoint) -> DMatrix<Complex64> + Send + Sync + 'static,
    {
        Self { n, f: Arc::new(f) }
    }

    pub fn flat(n: usize) -> Self {
        Self::new(n, move |_| DMatrix::identity(n, n))
    }

    /// The metric of a potential, differentiated with step `h` at every point.
    pub fn from_potential(pot: &KaehlerPotential, h: f64) -> Self {
        let pot = pot.clone();
        Self::new(pot.n, move |p| {
            let jet = PotentialJet::new(&pot, p, h, 2);
            jet.metric()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn metric(&self, p: &ComplexPoint) -> DMatrix<Complex64> {
        (self.f)(p)
    }

    fn at(&self, r: &DVector<f64>) -> DMatrix<Complex64> {
        (self.f)(&ComplexPoint::from_real_coords(r))
    }

    /// `(d_{z^v} g, d_{zbar^v} g)` for every `v`.
    fn derivatives(
        &self,
        p: &ComplexPoint,
        h: f64,
    ) -> (Vec<DMatrix<Complex64>>, Vec<DMatrix<Complex64>>) {
        let n = self.n;
        let r0 = p.real_coords();
        let real_diff = |k: usize| {
            let mut acc = DMatrix::<Complex64>::zeros(n, n);
            // antisymmetric pairs, so constant fields differentiate to zero exactly
            for (o, w) in OFFSETS[3..].iter().zip(&WEIGHTS[3..]) {
                let mut plus = r0.clone();
                let mut minus = r0.clone();
                plus[k] += o * h;
                minus[k] -= o * h;
                acc += (self.at(&plus) - self.at(&minus)) * c(w / h, 0.0);
            }
            acc
        };
        let mut dz = Vec::with_capacity(n);
        let mut dzbar = Vec::with_capacity(n);
        for v in 0..n {
            let dx = real_diff(v);
            let dy = real_diff(n + v);
            dz.push((&dx - &dy * c(0.0, 1.0)) * c(0.5, 0.0));
            dzbar.push((&dx + &dy * c(0.0, 1.0)) * c(0.5, 0.0));
        }
        (dz, dzbar)
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("finite-difference step must be positive, got {h}"));
    }
    Ok(())
}

/// Real partial derivatives of a potential at one point, keyed by the sorted
/// list of real coordinate indices.
struct PotentialJet {
    n: usize,
    values: HashMap<Vec<usize>, f64>,
}

fn multisets(dims: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(
        start: usize,
        dims: usize,
        left: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for d in start..dims {
            cur.push(d);
            rec(d, dims, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, dims, order, &mut Vec::new(), &mut out);
    out
}

impl PotentialJet {
    /// Derivatives of orders `2..=max_order`.
    fn new(pot: &KaehlerPotential, p: &ComplexPoint, h: f64, max_order: usize) -> Self {
        let n = pot.n;
        let r0 = p.real_coords();
        let mut values = HashMap::new();
        for order in 2..=max_order {
            for dirs in multisets(2 * n, order) {
                // pair every offset with its mirror so that polynomials of
                // low degree cancel exactly on dyadic points
                let mut total = 0.0;
                let mut idx = vec![0usize; order];
                loop {
                    let mut w = 1.0;
                    for &i in &idx {
                        w *= WEIGHTS[3 + i];
                    }
                    let mut diff = 0.0;
                    for mask in 0..(1u32 << order) {
                        let mut r = r0.clone();
                        for (slot, &i) in idx.iter().enumerate() {
                            let o = OFFSETS[3 + i] * h;
                            if mask & (1 << slot) == 0 {
                                r[dirs[slot]] += o;
                            } else {
                                r[dirs[slot]] -= o;
                            }
                        }
                        let v = pot.eval(&ComplexPoint::from_real_coords(&r));
                        if mask.count_ones() % 2 == 0 {
                            diff += v;
                        } else {
                            diff -= v;
                        }
                    }
                    total += w * diff;
                    let mut slot = 0;
                    while slot < order {
                        idx[slot] += 1;
                        if idx[slot] < 3 {
                            break;
                        }
                        idx[slot] = 0;
                        slot += 1;
                    }
                    if slot == order {
                        break;
                    }
                }
                values.insert(dirs, total / h.powi(order as i32));
            }
        }
        Self { n, values }
    }

    /// Mixed complex derivative. Each entry is `(index, conjugated)`:
    /// `(a, false)` is `d/dz^a`, `(a, true)` is `d/dzbar^a`.
    fn complex(&self, ops: &[(usize, bool)]) -> Complex64 {
        let n = self.n;
        let k = ops.len();
        let mut total = c(0.0, 0.0);
        for mask in 0..(1u32 << k) {
            let mut coeff = c(1.0, 0.0);
            let mut dirs = Vec::with_capacity(k);
            for (bit, &(a, conj)) in ops.iter().enumerate() {
                if mask & (1 << bit) == 0 {
                    coeff *= c(0.5, 0.0);
                    dirs.push(a);
                } else {
                    coeff *= if conj { c(0.0, 0.5) } else { c(0.0, -0.5) };
                    dirs.push(n + a);
                }
            }
            dirs.sort_unstable();
            total += coeff * self.values[&dirs];
        }
        total
    }

    fn metric(&self) -> DMatrix<Complex64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |a, b| self.complex(&[(a, false), (b, true)]))
    }
}

/// Metric of a potential at `p`, differentiated with step `h`. When the
/// potential carries an analytic metric it is checked against the
/// differentiated one and returned instead.
pub fn metric_from_potential(
    pot: &KaehlerPotential,
    p: &ComplexPoint,
    h: f64,
) -> Result<HermitianMetricTable> {
    check_step(h)?;
    pot.check_point(p)?;
    let g = PotentialJet::new(pot, p, h, 2).metric();
    if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return invalid("potential is not finite near the point");
    }
    let violation = hermitian_violation(&g);
    if !(violation <= HERMITIAN_TOLERANCE) {
        return Err(Error::NonHermitian { violation });
    }
    let g = match &pot.analytic_metric {
        Some(analytic) => {
            let exact = analytic(p);
            let deviation = (&exact - &g).iter().map(|v| v.norm()).fold(0.0, f64::max);
            if !(deviation <= ANALYTIC_TOLERANCE) {
                return Err(Error::AnalyticMismatch { deviation });
            }
            exact
        }
        None => g,
    };
    HermitianMetricTable::new(p.clone(), g)
}

/// Per-point outcome of [`hermitian_validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianReport {
    /// `max |g_{a bbar} - conj(g_{b abar})|`.
    pub hermitian_violation: f64,
    /// Largest imaginary part of `ds^2` over random displacements.
    pub line_element_imag: f64,
}

/// Number of random displacements used for the line-element realness check.
pub const LINE_ELEMENT_PROBES: usize = 8;

pub fn hermitian_validate(field: &MetricField, samples: &[ComplexPoint]) -> Vec<HermitianReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    samples
        .iter()
        .map(|p| {
            let g = field.metric(p);
            let line_element_imag = (0..LINE_ELEMENT_PROBES)
                .map(|_| {
                    let dz = DVector::from_fn(field.n, |_, _| {
                        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    });
                    complex_line_element(&g, &dz).im.abs()
                })
                .fold(0.0, f64::max);
            HermitianReport {
                hermitian_violation: hermitian_violation(&g),
                line_element_imag,
            }
        })
        .collect()
}

fn complex_line_element(g: &DMatrix<Complex64>, dz: &DVector<Complex64>) -> Complex64 {
    let n = dz.len();
    let mut s = c(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            s += g[(a, b)] * dz[a] * dz[b].conj();
        }
    }
    s * 2.0
}

/// `ds^2 = 2 g_{a bbar} dz^a conj(dz^b)`, real for a Hermitian metric.
pub fn line_element(g: &HermitianMetricTable, dz: &DVector<Complex64>) -> Result<f64> {
    if dz.len() != g.n() {
        return invalid(format!(
            "displacement has length {} but the metric is {}x{}",
            dz.len(),
            g.n(),
            g.n()
        ));
    }
    Ok(complex_line_element(&g.g, dz).re)
}

/// An `n x n x n` complex array indexed `[upper][lower1][lower2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Array3 {
    n: usize,
    data: Vec<Complex64>,
}

impl Array3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![c(0.0, 0.0); n * n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize, d: usize) -> Complex64 {
        self.data[(a * self.n + b) * self.n + d]
    }

    pub fn set(&mut self, a: usize, b: usize, d: usize, v: Complex64) {
        self.data[(a * self.n + b) * self.n + d] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// An `n^4` complex array.
#[derive(Debug, Clone, PartialEq)]
pub struct Array4 {
    n: usize,
    data: Vec<Complex64>,
}

impl Array4 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![c(0.0, 0.0); n * n * n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn idx(&self, a: usize, b: usize, m: usize, v: usize) -> usize {
        ((a * self.n + b) * self.n + m) * self.n + v
    }

    pub fn get(&self, a: usize, b: usize, m: usize, v: usize) -> Complex64 {
        self.data[self.idx(a, b, m, v)]
    }

    pub fn set(&mut self, a: usize, b: usize, m: usize, v: usize, val: Complex64) {
        let i = self.idx(a, b, m, v);
        self.data[i] = val;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Christoffel symbols at a point. Components with conjugated indices
/// follow by conjugation and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelTable {
    pub point: ComplexPoint,
    /// `Gamma^a_{m v}`.
    pub gamma_holo: Array3,
    /// `Gamma^a_{m vbar}`.
    pub gamma_mixed: Array3,
}

/// Christoffel symbols of a general Hermitian metric:
///
/// ```text
/// Gamma^a_{m v}    = 1/2 g^{a sbar} (d_v g_{sbar m} + d_m g_{sbar v})
/// Gamma^a_{m vbar} = 1/2 g^{a sbar} (d_vbar g_{m sbar} - d_sbar g_{m vbar})
/// ```
pub fn christoffel_hermitian(
    field: &MetricField,
    p: &ComplexPoint,
    h: f64,
) -> Result<ChristoffelTable> {
    check_step(h)?;
    if p.n() != field.n {
        return invalid("point and metric field dimensions differ");
    }
    let n = field.n;
    let table = HermitianMetricTable::new(p.clone(), field.metric(p))?;
    let (dz, dzbar) = field.derivatives(p, h);
    let mut holo = Array3::zeros(n);
    let mut mixed = Array3::zeros(n);
    for a in 0..n {
        for m in 0..n {
            for v in 0..n {
                let mut sh = c(0.0, 0.0);
                let mut sm = c(0.0, 0.0);
                for s in 0..n {
                    let up = table.contravariant(a, s);
                    sh += up * (dz[v][(m, s)] + dz[m][(v, s)]);
                    sm += up * (dzbar[v][(m, s)] - dzbar[s][(m, v)]);
                }
                holo.set(a, m, v, sh * 0.5);
                mixed.set(a, m, v, sm * 0.5);
            }
        }
    }
    Ok(ChristoffelTable {
        point: p.clone(),
        gamma_holo: holo,
        gamma_mixed: mixed,
    })
}

/// Largest defect of the derivative-exchange identities
/// `d_vbar g_{m sbar} = d_sbar g_{m vbar}` and `d_v g_{s mbar} = d_s g_{v mbar}`.
pub fn kaehler_condition_residual(field: &MetricField, p: &ComplexPoint, h: f64) -> Result<f64> {
    check_step(h)?;
    if p.n() != field.n {
        return invalid("point and metric field dimensions differ");
    }
    let n = field.n;
    let (dz, dzbar) = field.derivatives(p, h);
    let mut worst = 0.0f64;
    for m in 0..n {
        for s in 0..n {
            for v in 0..n {
                worst = worst.max((dzbar[v][(m, s)] - dzbar[s][(m, v)]).norm());
                worst = worst.max((dz[v][(s, m)] - dz[s][(v, m)]).norm());
            }
        }
    }
    Ok(worst)
}

/// Christoffel symbols of a Kaehler metric, `Gamma^a_{m v} = g^{a sbar} d_v g_{sbar m}`.
/// The mixed components vanish identically.
pub fn christoffel_kaehler(
    pot: &KaehlerPotential,
    p: &ComplexPoint,
    h: f64,
) -> Result<ChristoffelTable> {
    check_step(h)?;
    pot.check_point(p)?;
    let n = pot.n;
    let jet = PotentialJet::new(pot, p, h, 3);
    let table = HermitianMetricTable::new(p.clone(), jet.metric())?;
    let mut holo = Array3::zeros(n);
    for a in 0..n {
        for m in 0..n {
            for v in 0..n {
                let mut acc = c(0.0, 0.0);
                for s in 0..n {
                    acc += table.contravariant(a, s)
                        * jet.complex(&[(v, false), (m, false), (s, true)]);
                }
                holo.set(a, m, v, acc);
            }
        }
    }
    Ok(ChristoffelTable {
        point: p.clone(),
        gamma_holo: holo,
        gamma_mixed: Array3::zeros(n),
    })
}

/// Curvature `R_{a bbar m nbar}` and its Ricci contraction at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTable {
    pub point: ComplexPoint,
    pub r: Array4,
    /// `R_{a bbar} = g^{m nbar} R_{a bbar m nbar}`.
    pub ricci: DMatrix<Complex64>,
    /// The metric the curvature was computed from, at the same step.
    pub metric: HermitianMetricTable,
}

pub fn curvature(pot: &KaehlerPotential, p: &ComplexPoint, h: f64) -> Result<CurvatureTable> {
    check_step(h)?;
    if h < MIN_CURVATURE_STEP {
        return Err(Error::StepTooSmall {
            h,
            min: MIN_CURVATURE_STEP,
        });
    }
    pot.check_point(p)?;
    let n = pot.n;
    let jet = PotentialJet::new(pot, p, h, 4);
    let metric = HermitianMetricTable::new(p.clone(), jet.metric())?;

    // d_m g_{a sbar} and d_nbar g_{r bbar}
    let mut dg = Array3::zeros(n);
    let mut dgbar = Array3::zeros(n);
    for x in 0..n {
        for y in 0..n {
            for w in 0..n {
                dg.set(x, y, w, jet.complex(&[(x, false), (y, false), (w, true)]));
                dgbar.set(x, y, w, jet.complex(&[(x, true), (y, false), (w, true)]));
            }
        }
    }
    let mut r = Array4::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for m in 0..n {
                for v in 0..n {
                    let mut acc = -jet.complex(&[(m, false), (v, true), (a, false), (b, true)]);
                    for rr in 0..n {
                        for s in 0..n {
                            acc +=
                                metric.contravariant(rr, s) * dg.get(m, a, s) * dgbar.get(v, rr, b);
                        }
                    }
                    r.set(a, b, m, v, acc);
                }
            }
        }
    }
    let ricci = DMatrix::from_fn(n, n, |a, b| {
        let mut acc = c(0.0, 0.0);
        for m in 0..n {
            for v in 0..n {
                acc += metric.contravariant(m, v) * r.get(a, b, m, v);
            }
        }
        acc
    });
    Ok(CurvatureTable {
        point: p.clone(),
        r,
        ricci,
        metric,
    })
}

/// Ricci tensor from the volume form, `R_{a bbar} = -d_a d_bbar ln det g`,
/// with `g` differentiated from the potential. Independent of [`curvature`].
pub fn ricci_from_volume(
    pot: &KaehlerPotential,
    p: &ComplexPoint,
    h: f64,
) -> Result<DMatrix<Complex64>> {
    check_step(h)?;
    pot.check_point(p)?;
    let n = pot.n;
    let r0 = p.real_coords();
    let log_det = |r: &DVector<f64>| -> f64 {
        let g = PotentialJet::new(pot, &ComplexPoint::from_real_coords(r), h, 2).metric();
        g.determinant().re.ln()
    };
    let mut hess = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for k in 0..2 * n {
        for l in k..2 * n {
            let mut acc = 0.0;
            for (o1, w1) in OFFSETS.iter().zip(WEIGHTS) {
                for (o2, w2) in OFFSETS.iter().zip(WEIGHTS) {
                    let mut r = r0.clone();
                    r[k] += o1 * h;
                    r[l] += o2 * h;
                    acc += w1 * w2 * log_det(&r);
                }
            }
            hess[(k, l)] = acc / (h * h);
            hess[(l, k)] = hess[(k, l)];
        }
    }
    Ok(DMatrix::from_fn(n, n, |a, b| {
        // d_a d_bbar = 1/4 (dx_a - i dy_a)(dx_b + i dy_b)
        let re = hess[(a, b)] + hess[(n + a, n + b)];
        let im = hess[(a, n + b)] - hess[(n + a, b)];
        -c(re, im) * 0.25
    }))
}

/// `1/2 (g_{a bbar} g_{m nbar} + g_{a nbar} g_{m bbar})`: the curvature of
/// constant holomorphic sectional curvature `K = 1`.
pub fn constant_curvature_model(g: &HermitianMetricTable) -> Array4 {
    let n = g.n();
    let mut out = Array4::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for m in 0..n {
                for v in 0..n {
                    out.set(
                        a,
                        b,
                        m,
                        v,
                        (g.g[(a, b)] * g.g[(m, v)] + g.g[(a, v)] * g.g[(m, b)]) * 0.5,
                    );
                }
            }
        }
    }
    out
}

/// `|R - K model|_F` at one point.
pub fn model_residual(table: &CurvatureTable, g: &HermitianMetricTable, k: f64) -> f64 {
    let model = constant_curvature_model(g);
    table
        .r
        .data
        .iter()
        .zip(&model.data)
        .map(|(r, m)| (r - m * k).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// A single holomorphic sectional curvature fitted over several points.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureFit {
    pub k: f64,
    /// [`model_residual`] at each input point.
    pub residuals: Vec<f64>,
}

impl CurvatureFit {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Least-squares `K` over all components of all tables, using each table's own metric.
pub fn fit_holomorphic_curvature(tables: &[CurvatureTable]) -> Result<CurvatureFit> {
    if tables.is_empty() {
        return invalid("curvature fit needs at least one table");
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for t in tables {
        let model = constant_curvature_model(&t.metric);
        for (r, m) in t.r.data.iter().zip(&model.data) {
            num += (m.conj() * r).re;
            den += m.norm_sqr();
        }
    }
    if den == 0.0 {
        return invalid("curvature model vanishes identically");
    }
    let k = num / den;
    let residuals = tables
        .iter()
        .map(|t| model_residual(t, &t.metric, k))
        .collect();
    Ok(CurvatureFit { k, residuals })
}

/// `|ricci - (n+1) K / 2 g|_F / |g|_F`.
pub fn einstein_residual(
    table: &CurvatureTable,
    g: &HermitianMetricTable,
    k: f64,
    n: usize,
) -> f64 {
    let expect = &g.g * c((n as f64 + 1.0) * k / 2.0, 0.0);
    (&table.ricci - expect).norm() / g.g.norm()
}

/// The block Hamiltonian `1/2 (xbar^T M^T x + x^T M xbar)` over real
/// coordinates `(x, xbar)`.
pub fn kaehler_real_hamiltonian(m: &DMatrix<f64>) -> Result<BlockFormHamiltonian> {
    BlockFormHamiltonian::from_real(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(z: &[(f64, f64)]) -> ComplexPoint {
        ComplexPoint::from_slice(&z.iter().map(|&(a, b)| c(a, b)).collect::<Vec<_>>())
    }

    #[test]
    fn complexify_examples() {
        let p = complexify(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(p.z().as_slice(), &[c(1.0, 0.0), c(0.0, 1.0)]);
        let q = complexify(&[0.3, -2.0], &[0.0, 0.0]).unwrap();
        assert!(q.z().iter().all(|v| v.im == 0.0));
        assert!(complexify(&[1.0], &[1.0, 2.0]).is_err());

        let (x, xb) = realify(&complexify(&[0.25, -1.5], &[3.0, 0.125]).unwrap());
        assert_eq!(x, vec![0.25, -1.5]);
        assert_eq!(xb, vec![3.0, 0.125]);
        assert!(ComplexPoint::from_pair(p.z().clone(), p.z().clone()).is_err());
    }

    #[test]
    fn flat_metric_is_identity() {
        let pot = KaehlerPotential::new(2, |p| p.norm_squared()).unwrap();
        let g = metric_from_potential(&pot, &pt(&[(0.3, -0.2), (1.0, 0.5)]), DEFAULT_METRIC_STEP)
            .unwrap();
        assert!((&g.g - DMatrix::<Complex64>::identity(2, 2))
            .iter()
            .all(|v| v.norm() < 1e-8));
    }

    #[test]
    fn fubini_study_metric_values() {
        // g = c / (1 + |z|^2)^2 for n = 1
        for scale in [1.0, 2.5] {
            let pot =
                KaehlerPotential::new(1, move |p| scale * (1.0 + p.norm_squared()).ln()).unwrap();
            let g0 = metric_from_potential(&pot, &pt(&[(0.0, 0.0)]), DEFAULT_METRIC_STEP).unwrap();
            assert!((g0.g[(0, 0)] - c(scale, 0.0)).norm() < 1e-7);
            let g1 = metric_from_potential(&pot, &pt(&[(1.0, 0.0)]), DEFAULT_METRIC_STEP).unwrap();
            assert!((g1.g[(0, 0)] - c(scale / 4.0, 0.0)).norm() < 1e-7);
        }
        // with an analytic metric the analytic values come back
        let fs = KaehlerPotential::fubini_study(1, 1.0).unwrap();
        let g1 = metric_from_potential(&fs, &pt(&[(1.0, 0.0)]), DEFAULT_METRIC_STEP).unwrap();
        assert_eq!(g1.g[(0, 0)], c(0.25, 0.0));
    }

    #[test]
    fn analytic_mismatch_is_reported() {
        let wrong = KaehlerPotential::new(1, |p| p.norm_squared())
            .unwrap()
            .with_analytic_metric(|_| DMatrix::from_element(1, 1, c(2.0, 0.0)));
        let err =
            metric_from_potential(&wrong, &pt(&[(0.1, 0.1)]), DEFAULT_METRIC_STEP).unwrap_err();
        assert!(matches!(err, Error::AnalyticMismatch { .. }));
    }

    #[test]
    fn singular_metric_is_reported() {
        // phi = (Re z)^2 has g = 1/2 in n = 1 but is degenerate in n = 2
        let pot = KaehlerPotential::new(2, |p| p.z()[0].norm_sqr()).unwrap();
        let err = metric_from_potential(&pot, &pt(&[(0.1, 0.1), (0.0, 0.0)]), DEFAULT_METRIC_STEP)
            .unwrap_err();
        assert!(matches!(err, Error::SingularMetric { .. }));
    }

    #[test]
    fn step_validation() {
        let pot = KaehlerPotential::flat(1).unwrap();
        let p = pt(&[(0.1, 0.0)]);
        assert!(metric_from_potential(&pot, &p, 0.0).is_err());
        assert!(matches!(
            curvature(&pot, &p, 1e-5).unwrap_err(),
            Error::StepTooSmall { .. }
        ));
        assert!(metric_from_potential(&pot, &pt(&[(0.0, 0.0), (0.0, 0.0)]), 1e-3).is_err());
    }

    #[test]
    fn line_element_examples() {
        let p1 = pt(&[(0.0, 0.0)]);
        let g = HermitianMetricTable::new(p1.clone(), DMatrix::identity(1, 1)).unwrap();
        assert_eq!(
            line_element(&g, &DVector::from_vec(vec![c(1.0, 0.0)])).unwrap(),
            2.0
        );
        let g2 = HermitianMetricTable::new(pt(&[(0.0, 0.0), (0.0, 0.0)]), DMatrix::identity(2, 2))
            .unwrap();
        assert_eq!(
            line_element(&g2, &DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)])).unwrap(),
            4.0
        );
        let fs = metric_from_potential(
            &KaehlerPotential::fubini_study(1, 1.0).unwrap(),
            &p1,
            DEFAULT_METRIC_STEP,
        )
        .unwrap();
        assert!(
            (line_element(&fs, &DVector::from_vec(vec![c(1.0, 0.0)])).unwrap() - 2.0).abs() < 1e-12
        );
        assert!(line_element(&g2, &DVector::from_vec(vec![c(1.0, 0.0)])).is_err());
    }

    #[test]
    fn hermitian_validation_reports_planted_defect() {
        let flat = MetricField::flat(2);
        let pts = sample_points(2, 3, 0.5, 1);
        assert!(hermitian_validate(&flat, &pts)
            .iter()
            .all(|r| r.hermitian_violation == 0.0 && r.line_element_imag == 0.0));

        let delta = 0.125;
        let bent = MetricField::new(2, move |_| {
            let mut g = DMatrix::identity(2, 2);
            g[(0, 1)] = c(delta, 0.0);
            g
        });
        for r in hermitian_validate(&bent, &pts) {
            assert_eq!(r.hermitian_violation, delta);
            assert!(r.line_element_imag > 0.0);
        }
    }

    #[test]
    fn christoffel_flat_and_fubini_study() {
        let flat = KaehlerPotential::flat(2).unwrap();
        let p = pt(&[(0.2, 0.1), (-0.3, 0.4)]);
        let t = christoffel_kaehler(&flat, &p, DEFAULT_CONNECTION_STEP).unwrap();
        assert!(t.gamma_holo.max_abs() < 1e-8);
        let t = christoffel_hermitian(&MetricField::flat(2), &p, DEFAULT_CONNECTION_STEP).unwrap();
        assert_eq!(t.gamma_holo.max_abs(), 0.0);
        assert_eq!(t.gamma_mixed.max_abs(), 0.0);

        // Gamma = -2 zbar / (1 + z zbar)
        let fs = KaehlerPotential::fubini_study(1, 3.0).unwrap();
        let g0 = christoffel_kaehler(&fs, &pt(&[(0.0, 0.0)]), DEFAULT_CONNECTION_STEP).unwrap();
        assert!(g0.gamma_holo.get(0, 0, 0).norm() < 1e-8);
        let g1 = christoffel_kaehler(&fs, &pt(&[(1.0, 0.0)]), DEFAULT_CONNECTION_STEP).unwrap();
        assert!((g1.gamma_holo.get(0, 0, 0) - c(-1.0, 0.0)).norm() < 1e-7);
        let field = MetricField::from_potential(&fs, DEFAULT_CONNECTION_STEP);
        let h1 =
            christoffel_hermitian(&field, &pt(&[(1.0, 0.0)]), DEFAULT_CONNECTION_STEP).unwrap();
        assert!((h1.gamma_holo.get(0, 0, 0) - c(-1.0, 0.0)).norm() < 1e-6);
        assert!(h1.gamma_mixed.max_abs() < 1e-6);
    }

    #[test]
    fn planted_non_kaehler_field_is_rejected() {
        // g_{1 1bar} = 1 + Re(z1) Im(z2), g_{2 2bar} = 1
        let field = MetricField::new(2, |p| {
            let mut g = DMatrix::identity(2, 2);
            g[(0, 0)] = c(1.0 + p.z()[0].re * p.z()[1].im, 0.0);
            g
        });
        let p = pt(&[(0.7, 0.2), (0.1, 0.3)]);
        let r = kaehler_condition_residual(&field, &p, DEFAULT_CONNECTION_STEP).unwrap();
        // d_{z2} g_{1 1bar} = Re(z1) * (-i/2)
        assert!((r - 0.35).abs() < 1e-9, "residual {r}");
        assert_eq!(
            kaehler_condition_residual(&MetricField::flat(2), &p, DEFAULT_CONNECTION_STEP).unwrap(),
            0.0
        );
    }

    #[test]
    fn flat_curvature_vanishes() {
        let flat = KaehlerPotential::flat(2).unwrap();
        let t = curvature(
            &flat,
            &pt(&[(0.3, 0.1), (-0.2, 0.5)]),
            DEFAULT_CURVATURE_STEP,
        )
        .unwrap();
        assert!(t.r.max_abs() < 1e-6);
        assert!(t.ricci.iter().all(|v| v.norm() < 1e-6));
    }

    #[test]
    fn fubini_study_n1_origin() {
        // R = -d dbar g + |d g|^2 / g = 2c at z = 0 with g = c, so K = 2 / c
        let fs = KaehlerPotential::fubini_study(1, 1.0).unwrap();
        let t = curvature(&fs, &pt(&[(0.0, 0.0)]), DEFAULT_CURVATURE_STEP).unwrap();
        assert!((t.r.get(0, 0, 0, 0) - c(2.0, 0.0)).norm() < 1e-5);
    }

    #[test]
    fn real_hamiltonian_layout() {
        let h = kaehler_real_hamiltonian(&DMatrix::identity(1, 1)).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(h.real_dense().unwrap(), expect);
    }
}
