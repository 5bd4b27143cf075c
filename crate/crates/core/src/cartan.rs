//! Block Hamiltonians over paired coordinates and Cartan's quadratic forms.
//!
//! Coordinates come in pairs `(X^i, Xbar^i)`, `i = 0..m`, stacked into the
//! state `xi = (X, Xbar)`. A matrix `M` gives the symmetric coefficient
//! matrix `H = [[0, M], [M^T, 0]]` and the bilinear form
//! `F = sum_ij Xbar^i M_ij X^j`. With `M = I` this is Cartan's form
//! `F = sum_i Xbar^i X^i`; identifying `Xbar^0 = X^0` gives the odd-dimensional
//! form `(x^0)^2 + sum_{i>0} xbar^i x^i`, and setting both to zero gives the
//! even-dimensional form on the remaining pairs.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::ode::{integrate, TauGrid, Trajectory};
use crate::solver::hamilton_flow;
use crate::structure::{CoefficientField, SignSignature, StructureMatrix, MAX_BLOCK};

/// Conjugacy tolerance for complex-pair coordinates.
pub const CONJUGACY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    /// `X` and `Xbar` are independent real coordinates.
    Real,
    /// `Xbar` is the complex conjugate of `X`.
    ComplexPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedCoordinates {
    kind: ScalarKind,
    x: DVector<Complex64>,
    xbar: DVector<Complex64>,
}

impl PairedCoordinates {
    pub fn new(x: DVector<Complex64>, xbar: DVector<Complex64>, kind: ScalarKind) -> Result<Self> {
        if x.len() != xbar.len() {
            return invalid(format!(
                "X has length {} but Xbar has length {}",
                x.len(),
                xbar.len()
            ));
        }
        match kind {
            ScalarKind::Real => {
                if x.iter().chain(xbar.iter()).any(|v| v.im != 0.0) {
                    return invalid("real coordinates must have zero imaginary parts");
                }
            }
            ScalarKind::ComplexPair => {
                let defect = x
                    .iter()
                    .zip(xbar.iter())
                    .map(|(a, b)| (a.conj() - b).norm())
                    .fold(0.0, f64::max);
                if defect > CONJUGACY_TOLERANCE {
                    return invalid(format!(
                        "Xbar is not the conjugate of X (defect {defect:e})"
                    ));
                }
            }
        }
        Ok(Self { kind, x, xbar })
    }

    pub fn real(x: &[f64], xbar: &[f64]) -> Result<Self> {
        let lift =
            |v: &[f64]| DVector::from_iterator(v.len(), v.iter().map(|&r| Complex64::new(r, 0.0)));
        Self::new(lift(x), lift(xbar), ScalarKind::Real)
    }

    /// `Xbar` is set to the conjugate of `X`.
    pub fn complex_pair(x: DVector<Complex64>) -> Self {
        let xbar = x.map(|v| v.conj());
        Self {
            kind: ScalarKind::ComplexPair,
            x,
            xbar,
        }
    }

    pub fn kind(&self) -> ScalarKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &DVector<Complex64> {
        &self.x
    }

    pub fn xbar(&self) -> &DVector<Complex64> {
        &self.xbar
    }

    /// The stacked state `(X, Xbar)`.
    pub fn state(&self) -> DVector<Complex64> {
        let m = self.m();
        DVector::from_fn(
            2 * m,
            |i, _| if i < m { self.x[i] } else { self.xbar[i - m] },
        )
    }
}

/// `H = [[0, M], [M^T, 0]]` for a possibly complex, possibly asymmetric `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFormHamiltonian {
    m: DMatrix<Complex64>,
    dense: DMatrix<Complex64>,
}

pub fn build_block_hamiltonian(m: DMatrix<Complex64>) -> Result<BlockFormHamiltonian> {
    let n = m.nrows();
    if n != m.ncols() {
        return invalid(format!("M must be square, got {}x{}", n, m.ncols()));
    }
    if n == 0 || n > MAX_BLOCK {
        return invalid(format!(
            "M must have size between 1 and {MAX_BLOCK}, got {n}"
        ));
    }
    let mut dense = DMatrix::zeros(2 * n, 2 * n);
    dense.view_mut((0, n), (n, n)).copy_from(&m);
    dense.view_mut((n, 0), (n, n)).copy_from(&m.transpose());
    Ok(BlockFormHamiltonian { m, dense })
}

impl BlockFormHamiltonian {
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        build_block_hamiltonian(m.map(Complex64::from))
    }

    pub fn size(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn dense(&self) -> &DMatrix<Complex64> {
        &self.dense
    }

    pub fn is_real(&self) -> bool {
        self.m.iter().all(|v| v.im == 0.0)
    }

    pub fn real_dense(&self) -> Option<DMatrix<f64>> {
        self.is_real().then(|| self.dense.map(|v| v.re))
    }

    /// The constant coefficient field of a real block Hamiltonian, ready to
    /// be used as the source or target of a map problem.
    pub fn coefficient_field(&self) -> Result<CoefficientField> {
        match self.real_dense() {
            Some(h) => CoefficientField::constant(h),
            None => invalid("coefficient fields need a real M"),
        }
    }

    /// `1/2 xi^T H xi`, which equals `X^T M Xbar`.
    pub fn quadratic_value(&self, xi: &DVector<Complex64>) -> Result<Complex64> {
        if xi.len() != self.dense.nrows() {
            return invalid(format!(
                "state has length {} but expected {}",
                xi.len(),
                self.dense.nrows()
            ));
        }
        Ok((xi.transpose() * &self.dense * xi)[(0, 0)] * 0.5)
    }
}

/// `sum_ij Xbar^i M_ij X^j`.
pub fn evaluate_form(h: &BlockFormHamiltonian, coords: &PairedCoordinates) -> Result<Complex64> {
    if coords.m() != h.size() {
        return invalid(format!(
            "coordinates have {} pairs but M is {}x{}",
            coords.m(),
            h.size(),
            h.size()
        ));
    }
    Ok((coords.xbar.transpose() * &h.m * &coords.x)[(0, 0)])
}

/// Flow of `X' = e1 dH/dXbar`, `Xbar' = e2 dH/dX` from `coords0`, with `H` the
/// dense value [`BlockFormHamiltonian::quadratic_value`].
/// Only `eps1` and `eps2` of `signs` are used.
///
/// Real `M` reuses [`hamilton_flow`] on the real and imaginary parts of the
/// state; complex `M` is integrated directly over complex states.
pub fn cartan_flow(
    h: &BlockFormHamiltonian,
    signs: SignSignature,
    coords0: &PairedCoordinates,
    grid: &TauGrid,
) -> Result<Trajectory<DVector<Complex64>>> {
    if coords0.m() != h.size() {
        return invalid(format!(
            "coordinates have {} pairs but M is {}x{}",
            coords0.m(),
            h.size(),
            h.size()
        ));
    }
    let structure = StructureMatrix::new(signs.eps1, signs.eps2, h.size())?;
    let xi0 = coords0.state();
    match h.coefficient_field() {
        Ok(field) => {
            let re = hamilton_flow(&field, &structure, &xi0.map(|v| v.re), grid)?;
            if xi0.iter().all(|v| v.im == 0.0) {
                return Ok(re.map(|v| v.map(Complex64::from)));
            }
            let im = hamilton_flow(&field, &structure, &xi0.map(|v| v.im), grid)?;
            Ok(Trajectory {
                grid: *grid,
                values: re
                    .values
                    .iter()
                    .zip(&im.values)
                    .map(|(a, b)| a.zip_map(b, Complex64::new))
                    .collect(),
            })
        }
        Err(_) => {
            let s = structure.dense().map(Complex64::from);
            let a = s * h.dense();
            integrate(|xi: &DVector<Complex64>, _| &a * xi, xi0, grid)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestrictionMode {
    /// Identify `Xbar^k = X^k`, leaving `2m - 1` variables.
    DiagonalMerge,
    /// Set `Xbar^k = X^k = 0`, leaving `2m - 2` variables.
    ZeroSlice,
}

/// A quadratic form `v^T Q v` with symmetric `Q` over named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub labels: Vec<String>,
    pub matrix: DMatrix<Complex64>,
}

/// One monomial `coefficient * v_i * v_j` with `i <= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormTerm {
    pub coefficient: Complex64,
    pub i: usize,
    pub j: usize,
}

impl QuadraticForm {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn evaluate(&self, v: &[Complex64]) -> Result<Complex64> {
        if v.len() != self.dim() {
            return invalid(format!(
                "form has {} variables, got {}",
                self.dim(),
                v.len()
            ));
        }
        let v = DVector::from_column_slice(v);
        if v.is_empty() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok((v.transpose() * &self.matrix * &v)[(0, 0)])
    }

    /// Nonzero monomials, row-major over the upper triangle.
    pub fn terms(&self) -> Vec<FormTerm> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i..n {
                let c = if i == j {
                    self.matrix[(i, i)]
                } else {
                    self.matrix[(i, j)] + self.matrix[(j, i)]
                };
                if c != Complex64::new(0.0, 0.0) {
                    out.push(FormTerm {
                        coefficient: c,
                        i,
                        j,
                    });
                }
            }
        }
        out
    }
}

fn fmt_coefficient(c: Complex64) -> Option<String> {
    if c.im == 0.0 {
        if c.re == 1.0 {
            None
        } else {
            Some(format!("{}", c.re))
        }
    } else {
        Some(format!("({}{:+}i)", c.re, c.im))
    }
}

impl fmt::Display for QuadraticForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms = self.terms();
        if terms.is_empty() {
            return f.write_str("0");
        }
        for (k, t) in terms.iter().enumerate() {
            if k > 0 {
                f.write_str(" + ")?;
            }
            if let Some(c) = fmt_coefficient(t.coefficient) {
                write!(f, "{c} ")?;
            }
            if t.i == t.j {
                write!(f, "({})^2", self.labels[t.i])?;
            } else {
                // conjugate-type variable first
                write!(f, "{} {}", self.labels[t.j], self.labels[t.i])?;
            }
        }
        Ok(())
    }
}

/// The form `sum_ij Xbar^i M_ij X^j` over variables `(x0.., xbar0..)`.
pub fn full_form(h: &BlockFormHamiltonian) -> QuadraticForm {
    let m = h.size();
    let mut q = DMatrix::zeros(2 * m, 2 * m);
    let half = Complex64::new(0.5, 0.0);
    for i in 0..m {
        for j in 0..m {
            // Xbar^i M_ij X^j, split symmetrically
            q[(m + i, j)] += h.m[(i, j)] * half;
            q[(j, m + i)] += h.m[(i, j)] * half;
        }
    }
    let labels = (0..m)
        .map(|i| format!("x{i}"))
        .chain((0..m).map(|i| format!("xbar{i}")))
        .collect();
    QuadraticForm { labels, matrix: q }
}

/// Restricts the form of `h` at the pair `index`.
pub fn restrict_form(
    h: &BlockFormHamiltonian,
    mode: RestrictionMode,
    index: usize,
) -> Result<QuadraticForm> {
    let m = h.size();
    if index >= m {
        return invalid(format!(
            "restriction index {index} out of range for {m} pairs"
        ));
    }
    let full = full_form(h);
    // columns of `embed` express full variables in terms of the kept ones
    let kept: Vec<usize> = match mode {
        RestrictionMode::DiagonalMerge => (0..2 * m).filter(|&v| v != m + index).collect(),
        RestrictionMode::ZeroSlice => (0..2 * m)
            .filter(|&v| v != index && v != m + index)
            .collect(),
    };
    let mut embed = DMatrix::<Complex64>::zeros(2 * m, kept.len());
    for (col, &v) in kept.iter().enumerate() {
        embed[(v, col)] = Complex64::new(1.0, 0.0);
        if mode == RestrictionMode::DiagonalMerge && v == index {
            embed[(m + index, col)] = Complex64::new(1.0, 0.0);
        }
    }
    let matrix = if kept.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        embed.transpose() * &full.matrix * &embed
    };
    let labels = kept.iter().map(|&v| full.labels[v].clone()).collect();
    Ok(QuadraticForm { labels, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{Sign, FIRST_FORMALISM};
    use std::f64::consts::E;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn real_m(rows: usize, v: &[f64]) -> BlockFormHamiltonian {
        BlockFormHamiltonian::from_real(&DMatrix::from_row_slice(rows, rows, v)).unwrap()
    }

    #[test]
    fn dense_layout_and_symmetry() {
        let h = build_block_hamiltonian(DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, 1.0), c(3.0, 0.0), c(4.0, -2.0)],
        ))
        .unwrap();
        assert_eq!(h.dense(), &h.dense().transpose());
        assert_eq!(h.dense()[(0, 3)], c(2.0, 1.0));
        assert_eq!(h.dense()[(3, 0)], c(2.0, 1.0));
        assert_eq!(h.dense()[(2, 1)], c(3.0, 0.0));
        assert!(build_block_hamiltonian(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn identity_form_counts_pairs() {
        for m in 1..5 {
            let h = BlockFormHamiltonian::from_real(&DMatrix::identity(m, m)).unwrap();
            let ones = vec![1.0; m];
            let v = evaluate_form(&h, &PairedCoordinates::real(&ones, &ones).unwrap()).unwrap();
            assert_eq!(v, c(m as f64, 0.0));
        }
        let zero = BlockFormHamiltonian::from_real(&DMatrix::zeros(3, 3)).unwrap();
        let p = PairedCoordinates::real(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(evaluate_form(&zero, &p).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn form_examples() {
        let h = real_m(2, &[1.0, 0.0, 0.0, 1.0]);
        let p = PairedCoordinates::complex_pair(DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]));
        assert_eq!(p.xbar()[1], c(0.0, -1.0));
        assert_eq!(evaluate_form(&h, &p).unwrap(), c(2.0, 0.0));

        let o = PairedCoordinates::real(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(evaluate_form(&h, &o).unwrap(), c(0.0, 0.0));

        let h = real_m(2, &[1.0, 2.0, 3.0, 4.0]);
        let p = PairedCoordinates::real(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(evaluate_form(&h, &p).unwrap(), c(10.0, 0.0));
        let three = PairedCoordinates::real(&[1.0; 3], &[1.0; 3]).unwrap();
        assert!(evaluate_form(&h, &three).is_err());
    }

    #[test]
    fn pairing_validation() {
        let x = DVector::from_vec(vec![c(1.0, 2.0)]);
        assert!(PairedCoordinates::new(x.clone(), x.clone(), ScalarKind::ComplexPair).is_err());
        assert!(
            PairedCoordinates::new(x.clone(), x.map(|v| v.conj()), ScalarKind::ComplexPair).is_ok()
        );
        assert!(PairedCoordinates::new(x.clone(), x.clone(), ScalarKind::Real).is_err());
        assert!(PairedCoordinates::real(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn restriction_examples() {
        let h = real_m(2, &[1.0, 0.0, 0.0, 1.0]);
        let merged = restrict_form(&h, RestrictionMode::DiagonalMerge, 0).unwrap();
        assert_eq!(merged.labels, vec!["x0", "x1", "xbar1"]);
        assert_eq!(
            merged.terms(),
            vec![
                FormTerm {
                    coefficient: c(1.0, 0.0),
                    i: 0,
                    j: 0
                },
                FormTerm {
                    coefficient: c(1.0, 0.0),
                    i: 1,
                    j: 2
                }
            ]
        );
        assert_eq!(merged.to_string(), "(x0)^2 + xbar1 x1");

        let sliced = restrict_form(&h, RestrictionMode::ZeroSlice, 0).unwrap();
        assert_eq!(sliced.labels, vec!["x1", "xbar1"]);
        assert_eq!(
            sliced.terms(),
            vec![FormTerm {
                coefficient: c(1.0, 0.0),
                i: 0,
                j: 1
            }]
        );
        assert_eq!(sliced.to_string(), "xbar1 x1");

        let one = real_m(1, &[1.0]);
        let empty = restrict_form(&one, RestrictionMode::ZeroSlice, 0).unwrap();
        assert_eq!(empty.dim(), 0);
        assert_eq!(empty.to_string(), "0");
        assert_eq!(empty.evaluate(&[]).unwrap(), c(0.0, 0.0));

        assert!(restrict_form(&h, RestrictionMode::ZeroSlice, 2).is_err());
    }

    #[test]
    fn flow_with_symplectic_signs() {
        // I1 H = diag(1, -1): X' = X, Xbar' = -Xbar from (1, 1)
        let h = real_m(1, &[1.0]);
        let g = TauGrid::new(0.0, 1.0, 1000).unwrap();
        let p = PairedCoordinates::real(&[1.0], &[1.0]).unwrap();
        let traj = cartan_flow(&h, FIRST_FORMALISM, &p, &g).unwrap();
        let end = traj.last();
        assert!((end[0] - c(E, 0.0)).norm() < 1e-9);
        assert!((end[1] - c(1.0 / E, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn flow_with_equal_signs_grows() {
        let h = real_m(1, &[1.0]);
        let g = TauGrid::new(0.0, 1.0, 1000).unwrap();
        let p = PairedCoordinates::real(&[1.0], &[1.0]).unwrap();
        let sig = SignSignature::new(Sign::Plus, Sign::Plus, Sign::Plus, Sign::Plus);
        let end = cartan_flow(&h, sig, &p, &g).unwrap().last().clone();
        assert!((end[0] - c(E, 0.0)).norm() < 1e-9);
        assert!((end[1] - c(E, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn zero_m_flow_is_constant() {
        let h = real_m(2, &[0.0; 4]);
        let g = TauGrid::new(0.0, 1.0, 10).unwrap();
        let p = PairedCoordinates::complex_pair(DVector::from_vec(vec![c(1.0, 2.0), c(-1.0, 0.5)]));
        let traj = cartan_flow(&h, FIRST_FORMALISM, &p, &g).unwrap();
        assert!(traj.values.iter().all(|v| v == &p.state()));
    }

    #[test]
    fn complex_m_flow_conserves_quadratic_value() {
        let m =
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.5), c(0.2, 0.0), c(0.0, -0.3), c(0.7, 0.1)]);
        let h = build_block_hamiltonian(m).unwrap();
        let g = TauGrid::new(0.0, 2.0, 2000).unwrap();
        let p = PairedCoordinates::complex_pair(DVector::from_vec(vec![c(0.3, 0.1), c(-0.2, 0.4)]));
        let traj = cartan_flow(&h, FIRST_FORMALISM, &p, &g).unwrap();
        let e0 = h.quadratic_value(traj.first()).unwrap();
        let e1 = h.quadratic_value(traj.last()).unwrap();
        assert!((e0 - e1).norm() < 1e-9);
    }
}
