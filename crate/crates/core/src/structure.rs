//! Core numeric types: sign signatures, generalized structure matrices,
//! block decompositions and quadratic coefficient fields.
//!
//! A quadratic Hamiltonian is `H(xi, tau) = 1/2 H_ij(xi, tau) xi^i xi^j` on a
//! state `xi = (q^1..q^m, p^1..p^m)`. Its flow is `xi' = I dH/dxi`, where `I`
//! is a structure matrix `[[0, e_u I], [e_l I, 0]]`. Writing the gradient as
//! `dH/dxi = X(xi, tau) xi` with
//!
//! ```text
//! X_lj = 1/2 sum_i (dH_ij / dxi^l) xi^i + H_lj
//! ```
//!
//! makes every flow linear in the state with state-dependent coefficients.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Largest supported block size.
pub const MAX_BLOCK: usize = 64;

/// Central-difference step for finite-difference gradients, scaled by
/// `max(1, |xi^l|)`.
pub const GRADIENT_STEP: f64 = 1e-5;

/// A sign, `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl TryFrom<i32> for Sign {
    type Error = Error;

    fn try_from(v: i32) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => invalid(format!("sign must be +1 or -1, got {other}")),
        }
    }
}

impl TryFrom<f64> for Sign {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        if v == 1.0 {
            Ok(Sign::Plus)
        } else if v == -1.0 {
            Ok(Sign::Minus)
        } else {
            invalid(format!("sign must be +1 or -1, got {v}"))
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+1",
            Sign::Minus => "-1",
        })
    }
}

/// The four signs `(eps1, eps2, eps3, eps4)`. `eps1`/`eps2` sit on the
/// upper-right/lower-left blocks of the source structure matrix, `eps3`/`eps4`
/// on those of the target structure matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignSignature {
    pub eps1: Sign,
    pub eps2: Sign,
    pub eps3: Sign,
    pub eps4: Sign,
}

/// `(+1, -1, +1, -1)`: both structure matrices equal the symplectic `J`.
pub const FIRST_FORMALISM: SignSignature = SignSignature {
    eps1: Sign::Plus,
    eps2: Sign::Minus,
    eps3: Sign::Plus,
    eps4: Sign::Minus,
};

impl Default for SignSignature {
    fn default() -> Self {
        FIRST_FORMALISM
    }
}

impl SignSignature {
    pub fn new(eps1: Sign, eps2: Sign, eps3: Sign, eps4: Sign) -> Self {
        Self {
            eps1,
            eps2,
            eps3,
            eps4,
        }
    }

    pub fn from_ints(signs: [i32; 4]) -> Result<Self> {
        Ok(Self {
            eps1: Sign::try_from(signs[0])?,
            eps2: Sign::try_from(signs[1])?,
            eps3: Sign::try_from(signs[2])?,
            eps4: Sign::try_from(signs[3])?,
        })
    }

    pub fn to_ints(self) -> [i32; 4] {
        [
            self.eps1.as_i32(),
            self.eps2.as_i32(),
            self.eps3.as_i32(),
            self.eps4.as_i32(),
        ]
    }

    /// All sixteen signatures, in binary order with `eps1` most significant.
    pub fn all() -> impl Iterator<Item = SignSignature> {
        (0..16u8).map(|bits| {
            let s = |b: u8| {
                if bits & b == 0 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            };
            SignSignature::new(s(8), s(4), s(2), s(1))
        })
    }

    /// Source structure matrix, `[[0, eps1 I], [eps2 I, 0]]`.
    pub fn source_structure(self, m: usize) -> Result<StructureMatrix> {
        StructureMatrix::new(self.eps1, self.eps2, m)
    }

    /// Target structure matrix, `[[0, eps3 I], [eps4 I, 0]]`.
    pub fn target_structure(self, m: usize) -> Result<StructureMatrix> {
        StructureMatrix::new(self.eps3, self.eps4, m)
    }
}

impl fmt::Display for SignSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.eps1, self.eps2, self.eps3, self.eps4
        )
    }
}

fn check_block_size(m: usize) -> Result<()> {
    if m == 0 {
        return invalid("block size must be at least 1");
    }
    if m > MAX_BLOCK {
        return invalid(format!(
            "block size {m} exceeds the supported maximum {MAX_BLOCK}"
        ));
    }
    Ok(())
}

/// The generalized structure matrix `[[0, upper I_m], [lower I_m, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrix {
    m: usize,
    upper: Sign,
    lower: Sign,
    dense: DMatrix<f64>,
}

impl StructureMatrix {
    pub fn new(upper: Sign, lower: Sign, m: usize) -> Result<Self> {
        check_block_size(m)?;
        let mut dense = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            dense[(i, m + i)] = upper.value();
            dense[(m + i, i)] = lower.value();
        }
        Ok(Self {
            m,
            upper,
            lower,
            dense,
        })
    }

    /// The canonical symplectic matrix `J = [[0, I], [-I, 0]]`.
    pub fn symplectic(m: usize) -> Result<Self> {
        Self::new(Sign::Plus, Sign::Minus, m)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn upper(&self) -> Sign {
        self.upper
    }

    pub fn lower(&self) -> Sign {
        self.lower
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// `I * a`, computed as a signed block-row swap. Exact.
    pub fn mul_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.m;
        debug_assert_eq!(a.nrows(), 2 * m);
        let (up, lo) = (self.upper.value(), self.lower.value());
        DMatrix::from_fn(2 * m, a.ncols(), |r, c| {
            if r < m {
                up * a[(m + r, c)]
            } else {
                lo * a[(r - m, c)]
            }
        })
    }

    /// `a * I`, computed as a signed block-column swap. Exact.
    pub fn mul_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.m;
        debug_assert_eq!(a.ncols(), 2 * m);
        let (up, lo) = (self.upper.value(), self.lower.value());
        DMatrix::from_fn(a.nrows(), 2 * m, |r, c| {
            if c < m {
                lo * a[(r, m + c)]
            } else {
                up * a[(r, c - m)]
            }
        })
    }

    /// `I * v` for a state vector.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.m;
        debug_assert_eq!(v.len(), 2 * m);
        let (up, lo) = (self.upper.value(), self.lower.value());
        DVector::from_fn(
            2 * m,
            |r, _| if r < m { up * v[m + r] } else { lo * v[r - m] },
        )
    }
}

/// Builds `[[0, eps_upper I], [eps_lower I, 0]]` from raw sign values.
pub fn build_structure_matrix(eps_upper: f64, eps_lower: f64, m: usize) -> Result<StructureMatrix> {
    StructureMatrix::new(Sign::try_from(eps_upper)?, Sign::try_from(eps_lower)?, m)
}

/// A `2m x 2m` matrix viewed as four `m x m` quadrants.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub m: usize,
    /// Upper-left.
    pub b1: DMatrix<f64>,
    /// Upper-right.
    pub b2: DMatrix<f64>,
    /// Lower-left.
    pub b3: DMatrix<f64>,
    /// Lower-right.
    pub b4: DMatrix<f64>,
}

impl BlockMatrix {
    pub fn split(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return invalid(format!(
                "block split needs a square matrix, got {}x{}",
                n,
                a.ncols()
            ));
        }
        if n == 0 || !n.is_multiple_of(2) {
            return invalid(format!(
                "block split needs an even positive dimension, got {n}"
            ));
        }
        let m = n / 2;
        Ok(Self {
            m,
            b1: a.view((0, 0), (m, m)).into_owned(),
            b2: a.view((0, m), (m, m)).into_owned(),
            b3: a.view((m, 0), (m, m)).into_owned(),
            b4: a.view((m, m), (m, m)).into_owned(),
        })
    }

    pub fn from_blocks(
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        b3: DMatrix<f64>,
        b4: DMatrix<f64>,
    ) -> Result<Self> {
        let m = b1.nrows();
        for b in [&b1, &b2, &b3, &b4] {
            if b.shape() != (m, m) {
                return invalid(format!("blocks must all be {m}x{m}, got {:?}", b.shape()));
            }
        }
        if m == 0 {
            return invalid("blocks must be non-empty");
        }
        Ok(Self { m, b1, b2, b3, b4 })
    }

    pub fn join(&self) -> DMatrix<f64> {
        let m = self.m;
        let mut out = DMatrix::zeros(2 * m, 2 * m);
        out.view_mut((0, 0), (m, m)).copy_from(&self.b1);
        out.view_mut((0, m), (m, m)).copy_from(&self.b2);
        out.view_mut((m, 0), (m, m)).copy_from(&self.b3);
        out.view_mut((m, m), (m, m)).copy_from(&self.b4);
        out
    }
}

pub type FieldFn = dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync;
pub type TauFieldFn = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;
/// Returns the `2m` slices `dH/dxi^l`, one matrix per `l`.
pub type GradientFn = dyn Fn(&DVector<f64>, f64) -> Vec<DMatrix<f64>> + Send + Sync;

#[derive(Clone)]
enum Source {
    Constant(DMatrix<f64>),
    TauOnly(Arc<TauFieldFn>),
    State(Arc<FieldFn>),
}

/// How the state gradient of a field is obtained.
#[derive(Clone)]
pub enum Gradient {
    /// The field does not depend on the state.
    Vanishing,
    ClosedForm(Arc<GradientFn>),
    FiniteDifference,
}

impl fmt::Debug for Gradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gradient::Vanishing => "Vanishing",
            Gradient::ClosedForm(_) => "ClosedForm",
            Gradient::FiniteDifference => "FiniteDifference",
        })
    }
}

/// A symmetric coefficient matrix `H_ij(xi, tau)` defining the quadratic
/// function `1/2 H_ij xi^i xi^j`, together with its state gradient.
///
/// Symmetry is checked by [`CoefficientField::symmetry_defect`] and never
/// enforced by symmetrizing.
#[derive(Clone)]
pub struct CoefficientField {
    m: usize,
    source: Source,
    gradient: Gradient,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            Source::Constant(_) => "constant",
            Source::TauOnly(_) => "tau-dependent",
            Source::State(_) => "state-dependent",
        };
        f.debug_struct("CoefficientField")
            .field("m", &self.m)
            .field("kind", &kind)
            .field("gradient", &self.gradient)
            .finish()
    }
}

impl CoefficientField {
    /// A constant field. The matrix must be `2m x 2m` for some `m >= 1`.
    pub fn constant(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() != h.ncols() || !h.nrows().is_multiple_of(2) {
            return invalid(format!(
                "coefficient matrix must be square with even dimension, got {}x{}",
                h.nrows(),
                h.ncols()
            ));
        }
        let m = h.nrows() / 2;
        check_block_size(m)?;
        Ok(Self {
            m,
            source: Source::Constant(h),
            gradient: Gradient::Vanishing,
        })
    }

    pub fn zero(m: usize) -> Result<Self> {
        check_block_size(m)?;
        Self::constant(DMatrix::zeros(2 * m, 2 * m))
    }

    /// A field depending on `tau` only.
    pub fn tau_dependent<F>(m: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        check_block_size(m)?;
        Ok(Self {
            m,
            source: Source::TauOnly(Arc::new(f)),
            gradient: Gradient::Vanishing,
        })
    }

    /// A state-dependent field whose gradient is taken by central differences.
    pub fn state_dependent<F>(m: usize, f: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        check_block_size(m)?;
        Ok(Self {
            m,
            source: Source::State(Arc::new(f)),
            gradient: Gradient::FiniteDifference,
        })
    }

    /// A state-dependent field with a closed-form gradient.
    pub fn with_gradient<F, G>(m: usize, f: F, grad: G) -> Result<Self>
    where
        F: Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
        G: Fn(&DVector<f64>, f64) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        check_block_size(m)?;
        Ok(Self {
            m,
            source: Source::State(Arc::new(f)),
            gradient: Gradient::ClosedForm(Arc::new(grad)),
        })
    }

    /// The same field with its gradient switched to finite differences.
    pub fn finite_difference(&self) -> Self {
        let gradient = match self.gradient {
            Gradient::Vanishing => Gradient::Vanishing,
            _ => Gradient::FiniteDifference,
        };
        Self {
            gradient,
            ..self.clone()
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn gradient_mode(&self) -> &Gradient {
        &self.gradient
    }

    pub fn is_state_independent(&self) -> bool {
        matches!(self.gradient, Gradient::Vanishing)
    }

    pub fn as_constant(&self) -> Option<&DMatrix<f64>> {
        match &self.source {
            Source::Constant(h) => Some(h),
            _ => None,
        }
    }

    pub fn eval(&self, xi: &DVector<f64>, tau: f64) -> DMatrix<f64> {
        match &self.source {
            Source::Constant(h) => h.clone(),
            Source::TauOnly(f) => f(tau),
            Source::State(f) => f(xi, tau),
        }
    }

    /// `dH_ij/dxi^l` for every `l`.
    pub fn gradient(&self, xi: &DVector<f64>, tau: f64) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        match &self.gradient {
            Gradient::Vanishing => vec![DMatrix::zeros(n, n); n],
            Gradient::ClosedForm(g) => g(xi, tau),
            Gradient::FiniteDifference => (0..n)
                .map(|l| {
                    let h = GRADIENT_STEP * xi[l].abs().max(1.0);
                    let mut plus = xi.clone();
                    let mut minus = xi.clone();
                    plus[l] += h;
                    minus[l] -= h;
                    (self.eval(&plus, tau) - self.eval(&minus, tau)) / (2.0 * h)
                })
                .collect(),
        }
    }

    /// Value of the quadratic function `1/2 xi^T H xi`.
    pub fn hamiltonian(&self, xi: &DVector<f64>, tau: f64) -> f64 {
        0.5 * xi.dot(&(self.eval(xi, tau) * xi))
    }

    /// Largest `|H_ij - H_ji|` over the given samples.
    pub fn symmetry_defect(&self, samples: &[(DVector<f64>, f64)]) -> f64 {
        samples
            .iter()
            .map(|(xi, tau)| {
                let h = self.eval(xi, *tau);
                (&h - h.transpose()).amax()
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn coefficient_unchecked(&self, xi: &DVector<f64>, tau: f64) -> DMatrix<f64> {
        let mut x = self.eval(xi, tau);
        if self.is_state_independent() {
            return x;
        }
        for (l, slice) in self.gradient(xi, tau).iter().enumerate() {
            // row l of X gains 1/2 sum_i dH_ij/dxi^l xi^i = 1/2 (slice^T xi)_j
            let row = slice.tr_mul(xi) * 0.5;
            for j in 0..x.ncols() {
                x[(l, j)] += row[j];
            }
        }
        x
    }
}

/// The coefficient matrix `X_lj = 1/2 sum_i (dH_ij/dxi^l) xi^i + H_lj`, so that
/// `dH/dxi = X xi`. Applied to a target field at `eta` it yields `Y`.
pub fn coefficient_matrix(
    field: &CoefficientField,
    xi: &DVector<f64>,
    tau: f64,
) -> Result<DMatrix<f64>> {
    if xi.len() != field.dim() {
        return invalid(format!(
            "state has length {} but the field expects {}",
            xi.len(),
            field.dim()
        ));
    }
    Ok(field.coefficient_unchecked(xi, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn structure_matrix_examples() {
        let j = build_structure_matrix(1.0, -1.0, 1).unwrap();
        assert_eq!(
            j.dense(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
        );

        let k = build_structure_matrix(1.0, 1.0, 1).unwrap();
        assert_eq!(
            k.dense(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );

        let n = build_structure_matrix(-1.0, -1.0, 2).unwrap();
        let b = BlockMatrix::split(n.dense()).unwrap();
        assert_eq!(b.b2, -DMatrix::<f64>::identity(2, 2));
        assert_eq!(b.b3, -DMatrix::<f64>::identity(2, 2));
        assert_eq!(b.b1, DMatrix::<f64>::zeros(2, 2));
        assert_eq!(b.b4, DMatrix::<f64>::zeros(2, 2));
    }

    #[test]
    fn structure_matrix_rejects_bad_input() {
        assert!(build_structure_matrix(1.0, -1.0, 0).is_err());
        assert!(build_structure_matrix(0.5, -1.0, 1).is_err());
        assert!(build_structure_matrix(1.0, 2.0, 1).is_err());
        assert!(build_structure_matrix(1.0, -1.0, MAX_BLOCK + 1).is_err());
        assert!(Sign::try_from(0).is_err());
    }

    #[test]
    fn symplectic_case_matches_j_for_all_sizes() {
        for m in 1..=8 {
            let s = build_structure_matrix(1.0, -1.0, m).unwrap();
            let mut j = DMatrix::zeros(2 * m, 2 * m);
            j.view_mut((0, m), (m, m)).fill_with_identity();
            j.view_mut((m, 0), (m, m))
                .copy_from(&-DMatrix::<f64>::identity(m, m));
            assert_eq!(s.dense(), &j);
        }
    }

    #[test]
    fn self_inverse_up_to_sign_is_exact() {
        for sig in SignSignature::all() {
            for m in 1..=4 {
                let s = sig.source_structure(m).unwrap();
                let sq = s.dense() * s.dense();
                let expect =
                    DMatrix::identity(2 * m, 2 * m) * (sig.eps1.value() * sig.eps2.value());
                assert_eq!(sq, expect);
            }
        }
    }

    #[test]
    fn fast_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for sig in SignSignature::all() {
            let s = sig.target_structure(3).unwrap();
            let a = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            assert_eq!(s.mul_left(&a), s.dense() * &a);
            assert_eq!(s.mul_right(&a), &a * s.dense());
            assert_eq!(s.mul_vec(&v), s.dense() * &v);
        }
    }

    #[test]
    fn sixteen_distinct_signatures() {
        let all: std::collections::HashSet<_> = SignSignature::all().collect();
        assert_eq!(all.len(), 16);
        assert_eq!(
            SignSignature::all().next().unwrap(),
            SignSignature::new(Sign::Plus, Sign::Plus, Sign::Plus, Sign::Plus)
        );
        assert_eq!(
            SignSignature::from_ints(FIRST_FORMALISM.to_ints()).unwrap(),
            FIRST_FORMALISM
        );
    }

    #[test]
    fn block_split_examples() {
        let b = BlockMatrix::split(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(b.b1, DMatrix::identity(2, 2));
        assert_eq!(b.b4, DMatrix::identity(2, 2));
        assert_eq!(b.b2, DMatrix::zeros(2, 2));
        assert_eq!(b.b3, DMatrix::zeros(2, 2));

        let j = BlockMatrix::split(build_structure_matrix(1.0, -1.0, 2).unwrap().dense()).unwrap();
        assert_eq!(j.b2, DMatrix::identity(2, 2));
        assert_eq!(j.b3, -DMatrix::<f64>::identity(2, 2));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-5.0..5.0));
        assert_eq!(BlockMatrix::split(&a).unwrap().join(), a);

        assert!(BlockMatrix::split(&DMatrix::zeros(3, 3)).is_err());
        assert!(BlockMatrix::split(&DMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn coefficient_matrix_of_constant_and_zero_fields() {
        let h0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let field = CoefficientField::constant(h0.clone()).unwrap();
        let xi = DVector::from_vec(vec![7.0, -1.0]);
        assert_eq!(coefficient_matrix(&field, &xi, 0.3).unwrap(), h0);

        let zero = CoefficientField::zero(2).unwrap();
        let xi4 = DVector::from_element(4, 1.5);
        assert_eq!(
            coefficient_matrix(&zero, &xi4, 0.0).unwrap(),
            DMatrix::zeros(4, 4)
        );

        assert!(coefficient_matrix(&zero, &xi, 0.0).is_err());
        assert!(CoefficientField::constant(DMatrix::zeros(3, 3)).is_err());
    }

    // H_ij(xi) = xi^1 delta_ij with m = 1.
    fn linear_diagonal_field() -> CoefficientField {
        CoefficientField::with_gradient(
            1,
            |xi, _| DMatrix::identity(2, 2) * xi[0],
            |_, _| vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2)],
        )
        .unwrap()
    }

    #[test]
    fn coefficient_matrix_state_dependent_closed_form() {
        let field = linear_diagonal_field();
        let xi = DVector::from_vec(vec![2.0, 3.0]);
        // X_lj = 1/2 sum_i d_l(xi^1 delta_ij) xi^i + xi^1 delta_lj
        // row l = 0: 1/2 xi^j + 2 delta_0j -> [1 + 2, 1.5]; row 1: [0, 2]
        let expect = DMatrix::from_row_slice(2, 2, &[3.0, 1.5, 0.0, 2.0]);
        let x = coefficient_matrix(&field, &xi, 0.0).unwrap();
        assert!((&x - &expect).amax() < 1e-15);

        // central-difference oracle on eval, h = 1e-5
        let h = 1e-5;
        let mut oracle = field.eval(&xi, 0.0);
        for l in 0..2 {
            let mut p = xi.clone();
            let mut q = xi.clone();
            p[l] += h;
            q[l] -= h;
            let d = (field.eval(&p, 0.0) - field.eval(&q, 0.0)) / (2.0 * h);
            for j in 0..2 {
                oracle[(l, j)] += 0.5 * (0..2).map(|i| d[(i, j)] * xi[i]).sum::<f64>();
            }
        }
        assert!((&x - &oracle).amax() < 1e-9);

        let fd = coefficient_matrix(&field.finite_difference(), &xi, 0.0).unwrap();
        assert!((&x - &fd).amax() < 1e-9);
    }

    #[test]
    fn state_dependent_coefficient_matrix_is_not_symmetric() {
        let x = coefficient_matrix(
            &linear_diagonal_field(),
            &DVector::from_vec(vec![2.0, 3.0]),
            0.0,
        )
        .unwrap();
        assert!((x[(0, 1)] - x[(1, 0)]).abs() > 1.0);
    }

    #[test]
    fn symmetry_defect_detects_asymmetric_field() {
        let bad = CoefficientField::constant(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]))
            .unwrap();
        assert_eq!(bad.symmetry_defect(&[(DVector::zeros(2), 0.0)]), 2.0);
        let good = linear_diagonal_field();
        assert_eq!(
            good.symmetry_defect(&[(DVector::from_vec(vec![1.0, 4.0]), 0.0)]),
            0.0
        );
    }
}
