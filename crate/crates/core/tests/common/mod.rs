//! Oracles and random inputs shared by the integration tests.
#![allow(dead_code)]

use manifold_maps::structure::{BlockMatrix, SignSignature};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
    let s = (norm.log2().ceil() + 1.0).max(0.0) as i32;
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `vec(A X B) = (B^T kron A) vec(X)` with column-major `vec`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// `T(tau)` for `T' = A T - T B` with constant `A`, `B`, through the
/// vectorized generator `I kron A - B^T kron I`.
pub fn sylvester_flow(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    t0: &DMatrix<f64>,
    tau: f64,
) -> DMatrix<f64> {
    let n = t0.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let gen = kron(&eye, a) - kron(&b.transpose(), &eye);
    let v = expm(&(gen * tau)) * DVector::from_column_slice(t0.as_slice());
    DMatrix::from_column_slice(n, n, v.as_slice())
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..=1.0))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n);
    DMatrix::from_fn(n, n, |i, j| if i <= j { a[(i, j)] } else { a[(j, i)] })
}

/// Symmetric positive definite with eigenvalues in `[0.5, 1.5]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let q = random_matrix(rng, n, n).qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(0.5..=1.5)));
    let s = &q * d * q.transpose();
    (&s + s.transpose()) * 0.5
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0))
}

pub fn signature(k: usize) -> SignSignature {
    SignSignature::all().nth(k % 16).unwrap()
}

/// Right side of the transformation equation for the canonical signs,
/// written out block by block as in the original formalism.
pub fn canonical_blocks(t: &DMatrix<f64>, y: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, y, z) = (
        BlockMatrix::split(t).unwrap(),
        BlockMatrix::split(y).unwrap(),
        BlockMatrix::split(z).unwrap(),
    );
    let d1 = &y.b3 * &t.b1 + &y.b4 * &t.b3 + &t.b2 * &z.b1 - &t.b1 * &z.b3;
    let d2 = &y.b3 * &t.b2 + &y.b4 * &t.b4 + &t.b2 * &z.b2 - &t.b1 * &z.b4;
    let d3 = -(&y.b1 * &t.b1) - &y.b2 * &t.b3 + &t.b4 * &z.b1 - &t.b3 * &z.b3;
    let d4 = -(&y.b1 * &t.b2) - &y.b2 * &t.b4 + &t.b4 * &z.b2 - &t.b3 * &z.b4;
    BlockMatrix::from_blocks(d1, d2, d3, d4).unwrap().join()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
