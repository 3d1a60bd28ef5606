//! Symmetric-power lifts of 2x2 matrices.
//!
//! A 2x2 matrix acts on binary forms of degree n-1; in the monomial basis
//! `e1^(n-1-k) e2^k` (k = 0..n-1) that action is an n x n matrix. The lift
//! is a group homomorphism, sends SL(2) into SL(n), and turns
//! `diag(t, 1/t)` into `diag(t^(n-1), t^(n-3), ..., t^-(n-1))`, so every
//! lifted diagonal has all successive eigenvalue ratios equal — the test
//! that detects whether an n x n point came from a 2x2 one.

use nalgebra::DMatrix;

use crate::cxmat::{CMatrix, C64};
use crate::error::{Error, Result};
use crate::fpgroup::Representation;

/// Pascal-triangle row: binomial coefficients C(n, 0..=n) as f64.
fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..n {
        let mut next = vec![1.0];
        for w in row.windows(2) {
            next.push(w[0] + w[1]);
        }
        next.push(1.0);
        row = next;
    }
    row
}

/// Coefficients of `(x e1 + y e2)^p` in ascending powers of `e2`.
fn binary_power(x: C64, y: C64, p: usize) -> Vec<C64> {
    let binom = binomial_row(p);
    let mut coeffs = Vec::with_capacity(p + 1);
    for i in 0..=p {
        coeffs.push(C64::from(binom[i]) * x.powu((p - i) as u32) * y.powu(i as u32));
    }
    coeffs
}

/// Product of two coefficient vectors (polynomial convolution).
fn convolve(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Lifts a 2x2 matrix to its degree-(n-1) symmetric power, an n x n matrix
/// in the monomial basis `e1^(n-1-k) e2^k`. Requires `n >= 2`.
pub fn symmetric_lift(m: &CMatrix, n: usize) -> Result<CMatrix> {
    if m.dim() != 2 {
        return Err(Error::Invalid(format!(
            "symmetric lift starts from a 2x2 matrix, got {0}x{0}",
            m.dim()
        )));
    }
    if n < 2 {
        return Err(Error::Invalid(format!("lift target dimension must be >= 2, got {n}")));
    }
    let a = m.entry(0, 0);
    let b = m.entry(0, 1);
    let c = m.entry(1, 0);
    let d = m.entry(1, 1);
    let deg = n - 1;
    let mut out = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        // Image of basis vector e1^(deg-j) e2^j:
        // (a e1 + c e2)^(deg-j) * (b e1 + d e2)^j.
        let left = binary_power(a, c, deg - j);
        let right = binary_power(b, d, j);
        let col = convolve(&left, &right);
        for k in 0..n {
            out[(k, j)] = col[k];
        }
    }
    CMatrix::new(out, m.tol())
}

/// Lifts every generator image of a 2-dimensional representation to
/// dimension `n`, revalidating relators against `residual_bound`.
pub fn lift_rep(rep: &Representation, n: usize, residual_bound: f64) -> Result<Representation> {
    if rep.dim() != 2 {
        return Err(Error::Invalid(format!(
            "can only lift 2-dimensional representations, got dimension {}",
            rep.dim()
        )));
    }
    let images = rep
        .images()
        .iter()
        .map(|m| symmetric_lift(m, n))
        .collect::<Result<Vec<_>>>()?;
    Representation::new(rep.presentation().clone(), images, rep.tol(), residual_bound)
}

/// Measures how far a holonomy eigenvalue-ratio vector `(L_1..L_{n-1})` is
/// from the locus of lifted 2x2 points, where all `L_k` coincide. Returns
/// the maximum pairwise distance and whether it is within `tol`.
pub fn pgl2_locus_check(ratios: &[C64], tol: f64) -> Result<(f64, bool)> {
    if ratios.is_empty() {
        return Err(Error::Invalid("ratio vector must be nonempty".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid("tol must be positive".into()));
    }
    let mut spread = 0.0f64;
    for i in 0..ratios.len() {
        for j in i + 1..ratios.len() {
            spread = spread.max((ratios[i] - ratios[j]).norm());
        }
    }
    Ok((spread, spread <= tol))
}
