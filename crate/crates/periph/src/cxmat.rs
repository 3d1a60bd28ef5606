//! Dense complex matrix core.
//!
//! Everything downstream (word evaluation, flags, the deformation solver)
//! works over square matrices of `Complex<f64>`. This module owns the matrix
//! wrapper plus the spectral toolbox: characteristic polynomials via
//! Faddeev–LeVerrier, eigenvalues via Durand–Kerner with Newton polish and
//! sensitivity-aware clustering, regularity tests, the eigenvalue
//! normalization map `e_map`, determinant-1 lifts, and projective distance.
//!
//! Branch-cut policy (fixed crate-wide): `log` takes 1 to 0 and `n`-th roots
//! take 1 to 1; maps that would leave the branch-safe neighbourhood of 1
//! return [`Error::BranchAmbiguity`] instead of guessing a sheet.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Shorthand for the scalar type used throughout the crate.
pub type C64 = Complex64;

/// Default comparison tolerance when a caller has no better context.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative gap required between kept and dropped singular values before a
/// rank decision is accepted.
pub const RANK_GAP: f64 = 1e3;

/// Dense square complex matrix with an attached comparison tolerance.
///
/// The tolerance travels with the matrix and seeds downstream decision
/// thresholds (eigenvalue clustering, rank gaps, flag selection), so the two
/// sides of any cross-check run with consistent cutoffs.
#[derive(Clone, Debug)]
pub struct CMatrix {
    data: DMatrix<C64>,
    tol: f64,
}

impl CMatrix {
    /// Wraps a square matrix of dimension at least 2 with finite entries.
    pub fn new(data: DMatrix<C64>, tol: f64) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::Invalid(format!(
                "matrix must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.nrows() < 2 {
            return Err(Error::Invalid(format!(
                "matrix dimension must be at least 2, got {}",
                data.nrows()
            )));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid("matrix entries must be finite".into()));
        }
        Ok(CMatrix { data, tol })
    }

    /// Builds from row-major nested slices.
    pub fn from_rows(rows: &[Vec<C64>], tol: f64) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("rows must form a square matrix".into()));
        }
        let data = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        CMatrix::new(data, tol)
    }

    /// Identity matrix of dimension `n`.
    pub fn identity(n: usize, tol: f64) -> Result<Self> {
        CMatrix::new(DMatrix::identity(n, n), tol)
    }

    /// Matrix dimension `n`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Attached tolerance.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Entry `(i, j)`, zero-based.
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    /// Borrow the underlying storage.
    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }

    /// Consume into the underlying storage.
    pub fn into_data(self) -> DMatrix<C64> {
        self.data
    }

    /// Matrix product; the result carries the larger of the two tolerances.
    pub fn mul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.dim() != rhs.dim() {
            return Err(Error::Invalid(format!(
                "dimension mismatch in product: {} vs {}",
                self.dim(),
                rhs.dim()
            )));
        }
        CMatrix::new(&self.data * &rhs.data, self.tol.max(rhs.tol))
    }

    /// Entrywise difference.
    pub fn sub(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.dim() != rhs.dim() {
            return Err(Error::Invalid(format!(
                "dimension mismatch in difference: {} vs {}",
                self.dim(),
                rhs.dim()
            )));
        }
        CMatrix::new(&self.data - &rhs.data, self.tol.max(rhs.tol))
    }

    /// Scalar multiple.
    pub fn scale(&self, s: C64) -> Result<CMatrix> {
        CMatrix::new(self.data.map(|z| z * s), self.tol)
    }

    /// Determinant via LU.
    pub fn det(&self) -> C64 {
        self.data.clone().lu().determinant()
    }

    /// Inverse via LU; errors if numerically singular.
    pub fn inverse(&self) -> Result<CMatrix> {
        let inv = raw_inverse(&self.data)?;
        CMatrix::new(inv, self.tol)
    }

    /// Integer power, negative exponents via the inverse.
    pub fn powi(&self, k: i64) -> Result<CMatrix> {
        let n = self.dim();
        let base = if k < 0 { raw_inverse(&self.data)? } else { self.data.clone() };
        let mut acc = DMatrix::identity(n, n);
        for _ in 0..k.unsigned_abs() {
            acc = &acc * &base;
        }
        CMatrix::new(acc, self.tol)
    }

    /// Conjugation `b^-1 * self * b`.
    pub fn conjugate_by(&self, b: &CMatrix) -> Result<CMatrix> {
        if self.dim() != b.dim() {
            return Err(Error::Invalid("dimension mismatch in conjugation".into()));
        }
        let binv = raw_inverse(&b.data)?;
        CMatrix::new(binv * &self.data * &b.data, self.tol.max(b.tol))
    }

    /// Largest entry modulus.
    pub fn max_entry_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max-entry norm of the difference (convenience for tests and checks).
    pub fn distance(&self, rhs: &CMatrix) -> f64 {
        (&self.data - &rhs.data).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Inverse of a raw storage matrix, with a singularity check.
pub(crate) fn raw_inverse(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let det = m.clone().lu().determinant();
    m.clone().try_inverse().ok_or(Error::Singular { abs_det: det.norm() })
}

// ---------------------------------------------------------------------------
// Spectral data
// ---------------------------------------------------------------------------

/// One distinct eigenvalue with its algebraic multiplicity.
#[derive(Clone, Debug)]
pub struct EigenCluster {
    /// Cluster representative (mean of the clustered roots; first-order
    /// accurate even when a multiple root scatters its computed roots).
    pub value: C64,
    /// Algebraic multiplicity.
    pub multiplicity: usize,
    /// Scatter of the computed roots around the representative plus their
    /// sensitivity — an upper bound on how far the true eigenvalue(s) of
    /// this cluster can sit from `value`. Rank thresholds that probe
    /// `A - value*I` must be at least this wide.
    pub radius: f64,
}

/// Characteristic polynomial plus eigenvalue decomposition of a matrix.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// Monic characteristic polynomial, ascending degree:
    /// `p(z) = sum charpoly[i] * z^i` with `charpoly[n] = 1`.
    pub charpoly: Vec<C64>,
    /// Eigenvalues with multiplicity (cluster means, repeated), sorted by
    /// `(re, im)` for determinism.
    pub eigenvalues: Vec<C64>,
    /// Distinct eigenvalues with multiplicities, sorted by `(re, im)`.
    pub clusters: Vec<EigenCluster>,
    /// True iff the characteristic polynomial and its derivative are
    /// numerically coprime (all eigenvalues simple).
    pub discriminant_ok: bool,
}

impl SpectralData {
    /// Elementary symmetric function of the eigenvalues, read off the
    /// characteristic polynomial: `sigma_k = (-1)^k * charpoly[n - k]`.
    pub fn sigma(&self, k: usize) -> C64 {
        let n = self.charpoly.len() - 1;
        assert!(k <= n, "sigma index out of range");
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        self.charpoly[n - k] * sign
    }
}

/// Outcome of a regularity test, including whether any rank decision lacked
/// a clear singular-value gap.
#[derive(Clone, Debug)]
pub struct Regularity {
    /// True iff every eigenvalue has a one-dimensional eigenspace.
    pub regular: bool,
    /// True iff some rank decision had no 1e3 gap; `regular` is then forced
    /// false rather than guessed.
    pub ambiguous: bool,
}

/// Characteristic polynomial (Faddeev–LeVerrier) and eigenvalues
/// (Durand–Kerner + Newton polish) with sensitivity-aware clustering.
pub fn char_poly(a: &CMatrix) -> Result<SpectralData> {
    let n = a.dim();
    let coeffs = faddeev_leverrier(a.data());
    let raw_roots = durand_kerner(&coeffs)?;

    // Newton polish simple roots; measure each root's sensitivity as its
    // Newton correction, which is ~machine-eps for simple roots and ~the
    // scatter radius for the computed roots of a multiple root.
    let deriv = poly_derivative(&coeffs);
    let coeff_scale = coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let mut roots = raw_roots;
    let mut etas = vec![0.0f64; n];
    for (z, eta) in roots.iter_mut().zip(etas.iter_mut()) {
        for _ in 0..3 {
            let pd = poly_eval(&deriv, *z);
            let pv = poly_eval(&coeffs, *z);
            let guard = 1e-8 * coeff_scale * z.norm().max(1.0).powi(n as i32 - 1);
            if pd.norm() <= guard {
                break;
            }
            *z -= pv / pd;
        }
        let pd = poly_eval(&deriv, *z).norm();
        // A single evaluation of p can be accidentally tiny at a computed
        // root; floor it by the coefficient-rounding majorant so eta reports
        // the true backward-error radius (which self-consistently reaches
        // the eps^(1/m) scatter scale near an m-fold root, where pd ~ m*d^(m-1)).
        let majorant: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c.norm() * z.norm().powi(k as i32))
            .sum();
        let pv = poly_eval(&coeffs, *z)
            .norm()
            .max(f64::EPSILON * (n as f64 + 1.0) * majorant);
        *eta = pv / pd.max(f64::MIN_POSITIVE.sqrt());
    }

    // Cluster: a 1e2*tol floor, widened by measured root sensitivity so
    // the scattered roots of a genuine multiple root merge.
    let lam_scale = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let floor = 1e2 * a.tol() * lam_scale;
    let clusters = cluster_points(&roots, |i, j| {
        let thresh = floor.max(10.0 * (etas[i] + etas[j]));
        (roots[i] - roots[j]).norm() <= thresh
    });

    let mut cluster_list: Vec<EigenCluster> = clusters
        .iter()
        .map(|members| {
            let mean = members.iter().map(|&i| roots[i]).sum::<C64>() / members.len() as f64;
            let m = members.len();
            // An m-fold root of p is a simple root of p^(m-1); Newton there
            // recovers the cluster center to machine precision, where the
            // mean of the scattered roots is only ~eps^(1/m) accurate.
            let value = if m >= 2 { refine_multiple_root(&coeffs, mean, m) } else { mean };
            let radius = members
                .iter()
                .map(|&i| (roots[i] - value).norm() + etas[i])
                .fold(0.0, f64::max);
            EigenCluster { value, multiplicity: m, radius }
        })
        .collect();
    cluster_list.sort_by(|a, b| {
        (a.value.re, a.value.im)
            .partial_cmp(&(b.value.re, b.value.im))
            .expect("finite eigenvalues")
    });

    let mut eigenvalues = Vec::with_capacity(n);
    for c in &cluster_list {
        for _ in 0..c.multiplicity {
            eigenvalues.push(c.value);
        }
    }

    let discriminant_ok = {
        let res = sylvester_resultant(&coeffs, &deriv);
        let norm = res.norm() / coeff_scale.powi(2 * n as i32 - 1);
        norm > a.tol()
    };

    Ok(SpectralData { charpoly: coeffs, eigenvalues, clusters: cluster_list, discriminant_ok })
}

/// True iff the matrix is regular (one Jordan block per eigenvalue, i.e.
/// every eigenspace is one-dimensional). Ambiguous rank decisions report
/// `false` with the `ambiguous` flag set in [`regularity`].
pub fn is_regular(a: &CMatrix) -> Result<bool> {
    Ok(regularity(a)?.regular)
}

/// Detailed regularity test. Eigenvalue clusters of multiplicity >= 2 get a
/// rank test on `A - lambda*I`; nullity 1 (a single Jordan block) keeps the
/// matrix regular, nullity 0 means the cluster is a tight group of simple
/// eigenvalues (also regular), nullity >= 2 or a missing singular-value gap
/// reject it.
pub fn regularity(a: &CMatrix) -> Result<Regularity> {
    let spectral = char_poly(a)?;
    let mut ambiguous = false;
    for cluster in &spectral.clusters {
        if cluster.multiplicity < 2 {
            continue;
        }
        let n = a.dim();
        let shifted = a.data() - DMatrix::from_diagonal_element(n, n, cluster.value);
        let svals = singular_values(&shifted);
        let theta = a.tol() * svals[0].max(1.0);
        match thresholded_nullity(&svals, theta) {
            Ok((nullity, _gap)) => {
                if nullity >= 2 {
                    return Ok(Regularity { regular: false, ambiguous: false });
                }
            }
            Err(_) => {
                ambiguous = true;
            }
        }
    }
    Ok(Regularity { regular: !ambiguous, ambiguous })
}

// ---------------------------------------------------------------------------
// Normalization maps
// ---------------------------------------------------------------------------

/// Eigenvalue normalization: sends the ratio tuple `(a_1, ..., a_{n-1})` to
/// the determinant-1 eigenvalue tuple
/// `(1, a_1, a_1 a_2, ..., a_1...a_{n-1}) / (a_1^{n-1} a_2^{n-2} ... a_{n-1})^{1/n}`
/// using the root branch that takes 1 to 1.
///
/// Inputs must either all lie in the open unit disk around 1 or all be real
/// positive; anything else is a branch ambiguity.
pub fn e_map(v: &[C64]) -> Result<Vec<C64>> {
    if v.is_empty() {
        return Err(Error::Invalid("e_map needs at least one ratio".into()));
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Invalid("e_map entries must be finite".into()));
    }
    let n = v.len() + 1;
    let disk_safe = v.iter().all(|a| (a - C64::ONE).norm() < 1.0);
    let real_positive = v.iter().all(|a| a.im == 0.0 && a.re > 0.0);
    if !disk_safe && !real_positive {
        return Err(Error::BranchAmbiguity(format!(
            "e_map input must lie in |z - 1| < 1 or be real positive, got {v:?}"
        )));
    }

    // log of the normalizer, continued from 1 across the safe region.
    let mut w = C64::ZERO;
    for (k, a) in v.iter().enumerate() {
        let weight = (n - 1 - k) as f64;
        w += a.ln() * weight;
    }
    let root = (w / n as f64).exp();

    let mut out = Vec::with_capacity(n);
    let mut cum = C64::ONE;
    out.push(cum / root);
    for a in v {
        cum *= a;
        out.push(cum / root);
    }
    Ok(out)
}

/// All `n`-th roots of unity, `exp(2 pi i j / n)` for `j = 0..n`.
pub fn roots_of_unity(n: usize) -> Vec<C64> {
    (0..n)
        .map(|j| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64))
        .collect()
}

/// Rescales `p` to determinant 1, choosing the scaling closest to
/// `reference` in max-entry norm. Errors if no candidate is within 0.5.
pub fn sl_lift(p: &CMatrix, reference: &CMatrix) -> Result<CMatrix> {
    if p.dim() != reference.dim() {
        return Err(Error::Invalid("dimension mismatch in sl_lift".into()));
    }
    let n = p.dim();
    let det = p.det();
    if det.norm() < 1e-100 {
        return Err(Error::Singular { abs_det: det.norm() });
    }
    // Principal n-th root of 1/det, then all unit-root multiples.
    let lam0 = (-det.ln() / n as f64).exp();
    let mut best: Option<(f64, C64)> = None;
    for zeta in roots_of_unity(n) {
        let lam = lam0 * zeta;
        let dist = p
            .data()
            .iter()
            .zip(reference.data().iter())
            .map(|(a, r)| (a * lam - r).norm())
            .fold(0.0, f64::max);
        if best.map_or(true, |(d, _)| dist < d) {
            best = Some((dist, lam));
        }
    }
    let (dist, lam) = best.expect("n >= 2 candidates");
    if dist >= 0.5 {
        return Err(Error::LiftAmbiguity { best: dist });
    }
    p.scale(lam)
}

/// Projective distance: minimum over scalars `lam` with
/// `lam^n = det(b)/det(a)` of the max-entry norm of `lam*a - b`. Zero exactly
/// when the two matrices agree in PGL(n).
pub fn projective_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Invalid("dimension mismatch in projective_distance".into()));
    }
    let n = a.dim();
    let da = a.det();
    let db = b.det();
    if da.norm() < 1e-100 {
        return Err(Error::Singular { abs_det: da.norm() });
    }
    if db.norm() < 1e-100 {
        return Err(Error::Singular { abs_det: db.norm() });
    }
    let lam0 = ((db / da).ln() / n as f64).exp();
    let mut best = f64::INFINITY;
    for zeta in roots_of_unity(n) {
        let lam = lam0 * zeta;
        let dist = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| (x * lam - y).norm())
            .fold(0.0, f64::max);
        best = best.min(dist);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Rank decisions
// ---------------------------------------------------------------------------

/// Singular values of a raw matrix, sorted descending.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    s
}

/// Counts singular values below `theta`, requiring a relative gap of at
/// least [`RANK_GAP`] between the smallest kept and largest dropped value.
/// Returns `(nullity, gap)`; the gap is infinite when nothing is dropped.
pub fn thresholded_nullity(svals: &[f64], theta: f64) -> Result<(usize, f64)> {
    let dropped: Vec<f64> = svals.iter().copied().filter(|&s| s < theta).collect();
    if dropped.is_empty() {
        return Ok((0, f64::INFINITY));
    }
    let kept_min = svals.iter().copied().filter(|&s| s >= theta).fold(f64::INFINITY, f64::min);
    let dropped_max = dropped.iter().copied().fold(0.0, f64::max);
    if kept_min.is_infinite() {
        // Everything dropped: the matrix is numerically zero at this scale.
        return Ok((svals.len(), f64::INFINITY));
    }
    let gap = kept_min / dropped_max.max(f64::MIN_POSITIVE);
    if gap < RANK_GAP {
        return Err(Error::AmbiguousRank { above: kept_min, below: dropped_max });
    }
    Ok((dropped.len(), gap))
}

// ---------------------------------------------------------------------------
// Polynomial helpers
// ---------------------------------------------------------------------------

/// Characteristic polynomial coefficients by Faddeev–LeVerrier, ascending
/// degree, monic. Smooth (polynomial) in the matrix entries, which matters
/// for finite-difference Jacobians downstream.
pub(crate) fn faddeev_leverrier(a: &DMatrix<C64>) -> Vec<C64> {
    let n = a.nrows();
    let mut coeffs = vec![C64::ZERO; n + 1];
    coeffs[n] = C64::ONE;
    let mut m = a.clone();
    coeffs[n - 1] = -m.trace();
    for k in 2..=n {
        let shifted = &m + DMatrix::from_diagonal_element(n, n, coeffs[n - k + 1]);
        m = a * shifted;
        coeffs[n - k] = -m.trace() / k as f64;
    }
    coeffs
}

/// Horner evaluation of an ascending-degree polynomial.
pub(crate) fn poly_eval(p: &[C64], z: C64) -> C64 {
    let mut acc = C64::ZERO;
    for &c in p.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// Derivative of an ascending-degree polynomial.
pub(crate) fn poly_derivative(p: &[C64]) -> Vec<C64> {
    p.iter().enumerate().skip(1).map(|(i, &c)| c * i as f64).collect()
}

/// Durand–Kerner (Weierstrass) roots of a monic polynomial. Convergence is
/// judged by the backward-error-style residual `|p(z)| / (scale * max(1,|z|)^n)`,
/// which stays meaningful for multiple roots where the iterates themselves
/// stall at the intrinsic scatter radius.
pub(crate) fn durand_kerner(coeffs: &[C64]) -> Result<Vec<C64>> {
    let n = coeffs.len() - 1;
    assert!(n >= 1, "polynomial must have positive degree");
    let coeff_scale = coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let radius = 1.0 + coeffs[..n].iter().map(|c| c.norm()).fold(0.0, f64::max);

    let mut z: Vec<C64> = (0..n)
        .map(|j| {
            C64::from_polar(0.65 * radius, 2.0 * std::f64::consts::PI * j as f64 / n as f64 + 0.4)
        })
        .collect();

    let residual = |roots: &[C64]| -> f64 {
        roots
            .iter()
            .map(|&zj| poly_eval(coeffs, zj).norm() / (coeff_scale * zj.norm().max(1.0).powi(n as i32)))
            .fold(0.0, f64::max)
    };

    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for j in 0..n {
            let mut denom = C64::ONE;
            for k in 0..n {
                if k != j {
                    denom *= z[j] - z[k];
                }
            }
            if denom.norm() < f64::MIN_POSITIVE.sqrt() {
                // Coincident iterates: nudge deterministically and continue.
                z[j] += C64::new(1e-8 * radius, 1e-8 * radius);
                continue;
            }
            let step = poly_eval(coeffs, z[j]) / denom;
            z[j] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-15 * radius && residual(&z) < 1e-12 {
            return Ok(z);
        }
    }
    let res = residual(&z);
    if res < 1e-10 {
        Ok(z)
    } else {
        Err(Error::EigenNonConvergence { residual: res })
    }
}

/// Newton-polishes the center of an m-fold root cluster on the (m-1)-th
/// derivative of `p`, where the multiple root is simple. Falls back to the
/// input when the derivative's slope degenerates.
pub(crate) fn refine_multiple_root(p: &[C64], start: C64, multiplicity: usize) -> C64 {
    let mut q = p.to_vec();
    for _ in 1..multiplicity {
        q = poly_derivative(&q);
    }
    let qd = poly_derivative(&q);
    let scale = q.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let mut z = start;
    for _ in 0..8 {
        let slope = poly_eval(&qd, z);
        if slope.norm() < 1e-12 * scale {
            return start;
        }
        let step = poly_eval(&q, z) / slope;
        z -= step;
        if step.norm() < 1e-16 * z.norm().max(1.0) {
            break;
        }
    }
    // Accept only if the refinement stayed inside the cluster's scale.
    if (z - start).norm() < 1.0 {
        z
    } else {
        start
    }
}

/// Resultant of two ascending-degree polynomials via the Sylvester matrix.
pub(crate) fn sylvester_resultant(p: &[C64], q: &[C64]) -> C64 {
    let dp = p.len() - 1;
    let dq = q.len() - 1;
    let size = dp + dq;
    if size == 0 {
        return C64::ONE;
    }
    let mut s = DMatrix::<C64>::zeros(size, size);
    // dq rows of p's coefficients (descending), shifted.
    for row in 0..dq {
        for (k, &c) in p.iter().rev().enumerate() {
            s[(row, row + k)] = c;
        }
    }
    // dp rows of q's coefficients (descending), shifted.
    for row in 0..dp {
        for (k, &c) in q.iter().rev().enumerate() {
            s[(dq + row, row + k)] = c;
        }
    }
    s.lu().determinant()
}

/// Greedy single-linkage clustering of points under a pairwise predicate.
/// Returns index groups.
fn cluster_points<F: Fn(usize, usize) -> bool>(points: &[C64], close: F) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if close(i, j) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn diag3(a: f64, b: f64, d: f64) -> CMatrix {
        CMatrix::from_rows(
            &[
                vec![c(a, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
                vec![c(0.0, 0.0), c(b, 0.0), c(0.0, 0.0)],
                vec![c(0.0, 0.0), c(0.0, 0.0), c(d, 0.0)],
            ],
            DEFAULT_TOL,
        )
        .unwrap()
    }

    fn jordan3_unipotent() -> CMatrix {
        CMatrix::from_rows(
            &[
                vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
                vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)],
                vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
            ],
            DEFAULT_TOL,
        )
        .unwrap()
    }

    #[test]
    fn charpoly_of_diag_1_2_6() {
        let sd = char_poly(&diag3(1.0, 2.0, 6.0)).unwrap();
        // (z-1)(z-2)(z-6) = z^3 - 9 z^2 + 20 z - 12
        let expected = [c(-12.0, 0.0), c(20.0, 0.0), c(-9.0, 0.0), c(1.0, 0.0)];
        for (got, want) in sd.charpoly.iter().zip(expected.iter()) {
            assert!((got - want).norm() < 1e-12, "coeff {got} vs {want}");
        }
        assert!((sd.sigma(1) - c(9.0, 0.0)).norm() < 1e-12);
        assert!((sd.sigma(2) - c(20.0, 0.0)).norm() < 1e-12);
        assert!((sd.sigma(3) - c(12.0, 0.0)).norm() < 1e-12);
        let eigs: Vec<f64> = sd.eigenvalues.iter().map(|z| z.re).collect();
        assert!((eigs[0] - 1.0).abs() < 1e-10);
        assert!((eigs[1] - 2.0).abs() < 1e-10);
        assert!((eigs[2] - 6.0).abs() < 1e-10);
        assert!(sd.discriminant_ok);
    }

    #[test]
    fn charpoly_of_unipotent_jordan_block() {
        let sd = char_poly(&jordan3_unipotent()).unwrap();
        // (z-1)^3 = z^3 - 3 z^2 + 3 z - 1
        let expected = [c(-1.0, 0.0), c(3.0, 0.0), c(-3.0, 0.0), c(1.0, 0.0)];
        for (got, want) in sd.charpoly.iter().zip(expected.iter()) {
            assert!((got - want).norm() < 1e-13, "coeff {got} vs {want}");
        }
        assert_eq!(sd.clusters.len(), 1, "triple eigenvalue must merge into one cluster");
        assert_eq!(sd.clusters[0].multiplicity, 3);
        assert!((sd.clusters[0].value - C64::ONE).norm() < 1e-9);
        assert!(!sd.discriminant_ok);
    }

    #[test]
    fn regularity_examples() {
        assert!(is_regular(&jordan3_unipotent()).unwrap(), "J3(1) is regular");
        assert!(is_regular(&diag3(1.0, 2.0, 6.0)).unwrap(), "distinct eigenvalues");
        assert!(!is_regular(&diag3(1.0, 1.0, 2.0)).unwrap(), "repeated diagonalizable eigenvalue");
        assert!(
            !is_regular(&CMatrix::identity(3, DEFAULT_TOL).unwrap()).unwrap(),
            "identity is maximally non-regular"
        );
    }

    #[test]
    fn e_map_matches_worked_examples() {
        // n = 3: (1, 8) -> (1/2, 1/2, 4)
        let out = e_map(&[c(1.0, 0.0), c(8.0, 0.0)]).unwrap();
        let want = [c(0.5, 0.0), c(0.5, 0.0), c(4.0, 0.0)];
        for (g, w) in out.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-12, "{g} vs {w}");
        }
        // n = 3: (8, 1) -> (1/4, 2, 2)
        let out = e_map(&[c(8.0, 0.0), c(1.0, 0.0)]).unwrap();
        let want = [c(0.25, 0.0), c(2.0, 0.0), c(2.0, 0.0)];
        for (g, w) in out.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-12, "{g} vs {w}");
        }
        // Fixed point of the branch: all-ones input.
        let out = e_map(&[C64::ONE, C64::ONE]).unwrap();
        for g in &out {
            assert!((g - C64::ONE).norm() < 1e-15);
        }
    }

    #[test]
    fn e_map_rejects_branch_ambiguous_input() {
        let err = e_map(&[c(-0.5, 0.0), c(1.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::BranchAmbiguity(_)), "got {err:?}");
        // Far outside the disk and not real positive.
        let err = e_map(&[c(0.0, 2.5), c(1.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::BranchAmbiguity(_)), "got {err:?}");
    }

    #[test]
    fn sl_lift_rescales_to_reference() {
        let p = CMatrix::identity(3, DEFAULT_TOL).unwrap().scale(c(2.0, 0.0)).unwrap();
        let r = CMatrix::identity(3, DEFAULT_TOL).unwrap();
        let lifted = sl_lift(&p, &r).unwrap();
        assert!(lifted.distance(&r) < 1e-14);
        assert!((lifted.det() - C64::ONE).norm() < 1e-14);
    }

    #[test]
    fn sl_lift_rejects_distant_candidates() {
        let p = CMatrix::identity(3, DEFAULT_TOL).unwrap();
        let r = diag3(2.0, 2.0, 2.0);
        let err = sl_lift(&p, &r).unwrap_err();
        assert!(matches!(err, Error::LiftAmbiguity { .. }), "got {err:?}");
    }

    #[test]
    fn projective_distance_vanishes_on_unit_root_scalings() {
        let a = CMatrix::from_rows(
            &[
                vec![c(1.0, 0.2), c(0.3, -0.1), c(0.0, 0.5)],
                vec![c(-0.4, 0.0), c(0.9, 0.1), c(0.2, 0.2)],
                vec![c(0.1, -0.3), c(0.0, 0.7), c(1.1, 0.0)],
            ],
            DEFAULT_TOL,
        )
        .unwrap();
        for zeta in roots_of_unity(3) {
            let b = a.scale(zeta).unwrap();
            let d = projective_distance(&a, &b).unwrap();
            assert!(d < 1e-12, "distance {d} for zeta {zeta}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        let a = CMatrix::from_rows(
            &[
                vec![c(1.0, 0.0), c(1.0, 0.0), c(-0.5, -0.5)],
                vec![c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)],
                vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
            ],
            DEFAULT_TOL,
        )
        .unwrap();
        let prod = a.mul(&a.inverse().unwrap()).unwrap();
        assert!(prod.distance(&CMatrix::identity(3, DEFAULT_TOL).unwrap()) < 1e-13);
    }

    #[test]
    fn cmatrix_rejects_bad_input() {
        assert!(CMatrix::from_rows(&[vec![C64::ONE]], DEFAULT_TOL).is_err(), "1x1");
        assert!(
            CMatrix::new(DMatrix::from_element(2, 3, C64::ONE), DEFAULT_TOL).is_err(),
            "non-square"
        );
        assert!(CMatrix::new(DMatrix::identity(2, 2), -1.0).is_err(), "bad tol");
        let nan = DMatrix::from_element(2, 2, C64::new(f64::NAN, 0.0));
        assert!(CMatrix::new(nan, DEFAULT_TOL).is_err(), "non-finite");
    }

    // --- property tests -----------------------------------------------------

    fn complex_in_disk(r: f64) -> impl Strategy<Value = C64> {
        (-r..r, -r..r).prop_map(|(re, im)| C64::new(re, im))
    }

    fn random_3x3() -> impl Strategy<Value = CMatrix> {
        proptest::collection::vec(complex_in_disk(1.0), 9).prop_map(|v| {
            CMatrix::new(DMatrix::from_row_slice(3, 3, &v), DEFAULT_TOL).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eigenvalue_product_matches_determinant(a in random_3x3()) {
            let det = a.det();
            prop_assume!(det.norm() > 0.05);
            let sd = char_poly(&a).unwrap();
            let prod: C64 = sd.eigenvalues.iter().product();
            prop_assert!(
                (prod - det).norm() <= 1e-8 * det.norm(),
                "prod {prod} vs det {det}"
            );
        }

        #[test]
        fn e_map_output_has_unit_product(v in proptest::collection::vec(complex_in_disk(0.5), 2)) {
            let shifted: Vec<C64> = v.iter().map(|z| z + C64::ONE).collect();
            prop_assume!(shifted.iter().all(|z| (z - C64::ONE).norm() < 0.99));
            let out = e_map(&shifted).unwrap();
            let prod: C64 = out.iter().product();
            prop_assert!((prod - C64::ONE).norm() < 1e-10, "product {prod}");
        }

        #[test]
        fn projective_distance_scaling_invariance(a in random_3x3(), k in 0usize..3) {
            prop_assume!(a.det().norm() > 0.05);
            let zeta = roots_of_unity(3)[k];
            let b = a.scale(zeta).unwrap();
            prop_assert!(projective_distance(&a, &b).unwrap() < 1e-12);
        }

        #[test]
        fn regularity_is_conjugation_invariant(a in random_3x3(), g in random_3x3()) {
            prop_assume!(a.det().norm() > 0.05);
            // Use the unitary Q factor so the conjugation is well-conditioned.
            let q = g.data().clone().qr().q();
            prop_assume!(q.clone().lu().determinant().norm() > 0.5);
            let conj = CMatrix::new(
                q.adjoint() * a.data() * &q,
                DEFAULT_TOL,
            ).unwrap();
            let ra = regularity(&a).unwrap();
            let rc = regularity(&conj).unwrap();
            prop_assume!(!ra.ambiguous && !rc.ambiguous);
            prop_assert_eq!(ra.regular, rc.regular);
        }
    }
}

