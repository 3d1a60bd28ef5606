//! Invariant flags and decorations for commuting matrix pairs.
//!
//! A flag is a full chain of nested subspaces, stored as the unitary matrix
//! whose leading k columns span the k-dimensional stage. For a regular
//! matrix (one Jordan block per eigenvalue) the invariant flags are exactly
//! the interleavings of its per-eigenvalue Jordan chains, so there are
//! `n! / prod(multiplicities!)` of them; any matrix commuting with a regular
//! one preserves all of these automatically, which is verified numerically
//! rather than trusted. Each flag simultaneously upper-triangularizes the
//! pair; the diagonals read off in flag order are the decoration data, and
//! successive diagonal ratios are the eigenvalue-ratio coordinates used
//! downstream.

use nalgebra::{DMatrix, DVector, SVD};

use crate::cxmat::{
    char_poly, regularity, singular_values, thresholded_nullity, CMatrix, C64,
};
use crate::error::{Error, Result};

/// Largest flag family we are willing to enumerate (8! orderings).
const MAX_FLAGS: usize = 40_320;

/// Two flags closer than this to a reference are an ambiguous selection.
pub const TIE_TOL: f64 = 1e-6;

/// A complete flag: unitary basis whose leading k columns span stage k.
#[derive(Clone, Debug)]
pub struct Flag {
    basis: DMatrix<C64>,
}

impl Flag {
    /// Wraps a square unitary matrix; rejects non-unitary input.
    pub fn from_unitary(basis: DMatrix<C64>) -> Result<Flag> {
        if !basis.is_square() || basis.nrows() < 2 {
            return Err(Error::Invalid("flag basis must be square, n >= 2".into()));
        }
        let n = basis.nrows();
        let gram = basis.adjoint() * &basis;
        let err = (&gram - DMatrix::<C64>::identity(n, n))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if err > 1e-10 {
            return Err(Error::Invalid(format!(
                "flag basis is not unitary (Gram error {err:.3e})"
            )));
        }
        Ok(Flag { basis })
    }

    /// The coordinate flag spanned by the standard basis vectors in order.
    pub fn standard(n: usize) -> Flag {
        Flag { basis: DMatrix::identity(n, n) }
    }

    /// Orthonormalizes ordered columns into a flag (QR).
    pub(crate) fn from_ordered_columns(cols: &DMatrix<C64>) -> Flag {
        let qr = cols.clone().qr();
        Flag { basis: qr.q() }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// The unitary basis matrix.
    pub fn basis(&self) -> &DMatrix<C64> {
        &self.basis
    }
}

/// Distance between two flags: for each stage k, the principal angles
/// between the k-dimensional subspaces (computed from the singular values
/// of `Q1_k^H Q2_k`) are accumulated in a 2-norm; stages are then summed.
/// Zero exactly when the flags agree stage by stage.
pub fn flag_distance(a: &Flag, b: &Flag) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Invalid("flags must share one dimension".into()));
    }
    let n = a.dim();
    let mut total = 0.0;
    for k in 1..n {
        let qa = a.basis.columns(0, k);
        let qb = b.basis.columns(0, k);
        let overlap = qa.adjoint() * qb;
        let svals = singular_values(&overlap);
        let mut sq = 0.0;
        for s in svals {
            let c = s.clamp(-1.0, 1.0);
            sq += c.acos().powi(2);
        }
        total += sq.sqrt();
    }
    Ok(total)
}

/// A flag together with the diagonal entries of the triangularized pair
/// `(long, merid)` in flag order — the data that labels one sheet of the
/// eigenvalue-ordering covering.
#[derive(Clone, Debug)]
pub struct Decoration {
    /// The simultaneous triangularizing flag.
    pub flag: Flag,
    /// Diagonal of the first (typically longitude) matrix in flag order.
    pub long_diag: Vec<C64>,
    /// Diagonal of the second (typically meridian) matrix in flag order.
    pub merid_diag: Vec<C64>,
}

/// Upper-triangular forms and eigenvalue data of a commuting pair in a
/// chosen flag.
#[derive(Clone, Debug)]
pub struct PeripheralHolonomy {
    /// First matrix conjugated into the flag basis (upper triangular up to
    /// the documented leakage tolerance).
    pub long_upper: CMatrix,
    /// Second matrix conjugated into the flag basis.
    pub merid_upper: CMatrix,
    /// Diagonal of `long_upper`.
    pub long_diag: Vec<C64>,
    /// Diagonal of `merid_upper`.
    pub merid_diag: Vec<C64>,
    /// Successive diagonal ratios `d_{k+1} / d_k` of the first matrix.
    pub long_ratios: Vec<C64>,
    /// Successive diagonal ratios of the second matrix.
    pub merid_ratios: Vec<C64>,
}

/// How much strict-lower leakage a decoration tolerates: commuting partners
/// triangularize only up to roughly `||[A,B]|| / eigenvalue-gap`, so the
/// bound is far looser than the base tolerance.
fn leakage_tol(tol: f64, scale: f64) -> f64 {
    (1e3 * tol).max(1e-6) * scale.max(1.0)
}

fn strict_lower_max(t: &DMatrix<C64>) -> f64 {
    let n = t.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max(t[(i, j)].norm());
        }
    }
    worst
}

fn max_entry(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Nullspace basis of `m` as columns, using singular values below `theta`;
/// requires a 1e3 gap and returns vectors for the smallest singular values.
fn nullspace(m: &DMatrix<C64>, theta: f64) -> Result<DMatrix<C64>> {
    let svd = SVD::new(m.clone(), false, true);
    let svals: Vec<f64> = svd.singular_values.iter().copied().collect();
    let (nullity, _gap) = thresholded_nullity(&svals, theta)?;
    let v_t = svd.v_t.expect("requested v_t");
    let v = v_t.adjoint();
    let n = v.nrows();
    let mut out = DMatrix::<C64>::zeros(n, nullity);
    for (dst, src) in (v.ncols() - nullity..v.ncols()).enumerate() {
        out.set_column(dst, &v.column(src));
    }
    Ok(out)
}

/// Newton-refines a unitary basis so `Q^H A Q` is upper triangular to
/// machine precision. The unknown is a strict-lower perturbation `E` of the
/// basis (`Q <- qr(Q (I + E))`); to first order the strict-lower part of the
/// conjugated matrix moves by `lower([T, E])`, a linear map solved directly.
fn refine_triangularizing_basis(a: &DMatrix<C64>, q0: DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let p = n * (n - 1) / 2;
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect();

    let mut q = q0;
    let mut t = q.adjoint() * a * &q;
    let mut resid = strict_lower_max(&t);
    for _ in 0..6 {
        let scale = max_entry(&t).max(1.0);
        if resid <= 1e-14 * scale {
            break;
        }
        // Linear system: lower(T E - E T) = -lower(T) over strict-lower E.
        let mut sys = DMatrix::<C64>::zeros(p, p);
        let mut rhs = DVector::<C64>::zeros(p);
        for (row, &(i, j)) in pairs.iter().enumerate() {
            rhs[row] = -t[(i, j)];
            for (col, &(k, l)) in pairs.iter().enumerate() {
                // (T e_{kl} - e_{kl} T)_{ij} = T_{ik} [j = l] - [i = k] T_{lj}
                let mut coeff = C64::ZERO;
                if j == l {
                    coeff += t[(i, k)];
                }
                if i == k {
                    coeff -= t[(l, j)];
                }
                sys[(row, col)] = coeff;
            }
        }
        let svd = SVD::new(sys, true, true);
        let eps = 1e-13 * svd.singular_values.iter().copied().fold(1.0, f64::max);
        let sol = svd
            .solve(&rhs, eps)
            .map_err(|e| Error::Invalid(format!("triangularization solve failed: {e}")))?;
        let mut e = DMatrix::<C64>::identity(n, n);
        let mut step = 0.0f64;
        for (col, &(i, j)) in pairs.iter().enumerate() {
            e[(i, j)] = sol[col];
            step = step.max(sol[col].norm());
        }
        if step > 0.5 {
            // Damp oversized corrections to keep the basis well-conditioned.
            let damp = C64::from(0.5 / step);
            for &(i, j) in &pairs {
                e[(i, j)] *= damp;
            }
        }
        let qr = (&q * e).qr();
        q = qr.q();
        t = q.adjoint() * a * &q;
        let new_resid = strict_lower_max(&t);
        if new_resid >= resid && resid <= 1e-10 * scale {
            break;
        }
        resid = new_resid;
    }
    let scale = max_entry(&t).max(1.0);
    if resid > 1e-12 * scale {
        return Err(Error::NonConvergence { iterations: 6, residual: resid });
    }
    Ok(q)
}

/// Enumerates every complete flag invariant under both matrices.
///
/// The first argument anchors the computation and must be regular; its
/// Jordan-chain subspaces are extracted per eigenvalue cluster, every
/// chain-respecting interleaving is orthonormalized and Newton-refined, and
/// each result is checked to also triangularize the second matrix. Inputs
/// that do not commute (to `1e2 * tol`, scaled) are rejected, as are
/// clusters whose chain spaces are not numerically resolvable.
pub fn common_flags(anchor: &CMatrix, other: &CMatrix) -> Result<Vec<Flag>> {
    let n = anchor.dim();
    if other.dim() != n {
        return Err(Error::Invalid("matrices must share one dimension".into()));
    }
    let tol = anchor.tol();

    let comm = (anchor.data() * other.data()) - (other.data() * anchor.data());
    let comm_tol =
        1e2 * tol * anchor.max_entry_norm().max(1.0) * other.max_entry_norm().max(1.0);
    let comm_err = max_entry(&comm);
    if comm_err > comm_tol {
        return Err(Error::Invalid(format!(
            "matrices do not commute: ||[A,B]|| = {comm_err:.3e} > {comm_tol:.3e}"
        )));
    }

    let reg = regularity(anchor)?;
    if reg.ambiguous {
        return Err(Error::NotRegular(
            "anchor regularity test was ambiguous; flag data unreliable".into(),
        ));
    }
    if !reg.regular {
        return Err(Error::NotRegular(
            "anchor has a repeated eigenspace; its invariant flags are not isolated".into(),
        ));
    }

    let spectral = char_poly(anchor)?;
    let clusters = &spectral.clusters;

    let mut count = 1usize;
    let mut used = 0usize;
    for c in clusters {
        for _ in 0..c.multiplicity {
            used += 1;
            count = count.saturating_mul(used);
        }
        for k in 1..=c.multiplicity {
            count /= k;
        }
    }
    if count > MAX_FLAGS {
        return Err(Error::Invalid(format!(
            "flag family of size {count} exceeds the enumeration cap {MAX_FLAGS}"
        )));
    }

    // Jordan chain vectors per cluster: chains[c][k-1] spans the new
    // direction of ker((A - value)^k) over ker((A - value)^(k-1)).
    let mut chains: Vec<Vec<DVector<C64>>> = Vec::with_capacity(clusters.len());
    for cluster in clusters {
        let shifted = {
            let mut s = anchor.data().clone();
            for i in 0..n {
                s[(i, i)] -= cluster.value;
            }
            let norm = max_entry(&s);
            if norm > 0.0 {
                s /= C64::from(norm);
            }
            s
        };
        let mut chain: Vec<DVector<C64>> = Vec::with_capacity(cluster.multiplicity);
        let mut power = DMatrix::<C64>::identity(n, n);
        let mut ortho: Vec<DVector<C64>> = Vec::new();
        for k in 1..=cluster.multiplicity {
            power *= &shifted;
            let norm = max_entry(&power);
            // Renormalize only while the product genuinely survives: the
            // final power of a full-size Jordan block vanishes identically,
            // and dividing its rounding noise by its own maximum would
            // manufacture a full-rank noise matrix. Below the cluster's
            // resolution scale the power counts as zero and the thresholded
            // rank test below reports the full nullity on its own.
            let vanish = (1e2 * tol).max(10.0 * cluster.radius);
            if norm > vanish {
                power /= C64::from(norm);
            }
            let svals = singular_values(&power);
            let theta = (1e2 * tol).max(10.0 * cluster.radius) * svals[0].max(1.0);
            let null = nullspace(&power, theta).map_err(|e| match e {
                Error::AmbiguousRank { above, below } => Error::AmbiguousRank { above, below },
                other => other,
            })?;
            if null.ncols() != k {
                return Err(Error::DecorationMismatch(format!(
                    "eigenvalue cluster at {} has a {}-dimensional stage where {k} was \
                     expected; its Jordan chain is not resolvable at this precision",
                    cluster.value,
                    null.ncols()
                )));
            }
            // New chain direction: project the stage basis off the previous
            // stages and take the dominant remaining direction.
            let mut proj = null.clone();
            for q in &ortho {
                for col in 0..proj.ncols() {
                    let inner: C64 = q.dotc(&proj.column(col).into_owned());
                    let update = q * inner;
                    let mut c = proj.column_mut(col);
                    c -= update;
                }
            }
            let svd = SVD::new(proj, true, false);
            let u = svd.u.expect("requested u");
            let dir: DVector<C64> = u.column(0).into_owned();
            ortho.push(dir.clone());
            chain.push(dir);
        }
        chains.push(chain);
    }

    // Interleavings: lexicographic multiset permutations of cluster labels.
    let mut label_pool: Vec<usize> = Vec::with_capacity(n);
    for (c, cluster) in clusters.iter().enumerate() {
        for _ in 0..cluster.multiplicity {
            label_pool.push(c);
        }
    }
    let mut sequences: Vec<Vec<usize>> = Vec::with_capacity(count);
    let mut current: Vec<usize> = Vec::with_capacity(n);
    let mut remaining: Vec<usize> = clusters.iter().map(|c| c.multiplicity).collect();
    fn recurse(
        remaining: &mut Vec<usize>,
        current: &mut Vec<usize>,
        n: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for c in 0..remaining.len() {
            if remaining[c] > 0 {
                remaining[c] -= 1;
                current.push(c);
                recurse(remaining, current, n, out);
                current.pop();
                remaining[c] += 1;
            }
        }
    }
    recurse(&mut remaining, &mut current, n, &mut sequences);
    debug_assert_eq!(sequences.len(), count);

    let other_scale = other.max_entry_norm();
    let mut flags = Vec::with_capacity(sequences.len());
    for seq in &sequences {
        let mut cols = DMatrix::<C64>::zeros(n, n);
        let mut taken = vec![0usize; clusters.len()];
        for (pos, &c) in seq.iter().enumerate() {
            cols.set_column(pos, &chains[c][taken[c]]);
            taken[c] += 1;
        }
        let rough = Flag::from_ordered_columns(&cols);
        let q = refine_triangularizing_basis(anchor.data(), rough.basis)?;
        let t_other = q.adjoint() * other.data() * &q;
        let leak = strict_lower_max(&t_other);
        if leak > leakage_tol(tol, other_scale) {
            return Err(Error::DecorationMismatch(format!(
                "flag triangularizes the anchor but leaves the partner with \
                 strict-lower residual {leak:.3e}"
            )));
        }
        flags.push(Flag { basis: q });
    }
    Ok(flags)
}

/// Reads one decoration off a flag: conjugates both matrices into the flag
/// basis, verifies both are upper triangular within the leakage tolerance,
/// and records the ordered diagonals.
pub fn decorate(long: &CMatrix, merid: &CMatrix, flag: &Flag) -> Result<Decoration> {
    let hol = hol_periph(long, merid, flag)?;
    Ok(Decoration { flag: flag.clone(), long_diag: hol.long_diag, merid_diag: hol.merid_diag })
}

/// Triangularizes a commuting pair in a flag and packages the diagonal data
/// plus successive eigenvalue ratios.
pub fn hol_periph(long: &CMatrix, merid: &CMatrix, flag: &Flag) -> Result<PeripheralHolonomy> {
    let n = long.dim();
    if merid.dim() != n || flag.dim() != n {
        return Err(Error::Invalid("pair and flag must share one dimension".into()));
    }
    let tol = long.tol();
    let mut uppers = Vec::with_capacity(2);
    for m in [long, merid] {
        let t = flag.basis.adjoint() * m.data() * &flag.basis;
        let leak = strict_lower_max(&t);
        let bound = leakage_tol(tol, max_entry(&t));
        if leak > bound {
            return Err(Error::DecorationMismatch(format!(
                "matrix is not upper triangular in this flag: strict-lower \
                 residual {leak:.3e} > {bound:.3e}"
            )));
        }
        uppers.push(CMatrix::new(t, tol)?);
    }
    let merid_upper = uppers.pop().expect("two entries");
    let long_upper = uppers.pop().expect("one entry");

    let diag_of = |m: &CMatrix| (0..n).map(|i| m.entry(i, i)).collect::<Vec<_>>();
    let ratios_of = |d: &[C64]| -> Result<Vec<C64>> {
        let mut r = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            if d[k].norm() < 1e-100 {
                return Err(Error::Singular { abs_det: d[k].norm() });
            }
            r.push(d[k + 1] / d[k]);
        }
        Ok(r)
    };
    let long_diag = diag_of(&long_upper);
    let merid_diag = diag_of(&merid_upper);
    let long_ratios = ratios_of(&long_diag)?;
    let merid_ratios = ratios_of(&merid_diag)?;
    Ok(PeripheralHolonomy {
        long_upper,
        merid_upper,
        long_diag,
        merid_diag,
        long_ratios,
        merid_ratios,
    })
}

/// Picks the flag nearest a reference and decorates with it. Two candidates
/// within [`TIE_TOL`] of each other are reported as a tie rather than
/// silently resolved.
pub fn select_decoration(
    long: &CMatrix,
    merid: &CMatrix,
    flags: &[Flag],
    reference: &Flag,
) -> Result<Decoration> {
    if flags.is_empty() {
        return Err(Error::Invalid("no candidate flags".into()));
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    let mut second_d = f64::INFINITY;
    for (i, f) in flags.iter().enumerate() {
        let d = flag_distance(f, reference)?;
        if d < best_d {
            second_d = best_d;
            best_d = d;
            best = i;
        } else if d < second_d {
            second_d = d;
        }
    }
    if flags.len() > 1 && second_d - best_d < TIE_TOL {
        return Err(Error::FlagTie { tol: TIE_TOL });
    }
    decorate(long, merid, &flags[best])
}

/// Applies a sheet permutation: finds the invariant flag whose decoration
/// diagonals equal the base decoration's diagonals reordered by `perm`
/// (`new_diag[k] = base_diag[perm[k]]`). When several flags realize the same
/// diagonal pair (a degenerate pair), the first in enumeration order is
/// returned; when none does, the permutation is incompatible with the
/// numerical Jordan structure.
pub fn weyl_action(
    long: &CMatrix,
    merid: &CMatrix,
    base: &Decoration,
    perm: &[usize],
) -> Result<Decoration> {
    let n = long.dim();
    if perm.len() != n {
        return Err(Error::Invalid("permutation length must match dimension".into()));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Invalid(format!("not a permutation of 0..{n}: {perm:?}")));
        }
        seen[p] = true;
    }
    let target_long: Vec<C64> = perm.iter().map(|&p| base.long_diag[p]).collect();
    let target_merid: Vec<C64> = perm.iter().map(|&p| base.merid_diag[p]).collect();

    let tol = long.tol();
    let scale_l = target_long.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let scale_m = target_merid.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let flags = common_flags(long, merid)?;
    for flag in &flags {
        let dec = decorate(long, merid, flag)?;
        let dl = dec
            .long_diag
            .iter()
            .zip(&target_long)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let dm = dec
            .merid_diag
            .iter()
            .zip(&target_merid)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if dl <= 1e2 * tol * scale_l && dm <= 1e2 * tol * scale_m {
            return Ok(dec);
        }
    }
    Err(Error::DecorationMismatch(format!(
        "no invariant flag realizes the diagonal ordering {perm:?}"
    )))
}

/// True iff all eigenvalues cluster at 1 (within `1e2 * tol`, scaled) and
/// the matrix is regular. Ambiguous regularity is an error, not a guess.
pub fn is_unipotent_regular(a: &CMatrix) -> Result<bool> {
    let spectral = char_poly(a)?;
    let lam_scale = spectral.eigenvalues.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let near_one = spectral
        .clusters
        .iter()
        .all(|c| (c.value - C64::ONE).norm() <= 1e2 * a.tol() * lam_scale);
    let reg = regularity(a)?;
    if reg.ambiguous {
        return Err(Error::NotRegular(
            "regularity test ambiguous; unipotency undecidable at this precision".into(),
        ));
    }
    Ok(near_one && reg.regular)
}
