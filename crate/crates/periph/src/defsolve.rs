//! Numerical deformation of representations: Gauss–Newton solving to
//! prescribed longitude-eigenvalue targets, path continuation, the meridian
//! response, tau-ratio estimation, and local Jacobian-rank (rigidity)
//! checks.
//!
//! A deformation problem is phrased over real unknowns packing
//! - the complex entries of every generator image, and
//! - the strict-lower entries of a lower-unitriangular basis change `B`
//!   tracking the invariant flag of the longitude image,
//!
//! with residual equations
//! - relator entries (`rho(lhs) - rho(rhs)` per relator),
//! - `det(rho(g)) - 1` per generator,
//! - a conjugation slice: `n^2 - 1` pinned generator entries chosen by
//!   greedy leverage on the conjugation-orbit tangents,
//! - triangularity: strict-lower entries of `B^-1 rho(l) B`, and
//! - eigenvalue targets as ratio equations `d_{k+1} - L_k d_k = 0` on the
//!   diagonal of `B^-1 rho(l) B`.
//!
//! Ratio (not absolute-eigenvalue) targets keep the system projectively
//! meaningful: determinant-1 lifts carry central roots of unity on their
//! diagonals (the 2x2 geometric longitude image is minus a unipotent), and
//! only successive ratios are invariants of the underlying class. The
//! leftover common scalar is a discrete choice, so it does not degrade the
//! Jacobian.
//!
//! Everything is solved in the frame where the base decoration's flag is
//! the standard flag; results convert back to the caller's frame on
//! extraction. Warm starts reuse the packed state of a previous solution,
//! which is what keeps continuation paths on one branch of the eigenvalue
//! chart.

use nalgebra::{DMatrix, DVector};

use crate::cxmat::{CMatrix, C64};
use crate::error::{Error, Result};
use crate::flagdec::{
    common_flags, decorate, hol_periph, select_decoration, Decoration, Flag, PeripheralHolonomy,
};
use crate::fpgroup::{Representation, Word};

/// Residual a base representation must satisfy before deforming.
const BASE_RESIDUAL_BOUND: f64 = 1e-10;

/// Relative singular-value cutoff for the Gauss–Newton least-squares step.
const LSQ_EPS: f64 = 1e-13;

/// Relative singular-value level below which the solver declares the
/// eigenvalue chart ramified. Central finite differences carry relative
/// noise around 1e-9, so genuine rank collapse must fall well below that.
const RAMIFICATION_RATIO: f64 = 1e-10;

/// Sufficient-decrease slope for the backtracking line search.
const ARMIJO: f64 = 1e-4;

/// Maximum step halvings inside one line search.
const MAX_BACKTRACK: usize = 8;

/// Maximum recursive target-halving depth during continuation.
const MAX_CONTINUATION_HALVINGS: usize = 6;

/// Threshold scale for the finite-difference rank test: singular values
/// below `RANK_NOISE_FLOOR * max(1, sigma_max)` count as numerically zero.
const RANK_NOISE_FLOOR: f64 = 1e-6;

/// Gauss–Newton and continuation knobs.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Iteration cap per solve.
    pub max_iter: usize,
    /// Max-entry residual at which a solve counts as converged.
    pub residual_tol: f64,
    /// Initial step fraction in (0, 1]; the line search halves from here.
    pub step_damping: f64,
    /// Central finite-difference step for Jacobians.
    pub fd_step: f64,
    /// Number of waypoints a ray is cut into by callers that build paths.
    pub continuation_steps: usize,
    /// Stream one line per accepted iteration to stderr.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 100,
            residual_tol: 1e-12,
            step_damping: 1.0,
            fd_step: 1e-7,
            continuation_steps: 10,
            trace: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be positive".into()));
        }
        if !(self.residual_tol > 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::Invalid("residual_tol and fd_step must be positive".into()));
        }
        if !(self.step_damping > 0.0 && self.step_damping <= 1.0) {
            return Err(Error::Invalid("step_damping must lie in (0, 1]".into()));
        }
        if self.continuation_steps == 0 {
            return Err(Error::Invalid("continuation_steps must be positive".into()));
        }
        Ok(())
    }
}

/// One pinned generator entry of the conjugation slice.
#[derive(Clone, Copy, Debug)]
pub struct Pin {
    /// Generator index.
    pub gen: usize,
    /// Row of the pinned entry.
    pub row: usize,
    /// Column of the pinned entry.
    pub col: usize,
    /// Frozen complex value.
    pub value: C64,
}

/// A solved deformation: packed state in the problem's standard frame.
#[derive(Clone, Debug)]
pub struct SolvedPoint {
    target: Vec<C64>,
    images_std: Vec<DMatrix<C64>>,
    b: DMatrix<C64>,
    residual: f64,
    iterations: usize,
}

impl SolvedPoint {
    /// Final max-entry residual.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Accepted Gauss–Newton iterations.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// The longitude-eigenvalue-ratio target this point satisfies.
    pub fn target(&self) -> &[C64] {
        &self.target
    }
}

/// A base representation, a peripheral pair, a conjugation slice, and a
/// longitude-eigenvalue-ratio target.
#[derive(Clone, Debug)]
pub struct DeformationProblem {
    base: Representation,
    longitude: Word,
    meridian: Word,
    /// Unitary frame: standard-frame images are `Q^H g Q`.
    frame: DMatrix<C64>,
    base_std: Vec<DMatrix<C64>>,
    pins: Vec<Pin>,
    target_l: Vec<C64>,
    config: SolverConfig,
}

impl DeformationProblem {
    /// Builds a problem at a base representation. The base must satisfy its
    /// relators to [`BASE_RESIDUAL_BOUND`] and its longitude image must be
    /// regular, so the invariant flag (and hence the base decoration) is
    /// well defined.
    pub fn new(
        rep: &Representation,
        longitude: &Word,
        meridian: &Word,
        target_l: Vec<C64>,
        config: SolverConfig,
    ) -> Result<DeformationProblem> {
        config.validate()?;
        let residual = rep.relator_residual();
        if residual >= BASE_RESIDUAL_BOUND {
            return Err(Error::Invalid(format!(
                "base relator residual {residual:.3e} exceeds {BASE_RESIDUAL_BOUND:.0e}"
            )));
        }
        let n = rep.dim();
        validate_target(&target_l, n)?;

        let l_img = rep.evaluate(longitude)?;
        let m_img = rep.evaluate(meridian)?;
        let flags = common_flags(&l_img, &m_img)?;
        let deco = select_decoration(&l_img, &m_img, &flags, &Flag::standard(n))?;
        let frame = deco.flag.basis().clone();

        let base_std: Vec<DMatrix<C64>> = rep
            .images()
            .iter()
            .map(|g| frame.adjoint() * g.data() * &frame)
            .collect();
        let pins = select_gauge_pins(&base_std, n)?;

        Ok(DeformationProblem {
            base: rep.clone(),
            longitude: longitude.clone(),
            meridian: meridian.clone(),
            frame,
            base_std,
            pins,
            target_l,
            config,
        })
    }

    /// Same slice and frame, different target. This is the only supported
    /// way to move a problem: keeping the pins fixed for the lifetime of a
    /// study is what makes solved points comparable.
    pub fn with_target(&self, target_l: Vec<C64>) -> Result<DeformationProblem> {
        validate_target(&target_l, self.dim())?;
        let mut p = self.clone();
        p.target_l = target_l;
        Ok(p)
    }

    /// Ambient matrix dimension.
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// The base representation (caller frame).
    pub fn base(&self) -> &Representation {
        &self.base
    }

    /// The frozen conjugation slice (standard-frame coordinates).
    pub fn pins(&self) -> &[Pin] {
        &self.pins
    }

    /// The current target.
    pub fn target_l(&self) -> &[C64] {
        &self.target_l
    }

    /// Solver knobs.
    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// The base itself as a solved point (identity basis change), the
    /// default warm start.
    pub fn base_point(&self) -> SolvedPoint {
        let n = self.dim();
        SolvedPoint {
            target: vec![C64::ONE; n - 1],
            images_std: self.base_std.clone(),
            b: DMatrix::identity(n, n),
            residual: self.base.relator_residual(),
            iterations: 0,
        }
    }

    /// One direct Gauss–Newton solve to the problem's target from a warm
    /// start (the base when `None`).
    pub fn solve(&self, warm: Option<&SolvedPoint>) -> Result<SolvedPoint> {
        let start = match warm {
            Some(p) => p.clone(),
            None => self.base_point(),
        };
        let x0 = self.pack(&start.images_std, &start.b);
        let (x, residual, iterations) = self.gauss_newton(x0)?;
        let (images_std, b) = self.unpack(&x);
        Ok(SolvedPoint { target: self.target_l.clone(), images_std, b, residual, iterations })
    }

    /// Solve with automatic target halving: when a direct solve from the
    /// warm start diverges, the segment from the warm start's target to the
    /// final target is bisected, up to [`MAX_CONTINUATION_HALVINGS`] levels.
    pub fn solve_continuation(&self, warm: Option<&SolvedPoint>) -> Result<SolvedPoint> {
        let start = match warm {
            Some(p) => p.clone(),
            None => self.base_point(),
        };
        self.solve_segment(&start, &self.target_l, MAX_CONTINUATION_HALVINGS)
    }

    fn solve_segment(
        &self,
        from: &SolvedPoint,
        target: &[C64],
        depth: usize,
    ) -> Result<SolvedPoint> {
        let prob = self.with_target(target.to_vec())?;
        match prob.solve(Some(from)) {
            Ok(p) => Ok(p),
            Err(e) if depth > 0 => {
                let mid: Vec<C64> = from
                    .target
                    .iter()
                    .zip(target)
                    .map(|(a, b)| (a + b) / 2.0)
                    .collect();
                if mid.iter().zip(target).all(|(a, b)| (a - b).norm() < 1e-15) {
                    return Err(e);
                }
                let half = self.solve_segment(from, &mid, depth - 1)?;
                self.solve_segment(&half, target, depth - 1)
            }
            Err(e) => Err(e),
        }
    }

    /// The solved representation, conjugated back to the caller's frame.
    pub fn representation(&self, point: &SolvedPoint) -> Result<Representation> {
        let tol = self.base.tol();
        let images: Vec<CMatrix> = point
            .images_std
            .iter()
            .map(|g| CMatrix::new(&self.frame * g * self.frame.adjoint(), tol))
            .collect::<Result<_>>()?;
        let bound = (10.0 * self.config.residual_tol).max(self.base.residual_bound());
        Representation::new(self.base.presentation().clone(), images, tol, bound)
    }

    /// The continued decoration at a solved point (caller frame): the flag
    /// spanned by the tracked basis columns.
    pub fn decoration(&self, point: &SolvedPoint) -> Result<Decoration> {
        let flag = Flag::from_ordered_columns(&(&self.frame * &point.b));
        let rep = self.representation(point)?;
        let l_img = rep.evaluate(&self.longitude)?;
        let m_img = rep.evaluate(&self.meridian)?;
        decorate(&l_img, &m_img, &flag)
    }

    /// Peripheral holonomy at a solved point: triangular forms, diagonals,
    /// and the successive-ratio vectors (L, M).
    pub fn holonomy(&self, point: &SolvedPoint) -> Result<PeripheralHolonomy> {
        // The standard-frame computation equals the caller-frame one entry
        // for entry: the flag transforms along with the matrices.
        let tol = self.base.tol();
        let eval = WordEval::new(&point.images_std, tol)?;
        let l_img = CMatrix::new(eval.eval(&self.longitude)?, tol)?;
        let m_img = CMatrix::new(eval.eval(&self.meridian)?, tol)?;
        let flag = Flag::from_ordered_columns(&point.b);
        hol_periph(&l_img, &m_img, &flag)
    }

    // -- packing ----------------------------------------------------------

    fn num_unknowns(&self) -> usize {
        let n = self.dim();
        let k = self.base_std.len();
        2 * (k * n * n + n * (n - 1) / 2)
    }

    fn pack(&self, images: &[DMatrix<C64>], b: &DMatrix<C64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = DVector::zeros(self.num_unknowns());
        let mut at = 0usize;
        for g in images {
            for i in 0..n {
                for j in 0..n {
                    x[at] = g[(i, j)].re;
                    x[at + 1] = g[(i, j)].im;
                    at += 2;
                }
            }
        }
        for i in 1..n {
            for j in 0..i {
                x[at] = b[(i, j)].re;
                x[at + 1] = b[(i, j)].im;
                at += 2;
            }
        }
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> (Vec<DMatrix<C64>>, DMatrix<C64>) {
        let n = self.dim();
        let k = self.base_std.len();
        let mut images = Vec::with_capacity(k);
        let mut at = 0usize;
        for _ in 0..k {
            let mut g = DMatrix::<C64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] = C64::new(x[at], x[at + 1]);
                    at += 2;
                }
            }
            images.push(g);
        }
        let mut b = DMatrix::<C64>::identity(n, n);
        for i in 1..n {
            for j in 0..i {
                b[(i, j)] = C64::new(x[at], x[at + 1]);
                at += 2;
            }
        }
        (images, b)
    }

    // -- residual ---------------------------------------------------------

    fn residual_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        let (images, b) = self.unpack(x);
        let eval = WordEval::new(&images, self.base.tol())?;

        let relators = self.base.presentation().relators();
        let mut r: Vec<f64> = Vec::with_capacity(
            2 * (relators.len() * n * n + images.len() + self.pins.len() + n * (n - 1) / 2 + n),
        );
        let mut push = |z: C64| {
            r.push(z.re);
            r.push(z.im);
        };

        for (lhs, rhs) in relators {
            let d = eval.eval(lhs)? - eval.eval(rhs)?;
            for i in 0..n {
                for j in 0..n {
                    push(d[(i, j)]);
                }
            }
        }
        for g in &images {
            push(g.determinant() - C64::ONE);
        }
        for pin in &self.pins {
            push(images[pin.gen][(pin.row, pin.col)] - pin.value);
        }

        let l_img = eval.eval(&self.longitude)?;
        let b_inv = b.clone().try_inverse().ok_or(Error::Singular { abs_det: 0.0 })?;
        let t = b_inv * l_img * &b;
        for i in 1..n {
            for j in 0..i {
                push(t[(i, j)]);
            }
        }
        for k in 0..n - 1 {
            push(t[(k + 1, k + 1)] - self.target_l[k] * t[(k, k)]);
        }

        Ok(DVector::from_vec(r))
    }

    fn gauss_newton(&self, x0: DVector<f64>) -> Result<(DVector<f64>, f64, usize)> {
        let mut x = x0;
        let mut r = self.residual_vec(&x)?;
        for iter in 0..self.config.max_iter {
            let r_inf = r.amax();
            if r_inf <= self.config.residual_tol {
                return Ok((x, r_inf, iter));
            }
            let j = fd_jacobian(&x, r.len(), self.config.fd_step, |xx| self.residual_vec(xx))?;
            let svd = j.svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if !(smax > 0.0) || smin < RAMIFICATION_RATIO * smax {
                return Err(Error::Ramification {
                    detail: format!(
                        "singular values span [{smin:.3e}, {smax:.3e}] at iteration {iter}"
                    ),
                });
            }
            let delta = svd
                .solve(&(-&r), LSQ_EPS * smax)
                .map_err(|e| Error::Invalid(format!("least-squares step failed: {e}")))?;

            let r2 = r.norm();
            let mut t = self.config.step_damping;
            let mut accepted = false;
            for _ in 0..=MAX_BACKTRACK {
                let xt = &x + t * &delta;
                let rt = self.residual_vec(&xt)?;
                if rt.norm() <= (1.0 - ARMIJO * t) * r2 {
                    x = xt;
                    r = rt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence { iterations: iter, residual: r_inf });
            }
            if self.config.trace {
                eprintln!(
                    "gn iter={} residual={:.3e} step={:.3e}",
                    iter + 1,
                    r.amax(),
                    (t * &delta).norm()
                );
            }
        }
        let r_inf = r.amax();
        if r_inf <= self.config.residual_tol {
            Ok((x, r_inf, self.config.max_iter))
        } else {
            Err(Error::NonConvergence { iterations: self.config.max_iter, residual: r_inf })
        }
    }
}

fn validate_target(target: &[C64], n: usize) -> Result<()> {
    if target.len() != n - 1 {
        return Err(Error::Invalid(format!(
            "target needs {} entries for dimension {n}, got {}",
            n - 1,
            target.len()
        )));
    }
    for (k, l) in target.iter().enumerate() {
        if !l.re.is_finite() || !l.im.is_finite() {
            return Err(Error::Invalid(format!("target entry {} is not finite", k + 1)));
        }
        if (l - C64::ONE).norm() >= 0.5 {
            return Err(Error::BranchAmbiguity(format!(
                "target L_{} = {l} leaves the branch-safe region |L - 1| < 0.5",
                k + 1
            )));
        }
    }
    Ok(())
}

/// Word evaluation over plain matrices with per-call inverse caching.
struct WordEval<'a> {
    images: &'a [DMatrix<C64>],
    inverses: Vec<DMatrix<C64>>,
    n: usize,
}

impl<'a> WordEval<'a> {
    fn new(images: &'a [DMatrix<C64>], _tol: f64) -> Result<WordEval<'a>> {
        let mut inverses = Vec::with_capacity(images.len());
        for g in images {
            let inv = g.clone().try_inverse().ok_or_else(|| Error::Singular {
                abs_det: g.determinant().norm(),
            })?;
            inverses.push(inv);
        }
        let n = images.first().map_or(0, |g| g.nrows());
        Ok(WordEval { images, inverses, n })
    }

    fn eval(&self, w: &Word) -> Result<DMatrix<C64>> {
        let mut out = DMatrix::<C64>::identity(self.n, self.n);
        for &s in w.letters() {
            let idx = (s.unsigned_abs() as usize) - 1;
            if idx >= self.images.len() {
                return Err(Error::Invalid(format!("letter {s} outside generator range")));
            }
            let factor = if s > 0 { &self.images[idx] } else { &self.inverses[idx] };
            out *= factor;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Gauge slice selection
// ---------------------------------------------------------------------------

/// Basis of trace-zero matrices: off-diagonal units then successive
/// diagonal differences.
fn sl_basis(n: usize) -> Vec<DMatrix<C64>> {
    let mut basis = Vec::with_capacity(n * n - 1);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut e = DMatrix::<C64>::zeros(n, n);
                e[(i, j)] = C64::ONE;
                basis.push(e);
            }
        }
    }
    for k in 0..n - 1 {
        let mut h = DMatrix::<C64>::zeros(n, n);
        h[(k, k)] = C64::ONE;
        h[(k + 1, k + 1)] = -C64::ONE;
        basis.push(h);
    }
    basis
}

/// Chooses `n^2 - 1` generator entries whose values pin the conjugation
/// freedom: greedy column-pivoted selection on the orbit-tangent matrix
/// (rows: slice directions, columns: candidate entries), so the selected
/// square submatrix stays well conditioned.
fn select_gauge_pins(images: &[DMatrix<C64>], n: usize) -> Result<Vec<Pin>> {
    let dirs = sl_basis(n);
    let num_dirs = dirs.len();
    let num_entries = images.len() * n * n;

    // tangent[d][e]: derivative of entry e under conjugation direction d.
    let mut tangent = DMatrix::<C64>::zeros(num_dirs, num_entries);
    for (d, x) in dirs.iter().enumerate() {
        for (g_idx, g) in images.iter().enumerate() {
            let dg = x * g - g * x;
            for i in 0..n {
                for j in 0..n {
                    tangent[(d, g_idx * n * n + i * n + j)] = dg[(i, j)];
                }
            }
        }
    }

    // Modified Gram–Schmidt over columns with pivoting.
    let mut cols: Vec<DVector<C64>> =
        (0..num_entries).map(|e| tangent.column(e).into_owned()).collect();
    let mut selected = Vec::with_capacity(num_dirs);
    let mut available: Vec<usize> = (0..num_entries).collect();
    let initial_max = cols.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if initial_max == 0.0 {
        return Err(Error::Invalid("conjugation orbit is degenerate at this point".into()));
    }
    for _ in 0..num_dirs {
        let (pos, &best) = available
            .iter()
            .enumerate()
            .max_by(|a, b| {
                cols[*a.1]
                    .norm()
                    .partial_cmp(&cols[*b.1].norm())
                    .expect("finite norms")
            })
            .ok_or_else(|| Error::Invalid("ran out of candidate entries".into()))?;
        let pivot_norm = cols[best].norm();
        if pivot_norm < 1e-6 * initial_max {
            return Err(Error::Invalid(format!(
                "gauge slice rank collapse: pivot {pivot_norm:.3e} vs scale {initial_max:.3e}"
            )));
        }
        let q = cols[best].map(|z| z / C64::new(pivot_norm, 0.0));
        available.swap_remove(pos);
        for &e in &available {
            let proj = q.dotc(&cols[e]);
            let update = &q * proj;
            cols[e] -= update;
        }
        selected.push(best);
    }

    let mut pins: Vec<Pin> = selected
        .into_iter()
        .map(|e| {
            let g_idx = e / (n * n);
            let rem = e % (n * n);
            Pin {
                gen: g_idx,
                row: rem / n,
                col: rem % n,
                value: images[g_idx][(rem / n, rem % n)],
            }
        })
        .collect();
    pins.sort_by_key(|p| (p.gen, p.row, p.col));
    Ok(pins)
}

// ---------------------------------------------------------------------------
// Top-level solver entry points
// ---------------------------------------------------------------------------

/// Solves the problem to its target and returns the deformed
/// representation, its continued decoration, and the peripheral holonomy.
pub fn solve_to_target(
    prob: &DeformationProblem,
) -> Result<(Representation, Decoration, PeripheralHolonomy)> {
    let point = prob.solve(None)?;
    Ok((prob.representation(&point)?, prob.decoration(&point)?, prob.holonomy(&point)?))
}

/// Chains solves along a target sequence, each warm-started from the last,
/// halving failing segments up to [`MAX_CONTINUATION_HALVINGS`] times.
/// Failures report the index of the offending waypoint.
pub fn continuation_path(
    prob: &DeformationProblem,
    targets: &[Vec<C64>],
) -> Result<Vec<SolvedPoint>> {
    let mut out = Vec::with_capacity(targets.len());
    let mut warm: Option<SolvedPoint> = None;
    for (index, t) in targets.iter().enumerate() {
        let p = prob
            .with_target(t.clone())
            .map_err(|e| Error::Continuation { index, source: Box::new(e) })?;
        match p.solve_continuation(warm.as_ref()) {
            Ok(point) => {
                warm = Some(point.clone());
                out.push(point);
            }
            Err(e) => return Err(Error::Continuation { index, source: Box::new(e) }),
        }
    }
    Ok(out)
}

/// The meridian eigenvalue-ratio vector of the representation solved to the
/// longitude target `v`.
pub fn meridian_response(prob: &DeformationProblem, v: &[C64]) -> Result<Vec<C64>> {
    let p = prob.with_target(v.to_vec())?;
    let point = p.solve_continuation(None)?;
    Ok(p.holonomy(&point)?.merid_ratios)
}

/// Tau-ratio table along a shrinking ray, with polynomial extrapolation to
/// step zero.
#[derive(Clone, Debug)]
pub struct TauEstimate {
    /// The steps actually used, in the given (decreasing) order.
    pub steps: Vec<f64>,
    /// `tau_k` values per step.
    pub per_step: Vec<Vec<C64>>,
    /// Extrapolated `tau_k` at step zero.
    pub extrapolated: Vec<C64>,
    /// Per-`k` uncertainty: change from the previous extrapolation order.
    pub uncertainty: Vec<f64>,
    /// Mean of the extrapolated entries — the modulus estimate.
    pub mu: C64,
    /// Largest pairwise distance between extrapolated entries.
    pub spread: f64,
}

/// Estimates `tau_k = log(M_k) / log(L_k)` along the ray
/// `v_s = exp(s * direction)` (entrywise) for the given decreasing steps,
/// then extrapolates each `tau_k` to `s -> 0`. The solves are warm-chained
/// from the largest step inward, which keeps every point on one branch.
pub fn tau_estimate(
    prob: &DeformationProblem,
    direction: &[C64],
    steps: &[f64],
) -> Result<TauEstimate> {
    let n = prob.dim();
    if direction.len() != n - 1 {
        return Err(Error::Invalid(format!(
            "direction needs {} entries for dimension {n}",
            n - 1
        )));
    }
    if direction.iter().any(|d| d.norm() < 1e-14 || !d.re.is_finite() || !d.im.is_finite()) {
        return Err(Error::Invalid(
            "direction entries must be finite and nonzero so every ratio is defined".into(),
        ));
    }
    if steps.len() < 2 {
        return Err(Error::Invalid("need at least two steps to extrapolate".into()));
    }
    if steps.windows(2).any(|w| w[0] <= w[1]) || steps.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Invalid("steps must be positive and strictly decreasing".into()));
    }

    let mut per_step: Vec<Vec<C64>> = Vec::with_capacity(steps.len());
    let mut warm: Option<SolvedPoint> = None;
    for &s in steps {
        let v: Vec<C64> = direction.iter().map(|d| (d * s).exp()).collect();
        let p = prob.with_target(v)?;
        let point = p.solve_continuation(warm.as_ref())?;
        let hol = p.holonomy(&point)?;
        let class = crate::latcrit::PeripheralClass::from_holonomy(&hol)?;
        per_step.push(class.tau_ratios()?);
        warm = Some(point);
    }

    let mut extrapolated = Vec::with_capacity(n - 1);
    let mut uncertainty = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let ys: Vec<C64> = per_step.iter().map(|row| row[k]).collect();
        let (value, err) = neville_to_zero(steps, &ys);
        extrapolated.push(value);
        uncertainty.push(err);
    }
    let mu = extrapolated.iter().sum::<C64>() / extrapolated.len() as f64;
    let mut spread = 0.0f64;
    for a in 0..extrapolated.len() {
        for b in a + 1..extrapolated.len() {
            spread = spread.max((extrapolated[a] - extrapolated[b]).norm());
        }
    }
    Ok(TauEstimate { steps: steps.to_vec(), per_step, extrapolated, uncertainty, mu, spread })
}

/// Polynomial (Neville) extrapolation of `(xs, ys)` to `x = 0`; returns the
/// full-order value and the change from the previous order as uncertainty.
fn neville_to_zero(xs: &[f64], ys: &[C64]) -> (C64, f64) {
    let m = xs.len();
    let mut t = ys.to_vec();
    let mut prev = t[0];
    for j in 1..m {
        for i in 0..m - j {
            let xi = xs[i];
            let xj = xs[i + j];
            t[i] = (t[i] * (-xj) - t[i + 1] * (-xi)) / (xi - xj);
        }
        if j == m - 1 {
            return (t[0], (t[0] - prev).norm());
        }
        prev = t[0];
    }
    (t[0], 0.0)
}

/// Jacobian nullity report for the relator + determinant + slice system
/// (no eigenvalue targets): the complex dimension of the pinned solution
/// variety through the representation.
#[derive(Clone, Debug)]
pub struct RankReport {
    /// Complex nullity (real kernel dimension halved).
    pub nullity: usize,
    /// Ratio between the smallest kept and largest dropped singular value.
    pub gap: f64,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Real unknown count.
    pub unknowns: usize,
    /// Real equation count.
    pub equations: usize,
}

/// Measures the local solution-variety dimension at a representation:
/// finite-difference Jacobian of relators, determinant normalizations, and
/// an automatically selected conjugation slice, with the nullity read off
/// the singular values. Real singular values of this holomorphic system
/// come in pairs, so an odd raw count is reported as ambiguous.
pub fn rank_check(rep: &Representation, config: &SolverConfig) -> Result<RankReport> {
    config.validate()?;
    let residual = rep.relator_residual();
    if residual >= BASE_RESIDUAL_BOUND {
        return Err(Error::Invalid(format!(
            "rank check needs residual < {BASE_RESIDUAL_BOUND:.0e}, got {residual:.3e}"
        )));
    }
    let n = rep.dim();
    let images: Vec<DMatrix<C64>> = rep.images().iter().map(|g| g.data().clone()).collect();
    let pins = select_gauge_pins(&images, n)?;
    let sys = VarietySystem { presentation_rep: rep, pins: &pins, n };

    let x0 = sys.pack(&images);
    let r0 = sys.residual_vec(&x0)?;
    let j = fd_jacobian(&x0, r0.len(), config.fd_step, |x| sys.residual_vec(x))?;
    let svd = j.svd(false, false);
    let mut svals: Vec<f64> = svd.singular_values.iter().copied().collect();
    svals.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));

    let smax = svals.first().copied().unwrap_or(0.0);
    let theta = RANK_NOISE_FLOOR * smax.max(1.0);
    let below: Vec<f64> = svals.iter().copied().filter(|&s| s <= theta).collect();
    let above: Vec<f64> = svals.iter().copied().filter(|&s| s > theta).collect();
    let largest_below = below.first().copied().unwrap_or(f64::MIN_POSITIVE);
    let smallest_above = above.last().copied().unwrap_or(smax);
    let gap = smallest_above / largest_below;
    if gap < 1e3 {
        return Err(Error::AmbiguousRank { above: smallest_above, below: largest_below });
    }
    if below.len() % 2 != 0 {
        return Err(Error::AmbiguousRank {
            above: smallest_above,
            below: largest_below,
        });
    }
    Ok(RankReport {
        nullity: below.len() / 2,
        gap,
        singular_values: svals,
        unknowns: x0.len(),
        equations: r0.len(),
    })
}

/// Projects a perturbed set of generator images back onto the relator
/// variety: Gauss–Newton on relators + determinants + a slice whose
/// *coordinates* are chosen at `base` but whose *values* are read from the
/// perturbed images, so the solution keeps the perturbation's transverse
/// position instead of snapping back to the base point.
pub fn refine_to_variety(
    base: &Representation,
    perturbed: &[DMatrix<C64>],
    config: &SolverConfig,
) -> Result<Representation> {
    config.validate()?;
    let n = base.dim();
    if perturbed.len() != base.images().len()
        || perturbed.iter().any(|g| g.nrows() != n || g.ncols() != n)
    {
        return Err(Error::Invalid("perturbed images must match the base shape".into()));
    }
    let base_images: Vec<DMatrix<C64>> = base.images().iter().map(|g| g.data().clone()).collect();
    let mut pins = select_gauge_pins(&base_images, n)?;
    for pin in &mut pins {
        pin.value = perturbed[pin.gen][(pin.row, pin.col)];
    }
    let sys = VarietySystem { presentation_rep: base, pins: &pins, n };

    let x0 = sys.pack(perturbed);
    let mut x = x0;
    let mut r = sys.residual_vec(&x)?;
    let mut converged = false;
    for iter in 0..config.max_iter {
        let r_inf = r.amax();
        if r_inf <= config.residual_tol {
            converged = true;
            break;
        }
        let j = fd_jacobian(&x, r.len(), config.fd_step, |xx| sys.residual_vec(xx))?;
        let svd = j.svd(true, true);
        let smax = svd.singular_values.max();
        let delta = svd
            .solve(&(-&r), LSQ_EPS * smax)
            .map_err(|e| Error::Invalid(format!("least-squares step failed: {e}")))?;
        let r2 = r.norm();
        let mut t = config.step_damping;
        let mut accepted = false;
        for _ in 0..=MAX_BACKTRACK {
            let xt = &x + t * &delta;
            let rt = sys.residual_vec(&xt)?;
            if rt.norm() <= (1.0 - ARMIJO * t) * r2 {
                x = xt;
                r = rt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence { iterations: iter, residual: r_inf });
        }
    }
    let final_r = r.amax();
    if !converged && final_r > config.residual_tol {
        return Err(Error::NonConvergence { iterations: config.max_iter, residual: final_r });
    }

    let images = sys.unpack(&x);
    let tol = base.tol();
    let cimages: Vec<CMatrix> =
        images.iter().map(|g| CMatrix::new(g.clone(), tol)).collect::<Result<_>>()?;
    let bound = (10.0 * config.residual_tol).max(base.residual_bound());
    Representation::new(base.presentation().clone(), cimages, tol, bound)
}

/// Leading-order minor predictions at a longitude target `v`: for each pair
/// `k < h`, the first nonvanishing term of the discreteness minor in terms
/// of the modulus `mu`.
pub fn delta_leading_order(v: &[C64], mu: C64) -> Result<Vec<((usize, usize), f64)>> {
    let logs: Vec<C64> = v
        .iter()
        .enumerate()
        .map(|(k, l)| {
            if l.norm() < 1e-100 || !l.re.is_finite() || !l.im.is_finite() {
                return Err(Error::Invalid(format!("entry {} has no logarithm", k + 1)));
            }
            Ok(l.ln())
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for k in 0..logs.len() {
        for h in k + 1..logs.len() {
            out.push(((k + 1, h + 1), crate::latcrit::delta_leading_order(mu, logs[k], logs[h])));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Shared relator-variety system (no decoration unknowns)
// ---------------------------------------------------------------------------

struct VarietySystem<'a> {
    presentation_rep: &'a Representation,
    pins: &'a [Pin],
    n: usize,
}

impl VarietySystem<'_> {
    fn pack(&self, images: &[DMatrix<C64>]) -> DVector<f64> {
        let n = self.n;
        let mut x = DVector::zeros(2 * images.len() * n * n);
        let mut at = 0usize;
        for g in images {
            for i in 0..n {
                for j in 0..n {
                    x[at] = g[(i, j)].re;
                    x[at + 1] = g[(i, j)].im;
                    at += 2;
                }
            }
        }
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> Vec<DMatrix<C64>> {
        let n = self.n;
        let k = x.len() / (2 * n * n);
        let mut images = Vec::with_capacity(k);
        let mut at = 0usize;
        for _ in 0..k {
            let mut g = DMatrix::<C64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] = C64::new(x[at], x[at + 1]);
                    at += 2;
                }
            }
            images.push(g);
        }
        images
    }

    fn residual_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        let images = self.unpack(x);
        let eval = WordEval::new(&images, self.presentation_rep.tol())?;
        let relators = self.presentation_rep.presentation().relators();
        let mut r: Vec<f64> =
            Vec::with_capacity(2 * (relators.len() * n * n + images.len() + self.pins.len()));
        let mut push = |z: C64| {
            r.push(z.re);
            r.push(z.im);
        };
        for (lhs, rhs) in relators {
            let d = eval.eval(lhs)? - eval.eval(rhs)?;
            for i in 0..n {
                for j in 0..n {
                    push(d[(i, j)]);
                }
            }
        }
        for g in &images {
            push(g.determinant() - C64::ONE);
        }
        for pin in self.pins {
            push(images[pin.gen][(pin.row, pin.col)] - pin.value);
        }
        Ok(DVector::from_vec(r))
    }
}

fn fd_jacobian<F>(x: &DVector<f64>, rows: usize, fd_step: f64, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let nu = x.len();
    let mut j = DMatrix::<f64>::zeros(rows, nu);
    let mut xp = x.clone();
    for col in 0..nu {
        let h = fd_step * x[col].abs().max(1.0);
        let keep = x[col];
        xp[col] = keep + h;
        let rp = f(&xp)?;
        xp[col] = keep - h;
        let rm = f(&xp)?;
        xp[col] = keep;
        let scale = 1.0 / (2.0 * h);
        for row in 0..rows {
            j[(row, col)] = (rp[row] - rm[row]) * scale;
        }
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus8::{canonical_peripheral_words, load_named};
    use crate::cxmat::projective_distance;
    use crate::latcrit::PeripheralClass;
    use crate::symlift::pgl2_locus_check;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn problem_at(name: &str, target: Vec<C64>) -> DeformationProblem {
        let named = load_named(name).expect("corpus");
        let (l, m) = canonical_peripheral_words();
        DeformationProblem::new(&named.rep, &l, &m, target, SolverConfig::default())
            .expect("problem")
    }

    fn ones(n: usize) -> Vec<C64> {
        vec![C64::ONE; n]
    }

    fn max_generator_distance(a: &Representation, b: &Representation) -> f64 {
        a.images()
            .iter()
            .zip(b.images())
            .map(|(x, y)| projective_distance(x, y).expect("distance"))
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_target_returns_the_base() {
        let prob = problem_at("geom3", ones(2));
        let (rep, _deco, hol) = solve_to_target(&prob).unwrap();
        assert!(max_generator_distance(&rep, prob.base()) < 1e-8);
        for r in hol.long_ratios.iter().chain(&hol.merid_ratios) {
            assert!((r - C64::ONE).norm() < 1e-8);
        }
    }

    #[test]
    fn solved_points_hit_their_targets() {
        let prob = problem_at("geom3", ones(2));
        let targets = [
            vec![c(1.03, 0.0), c(0.98, -0.02)],
            vec![c(0.04, 0.0).exp() * c(0.0, 0.04).exp(), c(1.05, 0.0)],
            vec![c(0.97, 0.01), c(1.0, 0.06)],
        ];
        for t in targets {
            let p = prob.with_target(t.clone()).unwrap();
            let point = p.solve_continuation(None).unwrap();
            assert!(point.residual() <= p.config().residual_tol);
            let hol = p.holonomy(&point).unwrap();
            for (got, want) in hol.long_ratios.iter().zip(&t) {
                assert!(
                    (got - want).norm() < 1e-10,
                    "ratio {got} missed target {want}"
                );
            }
        }
    }

    #[test]
    fn diagonal_target_equalizes_meridian_ratios() {
        let prob = problem_at("geom3", ones(2));
        let m = meridian_response(&prob, &[c(1.05, 0.0), c(1.05, 0.0)]).unwrap();
        assert!(
            (m[0] - m[1]).norm() < 1e-8,
            "diagonal target must equalize meridian ratios: {} vs {}",
            m[0],
            m[1]
        );
    }

    #[test]
    fn unit_target_entries_force_unit_meridian_entries() {
        let prob = problem_at("geom3", ones(2));
        let m = meridian_response(&prob, &ones(2)).unwrap();
        for v in &m {
            assert!((v - C64::ONE).norm() < 1e-10);
        }
        let m = meridian_response(&prob, &[C64::ONE, c(1.04, 0.0)]).unwrap();
        assert!(
            (m[0] - C64::ONE).norm() < 1e-8,
            "L_1 = 1 must force M_1 = 1, got {}",
            m[0]
        );
        assert!((m[1] - C64::ONE).norm() > 1e-4, "the free entry must move");
    }

    #[test]
    fn conjugate_direction_turns_on_the_first_minor() {
        let t = 0.01f64;
        let l1 = c(1.0 + t, 0.0) * c(0.0, t).exp();
        let prob = problem_at("geom3", vec![l1, l1.conj()]);
        let point = prob.solve_continuation(None).unwrap();
        let hol = prob.holonomy(&point).unwrap();
        let class = PeripheralClass::from_holonomy(&hol).unwrap();
        let delta = class.minor(0, 1);
        assert!(
            delta.abs() > class.tol_delta(),
            "minor {delta:.3e} should clear threshold {:.3e}",
            class.tol_delta()
        );

        // Leading order: delta ~ 2 * Im(mu) * t * log(1+t).
        let mu = tau_estimate(&prob, &[c(0.7, 0.4), c(-0.5, 0.8)], &[0.08, 0.04, 0.02, 0.01])
            .unwrap()
            .mu;
        let predicted = 2.0 * mu.im * t * (1.0 + t).ln();
        assert!(
            (delta / predicted - 1.0).abs() < 0.10,
            "delta {delta:.6e} vs leading order {predicted:.6e}"
        );
    }

    #[test]
    fn constant_path_stays_at_the_base() {
        let prob = problem_at("geom3", ones(2));
        let points = continuation_path(&prob, &[ones(2), ones(2), ones(2)]).unwrap();
        assert_eq!(points.len(), 3);
        for p in &points {
            let rep = prob.representation(p).unwrap();
            assert!(max_generator_distance(&rep, prob.base()) < 1e-8);
        }
    }

    #[test]
    fn ray_to_the_diagonal_lands_on_the_rank_one_locus() {
        let prob = problem_at("geom3", ones(2));
        let steps = 10usize;
        let targets: Vec<Vec<C64>> = (1..=steps)
            .map(|i| {
                let l = C64::ONE + c(0.05, 0.0) * (i as f64 / steps as f64);
                vec![l, l]
            })
            .collect();
        let points = continuation_path(&prob, &targets).unwrap();
        let hol = prob
            .with_target(targets.last().unwrap().clone())
            .unwrap()
            .holonomy(points.last().unwrap())
            .unwrap();
        let (_, long_ok) = pgl2_locus_check(&hol.long_ratios, 1e-8).unwrap();
        let (_, merid_ok) = pgl2_locus_check(&hol.merid_ratios, 1e-8).unwrap();
        assert!(long_ok && merid_ok, "diagonal endpoint must sit on the rank-one locus");
    }

    #[test]
    fn out_and_back_returns_to_the_base() {
        let prob = problem_at("geom3", ones(2));
        let out = vec![c(1.02, 0.0), c(1.0, 0.0) * c(0.0, 0.015).exp()];
        let points = continuation_path(&prob, &[out, ones(2)]).unwrap();
        let back = prob.representation(&points[1]).unwrap();
        assert!(
            max_generator_distance(&back, prob.base()) < 1e-7,
            "chart round trip must be monodromy-free"
        );
    }

    #[test]
    fn tau_limits_agree_and_match_the_two_dim_oracle() {
        let steps = [0.08, 0.04, 0.02, 0.01];
        let prob3 = problem_at("geom3", ones(2));
        let est3 = tau_estimate(&prob3, &[c(0.7, 0.4), c(-0.5, 0.8)], &steps).unwrap();
        assert!(est3.spread < 1e-3, "tau entries must share a limit, spread {}", est3.spread);
        assert!(est3.mu.im.abs() > 0.05, "modulus must be off the real axis: {}", est3.mu);
        for u in &est3.uncertainty {
            assert!(*u < 1e-3);
        }

        let prob2 = problem_at("geom2", ones(1));
        let est2 = tau_estimate(&prob2, &[c(0.9, -0.3)], &steps).unwrap();
        assert!(
            (est3.mu - est2.mu).norm() < 1e-3,
            "moduli disagree: {} vs {}",
            est3.mu,
            est2.mu
        );
    }

    #[test]
    fn rank_nullity_matches_local_dimensions() {
        let cfg = SolverConfig::default();
        let geom3 = load_named("geom3").unwrap().rep;
        let r3 = rank_check(&geom3, &cfg).unwrap();
        assert_eq!(r3.nullity, 2);
        assert!(r3.gap >= 1e3);
        assert_eq!((r3.unknowns, r3.equations), (36, 38));

        let geom2 = load_named("geom2").unwrap().rep;
        let r2 = rank_check(&geom2, &cfg).unwrap();
        assert_eq!(r2.nullity, 1);
        assert!(r2.gap >= 1e3);

        // The embedded families also sit on two-parameter pinned varieties.
        let rho1 = load_named("rho1").unwrap().rep;
        let r1 = rank_check(&rho1, &cfg).unwrap();
        assert_eq!(r1.nullity, 2);
        assert!(r1.gap >= 1e3);
    }

    #[test]
    fn refine_to_variety_keeps_the_perturbed_slice() {
        let rho2 = load_named("rho2").unwrap().rep;
        let n = rho2.dim();
        let mut perturbed: Vec<DMatrix<C64>> =
            rho2.images().iter().map(|g| g.data().clone()).collect();
        // Deterministic, entry-dependent perturbation of size ~1e-4.
        for (g_idx, g) in perturbed.iter_mut().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let s = (g_idx * n * n + i * n + j) as f64;
                    g[(i, j)] += c(1e-4 * (0.3 + 0.05 * s), -1e-4 * (0.2 + 0.07 * s));
                }
            }
        }
        let cfg = SolverConfig::default();
        let refined = refine_to_variety(&rho2, &perturbed, &cfg).unwrap();
        assert!(refined.relator_residual() < 1e-12);
        // The slice coordinates keep their perturbed values...
        let base_images: Vec<DMatrix<C64>> =
            rho2.images().iter().map(|g| g.data().clone()).collect();
        let pins = select_gauge_pins(&base_images, n).unwrap();
        for pin in &pins {
            let got = refined.images()[pin.gen].entry(pin.row, pin.col);
            let want = perturbed[pin.gen][(pin.row, pin.col)];
            assert!((got - want).norm() < 1e-12);
        }
        // ...so the refined point genuinely moved off the base.
        assert!(max_generator_distance(&refined, &rho2) > 1e-6);
    }

    #[test]
    fn leading_order_wrapper_matches_the_closed_form() {
        let mu = c(0.02, 0.3);
        for d in delta_leading_order(&ones(2), mu).unwrap() {
            assert_eq!(d.1, 0.0);
        }
        let t = 0.01;
        let l1 = c(1.0 + t, 0.0) * c(0.0, t).exp();
        let out = delta_leading_order(&[l1, l1.conj()], mu).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, (1, 2));
        let expected = 2.0 * mu.im * t * (1.0 + t).ln();
        assert!((out[0].1 - expected).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let prob = problem_at("geom3", ones(2));
        assert!(prob.with_target(vec![C64::ONE]).is_err());
        assert!(prob.with_target(vec![c(1.6, 0.0), C64::ONE]).is_err());
        assert!(tau_estimate(&prob, &[C64::ZERO, C64::ONE], &[0.04, 0.02]).is_err());
        assert!(tau_estimate(&prob, &[C64::ONE, C64::ONE], &[0.02, 0.04]).is_err());
        assert!(tau_estimate(&prob, &[C64::ONE, C64::ONE], &[0.04]).is_err());
    }
}
