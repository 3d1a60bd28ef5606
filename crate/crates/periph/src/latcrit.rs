//! Discreteness evidence from peripheral eigenvalue logarithms.
//!
//! The inputs are the successive eigenvalue ratios of a triangularized
//! peripheral pair. Their principal logarithms form two vectors `u` (from
//! the first curve) and `w` (from the second); the real parts are the
//! log-moduli. If any 2x2 minor of the two real rows is nonzero, the pair
//! of moduli vectors is linearly independent, which is a one-sided
//! certificate: the verdict is either "sufficient" or "inconclusive",
//! never "not discrete".
//!
//! The independent cross-check looks for integer combinations
//! `p * u + q * w` whose real part nearly vanishes — a resonance. A perfect
//! resonance forces every minor to zero, so a sufficient verdict and a
//! vanishing oracle are mutually exclusive.

use num_complex::Complex;

use crate::cxmat::C64;
use crate::error::{Error, Result};
use crate::flagdec::PeripheralHolonomy;

/// Verdicts are one-sided: evidence can certify, never refute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Some log-modulus minor clears the scale-aware threshold.
    SufficientDiscreteFaithful,
    /// No minor clears the threshold; nothing is certified.
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::SufficientDiscreteFaithful => write!(f, "sufficient_discrete_faithful"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Outcome of [`PeripheralClass::classify`].
#[derive(Clone, Debug)]
pub struct Classification {
    /// The one-sided verdict.
    pub verdict: Verdict,
    /// Index pair of the largest-magnitude minor.
    pub witness: (usize, usize),
    /// Value of that minor.
    pub max_minor: f64,
    /// Threshold the winning minor was compared against.
    pub tol_delta: f64,
}

/// An integer resonance candidate: how close `p*u + q*w` comes to zero in
/// real part.
#[derive(Clone, Copy, Debug)]
pub struct Resonance {
    /// Coefficient on `u`.
    pub p: i64,
    /// Coefficient on `w`.
    pub q: i64,
    /// `max_k |p * Re(u_k) + q * Re(w_k)|`.
    pub residual: f64,
}

/// Principal logarithms of the two peripheral eigenvalue-ratio vectors.
#[derive(Clone, Debug)]
pub struct PeripheralClass {
    u: Vec<C64>,
    w: Vec<C64>,
}

impl PeripheralClass {
    /// Takes principal logs of two equally long nonzero ratio vectors.
    pub fn from_ratios(long_ratios: &[C64], merid_ratios: &[C64]) -> Result<Self> {
        if long_ratios.is_empty() || long_ratios.len() != merid_ratios.len() {
            return Err(Error::Invalid(
                "ratio vectors must be nonempty and equally long".into(),
            ));
        }
        let log_all = |v: &[C64]| -> Result<Vec<C64>> {
            v.iter()
                .map(|z| {
                    if !z.re.is_finite() || !z.im.is_finite() || z.norm() < 1e-100 {
                        Err(Error::Invalid(format!("cannot take log of ratio {z}")))
                    } else {
                        Ok(z.ln())
                    }
                })
                .collect()
        };
        Ok(PeripheralClass { u: log_all(long_ratios)?, w: log_all(merid_ratios)? })
    }

    /// Reads the ratio vectors off a triangularized pair.
    pub fn from_holonomy(hol: &PeripheralHolonomy) -> Result<Self> {
        Self::from_ratios(&hol.long_ratios, &hol.merid_ratios)
    }

    /// Log vector of the first curve's ratios.
    pub fn u(&self) -> &[C64] {
        &self.u
    }

    /// Log vector of the second curve's ratios.
    pub fn w(&self) -> &[C64] {
        &self.w
    }

    /// Number of ratio slots (dimension minus one).
    pub fn len(&self) -> usize {
        self.u.len()
    }

    /// True when there are no slots (never constructible).
    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Log-modulus minor
    /// `delta_{k,h} = Re(u_k) Re(w_h) - Re(u_h) Re(w_k)`.
    pub fn minor(&self, k: usize, h: usize) -> f64 {
        self.u[k].re * self.w[h].re - self.u[h].re * self.w[k].re
    }

    /// Scale-aware minor threshold:
    /// `1e-10 * max(|u|_inf, |w|_inf, 1e-8)^2`. The floor keeps the
    /// threshold meaningful when both log vectors nearly vanish (the
    /// undeformed point).
    pub fn tol_delta(&self) -> f64 {
        let sup = self
            .u
            .iter()
            .chain(self.w.iter())
            .map(|z| z.norm())
            .fold(1e-8_f64, f64::max);
        1e-10 * sup * sup
    }

    /// Scans all index pairs and returns the one-sided verdict with the
    /// largest minor as witness.
    pub fn classify(&self) -> Classification {
        let tol_delta = self.tol_delta();
        let mut witness = (0, 0);
        let mut max_minor = 0.0f64;
        for k in 0..self.len() {
            for h in k + 1..self.len() {
                let d = self.minor(k, h);
                if d.abs() > max_minor.abs() {
                    max_minor = d;
                    witness = (k, h);
                }
            }
        }
        let verdict = if max_minor.abs() > tol_delta {
            Verdict::SufficientDiscreteFaithful
        } else {
            Verdict::Inconclusive
        };
        Classification { verdict, witness, max_minor, tol_delta }
    }

    /// Ratios `tau_k = w_k / u_k` of the complex logs; near the undeformed
    /// point these converge to the cusp modulus.
    pub fn tau_ratios(&self) -> Result<Vec<C64>> {
        self.u
            .iter()
            .zip(&self.w)
            .map(|(u, w)| {
                if u.norm() < 1e-14 {
                    Err(Error::Invalid(format!(
                        "tau undefined: log ratio {u} too close to zero"
                    )))
                } else {
                    Ok(w / u)
                }
            })
            .collect()
    }

    /// Minimum over nontrivial integer pairs with `max(|p|, |q|) <= n_max`
    /// of `max_k |p * Re(u_k) + q * Re(w_k)|`, with the minimizing pair.
    /// A (near-)zero here means the log-modulus rows are (nearly) rationally
    /// dependent, which forecloses a sufficient verdict.
    pub fn lattice_oracle(&self, n_max: i64) -> Result<(f64, (i64, i64))> {
        if n_max < 1 {
            return Err(Error::Invalid("oracle bound must be at least 1".into()));
        }
        let mut best = f64::INFINITY;
        let mut arg = (0i64, 0i64);
        for p in -n_max..=n_max {
            for q in -n_max..=n_max {
                if p == 0 && q == 0 {
                    continue;
                }
                let r = self.combination_residual(p, q);
                if r < best {
                    best = r;
                    arg = (p, q);
                }
            }
        }
        Ok((best, arg))
    }

    fn combination_residual(&self, p: i64, q: i64) -> f64 {
        self.u
            .iter()
            .zip(&self.w)
            .map(|(u, w)| (p as f64 * u.re + q as f64 * w.re).abs())
            .fold(0.0, f64::max)
    }

    /// Enumerates canonical coprime pairs (`gcd 1`, leading coefficient
    /// positive) up to `n_max` and returns the `max_results` smallest
    /// residuals, ascending (ties broken by `(|p|, |q|, p, q)`).
    pub fn resonance_search(&self, n_max: i64, max_results: usize) -> Result<Vec<Resonance>> {
        if n_max < 1 {
            return Err(Error::Invalid("resonance bound must be at least 1".into()));
        }
        fn gcd(a: i64, b: i64) -> i64 {
            let (mut a, mut b) = (a.abs(), b.abs());
            while b != 0 {
                (a, b) = (b, a % b);
            }
            a
        }
        let mut found = Vec::new();
        for p in -n_max..=n_max {
            for q in -n_max..=n_max {
                if (p == 0 && q == 0) || gcd(p, q) != 1 {
                    continue;
                }
                // Canonical representative of the +/- pair.
                if p < 0 || (p == 0 && q < 0) {
                    continue;
                }
                found.push(Resonance { p, q, residual: self.combination_residual(p, q) });
            }
        }
        found.sort_by(|a, b| {
            a.residual
                .partial_cmp(&b.residual)
                .expect("finite residuals")
                .then_with(|| (a.p.abs(), a.q.abs(), a.p, a.q).cmp(&(b.p.abs(), b.q.abs(), b.p, b.q)))
        });
        found.truncate(max_results);
        Ok(found)
    }
}

/// First-order size of the leading minor for a deformation in which the
/// log-modulus rows acquire independence through a cusp modulus `mu`:
/// `delta ~ Im(mu) * (arg L_k * log|L_h| - arg L_h * log|L_k|)`.
pub fn delta_leading_order(mu: Complex<f64>, u_k: C64, u_h: C64) -> f64 {
    mu.im * (u_k.im * u_h.re - u_h.im * u_k.re)
}

/// [`PeripheralClass::classify`] on a triangularized pair, with an optional
/// threshold override replacing the scale-aware default.
pub fn classify(hol: &PeripheralHolonomy, tol_delta: Option<f64>) -> Result<Classification> {
    let pc = PeripheralClass::from_holonomy(hol)?;
    let mut cls = pc.classify();
    if let Some(t) = tol_delta {
        if !(t > 0.0) {
            return Err(Error::Invalid("minor threshold must be positive".into()));
        }
        cls.tol_delta = t;
        cls.verdict = if cls.max_minor.abs() > t {
            Verdict::SufficientDiscreteFaithful
        } else {
            Verdict::Inconclusive
        };
    }
    Ok(cls)
}

/// [`PeripheralClass::lattice_oracle`] on a triangularized pair.
pub fn lattice_oracle(hol: &PeripheralHolonomy, n_max: i64) -> Result<(f64, (i64, i64))> {
    PeripheralClass::from_holonomy(hol)?.lattice_oracle(n_max)
}

/// [`PeripheralClass::resonance_search`] on a triangularized pair.
pub fn resonance_search(hol: &PeripheralHolonomy, maxpq: i64) -> Result<Vec<Resonance>> {
    PeripheralClass::from_holonomy(hol)?.resonance_search(maxpq, usize::MAX)
}
