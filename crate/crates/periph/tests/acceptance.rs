//! Acceptance gate for the whole pipeline: eleven end-to-end checks over
//! the shipped corpus, the symmetric-power lifts, the deformation solver,
//! and the certificate logic. Each check prints exactly one pass/fail line
//! with its measured margins; the process exits nonzero if any fail.
//!
//! This target runs without the libtest harness so the lines always reach
//! the terminal in order and the exit code is the verdict.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use periph::corpus8::{self, projectively_unipotent, projectively_unipotent_regular};
use periph::cxmat::projective_distance;
use periph::defsolve::{
    rank_check, refine_to_variety, tau_estimate, DeformationProblem, SolvedPoint, SolverConfig,
};
use periph::flagdec::{
    common_flags, hol_periph, is_unipotent_regular, select_decoration, weyl_action, Flag,
    PeripheralHolonomy,
};
use periph::fpgroup::{Representation, Word};
use periph::latcrit::{PeripheralClass, Verdict};

type Outcome = Result<String, String>;

fn main() {
    let checks: [(&str, fn() -> Outcome); 11] = [
        ("shipped representations validate", shipped_representations),
        ("derived lifts validate", derived_lifts),
        ("stored power relation holds", stored_power_relation),
        ("tangent ranks match the expected variety dimensions", tangent_ranks),
        ("conjugate-pair ray certifies at leading order", conjugate_pair_ray),
        ("single-ratio family keeps every minor flat", single_ratio_family),
        ("exponent estimates agree across dimensions", exponent_agreement),
        ("refined near-unipotent points keep their invariants", unipotent_persistence),
        ("certificates never contradict the resonance oracle", oracle_consistency),
        ("a generic solved point exposes all six sheets", sheet_count),
        ("random targets round-trip back to the base point", target_round_trips),
    ];

    let mut failed = 0usize;
    for (i, (name, run)) in checks.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| Err(panic_text(&p)));
        match outcome {
            Ok(detail) => println!("criterion {:02}: pass  {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("criterion {:02}: FAIL  {name}: {reason}", i + 1);
            }
        }
    }

    if failed > 0 {
        eprintln!("{failed} of 11 acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 11 acceptance criteria hold");
}

fn panic_text(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panicked: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panicked: {s}")
    } else {
        "panicked".into()
    }
}

// -- shared plumbing --------------------------------------------------------------

/// Corpus representation together with the pinned peripheral words.
fn center(name: &str) -> Result<(Representation, Word, Word), String> {
    let named = corpus8::load_named(name).map_err(|e| format!("loading {name}: {e}"))?;
    let (longitude, meridian) = corpus8::canonical_peripheral_words();
    Ok((named.rep, longitude, meridian))
}

/// All solves below run at the tight tolerance the certificates assume.
fn tight() -> SolverConfig {
    SolverConfig { residual_tol: 1e-12, ..SolverConfig::default() }
}

fn problem(
    rep: &Representation,
    longitude: &Word,
    meridian: &Word,
    target: Vec<C64>,
) -> Result<DeformationProblem, String> {
    DeformationProblem::new(rep, longitude, meridian, target, tight()).map_err(|e| e.to_string())
}

/// Decorated holonomy of a standalone representation, anchored at the
/// standard flag like every other base-point query in the suite.
fn holonomy_of(
    rep: &Representation,
    longitude: &Word,
    meridian: &Word,
) -> Result<PeripheralHolonomy, String> {
    let err = |e: periph::error::Error| e.to_string();
    let li = rep.evaluate(longitude).map_err(err)?;
    let mi = rep.evaluate(meridian).map_err(err)?;
    let flags = common_flags(&li, &mi).map_err(err)?;
    let deco = select_decoration(&li, &mi, &flags, &Flag::standard(rep.dim())).map_err(err)?;
    hol_periph(&li, &mi, &deco.flag).map_err(err)
}

/// Uniform point of the closed unit disk, by rejection.
fn disk(rng: &mut ChaCha20Rng) -> C64 {
    loop {
        let x: f64 = rng.random_range(-1.0..=1.0);
        let y: f64 = rng.random_range(-1.0..=1.0);
        if x * x + y * y <= 1.0 {
            return C64::new(x, y);
        }
    }
}

/// Replayable per-sample generator: one fixed key, one stream per index.
fn sample_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Exponent estimate both ray criteria share: one generic-direction run on
/// the cubic representation, computed once.
#[derive(Clone)]
struct ExponentData {
    mu: C64,
    extrapolated: Vec<C64>,
}

fn cubic_exponents() -> Result<ExponentData, String> {
    static CACHE: OnceLock<Result<ExponentData, String>> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            let (rep, longitude, meridian) = center("geom3")?;
            let prob = problem(&rep, &longitude, &meridian, vec![C64::ONE; 2])?;
            // A direction with no real/imaginary alignment, so both ratio
            // indices traverse genuinely different rays.
            let direction = [C64::new(0.7, 0.4), C64::new(-0.5, 0.8)];
            let est = tau_estimate(&prob, &direction, &[0.08, 0.04, 0.02, 0.01])
                .map_err(|e| e.to_string())?;
            Ok(ExponentData { mu: est.mu, extrapolated: est.extrapolated })
        })
        .clone()
}

// -- criterion 1 ------------------------------------------------------------------

/// The three shipped solutions satisfy their group relations to working
/// precision and carry the advertised peripheral structure: both
/// peripheral images projectively unipotent, the meridian regular, and the
/// longitude regular for exactly the two representations where the
/// eigenvector geometry allows it.
fn shipped_representations() -> Outcome {
    let expectations = [("rho1", false), ("rho2", true), ("rho3", true)];
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for (name, expect_regular) in expectations {
        let (rep, longitude, meridian) = center(name)?;
        let err = |e: periph::error::Error| format!("{name}: {e}");
        let residual = rep.relator_residual();
        if residual >= 1e-12 {
            return Err(format!("{name}: relator residual {residual:.3e} >= 1e-12"));
        }
        worst = worst.max(residual);

        let li = rep.evaluate(&longitude).map_err(err)?;
        let mi = rep.evaluate(&meridian).map_err(err)?;
        if !projectively_unipotent(&li).map_err(err)? {
            return Err(format!("{name}: longitude image is not projectively unipotent"));
        }
        if !projectively_unipotent(&mi).map_err(err)? {
            return Err(format!("{name}: meridian image is not projectively unipotent"));
        }
        if !projectively_unipotent_regular(&mi).map_err(err)? {
            return Err(format!("{name}: meridian image is not regular"));
        }
        let long_regular = projectively_unipotent_regular(&li).map_err(err)?;
        if long_regular != expect_regular {
            return Err(format!(
                "{name}: longitude regularity {long_regular}, expected {expect_regular}"
            ));
        }
        notes.push(format!(
            "{name} longitude {}",
            if long_regular { "regular" } else { "minimal" }
        ));
    }
    Ok(format!(
        "relator residuals <= {worst:.3e}; meridians regular unipotent; {}",
        notes.join(", ")
    ))
}

// -- criterion 2 ------------------------------------------------------------------

/// The two derived solutions — the quadratic base point and its cubic
/// symmetric-power lift — reproduce at load time with tight residuals and
/// regular unipotent peripheral images.
fn derived_lifts() -> Outcome {
    let (rep2, longitude, meridian) = center("geom2")?;
    let r2 = rep2.relator_residual();
    if r2 >= 1e-12 {
        return Err(format!("geom2 relator residual {r2:.3e} >= 1e-12"));
    }
    let err = |e: periph::error::Error| e.to_string();
    for (word, label) in [(&longitude, "longitude"), (&meridian, "meridian")] {
        let img = rep2.evaluate(word).map_err(err)?;
        if !projectively_unipotent_regular(&img).map_err(err)? {
            return Err(format!("geom2 {label} image is not regular unipotent"));
        }
    }

    let (rep3, longitude, meridian) = center("geom3")?;
    let r3 = rep3.relator_residual();
    if r3 >= 1e-10 {
        return Err(format!("geom3 relator residual {r3:.3e} >= 1e-10"));
    }
    for (word, label) in [(&longitude, "longitude"), (&meridian, "meridian")] {
        let img = rep3.evaluate(word).map_err(err)?;
        if !is_unipotent_regular(&img).map_err(err)? {
            return Err(format!("geom3 {label} image is not unipotent regular"));
        }
    }
    Ok(format!("residuals {r2:.3e} (quadratic) and {r3:.3e} (cubic); peripherals regular unipotent"))
}

// -- criterion 3 ------------------------------------------------------------------

/// The stored witness words of the second shipped solution satisfy their
/// eigenvalue power relation as matrices, projectively.
fn stored_power_relation() -> Outcome {
    let (rep, _, _) = center("rho2")?;
    let residual = corpus8::rho2_relation_residual(&rep).map_err(|e| e.to_string())?;
    if residual >= 1e-8 {
        return Err(format!("projective relation residual {residual:.3e} >= 1e-8"));
    }
    Ok(format!("projective relation residual {residual:.3e}"))
}

// -- criterion 4 ------------------------------------------------------------------

/// The pinned tangent systems have the nullities the deformation charts
/// assume — two complex parameters at the cubic point, one at the
/// quadratic point — with an unambiguous singular-value gap.
fn tangent_ranks() -> Outcome {
    let config = tight();
    let (rep3, _, _) = center("geom3")?;
    let report3 = rank_check(&rep3, &config).map_err(|e| e.to_string())?;
    if report3.nullity != 2 {
        return Err(format!("cubic nullity {}, expected 2", report3.nullity));
    }
    if report3.gap < 1e3 {
        return Err(format!("cubic singular-value gap {:.3e} < 1e3", report3.gap));
    }
    let (rep2, _, _) = center("geom2")?;
    let report2 = rank_check(&rep2, &config).map_err(|e| e.to_string())?;
    if report2.nullity != 1 {
        return Err(format!("quadratic nullity {}, expected 1", report2.nullity));
    }
    Ok(format!(
        "cubic nullity 2 (gap {:.1e}), quadratic nullity 1 (gap {:.1e})",
        report3.gap, report2.gap
    ))
}

// -- criterion 5 ------------------------------------------------------------------

/// Along the conjugate-pair ray `L = ((1+t)e^{it}, (1+t)e^{-it})` the
/// certificate fires at every sampled scale, and at the smallest scale the
/// winning minor matches its leading-order model `2 * Im(mu) * t^2` within
/// ten percent.
fn conjugate_pair_ray() -> Outcome {
    let exponents = cubic_exponents()?;
    let im_mu = exponents.mu.im;

    let (rep, longitude, meridian) = center("geom3")?;
    let base = problem(&rep, &longitude, &meridian, vec![C64::ONE; 2])?;

    let mut warm: Option<SolvedPoint> = None;
    let mut last = None;
    for &t in &[0.02, 0.01, 0.005] {
        let target = vec![C64::from_polar(1.0 + t, t), C64::from_polar(1.0 + t, -t)];
        let prob = base.with_target(target).map_err(|e| e.to_string())?;
        let point = prob
            .solve_continuation(warm.as_ref())
            .map_err(|e| format!("t = {t}: {e}"))?;
        let hol = prob.holonomy(&point).map_err(|e| e.to_string())?;
        let class = PeripheralClass::from_holonomy(&hol).map_err(|e| e.to_string())?;
        let outcome = class.classify();
        if outcome.verdict != Verdict::SufficientDiscreteFaithful {
            return Err(format!(
                "t = {t}: verdict {:?} with max minor {:.3e}",
                outcome.verdict, outcome.max_minor
            ));
        }
        last = Some((t, class.minor(0, 1)));
        warm = Some(point);
    }

    let (t, delta) = last.expect("the ray has samples");
    let ratio = delta / (2.0 * im_mu * t * t);
    if !(0.9..=1.1).contains(&ratio) {
        return Err(format!(
            "minor/leading-order ratio {ratio:.4} at t = {t} falls outside [0.9, 1.1]"
        ));
    }
    Ok(format!("certified at t in {{0.02, 0.01, 0.005}}; leading-order ratio {ratio:.4} at t = {t}"))
}

// -- criterion 6 ------------------------------------------------------------------

/// Moving a single eigenvalue ratio while pinning the rest to one produces
/// a family every minor vanishes on: the certificate must stay silent, and
/// the untouched ratios must stay put.
fn single_ratio_family() -> Outcome {
    let (rep, longitude, meridian) = center("geom3")?;
    let t = 0.01;
    let prob = problem(&rep, &longitude, &meridian, vec![C64::new(1.0 + t, 0.0), C64::ONE])?;
    let point = prob.solve_continuation(None).map_err(|e| e.to_string())?;
    if point.residual() >= 1e-12 {
        return Err(format!("solver residual {:.3e} >= 1e-12", point.residual()));
    }
    let hol = prob.holonomy(&point).map_err(|e| e.to_string())?;
    let class = PeripheralClass::from_holonomy(&hol).map_err(|e| e.to_string())?;

    let delta = class.minor(0, 1).abs();
    if delta > 1e-8 {
        return Err(format!("minor magnitude {delta:.3e} > 1e-8 on a rank-one family"));
    }
    let untouched_l = (hol.long_ratios[1] - C64::ONE).norm();
    let untouched_m = (hol.merid_ratios[1] - C64::ONE).norm();
    if untouched_l > 1e-8 || untouched_m > 1e-8 {
        return Err(format!(
            "untouched ratios drifted: |L2 - 1| = {untouched_l:.3e}, |M2 - 1| = {untouched_m:.3e}"
        ));
    }
    let outcome = class.classify();
    if outcome.verdict != Verdict::Inconclusive {
        return Err("a single-ratio family must not certify".into());
    }
    let moved = (hol.merid_ratios[0] - C64::ONE).norm();
    Ok(format!(
        "all minors <= {delta:.3e}; untouched ratios within {:.3e} of one; coupled response {moved:.3e}",
        untouched_l.max(untouched_m)
    ))
}

// -- criterion 7 ------------------------------------------------------------------

/// The two ratio indices of the cubic representation report one common
/// exponent, its imaginary part is safely nonzero, and the same number
/// falls out of the quadratic representation computed independently.
fn exponent_agreement() -> Outcome {
    let exponents = cubic_exponents()?;
    let disagreement = (exponents.extrapolated[0] - exponents.extrapolated[1]).norm();
    if disagreement >= 1e-3 {
        return Err(format!("extrapolated exponents disagree by {disagreement:.3e}"));
    }
    if exponents.mu.im.abs() <= 0.05 {
        return Err(format!("|Im mu| = {:.3e} <= 0.05", exponents.mu.im.abs()));
    }

    let (rep2, longitude, meridian) = center("geom2")?;
    let prob2 = problem(&rep2, &longitude, &meridian, vec![C64::ONE])?;
    let est2 = tau_estimate(&prob2, &[C64::ONE], &[0.08, 0.04, 0.02, 0.01])
        .map_err(|e| e.to_string())?;
    let cross = (est2.mu - exponents.mu).norm();
    if cross >= 1e-3 {
        return Err(format!(
            "quadratic estimate {} vs cubic {} differ by {cross:.3e}",
            est2.mu, exponents.mu
        ));
    }
    Ok(format!(
        "indices agree to {disagreement:.1e}; mu = {:.6}{:+.6}i; dimensions agree to {cross:.1e}",
        exponents.mu.re, exponents.mu.im
    ))
}

// -- criterion 8 ------------------------------------------------------------------

/// Random entrywise perturbations of the second shipped solution, refined
/// back onto the relation variety, keep its qualitative peripheral
/// structure: vanishing minors and the stored power relation.
fn unipotent_persistence() -> Outcome {
    let (rep, longitude, meridian) = center("rho2")?;
    let config = tight();
    let scale = 1e-3;
    let samples = 20usize;

    let mut converged = 0usize;
    let mut max_minor = 0.0f64;
    let mut max_relation = 0.0f64;
    for index in 0..samples {
        let mut rng = sample_rng(7, index);
        let perturbed: Vec<DMatrix<C64>> = rep
            .images()
            .iter()
            .map(|g| {
                let mut m = g.data().clone();
                for v in m.iter_mut() {
                    *v += scale
                        * C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                }
                m
            })
            .collect();

        let refined = match refine_to_variety(&rep, &perturbed, &config) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let hol = match holonomy_of(&refined, &longitude, &meridian) {
            Ok(h) => h,
            Err(_) => continue,
        };
        let class = match PeripheralClass::from_holonomy(&hol) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let relation = match corpus8::rho2_relation_residual(&refined) {
            Ok(r) => r,
            Err(_) => continue,
        };
        converged += 1;
        max_minor = max_minor.max(class.minor(0, 1).abs());
        max_relation = max_relation.max(relation);
    }

    if converged < 15 {
        return Err(format!("only {converged}/{samples} perturbations re-converged"));
    }
    if max_minor >= 1e-8 {
        return Err(format!("a refined point grew a minor of {max_minor:.3e}"));
    }
    if max_relation >= 1e-8 {
        return Err(format!("power relation degraded to {max_relation:.3e}"));
    }
    Ok(format!(
        "{converged}/{samples} converged; minors <= {max_minor:.3e}; relation residual <= {max_relation:.3e}"
    ))
}

// -- criterion 9 ------------------------------------------------------------------

/// Adversarial consistency of the two independent classifiers: over many
/// random holonomies, no input is simultaneously certified by the minor
/// test and flagged as an exact integer resonance by the lattice search.
fn oracle_consistency() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(20260815);
    let samples = 500usize;
    let mut certified = 0usize;
    let mut least_margin = f64::INFINITY;

    for i in 0..samples {
        let l: Vec<C64> = (0..2).map(|_| disk(&mut rng).exp()).collect();
        let m: Vec<C64> = (0..2).map(|_| disk(&mut rng).exp()).collect();
        let class =
            PeripheralClass::from_ratios(&l, &m).map_err(|e| format!("sample {i}: {e}"))?;
        if class.classify().verdict != Verdict::SufficientDiscreteFaithful {
            continue;
        }
        certified += 1;
        let (minimum, (p, q)) =
            class.lattice_oracle(50).map_err(|e| format!("sample {i}: {e}"))?;
        if minimum < 1e-12 {
            return Err(format!(
                "sample {i}: certified yet resonant at ({p}, {q}) with margin {minimum:.3e}"
            ));
        }
        least_margin = least_margin.min(minimum);
    }

    Ok(format!(
        "{samples} samples, {certified} certified, none resonant (least oracle margin {least_margin:.3e})"
    ))
}

// -- criterion 10 -----------------------------------------------------------------

/// At a solved point with three distinct eigenvalues, the triangularizing
/// flags realize the full symmetric group: exactly six simultaneous flags,
/// and the six sheet holonomies are pairwise distinct.
fn sheet_count() -> Outcome {
    let (rep, longitude, meridian) = center("geom3")?;
    let target = vec![C64::new(1.04, 0.03), C64::new(0.97, -0.02)];
    let prob = problem(&rep, &longitude, &meridian, target)?;
    let point = prob.solve_continuation(None).map_err(|e| e.to_string())?;
    let solved = prob.representation(&point).map_err(|e| e.to_string())?;

    let err = |e: periph::error::Error| e.to_string();
    let li = solved.evaluate(&longitude).map_err(err)?;
    let mi = solved.evaluate(&meridian).map_err(err)?;
    let flags = common_flags(&li, &mi).map_err(err)?;
    if flags.len() != 6 {
        return Err(format!("found {} simultaneous flags, expected 6", flags.len()));
    }

    let base = prob.decoration(&point).map_err(err)?;
    let perms: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut sheets: Vec<Vec<C64>> = Vec::with_capacity(6);
    for perm in perms {
        let dec = weyl_action(&li, &mi, &base, &perm)
            .map_err(|e| format!("ordering {perm:?}: {e}"))?;
        let hol = hol_periph(&li, &mi, &dec.flag).map_err(err)?;
        sheets.push(hol.long_ratios);
    }

    let mut min_sep = f64::INFINITY;
    for a in 0..sheets.len() {
        for b in (a + 1)..sheets.len() {
            let sep = sheets[a]
                .iter()
                .zip(&sheets[b])
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            min_sep = min_sep.min(sep);
        }
    }
    if min_sep <= 1e-6 {
        return Err(format!("two sheets coincide within {min_sep:.3e}"));
    }
    Ok(format!("6 flags; sheet holonomies pairwise separated by >= {min_sep:.3e}"))
}

// -- criterion 11 -----------------------------------------------------------------

/// Reproducibility of the chart: random nearby targets solve to tight
/// accuracy, and re-solving back to the all-ones target from each solved
/// point returns the original matrices, not some other preimage.
fn target_round_trips() -> Outcome {
    let (rep, longitude, meridian) = center("geom3")?;
    let base = problem(&rep, &longitude, &meridian, vec![C64::ONE; 2])?;
    let mut rng = ChaCha20Rng::seed_from_u64(58);

    let trips = 50usize;
    let mut worst_hit = 0.0f64;
    let mut worst_return = 0.0f64;
    for i in 0..trips {
        let target: Vec<C64> = (0..2).map(|_| C64::ONE + 0.05 * disk(&mut rng)).collect();
        let prob = base.with_target(target.clone()).map_err(|e| e.to_string())?;
        let point = prob.solve_continuation(None).map_err(|e| format!("trip {i}: {e}"))?;
        let hol = prob.holonomy(&point).map_err(|e| e.to_string())?;
        let hit = hol
            .long_ratios
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if hit >= 1e-9 {
            return Err(format!("trip {i}: achieved ratios miss the target by {hit:.3e}"));
        }
        worst_hit = worst_hit.max(hit);

        let back = base
            .solve_continuation(Some(&point))
            .map_err(|e| format!("trip {i} return: {e}"))?;
        let returned = base.representation(&back).map_err(|e| e.to_string())?;
        let mut dist = 0.0f64;
        for (a, b) in returned.images().iter().zip(rep.images()) {
            dist = dist.max(projective_distance(a, b).map_err(|e| e.to_string())?);
        }
        if dist >= 1e-7 {
            return Err(format!("trip {i}: returned {dist:.3e} away from the base matrices"));
        }
        worst_return = worst_return.max(dist);
    }
    Ok(format!(
        "{trips} round trips: target error <= {worst_hit:.3e}, return distance <= {worst_return:.3e}"
    ))
}
