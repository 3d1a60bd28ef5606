//! Built-in corpus: the figure-eight knot complement group with its
//! boundary-parabolic representation classes.
//!
//! Three triangular families (`rho1`, `rho2`, `rho3`) ship as versioned JSON
//! embedded in the binary and guarded by SHA-256 checksums. Two more are
//! derived at load time: `geom2` solves the relator over parabolic 2x2
//! pairs (the faithful discrete solution), and `geom3` is its symmetric
//! lift to dimension 3 — the same code path as [`crate::symlift::lift_rep`],
//! so the two stay equal by construction.
//!
//! The canonical peripheral pair is pinned here and in the data files:
//! the meridian is `g1` and the longitude is the unique commuting-word
//! class of length at most 8 with trivial abelianization. For `rho2` the
//! homological longitude maps to the meridian image to the power -3, so the
//! power-5 relation is witnessed by the modified pair `(l * m^8, m)`; both
//! pairs are exposed.
//!
//! Every corpus entry has a unipotent peripheral image with a regular
//! unipotent meridian (so the cusp image fixes exactly one flag). The
//! longitude image is also regular at four of the five entries; at `rho1`
//! it sits in the minimal unipotent stratum (one off-diagonal entry), while
//! `l * m^k` is regular for every nonzero `k` — the degeneracy is specific
//! to the homological longitude direction. [`peripheral_structure`] reports
//! these facts per entry.

use sha2::{Digest, Sha256};

use crate::cxmat::{projective_distance, roots_of_unity, CMatrix, C64};
use crate::error::{Error, Result};
use crate::flagdec::is_unipotent_regular;
use crate::fpgroup::{Presentation, Representation, Word};
use crate::repio::RepFile;
use crate::symlift::lift_rep;

/// Version marker of the shipped data files.
pub const CORPUS_VERSION: &str = "1";

/// The five named representations, in canonical order.
pub const NAMES: [&str; 5] = ["geom2", "geom3", "rho1", "rho2", "rho3"];

/// Pinned meridian word.
pub const MERIDIAN_WORD: &str = "g1";

/// Pinned longitude word (null-homologous commuting class, length 8).
pub const LONGITUDE_WORD: &str = "g3 G1 G3 g1 g1 G3 G1 g3";

/// The meridian power witnessed by the modified longitude for `rho2`.
pub const RHO2_WITNESS_EXPONENT: i64 = 5;

/// Meridian-power offset turning the homological longitude into the
/// witness longitude: `l' = l * m^8`.
pub const RHO2_WITNESS_OFFSET: usize = 8;

const RHO1_JSON: &str = include_str!("../data/rho1.json");
const RHO2_JSON: &str = include_str!("../data/rho2.json");
const RHO3_JSON: &str = include_str!("../data/rho3.json");

const RHO1_SHA256: &str = "f29bb6b0b15076434b9f0f43186aa6bfc47d5f1655ee7b1ea503ef883b75fbb0";
const RHO2_SHA256: &str = "f8538827104d061d9e45b1091ccf25cd8d7124837ff4baf49645cf56f96502a8";
const RHO3_SHA256: &str = "714130b329e7958b480b16c80115510a5affbd80d1c191dfdee4a53ee373220b";

/// Residual bound every corpus entry must meet.
const CORPUS_RESIDUAL_BOUND: f64 = 1e-12;

/// Default tolerance carried by derived corpus entries.
const CORPUS_TOL: f64 = 1e-9;

/// A corpus entry: validated representation plus an origin note.
#[derive(Clone, Debug)]
pub struct NamedRep {
    /// One of [`NAMES`].
    pub name: String,
    /// The validated representation.
    pub rep: Representation,
    /// Free-text origin note.
    pub provenance: String,
}

/// The embedded data files as `(name, contents, pinned sha256)`.
pub fn embedded_files() -> [(&'static str, &'static str, &'static str); 3] {
    [
        ("rho1", RHO1_JSON, RHO1_SHA256),
        ("rho2", RHO2_JSON, RHO2_SHA256),
        ("rho3", RHO3_JSON, RHO3_SHA256),
    ]
}

/// Hex SHA-256 of a byte string.
pub fn checksum_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Verifies every embedded file against its pinned checksum.
pub fn verify_checksums() -> Result<()> {
    for (name, contents, pinned) in embedded_files() {
        let actual = checksum_hex(contents.as_bytes());
        if actual != pinned {
            return Err(Error::CorpusIntegrity(format!(
                "data file {name} drifted: sha256 {actual} != pinned {pinned}"
            )));
        }
    }
    Ok(())
}

/// The knot-group presentation on two meridional generators:
/// `[g3, g1^-1] g3 = g1 [g3, g1^-1]` with `[a, b] = a b a^-1 b^-1`, whose
/// sides expand to 5 letters each.
pub fn presentation_fig8() -> Presentation {
    let gens = vec!["g1".to_string(), "g3".to_string()];
    let lhs = Word::parse("g3 G1 G3 g1 g3", &gens).expect("pinned word");
    let rhs = Word::parse("g1 g3 G1 G3 g1", &gens).expect("pinned word");
    Presentation::new(gens, vec![(lhs, rhs)]).expect("pinned presentation")
}

/// The pinned peripheral pair `(l, m)`: the longitude and the meridian.
pub fn canonical_peripheral_words() -> (Word, Word) {
    let gens = presentation_fig8().generator_names().to_vec();
    let l = Word::parse(LONGITUDE_WORD, &gens).expect("pinned word");
    let m = Word::parse(MERIDIAN_WORD, &gens).expect("pinned word");
    (l, m)
}

/// The relation-witnessing pair `(l * m^8, m)` for `rho2`: the modified
/// longitude whose image equals the meridian image to the power
/// [`RHO2_WITNESS_EXPONENT`].
pub fn rho2_witness_pair() -> (Word, Word) {
    let (l, m) = canonical_peripheral_words();
    let mut witness = l;
    for _ in 0..RHO2_WITNESS_OFFSET {
        witness = witness.concat(&m);
    }
    (witness, m)
}

/// Projective regular-unipotency: true iff some determinant-preserving
/// rescaling by an n-th root of unity makes the matrix regular unipotent.
/// (Determinant-1 lifts of unipotent projective classes can carry any such
/// root on their eigenvalues.)
pub fn projectively_unipotent_regular(a: &CMatrix) -> Result<bool> {
    let mut last_err: Option<Error> = None;
    for zeta in roots_of_unity(a.dim()) {
        match is_unipotent_regular(&a.scale(zeta)?) {
            Ok(true) => return Ok(true),
            Ok(false) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match last_err {
        Some(e) => Err(e),
        None => Ok(false),
    }
}

/// Projective unipotency with no regularity demand: true iff some n-th
/// root-of-unity rescaling puts every eigenvalue within tolerance of 1,
/// whatever the Jordan structure.
pub fn projectively_unipotent(a: &CMatrix) -> Result<bool> {
    for zeta in roots_of_unity(a.dim()) {
        let scaled = a.scale(zeta)?;
        let spectral = crate::cxmat::char_poly(&scaled)?;
        let lam_scale = spectral
            .eigenvalues
            .iter()
            .map(|z| z.norm())
            .fold(1.0, f64::max);
        let near_one = spectral
            .clusters
            .iter()
            .all(|c| (c.value - C64::ONE).norm() <= 1e2 * scaled.tol() * lam_scale);
        if near_one {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Jordan-structure summary of the canonical peripheral pair at a
/// representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeripheralStructure {
    /// Longitude image is projectively unipotent.
    pub longitude_unipotent: bool,
    /// Longitude image is projectively regular unipotent (one Jordan block).
    pub longitude_regular: bool,
    /// Meridian image is projectively unipotent.
    pub meridian_unipotent: bool,
    /// Meridian image is projectively regular unipotent.
    pub meridian_regular: bool,
}

/// Computes the peripheral Jordan-structure summary. The corpus invariant
/// is that both images are unipotent and the meridian is regular — the
/// cusp-subgroup image then fixes exactly one complete flag. The longitude
/// alone need not be regular: a null-homologous longitude can land in the
/// minimal unipotent stratum even when generic peripheral elements are
/// regular.
pub fn peripheral_structure(rep: &Representation) -> Result<PeripheralStructure> {
    let (l, m) = canonical_peripheral_words();
    let li = rep.evaluate(&l)?;
    let mi = rep.evaluate(&m)?;
    Ok(PeripheralStructure {
        longitude_unipotent: projectively_unipotent(&li)?,
        longitude_regular: projectively_unipotent_regular(&li).unwrap_or(false),
        meridian_unipotent: projectively_unipotent(&mi)?,
        meridian_regular: projectively_unipotent_regular(&mi).unwrap_or(false),
    })
}

fn validate_peripherals(name: &str, rep: &Representation) -> Result<()> {
    let s = peripheral_structure(rep)
        .map_err(|e| Error::CorpusIntegrity(format!("{name}: peripheral check failed: {e}")))?;
    if !s.longitude_unipotent || !s.meridian_unipotent {
        return Err(Error::CorpusIntegrity(format!(
            "{name}: peripheral images must be projectively unipotent (longitude: {}, meridian: {})",
            s.longitude_unipotent, s.meridian_unipotent
        )));
    }
    if !s.meridian_regular {
        return Err(Error::CorpusIntegrity(format!(
            "{name}: meridian image must be regular unipotent so the cusp \
             image fixes a unique flag"
        )));
    }
    Ok(())
}

/// Runs the full corpus validation pipeline on one data file's contents:
/// checksum against the pinned digest, JSON parse, declared residual bound,
/// pinned peripheral words, representation validation, and peripheral
/// unipotency. Works on any source of the bytes (embedded copies or files
/// on disk), so external health checks and the shipped data stay on one
/// code path.
pub fn load_checked(name: &str, contents: &str, pinned: &str) -> Result<NamedRep> {
    let actual = checksum_hex(contents.as_bytes());
    if actual != pinned {
        return Err(Error::CorpusIntegrity(format!(
            "data file {name} drifted: sha256 {actual} != pinned {pinned}"
        )));
    }
    let file = RepFile::from_json(contents)
        .map_err(|e| Error::CorpusIntegrity(format!("{name}: unreadable data file: {e}")))?;
    if file.residual_bound != Some(CORPUS_RESIDUAL_BOUND) {
        return Err(Error::CorpusIntegrity(format!(
            "{name}: corpus files must declare residual_bound {CORPUS_RESIDUAL_BOUND:e}"
        )));
    }
    if file.meridian.as_deref() != Some(MERIDIAN_WORD)
        || file.longitude.as_deref() != Some(LONGITUDE_WORD)
    {
        return Err(Error::CorpusIntegrity(format!(
            "{name}: peripheral words in the data file do not match the pinned pair"
        )));
    }
    let loaded = file
        .load()
        .map_err(|e| Error::CorpusIntegrity(format!("{name}: validation failed: {e}")))?;
    validate_peripherals(name, &loaded.rep)?;
    Ok(NamedRep {
        name: name.to_string(),
        rep: loaded.rep,
        provenance: file.provenance.unwrap_or_default(),
    })
}

/// Derives the faithful discrete parabolic solution of the relator over
/// 2x2 pairs: with `g1 = [[1, 1], [0, 1]]` and `g3 = [[1, 0], [c, 1]]` the
/// relator reduces to `c^2 - c + 1 = 0`; the root with positive imaginary
/// part is selected (the two roots are complex conjugate and give
/// mirror-image representations).
fn derive_geom2() -> Result<NamedRep> {
    let c = (C64::ONE + C64::new(-3.0, 0.0).sqrt()) / 2.0;
    let one = C64::ONE;
    let zero = C64::ZERO;
    let g1 = CMatrix::from_rows(&[vec![one, one], vec![zero, one]], CORPUS_TOL)?;
    let g3 = CMatrix::from_rows(&[vec![one, zero], vec![c, one]], CORPUS_TOL)?;
    let rep = Representation::new(
        presentation_fig8(),
        vec![g1, g3],
        CORPUS_TOL,
        CORPUS_RESIDUAL_BOUND,
    )
    .map_err(|e| Error::CorpusIntegrity(format!("geom2: derivation failed: {e}")))?;
    validate_peripherals("geom2", &rep)?;
    Ok(NamedRep {
        name: "geom2".to_string(),
        rep,
        provenance: "derived at load: parabolic relator solution with the \
                     positive-imaginary quadratic root"
            .to_string(),
    })
}

fn derive_geom3() -> Result<NamedRep> {
    let geom2 = derive_geom2()?;
    let rep = lift_rep(&geom2.rep, 3, CORPUS_RESIDUAL_BOUND)
        .map_err(|e| Error::CorpusIntegrity(format!("geom3: lift failed: {e}")))?;
    validate_peripherals("geom3", &rep)?;
    Ok(NamedRep {
        name: "geom3".to_string(),
        rep,
        provenance: "derived at load: symmetric-power lift of geom2 to dimension 3"
            .to_string(),
    })
}

/// Loads one of the five named representations, running every corpus
/// validation (checksum, residual bound, pinned words, peripheral
/// unipotency).
pub fn load_named(name: &str) -> Result<NamedRep> {
    match name {
        "geom2" => derive_geom2(),
        "geom3" => derive_geom3(),
        "rho1" => load_checked("rho1", RHO1_JSON, RHO1_SHA256),
        "rho2" => load_checked("rho2", RHO2_JSON, RHO2_SHA256),
        "rho3" => load_checked("rho3", RHO3_JSON, RHO3_SHA256),
        other => Err(Error::Invalid(format!(
            "unknown corpus name {other:?}; available: {NAMES:?}"
        ))),
    }
}

/// Residual of the power relation `rho(l') = rho(m)^5` for the witness
/// pair, as a projective distance.
pub fn rho2_relation_residual(rep: &Representation) -> Result<f64> {
    let (witness, m) = rho2_witness_pair();
    let lhs = rep.evaluate(&witness)?;
    let rhs = rep.evaluate(&m)?.powi(RHO2_WITNESS_EXPONENT)?;
    projective_distance(&lhs, &rhs)
}
