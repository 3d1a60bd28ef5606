//! Finitely presented groups and their matrix representations.
//!
//! Words are signed generator sequences evaluated strictly left to right;
//! generator inverses are computed once per representation and cached so the
//! same floating-point matrices are reused everywhere a letter repeats.
//! The commutator convention is fixed crate-wide: `[a, b] = a b a^-1 b^-1`.

use nalgebra::DMatrix;

use crate::cxmat::{projective_distance, CMatrix, C64};
use crate::error::{Error, Result};

/// A word in the free group on a presentation's generators: nonzero signed
/// 1-based indices, negative for inverses.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Word {
    letters: Vec<i32>,
}

impl Word {
    /// Empty (identity) word.
    pub fn identity() -> Self {
        Word { letters: Vec::new() }
    }

    /// Builds from raw letters; rejects zeros.
    pub fn from_letters(letters: Vec<i32>) -> Result<Self> {
        if letters.contains(&0) {
            return Err(Error::WordParse("letter index 0 is not a generator".into()));
        }
        Ok(Word { letters })
    }

    /// Single-generator word (1-based index).
    pub fn generator(index: usize) -> Self {
        Word { letters: vec![index as i32] }
    }

    /// The underlying letters.
    pub fn letters(&self) -> &[i32] {
        &self.letters
    }

    /// Letter count.
    pub fn len(&self) -> usize {
        self.letters.len()
    }

    /// True for the empty word.
    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Formal inverse: reversed letters with flipped signs.
    pub fn inverse(&self) -> Word {
        Word { letters: self.letters.iter().rev().map(|l| -l).collect() }
    }

    /// Concatenation (no reduction).
    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Word { letters }
    }

    /// Commutator `[a, b] = a b a^-1 b^-1`.
    pub fn commutator(a: &Word, b: &Word) -> Word {
        a.concat(b).concat(&a.inverse()).concat(&b.inverse())
    }

    /// Free reduction: cancels adjacent inverse pairs.
    pub fn free_reduce(&self) -> Word {
        let mut out: Vec<i32> = Vec::with_capacity(self.letters.len());
        for &l in &self.letters {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word { letters: out }
    }

    /// Cyclic reduction: free-reduces, then strips cancelling first/last
    /// pairs.
    pub fn cyclically_reduce(&self) -> Word {
        let mut w = self.free_reduce();
        while w.letters.len() >= 2 && w.letters.first() == w.letters.last().map(|l| -l).as_ref() {
            w.letters.pop();
            w.letters.remove(0);
        }
        w
    }

    /// True iff free- and cyclically reduced.
    pub fn is_cyclically_reduced(&self) -> bool {
        self.cyclically_reduce() == *self
    }

    /// Exponent sums per generator (abelianization image).
    pub fn abelianized_exponents(&self, num_generators: usize) -> Vec<i64> {
        let mut e = vec![0i64; num_generators];
        for &l in &self.letters {
            let idx = (l.unsigned_abs() as usize) - 1;
            if idx < num_generators {
                e[idx] += l.signum() as i64;
            }
        }
        e
    }

    /// Deterministic ordering key: by length, then letters compared as
    /// `(generator index, is-inverse)` so `g1 < g1^-1 < g2 < ...`.
    pub fn sort_key(&self) -> (usize, Vec<(u32, bool)>) {
        (self.letters.len(), self.letters.iter().map(|&l| (l.unsigned_abs(), l < 0)).collect())
    }

    /// Parses a whitespace-separated word like `"G1 g3 G1 g3"`; a leading
    /// uppercase letter marks an inverse. The empty string is the identity.
    pub fn parse(text: &str, generator_names: &[String]) -> Result<Word> {
        let mut letters = Vec::new();
        for token in text.split_whitespace() {
            let mut chars = token.chars();
            let first = chars
                .next()
                .ok_or_else(|| Error::WordParse("empty token".into()))?;
            let inverse = first.is_uppercase();
            let lowered: String = first.to_lowercase().chain(chars).collect();
            let idx = generator_names
                .iter()
                .position(|g| *g == lowered)
                .ok_or_else(|| {
                    Error::WordParse(format!(
                        "unknown generator {token:?} (generators: {generator_names:?})"
                    ))
                })?;
            let letter = (idx + 1) as i32;
            letters.push(if inverse { -letter } else { letter });
        }
        Ok(Word { letters })
    }

    /// Renders with the inverse-capitalization convention used by `parse`.
    pub fn display(&self, generator_names: &[String]) -> String {
        self.letters
            .iter()
            .map(|&l| {
                let name = &generator_names[(l.unsigned_abs() as usize) - 1];
                if l < 0 {
                    let mut chars = name.chars();
                    match chars.next() {
                        Some(first) => first.to_uppercase().chain(chars).collect(),
                        None => String::new(),
                    }
                } else {
                    name.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A finite presentation: named generators plus relators stored as
/// `lhs = rhs` word pairs.
#[derive(Clone, Debug)]
pub struct Presentation {
    generators: Vec<String>,
    relators: Vec<(Word, Word)>,
}

impl Presentation {
    /// Validates generator names (lowercase-letter head, alphanumeric tail,
    /// unique) and that each relator side is a nonempty word over them.
    pub fn new(generators: Vec<String>, relators: Vec<(Word, Word)>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Invalid("presentation needs at least one generator".into()));
        }
        for g in &generators {
            let mut chars = g.chars();
            let head_ok = chars.next().is_some_and(|c| c.is_ascii_lowercase());
            let tail_ok = chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !head_ok || !tail_ok {
                return Err(Error::Invalid(format!(
                    "generator name {g:?} must start with a lowercase letter"
                )));
            }
        }
        let mut sorted = generators.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != generators.len() {
            return Err(Error::Invalid("generator names must be unique".into()));
        }
        let k = generators.len() as i32;
        for (lhs, rhs) in &relators {
            if lhs.is_empty() && rhs.is_empty() {
                return Err(Error::Invalid("relator with two empty sides".into()));
            }
            for w in [lhs, rhs] {
                if w.letters().iter().any(|l| l.abs() > k) {
                    return Err(Error::Invalid("relator uses an out-of-range generator".into()));
                }
            }
        }
        Ok(Presentation { generators, relators })
    }

    /// Generator names, in index order.
    pub fn generator_names(&self) -> &[String] {
        &self.generators
    }

    /// Number of generators.
    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    /// Relators as `lhs = rhs` pairs.
    pub fn relators(&self) -> &[(Word, Word)] {
        &self.relators
    }

    /// Parses a word against this presentation's generator names.
    pub fn parse_word(&self, text: &str) -> Result<Word> {
        Word::parse(text, &self.generators)
    }
}

/// A representation: determinant-1 generator images for a presentation,
/// with cached inverses and a declared (and verified) relator residual bound.
#[derive(Clone, Debug)]
pub struct Representation {
    presentation: Presentation,
    n: usize,
    images: Vec<CMatrix>,
    inverses: Vec<CMatrix>,
    tol: f64,
    residual_bound: f64,
}

impl Representation {
    /// Builds and validates: one image per generator, uniform dimension,
    /// determinant within 1e-6 of 1, inverse cache consistent to 1e-12
    /// (scaled), and relator residual within `residual_bound`.
    pub fn new(
        presentation: Presentation,
        images: Vec<CMatrix>,
        tol: f64,
        residual_bound: f64,
    ) -> Result<Self> {
        if images.len() != presentation.num_generators() {
            return Err(Error::Invalid(format!(
                "expected {} generator images, got {}",
                presentation.num_generators(),
                images.len()
            )));
        }
        if !(tol > 0.0) || !(residual_bound > 0.0) {
            return Err(Error::Invalid("tol and residual_bound must be positive".into()));
        }
        let n = images[0].dim();
        if images.iter().any(|m| m.dim() != n) {
            return Err(Error::Invalid("generator images must share one dimension".into()));
        }
        for (g, m) in presentation.generators.iter().zip(images.iter()) {
            let det = m.det();
            if (det - C64::ONE).norm() > 1e-6 {
                return Err(Error::Invalid(format!(
                    "image of {g} must have determinant 1, got {det}"
                )));
            }
        }
        let mut inverses = Vec::with_capacity(images.len());
        for (g, m) in presentation.generators.iter().zip(images.iter()) {
            let inv = m.inverse()?;
            let prod = m.mul(&inv)?;
            let scale = (m.max_entry_norm() * inv.max_entry_norm()).max(1.0);
            let err = prod.distance(&CMatrix::identity(n, tol)?);
            if err > 1e-12 * scale {
                return Err(Error::Invalid(format!(
                    "inverse cache for {g} off by {err:.3e} (conditioning too poor)"
                )));
            }
            inverses.push(inv);
        }
        let rep = Representation { presentation, n, images, inverses, tol, residual_bound };
        let residual = rep.relator_residual();
        if residual > residual_bound {
            return Err(Error::Invalid(format!(
                "relator residual {residual:.3e} exceeds declared bound {residual_bound:.3e}"
            )));
        }
        Ok(rep)
    }

    /// The presentation.
    pub fn presentation(&self) -> &Presentation {
        &self.presentation
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Comparison tolerance.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Declared relator residual bound.
    pub fn residual_bound(&self) -> f64 {
        self.residual_bound
    }

    /// Generator images.
    pub fn images(&self) -> &[CMatrix] {
        &self.images
    }

    /// Cached generator inverses.
    pub fn inverses(&self) -> &[CMatrix] {
        &self.inverses
    }

    /// Evaluates a word left to right through the cached images.
    pub fn evaluate(&self, word: &Word) -> Result<CMatrix> {
        let mut acc = DMatrix::<C64>::identity(self.n, self.n);
        for &l in word.letters() {
            let idx = (l.unsigned_abs() as usize) - 1;
            if idx >= self.images.len() {
                return Err(Error::WordParse(format!(
                    "letter {l} out of range for {} generators",
                    self.images.len()
                )));
            }
            let m = if l > 0 { self.images[idx].data() } else { self.inverses[idx].data() };
            acc = acc * m;
        }
        CMatrix::new(acc, self.tol)
    }

    /// Max-entry norm of `eval(lhs) - eval(rhs)` over all relators.
    pub fn relator_residual(&self) -> f64 {
        self.presentation
            .relators
            .iter()
            .map(|(lhs, rhs)| {
                let a = self.evaluate(lhs).expect("validated letters");
                let b = self.evaluate(rhs).expect("validated letters");
                a.distance(&b)
            })
            .fold(0.0, f64::max)
    }
}

/// Finds cyclically reduced words of length at most `max_len` whose images
/// commute projectively with the image of `m`, excluding scalar multiples of
/// powers of `m`, deduplicated up to inversion and multiplication by powers
/// of `m`. Results are ordered by length, then lexicographically.
pub fn find_commuting_words(rep: &Representation, m: &Word, max_len: usize) -> Result<Vec<Word>> {
    if m.is_empty() {
        return Err(Error::Invalid("meridian word must be nontrivial".into()));
    }
    let residual = rep.relator_residual();
    if residual >= 1e-10 {
        return Err(Error::Invalid(format!(
            "commuting-word search needs residual < 1e-10, got {residual:.3e}"
        )));
    }
    let tol = rep.tol();
    let n = rep.dim();
    let mm = rep.evaluate(m)?;
    let mm_inv = mm.inverse()?;

    // Powers of rho(m) for the power-exclusion and dedup tests.
    let power_range = (max_len + 2) as i64;
    let mut m_powers: Vec<(i64, CMatrix)> = Vec::new();
    let mut acc = CMatrix::identity(n, tol)?;
    m_powers.push((0, acc.clone()));
    for j in 1..=power_range {
        acc = acc.mul(&mm)?;
        m_powers.push((j, acc.clone()));
    }
    let mut acc = CMatrix::identity(n, tol)?;
    for j in 1..=power_range {
        acc = acc.mul(&mm_inv)?;
        m_powers.push((-j, acc.clone()));
    }

    let k = rep.presentation().num_generators() as i32;
    // Letters in deterministic lexicographic order: g1 < g1^-1 < g2 < ...
    let alphabet: Vec<i32> = (1..=k).flat_map(|i| [i, -i]).collect();

    let mut classes: Vec<(Word, CMatrix)> = Vec::new();

    // Enumerate by exact length so the first representative of each
    // equivalence class is the shortest (lexicographically least) one.
    for len in 1..=max_len {
        let mut stack: Vec<(Vec<i32>, CMatrix)> = vec![(Vec::new(), CMatrix::identity(n, tol)?)];
        while let Some((prefix, prod)) = stack.pop() {
            if prefix.len() == len {
                // Cyclic reduction: first letter must not cancel the last.
                if prefix.first() == prefix.last().map(|l| -l).as_ref() {
                    continue;
                }
                let candidate = Word { letters: prefix };
                let comm = projective_distance(&prod.mul(&mm)?, &mm.mul(&prod)?)?;
                if comm >= tol {
                    continue;
                }
                let is_m_power = m_powers
                    .iter()
                    .any(|(_, p)| projective_distance(&prod, p).map(|d| d < tol).unwrap_or(false));
                if is_m_power {
                    continue;
                }
                let prod_inv = prod.inverse()?;
                let mut duplicate = false;
                'outer: for (_, u) in &classes {
                    for (_, p) in &m_powers {
                        let shifted = u.mul(p)?;
                        if projective_distance(&prod, &shifted)? < tol
                            || projective_distance(&prod_inv, &shifted)? < tol
                        {
                            duplicate = true;
                            break 'outer;
                        }
                    }
                }
                if !duplicate {
                    classes.push((candidate, prod));
                }
                continue;
            }
            // Depth-first in reverse alphabet order so pops come out in
            // lexicographic order.
            for &l in alphabet.iter().rev() {
                if prefix.last() == Some(&-l) {
                    continue;
                }
                let idx = (l.unsigned_abs() as usize) - 1;
                let step =
                    if l > 0 { &rep.images()[idx] } else { &rep.inverses()[idx] };
                let mut next = prefix.clone();
                next.push(l);
                stack.push((next, prod.mul(step)?));
            }
        }
    }

    Ok(classes.into_iter().map(|(w, _)| w).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cxmat::DEFAULT_TOL;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn diag2(a: C64) -> CMatrix {
        CMatrix::from_rows(
            &[vec![a, c(0.0, 0.0)], vec![c(0.0, 0.0), a.inv()]],
            DEFAULT_TOL,
        )
        .unwrap()
    }

    /// Z^2 presented on two commuting generators, with diagonal images.
    fn z2_rep() -> Representation {
        let gens = names(&["a", "b"]);
        let a = Word::generator(1);
        let b = Word::generator(2);
        let pres =
            Presentation::new(gens, vec![(a.concat(&b), b.concat(&a))]).unwrap();
        Representation::new(
            pres,
            vec![diag2(c(2.0, 0.0)), diag2(c(3.0, 0.0))],
            DEFAULT_TOL,
            1e-12,
        )
        .unwrap()
    }

    #[test]
    fn parse_and_display_round_trip() {
        let gens = names(&["g1", "g3"]);
        let w = Word::parse("G1 g3 G1 g3", &gens).unwrap();
        assert_eq!(w.letters(), &[-1, 2, -1, 2]);
        assert_eq!(w.display(&gens), "G1 g3 G1 g3");
        assert!(Word::parse("g2", &gens).is_err(), "unknown generator");
        assert!(Word::parse("", &gens).unwrap().is_empty());
    }

    #[test]
    fn reduction_and_inverse() {
        let w = Word::from_letters(vec![1, -1, 2]).unwrap();
        assert_eq!(w.free_reduce().letters(), &[2]);
        let w = Word::from_letters(vec![1, 2, -1]).unwrap();
        assert_eq!(w.cyclically_reduce().letters(), &[2]);
        let w = Word::from_letters(vec![1, 2, -1, -2]).unwrap();
        assert_eq!(w.inverse().letters(), &[2, 1, -2, -1]);
    }

    #[test]
    fn abelianization_examples() {
        // g1 g3 g1^-1 -> (0, 1)
        let w = Word::from_letters(vec![1, 2, -1]).unwrap();
        assert_eq!(w.abelianized_exponents(2), vec![0, 1]);
        // A commutator abelianizes to zero.
        let comm = Word::commutator(&Word::generator(1), &Word::generator(2));
        assert_eq!(comm.abelianized_exponents(2), vec![0, 0]);
    }

    #[test]
    fn evaluate_identity_and_inverses() {
        let rep = z2_rep();
        let id = rep.evaluate(&Word::identity()).unwrap();
        assert!(id.distance(&CMatrix::identity(2, DEFAULT_TOL).unwrap()) < 1e-15);
        let w = Word::from_letters(vec![1, 2]).unwrap();
        let fwd = rep.evaluate(&w).unwrap();
        let back = rep.evaluate(&w.inverse()).unwrap();
        let prod = fwd.mul(&back).unwrap();
        assert!(prod.distance(&CMatrix::identity(2, DEFAULT_TOL).unwrap()) < 1e-14);
    }

    #[test]
    fn representation_validation_rejects_bad_input() {
        let gens = names(&["a"]);
        let pres = Presentation::new(gens, vec![]).unwrap();
        // Determinant far from 1.
        let bad = CMatrix::from_rows(
            &[vec![c(2.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(2.0, 0.0)]],
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(Representation::new(pres.clone(), vec![bad], DEFAULT_TOL, 1e-10).is_err());
        // Wrong image count.
        assert!(Representation::new(pres, vec![], DEFAULT_TOL, 1e-10).is_err());
    }

    #[test]
    fn relator_residual_is_checked() {
        let gens = names(&["a", "b"]);
        let a = Word::generator(1);
        let b = Word::generator(2);
        // Claim a = b as a relator, but give unequal images.
        let pres = Presentation::new(gens, vec![(a, b)]).unwrap();
        let res = Representation::new(
            pres,
            vec![diag2(c(2.0, 0.0)), diag2(c(3.0, 0.0))],
            DEFAULT_TOL,
            1e-10,
        );
        assert!(res.is_err(), "residual bound must reject unequal images");
    }

    #[test]
    fn commuting_word_search_on_diagonal_rep() {
        let rep = z2_rep();
        let m = Word::generator(1);
        let found = find_commuting_words(&rep, &m, 3).unwrap();
        assert!(!found.is_empty());
        // Shortest class representative is the other generator.
        assert_eq!(found[0].letters(), &[2]);
        // No result is a pure power of m (those are excluded), and all
        // returned words are cyclically reduced.
        for w in &found {
            assert!(w.is_cyclically_reduced());
            assert!(w.letters().iter().any(|&l| l.abs() != 1));
        }
    }

    #[test]
    fn commuting_word_search_requires_nontrivial_m() {
        let rep = z2_rep();
        assert!(find_commuting_words(&rep, &Word::identity(), 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// evaluate is a homomorphism on concatenation. Left-to-right
        /// evaluation makes the two sides associate differently, so exact
        /// bitwise equality is not achievable; 1e-13 relative is.
        #[test]
        fn evaluate_respects_concatenation(
            letters_a in proptest::collection::vec(prop_oneof![Just(1i32), Just(-1i32), Just(2i32), Just(-2i32)], 0..6),
            letters_b in proptest::collection::vec(prop_oneof![Just(1i32), Just(-1i32), Just(2i32), Just(-2i32)], 0..6),
        ) {
            let rep = z2_rep();
            let wa = Word::from_letters(letters_a).unwrap();
            let wb = Word::from_letters(letters_b).unwrap();
            let joint = rep.evaluate(&wa.concat(&wb)).unwrap();
            let split = rep.evaluate(&wa).unwrap().mul(&rep.evaluate(&wb).unwrap()).unwrap();
            let scale = joint.max_entry_norm().max(1.0);
            prop_assert!(joint.distance(&split) <= 1e-13 * scale);
        }
    }
}
