//! JSON (de)serialization of representations.
//!
//! The on-disk schema:
//!
//! ```json
//! {
//!   "n": 3,
//!   "presentation": { "generators": ["g1", "g3"],
//!                     "relators": [["g3 G1 G3 g1 g3", "g1 g3 G1 G3 g1"]] },
//!   "images": { "g1": [[[1.0, 0.0], ...], ...] },
//!   "tol": 1e-9
//! }
//! ```
//!
//! Complex numbers are `[re, im]` pairs; matrices are row-major nested
//! arrays. Optional fields extend the core schema without breaking it:
//! `residual_bound` (defaults to 1e-8 when absent), `meridian` /
//! `longitude` word strings, a `decoration` flag basis, and documentary
//! `name` / `version` / `provenance` / `images_expr` annotations.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cxmat::{CMatrix, C64};
use crate::error::{Error, Result};
use crate::flagdec::Flag;
use crate::fpgroup::{Presentation, Representation, Word};

/// Residual bound assumed for files that do not declare one.
pub const DEFAULT_RESIDUAL_BOUND: f64 = 1e-8;

/// Presentation block: generator names plus `[lhs, rhs]` relator strings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PresentationJson {
    /// Generator names in index order.
    pub generators: Vec<String>,
    /// Relators as `[lhs, rhs]` word strings.
    pub relators: Vec<[String; 2]>,
}

/// Serialized decoration: the flag basis as a row-major complex matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecorationJson {
    /// Unitary flag basis, row-major `[re, im]` entries.
    pub flag: Vec<Vec<[f64; 2]>>,
}

/// One representation file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepFile {
    /// Matrix dimension.
    pub n: usize,
    /// The group presentation.
    pub presentation: PresentationJson,
    /// Generator images, keyed by generator name; row-major `[re, im]`.
    pub images: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
    /// Comparison tolerance for the loaded matrices.
    pub tol: f64,
    /// Declared relator residual bound (validated on load).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_bound: Option<f64>,
    /// Meridian word, when the file designates peripheral curves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meridian: Option<String>,
    /// Longitude word, when the file designates peripheral curves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub longitude: Option<String>,
    /// Serialized decoration (flag basis), when one travels with the file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoration: Option<DecorationJson>,
    /// Display name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Data format/version marker for shipped files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    /// Free-text origin note.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    /// Optional symbolic annotations mirroring `images` entry-by-entry
    /// (documentation only; the numeric values are authoritative).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images_expr: Option<BTreeMap<String, Vec<Vec<String>>>>,
}

/// A representation loaded from JSON along with its optional extras.
#[derive(Clone, Debug)]
pub struct LoadedRep {
    /// The validated representation.
    pub rep: Representation,
    /// Meridian word, if the file carried one.
    pub meridian: Option<Word>,
    /// Longitude word, if the file carried one.
    pub longitude: Option<Word>,
    /// Decoration flag, if the file carried one.
    pub decoration: Option<Flag>,
}

fn matrix_from_json(rows: &[Vec<[f64; 2]>], n: usize, tol: f64) -> Result<CMatrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid(format!("matrix must be {n}x{n} row-major")));
    }
    let data: Vec<Vec<C64>> = rows
        .iter()
        .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
        .collect();
    CMatrix::from_rows(&data, tol)
}

fn matrix_to_json(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    let n = m.dim();
    (0..n)
        .map(|i| (0..n).map(|j| [m.entry(i, j).re, m.entry(i, j).im]).collect())
        .collect()
}

impl RepFile {
    /// Parses a JSON string.
    pub fn from_json(text: &str) -> Result<RepFile> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads and parses a file.
    pub fn read(path: &Path) -> Result<RepFile> {
        let text = std::fs::read_to_string(path)?;
        RepFile::from_json(&text)
    }

    /// Serializes to pretty-printed JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes pretty-printed JSON to a file.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// Validates and converts into a [`Representation`] plus extras.
    pub fn load(&self) -> Result<LoadedRep> {
        if self.n < 2 {
            return Err(Error::Invalid("dimension must be at least 2".into()));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::Invalid("tol must be a positive real".into()));
        }
        let gens = self.presentation.generators.clone();
        let mut relators = Vec::with_capacity(self.presentation.relators.len());
        for [lhs, rhs] in &self.presentation.relators {
            relators.push((Word::parse(lhs, &gens)?, Word::parse(rhs, &gens)?));
        }
        let presentation = Presentation::new(gens.clone(), relators)?;
        let mut images = Vec::with_capacity(gens.len());
        for g in &gens {
            let rows = self.images.get(g).ok_or_else(|| {
                Error::Invalid(format!("missing image for generator {g:?}"))
            })?;
            images.push(matrix_from_json(rows, self.n, self.tol)?);
        }
        let bound = self.residual_bound.unwrap_or(DEFAULT_RESIDUAL_BOUND);
        let rep = Representation::new(presentation, images, self.tol, bound)?;
        let meridian = self.meridian.as_deref().map(|w| Word::parse(w, &gens)).transpose()?;
        let longitude = self.longitude.as_deref().map(|w| Word::parse(w, &gens)).transpose()?;
        let decoration = self
            .decoration
            .as_ref()
            .map(|d| -> Result<Flag> {
                let m = matrix_from_json(&d.flag, self.n, self.tol)?;
                Flag::from_unitary(m.data().clone())
            })
            .transpose()?;
        Ok(LoadedRep { rep, meridian, longitude, decoration })
    }

    /// Builds a file model from a representation and optional extras.
    pub fn from_representation(
        rep: &Representation,
        meridian: Option<&Word>,
        longitude: Option<&Word>,
        decoration: Option<&Flag>,
    ) -> RepFile {
        let gens = rep.presentation().generator_names().to_vec();
        let relators = rep
            .presentation()
            .relators()
            .iter()
            .map(|(lhs, rhs)| [lhs.display(&gens), rhs.display(&gens)])
            .collect();
        let mut images = BTreeMap::new();
        for (g, m) in gens.iter().zip(rep.images()) {
            images.insert(g.clone(), matrix_to_json(m));
        }
        RepFile {
            n: rep.dim(),
            presentation: PresentationJson { generators: gens.clone(), relators },
            images,
            tol: rep.tol(),
            residual_bound: Some(rep.residual_bound()),
            meridian: meridian.map(|w| w.display(&gens)),
            longitude: longitude.map(|w| w.display(&gens)),
            decoration: decoration.map(|f| DecorationJson {
                flag: matrix_to_json(
                    &CMatrix::new(f.basis().clone(), rep.tol()).expect("unitary basis"),
                ),
            }),
            name: None,
            version: None,
            provenance: None,
            images_expr: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cxmat::DEFAULT_TOL;

    fn sample_file() -> RepFile {
        let text = r#"{
            "n": 2,
            "presentation": { "generators": ["a"], "relators": [] },
            "images": { "a": [[[1.0, 0.0], [0.5, -0.25]], [[0.0, 0.0], [1.0, 0.0]]] },
            "tol": 1e-9
        }"#;
        RepFile::from_json(text).unwrap()
    }

    #[test]
    fn loads_the_core_schema() {
        let loaded = sample_file().load().unwrap();
        assert_eq!(loaded.rep.dim(), 2);
        let a = &loaded.rep.images()[0];
        assert_eq!(a.entry(0, 1), C64::new(0.5, -0.25));
        assert!(loaded.meridian.is_none());
    }

    #[test]
    fn round_trips_through_json() {
        let loaded = sample_file().load().unwrap();
        let words = loaded.rep.presentation().parse_word("a A a").unwrap();
        let out = RepFile::from_representation(&loaded.rep, Some(&words), None, None);
        let text = out.to_json().unwrap();
        let back = RepFile::from_json(&text).unwrap().load().unwrap();
        assert_eq!(back.rep.dim(), 2);
        assert!(back.rep.images()[0].distance(&loaded.rep.images()[0]) == 0.0);
        assert_eq!(back.meridian.unwrap().letters(), &[1, -1, 1]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(RepFile::from_json("{").is_err());
        // Wrong matrix shape.
        let text = r#"{
            "n": 2,
            "presentation": { "generators": ["a"], "relators": [] },
            "images": { "a": [[[1.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]] },
            "tol": 1e-9
        }"#;
        assert!(RepFile::from_json(text).unwrap().load().is_err());
        // Missing generator image.
        let text = r#"{
            "n": 2,
            "presentation": { "generators": ["a", "b"], "relators": [] },
            "images": { "a": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]] },
            "tol": 1e-9
        }"#;
        assert!(RepFile::from_json(text).unwrap().load().is_err());
    }

    #[test]
    fn decoration_round_trip() {
        let loaded = sample_file().load().unwrap();
        let flag = Flag::standard(2);
        let out = RepFile::from_representation(&loaded.rep, None, None, Some(&flag));
        let back = RepFile::from_json(&out.to_json().unwrap()).unwrap().load().unwrap();
        let f = back.decoration.unwrap();
        assert_eq!(f.dim(), 2);
        assert!((f.basis()[(0, 0)] - C64::ONE).norm() < 1e-15);
        let _ = DEFAULT_TOL;
    }
}
