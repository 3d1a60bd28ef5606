//! C ABI over the periph library.
//!
//! The surface is deliberately small: opaque representation handles created
//! from the shipped corpus or from JSON, flat `(re, im)` buffers for
//! eigenvalue-ratio vectors, and status codes with a thread-local error
//! message for diagnostics. Everything a caller can reach from here is the
//! same code the CLI runs; no math is reimplemented on this side.
//!
//! Conventions:
//!
//! * Every fallible function returns [`PeriphStatus`]; `PERIPH_STATUS_OK`
//!   is zero. On any other status the thread-local message (read it with
//!   [`periph_last_error`]) describes the failure.
//! * Handles returned through `out` parameters are owned by the caller and
//!   must be released with [`periph_rep_free`]; strings with
//!   [`periph_string_free`]. A failed call never allocates.
//! * Eigenvalue-ratio buffers have one entry per ratio index, i.e. length
//!   `dim - 1`, in index order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64 as C64;
use periph::corpus8;
use periph::defsolve::{DeformationProblem, SolverConfig};
use periph::error::Error;
use periph::flagdec::{common_flags, hol_periph, select_decoration, Flag};
use periph::fpgroup::{Representation, Word};
use periph::latcrit::{PeripheralClass, Verdict};
use periph::repio::RepFile;
use periph::symlift::lift_rep;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeriphStatus {
    /// Success.
    Ok = 0,
    /// A required pointer was null or a buffer length disagreed with the
    /// handle's dimension.
    NullArgument = 1,
    /// Input rejected before any computation: bad UTF-8, unparsable JSON,
    /// unknown corpus name, malformed target.
    InvalidInput = 2,
    /// The computation itself failed (non-convergence, ramified chart,
    /// ambiguous numerical structure).
    Computation = 3,
    /// Shipped or loaded data failed validation (checksums, residual
    /// bounds, peripheral structure).
    DataIntegrity = 4,
    /// A panic crossed into the ABI layer; state is still consistent.
    Panic = 5,
}

/// One complex number as a flat pair, the buffer element of every ratio
/// vector crossing the boundary.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PeriphComplex {
    /// Real part.
    pub re: f64,
    /// Imaginary part.
    pub im: f64,
}

impl From<C64> for PeriphComplex {
    fn from(z: C64) -> Self {
        PeriphComplex { re: z.re, im: z.im }
    }
}

impl From<PeriphComplex> for C64 {
    fn from(z: PeriphComplex) -> Self {
        C64::new(z.re, z.im)
    }
}

/// Opaque handle: a validated representation together with the peripheral
/// words it was loaded with (when any) and, at solved points, the
/// decoration flag that anchors holonomy to one triangularization among
/// the several a generic point admits.
pub struct PeriphRep {
    rep: Representation,
    longitude: Option<Word>,
    meridian: Option<Word>,
    decoration: Option<Flag>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean: Vec<u8> = msg.bytes().filter(|&b| b != 0).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn status_of(e: &Error) -> PeriphStatus {
    match e {
        Error::CorpusIntegrity(_) => PeriphStatus::DataIntegrity,
        Error::Invalid(_) | Error::WordParse(_) | Error::Json(_) | Error::Io(_) => {
            PeriphStatus::InvalidInput
        }
        _ => PeriphStatus::Computation,
    }
}

fn fail(e: &Error) -> PeriphStatus {
    set_error(&e.to_string());
    status_of(e)
}

/// Runs a closure with a panic shield: the ABI never unwinds into C.
fn shielded(f: impl FnOnce() -> PeriphStatus) -> PeriphStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            PeriphStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, PeriphStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PeriphStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        PeriphStatus::InvalidInput
    })
}

unsafe fn write_handle(out: *mut *mut PeriphRep, handle: PeriphRep) -> PeriphStatus {
    if out.is_null() {
        set_error("null output pointer");
        return PeriphStatus::NullArgument;
    }
    *out = Box::into_raw(Box::new(handle));
    PeriphStatus::Ok
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn periph_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the thread-local message for the most recent failure into `buf`
/// (always NUL-terminated when `cap > 0`) and returns the full message
/// length in bytes, excluding the terminator. Call with `cap = 0` to size a
/// buffer.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null with `cap = 0`.
#[no_mangle]
pub unsafe extern "C" fn periph_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if cap > 0 && !buf.is_null() {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Loads one of the shipped corpus representations by name (geom2, geom3,
/// rho1, rho2, rho3), running every shipped-data validation.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn periph_corpus_load(
    name: *const c_char,
    out: *mut *mut PeriphRep,
) -> PeriphStatus {
    shielded(|| {
        let name = match read_str(name) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match corpus8::load_named(name) {
            Ok(named) => {
                let (longitude, meridian) = corpus8::canonical_peripheral_words();
                write_handle(
                    out,
                    PeriphRep {
                        rep: named.rep,
                        longitude: Some(longitude),
                        meridian: Some(meridian),
                        decoration: None,
                    },
                )
            }
            Err(e) => fail(&e),
        }
    })
}

/// Parses and validates a representation from JSON text (the same format
/// the CLI reads and writes). Peripheral words are carried along when the
/// file names them.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn periph_rep_from_json(
    json: *const c_char,
    out: *mut *mut PeriphRep,
) -> PeriphStatus {
    shielded(|| {
        let text = match read_str(json) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let loaded = match RepFile::from_json(text).and_then(|f| f.load()) {
            Ok(l) => l,
            Err(e) => return fail(&e),
        };
        write_handle(
            out,
            PeriphRep {
                rep: loaded.rep,
                longitude: loaded.longitude,
                meridian: loaded.meridian,
                decoration: loaded.decoration,
            },
        )
    })
}

/// Serializes a handle back to JSON. The returned string is owned by the
/// caller and must be released with [`periph_string_free`].
///
/// # Safety
/// `rep` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn periph_rep_to_json(
    rep: *const PeriphRep,
    out: *mut *mut c_char,
) -> PeriphStatus {
    shielded(|| {
        let Some(handle) = rep.as_ref() else {
            set_error("null representation handle");
            return PeriphStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null output pointer");
            return PeriphStatus::NullArgument;
        }
        let file = RepFile::from_representation(
            &handle.rep,
            handle.meridian.as_ref(),
            handle.longitude.as_ref(),
            handle.decoration.as_ref(),
        );
        match file.to_json() {
            Ok(text) => match CString::new(text) {
                Ok(s) => {
                    *out = s.into_raw();
                    PeriphStatus::Ok
                }
                Err(_) => {
                    set_error("serialized JSON contained an interior NUL");
                    PeriphStatus::Computation
                }
            },
            Err(e) => fail(&e),
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn periph_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Releases a representation handle. Null is ignored.
///
/// # Safety
/// `rep` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn periph_rep_free(rep: *mut PeriphRep) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}

/// Matrix dimension of the handle, or 0 for null.
///
/// # Safety
/// `rep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn periph_rep_dim(rep: *const PeriphRep) -> u32 {
    rep.as_ref().map_or(0, |h| h.rep.dim() as u32)
}

/// Largest relator residual of the handle, or NaN for null.
///
/// # Safety
/// `rep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn periph_rep_residual(rep: *const PeriphRep) -> f64 {
    rep.as_ref().map_or(f64::NAN, |h| h.rep.relator_residual())
}

/// Lifts a 2x2 representation through the degree-`n` symmetric power into a
/// new handle. The peripheral words carry over; any stored decoration does
/// not (its dimension would no longer match).
///
/// # Safety
/// `rep` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn periph_rep_lift(
    rep: *const PeriphRep,
    n: u32,
    out: *mut *mut PeriphRep,
) -> PeriphStatus {
    shielded(|| {
        let Some(handle) = rep.as_ref() else {
            set_error("null representation handle");
            return PeriphStatus::NullArgument;
        };
        match lift_rep(&handle.rep, n as usize, handle.rep.residual_bound()) {
            Ok(lifted) => write_handle(
                out,
                PeriphRep {
                    rep: lifted,
                    longitude: handle.longitude.clone(),
                    meridian: handle.meridian.clone(),
                    decoration: None,
                },
            ),
            Err(e) => fail(&e),
        }
    })
}

fn holonomy_ratios(handle: &PeriphRep) -> Result<(Vec<C64>, Vec<C64>), Error> {
    let (Some(longitude), Some(meridian)) = (&handle.longitude, &handle.meridian) else {
        return Err(Error::Invalid(
            "representation carries no peripheral words; load one that names \
             \"longitude\" and \"meridian\""
                .into(),
        ));
    };
    let li = handle.rep.evaluate(longitude)?;
    let mi = handle.rep.evaluate(meridian)?;
    let flags = common_flags(&li, &mi)?;
    // A stored decoration pins the chart at solved points, where several
    // triangularizations coexist and the standard reference can tie.
    let reference = match &handle.decoration {
        Some(flag) => flag.clone(),
        None => Flag::standard(handle.rep.dim()),
    };
    let deco = select_decoration(&li, &mi, &flags, &reference)?;
    let hol = hol_periph(&li, &mi, &deco.flag)?;
    Ok((hol.long_ratios, hol.merid_ratios))
}

/// Writes the decorated peripheral eigenvalue ratios of the handle into two
/// caller buffers of length `len = dim - 1` (longitude ratios into `out_l`,
/// meridian ratios into `out_m`).
///
/// # Safety
/// `rep` must be a live handle; `out_l` and `out_m` must point to `len`
/// writable elements.
#[no_mangle]
pub unsafe extern "C" fn periph_rep_holonomy(
    rep: *const PeriphRep,
    out_l: *mut PeriphComplex,
    out_m: *mut PeriphComplex,
    len: usize,
) -> PeriphStatus {
    shielded(|| {
        let Some(handle) = rep.as_ref() else {
            set_error("null representation handle");
            return PeriphStatus::NullArgument;
        };
        if out_l.is_null() || out_m.is_null() {
            set_error("null output buffer");
            return PeriphStatus::NullArgument;
        }
        if len != handle.rep.dim() - 1 {
            set_error("buffer length must equal dim - 1");
            return PeriphStatus::NullArgument;
        }
        match holonomy_ratios(handle) {
            Ok((l, m)) => {
                for (i, z) in l.into_iter().enumerate() {
                    *out_l.add(i) = z.into();
                }
                for (i, z) in m.into_iter().enumerate() {
                    *out_m.add(i) = z.into();
                }
                PeriphStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

unsafe fn read_ratios(
    l: *const PeriphComplex,
    m: *const PeriphComplex,
    len: usize,
) -> Result<PeripheralClass, PeriphStatus> {
    if l.is_null() || m.is_null() {
        set_error("null ratio buffer");
        return Err(PeriphStatus::NullArgument);
    }
    if len == 0 {
        set_error("ratio buffers must hold at least one entry");
        return Err(PeriphStatus::NullArgument);
    }
    let lv: Vec<C64> = (0..len).map(|i| C64::from(*l.add(i))).collect();
    let mv: Vec<C64> = (0..len).map(|i| C64::from(*m.add(i))).collect();
    PeripheralClass::from_ratios(&lv, &mv).map_err(|e| fail(&e))
}

/// Classifies an eigenvalue-ratio pair: sets `*out_sufficient` to 1 when
/// some log-modulus minor certifies discreteness-and-faithfulness of the
/// peripheral image, 0 otherwise, and reports the largest minor.
///
/// # Safety
/// `l` and `m` must point to `len` readable elements; the out pointers must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn periph_classify(
    l: *const PeriphComplex,
    m: *const PeriphComplex,
    len: usize,
    out_sufficient: *mut i32,
    out_max_minor: *mut f64,
) -> PeriphStatus {
    shielded(|| {
        if out_sufficient.is_null() || out_max_minor.is_null() {
            set_error("null output pointer");
            return PeriphStatus::NullArgument;
        }
        let class = match read_ratios(l, m, len) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let outcome = class.classify();
        *out_sufficient = match outcome.verdict {
            Verdict::SufficientDiscreteFaithful => 1,
            Verdict::Inconclusive => 0,
        };
        *out_max_minor = outcome.max_minor;
        PeriphStatus::Ok
    })
}

/// Integer-relation probe of the logarithm lattice: minimizes
/// `max_k |Re(p log L_k + q log M_k)|` over `0 < max(|p|, |q|) <= n_max`
/// and reports the minimum and its `(p, q)`.
///
/// # Safety
/// `l` and `m` must point to `len` readable elements; the out pointers must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn periph_lattice_oracle(
    l: *const PeriphComplex,
    m: *const PeriphComplex,
    len: usize,
    n_max: i64,
    out_min: *mut f64,
    out_p: *mut i64,
    out_q: *mut i64,
) -> PeriphStatus {
    shielded(|| {
        if out_min.is_null() || out_p.is_null() || out_q.is_null() {
            set_error("null output pointer");
            return PeriphStatus::NullArgument;
        }
        let class = match read_ratios(l, m, len) {
            Ok(c) => c,
            Err(status) => return status,
        };
        match class.lattice_oracle(n_max) {
            Ok((minimum, (p, q))) => {
                *out_min = minimum;
                *out_p = p;
                *out_q = q;
                PeriphStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Deforms the handle's representation until its longitude eigenvalue
/// ratios hit `target` (length `dim - 1`), returning the solved
/// representation as a new handle. The chart, gauge slice, and continuation
/// behavior are exactly the CLI scan's.
///
/// # Safety
/// `rep` must be a live handle; `target` must point to `len` readable
/// elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn periph_solve_to_target(
    rep: *const PeriphRep,
    target: *const PeriphComplex,
    len: usize,
    residual_tol: f64,
    out: *mut *mut PeriphRep,
) -> PeriphStatus {
    shielded(|| {
        let Some(handle) = rep.as_ref() else {
            set_error("null representation handle");
            return PeriphStatus::NullArgument;
        };
        if target.is_null() {
            set_error("null target buffer");
            return PeriphStatus::NullArgument;
        }
        if len != handle.rep.dim() - 1 {
            set_error("target length must equal dim - 1");
            return PeriphStatus::NullArgument;
        }
        let (Some(longitude), Some(meridian)) = (&handle.longitude, &handle.meridian) else {
            set_error("representation carries no peripheral words");
            return PeriphStatus::InvalidInput;
        };
        let target_v: Vec<C64> = (0..len).map(|i| C64::from(*target.add(i))).collect();
        let config = SolverConfig { residual_tol, ..SolverConfig::default() };
        let attempt = || -> Result<PeriphRep, Error> {
            let prob =
                DeformationProblem::new(&handle.rep, longitude, meridian, target_v, config)?;
            let point = prob.solve_continuation(None)?;
            Ok(PeriphRep {
                rep: prob.representation(&point)?,
                longitude: handle.longitude.clone(),
                meridian: handle.meridian.clone(),
                // Keep the chart the continuation tracked so later holonomy
                // queries land on the same triangularization it solved in.
                decoration: Some(prob.decoration(&point)?.flag),
            })
        };
        match attempt() {
            Ok(solved) => write_handle(out, solved),
            Err(e) => fail(&e),
        }
    })
}
