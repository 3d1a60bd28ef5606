//! Command-line front end: corpus health reports, deformation scans to CSV,
//! eigenvalue-ratio extrapolation along rays, symmetric-power lifts, and
//! peripheral holonomy reports.
//!
//! The subcommands are thin plumbing over the library: `check-corpus` runs
//! every shipped-data invariant, `scan` drives the deformation solver over a
//! sample family and emits one CSV row per sample, `tau` tabulates the
//! eigenvalue-ratio exponents along a shrinking ray, `lift` applies the
//! symmetric-power functor to a 2x2 representation file, and `periph` prints
//! the decorated eigenvalue data and discreteness verdict of a single point.
//!
//! Contracts:
//!
//! * Scans with the same configuration and seed are byte-identical, even
//!   when grid points solve on a worker pool (`PERIPH_THREADS` caps it).
//! * Solver failures never abort a scan: the affected sample is emitted as a
//!   row whose `status` column carries a one-word failure token.
//! * Exit codes: 0 success, 1 computation failure, 2 data integrity or
//!   validation failure, 3 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus8;
use crate::defsolve::{
    rank_check, refine_to_variety, tau_estimate, DeformationProblem, SolvedPoint, SolverConfig,
};
use crate::error::{Error, Result};
use crate::flagdec::{common_flags, hol_periph, select_decoration, Flag, PeripheralHolonomy};
use crate::fpgroup::{find_commuting_words, Representation, Word};
use crate::latcrit::PeripheralClass;
use crate::repio::RepFile;
use crate::symlift::lift_rep;

/// Largest allowed chart radius: every target built from a parameter of this
/// magnitude stays within the principal-branch guard of the solver.
pub const MAX_RADIUS: f64 = 0.3;

/// Achieved-vs-target slack factor: a converged row whose eigenvalue ratios
/// miss the target by more than this multiple of the residual tolerance is
/// demoted to a non-ok status instead of being reported as clean.
pub const TARGET_SLACK: f64 = 1e2;

// -- argument surface -------------------------------------------------------

/// Deform representations of cusped-manifold groups and certify peripheral
/// discreteness from decorated eigenvalue data.
#[derive(Parser)]
#[command(name = "periph", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify the shipped representation corpus and print a health report
    CheckCorpus(CheckCorpusArgs),
    /// Deform a representation over a sample family, one CSV row per sample
    Scan(ScanArgs),
    /// Tabulate eigenvalue-ratio exponents along a shrinking ray and
    /// extrapolate them to the base point
    Tau(TauArgs),
    /// Lift a 2x2 representation through the symmetric power
    Lift(LiftArgs),
    /// Print decorated peripheral eigenvalue data and the discreteness
    /// verdict of one representation or solved target
    Periph(PeriphArgs),
}

#[derive(Args)]
struct CheckCorpusArgs {
    /// Emit the report as JSON instead of text
    #[arg(long)]
    json: bool,
    /// Check data files in this directory instead of the embedded copies
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Corpus name (geom2, geom3, rho1, rho2, rho3) or representation JSON
    /// file
    center: String,
    /// Sample family to scan
    #[arg(long, value_enum)]
    mode: ScanMode,
    /// Chart radius (at most 0.3, the principal-branch guard)
    #[arg(long, default_value_t = 0.1, value_parser = parse_radius)]
    radius: f64,
    /// Sample count: per axis in grid mode, total otherwise
    #[arg(long, default_value_t = 41, value_parser = parse_samples)]
    samples: usize,
    /// Minor pairs to report: "all" or a comma list like "1-2,1-3"
    #[arg(long, default_value = "all", value_parser = parse_pairs)]
    pairs: PairSpec,
    /// Seed for the randomized modes
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Touched eigenvalue-ratio index in single-entry mode (1-based)
    #[arg(long, default_value_t = 1)]
    entry: usize,
    /// Solver residual tolerance
    #[arg(long, default_value_t = 1e-12)]
    residual_tol: f64,
    /// Output CSV path (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

/// Deformation families. Targets are eigenvalue-ratio vectors
/// `(L_1, ..., L_{n-1})` around the base value `(1, ..., 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScanMode {
    /// Two-real-parameter slice over `[-radius, radius]^2`: parameters
    /// `(s, t)` map to `L_1 = (1+s) e^{it}`, `L_2 = conj(L_1)`
    Grid,
    /// Shrinking conjugate-pair ray `L_1 = (1+t) e^{it}`, `L_2 = conj(L_1)`
    /// at `t = radius / 2^i`, warm-chained inward
    ConjugateRay,
    /// Move one ratio entry only: `L_entry = 1 + t`, every other entry
    /// pinned at 1
    SingleEntry,
    /// Perturb the rho2 generators, project back onto the solution variety,
    /// and measure the minors and the power relation at each refined point
    Rho2Persistence,
    /// Random targets `L_k = exp(z_k)` with `z_k` uniform in the disk of the
    /// given radius
    RandomDirections,
}

#[derive(Args)]
struct TauArgs {
    /// Corpus name or representation JSON file
    center: String,
    /// Ray direction, one complex entry per eigenvalue ratio, e.g.
    /// "0.7+0.4i,-0.5+0.8i"; diagonal (all ones) when omitted
    #[arg(long, value_delimiter = ',', value_parser = parse_complex, allow_hyphen_values = true)]
    direction: Option<Vec<C64>>,
    /// Decreasing ray steps
    #[arg(long, value_delimiter = ',', default_values_t = [0.08, 0.04, 0.02, 0.01])]
    steps: Vec<f64>,
    /// Solver residual tolerance
    #[arg(long, default_value_t = 1e-12)]
    residual_tol: f64,
}

#[derive(Args)]
struct LiftArgs {
    /// Corpus name or representation JSON file (must be 2x2)
    center: String,
    /// Target dimension
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Output representation JSON path
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Args)]
struct PeriphArgs {
    /// Corpus name or representation JSON file
    center: String,
    /// Solve to this eigenvalue-ratio target first (comma list of complex
    /// entries); report the base point when omitted
    #[arg(long, value_delimiter = ',', value_parser = parse_complex, allow_hyphen_values = true)]
    target: Option<Vec<C64>>,
    /// Solver residual tolerance
    #[arg(long, default_value_t = 1e-12)]
    residual_tol: f64,
}

// -- argument value parsers ---------------------------------------------------

fn parse_radius(s: &str) -> std::result::Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if r.is_finite() && r > 0.0 && r <= MAX_RADIUS {
        Ok(r)
    } else {
        Err(format!("radius must lie in (0, {MAX_RADIUS}]"))
    }
}

fn parse_samples(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("need at least one sample".into())
    }
}

fn parse_complex(s: &str) -> std::result::Result<C64, String> {
    s.trim()
        .parse::<C64>()
        .map_err(|_| format!("{s:?} is not a complex number (write it like 1.5-0.25i)"))
}

/// Which minor index pairs a scan reports.
#[derive(Clone, Debug)]
enum PairSpec {
    /// Every pair `k < h` over the ratio indices.
    All,
    /// An explicit 1-based list.
    List(Vec<(usize, usize)>),
}

fn parse_pairs(s: &str) -> std::result::Result<PairSpec, String> {
    if s.trim() == "all" {
        return Ok(PairSpec::All);
    }
    let mut list = Vec::new();
    for part in s.split(',') {
        let (k, h) = part
            .trim()
            .split_once('-')
            .ok_or_else(|| format!("pair {part:?} must look like 1-2"))?;
        let k: usize = k.trim().parse().map_err(|e| format!("pair {part:?}: {e}"))?;
        let h: usize = h.trim().parse().map_err(|e| format!("pair {part:?}: {e}"))?;
        if k == 0 || h <= k {
            return Err(format!("pair {part:?} must satisfy 1 <= k < h"));
        }
        list.push((k, h));
    }
    if list.is_empty() {
        return Err("need at least one pair".into());
    }
    Ok(PairSpec::List(list))
}

/// Expands a pair spec against the ratio count and checks its range.
fn resolve_pairs(spec: &PairSpec, n: usize) -> Result<Vec<(usize, usize)>> {
    match spec {
        PairSpec::All => {
            let mut out = Vec::new();
            for k in 1..n {
                for h in (k + 1)..n {
                    out.push((k, h));
                }
            }
            Ok(out)
        }
        PairSpec::List(list) => {
            for &(k, h) in list {
                if h > n - 1 {
                    return Err(Error::Invalid(format!(
                        "pair {k}-{h} is out of range for dimension {n} (indices run 1..={})",
                        n - 1
                    )));
                }
            }
            Ok(list.clone())
        }
    }
}

// -- entry point --------------------------------------------------------------

/// Parses arguments, dispatches, and maps failures onto the documented exit
/// codes (0 success, 1 computation, 2 data, 3 usage).
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // --help and --version surface as parse "errors"; exit clean.
            let usage = !matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if usage { 3 } else { 0 };
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::CheckCorpus(a) => cmd_check_corpus(&a),
        Cmd::Scan(a) => cmd_scan(&a).map(|()| 0),
        Cmd::Tau(a) => cmd_tau(&a).map(|()| 0),
        Cmd::Lift(a) => cmd_lift(&a).map(|()| 0),
        Cmd::Periph(a) => cmd_periph(&a).map(|()| 0),
    }
}

// -- shared plumbing ----------------------------------------------------------

/// A subcommand subject: the representation plus whatever peripheral words
/// came with it.
struct Center {
    label: String,
    rep: Representation,
    longitude: Option<Word>,
    meridian: Option<Word>,
}

impl Center {
    /// The peripheral pair, required by everything except `lift`.
    fn words(&self) -> Result<(&Word, &Word)> {
        match (&self.longitude, &self.meridian) {
            (Some(l), Some(m)) => Ok((l, m)),
            _ => Err(Error::Invalid(format!(
                "{}: no peripheral words; the representation file must name \
                 \"longitude\" and \"meridian\"",
                self.label
            ))),
        }
    }
}

/// Resolves a center argument: one of the shipped corpus names, otherwise a
/// representation JSON path.
fn load_center(spec: &str) -> Result<Center> {
    if corpus8::NAMES.contains(&spec) {
        let named = corpus8::load_named(spec)?;
        let (longitude, meridian) = corpus8::canonical_peripheral_words();
        return Ok(Center {
            label: named.name,
            rep: named.rep,
            longitude: Some(longitude),
            meridian: Some(meridian),
        });
    }
    let file = RepFile::read(Path::new(spec)).map_err(|e| match e {
        Error::Io(_) => Error::Invalid(format!(
            "{spec:?} is neither a shipped corpus name ({:?}) nor a readable \
             representation file: {e}",
            corpus8::NAMES
        )),
        other => other,
    })?;
    let loaded = file.load()?;
    Ok(Center {
        label: file.name.clone().unwrap_or_else(|| spec.to_string()),
        rep: loaded.rep,
        longitude: loaded.longitude,
        meridian: loaded.meridian,
    })
}

/// Builds the scan worker pool, honoring the `PERIPH_THREADS` cap (default:
/// available parallelism).
fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("PERIPH_THREADS") {
        let threads: usize = raw.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
            Error::Invalid(format!("PERIPH_THREADS must be a positive integer, got {raw:?}"))
        })?;
        builder = builder.num_threads(threads);
    }
    builder.build().map_err(|e| Error::Invalid(format!("worker pool: {e}")))
}

/// Decorated peripheral holonomy of a standalone representation: decorates
/// with the common invariant flag nearest the standard one (unique whenever
/// the longitude image is regular).
fn rep_holonomy(rep: &Representation, longitude: &Word, meridian: &Word) -> Result<PeripheralHolonomy> {
    let li = rep.evaluate(longitude)?;
    let mi = rep.evaluate(meridian)?;
    let flags = common_flags(&li, &mi)?;
    let deco = select_decoration(&li, &mi, &flags, &Flag::standard(rep.dim()))?;
    hol_periph(&li, &mi, &deco.flag)
}

/// Shortest round-trip decimal form; stable across reruns, which is what
/// makes scan output byte-identical.
fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn fmt_c(z: C64) -> String {
    format!("{z}")
}

fn join_c(v: &[C64]) -> String {
    v.iter().map(|z| fmt_c(*z)).collect::<Vec<_>>().join(", ")
}

/// Per-sample generator, split by stream so the scan order (and worker
/// scheduling) cannot change any sample's draws.
fn sample_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Uniform point of the closed unit disk, by rejection from the square.
fn disk_sample(rng: &mut ChaCha20Rng) -> C64 {
    loop {
        let a = rng.random_range(-1.0..=1.0);
        let b = rng.random_range(-1.0..=1.0);
        if a * a + b * b <= 1.0 {
            return C64::new(a, b);
        }
    }
}

// -- scan ----------------------------------------------------------------------

/// One emitted scan row, reduced to the CSV field values.
struct ScanRow {
    status: String,
    target: Vec<C64>,
    achieved_l: Vec<C64>,
    achieved_m: Vec<C64>,
    deltas: Vec<f64>,
    verdict: String,
    residual: f64,
    relation_residual: Option<f64>,
}

/// Stable one-word failure tokens for the CSV status column.
fn status_token(e: &Error) -> &'static str {
    match e {
        Error::NonConvergence { .. } => "no-convergence",
        Error::Ramification { .. } => "ramification",
        Error::Continuation { .. } => "continuation",
        Error::BranchAmbiguity(_) => "branch",
        Error::FlagTie { .. } => "flag-tie",
        Error::DecorationMismatch(_) => "decoration",
        Error::AmbiguousRank { .. } => "ambiguous-rank",
        Error::Singular { .. } => "singular",
        Error::EigenNonConvergence { .. } => "eigen",
        Error::LiftAmbiguity { .. } => "lift",
        Error::NotRegular(_) => "not-regular",
        _ => "invalid",
    }
}

fn failed_row(target: Vec<C64>, n: usize, pairs: usize, status: &str) -> ScanRow {
    let nan = C64::new(f64::NAN, f64::NAN);
    ScanRow {
        status: status.to_string(),
        target,
        achieved_l: vec![nan; n - 1],
        achieved_m: vec![nan; n - 1],
        deltas: vec![f64::NAN; pairs],
        verdict: "none".into(),
        residual: f64::NAN,
        relation_residual: None,
    }
}

/// Reduces a holonomy to a row: achieved ratios, requested minors, verdict,
/// and the achieved-vs-target check that demotes drifting rows.
fn row_from_hol(
    hol: &PeripheralHolonomy,
    target: &[C64],
    residual: f64,
    relation_residual: Option<f64>,
    pairs: &[(usize, usize)],
    residual_tol: f64,
) -> Result<ScanRow> {
    let class = PeripheralClass::from_holonomy(hol)?;
    let deltas: Vec<f64> = pairs.iter().map(|&(k, h)| class.minor(k - 1, h - 1)).collect();
    let verdict = class.classify().verdict.to_string();
    let miss = hol
        .long_ratios
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    let status = if miss <= TARGET_SLACK * residual_tol { "ok" } else { "off-target" };
    Ok(ScanRow {
        status: status.into(),
        target: target.to_vec(),
        achieved_l: hol.long_ratios.clone(),
        achieved_m: hol.merid_ratios.clone(),
        deltas,
        verdict,
        residual,
        relation_residual,
    })
}

/// Solves one target and reduces it to a row; failures become non-ok rows
/// rather than aborting the scan.
fn solve_row(
    prob: &DeformationProblem,
    target: &[C64],
    warm: Option<&SolvedPoint>,
    pairs: &[(usize, usize)],
) -> (ScanRow, Option<SolvedPoint>) {
    let n = prob.dim();
    let attempt = || -> Result<(ScanRow, SolvedPoint)> {
        let p = prob.with_target(target.to_vec())?;
        let point = p.solve_continuation(warm)?;
        let hol = p.holonomy(&point)?;
        let row = row_from_hol(
            &hol,
            target,
            point.residual(),
            None,
            pairs,
            prob.config().residual_tol,
        )?;
        Ok((row, point))
    };
    match attempt() {
        Ok((row, point)) => (row, Some(point)),
        Err(e) => (failed_row(target.to_vec(), n, pairs.len(), status_token(&e)), None),
    }
}

/// Conjugate-pair target: the first ratio entry moves to `(1+s) e^{it}`, the
/// second (when present) to its conjugate, the rest stay pinned at 1.
fn conjugate_target(n: usize, s: f64, t: f64) -> Vec<C64> {
    let mut v = vec![C64::ONE; n - 1];
    v[0] = C64::from_polar(1.0 + s, t);
    if n > 2 {
        v[1] = C64::from_polar(1.0 + s, -t);
    }
    v
}

fn cmd_scan(args: &ScanArgs) -> Result<()> {
    let center = load_center(&args.center)?;
    let n = center.rep.dim();
    let pairs = resolve_pairs(&args.pairs, n)?;
    let config = SolverConfig { residual_tol: args.residual_tol, ..SolverConfig::default() };

    let rows = match args.mode {
        ScanMode::Grid => scan_grid(&center, args, &pairs, &config)?,
        ScanMode::ConjugateRay => scan_ray(&center, args, &pairs, &config)?,
        ScanMode::SingleEntry => scan_single_entry(&center, args, &pairs, &config)?,
        ScanMode::Rho2Persistence => scan_persistence(&center, args, &pairs, &config)?,
        ScanMode::RandomDirections => scan_random(&center, args, &pairs, &config)?,
    };

    let relation = args.mode == ScanMode::Rho2Persistence;
    let mut out = String::new();
    out.push_str(&csv_header(n, &pairs, relation));
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        out.push_str(&csv_row(i, row));
        out.push('\n');
    }

    if args.mode == ScanMode::Grid {
        grid_diagnostic(&rows, &pairs);
    }

    match &args.output {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

/// Builds the deformation problem once for a whole scan so every row shares
/// one frame and one conjugation slice.
fn scan_problem(center: &Center, config: &SolverConfig) -> Result<DeformationProblem> {
    let (longitude, meridian) = center.words()?;
    let n = center.rep.dim();
    DeformationProblem::new(&center.rep, longitude, meridian, vec![C64::ONE; n - 1], config.clone())
}

fn scan_grid(
    center: &Center,
    args: &ScanArgs,
    pairs: &[(usize, usize)],
    config: &SolverConfig,
) -> Result<Vec<ScanRow>> {
    let n = center.rep.dim();
    let prob = scan_problem(center, config)?;
    let m = args.samples;
    let coord = |i: usize| {
        if m == 1 {
            0.0
        } else {
            -args.radius + 2.0 * args.radius * i as f64 / (m - 1) as f64
        }
    };
    let targets: Vec<Vec<C64>> =
        (0..m * m).map(|idx| conjugate_target(n, coord(idx / m), coord(idx % m))).collect();
    let pool = worker_pool()?;
    Ok(pool.install(|| {
        targets.par_iter().map(|t| solve_row(&prob, t, None, pairs).0).collect()
    }))
}

fn scan_ray(
    center: &Center,
    args: &ScanArgs,
    pairs: &[(usize, usize)],
    config: &SolverConfig,
) -> Result<Vec<ScanRow>> {
    let n = center.rep.dim();
    let prob = scan_problem(center, config)?;
    let mut rows = Vec::with_capacity(args.samples);
    let mut warm: Option<SolvedPoint> = None;
    let mut t = args.radius;
    for _ in 0..args.samples {
        let target = conjugate_target(n, t, t);
        let (row, point) = solve_row(&prob, &target, warm.as_ref(), pairs);
        if point.is_some() {
            warm = point;
        }
        rows.push(row);
        t *= 0.5;
    }
    Ok(rows)
}

fn scan_single_entry(
    center: &Center,
    args: &ScanArgs,
    pairs: &[(usize, usize)],
    config: &SolverConfig,
) -> Result<Vec<ScanRow>> {
    let n = center.rep.dim();
    if args.entry == 0 || args.entry > n - 1 {
        return Err(Error::Invalid(format!(
            "entry must lie between 1 and {} for dimension {n}",
            n - 1
        )));
    }
    let prob = scan_problem(center, config)?;
    let mut rows = Vec::with_capacity(args.samples);
    let mut warm: Option<SolvedPoint> = None;
    for i in 0..args.samples {
        let t = args.radius * (i + 1) as f64 / args.samples as f64;
        let mut target = vec![C64::ONE; n - 1];
        target[args.entry - 1] = C64::new(1.0 + t, 0.0);
        let (row, point) = solve_row(&prob, &target, warm.as_ref(), pairs);
        if point.is_some() {
            warm = point;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn scan_random(
    center: &Center,
    args: &ScanArgs,
    pairs: &[(usize, usize)],
    config: &SolverConfig,
) -> Result<Vec<ScanRow>> {
    let n = center.rep.dim();
    let prob = scan_problem(center, config)?;
    let targets: Vec<Vec<C64>> = (0..args.samples)
        .map(|i| {
            let mut rng = sample_rng(args.seed, i);
            (0..n - 1).map(|_| (disk_sample(&mut rng) * args.radius).exp()).collect()
        })
        .collect();
    let pool = worker_pool()?;
    Ok(pool.install(|| {
        targets.par_iter().map(|t| solve_row(&prob, t, None, pairs).0).collect()
    }))
}

fn scan_persistence(
    center: &Center,
    args: &ScanArgs,
    pairs: &[(usize, usize)],
    config: &SolverConfig,
) -> Result<Vec<ScanRow>> {
    if center.label != "rho2" {
        return Err(Error::Invalid(
            "rho2-persistence scans the shipped rho2 family; pass rho2 as the center".into(),
        ));
    }
    // The perturbation is two orders below the chart radius: big enough to
    // land at a genuinely different refined point, small enough to stay in
    // the projection's convergence basin.
    let scale = args.radius * 0.01;
    let pool = worker_pool()?;
    Ok(pool.install(|| {
        (0..args.samples)
            .into_par_iter()
            .map(|i| persistence_row(center, i, args.seed, scale, config, pairs))
            .collect()
    }))
}

/// One perturb-and-project sample: refine the noisy generators back onto
/// the solution variety, then measure the minors and the power relation at
/// the refined point.
fn persistence_row(
    center: &Center,
    index: usize,
    seed: u64,
    scale: f64,
    config: &SolverConfig,
    pairs: &[(usize, usize)],
) -> ScanRow {
    let n = center.rep.dim();
    let mut rng = sample_rng(seed, index);
    let perturbed: Vec<DMatrix<C64>> = center
        .rep
        .images()
        .iter()
        .map(|g| {
            let mut m = g.data().clone();
            for v in m.iter_mut() {
                *v += scale * C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
            }
            m
        })
        .collect();
    let attempt = || -> Result<ScanRow> {
        let (longitude, meridian) = center.words()?;
        let rep = refine_to_variety(&center.rep, &perturbed, config)?;
        let hol = rep_holonomy(&rep, longitude, meridian)?;
        let relation = corpus8::rho2_relation_residual(&rep)?;
        // No externally chosen target here: the refined point's own ratios
        // fill the target columns, keeping the schema uniform.
        let target = hol.long_ratios.clone();
        row_from_hol(&hol, &target, rep.relator_residual(), Some(relation), pairs, config.residual_tol)
    };
    attempt().unwrap_or_else(|e| failed_row(vec![C64::ONE; n - 1], n, pairs.len(), status_token(&e)))
}

// -- CSV ------------------------------------------------------------------------

/// Fixed column order: sample index and status; per ratio index the target,
/// achieved L, and achieved M split into real/imaginary columns; one column
/// per requested minor pair in lexicographic order; verdict and solver
/// residual. Persistence scans append a relation-residual column.
fn csv_header(n: usize, pairs: &[(usize, usize)], relation: bool) -> String {
    let mut cols: Vec<String> = vec!["sample_index".into(), "status".into()];
    for k in 1..n {
        for name in ["target_L", "L", "M"] {
            cols.push(format!("{name}{k}_re"));
            cols.push(format!("{name}{k}_im"));
        }
    }
    for &(k, h) in pairs {
        cols.push(format!("delta_{k}_{h}"));
    }
    cols.push("verdict".into());
    cols.push("residual".into());
    if relation {
        cols.push("relation_residual".into());
    }
    cols.join(",")
}

fn csv_row(index: usize, row: &ScanRow) -> String {
    let mut fields: Vec<String> = vec![index.to_string(), row.status.clone()];
    for k in 0..row.target.len() {
        for z in [row.target[k], row.achieved_l[k], row.achieved_m[k]] {
            fields.push(fmt_f(z.re));
            fields.push(fmt_f(z.im));
        }
    }
    for d in &row.deltas {
        fields.push(fmt_f(*d));
    }
    fields.push(row.verdict.clone());
    fields.push(fmt_f(row.residual));
    if let Some(r) = row.relation_residual {
        fields.push(fmt_f(r));
    }
    fields.join(",")
}

/// Reports (to stderr, never into the CSV) a least-squares quadratic fit of
/// the first requested minor over the grid slice — a shape diagnostic for
/// its vanishing locus near the base point, deliberately not a pass/fail
/// check.
fn grid_diagnostic(rows: &[ScanRow], pairs: &[(usize, usize)]) {
    if pairs.is_empty() {
        return;
    }
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    for row in rows {
        if row.status != "ok" || !row.deltas[0].is_finite() {
            continue;
        }
        // Recover the slice parameters from the first target entry.
        let s = row.target[0].norm() - 1.0;
        let t = row.target[0].arg();
        pts.push((s, t, row.deltas[0]));
    }
    if pts.len() < 12 {
        return;
    }
    let mut a = DMatrix::<f64>::zeros(pts.len(), 6);
    let mut b = DVector::<f64>::zeros(pts.len());
    for (r, &(s, t, d)) in pts.iter().enumerate() {
        a[(r, 0)] = 1.0;
        a[(r, 1)] = s;
        a[(r, 2)] = t;
        a[(r, 3)] = s * s;
        a[(r, 4)] = s * t;
        a[(r, 5)] = t * t;
        b[r] = d;
    }
    let scale = b.norm();
    let svd = a.clone().svd(true, true);
    let Ok(c) = svd.solve(&b, 1e-13) else { return };
    let rel = if scale > 0.0 { (&a * &c - &b).norm() / scale } else { 0.0 };
    // Eigenvalues of the symmetric quadratic part [[c3, c4/2], [c4/2, c5]]:
    // opposite signs mean the fitted form vanishes on a pair of crossing
    // lines (a cone) rather than at a point.
    let mid = (c[3] + c[5]) / 2.0;
    let off = (((c[3] - c[5]) / 2.0).powi(2) + (c[4] / 2.0).powi(2)).sqrt();
    let (k, h) = pairs[0];
    eprintln!(
        "grid diagnostic: quadratic fit of delta_{k}_{h} over {} converged samples: \
         relative residual {:.3e}; quadratic-part eigenvalues {:.6e}, {:.6e}",
        pts.len(),
        rel,
        mid + off,
        mid - off
    );
}

// -- check-corpus -----------------------------------------------------------------

/// Expected per-name facts the health check verifies: whether the longitude
/// image is regular (as opposed to merely unipotent), and the complex
/// nullity of the pinned-slice variety at the point.
const CORPUS_EXPECTATIONS: [(&str, bool, usize); 5] = [
    ("geom2", true, 1),
    ("geom3", true, 2),
    ("rho1", false, 2),
    ("rho2", true, 2),
    ("rho3", true, 2),
];

/// Residual bound for the rho2 power relation in the health report.
const RELATION_BOUND: f64 = 1e-8;

#[derive(Serialize)]
struct FileHealth {
    name: String,
    sha256: String,
    ok: bool,
}

#[derive(Serialize)]
struct RepHealth {
    name: String,
    ok: bool,
    dim: usize,
    relator_residual: f64,
    longitude_unipotent: bool,
    longitude_regular: bool,
    meridian_unipotent: bool,
    meridian_regular: bool,
    nullity: usize,
    rank_gap: f64,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct CorpusReport {
    version: String,
    files: Vec<FileHealth>,
    reps: Vec<RepHealth>,
    longitude_word: String,
    longitude_rederived: bool,
    rho2_relation_residual: f64,
    ok: bool,
    failures: Vec<String>,
}

fn pinned_sha(name: &str) -> &'static str {
    corpus8::embedded_files()
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, _, sha)| *sha)
        .unwrap_or("")
}

fn cmd_check_corpus(args: &CheckCorpusArgs) -> Result<i32> {
    let mut failures: Vec<String> = Vec::new();
    let mut integrity = false;

    // Data file digests.
    let mut files = Vec::new();
    for (name, embedded, pinned) in corpus8::embedded_files() {
        let file_name = format!("{name}.json");
        let contents = match &args.data_dir {
            Some(dir) => match std::fs::read_to_string(dir.join(&file_name)) {
                Ok(text) => text,
                Err(e) => {
                    integrity = true;
                    failures.push(format!("{file_name}: {e}"));
                    files.push(FileHealth { name: file_name, sha256: "unreadable".into(), ok: false });
                    continue;
                }
            },
            None => embedded.to_string(),
        };
        let sha = corpus8::checksum_hex(contents.as_bytes());
        let ok = sha == pinned;
        if !ok {
            integrity = true;
            failures.push(format!("{file_name}: sha256 {sha} does not match the pinned digest"));
        }
        files.push(FileHealth { name: file_name, sha256: sha, ok });
    }

    // Per-representation validation.
    let mut reps = Vec::new();
    let mut geom2_rep: Option<Representation> = None;
    let mut rho2_relation = f64::NAN;
    for (name, expect_regular, expect_nullity) in CORPUS_EXPECTATIONS {
        let loaded = match (&args.data_dir, name) {
            (Some(dir), "rho1" | "rho2" | "rho3") => std::fs::read_to_string(
                dir.join(format!("{name}.json")),
            )
            .map_err(Error::from)
            .and_then(|text| corpus8::load_checked(name, &text, pinned_sha(name))),
            _ => corpus8::load_named(name),
        };
        let named = match loaded {
            Ok(named) => named,
            Err(e) => {
                if matches!(e, Error::CorpusIntegrity(_)) {
                    integrity = true;
                }
                failures.push(format!("{name}: {e}"));
                reps.push(RepHealth {
                    name: name.into(),
                    ok: false,
                    dim: 0,
                    relator_residual: f64::NAN,
                    longitude_unipotent: false,
                    longitude_regular: false,
                    meridian_unipotent: false,
                    meridian_regular: false,
                    nullity: 0,
                    rank_gap: f64::NAN,
                    notes: vec![e.to_string()],
                });
                continue;
            }
        };
        let rep = named.rep;
        let mut notes = Vec::new();
        let mut ok = true;
        let structure = match corpus8::peripheral_structure(&rep) {
            Ok(s) => s,
            Err(e) => {
                ok = false;
                notes.push(format!("peripheral structure: {e}"));
                corpus8::PeripheralStructure {
                    longitude_unipotent: false,
                    longitude_regular: false,
                    meridian_unipotent: false,
                    meridian_regular: false,
                }
            }
        };
        if structure.longitude_regular != expect_regular {
            ok = false;
            notes.push(format!(
                "longitude regularity is {}, expected {expect_regular}",
                structure.longitude_regular
            ));
        }
        let (nullity, gap) = match rank_check(&rep, &SolverConfig::default()) {
            Ok(r) => (r.nullity, r.gap),
            Err(e) => {
                ok = false;
                notes.push(format!("rank check: {e}"));
                (0, f64::NAN)
            }
        };
        if ok && nullity != expect_nullity {
            ok = false;
            notes.push(format!("nullity {nullity}, expected {expect_nullity}"));
        }
        if name == "rho2" {
            match corpus8::rho2_relation_residual(&rep) {
                Ok(r) => {
                    rho2_relation = r;
                    if !(r < RELATION_BOUND) {
                        ok = false;
                        notes.push(format!("power relation residual {r:.3e} >= {RELATION_BOUND:e}"));
                    }
                }
                Err(e) => {
                    ok = false;
                    notes.push(format!("power relation: {e}"));
                }
            }
        }
        if name == "geom2" {
            geom2_rep = Some(rep.clone());
        }
        if !ok {
            failures.push(format!("{name}: {}", notes.join("; ")));
        }
        reps.push(RepHealth {
            name: name.into(),
            ok,
            dim: rep.dim(),
            relator_residual: rep.relator_residual(),
            longitude_unipotent: structure.longitude_unipotent,
            longitude_regular: structure.longitude_regular,
            meridian_unipotent: structure.meridian_unipotent,
            meridian_regular: structure.meridian_regular,
            nullity,
            rank_gap: gap,
            notes,
        });
    }

    // The longitude word must fall out of the commuting-word search, not
    // just be asserted.
    let (longitude, meridian) = corpus8::canonical_peripheral_words();
    let longitude_rederived = match &geom2_rep {
        Some(rep) => match find_commuting_words(rep, &meridian, longitude.len()) {
            Ok(found) => found.first().map(|w| w.letters()) == Some(longitude.letters()),
            Err(e) => {
                failures.push(format!("longitude search: {e}"));
                false
            }
        },
        None => false,
    };
    if !longitude_rederived {
        failures.push("longitude word did not rederive from the commuting-word search".into());
    }

    let ok = failures.is_empty();
    let report = CorpusReport {
        version: corpus8::CORPUS_VERSION.into(),
        files,
        reps,
        longitude_word: corpus8::LONGITUDE_WORD.into(),
        longitude_rederived,
        rho2_relation_residual: rho2_relation,
        ok,
        failures,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_corpus_report(&report);
    }
    Ok(if integrity {
        2
    } else if !ok {
        1
    } else {
        0
    })
}

fn print_corpus_report(r: &CorpusReport) {
    println!("corpus version {}", r.version);
    for f in &r.files {
        println!("file {}: sha256 {} ({})", f.name, f.sha256, if f.ok { "ok" } else { "MISMATCH" });
    }
    for rep in &r.reps {
        if rep.ok {
            println!(
                "{}: dim {}, residual {:.3e}; longitude unipotent {} (regular {}), \
                 meridian unipotent {} (regular {}); nullity {} (gap {:.1e})",
                rep.name,
                rep.dim,
                rep.relator_residual,
                rep.longitude_unipotent,
                rep.longitude_regular,
                rep.meridian_unipotent,
                rep.meridian_regular,
                rep.nullity,
                rep.rank_gap
            );
        } else {
            println!("{}: FAILED: {}", rep.name, rep.notes.join("; "));
        }
    }
    println!(
        "longitude word {:?} (rederived from search: {})",
        r.longitude_word, r.longitude_rederived
    );
    println!("rho2 relation residual: {:.3e}", r.rho2_relation_residual);
    println!("{}", if r.ok { "corpus: all checks passed" } else { "corpus: FAILED" });
}

// -- tau, lift, periph ---------------------------------------------------------

fn cmd_tau(args: &TauArgs) -> Result<()> {
    let center = load_center(&args.center)?;
    let n = center.rep.dim();
    let config = SolverConfig { residual_tol: args.residual_tol, ..SolverConfig::default() };
    let prob = scan_problem(&center, &config)?;
    let direction = args.direction.clone().unwrap_or_else(|| vec![C64::ONE; n - 1]);
    let est = tau_estimate(&prob, &direction, &args.steps)?;

    println!("center: {} (dimension {n})", center.label);
    println!("direction: {}", join_c(&direction));
    for (i, s) in est.steps.iter().enumerate() {
        let taus: Vec<String> = est.per_step[i]
            .iter()
            .enumerate()
            .map(|(k, t)| format!("tau_{} = {}", k + 1, fmt_c(*t)))
            .collect();
        println!("step {}: {}", fmt_f(*s), taus.join("; "));
    }
    let taus: Vec<String> = est
        .extrapolated
        .iter()
        .enumerate()
        .map(|(k, t)| format!("tau_{} = {}", k + 1, fmt_c(*t)))
        .collect();
    println!("extrapolated: {}", taus.join("; "));
    let uncertainties: Vec<String> = est
        .uncertainty
        .iter()
        .enumerate()
        .map(|(k, u)| format!("tau_{} = {}", k + 1, fmt_f(*u)))
        .collect();
    println!("uncertainty: {}", uncertainties.join("; "));
    println!("mu = {}", fmt_c(est.mu));
    println!("im_mu = {}", fmt_f(est.mu.im));
    println!("spread = {}", fmt_f(est.spread));
    Ok(())
}

fn cmd_lift(args: &LiftArgs) -> Result<()> {
    let center = load_center(&args.center)?;
    let lifted = lift_rep(&center.rep, args.n, center.rep.residual_bound())?;
    let mut file = RepFile::from_representation(
        &lifted,
        center.meridian.as_ref(),
        center.longitude.as_ref(),
        None,
    );
    file.name = Some(format!("{}-sym{}", center.label, args.n));
    file.provenance =
        Some(format!("symmetric-power lift of {} to dimension {}", center.label, args.n));
    file.write(&args.output)?;
    println!(
        "wrote {} (dimension {}, residual {:.3e})",
        args.output.display(),
        lifted.dim(),
        lifted.relator_residual()
    );
    Ok(())
}

fn cmd_periph(args: &PeriphArgs) -> Result<()> {
    let center = load_center(&args.center)?;
    let n = center.rep.dim();
    let (longitude, meridian) = center.words()?;
    let hol = match &args.target {
        Some(target) => {
            if target.len() != n - 1 {
                return Err(Error::Invalid(format!(
                    "target needs {} entries for dimension {n}",
                    n - 1
                )));
            }
            let config = SolverConfig { residual_tol: args.residual_tol, ..SolverConfig::default() };
            let prob = DeformationProblem::new(
                &center.rep,
                longitude,
                meridian,
                target.clone(),
                config,
            )?;
            let point = prob.solve_continuation(None)?;
            println!(
                "solved to target in {} iterations, residual {:.3e}",
                point.iterations(),
                point.residual()
            );
            prob.holonomy(&point)?
        }
        None => rep_holonomy(&center.rep, longitude, meridian)?,
    };
    println!("center: {} (dimension {n})", center.label);
    println!("L: {}", join_c(&hol.long_ratios));
    println!("M: {}", join_c(&hol.merid_ratios));
    let class = PeripheralClass::from_holonomy(&hol)?;
    for k in 1..n {
        for h in (k + 1)..n {
            println!("delta_{k}_{h} = {}", fmt_f(class.minor(k - 1, h - 1)));
        }
    }
    let outcome = class.classify();
    println!(
        "largest minor {:.6e} at pair {}-{} against threshold {:.3e}",
        outcome.max_minor,
        outcome.witness.0 + 1,
        outcome.witness.1 + 1,
        outcome.tol_delta
    );
    println!("verdict: {}", outcome.verdict);
    Ok(())
}
