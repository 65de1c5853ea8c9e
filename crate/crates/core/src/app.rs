//! Batch front end: configuration files, parameter sweeps, reports,
//! fibering tables and record certification.
//!
//! A run configuration is TOML with four sections:
//!
//! ```toml
//! [domain]
//! shape = "box"          # or "annulus" with delta0 = 0.45
//! dimension = 3
//! resolution = 17
//!
//! [boundary]
//! kind = "constant"      # "bump" (direction, width, amplitude) or "table" (path)
//! value = 1.0
//!
//! [sweep]
//! lambda = [0.5]         # multiples of lambda1 unless lambda_scale = "absolute"
//! mu = [0.01]            # a list, a number or { start, stop, count }
//! searches = ["nplus", "nminus"]
//!
//! [output]
//! dir = "out"
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{FiberingProfile, Params};
use crate::grid::{build_domain, read_field_dump, write_field_dump, Domain, DomainSpec, Shape, SpectralData};
use crate::lift::{solve_lift, BoundaryData, HarmonicLift};
use crate::nehari::{find_roots, NehariKind};
use crate::solve::{
    evaluate_record, lattice_directions, minimax_gamma, multistart_nminus, solve_nminus_default, solve_nplus_default,
    ContinuationOptions, ExistenceRow, MinimaxOutcome, RecordSummary, SeedKind, SolutionRecord, SolverOptions,
    DEDUP_DISTANCE,
};
use crate::verify::{certify_solution, nonexistence_certificate, nonexistence_probes, threshold_report, Certificate};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "BNVAR_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`] when it is set.
pub fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} = '{raw}' is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Search {
    Nplus,
    Nminus,
    Multistart,
    Minimax,
    MuStar,
}

impl Search {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "nplus" => Search::Nplus,
            "nminus" => Search::Nminus,
            "multistart" => Search::Multistart,
            "minimax" => Search::Minimax,
            "mu_star" => Search::MuStar,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    Constant(f64),
    Bump {
        direction: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    Table(PathBuf),
}

impl BoundarySpec {
    pub fn resolve(&self, domain: &Domain) -> Result<BoundaryData> {
        Ok(match self {
            BoundarySpec::Constant(c) => BoundaryData::Constant(*c),
            BoundarySpec::Bump {
                direction,
                width,
                amplitude,
            } => BoundaryData::BumpOnBoundary {
                direction: direction.clone(),
                width: *width,
                amplitude: *amplitude,
            },
            BoundarySpec::Table(path) => BoundaryData::load_node_table(path, domain)?,
        })
    }
}

/// λ as written in the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaValue {
    /// Multiple of λ₁.
    Relative(f64),
    Absolute(f64),
}

impl LambdaValue {
    pub fn resolve(self, lambda1: f64) -> f64 {
        match self {
            LambdaValue::Relative(r) => r * lambda1,
            LambdaValue::Absolute(a) => a,
        }
    }
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub boundary: BoundarySpec,
    pub lambdas: Vec<LambdaValue>,
    pub mus: Vec<f64>,
    pub searches: BTreeSet<Search>,
    pub epsilons: Vec<f64>,
    pub directions: usize,
    pub seed: u64,
    pub mu_start: f64,
    pub output_dir: PathBuf,
    pub write_fields: bool,
    /// Verbatim config text, copied into the output directory.
    pub text: String,
    pub source: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: RawDomain,
    boundary: RawBoundary,
    sweep: RawSweep,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    shape: String,
    dimension: usize,
    resolution: usize,
    sides: Option<Vec<f64>>,
    delta0: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    kind: String,
    value: Option<f64>,
    direction: Option<Vec<f64>>,
    width: Option<f64>,
    amplitude: Option<f64>,
    path: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Values {
    One(f64),
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Values {
    fn expand(&self) -> Vec<f64> {
        match self {
            Values::One(x) => vec![*x],
            Values::List(v) => v.clone(),
            Values::Range { start, stop, count } => match count {
                0 => vec![],
                1 => vec![*start],
                n => (0..*n)
                    .map(|k| start + (stop - start) * k as f64 / (*n - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    lambda: Values,
    lambda_scale: Option<String>,
    mu: Values,
    searches: Vec<String>,
    epsilons: Option<Vec<f64>>,
    directions: Option<usize>,
    seed: Option<u64>,
    mu_start: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    fields: Option<bool>,
}

/// Line of `key` inside `[section]`, else of the section header, else 1.
fn locate(text: &str, section: &str, key: Option<&str>) -> usize {
    let mut current = String::new();
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some(k) = key {
                if let Some((lhs, _)) = t.split_once('=') {
                    if lhs.trim() == k {
                        return i + 1;
                    }
                }
            }
        }
    }
    header.unwrap_or(1)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses and validates; every error carries the offending line.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            err(line, e.message().trim().to_string())
        })?;
        let at = |section: &str, key: &str, message: String| err(locate(text, section, Some(key)), message);

        let d = &raw.domain;
        let shape = match d.shape.as_str() {
            "box" => Shape::Box {
                sides: d.sides.clone().unwrap_or_else(|| vec![1.0; d.dimension]),
            },
            "annulus" => Shape::AnnulusD {
                delta0: d
                    .delta0
                    .ok_or_else(|| at("domain", "shape", "annulus needs delta0".into()))?,
            },
            other => return Err(at("domain", "shape", format!("unknown shape '{other}' (box, annulus)"))),
        };
        if !(3..=5).contains(&d.dimension) {
            return Err(at(
                "domain",
                "dimension",
                format!("dimension {} outside 3..=5", d.dimension),
            ));
        }
        if d.resolution < 4 {
            return Err(at(
                "domain",
                "resolution",
                format!("resolution {} below 4", d.resolution),
            ));
        }
        if let Shape::Box { sides } = &shape {
            if sides.len() != d.dimension || sides.iter().any(|s| !(*s > 0.0)) {
                return Err(at("domain", "sides", "sides must be N positive lengths".into()));
            }
        }
        if let Shape::AnnulusD { delta0 } = shape {
            if !(delta0 > 0.0 && delta0 < 0.5) {
                return Err(at("domain", "delta0", format!("delta0 = {delta0} outside (0, 1/2)")));
            }
        }
        let domain = DomainSpec {
            shape,
            dimension: d.dimension,
            resolution: d.resolution,
        };

        let b = &raw.boundary;
        let boundary = match b.kind.as_str() {
            "constant" => {
                let c = b.value.unwrap_or(1.0);
                if !(c > 0.0) {
                    return Err(at("boundary", "value", format!("constant data {c} must be > 0")));
                }
                BoundarySpec::Constant(c)
            }
            "bump" => {
                let direction = b
                    .direction
                    .clone()
                    .ok_or_else(|| at("boundary", "kind", "bump needs direction".into()))?;
                if direction.len() != d.dimension {
                    return Err(at("boundary", "direction", "direction needs N components".into()));
                }
                BoundarySpec::Bump {
                    direction,
                    width: b.width.unwrap_or(0.5),
                    amplitude: b.amplitude.unwrap_or(1.0),
                }
            }
            "table" => {
                let p = b
                    .path
                    .as_ref()
                    .ok_or_else(|| at("boundary", "kind", "table needs path".into()))?;
                let base = path.parent().unwrap_or(Path::new("."));
                BoundarySpec::Table(base.join(p))
            }
            other => {
                return Err(at(
                    "boundary",
                    "kind",
                    format!("unknown boundary kind '{other}' (constant, bump, table)"),
                ))
            }
        };

        let s = &raw.sweep;
        let relative = match s.lambda_scale.as_deref() {
            None | Some("relative") => true,
            Some("absolute") => false,
            Some(other) => {
                return Err(at(
                    "sweep",
                    "lambda_scale",
                    format!("lambda_scale '{other}' is neither relative nor absolute"),
                ))
            }
        };
        let lambda_values = s.lambda.expand();
        if lambda_values.is_empty() || lambda_values.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(at("sweep", "lambda", "lambda values must be finite and > 0".into()));
        }
        let lambdas = lambda_values
            .into_iter()
            .map(|l| {
                if relative {
                    LambdaValue::Relative(l)
                } else {
                    LambdaValue::Absolute(l)
                }
            })
            .collect();
        let mus = s.mu.expand();
        if mus.is_empty() || mus.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(at("sweep", "mu", "mu values must be finite and >= 0".into()));
        }
        if s.searches.is_empty() {
            return Err(at("sweep", "searches", "searches must name at least one search".into()));
        }
        let mut searches = BTreeSet::new();
        for name in &s.searches {
            let search = Search::parse(name).ok_or_else(|| {
                at(
                    "sweep",
                    "searches",
                    format!("unknown search '{name}' (nplus, nminus, multistart, minimax, mu_star)"),
                )
            })?;
            searches.insert(search);
        }
        let annulus = matches!(domain.shape, Shape::AnnulusD { .. });
        if (searches.contains(&Search::Multistart) || searches.contains(&Search::Minimax)) && !annulus {
            return Err(at(
                "sweep",
                "searches",
                "multistart and minimax need shape = \"annulus\"".into(),
            ));
        }
        if searches.contains(&Search::Multistart) && !searches.contains(&Search::Nplus) {
            return Err(at("sweep", "searches", "multistart needs nplus".into()));
        }
        if searches.contains(&Search::Minimax)
            && !(searches.contains(&Search::Nplus) && searches.contains(&Search::Nminus))
        {
            return Err(at("sweep", "searches", "minimax needs nplus and nminus".into()));
        }
        let epsilons = s.epsilons.clone().unwrap_or_else(|| vec![0.1]);
        if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(at("sweep", "epsilons", "epsilons must lie in (0, 1)".into()));
        }
        let directions = s.directions.unwrap_or(2 * d.dimension);
        if directions == 0 {
            return Err(at("sweep", "directions", "directions must be positive".into()));
        }
        let mu_start = s.mu_start.unwrap_or(1e-3);
        if !(mu_start > 0.0) {
            return Err(at("sweep", "mu_start", "mu_start must be > 0".into()));
        }
        let out = raw.output.dir.clone().unwrap_or_else(|| "bnvar-out".into());
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self {
            domain,
            boundary,
            lambdas,
            mus,
            searches,
            epsilons,
            directions,
            seed: s.seed.unwrap_or(0),
            mu_start,
            output_dir: base.join(out),
            write_fields: raw.output.fields.unwrap_or(true),
            text: text.to_string(),
            source: path.to_path_buf(),
        })
    }
}

/// Domain, spectral data and lift shared by every cell of a run.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub domain: Arc<Domain>,
    pub spectral: Arc<SpectralData>,
    pub lift: Arc<HarmonicLift>,
}

impl RunContext {
    pub fn build(domain: &DomainSpec, boundary: &BoundarySpec) -> Result<Self> {
        let domain = build_domain(domain.clone())?;
        let spectral = SpectralData::compute(&domain)?;
        let g = boundary.resolve(&domain)?;
        let lift = Arc::new(solve_lift(&g, &domain)?);
        Ok(Self { domain, spectral, lift })
    }

    pub fn params(&self, lambda: f64, mu: f64) -> Result<Params> {
        Params::new(lambda, mu, Arc::clone(&self.spectral), Arc::clone(&self.lift))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Solved,
    Nonexistence,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub index: usize,
    pub lambda: f64,
    pub lambda_over_lambda1: f64,
    pub mu: f64,
    pub status: CellStatus,
    pub m_plus: Option<f64>,
    pub m_minus: Option<f64>,
    pub distinct_solutions: usize,
    pub certified: usize,
    pub minimax: String,
    /// Record files relative to the run directory.
    pub records: Vec<String>,
    pub messages: Vec<String>,
}

/// `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dimension: usize,
    pub lambda1: f64,
    pub sobolev_s: f64,
    pub bubble_level: f64,
    pub cells: Vec<CellSummary>,
    pub existence: Vec<ExistenceRow>,
}

/// Record file: the summary plus where its config lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    #[serde(flatten)]
    pub record: RecordSummary,
    /// Config path relative to the record file.
    pub config: String,
    pub certified: bool,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    lambda: f64,
    lambda_over_lambda1: f64,
    mu: f64,
    status: CellStatus,
    m_plus: Option<f64>,
    m_minus: Option<f64>,
    bubble_level: f64,
    distinct_solutions: usize,
    certified: usize,
    minimax: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExistenceCsvRow {
    lambda: f64,
    lambda_over_lambda1: f64,
    mu_star: f64,
    solves: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchCsvRow {
    lambda: f64,
    mu: f64,
    energy_plus: f64,
    energy_minus: Option<f64>,
    converged_plus: bool,
    converged_minus: bool,
    certified_plus: bool,
    certified_minus: bool,
}

struct CellOutput {
    summary: CellSummary,
    /// (file stem, record, certificate)
    records: Vec<(SolutionRecord, Certificate)>,
    extra: Vec<(String, String)>,
}

fn solve_cell(ctx: &RunContext, cfg: &RunConfig, index: usize, lambda: f64, mu: f64) -> Result<CellOutput> {
    let lambda1 = ctx.spectral.lambda1;
    let p = ctx.params(lambda, mu)?;
    let mut summary = CellSummary {
        index,
        lambda,
        lambda_over_lambda1: lambda / lambda1,
        mu,
        status: CellStatus::Solved,
        m_plus: None,
        m_minus: None,
        distinct_solutions: 0,
        certified: 0,
        minimax: "skipped".into(),
        records: Vec::new(),
        messages: Vec::new(),
    };
    let mut extra = Vec::new();
    if lambda >= lambda1 {
        summary.status = CellStatus::Nonexistence;
        let cert = nonexistence_certificate(&p, &nonexistence_probes(&p))?;
        summary.messages.push(format!(
            "nonexistence certificate {}",
            if cert.overall { "passed" } else { "did not pass" }
        ));
        extra.push(("nonexistence.json".into(), serde_json::to_string_pretty(&cert)?));
        return Ok(CellOutput {
            summary,
            records: Vec::new(),
            extra,
        });
    }
    let opts = SolverOptions::default();
    let mut found: Vec<SolutionRecord> = Vec::new();
    let mut plus = None;
    let mut minus = None;
    if cfg.searches.contains(&Search::Nplus) {
        match solve_nplus_default(&p, &opts) {
            Ok(r) => {
                plus = Some(r.clone());
                found.push(r);
            }
            Err(e) => summary.messages.push(format!("nplus: {e}")),
        }
    }
    if cfg.searches.contains(&Search::Nminus) {
        match solve_nminus_default(&p, &opts) {
            Ok(r) => {
                minus = Some(r.clone());
                found.push(r);
            }
            Err(e) => summary.messages.push(format!("nminus: {e}")),
        }
    }
    if cfg.searches.contains(&Search::Multistart) {
        if let Some(vp) = &plus {
            let dirs = lattice_directions(cfg.domain.dimension, cfg.directions);
            for eps in &cfg.epsilons {
                match multistart_nminus(&p, vp, &dirs, *eps, &opts) {
                    Ok(rep) => {
                        for (k, o) in rep.outcomes.iter().enumerate() {
                            if let Err(e) = o {
                                summary
                                    .messages
                                    .push(format!("multistart eps {eps} direction {k}: {e}"));
                            }
                        }
                        found.extend(rep.records);
                    }
                    Err(e) => summary.messages.push(format!("multistart eps {eps}: {e}")),
                }
            }
        }
    }
    if cfg.searches.contains(&Search::Minimax) {
        if let (Some(vp), Some(vm)) = (&plus, &minus) {
            let eps = cfg.epsilons[cfg.epsilons.len() - 1];
            match minimax_gamma(&p, vp.energy, vm.energy, eps, &opts) {
                Ok(MinimaxOutcome::Found { record, .. }) => {
                    summary.minimax = "found".into();
                    found.push(record);
                }
                Ok(MinimaxOutcome::NotFound { reason, .. }) => {
                    summary.minimax = "not_found".into();
                    summary.messages.push(format!("minimax: {reason}"));
                }
                Err(e) => {
                    summary.minimax = "error".into();
                    summary.messages.push(format!("minimax: {e}"));
                }
            }
        }
    }
    let mut distinct: Vec<SolutionRecord> = Vec::new();
    for r in found {
        if !distinct
            .iter()
            .any(|o| o.v.add_scaled(-1.0, &r.v).h1_norm() < DEDUP_DISTANCE)
        {
            distinct.push(r);
        }
    }
    summary.m_plus = plus.as_ref().map(|r| r.energy);
    summary.m_minus = distinct
        .iter()
        .filter(|r| r.nehari_class.kind == NehariKind::Minus && r.seed != SeedKind::Minimax)
        .map(|r| r.energy)
        .reduce(f64::min);
    summary.distinct_solutions = distinct.len();
    let records: Vec<(SolutionRecord, Certificate)> = distinct
        .into_iter()
        .map(|r| {
            let c = certify_solution(&r, &p, summary.m_plus);
            (r, c)
        })
        .collect();
    summary.certified = records.iter().filter(|(_, c)| c.overall).count();
    if plus.is_some() && minus.is_some() {
        let all: Vec<SolutionRecord> = records.iter().map(|(r, _)| r.clone()).collect();
        let t = threshold_report(&p, &all)?;
        extra.push(("thresholds.json".into(), serde_json::to_string_pretty(&t)?));
    }
    if records.is_empty() {
        summary.status = CellStatus::Failed;
    }
    Ok(CellOutput {
        summary,
        records,
        extra,
    })
}

fn failed_cell(index: usize, lambda: f64, lambda1: f64, mu: f64, message: String) -> CellOutput {
    CellOutput {
        summary: CellSummary {
            index,
            lambda,
            lambda_over_lambda1: lambda / lambda1,
            mu,
            status: CellStatus::Failed,
            m_plus: None,
            m_minus: None,
            distinct_solutions: 0,
            certified: 0,
            minimax: "skipped".into(),
            records: Vec::new(),
            messages: vec![message],
        },
        records: Vec::new(),
        extra: Vec::new(),
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".into()
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Executes every `(λ, μ)` cell of the config in parallel and writes the
/// run directory. A panicking cell is recorded as failed.
pub fn run(cfg: &RunConfig) -> Result<RunManifest> {
    run_with_context(cfg, &RunContext::build(&cfg.domain, &cfg.boundary)?)
}

pub fn run_with_context(cfg: &RunConfig, ctx: &RunContext) -> Result<RunManifest> {
    let lambda1 = ctx.spectral.lambda1;
    let out = &cfg.output_dir;
    fs::create_dir_all(out.join("cells"))?;
    fs::write(out.join("config.toml"), &cfg.text)?;

    let cells: Vec<(usize, f64, f64)> = cfg
        .lambdas
        .iter()
        .flat_map(|l| cfg.mus.iter().map(move |m| (l.resolve(lambda1), *m)))
        .enumerate()
        .map(|(i, (l, m))| (i, l, m))
        .collect();
    let outputs: Vec<CellOutput> = cells
        .par_iter()
        .map(
            |&(i, l, m)| match catch_unwind(AssertUnwindSafe(|| solve_cell(ctx, cfg, i, l, m))) {
                Ok(Ok(o)) => o,
                Ok(Err(e)) => failed_cell(i, l, lambda1, m, e.to_string()),
                Err(payload) => failed_cell(i, l, lambda1, m, format!("panic: {}", panic_message(payload))),
            },
        )
        .collect();

    let mut summaries = Vec::new();
    for mut o in outputs {
        let dir_name = format!("cell_{:04}", o.summary.index);
        let dir = out.join("cells").join(&dir_name);
        fs::create_dir_all(&dir)?;
        for (k, (rec, cert)) in o.records.iter().enumerate() {
            let stem = format!("record_{k}");
            let mut summary = rec.summary();
            if cfg.write_fields {
                let name = format!("{stem}.field");
                write_field_dump(&rec.v, BufWriter::new(fs::File::create(dir.join(&name))?))?;
                summary.field = Some(name);
            }
            let file = RecordFile {
                record: summary,
                config: "../../config.toml".into(),
                certified: cert.overall,
            };
            fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&file)?)?;
            fs::write(
                dir.join(format!("{stem}.certificate.json")),
                serde_json::to_string_pretty(cert)?,
            )?;
            o.summary.records.push(format!("cells/{dir_name}/{stem}.json"));
        }
        for (name, body) in &o.extra {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("cell.json"), serde_json::to_string_pretty(&o.summary)?)?;
        summaries.push(o.summary);
    }
    let level = ctx.spectral.bubble_level();
    let rows: Vec<SweepRow> = summaries
        .iter()
        .map(|s| SweepRow {
            lambda: s.lambda,
            lambda_over_lambda1: s.lambda_over_lambda1,
            mu: s.mu,
            status: s.status,
            m_plus: s.m_plus,
            m_minus: s.m_minus,
            bubble_level: level,
            distinct_solutions: s.distinct_solutions,
            certified: s.certified,
            minimax: s.minimax.clone(),
        })
        .collect();
    write_csv(&out.join("sweep.csv"), &rows)?;

    let mut existence = Vec::new();
    if cfg.searches.contains(&Search::MuStar) {
        let base = ctx.params(0.0, 0.0)?;
        let copts = ContinuationOptions {
            mu_start: cfg.mu_start,
            ..ContinuationOptions::default()
        };
        let lambdas: Vec<f64> = cfg
            .lambdas
            .iter()
            .map(|l| l.resolve(lambda1))
            .filter(|l| *l < lambda1)
            .collect();
        existence = lambdas
            .par_iter()
            .map(|l| crate::solve::estimate_mu_star(&base, *l, &copts))
            .collect::<Vec<_>>()
            .into_iter()
            .zip(&lambdas)
            .filter_map(|(r, l)| match r {
                Ok(row) => Some(row),
                Err(e) => {
                    eprintln!("mu_star at lambda = {l}: {e}");
                    None
                }
            })
            .collect();
        write_existence(out, &existence, lambda1)?;
    }
    let manifest = RunManifest {
        dimension: cfg.domain.dimension,
        lambda1,
        sobolev_s: ctx.spectral.sobolev_s,
        bubble_level: level,
        cells: summaries,
        existence,
    };
    fs::write(out.join("run.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn write_existence(out: &Path, rows: &[ExistenceRow], lambda1: f64) -> Result<()> {
    let ex: Vec<ExistenceCsvRow> = rows
        .iter()
        .map(|r| ExistenceCsvRow {
            lambda: r.lambda,
            lambda_over_lambda1: r.lambda / lambda1,
            mu_star: r.mu_star,
            solves: r.solves,
        })
        .collect();
    write_csv(&out.join("existence.csv"), &ex)?;
    let br: Vec<BranchCsvRow> = rows
        .iter()
        .flat_map(|r| {
            r.branch.iter().map(move |b| BranchCsvRow {
                lambda: r.lambda,
                mu: b.mu,
                energy_plus: b.energy_plus,
                energy_minus: b.energy_minus,
                converged_plus: b.converged_plus,
                converged_minus: b.converged_minus,
                certified_plus: b.certified_plus,
                certified_minus: b.certified_minus,
            })
        })
        .collect();
    write_csv(&out.join("branch.csv"), &br)
}

#[derive(Debug, Serialize)]
struct HeatmapRow {
    lambda: f64,
    lambda_over_lambda1: f64,
    mu: f64,
    status: CellStatus,
    distinct_solutions: usize,
    certified: usize,
}

#[derive(Debug, Serialize)]
struct BarycenterRow {
    lambda: f64,
    mu: f64,
    record: String,
    class: NehariKind,
    energy: f64,
    seed: String,
    barycenter: String,
    gradient_direction: String,
}

fn seed_label(seed: &SeedKind) -> String {
    match seed {
        SeedKind::Bubble { direction } => format!("bubble({})", join_vec(direction)),
        other => format!("{other:?}"),
    }
}

fn join_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

/// Reads `run.json` and the record files of a finished run, writes
/// `heatmap.csv`, `branches.csv`, `mu_star.csv` and `barycenters.csv`, and
/// returns a short text summary.
pub fn report(dir: &Path) -> Result<String> {
    let manifest_path = dir.join("run.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Incomplete(format!("{}: {e}", manifest_path.display())))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::Incomplete(format!("{}: {e}", manifest_path.display())))?;
    let heat: Vec<HeatmapRow> = m
        .cells
        .iter()
        .map(|c| HeatmapRow {
            lambda: c.lambda,
            lambda_over_lambda1: c.lambda_over_lambda1,
            mu: c.mu,
            status: c.status,
            distinct_solutions: c.distinct_solutions,
            certified: c.certified,
        })
        .collect();
    write_csv(&dir.join("heatmap.csv"), &heat)?;
    let mut bary = Vec::new();
    for c in &m.cells {
        for rel in &c.records {
            let path = dir.join(rel);
            let t = fs::read_to_string(&path).map_err(|e| Error::Incomplete(format!("{}: {e}", path.display())))?;
            let r: RecordFile =
                serde_json::from_str(&t).map_err(|e| Error::Incomplete(format!("{}: {e}", path.display())))?;
            bary.push(BarycenterRow {
                lambda: c.lambda,
                mu: c.mu,
                record: rel.clone(),
                class: r.record.class,
                energy: r.record.energy,
                seed: seed_label(&r.record.seed),
                barycenter: join_vec(&r.record.barycenter),
                gradient_direction: join_vec(&r.record.gradient_direction),
            });
        }
    }
    write_csv(&dir.join("barycenters.csv"), &bary)?;
    let ms: Vec<ExistenceCsvRow> = m
        .existence
        .iter()
        .map(|r| ExistenceCsvRow {
            lambda: r.lambda,
            lambda_over_lambda1: r.lambda / m.lambda1,
            mu_star: r.mu_star,
            solves: r.solves,
        })
        .collect();
    write_csv(&dir.join("mu_star.csv"), &ms)?;
    let branches: Vec<BranchCsvRow> = m
        .existence
        .iter()
        .flat_map(|r| {
            r.branch.iter().map(move |b| BranchCsvRow {
                lambda: r.lambda,
                mu: b.mu,
                energy_plus: b.energy_plus,
                energy_minus: b.energy_minus,
                converged_plus: b.converged_plus,
                converged_minus: b.converged_minus,
                certified_plus: b.certified_plus,
                certified_minus: b.certified_minus,
            })
        })
        .collect();
    write_csv(&dir.join("branches.csv"), &branches)?;

    let count = |s: CellStatus| m.cells.iter().filter(|c| c.status == s).count();
    let mut s = format!(
        "N = {}, lambda1 = {:?}, S = {:?}, S^(N/2)/N = {:?}\ncells: {} (solved {}, nonexistence {}, failed {})\nrecords: {} ({} certified)\n",
        m.dimension,
        m.lambda1,
        m.sobolev_s,
        m.bubble_level,
        m.cells.len(),
        count(CellStatus::Solved),
        count(CellStatus::Nonexistence),
        count(CellStatus::Failed),
        bary.len(),
        m.cells.iter().map(|c| c.certified).sum::<usize>()
    );
    for c in &m.cells {
        s.push_str(&format!(
            "  lambda/lambda1 = {:<8} mu = {:<8} {:<13} m+ = {:<24} m- = {:<24} solutions = {} certified = {}\n",
            format!("{:.4}", c.lambda_over_lambda1),
            c.mu,
            format!("{:?}", c.status),
            c.m_plus.map_or("-".into(), |x| format!("{x:?}")),
            c.m_minus.map_or("-".into(), |x| format!("{x:?}")),
            c.distinct_solutions,
            c.certified
        ));
    }
    for r in &m.existence {
        s.push_str(&format!(
            "  mu*(lambda = {:?}) >= {:?} after {} solves\n",
            r.lambda, r.mu_star, r.solves
        ));
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProfileOptions {
    /// Overrides the first λ of the config (absolute value).
    pub lambda: Option<f64>,
    /// Overrides the first μ of the config.
    pub mu: Option<f64>,
    pub samples: Option<usize>,
    pub t_max: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ProfileRow {
    t: f64,
    #[serde(rename = "T")]
    value: f64,
    #[serde(rename = "dT")]
    first: f64,
    #[serde(rename = "d2T")]
    second: f64,
}

/// `(t, T, T', T'')` table of the fibering map of the ray in `ray_file`, as
/// CSV text.
pub fn fibering_profile(config: &Path, ray_file: &Path, opts: &ProfileOptions) -> Result<String> {
    let cfg = RunConfig::load(config)?;
    let ctx = RunContext::build(&cfg.domain, &cfg.boundary)?;
    let lambda = opts
        .lambda
        .unwrap_or_else(|| cfg.lambdas[0].resolve(ctx.spectral.lambda1));
    let mu = opts.mu.unwrap_or(cfg.mus[0]);
    let p = ctx.params(lambda, mu)?;
    let v = read_field_dump(&ctx.domain, BufReader::new(fs::File::open(ray_file)?))?;
    let prof = FiberingProfile::new(&v, &p)?;
    let t_max = match opts.t_max {
        Some(t) => t,
        None => match find_roots(&v, &p) {
            Ok(r) => 1.5 * r.t_minus,
            Err(_) => prof.t0().map(|t| 4.0 * t).unwrap_or(1.0),
        },
    };
    if !(t_max > 0.0) {
        return Err(Error::Argument(format!("t_max = {t_max} must be > 0")));
    }
    let n = opts.samples.unwrap_or(201).max(2);
    let mut w = csv::Writer::from_writer(Vec::new());
    for k in 0..n {
        let t = t_max * k as f64 / (n - 1) as f64;
        let f = prof.eval(t);
        w.serialize(ProfileRow {
            t,
            value: f.value,
            first: f.first,
            second: f.second,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Argument(e.to_string()))
}

/// Re-certifies a record file from its field dump and config. The energy
/// gap uses an N⁺ record found next to it, when there is one.
pub fn certify(record_path: &Path) -> Result<Certificate> {
    let text = fs::read_to_string(record_path)?;
    let file: RecordFile = serde_json::from_str(&text)?;
    let base = record_path.parent().unwrap_or(Path::new("."));
    let field = file
        .record
        .field
        .as_ref()
        .ok_or_else(|| Error::Incomplete("record has no field dump (set output.fields = true)".into()))?;
    let cfg = RunConfig::load(&base.join(&file.config))?;
    let ctx = RunContext::build(&cfg.domain, &cfg.boundary)?;
    let p = ctx.params(file.record.lambda, file.record.mu)?;
    let v = read_field_dump(&ctx.domain, BufReader::new(fs::File::open(base.join(field))?))?;
    let mut rec = evaluate_record(v, &p, file.record.seed.clone(), file.record.iterations);
    rec.energy = file.record.energy;
    let m_plus = if file.record.class == NehariKind::Minus {
        sibling_plus_energy(base, record_path)
    } else {
        None
    };
    Ok(certify_solution(&rec, &p, m_plus))
}

fn sibling_plus_energy(dir: &Path, own: &Path) -> Option<f64> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p != own
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("record_") && n.ends_with(".json") && !n.contains("certificate"))
        })
        .collect();
    names.sort();
    names.into_iter().find_map(|p| {
        let f: RecordFile = serde_json::from_str(&fs::read_to_string(p).ok()?).ok()?;
        (f.record.class == NehariKind::Plus).then_some(f.record.energy)
    })
}

/// Writes a field to `path` in the dump format.
pub fn save_field(field: &crate::grid::Field, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_field_dump(field, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[domain]
shape = "box"
dimension = 3
resolution = 9

[boundary]
kind = "constant"
value = 1.0

[sweep]
lambda = [0.5, 1.2]
mu = 0.01
searches = ["nplus", "nminus"]

[output]
dir = "out"
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("/tmp/cfg.toml"))
    }

    #[test]
    fn parses_base_config() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.lambdas, vec![LambdaValue::Relative(0.5), LambdaValue::Relative(1.2)]);
        assert_eq!(c.mus, vec![0.01]);
        assert!(c.searches.contains(&Search::Nplus));
        assert_eq!(c.output_dir, PathBuf::from("/tmp/out"));
    }

    #[test]
    fn errors_point_at_lines() {
        let bad = BASE.replace(r#"searches = ["nplus", "nminus"]"#, "searches = []");
        match parse(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 14),
            other => panic!("{other:?}"),
        }
        let bad = BASE.replace("dimension = 3", "dimension = 7");
        assert!(matches!(parse(&bad), Err(Error::Parse { line: 4, .. })));
        let bad = BASE.replace("value = 1.0", "value = \"one\"");
        assert!(matches!(parse(&bad), Err(Error::Parse { line: 9, .. })));
        let bad = BASE.replace("mu = 0.01", "mu = -0.01");
        assert!(matches!(parse(&bad), Err(Error::Parse { line: 13, .. })));
        let bad = BASE.replace(r#"["nplus", "nminus"]"#, r#"["multistart", "nplus"]"#);
        assert!(matches!(parse(&bad), Err(Error::Parse { line: 14, .. })));
    }

    #[test]
    fn ranges_expand() {
        let c = parse(&BASE.replace("mu = 0.01", "mu = { start = 0.0, stop = 0.02, count = 3 }")).unwrap();
        assert_eq!(c.mus, vec![0.0, 0.01, 0.02]);
        let c = parse(&BASE.replace("lambda = [0.5, 1.2]", "lambda = 10.0\nlambda_scale = \"absolute\"")).unwrap();
        assert_eq!(c.lambdas, vec![LambdaValue::Absolute(10.0)]);
    }
}
