//! Macroreplication runner and report emission.
//!
//! A config names a base target, a list of rarity parameters `r`, the
//! methods to compare and the replication budget. Every `(method, r, rep)`
//! triple gets its own random stream, so a report depends only on the config
//! and never on how replications are scheduled across workers.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimator::{DrisResult, MethodKind, Z95};
use crate::finance::{build_loss_set, DtConvention, FinanceError, PortfolioSpec};
use crate::geometry::{CanonicalFrame, ConvexTarget, GeometryError, Polyhedron, QuadraticSuperlevel};
use crate::oracle::{self, check_bounds, BoundReport, OracleError};
use crate::sampler::RngStream;

pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_REPS: usize = 20;

pub const CSV_HEADER: [&str; 9] = [
    "method", "r", "u_mean", "u_relerr95", "p_mean", "p_relerr95", "time_sec", "vr", "er",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("report has no rows")]
    EmptyReport,
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Finance(#[from] FinanceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidConfig(msg.into())
}

/// One halfspace `normal · x >= offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Base target. Polyhedra and quadratic sets are scaled, `E_r = r E`;
/// portfolios rebuild the loss set with every threshold multiplied by `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TargetSpec {
    Polyhedron {
        halfspaces: Vec<HalfspaceSpec>,
    },
    Quadratic {
        a: f64,
        b: Vec<f64>,
        c: Vec<f64>,
        threshold: f64,
    },
    Portfolio(PortfolioSpec),
}

impl TargetSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Polyhedron { .. } => "polyhedron",
            Self::Quadratic { .. } => "quadratic",
            Self::Portfolio(_) => "portfolio",
        }
    }

    /// The target at rarity parameter `r`.
    pub fn build(&self, r: f64) -> Result<ConvexTarget, ExperimentError> {
        let set: ConvexTarget = match self {
            Self::Polyhedron { halfspaces } => {
                let pairs: Vec<(Vec<f64>, f64)> =
                    halfspaces.iter().map(|h| (h.normal.clone(), h.offset)).collect();
                ConvexTarget::from(Polyhedron::from_pairs(&pairs)?).scaled(r)?
            }
            Self::Quadratic { a, b, c, threshold } => {
                ConvexTarget::from(QuadraticSuperlevel::new(*a, b.clone(), c.clone(), *threshold)?)
                    .scaled(r)?
            }
            Self::Portfolio(spec) => build_loss_set(spec, r)?.into(),
        };
        Ok(set)
    }

    fn dt_convention(&self) -> Option<DtConvention> {
        match self {
            Self::Portfolio(spec) => Some(spec.dt_convention),
            _ => None,
        }
    }
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_reps() -> usize {
    DEFAULT_REPS
}

fn default_methods() -> Vec<MethodKind> {
    MethodKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub delta: f64,
    pub r_values: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodKind>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_reps")]
    pub n_macroreps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub emit_oracle: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid(format!("delta must be positive, got {}", self.delta)));
        }
        if self.n_macroreps < 2 {
            return Err(invalid("n_macroreps must be at least 2"));
        }
        if self.n_samples < 2 {
            return Err(invalid("n_samples must be at least 2"));
        }
        if self.r_values.is_empty() {
            return Err(invalid("r_values is empty"));
        }
        if self.r_values.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(invalid("r_values must be positive"));
        }
        if self.r_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("r_values must be strictly increasing"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods is empty"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(invalid(format!("method {m} listed twice")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the config's canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn stream(&self, method: MethodKind, r_index: usize, rep: usize) -> RngStream {
        RngStream::new(self.seed, 0).derive(&[method.tag(), r_index as u64, rep as u64])
    }
}

/// One replication, kept so coverage can be checked after the fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub u: f64,
    pub p: f64,
    pub ci_halfwidth: f64,
    pub time_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: MethodKind,
    pub r: f64,
    #[serde(with = "crate::float_serde")]
    pub u_mean: f64,
    #[serde(with = "crate::float_serde")]
    pub u_relerr95: f64,
    #[serde(with = "crate::float_serde")]
    pub p_mean: f64,
    #[serde(with = "crate::float_serde")]
    pub p_relerr95: f64,
    #[serde(with = "crate::float_serde")]
    pub time_sec: f64,
    /// Crude-MC variance of `p̂` over this method's, both across
    /// replications. Exactly 1 on MC rows; NaN without an MC row at this `r`.
    #[serde(with = "crate::float_serde")]
    pub vr: f64,
    /// `vr` times the MC-to-method mean time ratio.
    #[serde(with = "crate::float_serde")]
    pub er: f64,
    /// Mean within-run CI half-width over `p̂`.
    #[serde(with = "crate::float_serde")]
    pub asym_relerr95: f64,
    #[serde(with = "crate::float_serde")]
    pub u_sq_mean: f64,
    #[serde(with = "crate::float_serde")]
    pub p_var: f64,
    pub x1_star: f64,
    pub reps: Vec<RepOutcome>,
    pub failures: Vec<String>,
}

/// Quadrature values of `(u*, p*)` for a target of dimension at most two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub r: f64,
    pub x1_star: f64,
    pub u: f64,
    pub u_sq: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub target: String,
    pub delta: f64,
    pub n_samples: usize,
    pub n_macroreps: usize,
    /// Horizon convention of a portfolio target.
    pub dt_convention: Option<DtConvention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
    /// Bound checks on the DRIS rows, with `r` taken as the distance `x1*`.
    pub bounds: Option<BoundReport>,
    #[serde(default)]
    pub oracle: Vec<OracleRow>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn row(&self, method: MethodKind, r: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|row| row.method == method && row.r == r)
    }

    pub fn to_json(&self) -> Result<String, ExperimentError> {
        if self.rows.is_empty() {
            return Err(ExperimentError::EmptyReport);
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        if self.rows.is_empty() {
            return Err(ExperimentError::EmptyReport);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            let nums = [
                row.r,
                row.u_mean,
                row.u_relerr95,
                row.p_mean,
                row.p_relerr95,
                row.time_sec,
                row.vr,
                row.er,
            ];
            let mut record = vec![row.method.label().to_string()];
            record.extend(nums.iter().map(|v| format!("{v:e}")));
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// `.json` paths get JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> Result<String, ExperimentError> {
    match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json(),
    }
}

pub fn emit_report(
    report: &ExperimentReport,
    format: ReportFormat,
    path: &Path,
) -> Result<(), ExperimentError> {
    let text = render_report(report, format)?;
    fs::write(path, text).map_err(|source| ExperimentError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn relerr95(v: &[f64]) -> f64 {
    Z95 * sample_var(v).sqrt() / mean(v).abs()
}

fn summarize(method: MethodKind, r: f64, x1_star: f64, runs: Vec<Result<DrisResult, String>>) -> ReportRow {
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    let mut asym = Vec::new();
    for (rep, run) in runs.into_iter().enumerate() {
        match run {
            Ok(res) => {
                asym.push(res.rel_err95());
                reps.push(RepOutcome {
                    rep,
                    u: res.u_hat,
                    p: res.p_hat,
                    ci_halfwidth: res.ci_halfwidth,
                    time_sec: res.wall_time,
                });
            }
            Err(e) => failures.push(format!("rep {rep}: {e}")),
        }
    }
    let us: Vec<f64> = reps.iter().map(|o| o.u).collect();
    let ps: Vec<f64> = reps.iter().map(|o| o.p).collect();
    let u_sq: Vec<f64> = us.iter().map(|u| u * u).collect();
    let times: Vec<f64> = reps.iter().map(|o| o.time_sec).collect();
    ReportRow {
        method,
        r,
        u_mean: mean(&us),
        u_relerr95: relerr95(&us),
        p_mean: mean(&ps),
        p_relerr95: relerr95(&ps),
        time_sec: mean(&times),
        vr: f64::NAN,
        er: f64::NAN,
        asym_relerr95: mean(&asym),
        u_sq_mean: mean(&u_sq),
        p_var: sample_var(&ps),
        x1_star,
        reps,
        failures,
    }
}

fn fill_ratios(rows: &mut [ReportRow]) {
    let baselines: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|row| row.method == MethodKind::CrudeMc)
        .map(|row| (row.r, row.p_var, row.time_sec))
        .collect();
    for row in rows.iter_mut() {
        if row.method == MethodKind::CrudeMc {
            row.vr = 1.0;
            row.er = 1.0;
        } else if let Some(&(_, var_mc, time_mc)) = baselines.iter().find(|b| b.0 == row.r) {
            row.vr = var_mc / row.p_var;
            row.er = row.vr * time_mc / row.time_sec;
        }
    }
}

/// Quadrature `(u*, p*)` at every `r` for a one- or two-dimensional target.
pub fn oracle_rows(config: &ExperimentConfig) -> Result<Vec<OracleRow>, ExperimentError> {
    config
        .r_values
        .iter()
        .map(|&r| {
            let set = config.target.build(r)?;
            let x1_star = CanonicalFrame::new(&set)?.x1_star();
            let (u, p) = match set.dim() {
                1 => halfline_oracle(&set, x1_star, config.delta)?,
                2 => oracle::solve_2d(&set, config.delta)?,
                d => return Err(OracleError::Dimension(d).into()),
            };
            Ok(OracleRow {
                r,
                x1_star,
                u,
                u_sq: u * u,
                p,
            })
        })
        .collect()
}

// A one-dimensional target not containing 0 is a half-line or a bounded
// interval; only the half-line `[x1*, ∞)` has a closed-form oracle.
fn halfline_oracle(set: &ConvexTarget, x1_star: f64, delta: f64) -> Result<(f64, f64), ExperimentError> {
    let far = 1e3 * x1_star.max(1.0);
    let d_far = set.distance(&[far])?.min(set.distance(&[-far])?);
    if d_far > 0.0 {
        return Err(invalid("1-D oracle needs a half-line target"));
    }
    Ok(oracle::solve_1d(x1_star, delta)?)
}

/// Runs every `(method, r, rep)` pipeline and aggregates one row per
/// `(method, r)`, methods in config order and `r` ascending within each.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let targets: Vec<(ConvexTarget, f64)> = config
        .r_values
        .iter()
        .map(|&r| {
            let set = config.target.build(r)?;
            let x1 = CanonicalFrame::new(&set)?.x1_star();
            Ok((set, x1))
        })
        .collect::<Result<_, ExperimentError>>()?;

    let reps = config.n_macroreps;
    let jobs: Vec<(usize, usize, usize)> = (0..config.methods.len())
        .flat_map(|m| (0..targets.len()).flat_map(move |ri| (0..reps).map(move |k| (m, ri, k))))
        .collect();
    let outcomes: Vec<Result<DrisResult, String>> = jobs
        .par_iter()
        .map(|&(m, ri, k)| {
            let method = config.methods[m];
            method
                .run(&targets[ri].0, config.delta, config.n_samples, config.stream(method, ri, k))
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut outcomes = outcomes.into_iter();
    let mut rows = Vec::with_capacity(config.methods.len() * targets.len());
    for &method in &config.methods {
        for (ri, &r) in config.r_values.iter().enumerate() {
            let runs = outcomes.by_ref().take(reps).collect();
            rows.push(summarize(method, r, targets[ri].1, runs));
        }
    }
    fill_ratios(&mut rows);

    let bounds = config.methods.contains(&MethodKind::Dris).then(|| {
        let points: Vec<(f64, f64, f64)> = rows
            .iter()
            .filter(|row| row.method == MethodKind::Dris)
            .map(|row| (row.x1_star, row.u_mean, row.p_mean))
            .collect();
        check_bounds(&points, config.delta, 0.0)
    });

    let mut notes = Vec::new();
    let oracle = if config.emit_oracle {
        oracle_rows(config).unwrap_or_else(|e| {
            notes.push(format!("oracle skipped: {e}"));
            Vec::new()
        })
    } else {
        Vec::new()
    };
    for row in rows.iter().filter(|row| !row.failures.is_empty()) {
        notes.push(format!(
            "{} at r={}: {} of {} replications failed",
            row.method,
            row.r,
            row.failures.len(),
            reps
        ));
    }

    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(ExperimentReport {
        metadata: ReportMetadata {
            config_hash: config.hash(),
            seed: config.seed,
            timestamp,
            target: config.target.kind().to_string(),
            delta: config.delta,
            n_samples: config.n_samples,
            n_macroreps: reps,
            dt_convention: config.target.dt_convention(),
        },
        rows,
        bounds,
        oracle,
        notes,
    })
}
