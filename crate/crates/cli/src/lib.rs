//! Experiment harness: problem registry, solver and policy selection,
//! history capture, CSV and SVG emission.
//!
//! Each experiment builds one normalized stencil system (b = A x_ex with
//! x_ex = ones/sqrt(N), x0 = 0), runs one solver under one replacement
//! policy, and writes `history.csv` plus `config.json` into its own output
//! directory. Batches of independent experiments may fan out over worker
//! threads; a single experiment is strictly sequential.

pub mod plot;

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use krylov_gap_core::io::fmt_shortest;
use krylov_gap_core::stability::default_replacement_tau;
use krylov_gap_core::{
    bicgstab_classic, bicgstab_pipelined, cg_classic, cg_pipelined, icc0_factor, read_csv, spmv,
    stencil_matrix, DenseVector, Error as CoreError, Preconditioner,
};

pub use krylov_gap_core::{
    CsrMatrix, CsvRow, ProblemId, ReplacementPolicy, SolveOptions, SolveResult, SolveStatus,
    StencilSpec,
};

/// Harness-level failure classification; the binary maps it onto process
/// exit codes (config -> 3, i/o -> 1).
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CoreError> for HarnessError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(e) => HarnessError::Io(e),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarnessError::Config(msg.into()))
}

/// Solver selector. Short CLI names `cg`, `pcg`, `bicgstab`, `pbicgstab`;
/// the pipelined variants also accept their long spellings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Cg,
    CgPipelined,
    Bicgstab,
    BicgstabPipelined,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Cg => "cg",
            SolverKind::CgPipelined => "pcg",
            SolverKind::Bicgstab => "bicgstab",
            SolverKind::BicgstabPipelined => "pbicgstab",
        }
    }

    pub fn is_pipelined(self) -> bool {
        matches!(self, SolverKind::CgPipelined | SolverKind::BicgstabPipelined)
    }
}

impl FromStr for SolverKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cg" => Ok(SolverKind::Cg),
            "pcg" | "pcg_pipelined" | "cg_pipelined" => Ok(SolverKind::CgPipelined),
            "bicgstab" => Ok(SolverKind::Bicgstab),
            "pbicgstab" | "bicgstab_pipelined" => Ok(SolverKind::BicgstabPipelined),
            other => config_err(format!(
                "unknown solver {other:?}; expected cg, pcg, bicgstab or pbicgstab"
            )),
        }
    }
}

/// Preconditioner selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondKind {
    None,
    Icc0,
}

impl PrecondKind {
    pub fn name(self) -> &'static str {
        match self {
            PrecondKind::None => "none",
            PrecondKind::Icc0 => "icc0",
        }
    }
}

impl FromStr for PrecondKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "identity" => Ok(PrecondKind::None),
            "icc0" => Ok(PrecondKind::Icc0),
            other => config_err(format!(
                "unknown preconditioner {other:?}; expected none or icc0"
            )),
        }
    }
}

/// Default preconditioner per problem: ICC(0) everywhere except TP2.
pub fn default_precond(id: ProblemId) -> PrecondKind {
    if id == ProblemId::Tp2 {
        PrecondKind::None
    } else {
        PrecondKind::Icc0
    }
}

/// Parses `none`, `auto`, `auto:<tau>` or `periodic:<P>`.
pub fn parse_policy(s: &str) -> Result<ReplacementPolicy> {
    let lower = s.to_ascii_lowercase();
    if lower == "none" {
        return Ok(ReplacementPolicy::None);
    }
    if lower == "auto" {
        return Ok(ReplacementPolicy::Automated {
            tau: default_replacement_tau(),
        });
    }
    if let Some(tau) = lower.strip_prefix("auto:") {
        let tau: f64 = tau
            .parse()
            .map_err(|_| HarnessError::Config(format!("bad replacement threshold {tau:?}")))?;
        if !tau.is_finite() || tau <= 0.0 {
            return config_err("replacement threshold must be positive and finite");
        }
        return Ok(ReplacementPolicy::Automated { tau });
    }
    if let Some(p) = lower.strip_prefix("periodic:") {
        let period: usize = p
            .parse()
            .map_err(|_| HarnessError::Config(format!("bad replacement period {p:?}")))?;
        if period == 0 {
            return config_err("replacement period must be at least 1");
        }
        return Ok(ReplacementPolicy::Periodic { period });
    }
    config_err(format!(
        "unknown replacement policy {s:?}; expected none, auto, auto:<tau> or periodic:<P>"
    ))
}

/// Inverse of [`parse_policy`] up to the default threshold being spelled
/// `auto`.
pub fn policy_name(p: &ReplacementPolicy) -> String {
    match p {
        ReplacementPolicy::None => "none".into(),
        ReplacementPolicy::Periodic { period } => format!("periodic:{period}"),
        ReplacementPolicy::Automated { tau } if *tau == default_replacement_tau() => "auto".into(),
        ReplacementPolicy::Automated { tau } => format!("auto:{}", fmt_shortest(*tau)),
    }
}

/// One experiment as written in a JSON config file; every field mirrors a
/// CLI flag and unset fields fall back to per-problem defaults. CLI flags
/// override file values field by field.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nz: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precond: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plots: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl RawConfig {
    /// Field-wise overlay: `self` wins where set, `base` fills the rest.
    pub fn over(self, base: RawConfig) -> RawConfig {
        RawConfig {
            problem: self.problem.or(base.problem),
            nx: self.nx.or(base.nx),
            ny: self.ny.or(base.ny),
            nz: self.nz.or(base.nz),
            eps: self.eps.or(base.eps),
            solver: self.solver.or(base.solver),
            precond: self.precond.or(base.precond),
            rr: self.rr.or(base.rr),
            tol: self.tol.or(base.tol),
            max_iters: self.max_iters.or(base.max_iters),
            breakdown_eps: self.breakdown_eps.or(base.breakdown_eps),
            out: self.out.or(base.out),
            plots: self.plots.or(base.plots),
            label: self.label.or(base.label),
        }
    }
}

/// A config file holds one experiment object or an array of them.
pub fn parse_config_text(text: &str) -> Result<Vec<RawConfig>> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| HarnessError::Config(format!("config parse error: {e}")))?;
    let from_value = |v: serde_json::Value| -> Result<RawConfig> {
        serde_json::from_value(v).map_err(|e| HarnessError::Config(format!("config error: {e}")))
    };
    match value {
        serde_json::Value::Array(items) => {
            if items.is_empty() {
                return config_err("config array is empty");
            }
            items.into_iter().map(from_value).collect()
        }
        obj => Ok(vec![from_value(obj)?]),
    }
}

/// Fully resolved experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub spec: StencilSpec,
    pub solver: SolverKind,
    pub precond: PrecondKind,
    pub policy: ReplacementPolicy,
    pub opts: SolveOptions,
    pub out_dir: PathBuf,
    pub emit_plots: bool,
    pub label: String,
}

impl ExperimentConfig {
    /// Resolves a raw config against the per-problem defaults and validates
    /// the solver/policy combination.
    pub fn resolve(raw: &RawConfig) -> Result<Self> {
        let problem = raw
            .problem
            .as_deref()
            .ok_or_else(|| HarnessError::Config("missing problem id (see list-problems)".into()))?;
        let id: ProblemId = problem.parse().map_err(HarnessError::from)?;

        let mut spec = StencilSpec::reference(id);
        if let Some(nx) = raw.nx {
            spec.nx = nx;
        }
        if let Some(ny) = raw.ny {
            spec.ny = ny;
        }
        if let Some(nz) = raw.nz {
            if !id.is_three_dimensional() && nz != 1 {
                return config_err(format!("{id} is two-dimensional; nz must stay 1"));
            }
            spec.nz = nz;
        }
        if let Some(eps) = raw.eps {
            spec.epsilon = eps;
        }

        let solver = match raw.solver.as_deref() {
            Some(s) => s.parse()?,
            None => SolverKind::BicgstabPipelined,
        };
        let precond = match raw.precond.as_deref() {
            Some(p) => p.parse()?,
            None => default_precond(id),
        };
        let policy = match raw.rr.as_deref() {
            Some(r) => parse_policy(r)?,
            None => ReplacementPolicy::None,
        };
        if !solver.is_pipelined() && !matches!(policy, ReplacementPolicy::None) {
            return config_err("residual replacement requires a pipelined solver");
        }
        if solver == SolverKind::CgPipelined && matches!(policy, ReplacementPolicy::Automated { .. })
        {
            return config_err("automated replacement is only available for pipelined bicgstab");
        }

        let mut opts = SolveOptions::default();
        if let Some(tol) = raw.tol {
            if !tol.is_finite() || tol <= 0.0 {
                return config_err("tol must be positive and finite");
            }
            opts.tol = tol;
        }
        if let Some(max_iters) = raw.max_iters {
            if max_iters == 0 {
                return config_err("max_iters must be at least 1");
            }
            opts.max_iters = max_iters;
        }
        if let Some(eps_b) = raw.breakdown_eps {
            if !eps_b.is_finite() || eps_b <= 0.0 {
                return config_err("breakdown_eps must be positive and finite");
            }
            opts.breakdown_eps = eps_b;
        }

        let label = raw.label.clone().unwrap_or_else(|| {
            format!(
                "{}-{}-{}",
                id.to_string().to_ascii_lowercase(),
                solver.name(),
                policy_name(&policy)
            )
        });
        let out_dir = raw
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&label));

        Ok(ExperimentConfig {
            spec,
            solver,
            precond,
            policy,
            opts,
            out_dir,
            emit_plots: raw.plots.unwrap_or(false),
            label,
        })
    }

    /// The serialized form written next to the history as `config.json`.
    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            problem: Some(self.spec.problem_id.to_string()),
            nx: Some(self.spec.nx),
            ny: Some(self.spec.ny),
            nz: Some(self.spec.nz),
            eps: Some(self.spec.epsilon),
            solver: Some(self.solver.name().to_string()),
            precond: Some(self.precond.name().to_string()),
            rr: Some(policy_name(&self.policy)),
            tol: Some(self.opts.tol),
            max_iters: Some(self.opts.max_iters),
            breakdown_eps: Some(self.opts.breakdown_eps),
            out: Some(self.out_dir.clone()),
            plots: Some(self.emit_plots),
            label: Some(self.label.clone()),
        }
    }
}

/// Resolves a batch, rejecting duplicate output directories (outputs are
/// per-experiment directories so parallel runs never contend).
pub fn resolve_batch(raws: &[RawConfig]) -> Result<Vec<ExperimentConfig>> {
    let mut cfgs = Vec::with_capacity(raws.len());
    for raw in raws {
        cfgs.push(ExperimentConfig::resolve(raw)?);
    }
    for (i, c) in cfgs.iter().enumerate() {
        if cfgs[..i].iter().any(|p| p.out_dir == c.out_dir) {
            return config_err(format!(
                "duplicate output directory {:?} in batch",
                c.out_dir
            ));
        }
    }
    Ok(cfgs)
}

/// Outcome of one experiment, kept in memory for summaries and tests; the
/// durable record is the files in `out_dir`.
#[derive(Debug)]
pub struct RunSummary {
    pub label: String,
    pub out_dir: PathBuf,
    pub result: SolveResult,
}

impl RunSummary {
    pub fn status(&self) -> SolveStatus {
        self.result.status
    }

    pub fn iterations(&self) -> usize {
        self.result
            .history
            .rows
            .last()
            .map_or(0, |r| r.record.iteration)
    }

    pub fn replacements(&self) -> usize {
        self.result.counts.replacements
    }

    pub fn min_true_residual(&self) -> f64 {
        self.result
            .history
            .rows
            .iter()
            .map(|r| r.record.true_residual_norm)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Builds the linear system for `spec`: normalized matrix, b = A x_ex with
/// x_ex = ones/sqrt(N), x0 = 0.
pub fn build_system(spec: &StencilSpec) -> Result<(CsrMatrix, DenseVector, DenseVector)> {
    let a = stencil_matrix(spec)?;
    let n = a.n_rows();
    let x_exact = DenseVector::filled(n, 1.0 / (n as f64).sqrt());
    let b = spmv(&a, &x_exact)?;
    Ok((a, b, DenseVector::zeros(n)))
}

/// Runs one experiment and writes `history.csv`, `config.json` and, when
/// requested, the three SVG panels into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (a, b, x0) = build_system(&cfg.spec)?;
    let m = match cfg.precond {
        PrecondKind::None => Preconditioner::Identity,
        PrecondKind::Icc0 => Preconditioner::Icc0(icc0_factor(&a)?),
    };
    let result = match cfg.solver {
        SolverKind::Cg => cg_classic(&a, &m, &b, &x0, &cfg.opts, None)?,
        SolverKind::CgPipelined => cg_pipelined(&a, &m, &b, &x0, &cfg.opts, cfg.policy, None)?,
        SolverKind::Bicgstab => bicgstab_classic(&a, &m, &b, &x0, &cfg.opts, None)?,
        SolverKind::BicgstabPipelined => {
            bicgstab_pipelined(&a, &m, &b, &x0, &cfg.opts, cfg.policy, None)?
        }
    };
    write_outputs(cfg, &result)?;
    Ok(RunSummary {
        label: cfg.label.clone(),
        out_dir: cfg.out_dir.clone(),
        result,
    })
}

fn write_outputs(cfg: &ExperimentConfig, result: &SolveResult) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let mut csv = Vec::new();
    result.history.write_csv(&mut csv)?;
    fs::write(cfg.out_dir.join("history.csv"), &csv)?;
    let json = serde_json::to_string_pretty(&cfg.to_raw())
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(cfg.out_dir.join("config.json"), json + "\n")?;
    if cfg.emit_plots {
        // Rendered from the emitted file, not the in-memory history, so the
        // plots stay a pure function of history.csv.
        let file = fs::File::open(cfg.out_dir.join("history.csv"))?;
        let rows = read_csv(BufReader::new(file))?;
        plot::write_plots(&rows, &cfg.out_dir)?;
    }
    Ok(())
}

/// Runs a batch of independent experiments; results come back in input
/// order. With the `parallel` feature the batch fans out over a worker pool
/// whose size `KRYLOV_GAP_THREADS` caps; otherwise it runs sequentially.
pub fn run_experiments(cfgs: &[ExperimentConfig]) -> Vec<Result<RunSummary>> {
    run_batch(cfgs)
}

#[cfg(feature = "parallel")]
fn run_batch(cfgs: &[ExperimentConfig]) -> Vec<Result<RunSummary>> {
    use rayon::prelude::*;

    /// Positive worker cap; unset or unparsable means the default pool.
    fn thread_cap() -> Option<usize> {
        std::env::var("KRYLOV_GAP_THREADS")
            .ok()?
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
    }

    match thread_cap() {
        Some(cap) => match rayon::ThreadPoolBuilder::new().num_threads(cap).build() {
            Ok(pool) => pool.install(|| cfgs.par_iter().map(run_experiment).collect()),
            Err(_) => cfgs.iter().map(run_experiment).collect(),
        },
        None => cfgs.par_iter().map(run_experiment).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_batch(cfgs: &[ExperimentConfig]) -> Vec<Result<RunSummary>> {
    cfgs.iter().map(run_experiment).collect()
}

/// One registry row per shipped test problem at reference size.
pub struct ProblemInfo {
    pub id: ProblemId,
    pub unknowns: usize,
    pub stencil: &'static str,
    /// None for the unperturbed stencils.
    pub epsilon: Option<f64>,
    pub default_precond: PrecondKind,
}

pub fn problem_registry() -> Vec<ProblemInfo> {
    ProblemId::ALL
        .iter()
        .map(|&id| {
            let s = StencilSpec::reference(id);
            ProblemInfo {
                id,
                unknowns: s.nx * s.ny * s.nz,
                stencil: match id {
                    ProblemId::Tp4 => "2D 9-point",
                    ProblemId::Tp5 => "3D 7-point",
                    _ => "2D 5-point",
                },
                epsilon: (s.epsilon != 0.0).then_some(s.epsilon),
                default_precond: default_precond(id),
            }
        })
        .collect()
}

/// Registry dump backing the `list-problems` subcommand.
pub fn list_problems_text() -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<10} {:<12} {:<8} {}",
        "problem", "N", "stencil", "eps", "precond"
    );
    for p in problem_registry() {
        let eps = p.epsilon.map_or_else(|| "-".to_string(), fmt_shortest);
        let _ = writeln!(
            out,
            "{:<8} {:<10} {:<12} {:<8} {}",
            p.id.to_string(),
            p.unknowns,
            p.stencil,
            eps,
            p.default_precond.name()
        );
    }
    out
}

/// Reads `config.json` + `history.csv` from each run directory and emits a
/// per-run summary table. All runs must be on the same problem instance.
pub fn compare_runs(dirs: &[PathBuf]) -> Result<String> {
    if dirs.len() < 2 {
        return config_err("compare needs at least two run directories");
    }
    let mut loaded = Vec::new();
    for dir in dirs {
        let cfg_text = read_run_file(dir, "config.json")?;
        let raw: RawConfig = serde_json::from_str(&cfg_text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", dir.display())))?;
        let cfg = ExperimentConfig::resolve(&raw)?;
        let file = fs::File::open(dir.join("history.csv"))
            .map_err(|e| HarnessError::Config(format!("{}: history.csv: {e}", dir.display())))?;
        let rows = read_csv(BufReader::new(file))?;
        if rows.is_empty() {
            return config_err(format!("{}: empty history", dir.display()));
        }
        loaded.push((cfg, rows));
    }

    let first = &loaded[0].0.spec;
    for (cfg, _) in &loaded[1..] {
        let s = &cfg.spec;
        if s.problem_id != first.problem_id
            || (s.nx, s.ny, s.nz) != (first.nx, first.ny, first.nz)
            || s.epsilon != first.epsilon
        {
            return config_err("compare requires runs on the same problem instance");
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "problem {} {}x{}x{} (N = {})",
        first.problem_id,
        first.nx,
        first.ny,
        first.nz,
        first.nx * first.ny * first.nz
    );
    let _ = writeln!(
        out,
        "{:<24} {:<10} {:<13} {:>11} {:>11} {:>7} {:>5} {:>12}",
        "label", "solver", "policy", "final_true", "min_true", "to_tol", "repl", "max_colnorm"
    );
    for (cfg, rows) in &loaded {
        let final_true = rows.last().expect("nonempty").true_resid;
        let min_true = rows
            .iter()
            .map(|r| r.true_resid)
            .fold(f64::INFINITY, f64::min);
        // x0 = 0, so row 0's recursive residual is ||b||.
        let target = cfg.opts.tol * rows[0].rec_resid;
        let to_tol = rows
            .iter()
            .find(|r| r.rec_resid <= target)
            .map_or_else(|| "-".to_string(), |r| r.iter.to_string());
        let replacements = rows.iter().filter(|r| r.replaced).count();
        let max_colnorm = rows
            .iter()
            .flat_map(|r| r.col_norms)
            .fold(0.0f64, f64::max);
        let _ = writeln!(
            out,
            "{:<24} {:<10} {:<13} {:>11} {:>11} {:>7} {:>5} {:>12}",
            cfg.label,
            cfg.solver.name(),
            policy_name(&cfg.policy),
            format!("{final_true:.3e}"),
            format!("{min_true:.3e}"),
            to_tol,
            replacements,
            format!("{max_colnorm:.3e}"),
        );
    }
    Ok(out)
}

fn read_run_file(dir: &Path, name: &str) -> Result<String> {
    fs::read_to_string(dir.join(name))
        .map_err(|e| HarnessError::Config(format!("{}: {name}: {e}", dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(problem: &str) -> RawConfig {
        RawConfig {
            problem: Some(problem.into()),
            ..RawConfig::default()
        }
    }

    #[test]
    fn solver_names_round_trip() {
        for kind in [
            SolverKind::Cg,
            SolverKind::CgPipelined,
            SolverKind::Bicgstab,
            SolverKind::BicgstabPipelined,
        ] {
            assert_eq!(kind.name().parse::<SolverKind>().unwrap(), kind);
        }
        assert_eq!(
            "bicgstab_pipelined".parse::<SolverKind>().unwrap(),
            SolverKind::BicgstabPipelined
        );
        assert_eq!(
            "pcg_pipelined".parse::<SolverKind>().unwrap(),
            SolverKind::CgPipelined
        );
        assert!("gmres".parse::<SolverKind>().is_err());
    }

    #[test]
    fn policy_strings_round_trip() {
        for s in ["none", "auto", "periodic:50"] {
            assert_eq!(policy_name(&parse_policy(s).unwrap()), s);
        }
        let p = parse_policy("auto:1e-9").unwrap();
        assert!(matches!(p, ReplacementPolicy::Automated { tau } if tau == 1e-9));
        assert!(parse_policy("periodic:0").is_err());
        assert!(parse_policy("auto:-1").is_err());
        assert!(parse_policy("sometimes").is_err());
    }

    #[test]
    fn resolve_applies_problem_defaults() {
        let cfg = ExperimentConfig::resolve(&raw("TP1")).unwrap();
        assert_eq!(cfg.solver, SolverKind::BicgstabPipelined);
        assert_eq!(cfg.precond, PrecondKind::Icc0);
        assert_eq!(cfg.policy, ReplacementPolicy::None);
        assert_eq!((cfg.spec.nx, cfg.spec.ny, cfg.spec.nz), (200, 200, 1));
        assert_eq!(cfg.label, "tp1-pbicgstab-none");
        assert_eq!(cfg.out_dir, PathBuf::from("runs/tp1-pbicgstab-none"));

        let tp2 = ExperimentConfig::resolve(&raw("TP2")).unwrap();
        assert_eq!(tp2.precond, PrecondKind::None);
    }

    #[test]
    fn resolve_rejects_bad_combinations() {
        let mut r = raw("TP1");
        r.solver = Some("bicgstab".into());
        r.rr = Some("auto".into());
        assert!(ExperimentConfig::resolve(&r).is_err());

        let mut r = raw("TP1");
        r.solver = Some("pcg".into());
        r.rr = Some("auto".into());
        assert!(ExperimentConfig::resolve(&r).is_err());

        // Periodic replacement on pipelined CG is allowed.
        let mut r = raw("TP1");
        r.solver = Some("pcg".into());
        r.rr = Some("periodic:50".into());
        assert!(ExperimentConfig::resolve(&r).is_ok());

        let mut r = raw("TP1");
        r.nz = Some(4);
        assert!(ExperimentConfig::resolve(&r).is_err());

        let mut r = raw("TP1");
        r.tol = Some(0.0);
        assert!(ExperimentConfig::resolve(&r).is_err());

        assert!(ExperimentConfig::resolve(&raw("TP9")).is_err());
        assert!(ExperimentConfig::resolve(&RawConfig::default()).is_err());
    }

    #[test]
    fn resolved_config_round_trips_through_raw() {
        let mut r = raw("TP5");
        r.nx = Some(8);
        r.ny = Some(9);
        r.nz = Some(10);
        r.solver = Some("pbicgstab".into());
        r.rr = Some("periodic:25".into());
        r.tol = Some(1e-8);
        let cfg = ExperimentConfig::resolve(&r).unwrap();
        let again = ExperimentConfig::resolve(&cfg.to_raw()).unwrap();
        assert_eq!((again.spec.nx, again.spec.ny, again.spec.nz), (8, 9, 10));
        assert_eq!(again.solver, cfg.solver);
        assert_eq!(again.precond, cfg.precond);
        assert_eq!(again.policy, cfg.policy);
        assert_eq!(again.opts.tol, cfg.opts.tol);
        assert_eq!(again.out_dir, cfg.out_dir);
        assert_eq!(again.label, cfg.label);
    }

    #[test]
    fn cli_overlay_wins_over_file() {
        let mut file = raw("TP1");
        file.tol = Some(1e-6);
        file.max_iters = Some(100);
        let mut cli = RawConfig::default();
        cli.tol = Some(1e-10);
        let merged = cli.over(file);
        assert_eq!(merged.problem.as_deref(), Some("TP1"));
        assert_eq!(merged.tol, Some(1e-10));
        assert_eq!(merged.max_iters, Some(100));
    }

    #[test]
    fn config_text_accepts_object_and_array() {
        let one = parse_config_text(r#"{"problem": "TP1"}"#).unwrap();
        assert_eq!(one.len(), 1);
        let two = parse_config_text(r#"[{"problem": "TP1"}, {"problem": "TP4"}]"#).unwrap();
        assert_eq!(two.len(), 2);
        assert!(parse_config_text("[]").is_err());
        assert!(parse_config_text(r#"{"problm": "TP1"}"#).is_err());
    }

    #[test]
    fn batch_rejects_duplicate_out_dirs() {
        let a = raw("TP1");
        let b = raw("TP1");
        assert!(resolve_batch(&[a.clone(), b]).is_err());
        let mut c = raw("TP1");
        c.out = Some(PathBuf::from("elsewhere"));
        assert!(resolve_batch(&[a, c]).is_ok());
    }

    #[test]
    fn registry_lists_reference_sizes() {
        let text = list_problems_text();
        for (id, n) in [
            ("TP1", "40000"),
            ("TP2", "1000000"),
            ("TP3", "250000"),
            ("TP4", "40000"),
            ("TP5", "125000"),
        ] {
            assert!(text.contains(id), "{id} missing from:\n{text}");
            assert!(text.contains(n), "{id} size {n} missing from:\n{text}");
        }
        assert!(text.contains("none"));
        assert!(text.contains("icc0"));
    }
}
