//! Krylov solvers with a fixed floating-point evaluation order.
//!
//! Every recurrence is written as an explicit elementwise loop so the
//! rounding behaviour is part of the interface: two runs on the same inputs
//! produce bitwise-identical iterates. Instrumentation (gap measurement,
//! running bounds, propagation column norms) runs out of band and never
//! feeds back into the iteration.

mod bicgstab;
mod cg;
mod pipelined;
mod pipelined_cg;

pub use bicgstab::bicgstab_classic;
pub use cg::cg_classic;
pub use pipelined::bicgstab_pipelined;
pub use pipelined_cg::cg_pipelined;

use crate::error::{Error, Result};
use crate::history::ConvergenceHistory;
use crate::matrix::CsrMatrix;
use crate::norm_est::{NORM_EST_MAX_ITERS, NORM_EST_TOL};
use crate::precond::{estimate_preconditioner_norm, Preconditioner};
use crate::stability::CoefficientTrace;
use crate::vector::DenseVector;

/// Which residual norm drives the stopping test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StoppingNorm {
    /// The recursively updated residual (what the recurrence believes).
    #[default]
    Recursive,
    /// A freshly computed b - A x each iteration.
    TrueResidual,
}

/// Externally supplied operator norm estimates; when absent the solver
/// estimates them once at startup.
#[derive(Clone, Copy, Debug)]
pub struct ProblemNorms {
    pub a_norm: f64,
    pub minv_norm: f64,
}

/// Knobs shared by all solvers.
#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Relative tolerance on ||r|| / ||b||.
    pub tol: f64,
    pub max_iters: usize,
    /// Denominator magnitudes below this count as breakdown.
    pub breakdown_eps: f64,
    pub stopping_norm: StoppingNorm,
    pub norm_estimates: Option<ProblemNorms>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-6,
            max_iters: 20_000,
            breakdown_eps: 1e-30,
            stopping_norm: StoppingNorm::Recursive,
            norm_estimates: None,
        }
    }
}

/// Terminal state of a solve. Breakdown is a status, not an error: the
/// history up to the failing iteration is still returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Breakdown,
    Stagnation,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::Breakdown => "breakdown",
            SolveStatus::Stagnation => "stagnation",
        };
        f.write_str(s)
    }
}

/// Operator application counts, instrumentation excluded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub spmv: usize,
    pub prec_applies: usize,
    pub replacements: usize,
}

/// Full solver state exposed to iteration hooks.
///
/// Defining relations (bars denote computed quantities): r tracks b - A x,
/// k tracks M^-1 r, w tracks A k, m = M^-1 w, t = A m, and the direction
/// chain g = M^-1 p, s = A g, l = M^-1 s, z = A l, n = M^-1 z, v = A n.
/// q, u, y are the half-step vectors. Solvers that do not use a vector
/// leave it zero-filled.
#[derive(Clone, Debug)]
pub struct SolverState {
    /// Completed iterations; also the index of the history row this state
    /// produces.
    pub iteration: usize,
    pub x: DenseVector,
    pub r: DenseVector,
    pub p: DenseVector,
    pub q: DenseVector,
    pub g: DenseVector,
    pub s: DenseVector,
    pub u: DenseVector,
    pub y: DenseVector,
    pub k: DenseVector,
    pub w: DenseVector,
    pub l: DenseVector,
    pub z: DenseVector,
    pub m: DenseVector,
    pub t: DenseVector,
    pub n: DenseVector,
    pub v: DenseVector,
    /// The fixed shadow residual r_0.
    pub r0_shadow: DenseVector,
    /// Coefficients of the current iteration.
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    /// Cached shadow dot products of the latest reduction.
    pub dot_r0_r: f64,
    pub dot_r0_w: f64,
    pub dot_r0_s: f64,
    pub dot_r0_z: f64,
}

impl SolverState {
    pub fn zeros(n: usize) -> Self {
        SolverState {
            iteration: 0,
            x: DenseVector::zeros(n),
            r: DenseVector::zeros(n),
            p: DenseVector::zeros(n),
            q: DenseVector::zeros(n),
            g: DenseVector::zeros(n),
            s: DenseVector::zeros(n),
            u: DenseVector::zeros(n),
            y: DenseVector::zeros(n),
            k: DenseVector::zeros(n),
            w: DenseVector::zeros(n),
            l: DenseVector::zeros(n),
            z: DenseVector::zeros(n),
            m: DenseVector::zeros(n),
            t: DenseVector::zeros(n),
            n: DenseVector::zeros(n),
            v: DenseVector::zeros(n),
            r0_shadow: DenseVector::zeros(n),
            alpha: 0.0,
            beta: 0.0,
            omega: 0.0,
            dot_r0_r: 0.0,
            dot_r0_w: 0.0,
            dot_r0_s: 0.0,
            dot_r0_z: 0.0,
        }
    }
}

/// Observes the state at the end of every completed iteration.
pub trait IterationHook {
    fn on_iteration(&mut self, state: &SolverState);
}

/// Everything a solve produces.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x_final: DenseVector,
    pub status: SolveStatus,
    pub history: ConvergenceHistory,
    pub trace: CoefficientTrace,
    pub counts: OpCounts,
}

/// No relative decrease of at least this factor within the window counts as
/// stagnation.
pub const STAGNATION_DECREASE: f64 = 1e-3;
pub const STAGNATION_WINDOW: usize = 5000;

pub(crate) struct StagnationTracker {
    best: f64,
    last_improvement: usize,
}

impl StagnationTracker {
    pub(crate) fn new(initial_norm: f64) -> Self {
        StagnationTracker {
            best: initial_norm,
            last_improvement: 0,
        }
    }

    /// Records the residual norm after iteration `i`; true once the window
    /// has passed without sufficient decrease.
    pub(crate) fn stagnated(&mut self, norm: f64, i: usize) -> bool {
        if norm < self.best * (1.0 - STAGNATION_DECREASE) {
            self.best = norm;
            self.last_improvement = i;
            return false;
        }
        i - self.last_improvement >= STAGNATION_WINDOW
    }
}

pub(crate) fn validate_inputs(
    a: &CsrMatrix,
    b: &DenseVector,
    x0: &DenseVector,
) -> Result<usize> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
            context: "right-hand side",
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
            context: "initial guess",
        });
    }
    Ok(n)
}

/// Resolves (||A||, ||M^-1||) estimates: provided values win, otherwise one
/// power-iteration estimate each at startup.
pub(crate) fn resolve_norms(
    a: &CsrMatrix,
    m: &Preconditioner,
    opts: &SolveOptions,
) -> (f64, f64) {
    match opts.norm_estimates {
        Some(norms) => (norms.a_norm, norms.minv_norm),
        None => {
            let a_est = crate::norm_est::estimate_two_norm(a, NORM_EST_TOL, NORM_EST_MAX_ITERS);
            let m_est = estimate_preconditioner_norm(m);
            (a_est.value, m_est.value)
        }
    }
}

/// out[j] = lead[j] - scale * other[j]
pub(crate) fn sub_scaled(out: &mut [f64], lead: &[f64], scale: f64, other: &[f64]) {
    for j in 0..out.len() {
        out[j] = lead[j] - scale * other[j];
    }
}

/// out[j] = base[j] + scale * (out[j] - inner_scale * inner[j])
///
/// The shared shape of the pipelined auxiliary updates and the classic
/// direction update.
pub(crate) fn fused_update(out: &mut [f64], base: &[f64], scale: f64, inner_scale: f64, inner: &[f64]) {
    for j in 0..out.len() {
        out[j] = base[j] + scale * (out[j] - inner_scale * inner[j]);
    }
}

/// x[j] = (x[j] + alpha * g[j]) + omega * u[j], brackets fixed.
pub(crate) fn x_update(x: &mut [f64], alpha: f64, g: &[f64], omega: f64, u: &[f64]) {
    for j in 0..x.len() {
        x[j] = (x[j] + alpha * g[j]) + omega * u[j];
    }
}

/// out[j] = lead[j] - omega * (mid[j] - alpha * inner[j])
pub(crate) fn half_fused_update(
    out: &mut [f64],
    lead: &[f64],
    omega: f64,
    mid: &[f64],
    alpha: f64,
    inner: &[f64],
) {
    for j in 0..out.len() {
        out[j] = lead[j] - omega * (mid[j] - alpha * inner[j]);
    }
}

/// out[j] = b[j] - ax[j]
pub(crate) fn residual_from(out: &mut [f64], b: &[f64], ax: &[f64]) {
    for j in 0..out.len() {
        out[j] = b[j] - ax[j];
    }
}

/// Breakdown test for a denominator.
pub(crate) fn denominator_unusable(value: f64, floor: f64) -> bool {
    !value.is_finite() || value.abs() < floor
}

/// Fresh true residual: returns (||b - A x||, ||(b - A x) - r||).
/// Instrumentation only; the applications are not counted.
pub(crate) fn fresh_true_residual(
    a: &CsrMatrix,
    b: &[f64],
    x: &[f64],
    r: &[f64],
) -> (f64, f64) {
    let n = b.len();
    let mut applied = vec![0.0; n];
    crate::matrix::spmv_into(a, x, &mut applied);
    let mut norm_sq = 0.0;
    let mut gap_sq = 0.0;
    for j in 0..n {
        let tv = b[j] - applied[j];
        norm_sq += tv * tv;
        let d = tv - r[j];
        gap_sq += d * d;
    }
    (norm_sq.sqrt(), gap_sq.sqrt())
}

/// ||A src - tracked||, instrumentation only.
pub(crate) fn fresh_apply_gap(a: &CsrMatrix, src: &[f64], tracked: &[f64]) -> f64 {
    let mut applied = vec![0.0; src.len()];
    crate::matrix::spmv_into(a, src, &mut applied);
    let mut sum = 0.0;
    for j in 0..applied.len() {
        let d = applied[j] - tracked[j];
        sum += d * d;
    }
    sum.sqrt()
}

/// ||M^-1 src - tracked||, instrumentation only.
pub(crate) fn fresh_prec_gap(m: &Preconditioner, src: &[f64], tracked: &[f64]) -> f64 {
    let mut applied = vec![0.0; src.len()];
    crate::precond::apply_preconditioner_into(m, src, &mut applied);
    let mut sum = 0.0;
    for j in 0..applied.len() {
        let d = applied[j] - tracked[j];
        sum += d * d;
    }
    sum.sqrt()
}

/// Assembles a history row: column norms of the propagation products at
/// history index `i`, plus the coefficients that produced the state (zeros
/// at row 0).
pub(crate) fn make_row(
    record: crate::stability::GapRecord,
    trace: &CoefficientTrace,
    i: usize,
    zero_rows_below: usize,
) -> crate::history::HistoryRow {
    let col_norms =
        crate::stability::product_column_norms_with_reset(trace, i, zero_rows_below);
    let (alpha, beta, omega) = if i == 0 {
        (0.0, 0.0, 0.0)
    } else {
        (trace.alphas[i - 1], trace.betas[i - 1], trace.omegas[i - 1])
    };
    crate::history::HistoryRow {
        record,
        col_norms,
        alpha,
        beta,
        omega,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stagnation_triggers_after_window_without_decrease() {
        let mut t = StagnationTracker::new(1.0);
        for i in 1..STAGNATION_WINDOW {
            assert!(!t.stagnated(1.0, i));
        }
        assert!(t.stagnated(1.0, STAGNATION_WINDOW));
    }

    #[test]
    fn stagnation_resets_on_improvement() {
        let mut t = StagnationTracker::new(1.0);
        assert!(!t.stagnated(0.9, 1));
        // Improvement at iteration 1 restarts the window.
        assert!(!t.stagnated(0.9, STAGNATION_WINDOW));
        assert!(t.stagnated(0.9, STAGNATION_WINDOW + 1));
    }

    #[test]
    fn fused_update_matches_scalar_evaluation() {
        let mut out = vec![2.0, -1.0];
        let base = vec![1.0, 1.0];
        let inner = vec![0.5, 4.0];
        fused_update(&mut out, &base, 3.0, 2.0, &inner);
        assert_eq!(out[0], 1.0 + 3.0 * (2.0 - 2.0 * 0.5));
        assert_eq!(out[1], 1.0 + 3.0 * (-1.0 - 2.0 * 4.0));
    }

    #[test]
    fn x_update_brackets_alpha_term_first() {
        // Chosen so (x + a*g) rounds differently from x + (a*g + w*u).
        let mut x = vec![1.0];
        let g = vec![f64::EPSILON / 4.0];
        let u = vec![f64::EPSILON / 4.0];
        x_update(&mut x, 1.0, &g, 1.0, &u);
        let expect = (1.0f64 + f64::EPSILON / 4.0) + f64::EPSILON / 4.0;
        assert_eq!(x[0].to_bits(), expect.to_bits());
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let a = CsrMatrix::identity(3);
        let b = DenseVector::zeros(2);
        let x0 = DenseVector::zeros(3);
        assert!(validate_inputs(&a, &b, &x0).is_err());
        let b = DenseVector::zeros(3);
        let x0_bad = DenseVector::zeros(4);
        assert!(validate_inputs(&a, &b, &x0_bad).is_err());
        assert_eq!(validate_inputs(&a, &b, &x0).unwrap(), 3);
    }

    #[test]
    fn denominator_guard_catches_nan_and_tiny() {
        assert!(denominator_unusable(f64::NAN, 1e-30));
        assert!(denominator_unusable(f64::INFINITY, 1e-30));
        assert!(denominator_unusable(1e-31, 1e-30));
        assert!(!denominator_unusable(1e-29, 1e-30));
    }
}
