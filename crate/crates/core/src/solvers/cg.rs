//! Classic preconditioned conjugate gradients.
//!
//! Reference recurrence for the pipelined CG variant; one matvec and one
//! preconditioner application per iteration.

use crate::error::Result;
use crate::history::ConvergenceHistory;
use crate::matrix::{spmv_into, CsrMatrix};
use crate::precond::{apply_preconditioner_into, Preconditioner};
use crate::stability::{CoefficientTrace, GapRecord};
use crate::vector::{dot_slices, norm2_slice, DenseVector};

use super::{
    denominator_unusable, fresh_prec_gap, fresh_true_residual, make_row, residual_from,
    validate_inputs, IterationHook, OpCounts, SolveOptions, SolveResult, SolveStatus,
    SolverState, StagnationTracker, StoppingNorm,
};

/// Runs classic CG on `A x = b` with preconditioner `M`. `A` is assumed
/// symmetric positive definite; loss of that property surfaces as breakdown
/// or stagnation.
pub fn cg_classic(
    a: &CsrMatrix,
    m: &Preconditioner,
    b: &DenseVector,
    x0: &DenseVector,
    opts: &SolveOptions,
    mut hook: Option<&mut dyn IterationHook>,
) -> Result<SolveResult> {
    let dim = validate_inputs(a, b, x0)?;

    let mut state = SolverState::zeros(dim);
    state.x = x0.clone();
    spmv_into(a, &state.x, &mut state.q);
    residual_from(&mut state.r, b, &state.q);
    state.q.as_mut_slice().fill(0.0);
    // u = M^-1 r lives in the k slot so the gap record reads uniformly.
    apply_preconditioner_into(m, &state.r, &mut state.k);
    state.p = state.k.clone();
    state.r0_shadow = state.r.clone();

    let mut counts = OpCounts {
        spmv: 1,
        prec_applies: 1,
        replacements: 0,
    };
    let b_norm = norm2_slice(b);
    let target = opts.tol * b_norm;

    let mut rho = dot_slices(&state.r, &state.k);
    state.dot_r0_r = rho;

    let mut trace = CoefficientTrace::new();
    let mut history = ConvergenceHistory::new();
    history.push(make_row(cg_record(&state, a, m, b, 0), &trace, 0, 0));

    let initial_norm = match opts.stopping_norm {
        StoppingNorm::Recursive => norm2_slice(&state.r),
        StoppingNorm::TrueResidual => history.rows[0].record.true_residual_norm,
    };
    if initial_norm <= target {
        history.status = Some(SolveStatus::Converged);
        return Ok(finish(state, SolveStatus::Converged, history, trace, counts));
    }

    let mut stagnation = StagnationTracker::new(initial_norm);
    let mut beta_used = 0.0;
    let mut status = SolveStatus::MaxIters;

    for i in 0..opts.max_iters {
        spmv_into(a, &state.p, &mut state.s);
        counts.spmv += 1;
        let p_ap = dot_slices(&state.p, &state.s);
        if denominator_unusable(p_ap, opts.breakdown_eps) {
            status = SolveStatus::Breakdown;
            break;
        }
        let alpha = rho / p_ap;
        if !alpha.is_finite() {
            status = SolveStatus::Breakdown;
            break;
        }

        for j in 0..dim {
            state.x[j] += alpha * state.p[j];
        }
        for j in 0..dim {
            state.r[j] -= alpha * state.s[j];
        }
        apply_preconditioner_into(m, &state.r, &mut state.k);
        counts.prec_applies += 1;

        let rho_new = dot_slices(&state.r, &state.k);
        if denominator_unusable(rho, opts.breakdown_eps) {
            status = SolveStatus::Breakdown;
            break;
        }
        let beta_next = rho_new / rho;
        if !beta_next.is_finite() {
            status = SolveStatus::Breakdown;
            break;
        }
        for j in 0..dim {
            state.p[j] = state.k[j] + beta_next * state.p[j];
        }

        state.alpha = alpha;
        state.beta = beta_used;
        state.omega = 0.0;
        state.dot_r0_r = rho_new;
        trace.push(alpha, beta_used, 0.0);
        beta_used = beta_next;
        rho = rho_new;

        state.iteration = i + 1;
        let record = cg_record(&state, a, m, b, i + 1);
        let rec_norm = record.recursive_residual_norm;
        let true_norm = record.true_residual_norm;
        history.push(make_row(record, &trace, i + 1, 0));
        if let Some(h) = hook.as_deref_mut() {
            h.on_iteration(&state);
        }

        let driving = match opts.stopping_norm {
            StoppingNorm::Recursive => rec_norm,
            StoppingNorm::TrueResidual => true_norm,
        };
        if driving <= target {
            status = SolveStatus::Converged;
            break;
        }
        if stagnation.stagnated(driving, i + 1) {
            status = SolveStatus::Stagnation;
            break;
        }
    }

    history.status = Some(status);
    Ok(finish(state, status, history, trace, counts))
}

/// CG gap record: residual gap plus the preconditioned-residual gap
/// ||M^-1 r - u||; the remaining slots have no CG counterpart.
fn cg_record(
    state: &SolverState,
    a: &CsrMatrix,
    m: &Preconditioner,
    b: &DenseVector,
    iteration: usize,
) -> GapRecord {
    let (true_norm, gap_r) = fresh_true_residual(a, b, &state.x, &state.r);
    let gap_k = fresh_prec_gap(m, &state.r, &state.k);
    GapRecord {
        iteration,
        recursive_residual_norm: norm2_slice(&state.r),
        true_residual_norm: true_norm,
        gap_r,
        gap_s: 0.0,
        gap_w: 0.0,
        gap_z: 0.0,
        gap_k,
        gap_l: 0.0,
        bound_f_r: 0.0,
        replaced: false,
    }
}

fn finish(
    state: SolverState,
    status: SolveStatus,
    history: ConvergenceHistory,
    trace: CoefficientTrace,
    counts: OpCounts,
) -> SolveResult {
    SolveResult {
        x_final: state.x,
        status,
        history,
        trace,
        counts,
    }
}
