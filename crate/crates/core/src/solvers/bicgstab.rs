//! Classic preconditioned BiCGStab.
//!
//! The reference recurrence the pipelined variant is measured against. Two
//! operator applications and two preconditioner applications per iteration;
//! every update is elementwise with pinned bracketing.

use crate::error::Result;
use crate::history::ConvergenceHistory;
use crate::matrix::{max_row_nnz, spmv_into, CsrMatrix};
use crate::precond::{apply_preconditioner_into, mu_tilde, Preconditioner};
use crate::stability::{
    classic_error_bounds, CoefficientTrace, ClassicErrorInputs, GapRecord, LocalBoundConsts,
};
use crate::vector::{axpy_in_place, dot_slices, norm2_slice, DenseVector};

use super::{
    denominator_unusable, fresh_apply_gap, fresh_true_residual, make_row, residual_from,
    resolve_norms, sub_scaled, validate_inputs, x_update, IterationHook, OpCounts, SolveOptions,
    SolveResult, SolveStatus, SolverState, StagnationTracker, StoppingNorm,
};

/// Runs classic BiCGStab on `A x = b` with left preconditioner `M`.
///
/// Breakdown is reported as a status; the returned history always includes
/// row 0 and one row per completed iteration.
pub fn bicgstab_classic(
    a: &CsrMatrix,
    m: &Preconditioner,
    b: &DenseVector,
    x0: &DenseVector,
    opts: &SolveOptions,
    mut hook: Option<&mut dyn IterationHook>,
) -> Result<SolveResult> {
    let n = validate_inputs(a, b, x0)?;
    let (a_norm, minv_norm) = resolve_norms(a, m, opts);
    let consts = LocalBoundConsts::new(a_norm, minv_norm, max_row_nnz(a), mu_tilde(m), n);

    let mut state = SolverState::zeros(n);
    state.x = x0.clone();
    spmv_into(a, &state.x, &mut state.q);
    residual_from(&mut state.r, b, &state.q);
    state.q.as_mut_slice().fill(0.0);
    state.p = state.r.clone();
    state.r0_shadow = state.r.clone();

    let mut counts = OpCounts {
        spmv: 1,
        prec_applies: 0,
        replacements: 0,
    };
    let b_norm = norm2_slice(b);
    let r0_norm = norm2_slice(&state.r);
    let target = opts.tol * b_norm;

    let mut rho = dot_slices(&state.r0_shadow, &state.r);
    state.dot_r0_r = rho;

    // Running bound on ||(b - A x_i) - r_i|| for the classic recurrence.
    let mut f_r =
        ((consts.mu_sqrt_n + 1.0) * consts.a_norm * norm2_slice(x0) + b_norm) * consts.eps;

    let mut trace = CoefficientTrace::new();
    let mut history = ConvergenceHistory::new();
    history.push(make_row(
        classic_record(&state, a, b, 0, f_r),
        &trace,
        0,
        0,
    ));

    let initial_norm = match opts.stopping_norm {
        StoppingNorm::Recursive => r0_norm,
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
        let nx = norm2_slice(&state.x);
        let nr = norm2_slice(&state.r);
        let np = norm2_slice(&state.p);

        apply_preconditioner_into(m, &state.p, &mut state.g);
        spmv_into(a, &state.g, &mut state.s);
        counts.prec_applies += 1;
        counts.spmv += 1;
        let ng = norm2_slice(&state.g);
        let ns = norm2_slice(&state.s);

        let rho_s = dot_slices(&state.r0_shadow, &state.s);
        state.dot_r0_s = rho_s;
        if denominator_unusable(rho_s, opts.breakdown_eps * r0_norm * ns) {
            status = SolveStatus::Breakdown;
            break;
        }
        let alpha = rho / rho_s;
        if !alpha.is_finite() {
            status = SolveStatus::Breakdown;
            break;
        }

        sub_scaled(&mut state.q, &state.r, alpha, &state.s);
        let nq = norm2_slice(&state.q);

        if nq <= target {
            // Half-step convergence: accept x + alpha g and stop before the
            // stabilization step, whose omega would divide by ~0.
            axpy_in_place(alpha, &state.g, &mut state.x);
            state.r.as_mut_slice().copy_from_slice(&state.q);
            state.alpha = alpha;
            state.beta = beta_used;
            state.omega = 0.0;
            trace.push(alpha, beta_used, 0.0);

            let d = classic_error_bounds(
                &ClassicErrorInputs {
                    alpha,
                    omega: 0.0,
                    x: nx,
                    r: nr,
                    p: np,
                    g: ng,
                    s: ns,
                    q: nq,
                    u: 0.0,
                    y: 0.0,
                },
                &consts,
            );
            f_r += consts.a_norm * d.x + d.r + d.q;

            state.iteration = i + 1;
            history.push(make_row(
                classic_record(&state, a, b, i + 1, f_r),
                &trace,
                i + 1,
                0,
            ));
            if let Some(h) = hook.as_deref_mut() {
                h.on_iteration(&state);
            }
            status = SolveStatus::Converged;
            break;
        }

        apply_preconditioner_into(m, &state.q, &mut state.u);
        spmv_into(a, &state.u, &mut state.y);
        counts.prec_applies += 1;
        counts.spmv += 1;
        let nu = norm2_slice(&state.u);
        let ny = norm2_slice(&state.y);

        let qy = dot_slices(&state.q, &state.y);
        let yy = dot_slices(&state.y, &state.y);
        if !qy.is_finite() || denominator_unusable(yy, opts.breakdown_eps) {
            status = SolveStatus::Breakdown;
            break;
        }
        let omega = qy / yy;
        if !omega.is_finite() {
            status = SolveStatus::Breakdown;
            break;
        }

        x_update(&mut state.x, alpha, &state.g, omega, &state.u);
        sub_scaled(&mut state.r, &state.q, omega, &state.y);

        let rho_new = dot_slices(&state.r0_shadow, &state.r);
        if denominator_unusable(rho, opts.breakdown_eps) {
            status = SolveStatus::Breakdown;
            break;
        }
        let beta_next = ((alpha / omega) * rho_new) / rho;
        if !beta_next.is_finite() {
            status = SolveStatus::Breakdown;
            break;
        }
        super::fused_update(&mut state.p, &state.r, beta_next, omega, &state.s);

        let d = classic_error_bounds(
            &ClassicErrorInputs {
                alpha,
                omega,
                x: nx,
                r: nr,
                p: np,
                g: ng,
                s: ns,
                q: nq,
                u: nu,
                y: ny,
            },
            &consts,
        );
        f_r += consts.a_norm * d.x + d.r + d.q;

        state.alpha = alpha;
        state.beta = beta_used;
        state.omega = omega;
        state.dot_r0_r = rho_new;
        trace.push(alpha, beta_used, omega);
        beta_used = beta_next;
        rho = rho_new;

        state.iteration = i + 1;
        let record = classic_record(&state, a, b, i + 1, f_r);
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

/// Gap record for the classic recurrence: residual gap plus the explicit
/// direction gap A g - s; the pipelined-only slots stay zero.
fn classic_record(
    state: &SolverState,
    a: &CsrMatrix,
    b: &DenseVector,
    iteration: usize,
    f_r: f64,
) -> GapRecord {
    let (true_norm, gap_r) = fresh_true_residual(a, b, &state.x, &state.r);
    let gap_s = fresh_apply_gap(a, &state.g, &state.s);
    GapRecord {
        iteration,
        recursive_residual_norm: norm2_slice(&state.r),
        true_residual_norm: true_norm,
        gap_r,
        gap_s,
        gap_w: 0.0,
        gap_z: 0.0,
        gap_k: 0.0,
        gap_l: 0.0,
        bound_f_r: f_r,
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
