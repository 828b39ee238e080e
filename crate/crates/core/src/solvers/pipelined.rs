//! Pipelined preconditioned BiCGStab.
//!
//! Communication-hiding variant: per iteration both global reductions are
//! grouped and the preconditioner/matvec pair that produces m and t overlaps
//! them. The recurrence is mathematically equivalent to the classic one but
//! its extra recurrences drift independently, so every iteration measures
//! the six gaps, advances the running bound f^r, and optionally replaces the
//! drifting vectors.

use crate::error::Result;
use crate::history::ConvergenceHistory;
use crate::matrix::{max_row_nnz, spmv_into, CsrMatrix};
use crate::precond::{apply_preconditioner_into, mu_tilde, Preconditioner};
use crate::stability::{
    local_error_bounds, measure_gaps, perform_replacement, should_replace, CoefficientTrace,
    LocalBoundConsts, LocalBoundState, LocalErrorInputs, ReplacementPolicy,
};
use crate::vector::{axpy_in_place, dot_slices, norm2_slice, DenseVector};

use super::{
    denominator_unusable, fused_update, half_fused_update, make_row, residual_from,
    resolve_norms, sub_scaled, validate_inputs, x_update, IterationHook, OpCounts, SolveOptions,
    SolveResult, SolveStatus, SolverState, StagnationTracker, StoppingNorm,
};

/// Runs pipelined BiCGStab on `A x = b` with left preconditioner `M` under
/// the given residual replacement policy.
pub fn bicgstab_pipelined(
    a: &CsrMatrix,
    m: &Preconditioner,
    b: &DenseVector,
    x0: &DenseVector,
    opts: &SolveOptions,
    policy: ReplacementPolicy,
    mut hook: Option<&mut dyn IterationHook>,
) -> Result<SolveResult> {
    let dim = validate_inputs(a, b, x0)?;
    let (a_norm, minv_norm) = resolve_norms(a, m, opts);
    let consts = LocalBoundConsts::new(a_norm, minv_norm, max_row_nnz(a), mu_tilde(m), dim);

    let mut state = SolverState::zeros(dim);
    state.x = x0.clone();
    spmv_into(a, &state.x, &mut state.q);
    residual_from(&mut state.r, b, &state.q);
    state.q.as_mut_slice().fill(0.0);
    state.r0_shadow = state.r.clone();
    apply_preconditioner_into(m, &state.r, &mut state.k);
    spmv_into(a, &state.k, &mut state.w);
    apply_preconditioner_into(m, &state.w, &mut state.m);
    spmv_into(a, &state.m, &mut state.t);

    let mut counts = OpCounts {
        spmv: 3,
        prec_applies: 2,
        replacements: 0,
    };
    let b_norm = norm2_slice(b);
    let r0_norm = norm2_slice(&state.r);
    let target = opts.tol * b_norm;

    let mut bounds = LocalBoundState::initial(
        consts,
        b_norm,
        norm2_slice(x0),
        norm2_slice(&state.k),
        r0_norm,
    );

    let mut trace = CoefficientTrace::new();
    let mut history = ConvergenceHistory::new();
    {
        let mut record = measure_gaps(&state, a, m, b);
        record.bound_f_r = bounds.f_r();
        history.push(make_row(record, &trace, 0, 0));
    }

    let initial_norm = match opts.stopping_norm {
        StoppingNorm::Recursive => r0_norm,
        StoppingNorm::TrueResidual => history.rows[0].record.true_residual_norm,
    };
    if initial_norm <= target {
        history.status = Some(SolveStatus::Converged);
        return Ok(finish(state, SolveStatus::Converged, history, trace, counts));
    }

    let mut rho = dot_slices(&state.r0_shadow, &state.r);
    let rho_w = dot_slices(&state.r0_shadow, &state.w);
    state.dot_r0_r = rho;
    state.dot_r0_w = rho_w;
    if denominator_unusable(rho_w, opts.breakdown_eps * r0_norm * norm2_slice(&state.w)) {
        history.status = Some(SolveStatus::Breakdown);
        return Ok(finish(state, SolveStatus::Breakdown, history, trace, counts));
    }
    let mut alpha = rho / rho_w;
    if !alpha.is_finite() {
        history.status = Some(SolveStatus::Breakdown);
        return Ok(finish(state, SolveStatus::Breakdown, history, trace, counts));
    }
    let mut beta = 0.0;
    let mut omega_prev = 0.0;

    let mut stagnation = StagnationTracker::new(initial_norm);
    let mut prev_pair: Option<(f64, f64)> = None;
    let mut zero_rows = 0usize;
    let mut status = SolveStatus::MaxIters;

    for i in 0..opts.max_iters {
        let nx = norm2_slice(&state.x);
        let nr = norm2_slice(&state.r);
        let nk = norm2_slice(&state.k);
        let nw = norm2_slice(&state.w);
        let nm = norm2_slice(&state.m);
        let nt = norm2_slice(&state.t);
        let ng_prev = norm2_slice(&state.g);
        let ns_prev = norm2_slice(&state.s);
        let nl_prev = norm2_slice(&state.l);
        let nz_prev = norm2_slice(&state.z);
        let nn_prev = norm2_slice(&state.n);
        let nv_prev = norm2_slice(&state.v);
        let curr_pair = (bounds.f_r(), nr);

        fused_update(&mut state.g, &state.k, beta, omega_prev, &state.l);
        fused_update(&mut state.s, &state.w, beta, omega_prev, &state.z);
        fused_update(&mut state.l, &state.m, beta, omega_prev, &state.n);
        fused_update(&mut state.z, &state.t, beta, omega_prev, &state.v);
        let ng = norm2_slice(&state.g);
        let ns = norm2_slice(&state.s);
        let nl = norm2_slice(&state.l);
        let nz = norm2_slice(&state.z);

        sub_scaled(&mut state.q, &state.r, alpha, &state.s);
        sub_scaled(&mut state.u, &state.k, alpha, &state.l);
        sub_scaled(&mut state.y, &state.w, alpha, &state.z);
        let nq = norm2_slice(&state.q);
        let nu = norm2_slice(&state.u);
        let ny = norm2_slice(&state.y);

        let mut inputs = LocalErrorInputs {
            alpha,
            beta,
            omega: 0.0,
            omega_prev,
            x: nx,
            r: nr,
            k: nk,
            w: nw,
            m: nm,
            t: nt,
            g_prev: ng_prev,
            s_prev: ns_prev,
            l_prev: nl_prev,
            z_prev: nz_prev,
            n_prev: nn_prev,
            v_prev: nv_prev,
            g: ng,
            s: ns,
            l: nl,
            z: nz,
            q: nq,
            u: nu,
            y: ny,
            n: 0.0,
            v: 0.0,
        };

        if nq <= target {
            // Half-step convergence; the omega = 0 limit of the update
            // lines keeps k and w coherent with the new residual.
            axpy_in_place(alpha, &state.g, &mut state.x);
            state.r.as_mut_slice().copy_from_slice(&state.q);
            state.k.as_mut_slice().copy_from_slice(&state.u);
            state.w.as_mut_slice().copy_from_slice(&state.y);
            state.alpha = alpha;
            state.beta = beta;
            state.omega = 0.0;
            trace.push(alpha, beta, 0.0);
            let d = local_error_bounds(&inputs, &consts);
            bounds.update(alpha, beta, 0.0, omega_prev, &d);

            state.iteration = i + 1;
            let mut record = measure_gaps(&state, a, m, b);
            record.bound_f_r = bounds.f_r();
            history.push(make_row(record, &trace, i + 1, zero_rows));
            if let Some(h) = hook.as_deref_mut() {
                h.on_iteration(&state);
            }
            status = SolveStatus::Converged;
            break;
        }

        let qy = dot_slices(&state.q, &state.y);
        let yy = dot_slices(&state.y, &state.y);
        apply_preconditioner_into(m, &state.z, &mut state.n);
        spmv_into(a, &state.n, &mut state.v);
        counts.prec_applies += 1;
        counts.spmv += 1;
        inputs.n = norm2_slice(&state.n);
        inputs.v = norm2_slice(&state.v);

        if !qy.is_finite() || denominator_unusable(yy, opts.breakdown_eps) {
            status = SolveStatus::Breakdown;
            break;
        }
        let omega = qy / yy;
        if !omega.is_finite() {
            status = SolveStatus::Breakdown;
            break;
        }
        inputs.omega = omega;

        x_update(&mut state.x, alpha, &state.g, omega, &state.u);
        sub_scaled(&mut state.r, &state.q, omega, &state.y);
        half_fused_update(&mut state.k, &state.u, omega, &state.m, alpha, &state.n);
        half_fused_update(&mut state.w, &state.y, omega, &state.t, alpha, &state.v);

        let do_replace = should_replace(policy, prev_pair, curr_pair, r0_norm, i);
        if do_replace {
            let (extra_spmv, extra_prec) =
                perform_replacement(&mut state, a, m, b, &mut bounds, b_norm);
            counts.spmv += extra_spmv;
            counts.prec_applies += extra_prec;
            counts.replacements += 1;
            zero_rows = i + 1;
        } else {
            let d = local_error_bounds(&inputs, &consts);
            bounds.update(alpha, beta, omega, omega_prev, &d);
        }

        let rho_new = dot_slices(&state.r0_shadow, &state.r);
        let rho_w = dot_slices(&state.r0_shadow, &state.w);
        let rho_s = dot_slices(&state.r0_shadow, &state.s);
        let rho_z = dot_slices(&state.r0_shadow, &state.z);
        apply_preconditioner_into(m, &state.w, &mut state.m);
        spmv_into(a, &state.m, &mut state.t);
        counts.prec_applies += 1;
        counts.spmv += 1;

        if denominator_unusable(rho, opts.breakdown_eps) {
            status = SolveStatus::Breakdown;
            break;
        }
        let beta_next = ((alpha / omega) * rho_new) / rho;
        if !beta_next.is_finite() {
            status = SolveStatus::Breakdown;
            break;
        }
        let denom = (rho_w + beta_next * rho_s) - (beta_next * omega) * rho_z;
        if denominator_unusable(denom, opts.breakdown_eps) {
            status = SolveStatus::Breakdown;
            break;
        }
        let alpha_next = rho_new / denom;
        if !alpha_next.is_finite() {
            status = SolveStatus::Breakdown;
            break;
        }

        state.alpha = alpha;
        state.beta = beta;
        state.omega = omega;
        state.dot_r0_r = rho_new;
        state.dot_r0_w = rho_w;
        state.dot_r0_s = rho_s;
        state.dot_r0_z = rho_z;
        trace.push(alpha, beta, omega);

        state.iteration = i + 1;
        let mut record = measure_gaps(&state, a, m, b);
        record.bound_f_r = bounds.f_r();
        record.replaced = do_replace;
        let rec_norm = record.recursive_residual_norm;
        let true_norm = record.true_residual_norm;
        history.push(make_row(record, &trace, i + 1, zero_rows));
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

        prev_pair = Some(curr_pair);
        alpha = alpha_next;
        beta = beta_next;
        omega_prev = omega;
        rho = rho_new;
    }

    history.status = Some(status);
    Ok(finish(state, status, history, trace, counts))
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
