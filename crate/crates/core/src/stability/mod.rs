//! Gap instrumentation and running rounding-error bounds.
//!
//! The solvers maintain recurrences whose computed vectors drift away from
//! their true counterparts; this module measures those gaps out of band,
//! evaluates per-iteration local rounding-error bounds, and accumulates them
//! into a running bound `f^r` on the residual gap that is cheap enough to
//! drive automated residual replacement.

pub mod propagation;

use crate::matrix::{spmv_into, CsrMatrix};
use crate::precond::{apply_preconditioner_into, Preconditioner};
use crate::solvers::SolverState;
use crate::vector::DenseVector;
use crate::UNIT_ROUNDOFF;

pub use propagation::{
    product_column_norms, product_column_norms_with_reset, propagation_matrices,
    PropagationMatrices, SquareMatrix, PRODUCT_LABELS,
};

/// Per-iteration gap measurements and the running bound, one row of the
/// convergence history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GapRecord {
    pub iteration: usize,
    pub recursive_residual_norm: f64,
    pub true_residual_norm: f64,
    /// ||(b - A x) - r||
    pub gap_r: f64,
    /// ||A g - s||
    pub gap_s: f64,
    /// ||A k - w||
    pub gap_w: f64,
    /// ||A l - z||
    pub gap_z: f64,
    /// ||M^-1 r - k||
    pub gap_k: f64,
    /// ||M^-1 s - l||
    pub gap_l: f64,
    /// Running bound f^r on gap_r.
    pub bound_f_r: f64,
    /// True when this row's state was produced by a replacement step.
    pub replaced: bool,
}

/// Recurrence coefficients actually used in each iteration, in the pipelined
/// indexing convention: entry `i` holds the alpha and omega computed in
/// iteration `i` and the beta consumed by iteration `i` (`beta_0 = 0`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoefficientTrace {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub omegas: Vec<f64>,
}

impl CoefficientTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, alpha: f64, beta: f64, omega: f64) {
        self.alphas.push(alpha);
        self.betas.push(beta);
        self.omegas.push(omega);
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Problem constants entering the local bounds.
#[derive(Clone, Copy, Debug)]
pub struct LocalBoundConsts {
    /// Estimate of ||A||_2, safety-inflated.
    pub a_norm: f64,
    /// Estimate of ||M^-1||_2, safety-inflated.
    pub minv_norm: f64,
    /// mu(A) * sqrt(N), the matvec rounding amplifier.
    pub mu_sqrt_n: f64,
    /// mu~(M) * sqrt(N), the preconditioner-apply amplifier.
    pub mu_tilde_sqrt_n: f64,
    pub eps: f64,
}

/// Norm estimates are inflated by this factor before entering the bounds so
/// that an estimate slightly below the true norm cannot break rigor.
pub const NORM_SAFETY_FACTOR: f64 = 1.01;

impl LocalBoundConsts {
    /// Builds constants from raw norm estimates, applying the safety factor.
    pub fn new(a_norm: f64, minv_norm: f64, mu: usize, mu_tilde: usize, n: usize) -> Self {
        Self::with_norms_as_given(
            a_norm * NORM_SAFETY_FACTOR,
            minv_norm * NORM_SAFETY_FACTOR,
            mu,
            mu_tilde,
            n,
        )
    }

    /// Uses the norms exactly as given. For callers that already hold
    /// rigorous upper bounds.
    pub fn with_norms_as_given(
        a_norm: f64,
        minv_norm: f64,
        mu: usize,
        mu_tilde: usize,
        n: usize,
    ) -> Self {
        let sqrt_n = (n as f64).sqrt();
        LocalBoundConsts {
            a_norm,
            minv_norm,
            mu_sqrt_n: mu as f64 * sqrt_n,
            mu_tilde_sqrt_n: mu_tilde as f64 * sqrt_n,
            eps: UNIT_ROUNDOFF,
        }
    }
}

/// Norms and coefficients harvested from one pipelined iteration, in the
/// order the quantities materialize.
#[derive(Clone, Copy, Debug, Default)]
pub struct LocalErrorInputs {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub omega_prev: f64,
    /// ||x_i||, ||r_i||, ||k_i||, ||w_i||, ||m_i||, ||t_i|| at the top of
    /// the iteration.
    pub x: f64,
    pub r: f64,
    pub k: f64,
    pub w: f64,
    pub m: f64,
    pub t: f64,
    /// Previous-iteration auxiliary norms, also read at the top.
    pub g_prev: f64,
    pub s_prev: f64,
    pub l_prev: f64,
    pub z_prev: f64,
    pub n_prev: f64,
    pub v_prev: f64,
    /// Norms after the auxiliary updates of this iteration.
    pub g: f64,
    pub s: f64,
    pub l: f64,
    pub z: f64,
    pub q: f64,
    pub u: f64,
    pub y: f64,
    /// Norms of the freshly applied M^-1 z and A n.
    pub n: f64,
    pub v: f64,
}

/// Upper bounds on the per-iteration local rounding errors, each already
/// multiplied by eps.
#[derive(Clone, Copy, Debug, Default)]
pub struct LocalErrorBounds {
    pub g: f64,
    pub x: f64,
    pub s: f64,
    pub r: f64,
    pub l: f64,
    pub z: f64,
    pub k: f64,
    pub w: f64,
    pub q: f64,
    pub u: f64,
    pub y: f64,
}

/// Evaluates the eleven local bounds of one pipelined iteration.
pub fn local_error_bounds(inp: &LocalErrorInputs, c: &LocalBoundConsts) -> LocalErrorBounds {
    let eps = c.eps;
    let a = c.a_norm;
    let mi = c.minv_norm;
    let mu = c.mu_sqrt_n;
    let mt = c.mu_tilde_sqrt_n;
    let ab = inp.beta.abs();
    let abw = (inp.beta * inp.omega_prev).abs();
    let aa = inp.alpha.abs();
    let ao = inp.omega.abs();
    let aoa = (inp.omega * inp.alpha).abs();

    LocalErrorBounds {
        g: (inp.k + 3.0 * ab * inp.g_prev + 4.0 * abw * inp.l_prev) * eps,
        x: (2.0 * inp.x + 3.0 * aa * inp.g + 2.0 * ao * inp.u) * eps,
        s: (inp.w + 3.0 * ab * inp.s_prev + 4.0 * abw * inp.z_prev) * eps,
        r: (inp.q + 2.0 * ao * inp.y) * eps,
        l: (inp.m
            + mt * mi * inp.w
            + 3.0 * ab * inp.l_prev
            + 4.0 * abw * inp.n_prev
            + mt * mi * abw * inp.z_prev)
            * eps,
        z: (inp.t
            + mu * a * inp.m
            + mt * a * mi * inp.w
            + 3.0 * ab * inp.z_prev
            + 4.0 * abw * inp.v_prev
            + mu * a * abw * inp.n_prev
            + mt * a * mi * abw * inp.z_prev)
            * eps,
        k: (inp.u + 3.0 * ao * inp.m + mt * mi * ao * inp.w + 4.0 * aoa * inp.n
            + mt * mi * aoa * inp.z)
            * eps,
        w: (inp.y
            + 3.0 * ao * inp.t
            + mu * a * ao * inp.m
            + mt * a * mi * ao * inp.w
            + 4.0 * aoa * inp.v
            + mu * a * aoa * inp.n
            + mt * a * mi * aoa * inp.z)
            * eps,
        q: (inp.r + 2.0 * aa * inp.s) * eps,
        u: (inp.k + 2.0 * aa * inp.l) * eps,
        y: (inp.w + 2.0 * aa * inp.z) * eps,
    }
}

/// Inputs to the three classic-recurrence local bounds.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClassicErrorInputs {
    pub alpha: f64,
    pub omega: f64,
    /// ||x_i||, ||r_i||, ||p_i|| at the top of the iteration.
    pub x: f64,
    pub r: f64,
    pub p: f64,
    pub g: f64,
    pub s: f64,
    pub q: f64,
    pub u: f64,
    pub y: f64,
}

/// Classic per-iteration bounds on delta^x, delta^r, delta^q, each times eps.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClassicErrorBounds {
    pub x: f64,
    pub r: f64,
    pub q: f64,
}

pub fn classic_error_bounds(inp: &ClassicErrorInputs, c: &LocalBoundConsts) -> ClassicErrorBounds {
    let eps = c.eps;
    let a = c.a_norm;
    let mi = c.minv_norm;
    let mu = c.mu_sqrt_n;
    let mt = c.mu_tilde_sqrt_n;
    let aa = inp.alpha.abs();
    let ao = inp.omega.abs();

    ClassicErrorBounds {
        x: (2.0 * inp.x + 3.0 * aa * inp.g + mt * mi * aa * inp.p + 2.0 * ao * inp.u
            + mt * mi * ao * inp.q)
            * eps,
        r: (inp.q + 2.0 * ao * inp.y + mu * a * ao * inp.u + mt * a * mi * ao * inp.q) * eps,
        q: (inp.r + 2.0 * aa * inp.s + mu * a * aa * inp.g + mt * a * mi * aa * inp.p) * eps,
    }
}

/// Running accumulated bounds on the residual and auxiliary gaps.
///
/// `dr` is the bound `f^r_i` on `||(b - A x_i) - r_i||`; the others feed its
/// recursion. `dk`/`dl` bound the preconditioner-side gaps.
#[derive(Clone, Copy, Debug)]
pub struct LocalBoundState {
    pub dr: f64,
    pub dw: f64,
    pub ds: f64,
    pub dz: f64,
    pub dk: f64,
    pub dl: f64,
    pub consts: LocalBoundConsts,
}

impl LocalBoundState {
    /// Initial bounds right after the pipelined start-up: `x0`, `b`, the
    /// initial residual `r0` and the vectors `k0 = M^-1 r0`, `w0 = A k0`.
    /// `g`, `s`, `l`, `z` do not exist yet, so their accumulators start at
    /// zero and iteration 0 (with `beta_0 = 0`) seeds them.
    pub fn initial(consts: LocalBoundConsts, b_norm: f64, x0_norm: f64, k0_norm: f64, r0_norm: f64) -> Self {
        let eps = consts.eps;
        LocalBoundState {
            dr: ((consts.mu_sqrt_n + 1.0) * consts.a_norm * x0_norm + b_norm) * eps,
            dw: consts.mu_sqrt_n * consts.a_norm * k0_norm * eps,
            ds: 0.0,
            dz: 0.0,
            dk: consts.mu_tilde_sqrt_n * consts.minv_norm * r0_norm * eps,
            dl: 0.0,
            consts,
        }
    }

    /// Advances all running bounds by one iteration. `d` holds this
    /// iteration's local bounds; coefficient arguments are the values used
    /// in the same iteration.
    pub fn update(&mut self, alpha: f64, beta: f64, omega: f64, omega_prev: f64, d: &LocalErrorBounds) {
        let a = self.consts.a_norm;
        let mi = self.consts.minv_norm;
        let ab = beta.abs();
        let abw = (beta * omega_prev).abs();
        let aa = alpha.abs();
        let ao = omega.abs();
        let aoa = (omega * alpha).abs();

        let dz_new = ab * self.dz + a * d.l + d.z;
        let ds_new = self.dw + ab * self.ds + abw * self.dz + a * d.g + d.s;
        let dl_new = ab * self.dl + mi * d.s + d.l;

        self.dr += aa * ds_new + ao * self.dw + aoa * dz_new + a * d.x + d.r + ao * a * d.u + d.q
            + ao * d.y;
        self.dk += aa * dl_new + mi * d.r + d.k + mi * d.q + d.u + ao * mi * d.y;
        self.dw += aa * dz_new + a * d.k + d.w + a * d.u + d.y;
        self.ds = ds_new;
        self.dz = dz_new;
        self.dl = dl_new;
    }

    /// Resets the accumulators after a residual replacement. Every replaced
    /// vector is one fresh operator application away from its exact
    /// counterpart, so each bound restarts at its single-application form.
    pub fn reset_after_replacement(
        &mut self,
        b_norm: f64,
        x_norm: f64,
        r_norm: f64,
        k_norm: f64,
        g_norm: f64,
        l_norm: f64,
        s_norm: f64,
    ) {
        let c = &self.consts;
        let eps = c.eps;
        self.dr = ((c.mu_sqrt_n + 1.0) * c.a_norm * x_norm + b_norm) * eps;
        self.dw = c.mu_sqrt_n * c.a_norm * k_norm * eps;
        self.ds = c.mu_sqrt_n * c.a_norm * g_norm * eps;
        self.dz = c.mu_sqrt_n * c.a_norm * l_norm * eps;
        self.dk = c.mu_tilde_sqrt_n * c.minv_norm * r_norm * eps;
        self.dl = c.mu_tilde_sqrt_n * c.minv_norm * s_norm * eps;
    }

    /// The running bound f^r on the residual gap.
    pub fn f_r(&self) -> f64 {
        self.dr
    }
}

/// Residual replacement policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReplacementPolicy {
    /// Never replace.
    None,
    /// Replace every `period` iterations while the residual is still well
    /// above its final attainable level.
    Periodic { period: usize },
    /// Replace when the running bound `f^r` first crosses `tau * ||r_i||`.
    Automated { tau: f64 },
}

/// Default automated-policy threshold, sqrt of the unit roundoff.
pub fn default_replacement_tau() -> f64 {
    UNIT_ROUNDOFF.sqrt()
}

impl ReplacementPolicy {
    pub fn automated_default() -> Self {
        ReplacementPolicy::Automated {
            tau: default_replacement_tau(),
        }
    }
}

/// Decides whether iteration `i` should replace, given the bound/residual
/// pairs `(f^r, ||r||)` of the previous and current iteration.
///
/// Periodic replacement stops once `||r_i||` has dropped below
/// `sqrt(eps) * ||r_0||`; automated replacement fires on the first crossing
/// of `f^r_i > tau * ||r_i||` with the previous iteration still below.
pub fn should_replace(
    policy: ReplacementPolicy,
    prev: Option<(f64, f64)>,
    curr: (f64, f64),
    r0_norm: f64,
    i: usize,
) -> bool {
    match policy {
        ReplacementPolicy::None => false,
        ReplacementPolicy::Periodic { period } => {
            if period == 0 || i == 0 || i % period != 0 {
                return false;
            }
            curr.1 >= UNIT_ROUNDOFF.sqrt() * r0_norm
        }
        ReplacementPolicy::Automated { tau } => match prev {
            None => false,
            Some((f_prev, r_prev)) => f_prev <= tau * r_prev && curr.0 > tau * curr.1,
        },
    }
}

fn diff_norm(u: &[f64], v: &[f64]) -> f64 {
    let mut sum = 0.0;
    for j in 0..u.len() {
        let d = u[j] - v[j];
        sum += d * d;
    }
    sum.sqrt()
}

fn norm(v: &[f64]) -> f64 {
    let mut sum = 0.0;
    for &x in v {
        sum += x * x;
    }
    sum.sqrt()
}

/// Measures the six recurrence gaps of the current state with fresh operator
/// applications. Purely observational: the state is not modified and the
/// applications are not counted against the solver.
pub fn measure_gaps(
    state: &SolverState,
    a: &CsrMatrix,
    m: &Preconditioner,
    b: &DenseVector,
) -> GapRecord {
    let n = b.len();
    let mut applied = vec![0.0; n];
    let mut true_res = vec![0.0; n];

    spmv_into(a, &state.x, &mut applied);
    for j in 0..n {
        true_res[j] = b[j] - applied[j];
    }
    let true_residual_norm = norm(&true_res);
    let gap_r = diff_norm(&true_res, &state.r);

    spmv_into(a, &state.g, &mut applied);
    let gap_s = diff_norm(&applied, &state.s);
    spmv_into(a, &state.k, &mut applied);
    let gap_w = diff_norm(&applied, &state.w);
    spmv_into(a, &state.l, &mut applied);
    let gap_z = diff_norm(&applied, &state.z);

    apply_preconditioner_into(m, &state.r, &mut applied);
    let gap_k = diff_norm(&applied, &state.k);
    apply_preconditioner_into(m, &state.s, &mut applied);
    let gap_l = diff_norm(&applied, &state.l);

    GapRecord {
        iteration: state.iteration,
        recursive_residual_norm: norm(&state.r),
        true_residual_norm,
        gap_r,
        gap_s,
        gap_w,
        gap_z,
        gap_k,
        gap_l,
        bound_f_r: 0.0,
        replaced: false,
    }
}

/// Replaces the drifting recurrence vectors by freshly computed ones:
/// r from b - A x, then the chains k, w and s, l, z from single operator
/// applications off the undisturbed x and g. Returns the operator
/// application counts (spmv, preconditioner applies) spent.
pub fn replace_vectors(
    state: &mut SolverState,
    a: &CsrMatrix,
    m: &Preconditioner,
    b: &DenseVector,
) -> (usize, usize) {
    let n = b.len();
    let mut applied = vec![0.0; n];

    spmv_into(a, &state.x, &mut applied);
    for j in 0..n {
        state.r[j] = b[j] - applied[j];
    }
    apply_preconditioner_into(m, &state.r, &mut state.k);
    spmv_into(a, &state.k, &mut state.w);
    spmv_into(a, &state.g, &mut state.s);
    apply_preconditioner_into(m, &state.s, &mut state.l);
    spmv_into(a, &state.l, &mut state.z);
    (4, 2)
}

/// `replace_vectors` plus the bound restart for solvers that carry running
/// bounds.
pub fn perform_replacement(
    state: &mut SolverState,
    a: &CsrMatrix,
    m: &Preconditioner,
    b: &DenseVector,
    bounds: &mut LocalBoundState,
    b_norm: f64,
) -> (usize, usize) {
    let spent = replace_vectors(state, a, m, b);
    bounds.reset_after_replacement(
        b_norm,
        norm(&state.x),
        norm(&state.r),
        norm(&state.k),
        norm(&state.g),
        norm(&state.l),
        norm(&state.s),
    );
    spent
}
