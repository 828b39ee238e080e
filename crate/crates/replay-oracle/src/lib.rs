//! Exact-rational replay of the solver recurrences.
//!
//! Every finite binary64 value converts exactly to a `BigRational`, so
//! replaying a recurrence statement in rational arithmetic from the solver's
//! own floating-point snapshots isolates the rounding error of exactly that
//! statement. The replays here define each local error against the statement
//! RHS, substituting exact operator products where the corresponding printed
//! bound carries the operator rounding term.

use krylov_gap_core::{CoefficientTrace, CsrMatrix, DenseVector, IterationHook, SolverState};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

/// Exact conversion; panics on NaN or infinity.
pub fn rat(x: f64) -> Rat {
    BigRational::from_float(x).expect("non-finite value has no rational form")
}

pub fn rat_vec(v: &[f64]) -> Vec<Rat> {
    v.iter().map(|&x| rat(x)).collect()
}

/// Round-trips a rational magnitude to f64 for tolerance comparisons.
pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Euclidean norm of a rational vector, evaluated in f64.
pub fn norm_f64(v: &[Rat]) -> f64 {
    let sum: Rat = v.iter().map(|x| x * x).sum();
    to_f64(&sum).sqrt()
}

pub fn is_zero_vec(v: &[Rat]) -> bool {
    v.iter().all(Zero::is_zero)
}

/// Sparse matrix with exact rational entries.
pub struct RatMatrix {
    n: usize,
    rows: Vec<Vec<(usize, Rat)>>,
}

impl RatMatrix {
    pub fn from_csr(a: &CsrMatrix) -> Self {
        let n = a.n_rows();
        let mut rows = Vec::with_capacity(n);
        for r in 0..n {
            let (cols, vals) = a.row(r);
            rows.push(
                cols.iter()
                    .zip(vals)
                    .map(|(&c, &v)| (c, rat(v)))
                    .collect(),
            );
        }
        RatMatrix { n, rows }
    }

    pub fn apply(&self, v: &[Rat]) -> Vec<Rat> {
        let mut out = vec![Rat::zero(); self.n];
        for (r, row) in self.rows.iter().enumerate() {
            let mut sum = Rat::zero();
            for (c, val) in row {
                sum += val * &v[*c];
            }
            out[r] = sum;
        }
        out
    }
}

fn sub(u: &[Rat], v: &[Rat]) -> Vec<Rat> {
    u.iter().zip(v).map(|(a, b)| a - b).collect()
}

fn scaled(s: &Rat, v: &[Rat]) -> Vec<Rat> {
    v.iter().map(|x| s * x).collect()
}

/// Records every end-of-iteration solver state.
#[derive(Default)]
pub struct SnapshotHook {
    pub states: Vec<SolverState>,
}

impl SnapshotHook {
    pub fn new() -> Self {
        Self::default()
    }
}

impl IterationHook for SnapshotHook {
    fn on_iteration(&mut self, state: &SolverState) {
        self.states.push(state.clone());
    }
}

/// Exact local errors of one classic BiCGStab iteration.
pub struct ClassicIterationErrors {
    /// delta^q_i = q - (r - alpha A g), A applied exactly.
    pub delta_q: Vec<Rat>,
    /// delta^x_{i+1} = x_new - ((x + alpha g) + omega u), pure arithmetic.
    pub delta_x: Vec<Rat>,
    /// delta^r_{i+1} = r_new - (q - omega A u), A applied exactly.
    pub delta_r: Vec<Rat>,
}

pub struct ClassicReplay {
    pub iterations: Vec<ClassicIterationErrors>,
    /// Delta r_0 = (b - A x_0) - r_0, exact.
    pub initial_gap: Vec<Rat>,
    /// Exact residual gap at the final snapshot.
    pub final_gap: Vec<Rat>,
    /// final_gap minus the telescoped superposition
    /// initial_gap - sum_j (A delta^x_{j+1} + delta^r_{j+1} + delta^q_j);
    /// exactly zero when the replay and the recurrence agree.
    pub superposition_defect: Vec<Rat>,
}

/// Replays classic BiCGStab from its snapshots. Snapshot `i` must hold the
/// state after iteration `i`; the initial vectors are reconstructed from
/// `x0` bitwise (same kernels, same order).
pub fn replay_classic(
    a: &CsrMatrix,
    b: &DenseVector,
    x0: &DenseVector,
    snapshots: &[SolverState],
    trace: &CoefficientTrace,
) -> ClassicReplay {
    assert_eq!(snapshots.len(), trace.len(), "one snapshot per iteration");
    let ra = RatMatrix::from_csr(a);
    let rb = rat_vec(b);

    // Initial residual exactly as the solver computed it.
    let r0_f = {
        let mut ax = vec![0.0; b.len()];
        krylov_gap_core::spmv_into(a, x0, &mut ax);
        let mut r = vec![0.0; b.len()];
        for j in 0..b.len() {
            r[j] = b[j] - ax[j];
        }
        r
    };
    let initial_gap = sub(&sub(&rb, &ra.apply(&rat_vec(x0))), &rat_vec(&r0_f));

    let mut iterations = Vec::with_capacity(snapshots.len());
    let mut accum = initial_gap.clone();

    for (i, snap) in snapshots.iter().enumerate() {
        let (x_top, r_top) = if i == 0 {
            (rat_vec(x0), rat_vec(&r0_f))
        } else {
            (
                rat_vec(&snapshots[i - 1].x),
                rat_vec(&snapshots[i - 1].r),
            )
        };
        let alpha = rat(trace.alphas[i]);
        let omega = rat(trace.omegas[i]);
        let g = rat_vec(&snap.g);
        let u = rat_vec(&snap.u);
        let q = rat_vec(&snap.q);
        let x_new = rat_vec(&snap.x);
        let r_new = rat_vec(&snap.r);

        let a_g = ra.apply(&g);
        let delta_q = sub(&q, &sub(&r_top, &scaled(&alpha, &a_g)));

        let (delta_x, delta_r) = if trace.omegas[i] == 0.0 {
            // Half-step exit: x += alpha g, r = q.
            let pred_x: Vec<Rat> = x_top
                .iter()
                .zip(&g)
                .map(|(x, gj)| x + &alpha * gj)
                .collect();
            (sub(&x_new, &pred_x), sub(&r_new, &q))
        } else {
            let pred_x: Vec<Rat> = x_top
                .iter()
                .zip(&g)
                .zip(&u)
                .map(|((x, gj), uj)| (x + &alpha * gj) + &omega * uj)
                .collect();
            let a_u = ra.apply(&u);
            let pred_r = sub(&q, &scaled(&omega, &a_u));
            (sub(&x_new, &pred_x), sub(&r_new, &pred_r))
        };

        let a_dx = ra.apply(&delta_x);
        for j in 0..accum.len() {
            accum[j] = &accum[j] - &a_dx[j] - &delta_r[j] - &delta_q[j];
        }
        iterations.push(ClassicIterationErrors {
            delta_q,
            delta_x,
            delta_r,
        });
    }

    let last = snapshots.last().expect("at least one iteration");
    let final_gap = sub(&sub(&rb, &ra.apply(&rat_vec(&last.x))), &rat_vec(&last.r));
    let superposition_defect = sub(&final_gap, &accum);

    ClassicReplay {
        iterations,
        initial_gap,
        final_gap,
        superposition_defect,
    }
}

/// Exact local errors of one pipelined BiCGStab iteration, in the statement
/// order of the loop. The z and w errors fold the exact products A m and
/// A n in, matching the printed bounds that carry the matvec rounding
/// terms; all others are pure arithmetic errors.
pub struct PipelinedIterationErrors {
    pub delta_g: Vec<Rat>,
    pub delta_s: Vec<Rat>,
    pub delta_l: Vec<Rat>,
    pub delta_z: Vec<Rat>,
    pub delta_q: Vec<Rat>,
    pub delta_u: Vec<Rat>,
    pub delta_y: Vec<Rat>,
    pub delta_x: Vec<Rat>,
    pub delta_r: Vec<Rat>,
    pub delta_k: Vec<Rat>,
    pub delta_w: Vec<Rat>,
}

/// Replays pipelined BiCGStab (identity preconditioner, no replacement) from
/// its snapshots. Snapshot `i` holds the state after iteration `i`; the
/// start-up vectors are reconstructed bitwise.
pub fn replay_pipelined(
    a: &CsrMatrix,
    b: &DenseVector,
    x0: &DenseVector,
    snapshots: &[SolverState],
    trace: &CoefficientTrace,
) -> Vec<PipelinedIterationErrors> {
    assert_eq!(snapshots.len(), trace.len(), "one snapshot per iteration");
    let ra = RatMatrix::from_csr(a);
    let n = b.len();

    // Bitwise reconstruction of the start-up state (M = identity).
    let mut r0 = vec![0.0; n];
    {
        let mut ax = vec![0.0; n];
        krylov_gap_core::spmv_into(a, x0, &mut ax);
        for j in 0..n {
            r0[j] = b[j] - ax[j];
        }
    }
    let k0 = r0.clone();
    let mut w0 = vec![0.0; n];
    krylov_gap_core::spmv_into(a, &k0, &mut w0);
    let m0 = w0.clone();

    let zeros = vec![Rat::zero(); n];
    let mut out = Vec::with_capacity(snapshots.len());

    for (i, snap) in snapshots.iter().enumerate() {
        struct Top {
            x: Vec<Rat>,
            r: Vec<Rat>,
            k: Vec<Rat>,
            w: Vec<Rat>,
            m: Vec<Rat>,
            g: Vec<Rat>,
            s: Vec<Rat>,
            l: Vec<Rat>,
            z: Vec<Rat>,
            n_vec: Vec<Rat>,
        }
        let top = if i == 0 {
            Top {
                x: rat_vec(x0),
                r: rat_vec(&r0),
                k: rat_vec(&k0),
                w: rat_vec(&w0),
                m: rat_vec(&m0),
                g: zeros.clone(),
                s: zeros.clone(),
                l: zeros.clone(),
                z: zeros.clone(),
                n_vec: zeros.clone(),
            }
        } else {
            let p = &snapshots[i - 1];
            Top {
                x: rat_vec(&p.x),
                r: rat_vec(&p.r),
                k: rat_vec(&p.k),
                w: rat_vec(&p.w),
                m: rat_vec(&p.m),
                g: rat_vec(&p.g),
                s: rat_vec(&p.s),
                l: rat_vec(&p.l),
                z: rat_vec(&p.z),
                n_vec: rat_vec(&p.n),
            }
        };

        let alpha = rat(trace.alphas[i]);
        let beta = rat(trace.betas[i]);
        let omega = rat(trace.omegas[i]);
        let omega_prev = if i == 0 {
            Rat::zero()
        } else {
            rat(trace.omegas[i - 1])
        };

        let g = rat_vec(&snap.g);
        let s = rat_vec(&snap.s);
        let l = rat_vec(&snap.l);
        let z = rat_vec(&snap.z);
        let q = rat_vec(&snap.q);
        let u = rat_vec(&snap.u);
        let y = rat_vec(&snap.y);
        let x_new = rat_vec(&snap.x);
        let r_new = rat_vec(&snap.r);
        let k_new = rat_vec(&snap.k);
        let w_new = rat_vec(&snap.w);

        // aux(out, base, prev, inner) = base + beta (prev - omega_prev inner)
        let aux = |base: &[Rat], prev: &[Rat], inner: &[Rat]| -> Vec<Rat> {
            (0..n)
                .map(|j| &base[j] + &beta * (&prev[j] - &omega_prev * &inner[j]))
                .collect()
        };
        let delta_g = sub(&g, &aux(&top.k, &top.g, &top.l));
        let delta_s = sub(&s, &aux(&top.w, &top.s, &top.z));
        let delta_l = sub(&l, &aux(&top.m, &top.l, &top.n_vec));
        // z against exact products: t_i -> A m_i, v_{i-1} -> A n_{i-1}.
        let a_m_top = ra.apply(&top.m);
        let a_n_top = ra.apply(&top.n_vec);
        let delta_z = sub(&z, &aux(&a_m_top, &top.z, &a_n_top));

        let half = |lead: &[Rat], scale: &Rat, other: &[Rat]| -> Vec<Rat> {
            (0..n).map(|j| &lead[j] - scale * &other[j]).collect()
        };
        let delta_q = sub(&q, &half(&top.r, &alpha, &s));
        let delta_u = sub(&u, &half(&top.k, &alpha, &l));
        let delta_y = sub(&y, &half(&top.w, &alpha, &z));

        let (delta_x, delta_r, delta_k, delta_w) = if trace.omegas[i] == 0.0 {
            // Half-step exit: x += alpha g, r = q, k = u, w = y.
            let pred_x: Vec<Rat> = (0..n).map(|j| &top.x[j] + &alpha * &g[j]).collect();
            (
                sub(&x_new, &pred_x),
                sub(&r_new, &q),
                sub(&k_new, &u),
                sub(&w_new, &y),
            )
        } else {
            let n_vec = rat_vec(&snap.n);
            let pred_x: Vec<Rat> = (0..n)
                .map(|j| (&top.x[j] + &alpha * &g[j]) + &omega * &u[j])
                .collect();
            let pred_r = half(&q, &omega, &y);
            let pred_k: Vec<Rat> = (0..n)
                .map(|j| &u[j] - &omega * (&top.m[j] - &alpha * &n_vec[j]))
                .collect();
            // w against exact products: t_i -> A m_i, v_i -> A n_i.
            let a_n = ra.apply(&n_vec);
            let pred_w: Vec<Rat> = (0..n)
                .map(|j| &y[j] - &omega * (&a_m_top[j] - &alpha * &a_n[j]))
                .collect();
            (
                sub(&x_new, &pred_x),
                sub(&r_new, &pred_r),
                sub(&k_new, &pred_k),
                sub(&w_new, &pred_w),
            )
        };

        out.push(PipelinedIterationErrors {
            delta_g,
            delta_s,
            delta_l,
            delta_z,
            delta_q,
            delta_u,
            delta_y,
            delta_x,
            delta_r,
            delta_k,
            delta_w,
        });
    }
    out
}

/// Six exact gaps of a fully rational pipelined run.
pub struct RationalGaps {
    pub r: Vec<Rat>,
    pub s: Vec<Rat>,
    pub w: Vec<Rat>,
    pub z: Vec<Rat>,
    pub k: Vec<Rat>,
    pub l: Vec<Rat>,
}

impl RationalGaps {
    pub fn all_zero(&self) -> bool {
        is_zero_vec(&self.r)
            && is_zero_vec(&self.s)
            && is_zero_vec(&self.w)
            && is_zero_vec(&self.z)
            && is_zero_vec(&self.k)
            && is_zero_vec(&self.l)
    }
}

/// Runs the whole pipelined recurrence in exact rational arithmetic
/// (identity preconditioner) and measures the six gap definitions after
/// each iteration. With no rounding the recurrences are mutually
/// consistent, so every gap must be identically zero.
pub fn rational_pipelined_gaps(
    a: &CsrMatrix,
    b: &DenseVector,
    x0: &DenseVector,
    iters: usize,
) -> Vec<RationalGaps> {
    let ra = RatMatrix::from_csr(a);
    let rb = rat_vec(b);
    let n = b.len();

    let mut x = rat_vec(x0);
    let mut r = sub(&rb, &ra.apply(&x));
    let mut k = r.clone();
    let mut w = ra.apply(&k);
    let mut m = w.clone();
    let mut t = ra.apply(&m);

    let rho0: Rat = r.iter().map(|a| a * a).sum();
    let rho_w: Rat = r.iter().zip(&w).map(|(a, b)| a * b).sum();
    assert!(!rho_w.is_zero(), "rational alpha denominator vanished");
    let r0 = r.clone();
    let mut rho = rho0;
    let mut alpha = &rho / &rho_w;
    let mut beta = Rat::zero();
    let mut omega_prev = Rat::zero();

    let zeros = vec![Rat::zero(); n];
    let (mut g, mut s, mut l, mut z) = (zeros.clone(), zeros.clone(), zeros.clone(), zeros.clone());
    let (mut nv, mut vv) = (zeros.clone(), zeros);

    let dot = |u: &[Rat], v: &[Rat]| -> Rat { u.iter().zip(v).map(|(a, b)| a * b).sum() };
    let mut out = Vec::with_capacity(iters);

    for _ in 0..iters {
        let aux = |base: &[Rat], prev: &[Rat], inner: &[Rat], beta: &Rat, wp: &Rat| -> Vec<Rat> {
            (0..n)
                .map(|j| &base[j] + beta * (&prev[j] - wp * &inner[j]))
                .collect()
        };
        g = aux(&k, &g, &l, &beta, &omega_prev);
        s = aux(&w, &s, &z, &beta, &omega_prev);
        l = aux(&m, &l, &nv, &beta, &omega_prev);
        z = aux(&t, &z, &vv, &beta, &omega_prev);

        let q: Vec<Rat> = (0..n).map(|j| &r[j] - &alpha * &s[j]).collect();
        let u: Vec<Rat> = (0..n).map(|j| &k[j] - &alpha * &l[j]).collect();
        let y: Vec<Rat> = (0..n).map(|j| &w[j] - &alpha * &z[j]).collect();

        let qy = dot(&q, &y);
        let yy = dot(&y, &y);
        // M = I: n := M^-1 z = z, v := A n.
        nv = z.clone();
        vv = ra.apply(&nv);
        assert!(!yy.is_zero(), "rational omega denominator vanished");
        let omega = &qy / &yy;

        x = (0..n)
            .map(|j| (&x[j] + &alpha * &g[j]) + &omega * &u[j])
            .collect();
        r = (0..n).map(|j| &q[j] - &omega * &y[j]).collect();
        k = (0..n)
            .map(|j| &u[j] - &omega * (&m[j] - &alpha * &nv[j]))
            .collect();
        w = (0..n)
            .map(|j| &y[j] - &omega * (&t[j] - &alpha * &vv[j]))
            .collect();

        let rho_new = dot(&r0, &r);
        let rho_w = dot(&r0, &w);
        let rho_s = dot(&r0, &s);
        let rho_z = dot(&r0, &z);
        m = w.clone();
        t = ra.apply(&m);

        assert!(!rho.is_zero(), "rational beta denominator vanished");
        let beta_next = (&alpha / &omega) * &rho_new / &rho;
        let denom = &rho_w + &beta_next * &rho_s - (&beta_next * &omega) * &rho_z;
        assert!(!denom.is_zero(), "rational alpha denominator vanished");
        let alpha_next = &rho_new / &denom;

        out.push(RationalGaps {
            r: sub(&sub(&rb, &ra.apply(&x)), &r),
            s: sub(&ra.apply(&g), &s),
            w: sub(&ra.apply(&k), &w),
            z: sub(&ra.apply(&l), &z),
            k: sub(&r, &k),
            l: sub(&s, &l),
        });

        rho = rho_new;
        alpha = alpha_next;
        beta = beta_next;
        omega_prev = omega;
    }
    out
}

/// Max |entry| over a rational vector, as f64.
pub fn max_abs_f64(v: &[Rat]) -> f64 {
    v.iter()
        .map(|x| to_f64(&x.abs()))
        .fold(0.0, f64::max)
}
