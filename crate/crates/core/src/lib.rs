//! Deterministic sparse Krylov solvers with rounding-error instrumentation.
//!
//! The crate provides CSR matrices and strictly sequential binary64 kernels,
//! five finite-difference test problems, ICC(0) preconditioning, classic and
//! pipelined BiCGStab/CG, and the machinery to measure and bound the gap
//! between recursive and true residuals at run time, including residual
//! replacement strategies.
//!
//! Every kernel accumulates left-to-right with no FMA and no internal
//! threading, so identical inputs give bitwise identical results.

pub mod error;
pub mod history;
pub mod io;
pub mod matrix;
pub mod norm_est;
pub mod precond;
pub mod solvers;
pub mod stability;
pub mod stencil;
pub mod vector;

pub use error::{Error, Result};
pub use history::{read_csv, ConvergenceHistory, CsvRow, HistoryRow, CSV_HEADER};
pub use matrix::{max_row_nnz, scale_matrix, spmv, spmv_into, CsrMatrix};
pub use norm_est::{estimate_two_norm, NormEstimate};
pub use precond::{
    apply_preconditioner, estimate_preconditioner_norm, icc0_factor, IccFactor, Preconditioner,
};
pub use solvers::{
    bicgstab_classic, bicgstab_pipelined, cg_classic, cg_pipelined, IterationHook, OpCounts,
    ProblemNorms, SolveOptions, SolveResult, SolveStatus, SolverState, StoppingNorm,
};
pub use stability::{
    measure_gaps, product_column_norms, propagation_matrices, CoefficientTrace, GapRecord,
    LocalBoundConsts, LocalBoundState, ReplacementPolicy, PRODUCT_LABELS,
};
pub use stencil::{stencil_matrix, ProblemId, StencilSpec};
pub use vector::{axpy, dot, norm2, DenseVector};

/// Unit roundoff of binary64 (2^-53), the epsilon of the rounding model.
pub const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;
