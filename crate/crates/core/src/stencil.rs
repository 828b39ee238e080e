//! Finite-difference test problems TP1..TP5 on regular grids.
//!
//! Grid nodes are numbered row-major with x fastest, then y, then z.
//! Homogeneous Dirichlet boundaries: stencil legs leaving the grid are
//! dropped. Generated rows never store explicit zeros.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::{scale_matrix, CsrMatrix};
use crate::norm_est::{estimate_two_norm, NORM_EST_MAX_ITERS, NORM_EST_TOL};

/// The five built-in test problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemId {
    /// 2D 5-point Laplacian, SPD.
    Tp1,
    /// 2D 5-point, unsymmetric positive definite (east/south legs `-1+eps`).
    Tp2,
    /// 2D 5-point, symmetric indefinite (center `4-eps`).
    Tp3,
    /// 2D 9-point, SPD.
    Tp4,
    /// 3D 7-point, symmetric indefinite (center `6-eps`).
    Tp5,
}

impl ProblemId {
    pub const ALL: [ProblemId; 5] = [
        ProblemId::Tp1,
        ProblemId::Tp2,
        ProblemId::Tp3,
        ProblemId::Tp4,
        ProblemId::Tp5,
    ];

    pub fn is_three_dimensional(self) -> bool {
        matches!(self, ProblemId::Tp5)
    }

    /// True when the generated matrix is bitwise symmetric.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, ProblemId::Tp2)
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProblemId::Tp1 => "TP1",
            ProblemId::Tp2 => "TP2",
            ProblemId::Tp3 => "TP3",
            ProblemId::Tp4 => "TP4",
            ProblemId::Tp5 => "TP5",
        };
        f.write_str(s)
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TP1" => Ok(ProblemId::Tp1),
            "TP2" => Ok(ProblemId::Tp2),
            "TP3" => Ok(ProblemId::Tp3),
            "TP4" => Ok(ProblemId::Tp4),
            "TP5" => Ok(ProblemId::Tp5),
            other => Err(Error::UnknownProblem(other.to_string())),
        }
    }
}

/// Fully-specified stencil problem instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StencilSpec {
    pub problem_id: ProblemId,
    pub nx: usize,
    pub ny: usize,
    /// 1 for the 2D problems.
    pub nz: usize,
    /// Stencil perturbation; ignored by TP1/TP4.
    pub epsilon: f64,
    /// Rescale the matrix to unit estimated 2-norm.
    pub normalize: bool,
}

impl StencilSpec {
    /// Reference-size instance of `id` (TP1: 200x200, TP2: 1000x1000
    /// eps=1e-3, TP3: 500x500 eps=5e-4, TP4: 200x200, TP5: 50^3 eps=1e-2),
    /// normalized.
    pub fn reference(id: ProblemId) -> Self {
        let (nx, ny, nz, epsilon) = match id {
            ProblemId::Tp1 => (200, 200, 1, 0.0),
            ProblemId::Tp2 => (1000, 1000, 1, 1e-3),
            ProblemId::Tp3 => (500, 500, 1, 5e-4),
            ProblemId::Tp4 => (200, 200, 1, 0.0),
            ProblemId::Tp5 => (50, 50, 50, 1e-2),
        };
        StencilSpec {
            problem_id: id,
            nx,
            ny,
            nz,
            epsilon,
            normalize: true,
        }
    }

    /// Same problem at a smaller grid, keeping the reference epsilon.
    pub fn with_grid(mut self, nx: usize, ny: usize, nz: usize) -> Self {
        self.nx = nx;
        self.ny = ny;
        self.nz = nz;
        self
    }

    pub fn n(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "nx and ny must be >= 2, got {}x{}",
                self.nx, self.ny
            )));
        }
        match (self.problem_id.is_three_dimensional(), self.nz) {
            (true, nz) if nz < 2 => Err(Error::InvalidGrid(format!(
                "{} needs nz >= 2, got {nz}",
                self.problem_id
            ))),
            (false, nz) if nz != 1 => Err(Error::InvalidGrid(format!(
                "{} is two-dimensional, nz must be 1, got {nz}",
                self.problem_id
            ))),
            _ => {
                if !self.epsilon.is_finite() {
                    return Err(Error::InvalidGrid(format!(
                        "epsilon must be finite, got {}",
                        self.epsilon
                    )));
                }
                Ok(())
            }
        }
    }
}

/// One stencil leg: grid offset and coefficient.
struct Leg {
    dx: isize,
    dy: isize,
    dz: isize,
    value: f64,
}

fn legs_for(spec: &StencilSpec) -> Vec<Leg> {
    let eps = spec.epsilon;
    let leg = |dx, dy, dz, value| Leg { dx, dy, dz, value };
    match spec.problem_id {
        ProblemId::Tp1 => vec![
            leg(0, -1, 0, -1.0),
            leg(-1, 0, 0, -1.0),
            leg(0, 0, 0, 4.0),
            leg(1, 0, 0, -1.0),
            leg(0, 1, 0, -1.0),
        ],
        ProblemId::Tp2 => vec![
            leg(0, -1, 0, -1.0),
            leg(-1, 0, 0, -1.0),
            leg(0, 0, 0, 4.0),
            leg(1, 0, 0, -1.0 + eps),
            leg(0, 1, 0, -1.0 + eps),
        ],
        ProblemId::Tp3 => vec![
            leg(0, -1, 0, -1.0),
            leg(-1, 0, 0, -1.0),
            leg(0, 0, 0, 4.0 - eps),
            leg(1, 0, 0, -1.0),
            leg(0, 1, 0, -1.0),
        ],
        ProblemId::Tp4 => {
            let mut legs = Vec::with_capacity(9);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let value = match (dx.abs(), dy.abs()) {
                        (0, 0) => 20.0,
                        (1, 1) => -1.0,
                        _ => -4.0,
                    };
                    legs.push(leg(dx, dy, 0, value));
                }
            }
            legs
        }
        ProblemId::Tp5 => vec![
            leg(0, 0, -1, -1.0),
            leg(0, -1, 0, -1.0),
            leg(-1, 0, 0, -1.0),
            leg(0, 0, 0, 6.0 - eps),
            leg(1, 0, 0, -1.0),
            leg(0, 1, 0, -1.0),
            leg(0, 0, 1, -1.0),
        ],
    }
}

/// Assembles the CSR matrix for `spec`, rescaled to unit estimated 2-norm
/// when `spec.normalize` is set.
pub fn stencil_matrix(spec: &StencilSpec) -> Result<CsrMatrix> {
    spec.validate()?;
    let legs = legs_for(spec);
    let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
    let n = spec.n();

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(n * legs.len());
    let mut values = Vec::with_capacity(n * legs.len());
    row_offsets.push(0);

    let mut row_entries: Vec<(usize, f64)> = Vec::with_capacity(legs.len());
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                row_entries.clear();
                for leg in &legs {
                    let jx = ix as isize + leg.dx;
                    let jy = iy as isize + leg.dy;
                    let jz = iz as isize + leg.dz;
                    let inside = jx >= 0
                        && jx < nx as isize
                        && jy >= 0
                        && jy < ny as isize
                        && jz >= 0
                        && jz < nz as isize;
                    if inside {
                        let col = (jz as usize * ny + jy as usize) * nx + jx as usize;
                        row_entries.push((col, leg.value));
                    }
                }
                row_entries.sort_by_key(|&(col, _)| col);
                for &(col, value) in &row_entries {
                    col_indices.push(col);
                    values.push(value);
                }
                row_offsets.push(col_indices.len());
            }
        }
    }

    let a = CsrMatrix::new(n, n, row_offsets, col_indices, values)?;
    if spec.normalize {
        let est = estimate_two_norm(&a, NORM_EST_TOL, NORM_EST_MAX_ITERS);
        scale_matrix(&a, 1.0 / est.value)
    } else {
        Ok(a)
    }
}
