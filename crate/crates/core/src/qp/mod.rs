//! Dense convex quadratic programming.
//!
//! Problems are held in the canonical form
//!
//! ```text
//!   minimize    ½ xᵀQx + qᵀx + offset
//!   subject to  A x  = b
//!               l ≤ G x ≤ u
//! ```
//!
//! and solved with a primal-dual interior-point method (see [`solve`]). Dual
//! estimates follow the sign convention `Qx + q + Aᵀν + Gᵀμ = 0`, so a
//! positive `μ` marks an active upper bound and a negative `μ` an active lower
//! bound.

mod builder;
mod dump;
mod ipm;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use builder::QpBuilder;
pub use dump::dump_text;
pub use ipm::solve;

/// Tolerance used when checking that `Q` is positive semidefinite.
pub const PSD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("quadratic term is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotConvex(f64),
    #[error("inequality row {row} ({name}) has lower bound {lower} above upper bound {upper}")]
    EmptyRange {
        row: usize,
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A convex QP in canonical form.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub offset: f64,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_lower: DVector<f64>,
    pub ineq_upper: DVector<f64>,
    /// One name per variable, used in diagnostics and dumps.
    pub var_names: Vec<String>,
    /// One name per inequality row.
    pub ineq_names: Vec<String>,
    /// One name per equality row.
    pub eq_names: Vec<String>,
}

impl QpProblem {
    pub fn num_vars(&self) -> usize {
        self.lin.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_lower.len()
    }

    /// Checks dimensions, bound ordering, finiteness and convexity.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        if self.quad.nrows() != n || self.quad.ncols() != n {
            return Err(QpError::Dimension(format!(
                "Q is {}x{}, expected {n}x{n}",
                self.quad.nrows(),
                self.quad.ncols()
            )));
        }
        if self.eq_matrix.ncols() != n || self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err(QpError::Dimension(format!(
                "A is {}x{} with {} right-hand sides",
                self.eq_matrix.nrows(),
                self.eq_matrix.ncols(),
                self.eq_rhs.len()
            )));
        }
        let m = self.ineq_lower.len();
        if self.ineq_matrix.ncols() != n
            || self.ineq_matrix.nrows() != m
            || self.ineq_upper.len() != m
        {
            return Err(QpError::Dimension(format!(
                "G is {}x{} with {} lower and {} upper bounds",
                self.ineq_matrix.nrows(),
                self.ineq_matrix.ncols(),
                m,
                self.ineq_upper.len()
            )));
        }
        if self.var_names.len() != n {
            return Err(QpError::Dimension(format!(
                "{} variable names for {n} variables",
                self.var_names.len()
            )));
        }
        if self.quad.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("Q"));
        }
        if self.lin.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("q"));
        }
        if self.eq_matrix.iter().chain(self.eq_rhs.iter()).any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("A, b"));
        }
        if self.ineq_matrix.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("G"));
        }
        for r in 0..m {
            let (lo, hi) = (self.ineq_lower[r], self.ineq_upper[r]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(QpError::NonFinite("l, u"));
            }
            if lo > hi {
                return Err(QpError::EmptyRange {
                    row: r,
                    name: self.ineq_names.get(r).cloned().unwrap_or_default(),
                    lower: lo,
                    upper: hi,
                });
            }
        }
        if n > 0 {
            let sym = (&self.quad + self.quad.transpose()) * 0.5;
            let scale = sym.amax().max(1.0);
            let min_eig = sym.symmetric_eigenvalues().min();
            if min_eig < -PSD_TOLERANCE * scale {
                return Err(QpError::NotConvex(min_eig));
            }
        }
        Ok(())
    }

    /// `½ xᵀQx + qᵀx + offset`
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.quad * x)) + self.lin.dot(x) + self.offset
    }

    pub fn eq_residual(&self, x: &DVector<f64>) -> f64 {
        if self.num_eq() == 0 {
            return 0.0;
        }
        (&self.eq_matrix * x - &self.eq_rhs).amax()
    }

    /// Largest violation of `l ≤ Gx ≤ u`.
    pub fn ineq_violation(&self, x: &DVector<f64>) -> f64 {
        let gx = &self.ineq_matrix * x;
        (0..self.num_ineq())
            .map(|r| {
                (self.ineq_lower[r] - gx[r])
                    .max(gx[r] - self.ineq_upper[r])
                    .max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// `‖Qx + q + Aᵀν + Gᵀμ‖∞`
    pub fn stationarity(&self, x: &DVector<f64>, nu: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        let mut g = &self.quad * x + &self.lin;
        if self.num_eq() > 0 {
            g += self.eq_matrix.tr_mul(nu);
        }
        if self.num_ineq() > 0 {
            g += self.ineq_matrix.tr_mul(mu);
        }
        if g.is_empty() {
            0.0
        } else {
            g.amax()
        }
    }

    /// Largest complementarity product `|μ_r| · slack_r` over inequality rows,
    /// where the slack is measured against the bound the sign of `μ_r` selects.
    /// Also counts wrong-signed multipliers on infinite bounds.
    pub fn complementarity(&self, x: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        let gx = &self.ineq_matrix * x;
        let mut worst = 0.0_f64;
        for r in 0..self.num_ineq() {
            let m = mu[r];
            let term = if m > 0.0 {
                if self.ineq_upper[r].is_finite() {
                    m * (self.ineq_upper[r] - gx[r]).abs()
                } else {
                    m
                }
            } else if m < 0.0 {
                if self.ineq_lower[r].is_finite() {
                    -m * (gx[r] - self.ineq_lower[r]).abs()
                } else {
                    -m
                }
            } else {
                0.0
            };
            worst = worst.max(term);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
    Unbounded,
}

impl std::fmt::Display for QpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIter => "max-iter",
            QpStatus::Infeasible => "infeasible",
            QpStatus::Unbounded => "unbounded",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub eq_residual: f64,
    pub ineq_violation: f64,
    /// Multipliers for `Ax = b`.
    pub eq_duals: DVector<f64>,
    /// Multipliers for `l ≤ Gx ≤ u`.
    pub ineq_duals: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone)]
pub struct WarmStart {
    pub x: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
    pub warm_start: Option<WarmStart>,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            max_iter: 20_000,
            warm_start: None,
        }
    }
}

impl QpSettings {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            tol_primal: tol,
            tol_dual: tol,
            ..Self::default()
        }
    }
}
