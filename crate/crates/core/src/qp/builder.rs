use nalgebra::{DMatrix, DVector};

use super::QpProblem;

/// Incremental assembly of a [`QpProblem`] from named variables and sparse rows.
#[derive(Debug, Default, Clone)]
pub struct QpBuilder {
    names: Vec<String>,
    quad: Vec<(usize, usize, f64)>,
    lin: Vec<f64>,
    offset: f64,
    eq_rows: Vec<Vec<(usize, f64)>>,
    eq_rhs: Vec<f64>,
    eq_names: Vec<String>,
    ineq_rows: Vec<Vec<(usize, f64)>>,
    ineq_lower: Vec<f64>,
    ineq_upper: Vec<f64>,
    ineq_names: Vec<String>,
}

impl QpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    /// Adds a free variable and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.lin.push(0.0);
        self.names.len() - 1
    }

    /// Adds a variable with `lower ≤ x ≤ upper`, emitted as a single-entry
    /// inequality row. Infinite bounds are allowed.
    pub fn add_bounded_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        let name = name.into();
        let idx = self.add_var(name.clone());
        if lower.is_finite() || upper.is_finite() {
            self.add_ineq(format!("bound[{name}]"), &[(idx, 1.0)], lower, upper);
        }
        idx
    }

    /// Adds `value` to `Q[i][j]` and `Q[j][i]` (once on the diagonal).
    pub fn add_quad(&mut self, i: usize, j: usize, value: f64) {
        self.quad.push((i, j, value));
        if i != j {
            self.quad.push((j, i, value));
        }
    }

    pub fn add_lin(&mut self, i: usize, value: f64) {
        self.lin[i] += value;
    }

    pub fn add_offset(&mut self, value: f64) {
        self.offset += value;
    }

    /// Adds `weight · (Σ coef·x − target)²` to the objective.
    pub fn add_squared_residual(&mut self, terms: &[(usize, f64)], target: f64, weight: f64) {
        for &(i, ci) in terms {
            for &(j, cj) in terms {
                // ½xᵀQx convention: Q entry is twice the coefficient.
                self.quad.push((i, j, 2.0 * weight * ci * cj));
            }
            self.lin[i] -= 2.0 * weight * target * ci;
        }
        self.offset += weight * target * target;
    }

    pub fn add_eq(&mut self, name: impl Into<String>, terms: &[(usize, f64)], rhs: f64) -> usize {
        self.eq_rows.push(terms.to_vec());
        self.eq_rhs.push(rhs);
        self.eq_names.push(name.into());
        self.eq_rows.len() - 1
    }

    pub fn add_ineq(
        &mut self,
        name: impl Into<String>,
        terms: &[(usize, f64)],
        lower: f64,
        upper: f64,
    ) -> usize {
        self.ineq_rows.push(terms.to_vec());
        self.ineq_lower.push(lower);
        self.ineq_upper.push(upper);
        self.ineq_names.push(name.into());
        self.ineq_rows.len() - 1
    }

    pub fn build(self) -> QpProblem {
        let n = self.names.len();
        let mut quad = DMatrix::zeros(n, n);
        for (i, j, v) in self.quad {
            quad[(i, j)] += v;
        }
        let mut eq_matrix = DMatrix::zeros(self.eq_rows.len(), n);
        for (r, row) in self.eq_rows.iter().enumerate() {
            for &(j, v) in row {
                eq_matrix[(r, j)] += v;
            }
        }
        let mut ineq_matrix = DMatrix::zeros(self.ineq_rows.len(), n);
        for (r, row) in self.ineq_rows.iter().enumerate() {
            for &(j, v) in row {
                ineq_matrix[(r, j)] += v;
            }
        }
        QpProblem {
            quad,
            lin: DVector::from_vec(self.lin),
            offset: self.offset,
            eq_matrix,
            eq_rhs: DVector::from_vec(self.eq_rhs),
            ineq_matrix,
            ineq_lower: DVector::from_vec(self.ineq_lower),
            ineq_upper: DVector::from_vec(self.ineq_upper),
            var_names: self.names,
            ineq_names: self.ineq_names,
            eq_names: self.eq_names,
        }
    }
}
