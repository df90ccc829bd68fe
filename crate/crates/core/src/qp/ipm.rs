//! Mehrotra predictor-corrector interior-point method for dense convex QPs.
//!
//! Internally every inequality is a one-sided row `cᵀx ≥ d` with slack
//! `s > 0` and multiplier `z > 0`. Rows of `G` whose bounds coincide are moved
//! to the equality block. Each Newton step solves the reduced KKT system
//!
//! ```text
//!   [ Q + CᵀS⁻¹ZC + δI   Aᵀ  ] [ Δx  ]   [ r₁ ]
//!   [ A                  −δI ] [ −Δy ] = [ r₂ ]
//! ```
//!
//! with one LU factorization shared by the predictor and corrector solves.

use nalgebra::{DMatrix, DVector};

use super::{QpError, QpProblem, QpSettings, QpSolution, QpStatus};

const REG_PRIMAL: f64 = 1e-10;
const REG_DUAL: f64 = 1e-10;
const STEP_FRACTION: f64 = 0.99;
const STALL_WINDOW: usize = 100;
const DIVERGENCE: f64 = 1e10;

/// Newton direction `(Δx, Δy, Δs, Δz)`.
type Step = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>);

#[derive(Debug, Clone)]
struct Ineq {
    terms: Vec<(usize, f64)>,
    rhs: f64,
    origin: usize,
    upper_side: bool,
}

impl Ineq {
    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x[j]).sum()
    }
}

#[derive(Debug, Clone, Copy)]
enum EqOrigin {
    Equality(usize),
    Range(usize),
}

/// The problem after range rows are split into one-sided inequalities.
struct Prepared {
    n: usize,
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    eq_matrix: DMatrix<f64>,
    eq_rhs: DVector<f64>,
    eq_origin: Vec<EqOrigin>,
    ineqs: Vec<Ineq>,
}

enum Prep {
    Ready(Prepared),
    /// A zero row of `G` whose range excludes zero.
    TriviallyInfeasible,
}

fn prepare(problem: &QpProblem) -> Prep {
    let n = problem.num_vars();
    let quad = (&problem.quad + problem.quad.transpose()) * 0.5;
    let mut eq_rows: Vec<(DVector<f64>, f64, EqOrigin)> = (0..problem.num_eq())
        .map(|r| {
            (
                problem.eq_matrix.row(r).transpose(),
                problem.eq_rhs[r],
                EqOrigin::Equality(r),
            )
        })
        .collect();
    let mut ineqs = Vec::new();
    for r in 0..problem.num_ineq() {
        let row = problem.ineq_matrix.row(r);
        let terms: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        let (lo, hi) = (problem.ineq_lower[r], problem.ineq_upper[r]);
        if terms.is_empty() {
            if lo > 0.0 || hi < 0.0 {
                return Prep::TriviallyInfeasible;
            }
            continue;
        }
        if lo == hi {
            eq_rows.push((row.transpose(), lo, EqOrigin::Range(r)));
            continue;
        }
        if lo.is_finite() {
            ineqs.push(Ineq {
                terms: terms.clone(),
                rhs: lo,
                origin: r,
                upper_side: false,
            });
        }
        if hi.is_finite() {
            ineqs.push(Ineq {
                terms: terms.iter().map(|&(j, v)| (j, -v)).collect(),
                rhs: -hi,
                origin: r,
                upper_side: true,
            });
        }
    }
    let me = eq_rows.len();
    let mut eq_matrix = DMatrix::zeros(me, n);
    let mut eq_rhs = DVector::zeros(me);
    let mut eq_origin = Vec::with_capacity(me);
    for (k, (row, rhs, origin)) in eq_rows.into_iter().enumerate() {
        eq_matrix.set_row(k, &row.transpose());
        eq_rhs[k] = rhs;
        eq_origin.push(origin);
    }
    Prep::Ready(Prepared {
        n,
        quad,
        lin: problem.lin.clone(),
        eq_matrix,
        eq_rhs,
        eq_origin,
        ineqs,
    })
}

/// Internal primal-dual iterate.
struct Iterate {
    x: DVector<f64>,
    /// Equality multipliers in the `Qx + q − Aᵀy − Cᵀz = 0` convention.
    y: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
}

struct Residuals {
    dual: DVector<f64>,
    eq: DVector<f64>,
    ineq: DVector<f64>,
}

impl Prepared {
    fn residuals(&self, it: &Iterate) -> Residuals {
        let mut dual = &self.quad * &it.x + &self.lin;
        if !self.eq_rhs.is_empty() {
            dual -= self.eq_matrix.tr_mul(&it.y);
        }
        for (k, c) in self.ineqs.iter().enumerate() {
            for &(j, v) in &c.terms {
                dual[j] -= v * it.z[k];
            }
        }
        let eq = if !self.eq_rhs.is_empty() {
            &self.eq_matrix * &it.x - &self.eq_rhs
        } else {
            DVector::zeros(0)
        };
        let ineq = DVector::from_iterator(
            self.ineqs.len(),
            self.ineqs
                .iter()
                .enumerate()
                .map(|(k, c)| c.eval(&it.x) - it.s[k] - c.rhs),
        );
        Residuals { dual, eq, ineq }
    }

    /// Assembles the (regularized) KKT matrix for diagonal weights `w = z/s`.
    fn kkt_matrix(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let (n, me) = (self.n, self.eq_rhs.len());
        let mut k = DMatrix::zeros(n + me, n + me);
        k.view_mut((0, 0), (n, n)).copy_from(&self.quad);
        for (idx, c) in self.ineqs.iter().enumerate() {
            for &(i, vi) in &c.terms {
                for &(j, vj) in &c.terms {
                    k[(i, j)] += w[idx] * vi * vj;
                }
            }
        }
        if me > 0 {
            k.view_mut((n, 0), (me, n)).copy_from(&self.eq_matrix);
            k.view_mut((0, n), (n, me))
                .copy_from(&self.eq_matrix.transpose());
        }
        k
    }

    fn c_times(&self, dx: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.ineqs.len(), self.ineqs.iter().map(|c| c.eval(dx)))
    }

    fn add_ct_times(&self, target: &mut DVector<f64>, coeffs: &DVector<f64>) {
        for (k, c) in self.ineqs.iter().enumerate() {
            for &(j, v) in &c.terms {
                target[j] += v * coeffs[k];
            }
        }
    }

    fn initial_point(&self, start: Option<&DVector<f64>>) -> Iterate {
        let n = self.n;
        let m = self.ineqs.len();
        let x = match start {
            Some(x0) => x0.clone(),
            None => {
                // Least-squares fit of the constraint targets plus the
                // objective, a cheap point near the middle of the feasible set.
                let kkt = self.kkt_matrix(&DVector::from_element(m, 1.0));
                let mut rhs = DVector::zeros(n + self.eq_rhs.len());
                let mut target = -&self.lin;
                let d = DVector::from_iterator(m, self.ineqs.iter().map(|c| c.rhs));
                self.add_ct_times(&mut target, &d);
                rhs.rows_mut(0, n).copy_from(&target);
                rhs.rows_mut(n, self.eq_rhs.len()).copy_from(&self.eq_rhs);
                let solved = regularized(kkt, n).lu().solve(&rhs);
                match solved {
                    Some(sol) if sol.iter().all(|v| v.is_finite()) => sol.rows(0, n).into_owned(),
                    _ => DVector::zeros(n),
                }
            }
        };
        let cx = self.c_times(&x);
        let s = DVector::from_iterator(
            m,
            self.ineqs
                .iter()
                .enumerate()
                .map(|(k, c)| (cx[k] - c.rhs).max(1.0)),
        );
        Iterate {
            x,
            y: DVector::zeros(self.eq_rhs.len()),
            s,
            z: DVector::from_element(m, 1.0),
        }
    }
}

fn regularized(mut kkt: DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let dim = kkt.nrows();
    for i in 0..n {
        kkt[(i, i)] += REG_PRIMAL;
    }
    for i in n..dim {
        kkt[(i, i)] -= REG_DUAL;
    }
    kkt
}

/// Solves `kkt · sol = rhs` using a factorization of the regularized matrix
/// and two rounds of iterative refinement against the exact one.
fn refined_solve(
    kkt: &DMatrix<f64>,
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    rhs: &DVector<f64>,
) -> Option<DVector<f64>> {
    let mut sol = lu.solve(rhs)?;
    for _ in 0..2 {
        let resid = rhs - kkt * &sol;
        let corr = lu.solve(&resid)?;
        sol += corr;
    }
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol)
    } else {
        None
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(vi, di)| -vi / di)
        .fold(1.0, f64::min)
}

fn step_length(it: &Iterate, ds: &DVector<f64>, dz: &DVector<f64>) -> f64 {
    if it.s.is_empty() {
        1.0
    } else {
        (STEP_FRACTION * max_step(&it.s, ds).min(max_step(&it.z, dz))).min(1.0)
    }
}

/// Average complementarity after taking `step` at its step length.
fn mu_after(it: &Iterate, step: &Step) -> f64 {
    let (_, _, ds, dz) = step;
    let alpha = step_length(it, ds, dz);
    let s = &it.s + ds * alpha;
    let z = &it.z + dz * alpha;
    s.dot(&z) / s.len() as f64
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

/// Solves a convex QP.
///
/// Problems that fail [`QpProblem::validate`] are rejected with an error;
/// numerical outcomes (infeasible, unbounded, iteration cap) are reported
/// through [`QpSolution::status`]. When a warm start is supplied the solver
/// first tries to confirm it by solving the equality system of its active
/// constraints, which succeeds in a single iteration at an optimum.
pub fn solve(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let prep = match prepare(problem) {
        Prep::Ready(p) => p,
        Prep::TriviallyInfeasible => {
            return Ok(finish(
                problem,
                DVector::zeros(problem.num_vars()),
                DVector::zeros(problem.num_eq()),
                DVector::zeros(problem.num_ineq()),
                QpStatus::Infeasible,
                0,
            ))
        }
    };
    if let Some(warm) = &settings.warm_start {
        if warm.x.len() == prep.n {
            if let Some(sol) = polish(problem, &prep, &warm.x, settings) {
                return Ok(sol);
            }
        }
    }
    Ok(interior_point(problem, &prep, settings))
}

fn interior_point(problem: &QpProblem, prep: &Prepared, settings: &QpSettings) -> QpSolution {
    let n = prep.n;
    let m = prep.ineqs.len();
    let me = prep.eq_rhs.len();
    let tol_p = 0.1 * settings.tol_primal;
    let tol_d = 0.1 * settings.tol_dual;
    let scale = 1.0_f64
        .max(inf_norm(&prep.lin))
        .max(if n > 0 { prep.quad.amax() } else { 0.0 });

    let mut it = prep.initial_point(None);
    let mut best_primal = f64::INFINITY;
    let mut last_improvement = 0;
    let mut status = QpStatus::MaxIter;
    let mut iterations = 0;

    for iter in 0..settings.max_iter.max(1) {
        iterations = iter;
        let res = prep.residuals(&it);
        let primal = inf_norm(&res.eq).max(inf_norm(&res.ineq));
        let dual = inf_norm(&res.dual);
        let comp = it
            .s
            .iter()
            .zip(it.z.iter())
            .map(|(s, z)| s * z)
            .fold(0.0, f64::max);
        if primal <= tol_p && dual <= tol_d && comp <= tol_p {
            status = QpStatus::Optimal;
            break;
        }
        let dual_size = inf_norm(&it.z).max(inf_norm(&it.y));
        if primal > tol_p && dual_size > DIVERGENCE * scale {
            status = QpStatus::Infeasible;
            break;
        }
        if primal <= tol_p && inf_norm(&it.x) > DIVERGENCE * scale {
            status = QpStatus::Unbounded;
            break;
        }
        if primal < 0.99 * best_primal {
            best_primal = primal;
            last_improvement = iter;
        } else if iter - last_improvement >= STALL_WINDOW {
            status = if primal > tol_p {
                QpStatus::Infeasible
            } else {
                QpStatus::MaxIter
            };
            break;
        }

        let mu = if m > 0 { it.s.dot(&it.z) / m as f64 } else { 0.0 };
        let w = it.z.component_div(&it.s);
        let kkt = prep.kkt_matrix(&w);
        let lu = regularized(kkt.clone(), n).lu();

        let direction = |comp_rhs: &DVector<f64>| -> Option<Step> {
            // comp_rhs is the right-hand side of Z Δs + S Δz = comp_rhs.
            let mut r1 = -&res.dual;
            let coeff = DVector::from_iterator(
                m,
                (0..m).map(|k| (comp_rhs[k] - it.z[k] * res.ineq[k]) / it.s[k]),
            );
            prep.add_ct_times(&mut r1, &coeff);
            let mut rhs = DVector::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(&r1);
            if me > 0 {
                rhs.rows_mut(n, me).copy_from(&(-&res.eq));
            }
            let sol = refined_solve(&kkt, &lu, &rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = -sol.rows(n, me).into_owned();
            let ds = prep.c_times(&dx) + &res.ineq;
            let dz = DVector::from_iterator(
                m,
                (0..m).map(|k| (comp_rhs[k] - it.z[k] * ds[k]) / it.s[k]),
            );
            Some((dx, dy, ds, dz))
        };

        let affine_rhs = -it.s.component_mul(&it.z);
        // The Newton system turns singular as multipliers blow up on an
        // infeasible problem.
        let breakdown = if primal > tol_p {
            QpStatus::Infeasible
        } else {
            QpStatus::MaxIter
        };
        let Some((dx_a, dy_a, ds_a, dz_a)) = direction(&affine_rhs) else {
            status = breakdown;
            break;
        };
        let (dx, dy, ds, dz) = if m > 0 {
            let alpha_aff = max_step(&it.s, &ds_a).min(max_step(&it.z, &dz_a));
            let s_aff = &it.s + &ds_a * alpha_aff;
            let z_aff = &it.z + &dz_a * alpha_aff;
            let mu_aff = s_aff.dot(&z_aff) / m as f64;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            let corr_rhs = DVector::from_iterator(
                m,
                (0..m).map(|k| -it.s[k] * it.z[k] - ds_a[k] * dz_a[k] + sigma * mu),
            );
            let Some(corrected) = direction(&corr_rhs) else {
                status = breakdown;
                break;
            };
            // The second-order term can overshoot along directions with no
            // curvature besides the barrier, so that the step raises mu and
            // the iterates cycle. Fall back to a plain centered step then.
            if mu_after(&it, &corrected) < mu {
                corrected
            } else {
                let centered_rhs = DVector::from_iterator(
                    m,
                    (0..m).map(|k| -it.s[k] * it.z[k] + sigma.max(0.1) * mu),
                );
                let Some(centered) = direction(&centered_rhs) else {
                    status = breakdown;
                    break;
                };
                centered
            }
        } else {
            (dx_a, dy_a, ds_a, dz_a)
        };
        let alpha = step_length(&it, &ds, &dz);
        it.x += &dx * alpha;
        it.y += &dy * alpha;
        it.s += &ds * alpha;
        it.z += &dz * alpha;
        iterations = iter + 1;
    }

    let (eq_duals, ineq_duals) = external_duals(problem, prep, &it.y, &it.z);
    finish(problem, it.x, eq_duals, ineq_duals, status, iterations)
}

/// Maps internal multipliers onto the `Qx + q + Aᵀν + Gᵀμ = 0` convention.
fn external_duals(
    problem: &QpProblem,
    prep: &Prepared,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let mut nu = DVector::zeros(problem.num_eq());
    let mut mu = DVector::zeros(problem.num_ineq());
    for (k, origin) in prep.eq_origin.iter().enumerate() {
        match *origin {
            EqOrigin::Equality(r) => nu[r] = -y[k],
            EqOrigin::Range(r) => mu[r] = -y[k],
        }
    }
    for (k, c) in prep.ineqs.iter().enumerate() {
        if c.upper_side {
            mu[c.origin] += z[k];
        } else {
            mu[c.origin] -= z[k];
        }
    }
    (nu, mu)
}

fn finish(
    problem: &QpProblem,
    x: DVector<f64>,
    eq_duals: DVector<f64>,
    ineq_duals: DVector<f64>,
    status: QpStatus,
    iterations: usize,
) -> QpSolution {
    QpSolution {
        objective: problem.objective(&x),
        eq_residual: problem.eq_residual(&x),
        ineq_violation: problem.ineq_violation(&x),
        x,
        eq_duals,
        ineq_duals,
        status,
        iterations,
    }
}

/// Guesses the active set at `x0` and solves the resulting equality-constrained
/// QP. Returns a solution only if it passes every optimality check.
fn polish(
    problem: &QpProblem,
    prep: &Prepared,
    x0: &DVector<f64>,
    settings: &QpSettings,
) -> Option<QpSolution> {
    let n = prep.n;
    let me = prep.eq_rhs.len();
    let active_tol = (10.0 * settings.tol_primal).max(1e-7);
    let active: Vec<usize> = prep
        .ineqs
        .iter()
        .enumerate()
        .filter(|(_, c)| (c.eval(x0) - c.rhs).abs() <= active_tol * (1.0 + c.rhs.abs()))
        .map(|(k, _)| k)
        .collect();
    let na = active.len();
    let dim = n + me + na;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&prep.quad);
    if me > 0 {
        kkt.view_mut((n, 0), (me, n)).copy_from(&prep.eq_matrix);
        kkt.view_mut((0, n), (n, me))
            .copy_from(&prep.eq_matrix.transpose());
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&prep.lin));
    rhs.rows_mut(n, me).copy_from(&prep.eq_rhs);
    for (a, &k) in active.iter().enumerate() {
        let c = &prep.ineqs[k];
        for &(j, v) in &c.terms {
            kkt[(n + me + a, j)] = v;
            kkt[(j, n + me + a)] = v;
        }
        rhs[n + me + a] = c.rhs;
    }
    let lu = regularized(kkt.clone(), n).lu();
    let sol = refined_solve(&kkt, &lu, &rhs)?;
    let x = sol.rows(0, n).into_owned();
    // Qx + q + Aᵀw_e + C_actᵀw_a = 0, so y = −w_e and z = −w_a.
    let y = -sol.rows(n, me).into_owned();
    let mut z = DVector::zeros(prep.ineqs.len());
    for (a, &k) in active.iter().enumerate() {
        let zk = -sol[n + me + a];
        if zk < -settings.tol_dual {
            return None;
        }
        z[k] = zk.max(0.0);
    }
    let (nu, mu) = external_duals(problem, prep, &y, &z);
    let candidate = finish(problem, x, nu, mu, QpStatus::Optimal, 1);
    let ok = candidate.eq_residual <= settings.tol_primal
        && candidate.ineq_violation <= settings.tol_primal
        && problem.stationarity(&candidate.x, &candidate.eq_duals, &candidate.ineq_duals)
            <= settings.tol_dual
        && problem.complementarity(&candidate.x, &candidate.ineq_duals) <= settings.tol_primal;
    ok.then_some(candidate)
}

#[cfg(test)]
mod tests {
    use super::super::{QpBuilder, WarmStart};
    use super::*;

    fn kkt_ok(p: &QpProblem, sol: &QpSolution, tol: f64) {
        assert!(sol.eq_residual <= tol, "eq residual {}", sol.eq_residual);
        assert!(sol.ineq_violation <= tol, "ineq violation {}", sol.ineq_violation);
        let st = p.stationarity(&sol.x, &sol.eq_duals, &sol.ineq_duals);
        assert!(st <= tol, "stationarity {st}");
        let cs = p.complementarity(&sol.x, &sol.ineq_duals);
        assert!(cs <= tol, "complementarity {cs}");
    }

    #[test]
    fn single_active_bound() {
        // min x² s.t. x ≥ 1
        let mut b = QpBuilder::new();
        let x = b.add_bounded_var("x", 1.0, f64::INFINITY);
        b.add_quad(x, x, 2.0);
        let p = b.build();
        let sol = solve(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
        assert!((sol.objective - 1.0).abs() < 1e-6);
        // Active lower bound carries a negative multiplier of magnitude 2.
        assert!((sol.ineq_duals[0] + 2.0).abs() < 1e-5);
        kkt_ok(&p, &sol, 1e-6);
    }

    #[test]
    fn symmetric_equality() {
        // min ½(x² + y²) s.t. x + y = 2
        let mut b = QpBuilder::new();
        let x = b.add_var("x");
        let y = b.add_var("y");
        b.add_quad(x, x, 1.0);
        b.add_quad(y, y, 1.0);
        b.add_eq("sum", &[(x, 1.0), (y, 1.0)], 2.0);
        let p = b.build();
        let sol = solve(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.x[1] - 1.0).abs() < 1e-9);
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.eq_duals[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_program_vertex() {
        // min −x − y s.t. x + 2y ≤ 4, 3x + y ≤ 6, x, y ≥ 0  → (1.6, 1.2)
        let mut b = QpBuilder::new();
        let x = b.add_bounded_var("x", 0.0, f64::INFINITY);
        let y = b.add_bounded_var("y", 0.0, f64::INFINITY);
        b.add_lin(x, -1.0);
        b.add_lin(y, -1.0);
        b.add_ineq("c1", &[(x, 1.0), (y, 2.0)], f64::NEG_INFINITY, 4.0);
        b.add_ineq("c2", &[(x, 3.0), (y, 1.0)], f64::NEG_INFINITY, 6.0);
        let p = b.build();
        let sol = solve(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.6).abs() < 1e-6);
        assert!((sol.x[1] - 1.2).abs() < 1e-6);
        kkt_ok(&p, &sol, 1e-6);
    }

    #[test]
    fn fixed_range_row_becomes_equality() {
        let mut b = QpBuilder::new();
        let x = b.add_bounded_var("x", 3.0, 3.0);
        b.add_lin(x, 1.0);
        let p = b.build();
        let sol = solve(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-9);
        assert!((sol.ineq_duals[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut b = QpBuilder::new();
        let x = b.add_bounded_var("x", 1.0, f64::INFINITY);
        b.add_ineq("cap", &[(x, 1.0)], f64::NEG_INFINITY, 0.0);
        b.add_quad(x, x, 1.0);
        let sol = solve(&b.build(), &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn equality_conflicting_with_bound_is_infeasible() {
        let mut b = QpBuilder::new();
        let x = b.add_bounded_var("x", f64::NEG_INFINITY, 0.0);
        let y = b.add_bounded_var("y", f64::NEG_INFINITY, 0.0);
        b.add_eq("sum", &[(x, 1.0), (y, 1.0)], 1.0);
        b.add_lin(x, 1.0);
        let sol = solve(&b.build(), &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn unbounded_linear_objective() {
        let mut b = QpBuilder::new();
        let x = b.add_bounded_var("x", 0.0, f64::INFINITY);
        b.add_lin(x, -1.0);
        let sol = solve(&b.build(), &QpSettings::default()).unwrap();
        assert_ne!(sol.status, QpStatus::Optimal);
    }

    #[test]
    fn empty_range_rejected_at_validation() {
        let mut b = QpBuilder::new();
        b.add_bounded_var("x", 2.0, 1.0);
        let err = solve(&b.build(), &QpSettings::default()).unwrap_err();
        assert!(matches!(err, QpError::EmptyRange { row: 0, .. }));
    }

    #[test]
    fn nonconvex_rejected() {
        let mut b = QpBuilder::new();
        let x = b.add_bounded_var("x", -1.0, 1.0);
        b.add_quad(x, x, -1.0);
        assert!(matches!(
            solve(&b.build(), &QpSettings::default()),
            Err(QpError::NotConvex(_))
        ));
    }

    #[test]
    fn warm_start_at_optimum_confirms_in_one_iteration() {
        let mut b = QpBuilder::new();
        let x = b.add_bounded_var("x", 0.0, 2.0);
        let y = b.add_bounded_var("y", 0.0, 2.0);
        b.add_quad(x, x, 2.0);
        b.add_quad(y, y, 1.0);
        b.add_quad(x, y, 0.5);
        b.add_lin(x, -3.0);
        b.add_lin(y, 1.0);
        let p = b.build();
        let cold = solve(&p, &QpSettings::default()).unwrap();
        assert!(cold.is_optimal());
        let warm = solve(
            &p,
            &QpSettings {
                warm_start: Some(WarmStart { x: cold.x.clone() }),
                ..QpSettings::default()
            },
        )
        .unwrap();
        assert!(warm.is_optimal());
        assert!(warm.iterations <= 1);
        assert!((&warm.x - &cold.x).amax() < 1e-6);
    }

    #[test]
    fn bad_warm_start_falls_back() {
        let mut b = QpBuilder::new();
        let x = b.add_bounded_var("x", 1.0, f64::INFINITY);
        b.add_quad(x, x, 2.0);
        let p = b.build();
        let sol = solve(
            &p,
            &QpSettings {
                warm_start: Some(WarmStart {
                    x: DVector::from_vec(vec![5.0]),
                }),
                ..QpSettings::default()
            },
        )
        .unwrap();
        assert!(sol.is_optimal());
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn buy_and_sell_with_free_trade_does_not_cycle() {
        // Grid purchase and sale at different prices plus a priced trade.
        // Raising buy and sell together only meets barrier curvature, which
        // made the plain corrector alternate between two points.
        let mut b = QpBuilder::new();
        let hvac = b.add_bounded_var("hvac", 0.0, 100.0);
        let buy = b.add_bounded_var("buy", 0.0, f64::INFINITY);
        let sell = b.add_bounded_var("sell", 0.0, f64::INFINITY);
        let trade = b.add_bounded_var("trade", -31.25646580232413, 31.25646580232413);
        let t_in = b.add_bounded_var("t_in", 20.0, 27.0);
        b.add_quad(trade, trade, 1.0 / 9.0);
        b.add_quad(t_in, t_in, 4.0);
        b.add_lin(buy, 1.0);
        b.add_lin(sell, -0.5);
        b.add_lin(trade, 1.5);
        b.add_lin(t_in, -94.0);
        b.add_eq("temperature", &[(hvac, 0.1), (t_in, 1.0)], 23.5);
        b.add_eq(
            "balance",
            &[(hvac, -1.0), (buy, 1.0), (sell, -1.0), (trade, 1.0)],
            -7.041329259694486,
        );
        b.add_ineq("line", &[(buy, 1.0), (sell, -1.0)], -100.0, 100.0);
        let p = b.build();
        let sol = solve(&p, &QpSettings::with_tolerance(1e-8)).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "{} iterations", sol.iterations);
        // The trade absorbs the surplus; its marginal value lies between the
        // sell and buy prices, so neither grid flow is used.
        assert!(sol.x[buy].abs() < 1e-6 && sol.x[sell].abs() < 1e-6, "{:?}", sol.x);
        assert!((sol.x[trade] + 7.041329259694486).abs() < 1e-5);
        kkt_ok(&p, &sol, 1e-6);
    }
}
