use std::fmt::Write;

use super::QpProblem;

/// Renders a problem as plain text: a header per section followed by one line
/// per variable, nonzero or constraint row. Only nonzero entries are listed.
pub fn dump_text(problem: &QpProblem) -> String {
    let mut out = String::new();
    let n = problem.num_vars();
    let _ = writeln!(out, "# qp-dump v1");
    let _ = writeln!(out, "vars {n}");
    for (i, name) in problem.var_names.iter().enumerate() {
        let _ = writeln!(out, "  {i} {name}");
    }
    let _ = writeln!(out, "offset {:.17e}", problem.offset);

    let quad: Vec<_> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| problem.quad[(i, j)] != 0.0)
        .collect();
    let _ = writeln!(out, "Q {}", quad.len());
    for (i, j) in quad {
        let _ = writeln!(out, "  {i} {j} {:.17e}", problem.quad[(i, j)]);
    }

    let lin: Vec<_> = (0..n).filter(|&i| problem.lin[i] != 0.0).collect();
    let _ = writeln!(out, "q {}", lin.len());
    for i in lin {
        let _ = writeln!(out, "  {i} {:.17e}", problem.lin[i]);
    }

    let _ = writeln!(out, "eq {}", problem.num_eq());
    for r in 0..problem.num_eq() {
        let name = problem.eq_names.get(r).map(String::as_str).unwrap_or("-");
        let _ = write!(out, "  {r} {name} {:.17e} :", problem.eq_rhs[r]);
        write_row(&mut out, problem.eq_matrix.row(r).iter().copied());
    }

    let _ = writeln!(out, "ineq {}", problem.num_ineq());
    for r in 0..problem.num_ineq() {
        let name = problem.ineq_names.get(r).map(String::as_str).unwrap_or("-");
        let _ = write!(
            out,
            "  {r} {name} {:.17e} {:.17e} :",
            problem.ineq_lower[r], problem.ineq_upper[r]
        );
        write_row(&mut out, problem.ineq_matrix.row(r).iter().copied());
    }
    out
}

fn write_row(out: &mut String, row: impl Iterator<Item = f64>) {
    for (j, v) in row.enumerate() {
        if v != 0.0 {
            let _ = write!(out, " {j}:{v:.17e}");
        }
    }
    out.push('\n');
}
