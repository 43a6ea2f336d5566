//! Small dense solvers used by the curve fit: nonnegative least squares and
//! an equality-constrained quadratic program with nonnegativity bounds.

use nalgebra::{DMatrix, DVector};

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let eps = 1e-13 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

fn columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])])
}

/// Lawson–Hanson active-set solution of `min ||A x - b||` subject to `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.amax().max(1e-300) * b.amax().max(1e-300);
    let tol = 1e-12 * scale * n as f64;
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        for _ in 0..3 * n + 10 {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            if idx.is_empty() {
                break;
            }
            let s_p = lstsq(&columns(a, &idx), b);
            if s_p.iter().all(|v| *v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = s_p[k];
                }
                break;
            }
            let mut alpha: f64 = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                if s_p[k] <= 0.0 {
                    let gap = x[i] - s_p[k];
                    alpha = alpha.min(if gap > 0.0 { x[i] / gap } else { 0.0 });
                }
            }
            let floor = 1e-14 * x.amax();
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (s_p[k] - x[i]);
                if x[i] <= floor {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}

/// Outcome of [`quadratic_program`].
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// False when the iteration budget ran out before the optimality check.
    pub converged: bool,
}

/// Minimizes `xᵀ Q x` subject to `E x = d` and `x >= 0`, with `Q` symmetric
/// positive semidefinite. Returns `None` when the constraints are
/// infeasible.
///
/// Tries the unconstrained equality solution first and falls back to a
/// primal active-set method started from an NNLS feasible point.
pub fn quadratic_program(q: &DMatrix<f64>, e: &DMatrix<f64>, d: &DVector<f64>) -> Option<QpSolution> {
    // Equilibrate so the KKT blocks are of comparable size.
    let q = &(q / q.amax().max(f64::MIN_POSITIVE));
    let mut e = e.clone();
    let mut d = d.clone();
    for r in 0..e.nrows() {
        let s = e.row(r).amax();
        if s > 0.0 {
            e.row_mut(r).unscale_mut(s);
            d[r] /= s;
        }
    }
    let (e, d) = (&e, &d);
    let n = q.nrows();
    let all: Vec<usize> = (0..n).collect();
    let (x, _) = equality_qp(q, e, d, &all);
    let feas_tol = 1e-10 * (1.0 + d.amax());
    if x.iter().all(|v| *v >= 0.0) && (e * &x - d).amax() <= feas_tol {
        return Some(QpSolution { x, converged: true });
    }

    let mut x = nnls(e, d);
    if (e * &x - d).amax() > 1e-8 * (1.0 + d.amax()) {
        return None;
    }
    let mut active: Vec<bool> = x.iter().map(|v| *v <= 0.0).collect();
    for v in x.iter_mut() {
        *v = v.max(0.0);
    }
    let mult_tol = 1e-10 * (1.0 + q.amax());
    let mut just_blocked = None;
    for _ in 0..20 * n + 50 {
        let free: Vec<usize> = (0..n).filter(|&j| !active[j]).collect();
        let (mut z, lambda) = equality_qp(q, e, d, &free);
        let zero_tol = 1e-13 * (1.0 + z.amax());
        let blocked = free.iter().any(|&j| z[j] < -zero_tol);
        if !blocked {
            for v in z.iter_mut() {
                *v = v.max(0.0);
            }
            x = z;
            let mu = 2.0 * q * &x - e.transpose() * &lambda;
            let worst = (0..n)
                .filter(|&j| active[j] && Some(j) != just_blocked)
                .min_by(|&i, &j| mu[i].total_cmp(&mu[j]));
            just_blocked = None;
            match worst {
                Some(j) if mu[j] < -mult_tol => active[j] = false,
                _ => return Some(QpSolution { x, converged: true }),
            }
        } else {
            let mut alpha = 1.0;
            let mut block = None;
            for &j in &free {
                if z[j] < -zero_tol {
                    let a = x[j] / (x[j] - z[j]);
                    if a < alpha {
                        alpha = a;
                        block = Some(j);
                    }
                }
            }
            for &j in &free {
                x[j] += alpha * (z[j] - x[j]);
            }
            if let Some(j) = block {
                x[j] = 0.0;
                active[j] = true;
            }
            for &j in &free {
                if x[j] < 0.0 {
                    x[j] = 0.0;
                    active[j] = true;
                }
            }
            just_blocked = block;
        }
    }
    Some(QpSolution { x, converged: false })
}

/// Solves the equality-constrained problem over the `free` variables with
/// the rest fixed at zero. Returns the full-length solution and multipliers.
fn equality_qp(q: &DMatrix<f64>, e: &DMatrix<f64>, d: &DVector<f64>, free: &[usize]) -> (DVector<f64>, DVector<f64>) {
    let n = q.nrows();
    let m = e.nrows();
    let f = free.len();
    let mut kkt = DMatrix::zeros(f + m, f + m);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = 2.0 * q[(i, j)];
        }
        for r in 0..m {
            kkt[(a, f + r)] = -e[(r, i)];
            kkt[(f + r, a)] = e[(r, i)];
        }
    }
    let mut rhs = DVector::zeros(f + m);
    for r in 0..m {
        rhs[f + r] = d[r];
    }
    let sol = kkt
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()) && (&kkt * s - &rhs).amax() <= 1e-9 * (1.0 + rhs.amax()))
        .unwrap_or_else(|| lstsq(&kkt, &rhs));
    let mut x = DVector::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        x[i] = sol[a];
    }
    (x, sol.rows(f, m).into_owned())
}
