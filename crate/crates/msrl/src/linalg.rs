//! Dense helpers for the moment-based baselines and the linear read-out:
//! symmetric eigendecomposition (cyclic Jacobi), Cholesky solves, and
//! subspace angles. Everything here targets small matrices (tens of
//! columns), where Jacobi is accurate and dependency-free.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted in
/// non-increasing order and eigenvectors as matching columns.
pub fn sym_eigen(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::contract("sym_eigen", "matrix must be square"));
    }
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).expect("finite eigenvalues"));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vecs[(row, col)] = v[(row, src)];
        }
    }
    Ok((eigenvalues, vecs))
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Symmetric inverse square root via the eigendecomposition. Eigenvalues
/// below `ridge` are lifted to `ridge` before inversion.
pub fn inv_sqrt_sym(a: &Array2<f64>, ridge: f64) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eigen(a)?;
    let n = a.nrows();
    let mut out = Array2::zeros((n, n));
    for k in 0..n {
        let lam = vals[k].max(ridge);
        let w = 1.0 / lam.sqrt();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += w * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Cholesky factorization of a symmetric positive definite matrix.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solve `A x = b` for SPD `A` via Cholesky. `b` may have many columns.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array2<f64>) -> Option<Array2<f64>> {
    let l = cholesky(a)?;
    let n = a.nrows();
    let c = b.ncols();
    let mut x = b.clone();
    // forward: L y = b
    for col in 0..c {
        for i in 0..n {
            let mut sum = x[(i, col)];
            for k in 0..i {
                sum -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = sum / l[(i, i)];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut sum = x[(i, col)];
            for k in (i + 1)..n {
                sum -= l[(k, i)] * x[(k, col)];
            }
            x[(i, col)] = sum / l[(i, i)];
        }
    }
    Some(x)
}

/// Least squares `argmin |X b - Y|^2` through the normal equations, with
/// a ridge retry when the Gram matrix is not positive definite. Returns
/// the coefficients and whether the ridge fallback fired.
pub fn solve_least_squares(x: &Array2<f64>, y: &Array2<f64>, ridge: f64) -> Result<(Array2<f64>, bool)> {
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch {
            op: "solve_least_squares",
            lhs: (x.nrows(), x.ncols()),
            rhs: (y.nrows(), y.ncols()),
        });
    }
    let xtx = x.t().dot(x);
    let xty = x.t().dot(y);
    if let Some(beta) = cholesky_solve(&xtx, &xty) {
        return Ok((beta, false));
    }
    let mut reg = xtx;
    for i in 0..reg.nrows() {
        reg[(i, i)] += ridge;
    }
    match cholesky_solve(&reg, &xty) {
        Some(beta) => Ok((beta, true)),
        None => Err(Error::contract(
            "solve_least_squares",
            "normal equations not solvable even with ridge",
        )),
    }
}

/// Orthonormalize the columns of `a` (modified Gram-Schmidt), dropping
/// numerically dependent columns.
pub fn orthonormal_columns(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut cols: Vec<Array1<f64>> = Vec::new();
    for j in 0..a.ncols() {
        let mut v = a.column(j).to_owned();
        for q in &cols {
            let proj = q.dot(&v);
            v = &v - &(q * proj);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            cols.push(v / norm);
        }
    }
    let mut out = Array2::zeros((n, cols.len()));
    for (j, q) in cols.iter().enumerate() {
        out.column_mut(j).assign(q);
    }
    out
}

/// Largest principal angle (degrees) between the column spans of `a` and `b`.
pub fn max_principal_angle_deg(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let qa = orthonormal_columns(a);
    let qb = orthonormal_columns(b);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return Err(Error::contract("principal_angles", "empty subspace"));
    }
    let m = qa.t().dot(&qb);
    let mtm = m.t().dot(&m);
    let (vals, _) = sym_eigen(&mtm)?;
    // cos^2 of the angles are the eigenvalues; the largest angle comes
    // from the smallest eigenvalue.
    let k = vals.len().min(qa.ncols()).min(qb.ncols());
    let smallest = vals[k - 1].clamp(0.0, 1.0);
    Ok(smallest.sqrt().acos().to_degrees())
}

/// Angle in degrees between two vectors, ignoring sign.
pub fn vector_angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c = (dot / (na * nb)).abs().clamp(0.0, 1.0);
    c.acos().to_degrees()
}
