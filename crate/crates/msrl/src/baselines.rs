//! Linear SDR baselines for the comparison tables: sliced inverse
//! regression (slice means of standardized predictors) and sliced
//! average variance estimation (slice covariances). Both standardize,
//! slice by response order statistics with equal counts, eigendecompose
//! the slice-moment matrix, and map directions back through the
//! whitening inverse.

use ndarray::{Array1, Array2, Axis};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_sym, sym_eigen};
use crate::metrics::distance_correlation;

#[derive(Debug, Clone)]
pub struct SdrResult {
    /// `d_X x d` projection matrix; columns are orthonormal in the
    /// standardized metric (`directions' Cov directions = I`).
    pub directions: Array2<f64>,
    /// Non-increasing eigenvalues of the slice-moment matrix.
    pub eigenvalues: Vec<f64>,
    pub n_slices: usize,
}

impl SdrResult {
    pub fn project(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.directions)
    }
}

fn column_means(x: &Array2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("nonempty matrix")
}

fn covariance(x: &Array2<f64>, means: &Array1<f64>) -> Array2<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let mut cov = Array2::zeros((p, p));
    for row in x.rows() {
        for a in 0..p {
            let da = row[a] - means[a];
            for b in a..p {
                cov[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..p {
        for b in a..p {
            cov[(a, b)] /= denom;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov
}

/// Equal-count slice assignment by the order statistics of `y`
/// (ties broken by index, so the result is deterministic).
fn slice_assignments(y: &[f64], n_slices: usize) -> Vec<Vec<usize>> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| y[i].partial_cmp(&y[j]).expect("finite response").then(i.cmp(&j)));
    let base = n / n_slices;
    let extra = n % n_slices;
    let mut out = Vec::with_capacity(n_slices);
    let mut at = 0;
    for h in 0..n_slices {
        let size = base + usize::from(h < extra);
        out.push(order[at..at + size].to_vec());
        at += size;
    }
    out
}

struct Standardized {
    z: Array2<f64>,
    whitener: Array2<f64>,
}

fn standardize(x: &Array2<f64>) -> Result<Standardized> {
    let means = column_means(x);
    let cov = covariance(x, &means);
    let whitener = inv_sqrt_sym(&cov, 1e-8)?;
    let n = x.nrows();
    let p = x.ncols();
    let mut centered = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            centered[(i, j)] = x[(i, j)] - means[j];
        }
    }
    Ok(Standardized {
        z: centered.dot(&whitener),
        whitener,
    })
}

fn check_inputs(x: &Array2<f64>, y: &[f64], d: usize, n_slices: usize) -> Result<()> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::ShapeMismatch {
            op: "sdr",
            lhs: (n, p),
            rhs: (y.len(), 0),
        });
    }
    if n <= p {
        return Err(Error::contract("sdr", "need more rows than predictors"));
    }
    if d == 0 || d > p {
        return Err(Error::contract("sdr", format!("need 1 <= d <= {p}, got {d}")));
    }
    if n_slices < 2 || n_slices > n {
        return Err(Error::contract("sdr", "need 2 <= n_slices <= n"));
    }
    Ok(())
}

fn finish(
    m: &Array2<f64>,
    std: &Standardized,
    d: usize,
    n_slices: usize,
) -> Result<SdrResult> {
    let (vals, vecs) = sym_eigen(m)?;
    let p = m.nrows();
    let mut top = Array2::zeros((p, d));
    for j in 0..d {
        for i in 0..p {
            top[(i, j)] = vecs[(i, j)];
        }
    }
    Ok(SdrResult {
        directions: std.whitener.dot(&top),
        eigenvalues: vals,
        n_slices,
    })
}

/// Sliced inverse regression: eigenvectors of the weighted
/// between-slice covariance of slice means.
pub fn sir(x: &Array2<f64>, y: &[f64], d: usize, n_slices: usize) -> Result<SdrResult> {
    check_inputs(x, y, d, n_slices)?;
    let std = standardize(x)?;
    let p = x.ncols();
    let n = x.nrows() as f64;
    let mut m = Array2::zeros((p, p));
    for slice in slice_assignments(y, n_slices) {
        if slice.is_empty() {
            continue;
        }
        let p_h = slice.len() as f64 / n;
        let mut mean = vec![0.0; p];
        for &i in &slice {
            for j in 0..p {
                mean[j] += std.z[(i, j)];
            }
        }
        mean.iter_mut().for_each(|v| *v /= slice.len() as f64);
        for a in 0..p {
            for b in 0..p {
                m[(a, b)] += p_h * mean[a] * mean[b];
            }
        }
    }
    finish(&m, &std, d, n_slices)
}

/// Sliced average variance estimation: eigenvectors of
/// `sum_h p_h (I - V_h)^2` with `V_h` the within-slice covariance of the
/// standardized predictors.
pub fn save(x: &Array2<f64>, y: &[f64], d: usize, n_slices: usize) -> Result<SdrResult> {
    check_inputs(x, y, d, n_slices)?;
    let std = standardize(x)?;
    let p = x.ncols();
    let n = x.nrows() as f64;
    let mut m = Array2::zeros((p, p));
    for slice in slice_assignments(y, n_slices) {
        if slice.is_empty() {
            continue;
        }
        let p_h = slice.len() as f64 / n;
        let mut mean = vec![0.0; p];
        for &i in &slice {
            for j in 0..p {
                mean[j] += std.z[(i, j)];
            }
        }
        mean.iter_mut().for_each(|v| *v /= slice.len() as f64);
        let mut v_h = Array2::<f64>::zeros((p, p));
        for &i in &slice {
            for a in 0..p {
                let da = std.z[(i, a)] - mean[a];
                for b in 0..p {
                    v_h[(a, b)] += da * (std.z[(i, b)] - mean[b]);
                }
            }
        }
        v_h.mapv_inplace(|v| v / slice.len() as f64);
        // (I - V_h)^2
        let mut diff = -v_h;
        for a in 0..p {
            diff[(a, a)] += 1.0;
        }
        let sq = diff.dot(&diff);
        m.scaled_add(p_h, &sq);
    }
    finish(&m, &std, d, n_slices)
}

/// Scalar response view used for slicing; multivariate responses slice
/// on the first coordinate.
pub fn slicing_response(data: &Dataset) -> Result<Vec<f64>> {
    let y = data.y_matrix()?;
    Ok(y.column(0).to_vec())
}

/// Pick the slice count whose learned projection maximizes validation
/// distance correlation. Ties go to the earliest candidate.
pub fn select_slices<F>(
    fit: F,
    x_train: &Array2<f64>,
    y_train: &[f64],
    d: usize,
    candidates: &[usize],
    x_val: &Array2<f64>,
    y_val: &Array2<f64>,
) -> Result<usize>
where
    F: Fn(&Array2<f64>, &[f64], usize, usize) -> Result<SdrResult>,
{
    if candidates.is_empty() {
        return Err(Error::contract("select_slices", "no candidates"));
    }
    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for &sn in candidates {
        let result = fit(x_train, y_train, d, sn)?;
        let proj = result.project(x_val);
        let dc = distance_correlation(&proj, y_val)?;
        if dc > best.0 {
            best = (dc, sn);
        }
    }
    Ok(best.1)
}
