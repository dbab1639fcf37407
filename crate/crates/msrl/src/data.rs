//! Synthetic data generators for the bundled simulation suite, CSV
//! ingestion for real datasets, and seeded splitting.
//!
//! All generators draw from named ChaCha streams (see [`crate::util`]),
//! with normals via Box-Muller, so a `(seed, n, p)` triple pins every
//! dataset bit-for-bit across platforms.

use std::fmt;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::util::{normal, normal_cdf, rng_for, Stream};

/// Response side of a dataset: a continuous matrix or integer labels.
#[derive(Debug, Clone)]
pub enum Response {
    Continuous(Array2<f64>),
    Labels(Vec<usize>),
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Continuous(y) => y.nrows(),
            Response::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct Meta {
    pub model: Option<String>,
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub x_names: Vec<String>,
    pub y_names: Vec<String>,
    /// Direction vectors used by the sign-log toy generator, kept for audit.
    pub betas: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Response,
    pub meta: Meta,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Response) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                lhs: (x.nrows(), x.ncols()),
                rhs: (y.len(), 0),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::contract("dataset", "empty dataset"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("dataset", "non-finite predictor"));
        }
        if let Response::Continuous(y) = &y {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract("dataset", "non-finite response"));
            }
        }
        Ok(Dataset {
            x,
            y,
            meta: Meta::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn y_matrix(&self) -> Result<&Array2<f64>> {
        match &self.y {
            Response::Continuous(y) => Ok(y),
            Response::Labels(_) => Err(Error::contract(
                "y_matrix",
                "dataset carries categorical labels",
            )),
        }
    }

    pub fn labels(&self) -> Result<&[usize]> {
        match &self.y {
            Response::Labels(l) => Ok(l),
            Response::Continuous(_) => Err(Error::contract(
                "labels",
                "dataset carries a continuous response",
            )),
        }
    }

    /// Row subset in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let x = self.x.select(Axis(0), indices);
        let y = match &self.y {
            Response::Continuous(y) => Response::Continuous(y.select(Axis(0), indices)),
            Response::Labels(l) => Response::Labels(indices.iter().map(|&i| l[i]).collect()),
        };
        Dataset {
            x,
            y,
            meta: self.meta.clone(),
        }
    }

    /// Z-score standardization of the predictors (columns with zero
    /// spread are left centered only). Returns the transformed copy and
    /// the per-column (mean, sd) pairs.
    pub fn standardize_x(&self) -> (Dataset, Vec<(f64, f64)>) {
        let n = self.n() as f64;
        let mut out = self.clone();
        let mut stats = Vec::with_capacity(self.d_x());
        for j in 0..self.d_x() {
            let col = self.x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            let denom = if sd > 0.0 { sd } else { 1.0 };
            for i in 0..self.n() {
                out.x[(i, j)] = (self.x[(i, j)] - mean) / denom;
            }
            stats.push((mean, sd));
        }
        (out, stats)
    }
}

// ---- simulation models ---------------------------------------------------

/// The four regression links of the simulation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimModel {
    I,
    II,
    III,
    IV,
}

/// The four predictor laws of the simulation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    I,
    II,
    III,
    IV,
}

impl fmt::Display for SimModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SimModel::I => "I",
            SimModel::II => "II",
            SimModel::III => "III",
            SimModel::IV => "IV",
        };
        write!(f, "{s}")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::I => "i",
            Scenario::II => "ii",
            Scenario::III => "iii",
            Scenario::IV => "iv",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for SimModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(SimModel::I),
            "II" | "2" => Ok(SimModel::II),
            "III" | "3" => Ok(SimModel::III),
            "IV" | "4" => Ok(SimModel::IV),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Scenario::I),
            "ii" | "2" => Ok(Scenario::II),
            "iii" | "3" => Ok(Scenario::III),
            "iv" | "4" => Ok(Scenario::IV),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

impl SimModel {
    /// Intrinsic dimension used for this link in the experiment presets.
    pub fn default_d0(self) -> usize {
        match self {
            SimModel::I | SimModel::II => 1,
            SimModel::III | SimModel::IV => 2,
        }
    }
}

/// Noise-free regression link; only the first two coordinates matter.
pub fn model_response(model: SimModel, x1: f64, x2: f64) -> f64 {
    match model {
        SimModel::I => 0.5 * x1 + x2,
        SimModel::II => {
            let r = (x1 * x1 + x2 * x2).sqrt();
            if r == 0.0 {
                0.0
            } else {
                r * r.ln()
            }
        }
        SimModel::III => (x1 + x2) * (x1 + x2) / (1.0 + x1.exp()),
        SimModel::IV => (std::f64::consts::PI * (x1 + x2) / 10.0).sin() + x1 * x1,
    }
}

fn sample_predictors(scenario: Scenario, n: usize, p: usize, rng: &mut ChaCha12Rng) -> Array2<f64> {
    let mut x = Array2::zeros((n, p));
    match scenario {
        Scenario::I => {
            for v in x.iter_mut() {
                *v = rng.random::<f64>() * 4.0 - 2.0;
            }
        }
        Scenario::II => {
            for v in x.iter_mut() {
                *v = normal(rng);
            }
        }
        Scenario::III => {
            for i in 0..n {
                let u: f64 = rng.random();
                if u < 0.25 {
                    for j in 0..p {
                        x[(i, j)] = -2.0 + normal(rng);
                    }
                } else if u < 0.75 {
                    for j in 0..p {
                        x[(i, j)] = rng.random::<f64>() * 4.0 - 2.0;
                    }
                } else {
                    for j in 0..p {
                        x[(i, j)] = 2.0 + normal(rng);
                    }
                }
            }
        }
        Scenario::IV => {
            // Cov = 0.5 * ones + 0.5 * I: shared factor plus noise.
            let half_sqrt = 0.5f64.sqrt();
            for i in 0..n {
                let shared = normal(rng);
                for j in 0..p {
                    x[(i, j)] = half_sqrt * shared + half_sqrt * normal(rng);
                }
            }
        }
    }
    x
}

/// Simulation dataset with noise sd 0.25 (the suite default; the
/// linear-model prediction floor in the comparison tables equals this).
pub fn gen_model(
    model: SimModel,
    scenario: Scenario,
    n: usize,
    p: usize,
    seed: u64,
) -> Result<Dataset> {
    gen_model_with_noise(model, scenario, n, p, seed, 0.25)
}

/// Simulation dataset with explicit noise sd (0 disables noise).
pub fn gen_model_with_noise(
    model: SimModel,
    scenario: Scenario,
    n: usize,
    p: usize,
    seed: u64,
    noise_sd: f64,
) -> Result<Dataset> {
    if p < 2 {
        return Err(Error::contract("gen_model", "models use X1 and X2, need p >= 2"));
    }
    if n == 0 {
        return Err(Error::contract("gen_model", "n must be >= 1"));
    }
    let mut rng = rng_for(seed, Stream::DataGen);
    let x = sample_predictors(scenario, n, p, &mut rng);
    let mut y = Array2::zeros((n, 1));
    for i in 0..n {
        let eps = if noise_sd > 0.0 { noise_sd * normal(&mut rng) } else { 0.0 };
        y[(i, 0)] = model_response(model, x[(i, 0)], x[(i, 1)]) + eps;
    }
    let mut data = Dataset::new(x, Response::Continuous(y))?;
    data.meta.model = Some(model.to_string());
    data.meta.scenario = Some(scenario.to_string());
    data.meta.seed = Some(seed);
    Ok(data)
}

/// Sign-log toy model: `Y = sign(2 sin(b1'X) + e1) * log|sin(b2'X) + c + e2|`
/// with `b1`, `b2` uniform on the unit sphere in `R^p`, `X ~ N(0, I_p)`,
/// `e1, e2` centered normal with sd 0.25.
pub fn gen_toy(n: usize, p: usize, c: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || p == 0 {
        return Err(Error::contract("gen_toy", "n and p must be >= 1"));
    }
    let mut rng = rng_for(seed, Stream::DataGen);
    let sphere = |rng: &mut ChaCha12Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    };
    let beta1 = sphere(&mut rng);
    let beta2 = sphere(&mut rng);
    let mut x = Array2::zeros((n, p));
    let mut y = Array2::zeros((n, 1));
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = normal(&mut rng);
        }
        let b1x: f64 = (0..p).map(|j| beta1[j] * x[(i, j)]).sum();
        let b2x: f64 = (0..p).map(|j| beta2[j] * x[(i, j)]).sum();
        let e1 = 0.25 * normal(&mut rng);
        let e2 = 0.25 * normal(&mut rng);
        let sign = if 2.0 * b1x.sin() + e1 >= 0.0 { 1.0 } else { -1.0 };
        y[(i, 0)] = sign * (b2x.sin() + c + e2).abs().ln();
    }
    let mut data = Dataset::new(x, Response::Continuous(y))?;
    data.meta.model = Some("sign-log-toy".into());
    data.meta.seed = Some(seed);
    data.meta.betas = Some((beta1, beta2));
    Ok(data)
}

/// Heteroscedastic toy for dimension selection:
/// `Y = Phi(X1) + Phi(X2) * e`, `e ~ N(0, 1)`, `X ~ N(0, I_10)`.
pub fn gen_dim_toy(n: usize, seed: u64) -> Result<Dataset> {
    let p = 10;
    if n == 0 {
        return Err(Error::contract("gen_dim_toy", "n must be >= 1"));
    }
    let mut rng = rng_for(seed, Stream::DataGen);
    let mut x = Array2::zeros((n, p));
    let mut y = Array2::zeros((n, 1));
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = normal(&mut rng);
        }
        let eps = normal(&mut rng);
        y[(i, 0)] = normal_cdf(x[(i, 0)]) + normal_cdf(x[(i, 1)]) * eps;
    }
    let mut data = Dataset::new(x, Response::Continuous(y))?;
    data.meta.model = Some("dim-toy".into());
    data.meta.seed = Some(seed);
    Ok(data)
}

// ---- CSV ------------------------------------------------------------------

/// Load a numeric CSV with a header row. Columns named in
/// `response_cols` become the response; the rest become predictors.
/// Constant predictor columns are dropped when `drop_constant` is set.
pub fn load_csv(path: &Path, response_cols: &[String], drop_constant: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            row: 0,
            col: 0,
            msg: e.to_string(),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            row: 0,
            col: 0,
            msg: e.to_string(),
        })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    for rc in response_cols {
        if !headers.iter().any(|h| h == rc) {
            return Err(Error::Config(format!(
                "response column '{rc}' not found in header {headers:?}"
            )));
        }
    }
    let is_response: Vec<bool> = headers
        .iter()
        .map(|h| response_cols.iter().any(|rc| rc == h))
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ri, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::CsvParse {
            row: ri + 2,
            col: 0,
            msg: e.to_string(),
        })?;
        let mut row = Vec::with_capacity(headers.len());
        for (ci, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::CsvParse {
                row: ri + 2,
                col: ci + 1,
                msg: format!("non-numeric cell '{field}'"),
            })?;
            row.push(v);
        }
        if row.len() != headers.len() {
            return Err(Error::CsvParse {
                row: ri + 2,
                col: row.len(),
                msg: "row width differs from header".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::contract("load_csv", "no data rows"));
    }

    let n = rows.len();
    let mut x_cols: Vec<usize> = Vec::new();
    let mut y_cols: Vec<usize> = Vec::new();
    for (ci, &is_y) in is_response.iter().enumerate() {
        if is_y {
            y_cols.push(ci);
        } else {
            x_cols.push(ci);
        }
    }
    if drop_constant {
        x_cols.retain(|&ci| {
            let first = rows[0][ci];
            rows.iter().any(|r| r[ci] != first)
        });
    }
    if x_cols.is_empty() || y_cols.is_empty() {
        return Err(Error::contract("load_csv", "need at least one predictor and one response"));
    }

    let mut x = Array2::zeros((n, x_cols.len()));
    let mut y = Array2::zeros((n, y_cols.len()));
    for (i, row) in rows.iter().enumerate() {
        for (j, &ci) in x_cols.iter().enumerate() {
            x[(i, j)] = row[ci];
        }
        for (j, &ci) in y_cols.iter().enumerate() {
            y[(i, j)] = row[ci];
        }
    }
    let mut data = Dataset::new(x, Response::Continuous(y))?;
    data.meta.x_names = x_cols.iter().map(|&ci| headers[ci].clone()).collect();
    data.meta.y_names = y_cols.iter().map(|&ci| headers[ci].clone()).collect();
    Ok(data)
}

/// Write a dataset as CSV. f64 values use the shortest representation
/// that round-trips exactly, so written files reload bit-for-bit.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let d_x = data.d_x();
    let y_names: Vec<String> = match &data.y {
        Response::Continuous(y) => {
            if data.meta.y_names.len() == y.ncols() {
                data.meta.y_names.clone()
            } else {
                (0..y.ncols()).map(|j| format!("y{j}")).collect()
            }
        }
        Response::Labels(_) => vec!["label".to_string()],
    };
    let x_names: Vec<String> = if data.meta.x_names.len() == d_x {
        data.meta.x_names.clone()
    } else {
        (0..d_x).map(|j| format!("x{j}")).collect()
    };
    out.push_str(&y_names.join(","));
    out.push(',');
    out.push_str(&x_names.join(","));
    out.push('\n');
    for i in 0..data.n() {
        match &data.y {
            Response::Continuous(y) => {
                for j in 0..y.ncols() {
                    if j > 0 {
                        out.push(',');
                    }
                    out.push_str(&format!("{}", y[(i, j)]));
                }
            }
            Response::Labels(l) => out.push_str(&format!("{}", l[i])),
        }
        for j in 0..d_x {
            out.push(',');
            out.push_str(&format!("{}", data.x[(i, j)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---- splitting ------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum SplitSizes {
    Counts(usize, usize, usize),
    Fractions(f64, f64, f64),
}

#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub sizes: SplitSizes,
    pub seed: u64,
}

/// Seeded permutation followed by contiguous assignment. In count mode
/// the counts may sum to less than `n`; surplus rows are dropped, which
/// supports deliberate subsampling. Fraction mode assigns every row.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let n = data.n();
    let (n_train, n_val, n_test) = match spec.sizes {
        SplitSizes::Counts(a, b, c) => {
            if a + b + c > n {
                return Err(Error::contract(
                    "split",
                    format!("requested {} rows, dataset has {n}", a + b + c),
                ));
            }
            (a, b, c)
        }
        SplitSizes::Fractions(fa, fb, fc) => {
            if (fa + fb + fc - 1.0).abs() > 1e-9 || fa < 0.0 || fb < 0.0 || fc < 0.0 {
                return Err(Error::contract("split", "fractions must be nonnegative and sum to 1"));
            }
            let a = (fa * n as f64).floor() as usize;
            let b = (fb * n as f64).floor() as usize;
            (a, b, n - a - b)
        }
    };
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(spec.seed, Stream::Split);
    idx.shuffle(&mut rng);
    let train = data.select(&idx[..n_train]);
    let val = data.select(&idx[n_train..n_train + n_val]);
    let test = data.select(&idx[n_train + n_val..n_train + n_val + n_test]);
    Ok((train, val, test))
}

/// Disjoint, exhaustive folds from a seeded permutation; sizes differ by
/// at most one.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(Error::contract("kfold", format!("need 2 <= folds <= n, got {folds}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, Stream::Split);
    idx.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut at = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(idx[at..at + size].to_vec());
        at += size;
    }
    Ok(out)
}
