//! Empirical losses for the adversarial objective.
//!
//! For a minibatch `{(y_j, x_j, u_j)}` of size `m` with representation
//! `r_j = R(x_j)`:
//!
//! - MI term (exact): `(1/m) sum_j D(y_j, r_j)
//!   - (1/(m(m-1))) sum_{j != k} exp(D(y_j, r_k))`, an order-two
//!   U-statistic over all ordered off-diagonal pairs.
//! - MI term (permuted): the cross sum is replaced by
//!   `(1/m) sum_j exp(D(y_j, r_{sigma(j)}))` with `sigma` a random
//!   derangement, a cheap surrogate for large batches.
//! - Push term: `(1/m) sum_j Q(r_j) - (1/m) sum_j exp(Q(u_j))`.
//! - Full objective: `lambda * push - mi`; the critics `D` and `Q`
//!   ascend their terms while `R` descends the total.
//!
//! The categorical-response variant replaces the MI term with a weighted
//! per-class sum of KL duals, one critic per class.
//!
//! Exact U-statistic evaluation (no gradients) goes through [`mi_value`];
//! it accumulates with exact summation so the value is invariant under
//! row permutations, and it is the basis of the plug-in estimate
//! [`mi_estimate`].

use ndarray::Array2;
use rand_chacha::ChaCha12Rng;

use crate::autodiff::{Graph, TensorId, EXP_CLAMP};
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpVars};
use crate::util::fsum;

/// Batches up to this size use the exact U-statistic during training;
/// larger batches use the permuted surrogate.
pub const EXACT_BATCH_LIMIT: usize = 128;

/// How the MI cross term is computed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    /// Exact when the batch has at most [`EXACT_BATCH_LIMIT`] rows,
    /// permuted otherwise.
    #[default]
    Auto,
    Exact,
    Permuted,
}

impl LossMode {
    pub fn resolve(self, m: usize) -> ResolvedMode {
        match self {
            LossMode::Exact => ResolvedMode::Exact,
            LossMode::Permuted => ResolvedMode::Permuted,
            LossMode::Auto => {
                if m <= EXACT_BATCH_LIMIT {
                    ResolvedMode::Exact
                } else {
                    ResolvedMode::Permuted
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedMode {
    Exact,
    Permuted,
}

/// One minibatch: predictors, response, and the matching reference rows.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f64>,
    pub y: BatchResponse,
    pub u: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub enum BatchResponse {
    Continuous(Array2<f64>),
    Labels(Vec<usize>),
}

impl Batch {
    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn y_matrix(&self) -> Result<&Array2<f64>> {
        match &self.y {
            BatchResponse::Continuous(y) => Ok(y),
            BatchResponse::Labels(_) => {
                Err(Error::contract("batch", "expected continuous response"))
            }
        }
    }
}

/// Loss values of one objective evaluation, with the sign convention
/// `total = lambda * push_term - mi_term`.
#[derive(Debug, Clone, Copy)]
pub struct LossReport {
    pub mi_term: f64,
    pub push_term: f64,
    pub total: f64,
    pub saturation_count: usize,
}

/// Batch tensors bound into a graph as non-trainable inputs.
pub struct BoundBatch {
    pub x: TensorId,
    pub y: Option<TensorId>,
    pub u: Option<TensorId>,
}

pub fn bind_batch(g: &mut Graph, batch: &Batch) -> BoundBatch {
    let x = g.input(&batch.x, false);
    let y = match &batch.y {
        BatchResponse::Continuous(y) => Some(g.input(y, false)),
        BatchResponse::Labels(_) => None,
    };
    let u = batch.u.as_ref().map(|u| g.input(u, false));
    BoundBatch { x, y, u }
}

/// Uniform random derangement of `0..m`: rejection sampling with at most
/// 20 retries, then the cycle shift `j -> j+1 mod m`. Fixed points are
/// excluded because they would leak joint-distribution pairs into the
/// product-measure term.
pub fn sample_derangement(m: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    debug_assert!(m >= 2);
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(j, &k)| j != k) {
            return perm;
        }
    }
    (0..m).map(|j| (j + 1) % m).collect()
}

fn critic_pairs(
    g: &mut Graph,
    d: &MlpVars,
    y: TensorId,
    r: TensorId,
) -> Result<TensorId> {
    let joined = g.concat_cols(y, r)?;
    d.forward(g, joined)
}

/// Exact MI loss over all ordered off-diagonal pairs.
pub fn mi_loss(g: &mut Graph, d: &MlpVars, y: TensorId, r_out: TensorId) -> Result<TensorId> {
    let m = g.shape(y).0;
    if m < 2 {
        return Err(Error::contract("mi_loss", "need at least 2 rows"));
    }
    let diag = critic_pairs(g, d, y, r_out)?;
    let term1 = g.mean(diag);

    let mut idx_y = Vec::with_capacity(m * (m - 1));
    let mut idx_r = Vec::with_capacity(m * (m - 1));
    for i in 0..m {
        for j in 0..m {
            if i != j {
                idx_y.push(i);
                idx_r.push(j);
            }
        }
    }
    let yy = g.gather_rows(y, &idx_y)?;
    let rr = g.gather_rows(r_out, &idx_r)?;
    let cross = critic_pairs(g, d, yy, rr)?;
    let e = g.exp(cross);
    let term2 = g.mean(e);
    g.sub(term1, term2)
}

/// Permuted-sample MI loss; draws a fresh derangement from `rng`.
pub fn mi_loss_permuted(
    g: &mut Graph,
    d: &MlpVars,
    y: TensorId,
    r_out: TensorId,
    rng: &mut ChaCha12Rng,
) -> Result<TensorId> {
    let m = g.shape(y).0;
    if m < 2 {
        return Err(Error::contract("mi_loss_permuted", "need at least 2 rows"));
    }
    let sigma = sample_derangement(m, rng);
    mi_loss_permuted_with(g, d, y, r_out, &sigma)
}

/// Permuted-sample MI loss with an explicit permutation (test injection
/// point; training draws one derangement per minibatch and reuses it for
/// the critic and representer steps).
pub fn mi_loss_permuted_with(
    g: &mut Graph,
    d: &MlpVars,
    y: TensorId,
    r_out: TensorId,
    sigma: &[usize],
) -> Result<TensorId> {
    let m = g.shape(y).0;
    if m < 2 {
        return Err(Error::contract("mi_loss_permuted", "need at least 2 rows"));
    }
    if sigma.len() != m {
        return Err(Error::contract("mi_loss_permuted", "permutation length mismatch"));
    }
    let diag = critic_pairs(g, d, y, r_out)?;
    let term1 = g.mean(diag);
    let r_perm = g.gather_rows(r_out, sigma)?;
    let cross = critic_pairs(g, d, y, r_perm)?;
    let e = g.exp(cross);
    let term2 = g.mean(e);
    g.sub(term1, term2)
}

/// Push-forward loss: `mean Q(r) - mean exp(Q(u))`.
pub fn push_loss(g: &mut Graph, q: &MlpVars, r_out: TensorId, u: TensorId) -> Result<TensorId> {
    let qr = q.forward(g, r_out)?;
    let term1 = g.mean(qr);
    let qu = q.forward(g, u)?;
    let e = g.exp(qu);
    let term2 = g.mean(e);
    g.sub(term1, term2)
}

/// Nodes of the full objective `total = lambda * push - mi`.
pub struct ObjectiveNodes {
    pub total: TensorId,
    pub mi: TensorId,
    pub push: TensorId,
}

/// Build the full objective on an already-bound batch. The critics'
/// inner suprema are realized by the training loop, not here.
#[allow(clippy::too_many_arguments)]
pub fn msrl_objective(
    g: &mut Graph,
    r: &MlpVars,
    d: &MlpVars,
    q: &MlpVars,
    bb: &BoundBatch,
    lambda: f64,
    mode: LossMode,
    rng: &mut ChaCha12Rng,
) -> Result<ObjectiveNodes> {
    if lambda < 0.0 {
        return Err(Error::contract("msrl_objective", "lambda must be nonnegative"));
    }
    let y = bb
        .y
        .ok_or_else(|| Error::contract("msrl_objective", "continuous response required"))?;
    let u = bb
        .u
        .ok_or_else(|| Error::contract("msrl_objective", "reference rows required"))?;
    let m = g.shape(y).0;
    let r_out = r.forward(g, bb.x)?;
    let mi = match mode.resolve(m) {
        ResolvedMode::Exact => mi_loss(g, d, y, r_out)?,
        ResolvedMode::Permuted => mi_loss_permuted(g, d, y, r_out, rng)?,
    };
    let push = push_loss(g, q, r_out, u)?;
    let scaled = g.scale(push, lambda);
    let total = g.sub(scaled, mi)?;
    Ok(ObjectiveNodes { total, mi, push })
}

/// Evaluate the objective without training; convenience wrapper that
/// builds a throwaway graph and reports the three values.
pub fn msrl_objective_report(
    r: &Mlp,
    d: &Mlp,
    q: &Mlp,
    lambda: f64,
    batch: &Batch,
    mode: LossMode,
    rng: &mut ChaCha12Rng,
) -> Result<LossReport> {
    let mut g = Graph::new();
    let bb = bind_batch(&mut g, batch);
    let rv = r.bind(&mut g, false);
    let dv = d.bind(&mut g, false);
    let qv = q.bind(&mut g, false);
    let nodes = msrl_objective(&mut g, &rv, &dv, &qv, &bb, lambda, mode, rng)?;
    Ok(LossReport {
        mi_term: g.scalar_value(nodes.mi),
        push_term: g.scalar_value(nodes.push),
        total: g.scalar_value(nodes.total),
        saturation_count: g.exp_saturations(),
    })
}

/// Weighted per-class KL dual for a categorical response:
/// `sum_k p_hat[k] * ((1/n_k) sum_{i: y_i = k} D_k(r_i)
///                    - (1/m) sum_i exp(D_k(r_i)))`.
/// A class absent from the batch keeps its exponential term but its
/// positive term is skipped (with a warning).
pub fn categorical_mi_loss(
    g: &mut Graph,
    d_classes: &[MlpVars],
    r_out: TensorId,
    labels: &[usize],
    p_hat: &[f64],
) -> Result<TensorId> {
    let k_classes = d_classes.len();
    if k_classes == 0 || p_hat.len() != k_classes {
        return Err(Error::contract(
            "categorical_mi_loss",
            "need one critic and one weight per class",
        ));
    }
    let m = g.shape(r_out).0;
    if labels.len() != m {
        return Err(Error::contract("categorical_mi_loss", "label count mismatch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k_classes) {
        return Err(Error::contract(
            "categorical_mi_loss",
            format!("label {bad} out of range for {k_classes} classes"),
        ));
    }
    let mut acc: Option<TensorId> = None;
    for (k, dk) in d_classes.iter().enumerate() {
        let dk_vals = dk.forward(g, r_out)?;
        let n_k = labels.iter().filter(|&&l| l == k).count();
        let mut contrib = {
            let e = g.exp(dk_vals);
            let neg = g.mean(e);
            g.scale(neg, -p_hat[k])
        };
        if n_k > 0 {
            let mask: Vec<f64> = labels
                .iter()
                .map(|&l| if l == k { 1.0 / n_k as f64 } else { 0.0 })
                .collect();
            let mask_id = g.input_slice((m, 1), &mask, false);
            let masked = g.mul(dk_vals, mask_id)?;
            let pos = g.sum(masked);
            let pos_scaled = g.scale(pos, p_hat[k]);
            contrib = g.add(contrib, pos_scaled)?;
        } else {
            log::warn!("categorical_mi_loss: class {k} absent from batch, positive term skipped");
        }
        acc = Some(match acc {
            None => contrib,
            Some(prev) => g.add(prev, contrib)?,
        });
    }
    Ok(acc.expect("at least one class"))
}

// ---- forward-only evaluation ----------------------------------------------

fn clamped_exp(v: f64) -> f64 {
    v.min(EXP_CLAMP).exp()
}

/// Exact U-statistic MI value with an arbitrary critic, accumulated with
/// exact summation (permutation-invariant to the bit).
pub fn mi_value_with<F>(critic: F, y: &Array2<f64>, r: &Array2<f64>) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let n = y.nrows();
    if n < 2 || r.nrows() != n {
        return Err(Error::contract("mi_value", "need matching row counts, n >= 2"));
    }
    let row = |m: &Array2<f64>, i: usize| -> Vec<f64> { m.row(i).to_vec() };
    let term1 = fsum((0..n).map(|i| critic(&row(y, i), &row(r, i)))) / n as f64;
    let term2 = fsum((0..n).flat_map(|i| {
        let yi = row(y, i);
        (0..n)
            .filter(move |&j| j != i)
            .map(|j| clamped_exp(critic(&yi, &row(r, j))))
            .collect::<Vec<f64>>()
    })) / (n * (n - 1)) as f64;
    Ok(term1 - term2)
}

/// Exact U-statistic MI value of a critic network on `(y, r)` rows.
/// Evaluated in row chunks with no gradient bookkeeping.
pub fn mi_value(d: &Mlp, y: &Array2<f64>, r: &Array2<f64>) -> Result<f64> {
    let n = y.nrows();
    if n < 2 || r.nrows() != n {
        return Err(Error::contract("mi_value", "need matching row counts, n >= 2"));
    }
    let d_y = y.ncols();
    let d_r = r.ncols();
    if d.spec.input_dim != d_y + d_r {
        return Err(Error::ShapeMismatch {
            op: "mi_value",
            lhs: (d.spec.input_dim, 0),
            rhs: (d_y + d_r, 0),
        });
    }
    // Diagonal pairs in one pass.
    let mut diag = Array2::zeros((n, d_y + d_r));
    for i in 0..n {
        for j in 0..d_y {
            diag[(i, j)] = y[(i, j)];
        }
        for j in 0..d_r {
            diag[(i, d_y + j)] = r[(i, j)];
        }
    }
    let dvals = d.forward_array(&diag)?;
    let term1 = fsum(dvals.iter().copied()) / n as f64;

    // Cross pairs, one row block per i.
    let term2 = fsum((0..n).flat_map(|i| {
        let mut block = Array2::zeros((n - 1, d_y + d_r));
        let mut at = 0;
        for j in 0..n {
            if j == i {
                continue;
            }
            for c in 0..d_y {
                block[(at, c)] = y[(i, c)];
            }
            for c in 0..d_r {
                block[(at, d_y + c)] = r[(j, c)];
            }
            at += 1;
        }
        let vals = d.forward_array(&block).expect("shape checked above");
        vals.iter().map(|&v| clamped_exp(v)).collect::<Vec<f64>>()
    })) / (n * (n - 1)) as f64;
    Ok(term1 - term2)
}

/// Plug-in mutual-information estimate: exact U-statistic value plus 1.
/// Always exact, never permuted, no gradients.
pub fn mi_estimate(d: &Mlp, r_net: &Mlp, x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    if x.nrows() < 2 {
        return Err(Error::contract("mi_estimate", "need n >= 2"));
    }
    let r = r_net.forward_array(x)?;
    Ok(mi_value(d, y, &r)? + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    use crate::nn::MlpSpec;
    use crate::util::{rng_for, Stream};

    fn zero_critic(input_dim: usize) -> Mlp {
        let spec = MlpSpec::new(input_dim, &[], 1);
        Mlp::from_flat(spec.clone(), &vec![0.0; spec.param_count()]).unwrap()
    }

    /// Affine critic D(v) = w . v + b as a bias-only single layer.
    fn affine_critic(w: &[f64], b: f64) -> Mlp {
        let spec = MlpSpec::new(w.len(), &[], 1);
        let mut flat = w.to_vec();
        flat.push(b);
        Mlp::from_flat(spec, &flat).unwrap()
    }

    fn small_batch(m: usize, d_x: usize, d_y: usize, d0: usize, seed: u64) -> Batch {
        let mut rng = rng_for(seed, Stream::Other(20));
        let x = Array2::from_shape_fn((m, d_x), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = Array2::from_shape_fn((m, d_y), |_| rng.random::<f64>() * 2.0 - 1.0);
        let u = Array2::from_shape_fn((m, d0), |_| rng.random::<f64>());
        Batch {
            x,
            y: BatchResponse::Continuous(y),
            u: Some(u),
        }
    }

    #[test]
    fn constant_critic_gives_minus_one() {
        // D = 0: term1 = 0, term2 = e^0 = 1.
        let d = zero_critic(2);
        let y = array![[0.3], [0.8], [-0.4]];
        let r = array![[0.1], [0.9], [0.5]];
        let v = mi_value(&d, &y, &r).unwrap();
        assert!((v + 1.0).abs() < 1e-15);

        // Permuted variant agrees for a constant critic.
        let mut g = Graph::new();
        let yid = g.input(&y, false);
        let rid = g.input(&r, false);
        let dv = d.bind(&mut g, false);
        let mut rng = rng_for(1, Stream::Permutation);
        let loss = mi_loss_permuted(&mut g, &dv, yid, rid, &mut rng).unwrap();
        assert!((g.scalar_value(loss) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_sample_hand_case() {
        // pairs (y, r) = (0,0), (1,1); D(y, r) = y * r -> 0.5 - 1 = -0.5
        let y = array![[0.0], [1.0]];
        let r = array![[0.0], [1.0]];
        let v = mi_value_with(|yi, ri| yi[0] * ri[0], &y, &r).unwrap();
        assert!((v + 0.5).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn mi_value_permutation_invariant_exactly() {
        let d = Mlp::init(MlpSpec::new(3, &[6], 1), 77).unwrap();
        let y = Array2::from_shape_fn((6, 1), |(i, _)| (i as f64 * 0.71).sin());
        let r = Array2::from_shape_fn((6, 2), |(i, j)| ((i + j) as f64 * 0.37).cos());
        let base = mi_value(&d, &y, &r).unwrap();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let yp = y.select(ndarray::Axis(0), &perm);
        let rp = r.select(ndarray::Axis(0), &perm);
        let permuted = mi_value(&d, &yp, &rp).unwrap();
        assert_eq!(base.to_bits(), permuted.to_bits());
    }

    #[test]
    fn graph_mi_loss_matches_value_path() {
        let d = Mlp::init(MlpSpec::new(2, &[5], 1), 3).unwrap();
        let y = Array2::from_shape_fn((5, 1), |(i, _)| (i as f64 * 0.4).sin());
        let r = Array2::from_shape_fn((5, 1), |(i, _)| (i as f64 * 0.9).cos());
        let mut g = Graph::new();
        let yid = g.input(&y, false);
        let rid = g.input(&r, false);
        let dv = d.bind(&mut g, false);
        let loss = mi_loss(&mut g, &dv, yid, rid).unwrap();
        let via_graph = g.scalar_value(loss);
        let via_value = mi_value(&d, &y, &r).unwrap();
        assert!((via_graph - via_value).abs() < 1e-12);
    }

    #[test]
    fn mi_loss_rejects_tiny_batch() {
        let d = zero_critic(2);
        let y = array![[0.0]];
        let r = array![[0.0]];
        let mut g = Graph::new();
        let yid = g.input(&y, false);
        let rid = g.input(&r, false);
        let dv = d.bind(&mut g, false);
        assert!(mi_loss(&mut g, &dv, yid, rid).is_err());
        assert!(mi_value(&d, &y, &r).is_err());
    }

    #[test]
    fn derangements_have_no_fixed_points() {
        let mut rng = rng_for(5, Stream::Permutation);
        for m in 2..30 {
            for _ in 0..20 {
                let sigma = sample_derangement(m, &mut rng);
                assert!(sigma.iter().enumerate().all(|(j, &k)| j != k));
                let mut sorted = sigma.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..m).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn permuted_cross_term_unbiased_for_exact() {
        // E over derangements of the surrogate cross term equals the
        // U-statistic cross term on a fixed batch.
        let d = Mlp::init(MlpSpec::new(2, &[4], 1), 9).unwrap();
        let y = Array2::from_shape_fn((5, 1), |(i, _)| (i as f64 * 1.3).sin());
        let r = Array2::from_shape_fn((5, 1), |(i, _)| (i as f64 * 0.7).cos());
        let exact = mi_value(&d, &y, &r).unwrap();

        let mut rng = rng_for(13, Stream::Permutation);
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let mut g = Graph::new();
            let yid = g.input(&y, false);
            let rid = g.input(&r, false);
            let dv = d.bind(&mut g, false);
            let loss = mi_loss_permuted(&mut g, &dv, yid, rid, &mut rng).unwrap();
            acc += g.scalar_value(loss);
        }
        let mc = acc / trials as f64;
        assert!((mc - exact).abs() < 1e-2, "mc {mc} vs exact {exact}");
    }

    #[test]
    fn permuted_cycle_shift_hand_value() {
        // m = 3, sigma = (1, 2, 0), D(y, r) = y + r.
        let d = affine_critic(&[1.0, 1.0], 0.0);
        let y = array![[0.1], [0.2], [0.3]];
        let r = array![[1.0], [2.0], [3.0]];
        let mut g = Graph::new();
        let yid = g.input(&y, false);
        let rid = g.input(&r, false);
        let dv = d.bind(&mut g, false);
        let loss = mi_loss_permuted_with(&mut g, &dv, yid, rid, &[1, 2, 0]).unwrap();
        let term1 = (1.1 + 2.2 + 3.3) / 3.0;
        let term2 = ((0.1f64 + 2.0).exp() + (0.2f64 + 3.0).exp() + (0.3f64 + 1.0).exp()) / 3.0;
        let expect = term1 - term2;
        assert!((g.scalar_value(loss) - expect).abs() < 1e-12);
    }

    #[test]
    fn push_loss_cases() {
        // Q = 0 -> 0 - 1 = -1.
        let q = zero_critic(1);
        let r = array![[0.2], [0.8]];
        let u = array![[0.1], [0.6]];
        let mut g = Graph::new();
        let rid = g.input(&r, false);
        let uid = g.input(&u, false);
        let qv = q.bind(&mut g, false);
        let loss = push_loss(&mut g, &qv, rid, uid).unwrap();
        assert!((g.scalar_value(loss) + 1.0).abs() < 1e-15);

        // Q(r) = r, R = 0.5 const, U = [0, 1]: 0.5 - (1 + e)/2.
        let q_id = affine_critic(&[1.0], 0.0);
        let r2 = array![[0.5], [0.5]];
        let u2 = array![[0.0], [1.0]];
        let mut g2 = Graph::new();
        let rid2 = g2.input(&r2, false);
        let uid2 = g2.input(&u2, false);
        let qv2 = q_id.bind(&mut g2, false);
        let loss2 = push_loss(&mut g2, &qv2, rid2, uid2).unwrap();
        let expect = 0.5 - (1.0 + std::f64::consts::E) / 2.0;
        assert!((g2.scalar_value(loss2) - expect).abs() < 1e-12);
        assert!((expect + 1.35914).abs() < 1e-5);

        // Row order does not matter.
        let u3 = array![[1.0], [0.0]];
        let mut g3 = Graph::new();
        let rid3 = g3.input(&r2, false);
        let uid3 = g3.input(&u3, false);
        let qv3 = q_id.bind(&mut g3, false);
        let loss3 = push_loss(&mut g3, &qv3, rid3, uid3).unwrap();
        assert_eq!(g3.scalar_value(loss3), g2.scalar_value(loss2));
    }

    #[test]
    fn kl_dual_exact_on_two_point_enumeration() {
        // P1 = (1/4, 3/4), P2 = (1/2, 1/2) over {0, 1}. With the exact
        // dual critic Q(z) = log(p1(z)/p2(z)), the empirical dual on
        // enumerated samples reproduces KL(P1 || P2) exactly.
        let p1: [f64; 2] = [0.25, 0.75];
        let p2: [f64; 2] = [0.5, 0.5];
        let a = (p1[0] / p2[0]).ln();
        let b = (p1[1] / p2[1]).ln();
        // Affine map over z in {0, 1}: Q(z) = (b - a) z + a.
        let q = affine_critic(&[b - a], a);
        // 4 samples matching P1 exactly; 4 reference samples matching P2.
        let r = array![[0.0], [1.0], [1.0], [1.0]];
        let u = array![[0.0], [0.0], [1.0], [1.0]];
        let mut g = Graph::new();
        let rid = g.input(&r, false);
        let uid = g.input(&u, false);
        let qv = q.bind(&mut g, false);
        let loss = push_loss(&mut g, &qv, rid, uid).unwrap();
        let kl = p1[0] * (p1[0] / p2[0]).ln() + p1[1] * (p1[1] / p2[1]).ln();
        let dual = g.scalar_value(loss) + 1.0;
        assert!((dual - kl).abs() < 1e-14, "dual {dual} vs kl {kl}");
    }

    #[test]
    fn objective_composition_and_lambda() {
        let batch = small_batch(6, 3, 1, 2, 42);
        let r = Mlp::init(MlpSpec::new(3, &[4], 2), 1).unwrap();
        let d = zero_critic(3);
        let q = zero_critic(2);
        let mut rng = rng_for(2, Stream::Permutation);

        // lambda = 0: total = -mi.
        let rep0 =
            msrl_objective_report(&r, &d, &q, 0.0, &batch, LossMode::Exact, &mut rng).unwrap();
        assert!((rep0.total + rep0.mi_term).abs() < 1e-12);

        // Constant critics: mi = -1, push = -1, lambda = 2 -> total = -1.
        let rep2 =
            msrl_objective_report(&r, &d, &q, 2.0, &batch, LossMode::Exact, &mut rng).unwrap();
        assert!((rep2.mi_term + 1.0).abs() < 1e-12);
        assert!((rep2.push_term + 1.0).abs() < 1e-12);
        assert!((rep2.total + 1.0).abs() < 1e-12);

        // Negative lambda rejected.
        assert!(
            msrl_objective_report(&r, &d, &q, -1.0, &batch, LossMode::Exact, &mut rng).is_err()
        );
    }

    #[test]
    fn lambda_zero_ignores_q() {
        let batch = small_batch(5, 2, 1, 2, 7);
        let r = Mlp::init(MlpSpec::new(2, &[4], 2), 3).unwrap();
        let d = Mlp::init(MlpSpec::new(3, &[4], 1), 4).unwrap();
        let q1 = Mlp::init(MlpSpec::new(2, &[4], 1), 5).unwrap();
        let q2 = Mlp::init(MlpSpec::new(2, &[4], 1), 6).unwrap();
        let mut rng = rng_for(0, Stream::Permutation);
        let a = msrl_objective_report(&r, &d, &q1, 0.0, &batch, LossMode::Exact, &mut rng).unwrap();
        let b = msrl_objective_report(&r, &d, &q2, 0.0, &batch, LossMode::Exact, &mut rng).unwrap();
        assert_eq!(a.total, b.total);
    }

    #[test]
    fn loss_mode_threshold() {
        assert_eq!(LossMode::Auto.resolve(128), ResolvedMode::Exact);
        assert_eq!(LossMode::Auto.resolve(129), ResolvedMode::Permuted);
        assert_eq!(LossMode::Exact.resolve(100_000), ResolvedMode::Exact);
        assert_eq!(LossMode::Permuted.resolve(2), ResolvedMode::Permuted);
    }

    #[test]
    fn categorical_constant_critics() {
        // All D_k = 0 -> sum_k p_k (0 - 1) = -1.
        let d0 = zero_critic(2);
        let d1 = zero_critic(2);
        let r = array![[0.2, 0.4], [0.6, 0.1], [0.9, 0.3]];
        let labels = vec![0usize, 1, 1];
        let p_hat = [1.0 / 3.0, 2.0 / 3.0];
        let mut g = Graph::new();
        let rid = g.input(&r, false);
        let dv = vec![d0.bind(&mut g, false), d1.bind(&mut g, false)];
        let loss = categorical_mi_loss(&mut g, &dv, rid, &labels, &p_hat).unwrap();
        assert!((g.scalar_value(loss) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn categorical_hand_enumeration() {
        // K = 2, one sample per class, D_k(r) = k * sum(r), R rows fixed.
        // With r0 = (0.5, 0.5) both rows:
        //   D_0 = 0 everywhere, D_1 = 1.0 at each row.
        // p = (1/2, 1/2):
        //   class 0: pos = 0, neg = mean(e^0) = 1 -> 0.5 * (0 - 1)
        //   class 1: pos = 1, neg = mean(e^1) = e -> 0.5 * (1 - e)
        let d0 = affine_critic(&[0.0, 0.0], 0.0);
        let d1 = affine_critic(&[1.0, 1.0], 0.0);
        let r = array![[0.5, 0.5], [0.5, 0.5]];
        let labels = vec![0usize, 1];
        let p_hat = [0.5, 0.5];
        let mut g = Graph::new();
        let rid = g.input(&r, false);
        let dv = vec![d0.bind(&mut g, false), d1.bind(&mut g, false)];
        let loss = categorical_mi_loss(&mut g, &dv, rid, &labels, &p_hat).unwrap();
        let expect = 0.5 * (0.0 - 1.0) + 0.5 * (1.0 - std::f64::consts::E);
        assert!((g.scalar_value(loss) - expect).abs() < 1e-14);
    }

    #[test]
    fn categorical_matches_one_hot_reformulation() {
        // Per-class form vs single K-output one-hot form on identical
        // parameters, with batch-empirical class weights.
        let mut rng = rng_for(31, Stream::Other(22));
        let m = 8;
        let k_classes = 3;
        let d_r = 2;
        let nets: Vec<Mlp> = (0..k_classes)
            .map(|k| Mlp::init(MlpSpec::new(d_r, &[5], 1), 50 + k as u64).unwrap())
            .collect();
        let r = Array2::from_shape_fn((m, d_r), |_| rng.random::<f64>() * 2.0 - 1.0);
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..k_classes)).collect();
        let p_hat: Vec<f64> = (0..k_classes)
            .map(|k| labels.iter().filter(|&&l| l == k).count() as f64 / m as f64)
            .collect();

        let mut g = Graph::new();
        let rid = g.input(&r, false);
        let dv: Vec<MlpVars> = nets.iter().map(|netz| netz.bind(&mut g, false)).collect();
        let per_class = categorical_mi_loss(&mut g, &dv, rid, &labels, &p_hat).unwrap();
        let per_class_val = g.scalar_value(per_class);

        // One-hot form: (1/m) sum_i D(r_i)' ytilde_i - (1/m) sum_i p' e^{D(r_i)}
        let mut one_hot = 0.0;
        for i in 0..m {
            let ri = r.row(i).to_owned().insert_axis(ndarray::Axis(0));
            for (k, netz) in nets.iter().enumerate() {
                let dki = netz.forward_array(&ri).unwrap()[(0, 0)];
                if labels[i] == k && p_hat[k] > 0.0 {
                    // p_hat[k] * (1/n_k) = 1/m when p_hat is batch-empirical
                    one_hot += dki / m as f64;
                }
                one_hot -= p_hat[k] * dki.exp() / m as f64;
            }
        }
        assert!(
            (per_class_val - one_hot).abs() < 1e-12,
            "{per_class_val} vs {one_hot}"
        );
    }

    #[test]
    fn categorical_skips_empty_class() {
        let d0 = zero_critic(1);
        let d1 = affine_critic(&[1.0], 0.0);
        let r = array![[0.5], [0.25]];
        // Class 1 never appears.
        let labels = vec![0usize, 0];
        let p_hat = [0.5, 0.5];
        let mut g = Graph::new();
        let rid = g.input(&r, false);
        let dv = vec![d0.bind(&mut g, false), d1.bind(&mut g, false)];
        let loss = categorical_mi_loss(&mut g, &dv, rid, &labels, &p_hat).unwrap();
        // class 0: 0.5 * (0 - 1); class 1: only -0.5 * mean(e^{r})
        let expect = 0.5 * (0.0 - 1.0) - 0.5 * (0.5f64.exp() + 0.25f64.exp()) / 2.0;
        assert!((g.scalar_value(loss) - expect).abs() < 1e-14);
    }

    #[test]
    fn mi_estimate_zero_for_zero_critic() {
        let d = zero_critic(2);
        let r_net = Mlp::init(MlpSpec::new(3, &[4], 1), 8).unwrap();
        let mut rng = rng_for(12, Stream::Other(23));
        let x = Array2::from_shape_fn((20, 3), |_| rng.random::<f64>());
        let y = Array2::from_shape_fn((20, 1), |_| rng.random::<f64>());
        let est = mi_estimate(&d, &r_net, &x, &y).unwrap();
        assert!(est.abs() < 1e-12);
    }

    #[test]
    fn losses_differentiate_through_all_networks() {
        // Small finite-difference check of the full objective gradient
        // w.r.t. every parameter of R, D, and Q jointly.
        let batch = small_batch(4, 2, 1, 2, 99);
        let r_spec = MlpSpec::new(2, &[3], 2);
        let d_spec = MlpSpec::new(3, &[3], 1);
        let q_spec = MlpSpec::new(2, &[3], 1);
        let r = Mlp::init(r_spec.clone(), 1).unwrap();
        let d = Mlp::init(d_spec.clone(), 2).unwrap();
        let q = Mlp::init(q_spec.clone(), 3).unwrap();
        let (nr, nd) = (r_spec.param_count(), d_spec.param_count());

        let mut flat = r.flat_params();
        flat.extend(d.flat_params());
        flat.extend(q.flat_params());

        let eval = |params: &[f64]| -> f64 {
            let r = Mlp::from_flat(r_spec.clone(), &params[..nr]).unwrap();
            let d = Mlp::from_flat(d_spec.clone(), &params[nr..nr + nd]).unwrap();
            let q = Mlp::from_flat(q_spec.clone(), &params[nr + nd..]).unwrap();
            let mut rng = rng_for(0, Stream::Permutation);
            msrl_objective_report(&r, &d, &q, 2.0, &batch, LossMode::Exact, &mut rng)
                .unwrap()
                .total
        };

        // Analytic gradient.
        let mut g = Graph::new();
        let bb = bind_batch(&mut g, &batch);
        let rv = r.bind(&mut g, true);
        let dv = d.bind(&mut g, true);
        let qv = q.bind(&mut g, true);
        let mut rng = rng_for(0, Stream::Permutation);
        let nodes =
            msrl_objective(&mut g, &rv, &dv, &qv, &bb, 2.0, LossMode::Exact, &mut rng).unwrap();
        g.backward(nodes.total).unwrap();
        let mut analytic = Vec::new();
        for vars in [&rv, &dv, &qv] {
            for id in vars.param_ids() {
                analytic.extend_from_slice(g.grad(id).unwrap());
            }
        }

        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..flat.len() {
            let orig = flat[i];
            flat[i] = orig + eps;
            let up = eval(&flat);
            flat[i] = orig - eps;
            let down = eval(&flat);
            flat[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            let ad = analytic[i];
            let err = (ad - fd).abs() / 1.0_f64.max(ad.abs()).max(fd.abs());
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "worst {worst}");
    }
}
