//! Alternating adversarial training.
//!
//! One training run: draw the reference sample once, then per minibatch
//! ascend the MI critic on its term and the push-forward critic on its
//! term (representer frozen), then descend the representer on
//! `lambda * push - mi` (critics frozen). The same minibatch and, in
//! permuted mode, the same derangement serve all three steps. Per epoch
//! the validation metric (distance correlation by default) is computed
//! and the best-epoch parameters kept; training stops after `patience`
//! epochs without improvement.
//!
//! The run is repeated `restarts` times from different initializations
//! (independent RNG substreams per restart) and the restart with the
//! best validation metric wins. Restarts execute through [`crate::exec`],
//! so they run in parallel under the `parallel` feature with results
//! identical to the sequential order.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::autodiff::Graph;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::metrics::{distance_correlation_capped, distance_covariance, DCOR_ROW_CAP};
use crate::nn::{Activation, Mlp, MlpSpec, MlpVars, OutputTransform};
use crate::objective::{
    mi_loss, mi_loss_permuted_with, push_loss, sample_derangement, LossMode, ResolvedMode,
};
use crate::util::{derive_seed, normal, rng_for, rng_for_indexed, Stream};

/// Reference distribution for the push-forward term.
#[derive(Clone)]
pub enum Reference {
    /// `Uniform[0,1]^{d0}` (the default).
    Uniform01,
    /// `sin(Z)` with `Z ~ N(0,1)` per coordinate.
    SinGaussian,
    /// User-supplied sampler `(n, d0, rng) -> [n x d0]`.
    Custom(Arc<dyn Fn(usize, usize, &mut ChaCha12Rng) -> Array2<f64> + Send + Sync>),
}

impl std::fmt::Debug for Reference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reference::Uniform01 => write!(f, "Uniform01"),
            Reference::SinGaussian => write!(f, "SinGaussian"),
            Reference::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EsMetric {
    #[default]
    DistanceCorrelation,
    DistanceCovariance,
}

#[derive(Debug, Clone)]
pub struct MsrlConfig {
    pub lambda: f64,
    pub d0: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Decoupled decay (`p *= 1 - lr*wd`) by default; set for the
    /// L2-in-gradient coupling instead.
    pub coupled_weight_decay: bool,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub restarts: usize,
    pub seed: u64,
    pub reference: Reference,
    pub loss_mode: LossMode,
    pub es_metric: EsMetric,
    pub r_hidden: Vec<usize>,
    pub dq_hidden: Vec<usize>,
    pub activation: Activation,
    pub r_output_transform: OutputTransform,
}

impl MsrlConfig {
    /// Simulation-suite preset: representer (32, 16, 8), critics (16, 8),
    /// batch 512, lr 1e-3, wd 1e-4, 1000 epochs, patience 200,
    /// 10 restarts, lambda 2.
    pub fn paper_sim(d0: usize) -> Self {
        MsrlConfig {
            lambda: 2.0,
            d0,
            batch_size: 512,
            lr: 1e-3,
            weight_decay: 1e-4,
            coupled_weight_decay: false,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            max_epochs: 1000,
            patience: 200,
            restarts: 10,
            seed: 0,
            reference: Reference::Uniform01,
            loss_mode: LossMode::Auto,
            es_metric: EsMetric::DistanceCorrelation,
            r_hidden: vec![32, 16, 8],
            dq_hidden: vec![16, 8],
            activation: Activation::LeakyRelu(0.01),
            r_output_transform: OutputTransform::Identity,
        }
    }

    /// Cheaper desk preset: 3 restarts, 400 epochs, patience 100.
    pub fn desk(d0: usize) -> Self {
        MsrlConfig {
            restarts: 3,
            max_epochs: 400,
            patience: 100,
            ..MsrlConfig::paper_sim(d0)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        if self.d0 == 0 {
            return Err(Error::Config("d0 must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience must not exceed max_epochs".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

// ---- Adam -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

/// Per-network Adam state: one first/second moment buffer per parameter
/// tensor, plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(tensor_sizes: &[usize]) -> Self {
        AdamState {
            m: tensor_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: tensor_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            step: 0,
        }
    }

    pub fn for_mlp(net: &Mlp) -> Self {
        AdamState::new(&net.param_tensor_shapes())
    }
}

/// One Adam update over a network's parameter tensors. Weight decay is
/// decoupled (`p *= 1 - lr*wd` before the delta) unless `coupled` is
/// set, in which case `wd * p` joins the gradient. `Ascend` negates the
/// gradient, so its delta is exactly minus the descend delta.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
    coupled: bool,
    betas: (f64, f64),
    eps: f64,
    direction: Direction,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::contract("adam_step", "tensor count mismatch"));
    }
    for g in grads {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if p.len() != g.len() {
            return Err(Error::contract("adam_step", "tensor shape mismatch"));
        }
        for i in 0..p.len() {
            let mut gi = match direction {
                Direction::Descend => g[i],
                Direction::Ascend => -g[i],
            };
            if coupled && weight_decay > 0.0 {
                gi += weight_decay * p[i];
            }
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            if !coupled && weight_decay > 0.0 {
                p[i] *= 1.0 - lr * weight_decay;
            }
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Reference rows for one training run; drawn once, before the epoch
/// loop, and paired to samples by index thereafter.
pub fn sample_reference(
    n: usize,
    d0: usize,
    reference: &Reference,
    rng: &mut ChaCha12Rng,
) -> Array2<f64> {
    match reference {
        Reference::Uniform01 => Array2::from_shape_fn((n, d0), |_| rng.random::<f64>()),
        Reference::SinGaussian => Array2::from_shape_fn((n, d0), |_| normal(rng).sin()),
        Reference::Custom(f) => f(n, d0, rng),
    }
}

/// Shuffled index batches for one epoch; a trailing batch with fewer
/// than 2 rows is dropped.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha12Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out = Vec::new();
    for chunk in idx.chunks(batch_size) {
        if chunk.len() >= 2 {
            out.push(chunk.to_vec());
        }
    }
    out
}

// ---- training -------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mi_term: f64,
    pub push_term: f64,
    pub total: f64,
    pub val_metric: f64,
    pub saturations: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub r: Mlp,
    pub d: Mlp,
    pub q: Mlp,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub restart_index: usize,
    /// Best validation metric of every restart; `None` marks a diverged
    /// restart.
    pub restart_metrics: Vec<Option<f64>>,
}

impl TrainedModel {
    pub fn best_metric(&self) -> Option<f64> {
        self.restart_metrics[self.restart_index]
    }
}

struct RestartOutcome {
    r: Mlp,
    d: Mlp,
    q: Mlp,
    history: Vec<EpochRecord>,
    best_epoch: usize,
    best_metric: f64,
}

fn es_value(metric: EsMetric, y: &Array2<f64>, r: &Array2<f64>, seed: u64) -> Result<f64> {
    match metric {
        EsMetric::DistanceCorrelation => distance_correlation_capped(y, r, DCOR_ROW_CAP, seed),
        EsMetric::DistanceCovariance => {
            if y.nrows() > DCOR_ROW_CAP {
                // Same capped subsampling as the correlation path.
                return distance_correlation_capped(y, r, DCOR_ROW_CAP, seed);
            }
            distance_covariance(y, r)
        }
    }
}

fn run_restart(
    train: &Dataset,
    val: &Dataset,
    cfg: &MsrlConfig,
    restart: usize,
) -> Result<RestartOutcome> {
    let d_x = train.d_x();
    let y_train = train.y_matrix()?;
    let d_y = y_train.ncols();
    let y_val = val.y_matrix()?;
    let n = train.n();

    let r_spec = MlpSpec::new(d_x, &cfg.r_hidden, cfg.d0)
        .with_activation(cfg.activation)
        .with_output_transform(cfg.r_output_transform);
    let d_spec = MlpSpec::new(d_y + cfg.d0, &cfg.dq_hidden, 1).with_activation(cfg.activation);
    let q_spec = MlpSpec::new(cfg.d0, &cfg.dq_hidden, 1).with_activation(cfg.activation);

    let seed_r = derive_seed(cfg.seed, restart as u64, Stream::InitR);
    let seed_d = derive_seed(cfg.seed, restart as u64, Stream::InitD);
    let seed_q = derive_seed(cfg.seed, restart as u64, Stream::InitQ);
    let mut r_net = Mlp::init(r_spec, seed_r)?;
    let mut d_net = Mlp::init(d_spec, seed_d)?;
    let mut q_net = Mlp::init(q_spec, seed_q)?;

    let mut rng_u = rng_for_indexed(cfg.seed, restart as u64, Stream::Reference);
    let u_all = sample_reference(n, cfg.d0, &cfg.reference, &mut rng_u);
    let mut rng_shuffle = rng_for_indexed(cfg.seed, restart as u64, Stream::Shuffle);
    let mut rng_perm = rng_for_indexed(cfg.seed, restart as u64, Stream::Permutation);

    let mut adam_r = AdamState::for_mlp(&r_net);
    let mut adam_d = AdamState::for_mlp(&d_net);
    let mut adam_q = AdamState::for_mlp(&q_net);

    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best: (f64, usize, Vec<f64>, Vec<f64>, Vec<f64>) = (
        f64::NEG_INFINITY,
        0,
        r_net.flat_params(),
        d_net.flat_params(),
        q_net.flat_params(),
    );

    for epoch in 0..cfg.max_epochs {
        let mut sum_mi = 0.0;
        let mut sum_push = 0.0;
        let mut sum_total = 0.0;
        let mut saturations = 0usize;
        let batches = epoch_batches(n, cfg.batch_size, &mut rng_shuffle);
        let n_batches = batches.len();
        for idx in batches {
            let m = idx.len();
            let x_b = train.x.select(Axis(0), &idx);
            let y_b = y_train.select(Axis(0), &idx);
            let u_b = u_all.select(Axis(0), &idx);
            let r_vals = r_net.forward_array(&x_b)?;
            let sigma = match cfg.loss_mode.resolve(m) {
                ResolvedMode::Exact => None,
                ResolvedMode::Permuted => Some(sample_derangement(m, &mut rng_perm)),
            };

            // Critic ascent on the MI term, representer frozen.
            {
                let mut g = Graph::new();
                let y_id = g.input(&y_b, false);
                let r_id = g.input(&r_vals, false);
                let d_vars = d_net.bind(&mut g, true);
                let loss = match &sigma {
                    None => mi_loss(&mut g, &d_vars, y_id, r_id)?,
                    Some(s) => mi_loss_permuted_with(&mut g, &d_vars, y_id, r_id, s)?,
                };
                g.backward(loss)?;
                apply_adam(&mut d_net, &d_vars, &g, &mut adam_d, cfg, Direction::Ascend)?;
            }

            // Push critic ascent, representer frozen.
            {
                let mut g = Graph::new();
                let r_id = g.input(&r_vals, false);
                let u_id = g.input(&u_b, false);
                let q_vars = q_net.bind(&mut g, true);
                let loss = push_loss(&mut g, &q_vars, r_id, u_id)?;
                g.backward(loss)?;
                apply_adam(&mut q_net, &q_vars, &g, &mut adam_q, cfg, Direction::Ascend)?;
            }

            // Representer descent on the full objective, critics frozen.
            {
                let mut g = Graph::new();
                let x_id = g.input(&x_b, false);
                let y_id = g.input(&y_b, false);
                let u_id = g.input(&u_b, false);
                let r_vars = r_net.bind(&mut g, true);
                let d_vars = d_net.bind(&mut g, false);
                let q_vars = q_net.bind(&mut g, false);
                let r_out = r_vars.forward(&mut g, x_id)?;
                let mi = match &sigma {
                    None => mi_loss(&mut g, &d_vars, y_id, r_out)?,
                    Some(s) => mi_loss_permuted_with(&mut g, &d_vars, y_id, r_out, s)?,
                };
                let push = push_loss(&mut g, &q_vars, r_out, u_id)?;
                let scaled = g.scale(push, cfg.lambda);
                let total = g.sub(scaled, mi)?;
                let total_v = g.scalar_value(total);
                if !total_v.is_finite() {
                    return Err(Error::Divergence(format!(
                        "restart {restart}: non-finite loss at epoch {epoch}"
                    )));
                }
                g.backward(total)?;
                sum_mi += g.scalar_value(mi);
                sum_push += g.scalar_value(push);
                sum_total += total_v;
                saturations += g.exp_saturations();
                apply_adam(&mut r_net, &r_vars, &g, &mut adam_r, cfg, Direction::Descend)?;
            }
        }

        let r_val = r_net.forward_array(&val.x)?;
        let val_metric = es_value(cfg.es_metric, y_val, &r_val, cfg.seed)?;
        if !val_metric.is_finite() {
            return Err(Error::Divergence(format!(
                "restart {restart}: non-finite validation metric at epoch {epoch}"
            )));
        }
        let denom = n_batches.max(1) as f64;
        history.push(EpochRecord {
            epoch,
            mi_term: sum_mi / denom,
            push_term: sum_push / denom,
            total: sum_total / denom,
            val_metric,
            saturations,
        });
        if val_metric > best.0 {
            best = (
                val_metric,
                epoch,
                r_net.flat_params(),
                d_net.flat_params(),
                q_net.flat_params(),
            );
        } else if epoch - best.1 >= cfg.patience && cfg.patience > 0 {
            break;
        }
    }

    let (best_metric, best_epoch, r_flat, d_flat, q_flat) = best;
    r_net.set_flat_params(&r_flat)?;
    d_net.set_flat_params(&d_flat)?;
    q_net.set_flat_params(&q_flat)?;
    Ok(RestartOutcome {
        r: r_net,
        d: d_net,
        q: q_net,
        history,
        best_epoch,
        best_metric,
    })
}

fn apply_adam(
    net: &mut Mlp,
    vars: &MlpVars,
    g: &Graph,
    state: &mut AdamState,
    cfg: &MsrlConfig,
    direction: Direction,
) -> Result<()> {
    let ids = vars.param_ids();
    let grads: Vec<&[f64]> = ids
        .iter()
        .map(|&id| g.grad(id).expect("trainable parameter has grad"))
        .collect();
    let mut params = net.param_tensors_mut();
    adam_step(
        &mut params,
        &grads,
        state,
        cfg.lr,
        cfg.weight_decay,
        cfg.coupled_weight_decay,
        cfg.betas,
        cfg.adam_eps,
        direction,
    )
}

/// Full training: multi-restart alternating optimization with early
/// stopping on the validation metric. Returns the restart with the
/// largest best-epoch validation metric (ties to the lowest index).
pub fn train_msrl(train: &Dataset, val: &Dataset, cfg: &MsrlConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.n() == 0 {
        return Err(Error::contract("train_msrl", "empty training set"));
    }
    if val.n() < 2 {
        return Err(Error::contract("train_msrl", "validation set needs >= 2 rows"));
    }
    if train.n() < cfg.batch_size && train.n() < 2 {
        return Err(Error::contract("train_msrl", "training set needs >= 2 rows"));
    }

    let outcomes: Vec<Result<RestartOutcome>> =
        exec::par_map_indexed(cfg.restarts, |r| run_restart(train, val, cfg, r));

    let mut restart_metrics: Vec<Option<f64>> = Vec::with_capacity(cfg.restarts);
    let mut winner: Option<(usize, RestartOutcome)> = None;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(out) => {
                restart_metrics.push(Some(out.best_metric));
                let better = match &winner {
                    None => true,
                    Some((_, w)) => out.best_metric > w.best_metric,
                };
                if better {
                    winner = Some((i, out));
                }
            }
            Err(e) => {
                log::warn!("restart {i} diverged: {e}");
                restart_metrics.push(None);
            }
        }
    }
    let (restart_index, out) = winner.ok_or_else(|| {
        Error::Divergence("all restarts diverged".into())
    })?;
    Ok(TrainedModel {
        r: out.r,
        d: out.d,
        q: out.q,
        history: out.history,
        best_epoch: out.best_epoch,
        restart_index,
        restart_metrics,
    })
}

// ---- critic-only training ---------------------------------------------------

/// Configuration for fitting just the MI critic against fixed
/// representation values.
#[derive(Debug, Clone)]
pub struct CriticConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            hidden: vec![16, 8],
            activation: Activation::LeakyRelu(0.01),
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 512,
            epochs: 200,
            seed: 0,
            loss_mode: LossMode::Auto,
        }
    }
}

/// Ascend the MI term in the critic alone, with `(y, r)` rows fixed.
/// `warm_start` continues from an existing critic (architecture taken
/// from it); otherwise a fresh one is initialized from the config.
pub fn train_critic(
    y: &Array2<f64>,
    r: &Array2<f64>,
    warm_start: Option<Mlp>,
    cfg: &CriticConfig,
) -> Result<Mlp> {
    let n = y.nrows();
    if n < 2 || r.nrows() != n {
        return Err(Error::contract("train_critic", "need matching rows, n >= 2"));
    }
    let input_dim = y.ncols() + r.ncols();
    let mut d_net = match warm_start {
        Some(net) => {
            if net.spec.input_dim != input_dim {
                return Err(Error::contract("train_critic", "warm start dim mismatch"));
            }
            net
        }
        None => {
            let seed = derive_seed(cfg.seed, 0, Stream::InitD);
            Mlp::init(
                MlpSpec::new(input_dim, &cfg.hidden, 1).with_activation(cfg.activation),
                seed,
            )?
        }
    };
    let mut adam = AdamState::for_mlp(&d_net);
    let mut rng_shuffle = rng_for(cfg.seed, Stream::Shuffle);
    let mut rng_perm = rng_for(cfg.seed, Stream::Permutation);
    for epoch in 0..cfg.epochs {
        for idx in epoch_batches(n, cfg.batch_size, &mut rng_shuffle) {
            let m = idx.len();
            let y_b = y.select(Axis(0), &idx);
            let r_b = r.select(Axis(0), &idx);
            let mut g = Graph::new();
            let y_id = g.input(&y_b, false);
            let r_id = g.input(&r_b, false);
            let d_vars = d_net.bind(&mut g, true);
            let loss = match cfg.loss_mode.resolve(m) {
                ResolvedMode::Exact => mi_loss(&mut g, &d_vars, y_id, r_id)?,
                ResolvedMode::Permuted => {
                    let sigma = sample_derangement(m, &mut rng_perm);
                    mi_loss_permuted_with(&mut g, &d_vars, y_id, r_id, &sigma)?
                }
            };
            if !g.scalar_value(loss).is_finite() {
                return Err(Error::Divergence(format!(
                    "critic training: non-finite loss at epoch {epoch}"
                )));
            }
            g.backward(loss)?;
            let ids = d_vars.param_ids();
            let grads: Vec<&[f64]> = ids
                .iter()
                .map(|&id| g.grad(id).expect("trainable parameter has grad"))
                .collect();
            let mut params = d_net.param_tensors_mut();
            adam_step(
                &mut params,
                &grads,
                &mut adam,
                cfg.lr,
                cfg.weight_decay,
                false,
                (0.9, 0.999),
                1e-8,
                Direction::Ascend,
            )?;
        }
    }
    Ok(d_net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_model, Response, SimModel, Scenario};
    use crate::objective::{bind_batch, msrl_objective, Batch, BatchResponse};

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut p = vec![0.5, -1.0];
        let g = vec![0.0, 0.0];
        let mut state = AdamState::new(&[2]);
        adam_step(
            &mut [&mut p],
            &[&g],
            &mut state,
            0.1,
            0.0,
            false,
            (0.9, 0.999),
            1e-8,
            Direction::Descend,
        )
        .unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // g = 1, lr = 0.1: bias-corrected first step is lr / (1 + eps).
        let mut p = vec![0.0];
        let g = vec![1.0];
        let mut state = AdamState::new(&[1]);
        adam_step(
            &mut [&mut p],
            &[&g],
            &mut state,
            0.1,
            0.0,
            false,
            (0.9, 0.999),
            1e-8,
            Direction::Descend,
        )
        .unwrap();
        assert!((p[0] + 0.1).abs() < 1e-8, "p {}", p[0]);
    }

    #[test]
    fn adam_ascend_mirrors_descend() {
        // Start at zero so the parameter after one step IS the delta.
        let g = vec![0.3, -0.8, 1.2];
        let mut p_desc = vec![0.0; 3];
        let mut p_asc = vec![0.0; 3];
        let mut s1 = AdamState::new(&[3]);
        let mut s2 = AdamState::new(&[3]);
        adam_step(&mut [&mut p_desc], &[&g], &mut s1, 0.05, 0.0, false, (0.9, 0.999), 1e-8, Direction::Descend).unwrap();
        adam_step(&mut [&mut p_asc], &[&g], &mut s2, 0.05, 0.0, false, (0.9, 0.999), 1e-8, Direction::Ascend).unwrap();
        for i in 0..3 {
            assert_eq!(p_desc[i], -p_asc[i]);
        }
    }

    #[test]
    fn adam_rejects_nan_grad() {
        let mut p = vec![0.0];
        let g = vec![f64::NAN];
        let mut state = AdamState::new(&[1]);
        let res = adam_step(
            &mut [&mut p],
            &[&g],
            &mut state,
            0.1,
            0.0,
            false,
            (0.9, 0.999),
            1e-8,
            Direction::Descend,
        );
        assert!(matches!(res, Err(Error::Divergence(_))));
        assert_eq!(p, vec![0.0]);
    }

    #[test]
    fn adam_first_step_sign_agrees_with_gradient() {
        // From zero state, the first descend delta opposes the gradient
        // coordinate-wise.
        let g = vec![0.7, -0.2, 0.0001, -5.0];
        let mut p = vec![0.0; 4];
        let mut state = AdamState::new(&[4]);
        adam_step(&mut [&mut p], &[&g], &mut state, 0.01, 0.0, false, (0.9, 0.999), 1e-8, Direction::Descend).unwrap();
        for i in 0..4 {
            assert!(p[i] * g[i] <= 0.0, "coord {i}");
            if g[i] != 0.0 {
                assert!(p[i] != 0.0);
            }
        }
    }

    #[test]
    fn reference_sampling_properties() {
        let mut rng = rng_for(3, Stream::Reference);
        let u = sample_reference(4000, 3, &Reference::Uniform01, &mut rng);
        assert!(u.iter().all(|&v| (0.0..=1.0).contains(&v)));
        for j in 0..3 {
            let mean = u.column(j).sum() / 4000.0;
            let band = 3.0 / (12.0f64 * 4000.0).sqrt();
            assert!((mean - 0.5).abs() < band, "col {j} mean {mean}");
        }
        // Bit-exact reproducibility.
        let mut rng2 = rng_for(3, Stream::Reference);
        let u2 = sample_reference(4000, 3, &Reference::Uniform01, &mut rng2);
        assert_eq!(u, u2);
        // sin(Z) stays in [-1, 1].
        let mut rng3 = rng_for(4, Stream::Reference);
        let s = sample_reference(500, 2, &Reference::SinGaussian, &mut rng3);
        assert!(s.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn batch_partition_arithmetic() {
        let mut rng = rng_for(1, Stream::Shuffle);
        let batches = epoch_batches(10, 4, &mut rng);
        let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let mut union: Vec<usize> = batches.into_iter().flatten().collect();
        union.sort_unstable();
        assert_eq!(union, (0..10).collect::<Vec<_>>());

        // Short tail below 2 rows is dropped.
        let mut rng2 = rng_for(1, Stream::Shuffle);
        let batches2 = epoch_batches(9, 4, &mut rng2);
        let sizes2: Vec<usize> = batches2.iter().map(|b| b.len()).collect();
        assert_eq!(sizes2, vec![4, 4]);

        // Same stream state, same sequence.
        let mut a = rng_for(9, Stream::Shuffle);
        let mut b = rng_for(9, Stream::Shuffle);
        assert_eq!(epoch_batches(20, 6, &mut a), epoch_batches(20, 6, &mut b));
    }

    fn tiny_cfg(d0: usize) -> MsrlConfig {
        MsrlConfig {
            batch_size: 64,
            max_epochs: 12,
            patience: 12,
            restarts: 2,
            r_hidden: vec![8, 4],
            dq_hidden: vec![8],
            ..MsrlConfig::paper_sim(d0)
        }
    }

    fn tiny_data(seed: u64) -> (Dataset, Dataset) {
        let train = gen_model(SimModel::I, Scenario::II, 300, 4, seed).unwrap();
        let val = gen_model(SimModel::I, Scenario::II, 120, 4, seed + 1).unwrap();
        (train, val)
    }

    #[test]
    fn zero_epochs_returns_initialized_networks() {
        let (train, val) = tiny_data(5);
        let cfg = MsrlConfig {
            max_epochs: 0,
            patience: 0,
            restarts: 1,
            ..tiny_cfg(1)
        };
        let model = train_msrl(&train, &val, &cfg).unwrap();
        assert!(model.history.is_empty());
        assert_eq!(model.best_epoch, 0);
        let fresh = {
            let seed_r = rng_for_indexed(cfg.seed, 0, Stream::InitR).random::<u64>();
            Mlp::init(
                MlpSpec::new(4, &cfg.r_hidden, 1)
                    .with_activation(cfg.activation)
                    .with_output_transform(cfg.r_output_transform),
                seed_r,
            )
            .unwrap()
        };
        assert_eq!(model.r.flat_params(), fresh.flat_params());
    }

    #[test]
    fn training_is_deterministic() {
        let (train, val) = tiny_data(7);
        let cfg = tiny_cfg(1).with_seed(11);
        let a = train_msrl(&train, &val, &cfg).unwrap();
        let b = train_msrl(&train, &val, &cfg).unwrap();
        assert_eq!(a.history.len(), b.history.len());
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.total.to_bits(), rb.total.to_bits());
            assert_eq!(ra.val_metric.to_bits(), rb.val_metric.to_bits());
        }
        assert_eq!(a.restart_index, b.restart_index);
        assert_eq!(a.r.flat_params(), b.r.flat_params());
    }

    #[test]
    fn early_stopping_and_selection_invariants() {
        let (train, val) = tiny_data(9);
        let cfg = MsrlConfig {
            max_epochs: 30,
            patience: 5,
            restarts: 2,
            ..tiny_cfg(1)
        }
        .with_seed(3);
        let model = train_msrl(&train, &val, &cfg).unwrap();
        // Best epoch's metric is the maximum of the history.
        let best = model.history[model.best_epoch].val_metric;
        assert!(model
            .history
            .iter()
            .all(|rec| rec.val_metric <= best));
        // Early stop: no more than patience epochs after the best one.
        let last = model.history.last().unwrap().epoch;
        assert!(last <= model.best_epoch + cfg.patience);
        // Winning restart has the largest metric.
        let win = model.restart_metrics[model.restart_index].unwrap();
        for m in model.restart_metrics.iter().flatten() {
            assert!(*m <= win);
        }
        assert!((win - best).abs() < 1e-15);
    }

    #[test]
    fn r_step_descends_the_objective_at_step_one() {
        // With critics frozen and zero Adam state, the applied delta
        // opposes the gradient sign per coordinate.
        let (train, _) = tiny_data(13);
        let y = train.y_matrix().unwrap();
        let cfg = tiny_cfg(1);
        let r = Mlp::init(MlpSpec::new(4, &[6], 1), 21).unwrap();
        let d = Mlp::init(MlpSpec::new(2, &[6], 1), 22).unwrap();
        let q = Mlp::init(MlpSpec::new(1, &[6], 1), 23).unwrap();
        let idx: Vec<usize> = (0..32).collect();
        let batch = Batch {
            x: train.x.select(Axis(0), &idx),
            y: BatchResponse::Continuous(y.select(Axis(0), &idx)),
            u: Some(Array2::from_shape_fn((32, 1), |(i, _)| i as f64 / 32.0)),
        };
        let mut g = Graph::new();
        let bb = bind_batch(&mut g, &batch);
        let r_vars = r.bind(&mut g, true);
        let d_vars = d.bind(&mut g, false);
        let q_vars = q.bind(&mut g, false);
        let mut rng = rng_for(0, Stream::Permutation);
        let nodes = msrl_objective(
            &mut g,
            &r_vars,
            &d_vars,
            &q_vars,
            &bb,
            cfg.lambda,
            LossMode::Exact,
            &mut rng,
        )
        .unwrap();
        g.backward(nodes.total).unwrap();

        let before = r.flat_params();
        let mut r_mut = r.clone();
        let mut adam = AdamState::for_mlp(&r_mut);
        let ids = r_vars.param_ids();
        let grads: Vec<&[f64]> = ids.iter().map(|&id| g.grad(id).unwrap()).collect();
        let flat_grads: Vec<f64> = grads.iter().flat_map(|s| s.iter().copied()).collect();
        {
            let mut params = r_mut.param_tensors_mut();
            adam_step(
                &mut params,
                &grads,
                &mut adam,
                cfg.lr,
                0.0,
                false,
                cfg.betas,
                cfg.adam_eps,
                Direction::Descend,
            )
            .unwrap();
        }
        let after = r_mut.flat_params();
        for i in 0..before.len() {
            let delta = after[i] - before[i];
            assert!(delta * flat_grads[i] <= 0.0, "coord {i}");
        }
    }

    #[test]
    fn categorical_dataset_is_rejected_for_now() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i + j) as f64);
        let data = Dataset::new(x, Response::Labels(vec![0; 20])).unwrap();
        let cfg = tiny_cfg(1);
        assert!(train_msrl(&data, &data, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MsrlConfig { lambda: -1.0, ..MsrlConfig::paper_sim(1) }.validate().is_err());
        assert!(MsrlConfig { d0: 0, ..MsrlConfig::paper_sim(1) }.validate().is_err());
        assert!(MsrlConfig { batch_size: 1, ..MsrlConfig::paper_sim(1) }.validate().is_err());
        assert!(MsrlConfig { patience: 2000, ..MsrlConfig::paper_sim(1) }.validate().is_err());
        assert!(MsrlConfig::paper_sim(2).validate().is_ok());
    }

    #[test]
    fn critic_training_improves_mi_value() {
        // Correlated pair: the trained critic should push the MI value
        // well above the zero-critic baseline of -1.
        let mut rng = rng_for(17, Stream::DataGen);
        let n = 600;
        let mut y = Array2::zeros((n, 1));
        let mut r = Array2::zeros((n, 1));
        for i in 0..n {
            let z = normal(&mut rng);
            r[(i, 0)] = z;
            y[(i, 0)] = 0.9 * z + (1.0f64 - 0.81).sqrt() * normal(&mut rng);
        }
        let cfg = CriticConfig {
            hidden: vec![8],
            epochs: 60,
            batch_size: 128,
            ..CriticConfig::default()
        };
        let d = train_critic(&y, &r, None, &cfg).unwrap();
        let mi = crate::objective::mi_value(&d, &y, &r).unwrap() + 1.0;
        assert!(mi > 0.2, "mi {mi}");
    }
}
