//! Dichotomy-based cross-validated selection of the intrinsic dimension.
//!
//! For a candidate dimension `k`, [`cv_mi_estimate`] trains the full
//! model per fold on the fold complement (output dimension `k`), refits
//! the MI critic against the frozen representer, evaluates the plug-in
//! MI estimate on the held-out fold, and averages across folds.
//!
//! [`select_dimension`] then binary-searches: starting from
//! `UD = d_upper`, `LD = 1` with `MI_hat` the estimate at `d_upper`, it
//! probes `u = (UD + LD) / 2` and accepts (`UD = u`) when the relative
//! drop `|I(u) - MI_hat| / MI_hat` stays within the tolerance `eta`,
//! otherwise raises `LD = u + 1`, until `UD == LD`. Only about
//! `log2(d_upper)` candidate dimensions are ever trained; probe results
//! are memoized so a repeated candidate never retrains.

use std::collections::BTreeMap;

use crate::data::{kfold_indices, Dataset};
use crate::error::{Error, Result};
use crate::exec;
use crate::objective::mi_estimate;
use crate::train::{train_critic, train_msrl, CriticConfig, MsrlConfig};
use crate::util::{derive_seed, fsum, Stream};

#[derive(Debug, Clone)]
pub struct DimSelectConfig {
    /// Upper bound for the search (defaults to d_X at the call site).
    pub d_upper: usize,
    /// Relative-drop tolerance, in (0, 1).
    pub eta: f64,
    /// Number of CV folds.
    pub n_folds: usize,
    /// Training template; `d0` and `seed` are overridden per probe/fold.
    pub train_cfg: MsrlConfig,
    /// Critic-only refit epochs against the frozen representer before
    /// the held-out evaluation.
    pub critic_refit_epochs: usize,
    /// Fraction of each fold complement held out for early stopping.
    pub val_fraction: f64,
}

impl DimSelectConfig {
    /// Reduced preset used for probes: 3 restarts, 500 epochs cap.
    pub fn reduced(d_upper: usize, d0_template: MsrlConfig) -> Self {
        DimSelectConfig {
            d_upper,
            eta: 0.2,
            n_folds: 5,
            train_cfg: MsrlConfig {
                restarts: 3,
                max_epochs: 500,
                patience: d0_template.patience.min(500),
                ..d0_template
            },
            critic_refit_epochs: 100,
            val_fraction: 0.2,
        }
    }

    pub fn validate(&self, d_x: usize) -> Result<()> {
        if self.d_upper == 0 || self.d_upper > d_x {
            return Err(Error::Config(format!(
                "d_upper must be in [1, {d_x}], got {}",
                self.d_upper
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config("eta must lie in (0, 1)".into()));
        }
        if self.n_folds < 2 {
            return Err(Error::Config("need at least 2 folds".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One probed dimension: per-fold plug-in estimates and their mean.
#[derive(Debug, Clone)]
pub struct ProbeRecord {
    pub k: usize,
    pub fold_estimates: Vec<f64>,
    pub mean: f64,
}

/// One dichotomy step.
#[derive(Debug, Clone, Copy)]
pub struct Decision {
    pub u: usize,
    pub accepted: bool,
    pub ud: usize,
    pub ld: usize,
}

#[derive(Debug, Clone)]
pub struct DimSelectTrace {
    pub probes: Vec<ProbeRecord>,
    pub decisions: Vec<Decision>,
    pub selected: usize,
    /// Set when the estimate at `d_upper` was nonpositive and the
    /// selection fell back to `d_upper`.
    pub unreliable: bool,
}

impl DimSelectTrace {
    /// One probe per line: `k`, per-fold estimates, mean; then the
    /// decision lines and the selection.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.probes {
            let folds = p
                .fold_estimates
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&format!("probe k={} folds=[{}] mean={:.6}\n", p.k, folds, p.mean));
        }
        for d in &self.decisions {
            out.push_str(&format!(
                "decide u={} accepted={} ud={} ld={}\n",
                d.u, d.accepted, d.ud, d.ld
            ));
        }
        out.push_str(&format!(
            "selected={}{}\n",
            self.selected,
            if self.unreliable { " (unreliable)" } else { "" }
        ));
        out
    }
}

/// Cross-validated plug-in MI estimate for output dimension `k`.
pub fn cv_mi_estimate(data: &Dataset, k: usize, cfg: &DimSelectConfig) -> Result<ProbeRecord> {
    cfg.validate(data.d_x())?;
    if k == 0 || k > data.d_x() {
        return Err(Error::contract("cv_mi_estimate", format!("bad k = {k}")));
    }
    let folds = kfold_indices(data.n(), cfg.n_folds, cfg.train_cfg.seed)?;
    if folds.iter().any(|f| f.len() < 2) {
        return Err(Error::contract("cv_mi_estimate", "fold smaller than 2 rows"));
    }
    let all: Vec<usize> = (0..data.n()).collect();
    let jobs: Vec<(usize, Vec<usize>)> = folds.into_iter().enumerate().collect();
    let estimates: Vec<Result<f64>> = exec::par_map(jobs, |(t, fold)| {
        let in_fold: std::collections::HashSet<usize> = fold.iter().copied().collect();
        let complement: Vec<usize> = all.iter().copied().filter(|i| !in_fold.contains(i)).collect();
        let comp_data = data.select(&complement);
        // Inner split of the complement for early stopping.
        let n_comp = comp_data.n();
        let n_val = ((n_comp as f64) * cfg.val_fraction).round() as usize;
        let n_val = n_val.clamp(2, n_comp.saturating_sub(2));
        let inner_train: Vec<usize> = (0..n_comp - n_val).collect();
        let inner_val: Vec<usize> = (n_comp - n_val..n_comp).collect();
        let train_set = comp_data.select(&inner_train);
        let val_set = comp_data.select(&inner_val);

        let probe_seed = derive_seed(cfg.train_cfg.seed, (k * 64 + t) as u64, Stream::Other(40));
        let mut train_cfg = cfg.train_cfg.clone();
        train_cfg.d0 = k;
        train_cfg.seed = probe_seed;
        let model = train_msrl(&train_set, &val_set, &train_cfg)?;

        // Refit the critic on the whole complement with the frozen
        // representer before evaluating on the held-out fold.
        let r_comp = model.r.forward_array(&comp_data.x)?;
        let critic_cfg = CriticConfig {
            hidden: train_cfg.dq_hidden.clone(),
            activation: train_cfg.activation,
            lr: train_cfg.lr,
            weight_decay: train_cfg.weight_decay,
            batch_size: train_cfg.batch_size,
            epochs: cfg.critic_refit_epochs,
            seed: probe_seed ^ 0xD1CE,
            loss_mode: train_cfg.loss_mode,
        };
        let d_refit = train_critic(
            comp_data.y_matrix()?,
            &r_comp,
            Some(model.d.clone()),
            &critic_cfg,
        )?;

        let fold_data = data.select(&fold);
        mi_estimate(&d_refit, &model.r, &fold_data.x, fold_data.y_matrix()?)
    });
    let mut fold_estimates = Vec::with_capacity(cfg.n_folds);
    for e in estimates {
        fold_estimates.push(e?);
    }
    let mean = fsum(fold_estimates.iter().copied()) / fold_estimates.len() as f64;
    Ok(ProbeRecord {
        k,
        fold_estimates,
        mean,
    })
}

/// Dichotomy loop over a memoizing probe function; the testable core of
/// [`select_dimension`].
pub fn select_dimension_with<F>(
    mut probe: F,
    d_upper: usize,
    eta: f64,
) -> Result<(usize, DimSelectTrace)>
where
    F: FnMut(usize) -> Result<ProbeRecord>,
{
    let mut cache: BTreeMap<usize, ProbeRecord> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::new();
    let mut probe_cached = |k: usize,
                            cache: &mut BTreeMap<usize, ProbeRecord>,
                            order: &mut Vec<usize>|
     -> Result<ProbeRecord> {
        if let Some(rec) = cache.get(&k) {
            return Ok(rec.clone());
        }
        let rec = probe(k)?;
        cache.insert(k, rec.clone());
        order.push(k);
        Ok(rec)
    };

    let mut ud = d_upper;
    let mut ld = 1usize;
    let mut decisions = Vec::new();
    let top = probe_cached(ud, &mut cache, &mut order)?;
    let mut mi_hat = top.mean;
    let mut unreliable = false;
    if mi_hat <= 0.0 {
        // The ratio test is undefined at a nonpositive baseline; fall
        // back to the upper bound and flag it.
        log::warn!(
            "dimension selection unreliable: estimate at d_upper = {d_upper} is {mi_hat:.4} <= 0"
        );
        unreliable = true;
        ud = d_upper;
        ld = d_upper;
    }
    while ud > ld {
        let u = (ud + ld) / 2;
        let rec = probe_cached(u, &mut cache, &mut order)?;
        let accepted = (rec.mean - mi_hat).abs() / mi_hat <= eta;
        if accepted {
            ud = u;
            mi_hat = rec.mean;
        } else {
            ld = u + 1;
        }
        decisions.push(Decision {
            u,
            accepted,
            ud,
            ld,
        });
    }
    let probes: Vec<ProbeRecord> = order.into_iter().map(|k| cache[&k].clone()).collect();
    let trace = DimSelectTrace {
        probes,
        decisions,
        selected: ud,
        unreliable,
    };
    Ok((ud, trace))
}

/// Select the intrinsic dimension by dichotomy cross-validation.
pub fn select_dimension(data: &Dataset, cfg: &DimSelectConfig) -> Result<(usize, DimSelectTrace)> {
    cfg.validate(data.d_x())?;
    select_dimension_with(|k| cv_mi_estimate(data, k, cfg), cfg.d_upper, cfg.eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stub_probe(values: &'static [f64]) -> impl FnMut(usize) -> Result<ProbeRecord> {
        move |k: usize| {
            let mean = values[k - 1];
            Ok(ProbeRecord {
                k,
                fold_estimates: vec![mean],
                mean,
            })
        }
    }

    #[test]
    fn degenerate_upper_bound() {
        let (sel, trace) = select_dimension_with(stub_probe(&[0.7]), 1, 0.2).unwrap();
        assert_eq!(sel, 1);
        assert_eq!(trace.probes.len(), 1);
        assert!(trace.decisions.is_empty());
        assert!(!trace.unreliable);
    }

    #[test]
    fn plateau_at_two_selects_two() {
        // I(k) = 0.5 * min(k, 2): flat from k = 2 upward.
        static VALS: [f64; 10] = [0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let (sel, trace) = select_dimension_with(stub_probe(&VALS), 10, 0.2).unwrap();
        assert_eq!(sel, 2);
        // ceil(log2(10)) + 1 = 5 probes at most.
        assert!(trace.probes.len() <= 5, "probes {}", trace.probes.len());
        // The rejected probe (k = 1) is not the selection.
        for d in &trace.decisions {
            if !d.accepted {
                assert_ne!(trace.selected, d.u);
            }
        }
    }

    #[test]
    fn interval_always_shrinks_to_termination() {
        // Adversarial alternating estimates still terminate.
        static VALS: [f64; 16] = [
            0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6, 0.5, 0.5, 0.9, 0.1, 0.8, 0.2, 0.7, 1.0,
        ];
        for eta_q in 1..9 {
            let eta = eta_q as f64 / 10.0;
            let (sel, trace) = select_dimension_with(stub_probe(&VALS), 16, eta).unwrap();
            assert!((1..=16).contains(&sel));
            assert!(trace.probes.len() <= 5, "log2(16) + 1 bound");
            // Interval shrinks monotonically.
            let mut width = 16 - 1;
            for d in &trace.decisions {
                let w = d.ud - d.ld;
                assert!(w < width || width == 0);
                width = w;
            }
        }
    }

    #[test]
    fn nonpositive_baseline_flags_unreliable() {
        static VALS: [f64; 8] = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.05];
        let (sel, trace) = select_dimension_with(stub_probe(&VALS), 8, 0.2).unwrap();
        assert_eq!(sel, 8);
        assert!(trace.unreliable);
        assert_eq!(trace.probes.len(), 1);
    }

    #[test]
    fn memoization_never_reprobes() {
        use std::cell::RefCell;
        let count = RefCell::new(0usize);
        static VALS: [f64; 6] = [0.2, 1.0, 1.0, 1.0, 1.0, 1.0];
        let probe = |k: usize| {
            *count.borrow_mut() += 1;
            Ok(ProbeRecord {
                k,
                fold_estimates: vec![VALS[k - 1]],
                mean: VALS[k - 1],
            })
        };
        let (sel, trace) = select_dimension_with(probe, 6, 0.2).unwrap();
        assert_eq!(sel, 2);
        assert_eq!(*count.borrow(), trace.probes.len());
    }

    #[test]
    fn trace_replays_selection() {
        static VALS: [f64; 10] = [0.1, 0.4, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let (sel, trace) = select_dimension_with(stub_probe(&VALS), 10, 0.2).unwrap();
        // Replay: re-run the dichotomy against the recorded probe means.
        let by_k: BTreeMap<usize, f64> = trace.probes.iter().map(|p| (p.k, p.mean)).collect();
        let mut ud = 10;
        let mut ld = 1;
        let mut mi_hat = by_k[&10];
        while ud > ld {
            let u = (ud + ld) / 2;
            if (by_k[&u] - mi_hat).abs() / mi_hat <= 0.2 {
                ud = u;
                mi_hat = by_k[&u];
            } else {
                ld = u + 1;
            }
        }
        assert_eq!(ud, sel);
        let rendered = trace.render();
        assert!(rendered.contains(&format!("selected={sel}")));
        assert!(rendered.lines().filter(|l| l.starts_with("probe")).count() <= 5);
    }

    #[test]
    fn config_validation() {
        let base = MsrlConfig::desk(1);
        let cfg = DimSelectConfig::reduced(10, base.clone());
        assert!(cfg.validate(10).is_ok());
        assert!(cfg.validate(5).is_err());
        let bad_eta = DimSelectConfig {
            eta: 1.5,
            ..DimSelectConfig::reduced(4, base.clone())
        };
        assert!(bad_eta.validate(10).is_err());
        let bad_folds = DimSelectConfig {
            n_folds: 1,
            ..DimSelectConfig::reduced(4, base)
        };
        assert!(bad_folds.validate(10).is_err());
    }
}
