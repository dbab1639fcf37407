//! Training configuration assembly: built-in defaults, then preset,
//! then config file, then explicit flags, later sources winning. The
//! config file is flat `key = value` text (one pair per line, `#`
//! comments) so experiment provenance diffs cleanly.

use std::collections::BTreeMap;
use std::path::Path;

use msrl::nn::OutputTransform;
use msrl::objective::LossMode;
use msrl::train::{EsMetric, MsrlConfig, Reference};

use crate::opts::TrainTuning;
use crate::AppError;

pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            AppError::usage(format!(
                "config {}:{}: expected key = value",
                path.display(),
                ln + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, AppError> {
    value
        .parse()
        .map_err(|_| AppError::usage(format!("config key '{key}': bad value '{value}'")))
}

fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>, AppError> {
    value
        .split(',')
        .map(|s| parse::<usize>(key, s.trim()))
        .collect()
}

fn parse_reference(value: &str) -> Result<Reference, AppError> {
    match value {
        "uniform01" => Ok(Reference::Uniform01),
        "sin-gaussian" => Ok(Reference::SinGaussian),
        other => Err(AppError::usage(format!("unknown reference '{other}'"))),
    }
}

fn parse_loss_mode(value: &str) -> Result<LossMode, AppError> {
    match value {
        "auto" => Ok(LossMode::Auto),
        "exact" => Ok(LossMode::Exact),
        "permuted" => Ok(LossMode::Permuted),
        other => Err(AppError::usage(format!("unknown loss mode '{other}'"))),
    }
}

fn parse_es_metric(value: &str) -> Result<EsMetric, AppError> {
    match value {
        "dc" => Ok(EsMetric::DistanceCorrelation),
        "dcov" => Ok(EsMetric::DistanceCovariance),
        other => Err(AppError::usage(format!("unknown es metric '{other}'"))),
    }
}

pub fn preset_config(name: &str, d0: usize) -> Result<MsrlConfig, AppError> {
    match name {
        "paper" => Ok(MsrlConfig::paper_sim(d0)),
        "desk" => Ok(MsrlConfig::desk(d0)),
        other => Err(AppError::usage(format!("unknown preset '{other}'"))),
    }
}

/// Resolve the effective training configuration.
pub fn resolve_train_config(
    tuning: &TrainTuning,
    d0: usize,
    seed: u64,
) -> Result<MsrlConfig, AppError> {
    let mut cfg = match &tuning.preset {
        Some(name) => preset_config(name, d0)?,
        None => MsrlConfig::desk(d0),
    };
    cfg.seed = seed;

    if let Some(path) = &tuning.config {
        let map = parse_config_file(path)?;
        for (key, value) in &map {
            match key.as_str() {
                "lambda" => cfg.lambda = parse(key, value)?,
                "d0" => cfg.d0 = parse(key, value)?,
                "batch_size" => cfg.batch_size = parse(key, value)?,
                "lr" => cfg.lr = parse(key, value)?,
                "weight_decay" => cfg.weight_decay = parse(key, value)?,
                "coupled_weight_decay" => cfg.coupled_weight_decay = parse(key, value)?,
                "max_epochs" => cfg.max_epochs = parse(key, value)?,
                "patience" => cfg.patience = parse(key, value)?,
                "restarts" => cfg.restarts = parse(key, value)?,
                "seed" => cfg.seed = parse(key, value)?,
                "reference" => cfg.reference = parse_reference(value)?,
                "loss_mode" => cfg.loss_mode = parse_loss_mode(value)?,
                "es_metric" => cfg.es_metric = parse_es_metric(value)?,
                "r_hidden" => cfg.r_hidden = parse_widths(key, value)?,
                "dq_hidden" => cfg.dq_hidden = parse_widths(key, value)?,
                "truncate_output" => {
                    let on: bool = parse(key, value)?;
                    cfg.r_output_transform = if on {
                        OutputTransform::Truncate01
                    } else {
                        OutputTransform::Identity
                    };
                }
                other => {
                    return Err(AppError::usage(format!("unknown config key '{other}'")));
                }
            }
        }
    }

    if let Some(v) = tuning.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = tuning.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = tuning.lr {
        cfg.lr = v;
    }
    if let Some(v) = tuning.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = tuning.max_epochs {
        cfg.max_epochs = v;
        cfg.patience = cfg.patience.min(v);
    }
    if let Some(v) = tuning.patience {
        cfg.patience = v;
    }
    if let Some(v) = tuning.restarts {
        cfg.restarts = v;
    }
    if let Some(v) = &tuning.reference {
        cfg.reference = parse_reference(v)?;
    }
    if let Some(v) = &tuning.loss_mode {
        cfg.loss_mode = parse_loss_mode(v)?;
    }
    if let Some(v) = &tuning.es_metric {
        cfg.es_metric = parse_es_metric(v)?;
    }
    if let Some(v) = &tuning.r_hidden {
        cfg.r_hidden = parse_widths("r_hidden", v)?;
    }
    if let Some(v) = &tuning.dq_hidden {
        cfg.dq_hidden = parse_widths("dq_hidden", v)?;
    }
    if tuning.truncate_output {
        cfg.r_output_transform = OutputTransform::Truncate01;
    }
    if tuning.coupled_weight_decay {
        cfg.coupled_weight_decay = true;
    }
    cfg.validate().map_err(|e| AppError::usage(e.to_string()))?;
    Ok(cfg)
}
