//! Dimension-selection proportion table: repeat the dichotomy selection
//! on freshly generated heteroscedastic-toy datasets over many seeds and
//! report how often each dimension is chosen.

use std::path::Path;

use msrl::data::gen_dim_toy;
use msrl::dimsel::{select_dimension, DimSelectConfig};
use msrl::train::MsrlConfig;

use crate::report::{write_table, ReportOpts};
use crate::AppError;

#[derive(Debug, Clone)]
pub struct Table3Summary {
    pub selections: Vec<usize>,
    /// proportions[d - 1] = fraction of seeds selecting dimension d.
    pub proportions: Vec<f64>,
}

impl Table3Summary {
    pub fn modal(&self) -> usize {
        let mut best = (0usize, 0.0f64);
        for (i, &p) in self.proportions.iter().enumerate() {
            if p > best.1 {
                best = (i + 1, p);
            }
        }
        best.0
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_table3(
    seeds: usize,
    n: usize,
    eta: f64,
    folds: usize,
    base_seed: u64,
    cfg_template: &MsrlConfig,
    out_dir: Option<&Path>,
    report_opts: ReportOpts,
) -> Result<Table3Summary, AppError> {
    if seeds == 0 {
        return Err(AppError::usage("--seeds must be >= 1"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(AppError::usage("--eta must lie in (0, 1)"));
    }
    let mut selections = Vec::with_capacity(seeds);
    for s in 0..seeds {
        let seed = base_seed + s as u64;
        let data = gen_dim_toy(n, seed)?;
        let mut cfg = DimSelectConfig::reduced(10, cfg_template.clone().with_seed(seed));
        cfg.eta = eta;
        cfg.n_folds = folds;
        let (selected, trace) = select_dimension(&data, &cfg)?;
        log::info!(
            "table3 seed {seed}: selected {selected}{}",
            if trace.unreliable { " (unreliable)" } else { "" }
        );
        selections.push(selected);
    }
    let proportions: Vec<f64> = (1..=10)
        .map(|d| selections.iter().filter(|&&s| s == d).count() as f64 / seeds as f64)
        .collect();
    if let Some(dir) = out_dir {
        let rows: Vec<String> = (1..=10)
            .map(|d| format!("{d},{}", proportions[d - 1]))
            .collect();
        write_table(&dir.join("table3.csv"), "d,proportion", &rows, report_opts)?;
    }
    Ok(Table3Summary {
        selections,
        proportions,
    })
}
