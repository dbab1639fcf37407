//! Simulation comparison harness: for each (model, scenario) cell, run
//! the adversarial estimator plus the SIR and SAVE baselines over
//! held-out evaluation folds and tabulate distance correlation and
//! prediction error.
//!
//! Fold protocol: 6000 generated rows are cut into six 1000-row blocks
//! by a seeded permutation; fold `f` uses block `f` as the test set and
//! splits the remaining 5000 rows 4000/1000 into train/validation. A
//! quick run evaluates only the first `folds` blocks; the full protocol
//! uses all six.

use std::path::Path;

use msrl::baselines::{save, select_slices, sir, SdrResult};
use msrl::data::{gen_model, kfold_indices, Dataset, SimModel, Scenario};
use msrl::exec;
use msrl::metrics::{ape_linear, distance_correlation, distance_correlation_capped, DCOR_ROW_CAP};
use msrl::train::{train_msrl, MsrlConfig};
use msrl::util::{derive_seed, Stream};
use ndarray::Array2;

use crate::commands::ks_clamped01;
use crate::report::{mean_se, write_table, ReportOpts};
use crate::{svg, AppError};

pub const SLICE_CANDIDATES: [usize; 6] = [5, 10, 15, 20, 25, 30];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSpec {
    pub model: SimModel,
    pub scenario: Scenario,
}

pub fn parse_cells(specs: &[String]) -> Result<Vec<CellSpec>, AppError> {
    let mut cells = Vec::new();
    for s in specs {
        let (m, sc) = s
            .split_once(':')
            .ok_or_else(|| AppError::usage(format!("cell '{s}' must look like I:i")))?;
        cells.push(CellSpec {
            model: m.parse()?,
            scenario: sc.parse()?,
        });
    }
    if cells.is_empty() {
        return Err(AppError::usage("no cells given"));
    }
    Ok(cells)
}

#[derive(Debug, Clone)]
pub struct FoldMetrics {
    pub dc: f64,
    pub ape: f64,
}

#[derive(Debug, Clone)]
pub struct MsrlFoldMetrics {
    pub dc: f64,
    pub ape: f64,
    /// Per-coordinate KS statistics of the representation on the test
    /// block (uniformity conformance).
    pub ks: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CellFoldOutcome {
    pub cell: CellSpec,
    pub fold: usize,
    pub msrl: MsrlFoldMetrics,
    pub sir: FoldMetrics,
    pub save: FoldMetrics,
}

fn cell_seed(base: u64, cell: CellSpec) -> u64 {
    let idx = (cell.model as u64) * 4 + cell.scenario as u64;
    derive_seed(base, idx, Stream::Other(50))
}

struct FoldData {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn fold_split(data: &Dataset, fold: usize, seed: u64) -> Result<FoldData, AppError> {
    let blocks = kfold_indices(data.n(), 6, seed)?;
    let test_idx = &blocks[fold];
    let mut rest: Vec<usize> = Vec::with_capacity(data.n() - test_idx.len());
    for (b, block) in blocks.iter().enumerate() {
        if b != fold {
            rest.extend_from_slice(block);
        }
    }
    // The remaining 5000 rows already sit in permuted order; take the
    // leading 4000 as training, the rest as validation.
    let n_train = (rest.len() * 4) / 5;
    Ok(FoldData {
        train: data.select(&rest[..n_train]),
        val: data.select(&rest[n_train..]),
        test: data.select(test_idx),
    })
}

fn baseline_metrics(
    fit: &SdrResult,
    fold: &FoldData,
) -> Result<FoldMetrics, AppError> {
    let proj_train = fit.project(&fold.train.x);
    let proj_test = fit.project(&fold.test.x);
    let y_test = fold.test.y_matrix()?;
    let dc = distance_correlation(&proj_test, y_test)?;
    let ape = ape_linear(&proj_train, fold.train.y_matrix()?, &proj_test, y_test)?;
    Ok(FoldMetrics { dc, ape })
}

type SdrFit = fn(&Array2<f64>, &[f64], usize, usize) -> msrl::Result<SdrResult>;

fn run_baseline(method: SdrFit, fold: &FoldData, d: usize) -> Result<FoldMetrics, AppError> {
    let y_train: Vec<f64> = fold.train.y_matrix()?.column(0).to_vec();
    let sn = select_slices(
        method,
        &fold.train.x,
        &y_train,
        d,
        &SLICE_CANDIDATES,
        &fold.val.x,
        fold.val.y_matrix()?,
    )?;
    let fit = method(&fold.train.x, &y_train, d, sn)?;
    baseline_metrics(&fit, fold)
}

/// One (cell, fold) execution: train the estimator, fit both baselines,
/// evaluate everything on the held-out block.
pub fn run_cell_fold(
    cell: CellSpec,
    p: usize,
    base_seed: u64,
    fold: usize,
    cfg_template: &MsrlConfig,
) -> Result<CellFoldOutcome, AppError> {
    let seed = cell_seed(base_seed, cell);
    let data = gen_model(cell.model, cell.scenario, 6000, p, seed)?;
    let fold_data = fold_split(&data, fold, seed)?;
    let d0 = cell.model.default_d0();

    let mut cfg = cfg_template.clone();
    cfg.d0 = d0;
    cfg.seed = seed.wrapping_add(fold as u64);
    // Model III trains with the lower rate in the experiment presets.
    if cell.model == SimModel::III {
        cfg.lr = 3e-4;
    }
    let model = train_msrl(&fold_data.train, &fold_data.val, &cfg)?;
    let r_train = model.r.forward_array(&fold_data.train.x)?;
    let r_test = model.r.forward_array(&fold_data.test.x)?;
    let y_test = fold_data.test.y_matrix()?;
    let msrl_dc = distance_correlation_capped(y_test, &r_test, DCOR_ROW_CAP, seed)?;
    let msrl_ape = ape_linear(&r_train, fold_data.train.y_matrix()?, &r_test, y_test)?;
    let mut ks = Vec::with_capacity(r_test.ncols());
    for j in 0..r_test.ncols() {
        ks.push(ks_clamped01(r_test.column(j).iter().copied())?);
    }

    let sir_metrics = run_baseline(sir, &fold_data, d0)?;
    let save_metrics = run_baseline(save, &fold_data, d0)?;

    Ok(CellFoldOutcome {
        cell,
        fold,
        msrl: MsrlFoldMetrics {
            dc: msrl_dc,
            ape: msrl_ape,
            ks,
        },
        sir: sir_metrics,
        save: save_metrics,
    })
}

/// Aggregated row of the output table.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub cell: CellSpec,
    pub method: &'static str,
    pub dc_mean: f64,
    pub dc_se: f64,
    pub ape_mean: f64,
    pub ape_se: f64,
}

pub fn aggregate(outcomes: &[CellFoldOutcome]) -> Vec<TableRow> {
    let mut cells: Vec<CellSpec> = Vec::new();
    for o in outcomes {
        if !cells.contains(&o.cell) {
            cells.push(o.cell);
        }
    }
    let mut rows = Vec::new();
    for cell in cells {
        let of_cell: Vec<&CellFoldOutcome> =
            outcomes.iter().filter(|o| o.cell == cell).collect();
        let collect = |get_dc: fn(&CellFoldOutcome) -> f64,
                       get_ape: fn(&CellFoldOutcome) -> f64|
         -> (f64, f64, f64, f64) {
            let dcs: Vec<f64> = of_cell.iter().map(|o| get_dc(o)).collect();
            let apes: Vec<f64> = of_cell.iter().map(|o| get_ape(o)).collect();
            let (dm, dse) = mean_se(&dcs);
            let (am, ase) = mean_se(&apes);
            (dm, dse, am, ase)
        };
        for (method, stats) in [
            ("MSRL", collect(|o| o.msrl.dc, |o| o.msrl.ape)),
            ("SIR", collect(|o| o.sir.dc, |o| o.sir.ape)),
            ("SAVE", collect(|o| o.save.dc, |o| o.save.ape)),
        ] {
            rows.push(TableRow {
                cell,
                method,
                dc_mean: stats.0,
                dc_se: stats.1,
                ape_mean: stats.2,
                ape_se: stats.3,
            });
        }
    }
    rows
}

/// Run the grid and write `table1.csv` plus per-cell bar charts.
pub fn run_table1(
    cells: &[CellSpec],
    folds: usize,
    p: usize,
    seed: u64,
    cfg_template: &MsrlConfig,
    out_dir: &Path,
    report_opts: ReportOpts,
) -> Result<Vec<CellFoldOutcome>, AppError> {
    if folds == 0 || folds > 6 {
        return Err(AppError::usage("--folds must lie in 1..=6"));
    }
    let mut jobs = Vec::new();
    for &cell in cells {
        for fold in 0..folds {
            jobs.push((cell, fold));
        }
    }
    let results: Vec<Result<CellFoldOutcome, AppError>> = exec::par_map(jobs, |(cell, fold)| {
        run_cell_fold(cell, p, seed, fold, cfg_template)
    });
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        outcomes.push(r?);
    }
    // Deterministic order: by cell then fold (par_map preserves input
    // order, but make the contract explicit).
    outcomes.sort_by_key(|o| {
        (
            o.cell.model as usize,
            o.cell.scenario as usize,
            o.fold,
        )
    });

    std::fs::create_dir_all(out_dir)?;
    let rows = aggregate(&outcomes);
    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.cell.model, r.cell.scenario, r.method, r.dc_mean, r.dc_se, r.ape_mean, r.ape_se
            )
        })
        .collect();
    write_table(
        &out_dir.join("table1.csv"),
        "model,scenario,method,dc_mean,dc_se,ape_mean,ape_se",
        &csv_rows,
        report_opts,
    )?;

    for &cell in cells {
        let cell_rows: Vec<&TableRow> = rows.iter().filter(|r| r.cell == cell).collect();
        let dc_bars: Vec<(String, f64)> = cell_rows
            .iter()
            .map(|r| (r.method.to_string(), r.dc_mean))
            .collect();
        let ape_bars: Vec<(String, f64)> = cell_rows
            .iter()
            .map(|r| (r.method.to_string(), r.ape_mean))
            .collect();
        let tag = format!("{}_{}", cell.model, cell.scenario);
        crate::report::write_text(
            &out_dir.join(format!("cell_{tag}_dc.svg")),
            &svg::bars(&format!("model {} scenario {}: distance correlation", cell.model, cell.scenario), &dc_bars),
        )?;
        crate::report::write_text(
            &out_dir.join(format!("cell_{tag}_ape.svg")),
            &svg::bars(&format!("model {} scenario {}: prediction error", cell.model, cell.scenario), &ape_bars),
        )?;
    }
    Ok(outcomes)
}
