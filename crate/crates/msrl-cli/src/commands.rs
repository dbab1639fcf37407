//! Implementations of the CLI subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use msrl::data::{
    gen_dim_toy, gen_model, gen_model_with_noise, gen_toy, load_csv, split, write_csv, Dataset,
    SplitSizes, SplitSpec,
};
use msrl::dimsel::{select_dimension, DimSelectConfig};
use msrl::metrics::{
    ape_linear, distance_correlation_capped, kde_1d, ks_uniform, silverman_bandwidth,
    MetricReport, DCOR_ROW_CAP,
};
use msrl::nn::{read_mlps, write_mlps, Mlp};
use msrl::objective::mi_estimate;
use msrl::train::{train_msrl, MsrlConfig, TrainedModel};

use crate::config::resolve_train_config;
use crate::opts::{
    DataSource, DimSelectOpts, EvalOpts, MiEstimateOpts, SimulateOpts, TrainOpts,
};
use crate::report::{write_table, write_text, ReportOpts};
use crate::{svg, AppError};

/// Materialize the dataset named by the source flags.
pub fn resolve_dataset(src: &DataSource, seed: u64, noise_sd: Option<f64>) -> Result<Dataset, AppError> {
    if let Some(path) = &src.data {
        let mut data = load_csv(path, &src.response_cols, src.drop_constant)?;
        if src.standardize {
            data = data.standardize_x().0;
        }
        return Ok(data);
    }
    if src.dim_toy {
        return Ok(gen_dim_toy(src.n, seed)?);
    }
    if src.toy {
        return Ok(gen_toy(src.n, src.p, 5.0, seed)?);
    }
    match (&src.model, &src.scenario) {
        (Some(m), Some(s)) => {
            let model = m.parse()?;
            let scenario = s.parse()?;
            let data = match noise_sd {
                Some(sd) => gen_model_with_noise(model, scenario, src.n, src.p, seed, sd)?,
                None => gen_model(model, scenario, src.n, src.p, seed)?,
            };
            Ok(data)
        }
        _ => Err(AppError::usage(
            "no dataset: pass --data, --model with --scenario, --toy, or --dim-toy",
        )),
    }
}

pub fn cmd_simulate(opts: &SimulateOpts) -> Result<(), AppError> {
    let data = resolve_dataset(&opts.source, opts.seed, opts.noise_sd)?;
    if let Some(parent) = opts.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_csv(&data, &opts.out)?;
    log::info!(
        "wrote {} rows x {} predictors to {}",
        data.n(),
        data.d_x(),
        opts.out.display()
    );
    Ok(())
}

fn parse_counts(s: &str) -> Result<SplitSizes, AppError> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| AppError::usage(format!("bad split count '{t}'")))
        })
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err(AppError::usage("--split-counts needs train,val,test"));
    }
    Ok(SplitSizes::Counts(parts[0], parts[1], parts[2]))
}

/// KS statistic against Uniform[0,1] with values clamped into the unit
/// interval first — equivalent to restricting the KS supremum to [0,1].
pub fn ks_clamped01(values: impl Iterator<Item = f64>) -> Result<f64, AppError> {
    let clamped: Vec<f64> = values.map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(ks_uniform(&clamped)?)
}

/// DC / APE / per-coordinate KS of a trained representer on a split.
pub fn evaluate_model(
    model: &TrainedModel,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
) -> Result<MetricReport, AppError> {
    let r_train = model.r.forward_array(&train.x)?;
    let r_test = model.r.forward_array(&test.x)?;
    let y_test = test.y_matrix()?;
    let dc = distance_correlation_capped(y_test, &r_test, DCOR_ROW_CAP, seed)?;
    let ape = ape_linear(&r_train, train.y_matrix()?, &r_test, y_test)?;
    let mut ks = Vec::with_capacity(r_test.ncols());
    for j in 0..r_test.ncols() {
        ks.push(ks_clamped01(r_test.column(j).iter().copied())?);
    }
    Ok(MetricReport {
        dc,
        ape,
        per_coordinate_ks: ks,
        n_eval: test.n(),
    })
}

pub struct TrainArtifacts {
    pub model: TrainedModel,
    pub report: MetricReport,
}

pub fn run_train(opts: &TrainOpts, report_opts: ReportOpts) -> Result<TrainArtifacts, AppError> {
    let data = resolve_dataset(&opts.source, opts.seed, None)?;
    let sizes = match &opts.split_counts {
        Some(s) => parse_counts(s)?,
        None => SplitSizes::Fractions(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
    };
    let (train, val, test) = split(
        &data,
        &SplitSpec {
            sizes,
            seed: opts.seed,
        },
    )?;

    let d0 = match (opts.d0, opts.dim_select) {
        (Some(d0), _) => d0,
        (None, true) => {
            let cfg_template = resolve_train_config(&opts.tuning, 1, opts.seed)?;
            let ds_cfg = DimSelectConfig::reduced(train.d_x(), cfg_template);
            let (d0, trace) = select_dimension(&train, &ds_cfg)?;
            log::info!("dimension selection chose d0 = {d0}");
            if trace.unreliable {
                return Err(AppError::UnreliableSelection(format!(
                    "selection fell back to d_upper = {d0}"
                )));
            }
            d0
        }
        (None, false) => {
            return Err(AppError::usage("--d0 is required unless --dim-select is set"));
        }
    };

    let cfg = resolve_train_config(&opts.tuning, d0, opts.seed)?;
    let model = train_msrl(&train, &val, &cfg)?;
    let report = evaluate_model(&model, &train, &test, opts.seed)?;

    std::fs::create_dir_all(&opts.out)?;
    save_model(&model, &opts.out.join("model.bin"))?;
    let log_rows: Vec<String> = model
        .history
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.epoch, r.mi_term, r.push_term, r.total, r.val_metric, r.saturations
            )
        })
        .collect();
    write_table(
        &opts.out.join("train_log.csv"),
        "epoch,mi_term,push_term,total,val_metric,saturations",
        &log_rows,
        report_opts,
    )?;
    write_table(
        &opts.out.join("metrics.csv"),
        MetricReport::csv_header(),
        &[report.csv_row()],
        report_opts,
    )?;
    log::info!(
        "trained (restart {}, best epoch {}): dc = {:.4}, ape = {:.4}",
        model.restart_index,
        model.best_epoch,
        report.dc,
        report.ape
    );
    Ok(TrainArtifacts { model, report })
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), AppError> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    write_mlps(&mut writer, &[&model.r, &model.d, &model.q])?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(Mlp, Mlp, Mlp), AppError> {
    let file = File::open(path)
        .map_err(|e| AppError::usage(format!("cannot open model {}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut nets = read_mlps(&mut reader)?;
    if nets.len() != 3 {
        return Err(AppError::usage(format!(
            "model file holds {} networks, expected 3 (representer, MI critic, push critic)",
            nets.len()
        )));
    }
    let q = nets.pop().expect("len checked");
    let d = nets.pop().expect("len checked");
    let r = nets.pop().expect("len checked");
    Ok((r, d, q))
}

pub fn cmd_eval(opts: &EvalOpts, report_opts: ReportOpts) -> Result<(), AppError> {
    let data = resolve_dataset(&opts.source, opts.seed, None)?;
    let (r_net, _, _) = load_model(&opts.model_file)?;
    let r_vals = r_net.forward_array(&data.x)?;
    let y = data.y_matrix()?;

    // Readout fit on 80% of the rows, error on the rest.
    let (fit, _, held) = split(
        &data,
        &SplitSpec {
            sizes: SplitSizes::Fractions(0.8, 0.0, 0.2),
            seed: opts.seed,
        },
    )?;
    let r_fit = r_net.forward_array(&fit.x)?;
    let r_held = r_net.forward_array(&held.x)?;
    let dc = distance_correlation_capped(y, &r_vals, DCOR_ROW_CAP, opts.seed)?;
    let ape = ape_linear(&r_fit, fit.y_matrix()?, &r_held, held.y_matrix()?)?;
    let mut ks = Vec::new();
    for j in 0..r_vals.ncols() {
        ks.push(ks_clamped01(r_vals.column(j).iter().copied())?);
    }
    let report = MetricReport {
        dc,
        ape,
        per_coordinate_ks: ks,
        n_eval: data.n(),
    };

    std::fs::create_dir_all(&opts.out)?;
    write_table(
        &opts.out.join("metrics.csv"),
        MetricReport::csv_header(),
        &[report.csv_row()],
        report_opts,
    )?;

    // Scatter of the response against the first learned coordinate,
    // colored by response sign relative to its median.
    let mut y_sorted: Vec<f64> = y.column(0).to_vec();
    y_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite response"));
    let median = y_sorted[y_sorted.len() / 2];
    let points: Vec<(f64, f64)> = (0..data.n()).map(|i| (r_vals[(i, 0)], y[(i, 0)])).collect();
    let classes: Vec<bool> = (0..data.n()).map(|i| y[(i, 0)] >= median).collect();
    write_text(
        &opts.out.join("scatter.svg"),
        &svg::scatter("response vs first representation coordinate", &points, Some(&classes)),
    )?;

    // KDE of each representation coordinate with the reference density.
    let grid: Vec<f64> = (-40..=140).map(|i| i as f64 / 100.0).collect();
    for j in 0..r_vals.ncols() {
        let col: Vec<f64> = r_vals.column(j).to_vec();
        let bw = silverman_bandwidth(&col);
        let dens = kde_1d(&col, bw, &grid)?;
        let kde_pts: Vec<(f64, f64)> = grid.iter().copied().zip(dens).collect();
        let ref_pts: Vec<(f64, f64)> = grid
            .iter()
            .map(|&t| (t, if (0.0..=1.0).contains(&t) { 1.0 } else { 0.0 }))
            .collect();
        write_text(
            &opts.out.join(format!("kde_r{j}.svg")),
            &svg::lines(
                &format!("representation coordinate {j}"),
                &[("estimate".to_string(), kde_pts), ("reference".to_string(), ref_pts)],
            ),
        )?;
    }
    log::info!("eval: dc = {:.4}, ape = {:.4}", report.dc, report.ape);
    Ok(())
}

pub fn cmd_mi_estimate(opts: &MiEstimateOpts) -> Result<(), AppError> {
    let data = resolve_dataset(&opts.source, opts.seed, None)?;
    let (r_net, d_net, _) = load_model(&opts.model_file)?;
    // The exact U-statistic is O(n^2); cap the evaluation rows.
    let data = if data.n() > DCOR_ROW_CAP {
        let idx = msrl::util::subsample_indices(data.n(), DCOR_ROW_CAP, opts.seed);
        data.select(&idx)
    } else {
        data
    };
    let est = mi_estimate(&d_net, &r_net, &data.x, data.y_matrix()?)?;
    println!("{est}");
    Ok(())
}

/// Dimension-toy training template scaled for probe workloads.
pub fn dim_toy_template(seed: u64) -> MsrlConfig {
    MsrlConfig {
        r_hidden: vec![64],
        dq_hidden: vec![32],
        batch_size: 256,
        max_epochs: 250,
        patience: 60,
        restarts: 2,
        ..MsrlConfig::paper_sim(1)
    }
    .with_seed(seed)
}

pub fn cmd_dim_select(opts: &DimSelectOpts, report_opts: ReportOpts) -> Result<(), AppError> {
    if !(opts.eta > 0.0 && opts.eta < 1.0) {
        return Err(AppError::usage("--eta must lie in (0, 1)"));
    }
    match opts.seeds {
        None => {
            let data = resolve_dataset(&opts.source, opts.seed, None)?;
            let cfg = dim_select_config(opts, &data, opts.seed)?;
            let (selected, trace) = select_dimension(&data, &cfg)?;
            print!("{}", trace.render());
            if let Some(out) = &opts.out {
                std::fs::create_dir_all(out)?;
                write_text(&out.join("dim_select_trace.txt"), &trace.render())?;
            }
            if trace.unreliable {
                return Err(AppError::UnreliableSelection(format!(
                    "selection fell back to d_upper = {selected}"
                )));
            }
            Ok(())
        }
        Some(n_seeds) => {
            let mut selections = Vec::with_capacity(n_seeds);
            for s in 0..n_seeds {
                let seed = opts.seed + s as u64;
                let data = resolve_dataset(&opts.source, seed, None)?;
                let cfg = dim_select_config(opts, &data, seed)?;
                let (selected, trace) = select_dimension(&data, &cfg)?;
                log::info!("seed {seed}: selected {selected}{}", if trace.unreliable { " (unreliable)" } else { "" });
                selections.push(selected);
            }
            let d_max = selections.iter().copied().max().unwrap_or(1);
            let rows: Vec<String> = (1..=d_max)
                .map(|d| {
                    let count = selections.iter().filter(|&&s| s == d).count();
                    format!("{d},{}", count as f64 / n_seeds as f64)
                })
                .collect();
            for row in &rows {
                println!("{row}");
            }
            if let Some(out) = &opts.out {
                write_table(&out.join("dim_select_proportions.csv"), "d,proportion", &rows, report_opts)?;
            }
            Ok(())
        }
    }
}

fn dim_select_config(
    opts: &DimSelectOpts,
    data: &Dataset,
    seed: u64,
) -> Result<DimSelectConfig, AppError> {
    let template = if opts.source.dim_toy && opts.tuning.preset.is_none() {
        dim_toy_template(seed)
    } else {
        resolve_train_config(&opts.tuning, 1, seed)?
    };
    let d_upper = opts.d_upper.unwrap_or_else(|| data.d_x());
    let mut cfg = DimSelectConfig::reduced(d_upper, template);
    cfg.eta = opts.eta;
    cfg.n_folds = opts.folds;
    cfg.validate(data.d_x())
        .map_err(|e| AppError::usage(e.to_string()))?;
    Ok(cfg)
}
