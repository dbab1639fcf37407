use std::time::Instant;

use msrl::data::{gen_model, SimModel, Scenario, split, SplitSpec, SplitSizes};
use msrl::train::{train_msrl, MsrlConfig};
use msrl_cli::commands::evaluate_model;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None).init();
    let which = std::env::args().nth(1).unwrap_or_else(|| "model1".into());
    match which.as_str() {
        "model1" => {
            // Model I S(i), paper-ish preset but 2 restarts to measure per-restart time
            let data = gen_model(SimModel::I, Scenario::I, 6000, 10, 42).unwrap();
            let (train, val, test) = split(&data, &SplitSpec { sizes: SplitSizes::Counts(4000, 1000, 1000), seed: 1 }).unwrap();
            let cfg = MsrlConfig { restarts: 2, ..MsrlConfig::paper_sim(1) }.with_seed(7);
            let t0 = Instant::now();
            let model = train_msrl(&train, &val, &cfg).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let report = evaluate_model(&model, &train, &test, 1).unwrap();
            let epochs: usize = model.history.len();
            println!("model1: {dt:.1}s for 2 restarts; winner epochs={epochs} best_epoch={} dc={:.4} ape={:.4} ks={:?}",
                model.best_epoch, report.dc, report.ape, report.per_coordinate_ks);
        }
        "model4" => {
            let data = gen_model(SimModel::IV, Scenario::II, 6000, 10, 42).unwrap();
            let (train, val, test) = split(&data, &SplitSpec { sizes: SplitSizes::Counts(4000, 1000, 1000), seed: 1 }).unwrap();
            let cfg = MsrlConfig { restarts: 2, ..MsrlConfig::paper_sim(2) }.with_seed(7);
            let t0 = Instant::now();
            let model = train_msrl(&train, &val, &cfg).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let report = evaluate_model(&model, &train, &test, 1).unwrap();
            println!("model4: {dt:.1}s; epochs={} dc={:.4} ape={:.4} ks={:?}",
                model.history.len(), report.dc, report.ape, report.per_coordinate_ks);
        }
        _ => eprintln!("unknown: {which}"),
    }
}
