use clap::Parser;

use msrl_cli::opts::{Cli, Command};
use msrl_cli::report::ReportOpts;
use msrl_cli::{commands, config, table1, table3, AppError};

fn run(cli: &Cli) -> Result<(), AppError> {
    let report_opts = ReportOpts {
        timestamp: !cli.no_timestamp,
    };
    match &cli.command {
        Command::Simulate(opts) => commands::cmd_simulate(opts),
        Command::Train(opts) => commands::run_train(opts, report_opts).map(|_| ()),
        Command::Eval(opts) => commands::cmd_eval(opts, report_opts),
        Command::MiEstimate(opts) => commands::cmd_mi_estimate(opts),
        Command::DimSelect(opts) => commands::cmd_dim_select(opts, report_opts),
        Command::ReproduceTable1(opts) => {
            let cells = table1::parse_cells(&opts.cells)?;
            let cfg = config::resolve_train_config(&opts.tuning, 1, opts.seed)?;
            table1::run_table1(
                &cells,
                opts.folds,
                opts.p,
                opts.seed,
                &cfg,
                &opts.out,
                report_opts,
            )
            .map(|_| ())
        }
        Command::ReproduceTable3(opts) => {
            let template = if opts.tuning.preset.is_none() && opts.tuning.config.is_none() {
                commands::dim_toy_template(opts.seed)
            } else {
                config::resolve_train_config(&opts.tuning, 1, opts.seed)?
            };
            table3::run_table3(
                opts.seeds,
                opts.n,
                opts.eta,
                opts.folds,
                opts.seed,
                &template,
                Some(&opts.out),
                report_opts,
            )
            .map(|_| ())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests print and exit 0; real parse errors
            // are usage errors.
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(2);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
