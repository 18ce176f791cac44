use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use licensing_core::experiments::{self, run, ExperimentConfig, Regime, SweepParam};
use licensing_core::market::expected_revenue;
use licensing_core::{Error, PriceMenu};
use serde_json::json;

#[derive(Parser)]
#[command(name = "licensing", version, about = "Optimal pricing of perpetual and subscription licenses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated, e.g. `buy_only,both`.
    #[arg(long, global = true, value_delimiter = ',')]
    regimes: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize every configured regime at the base population and write base_case.csv.
    BaseCase {
        #[command(flatten)]
        common: Common,
    },
    /// Optimize every regime at each value of one population parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// x_delta, x_gamma, sigma, x_a or x_c.
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Check closed forms and the market model against brute-force oracles.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Number of random instances for the equivalence suites.
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Optimize the configured regimes and print menus and reports as JSON.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate one price menu on the configured population.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// `p1_pre,p1_post,p2,p_s`; `NA` marks an option that is not offered.
        #[arg(long, value_delimiter = ',')]
        prices: Vec<String>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(list) = &common.regimes {
        cfg.regimes = list.iter().map(|s| s.parse()).collect::<Result<Vec<Regime>, _>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_prices(raw: &[String]) -> Result<PriceMenu, Error> {
    let parsed = raw
        .iter()
        .map(|s| match s.trim() {
            "NA" | "na" => Ok(None),
            t => t
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::config("prices", format!("`{t}` is neither a number nor NA"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let menu = PriceMenu::new(parsed[0], parsed[1], parsed[2], parsed[3]);
    menu.validate().map_err(|e| Error::config("prices", e.to_string()))?;
    Ok(menu)
}

fn print_rows(rows: &[run::SweepRow]) {
    let na = |p: Option<f64>| p.map_or("NA".to_string(), |v| format!("{v:.2}"));
    println!(
        "{:>8} {:<15} {:>9} {:>9} {:>9}  {:>7} {:>7} {:>7} {:>7} {:>7}",
        "value", "regime", "revenue", "user_w", "overall", "p1_pre", "p1_post", "p2", "p_s", "rel"
    );
    for r in rows {
        println!(
            "{:>8} {:<15} {:>9.4} {:>9.4} {:>9.4}  {:>7} {:>7} {:>7} {:>7} {:>7.4}",
            r.sweep_value.map_or("-".to_string(), |v| v.to_string()),
            r.regime.name(),
            r.revenue,
            r.user_welfare,
            r.overall_welfare,
            na(r.prices.base_pre),
            na(r.prices.base_post),
            na(r.prices.upgrade),
            na(r.prices.subscription),
            r.relative_revenue
        );
    }
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::BaseCase { common } => {
            let cfg = load(&common)?;
            let art = run::run_base_case(&cfg)?;
            print_rows(&art.output.rows);
            eprintln!("wrote {}", art.csv.display());
        }
        Command::Sweep { common, param, values } => {
            let mut cfg = load(&common)?;
            if let Some(p) = param {
                cfg.sweep.param = Some(p.parse::<SweepParam>()?);
            }
            if let Some(v) = values {
                cfg.sweep.values = v;
            }
            cfg.validate()?;
            let art = run::run_sweep(&cfg)?;
            print_rows(&art.output.rows);
            eprintln!("wrote {}", art.csv.display());
        }
        Command::Verify { common, instances } => {
            let mut cfg = load(&common)?;
            if let Some(n) = instances {
                cfg.verify.instances = n;
            }
            let report = experiments::run_verify(&cfg)?;
            for suite in &report.suites {
                println!("{suite}");
            }
            if !report.passed() {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Optimize { common } => {
            let cfg = load(&common)?;
            let res = run::optimize_regimes(&cfg, &cfg.population, &cfg.regimes)?;
            let out: Vec<_> = cfg
                .regimes
                .iter()
                .map(|r| {
                    let o = &res.results[r];
                    json!({
                        "regime": r.name(),
                        "prices": o.menu,
                        "report": o.report,
                        "restart_values": o.restart_values,
                        "evaluations": o.evaluations,
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        }
        Command::Evaluate { common, prices } => {
            let cfg = load(&common)?;
            if prices.len() != 4 {
                return Err(Error::config("prices", "expected --prices p1_pre,p1_post,p2,p_s"));
            }
            let menu = parse_prices(&prices)?;
            let report = expected_revenue(&cfg.population, &menu, &cfg.product, &cfg.integration)?;
            println!("{}", serde_json::to_string_pretty(&json!({ "prices": menu, "report": report })).expect("json"));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::Model(_) | Error::InvalidPopulation(_) => 2,
        Error::NonConvergence { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
