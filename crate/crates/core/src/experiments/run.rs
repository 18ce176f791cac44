use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{MarketReport, Population};
use crate::model::PriceMenu;
use crate::optimizer::{optimize, OptResult, PricingRegime};
use crate::parallel;

use super::config::{ExperimentConfig, Regime, SweepParam};

/// One CSV row: an optimized regime at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// `base_case` for the base-case table.
    pub sweep_param: String,
    /// `None` for the base-case table.
    pub sweep_value: Option<f64>,
    pub regime: Regime,
    pub revenue: f64,
    pub user_welfare: f64,
    pub overall_welfare: f64,
    pub prices: PriceMenu,
    /// Revenue divided by the `buy_only` revenue at the same parameter value.
    pub relative_revenue: f64,
}

/// Optimized regimes at one population.
#[derive(Debug, Clone)]
pub struct RegimeResults {
    pub results: BTreeMap<Regime, OptResult>,
    pub evaluations: usize,
}

impl RegimeResults {
    pub fn report(&self, regime: Regime) -> Option<&MarketReport> {
        self.results.get(&regime).map(|r| &r.report)
    }
}

/// Optimizes `regimes` for `pop`, plus `buy_only`, which supplies the frozen
/// prices of `both_given_buy` and the revenue normalization.
pub fn optimize_regimes(cfg: &ExperimentConfig, pop: &Population, regimes: &[Regime]) -> Result<RegimeResults> {
    let de = cfg.de();
    let run = |regime: PricingRegime| optimize(regime, pop, &cfg.product, &cfg.integration, &de);
    let buy = run(PricingRegime::BuyOnly)?;
    let mut evaluations = buy.evaluations;
    let mut results = BTreeMap::new();
    for &regime in regimes {
        if results.contains_key(&regime) || regime == Regime::BuyOnly {
            continue;
        }
        let r = match regime {
            Regime::SubOnly => run(PricingRegime::SubOnly)?,
            Regime::Both => run(PricingRegime::Both)?,
            Regime::BothGivenBuy => {
                let m = buy.menu;
                run(PricingRegime::BothGivenBuy {
                    base_pre: m.base_pre.expect("buy-only menu"),
                    base_post: m.base_post.expect("buy-only menu"),
                    upgrade: m.upgrade.expect("buy-only menu"),
                })?
            }
            Regime::BuyOnly => unreachable!(),
        };
        log::info!("{regime}: revenue {:.4} at {:?}", r.report.revenue, r.menu);
        evaluations += r.evaluations;
        results.insert(regime, r);
    }
    results.insert(Regime::BuyOnly, buy);
    Ok(RegimeResults { results, evaluations })
}

fn rows_for(param: &str, value: Option<f64>, regimes: &[Regime], res: &RegimeResults) -> Vec<SweepRow> {
    let baseline = res.results[&Regime::BuyOnly].report.revenue;
    let mut wanted: Vec<Regime> = regimes.to_vec();
    wanted.sort();
    wanted.dedup();
    wanted
        .into_iter()
        .map(|regime| {
            let r = &res.results[&regime];
            let relative_revenue = if regime == Regime::BuyOnly { 1.0 } else { r.report.revenue / baseline };
            SweepRow {
                sweep_param: param.to_string(),
                sweep_value: value,
                regime,
                revenue: r.report.revenue,
                user_welfare: r.report.user_welfare,
                overall_welfare: r.report.overall_welfare,
                prices: r.menu,
                relative_revenue,
            }
        })
        .collect()
}

/// Outcome of a base-case or sweep run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<SweepRow>,
    pub evaluations: usize,
}

/// Optimizes the configured regimes on the configured population.
pub fn base_case(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let res = optimize_regimes(cfg, &cfg.population, &cfg.regimes)?;
    Ok(RunOutput {
        rows: rows_for("base_case", None, &cfg.regimes, &res),
        evaluations: res.evaluations,
    })
}

/// Optimizes the configured regimes at every value of the configured sweep.
pub fn sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let param = cfg.sweep.param.ok_or_else(|| Error::config("sweep.param", "a sweep parameter is required"))?;
    if cfg.sweep.values.is_empty() {
        return Err(Error::config("sweep.values", "at least one value is required"));
    }
    sweep_values(cfg, param, &cfg.sweep.values)
}

fn sweep_values(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<RunOutput> {
    let points = parallel::map(values, |&v| optimize_regimes(cfg, &param.apply(&cfg.population, v), &cfg.regimes));
    let mut rows = Vec::new();
    let mut evaluations = 0;
    for (&value, res) in values.iter().zip(points) {
        let res = res?;
        evaluations += res.evaluations;
        rows.extend(rows_for(param.name(), Some(value), &cfg.regimes, &res));
    }
    rows.sort_by(|a, b| {
        a.sweep_value
            .partial_cmp(&b.sweep_value)
            .expect("finite sweep values")
            .then(a.regime.cmp(&b.regime))
    });
    Ok(RunOutput { rows, evaluations })
}

pub const CSV_HEADER: [&str; 11] = [
    "sweep_param",
    "sweep_value",
    "regime",
    "revenue",
    "user_welfare",
    "overall_welfare",
    "p1_pre",
    "p1_post",
    "p2",
    "p_s",
    "relative_revenue",
];

fn na(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Writes `rows` as CSV after a `#` provenance line.
pub fn write_csv(out: &mut impl Write, provenance: &str, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "# {provenance}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep_param.clone(),
            na(r.sweep_value),
            r.regime.name().to_string(),
            r.revenue.to_string(),
            r.user_welfare.to_string(),
            r.overall_welfare.to_string(),
            na(r.prices.base_pre),
            na(r.prices.base_post),
            na(r.prices.upgrade),
            na(r.prices.subscription),
            r.relative_revenue.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Provenance line: crate version, config hash, seed and objective evaluations.
pub fn provenance(cfg: &ExperimentConfig, evaluations: usize) -> String {
    format!(
        "licensing-core {} config_sha256={} seed={} evaluations={}",
        env!("CARGO_PKG_VERSION"),
        cfg.digest(),
        cfg.seed,
        evaluations
    )
}

/// Files written by a run.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub csv: PathBuf,
    pub meta: PathBuf,
    pub output: RunOutput,
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'a str,
    config_sha256: String,
    seed: u64,
    evaluations: usize,
    runtime_seconds: f64,
    config: &'a ExperimentConfig,
}

fn persist(cfg: &ExperimentConfig, stem: &str, output: RunOutput, started: Instant) -> Result<Artifact> {
    fs::create_dir_all(&cfg.output_dir)?;
    let csv = cfg.output_dir.join(format!("{stem}.csv"));
    let meta = cfg.output_dir.join(format!("{stem}.meta.json"));
    let mut file = fs::File::create(&csv)?;
    write_csv(&mut file, &provenance(cfg, output.evaluations), &output.rows)?;
    let m = Meta {
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: cfg.digest(),
        seed: cfg.seed,
        evaluations: output.evaluations,
        runtime_seconds: started.elapsed().as_secs_f64(),
        config: cfg,
    };
    fs::write(&meta, serde_json::to_string_pretty(&m).expect("meta serializes"))?;
    Ok(Artifact { csv, meta, output })
}

/// Runs [`base_case`] and writes `base_case.csv` (plus `base_case.meta.json`).
pub fn run_base_case(cfg: &ExperimentConfig) -> Result<Artifact> {
    let started = Instant::now();
    let output = base_case(cfg)?;
    persist(cfg, "base_case", output, started)
}

/// Runs [`sweep`] and writes `sweep_<param>.csv` (plus the meta file).
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Artifact> {
    let started = Instant::now();
    let output = sweep(cfg)?;
    let param = cfg.sweep.param.expect("validated by sweep");
    persist(cfg, &format!("sweep_{}", param.name()), output, started)
}
