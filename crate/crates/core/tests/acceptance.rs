//! Acceptance suite: one PASS/FAIL line per criterion, plus INFO lines with
//! the numbers behind each verdict. Red criteria are listed at the end; set
//! `ACCEPTANCE_STRICT=1` to also exit non-zero when any criterion fails.
//!
//! Runs the full optimizer budget on the base case and the engagement sweep,
//! so expect several minutes on a single core.

mod common;

use std::time::Instant;

use licensing_core::equilibrium::StrategyClass;
use licensing_core::experiments::run::{self, write_csv, SweepRow};
use licensing_core::experiments::verify::{self, Analytic};
use licensing_core::experiments::{ExperimentConfig, Regime, SweepParam};
use licensing_core::market::{construct_sub_improvement, expected_revenue, MarketReport};
use licensing_core::optimizer::{optimize, PricingRegime};
use licensing_core::PriceMenu;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reference optimum revenue and user welfare per regime.
const REFERENCE: [(Regime, f64, f64); 4] = [
    (Regime::BuyOnly, 31.42, 33.23),
    (Regime::SubOnly, 33.54, 24.07),
    (Regime::Both, 37.88, 24.39),
    (Regime::BothGivenBuy, 31.82, 33.89),
];
const REVENUE_TOL: f64 = 0.05;
const WELFARE_TOL: f64 = 0.07;
/// Gaps over `buy_only`, in percent, for sub_only, both and both_given_buy.
const GAPS: [(Regime, f64); 3] = [(Regime::SubOnly, 6.7), (Regime::Both, 20.5), (Regime::BothGivenBuy, 1.3)];
const GAP_TOL_PP: f64 = 2.0;

const SPOT_PRICES: PriceMenu = PriceMenu {
    base_pre: Some(96.98),
    base_post: Some(35.19),
    upgrade: Some(47.96),
    subscription: Some(17.71),
};
const SPOT_SUB_THEN_BUY: f64 = 0.529;
const SPOT_DIRECT_BUY: f64 = 0.153;
const SPOT_TOL: f64 = 0.05;

const SWEEP_X_DELTA: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
const SWEEP_END_MAX: f64 = 0.02;

const PROPERTY_POPULATIONS: usize = 20;
const PROPERTY_RESTARTS: usize = 5;

#[derive(Default)]
struct Verdicts {
    passed: usize,
    failed: Vec<&'static str>,
}

impl Verdicts {
    fn check(&mut self, name: &'static str, ok: bool, detail: impl AsRef<str>) {
        println!("{} {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(name);
        }
    }
}

fn info(detail: impl AsRef<str>) {
    println!("  INFO {}", detail.as_ref());
}

fn section(title: &str) {
    println!("\n── {title} ──");
}

fn welfare_identity_holds(r: &MarketReport) -> bool {
    (r.overall_welfare - (r.revenue + r.user_welfare)).abs() <= 4.0 * f64::EPSILON * r.overall_welfare.abs().max(1.0)
}

fn row_for(rows: &[SweepRow], regime: Regime) -> &SweepRow {
    rows.iter().find(|r| r.regime == regime).expect("regime was optimized")
}

fn oracle_suites(v: &mut Verdicts, cfg: &ExperimentConfig) {
    section("Oracles");
    let (mdp, mismatches) = verify::check_mdp_equivalence(cfg).expect("mdp suite runs");
    v.check(
        "oracle equivalence",
        mdp.passed && mdp.seconds < 60.0,
        format!(
            "{} instances, {} outside {:.0e} relative, max {:.2e}, {:.1}s (limit 60s)",
            mdp.cases, mdp.failures, cfg.verify.relative_tol, mdp.max_deviation, mdp.seconds
        ),
    );
    for m in mismatches.iter().take(3) {
        info(format!("mismatch {:?} under {:?}: class {} {} vs MDP {}", m.ty, m.menu, m.class.label(), m.closed_form, m.mdp));
    }
    let plans = verify::check_class_plans(cfg).expect("plan suite runs");
    info(format!("{plans}"));

    let closed = verify::check_closed_forms(&Analytic, cfg);
    let corrupted = verify::check_closed_forms(&common::NoSurvivalFactor, cfg);
    v.check(
        "closed-form identity",
        closed.passed && closed.seconds < 10.0 && !corrupted.passed,
        format!(
            "{} cases, {} failures, max deviation {:.2e} (tol {:.0e}), {:.2}s; survival-factor-free control fails on {} cases",
            closed.cases, closed.failures, closed.max_deviation, cfg.verify.closed_form_tol, closed.seconds, corrupted.failures
        ),
    );

    let mc = verify::check_monte_carlo(cfg).expect("monte carlo runs");
    v.check(
        "Monte Carlo consistency",
        mc.passed,
        format!("{}; largest deviation {:.2} SE, {:.1}s", mc.detail, mc.max_deviation, mc.seconds),
    );
}

fn base_case(v: &mut Verdicts, cfg: &ExperimentConfig) -> Vec<SweepRow> {
    section("Base case");
    let started = Instant::now();
    let out = run::base_case(cfg).expect("base case runs");
    let seconds = started.elapsed().as_secs_f64();
    let rows = out.rows;
    for r in &rows {
        info(format!(
            "{:<15} revenue {:>8.4}  user welfare {:>8.4}  prices {:?}",
            r.regime.name(),
            r.revenue,
            r.user_welfare,
            r.prices
        ));
    }
    info(format!("{} objective evaluations in {seconds:.0}s", out.evaluations));

    let mut ok = seconds < 1800.0;
    let mut parts = Vec::new();
    for (regime, reference, _) in REFERENCE {
        let got = row_for(&rows, regime).revenue;
        let rel = got / reference - 1.0;
        ok &= rel.abs() <= REVENUE_TOL;
        parts.push(format!("{} {got:.2} vs {reference} ({:+.1}%)", regime.name(), 100.0 * rel));
    }
    v.check("base-case revenues within ±5%", ok, parts.join(", "));

    let rev = |r: Regime| row_for(&rows, r).revenue;
    let ordered = rev(Regime::Both) > rev(Regime::SubOnly)
        && rev(Regime::SubOnly) > rev(Regime::BothGivenBuy)
        && rev(Regime::BothGivenBuy) > rev(Regime::BuyOnly);
    v.check(
        "base-case ordering both > sub_only > both_given_buy > buy_only",
        ordered,
        format!(
            "{:.4} > {:.4} > {:.4} > {:.4}",
            rev(Regime::Both),
            rev(Regime::SubOnly),
            rev(Regime::BothGivenBuy),
            rev(Regime::BuyOnly)
        ),
    );

    let mut ok = true;
    let mut parts = Vec::new();
    for (regime, reference) in GAPS {
        let gap = 100.0 * (rev(regime) / rev(Regime::BuyOnly) - 1.0);
        ok &= (gap - reference).abs() <= GAP_TOL_PP;
        parts.push(format!("{} {gap:+.1}% vs {reference:+.1}%", regime.name()));
    }
    v.check("base-case gaps over buy_only within ±2pp", ok, parts.join(", "));
    info("sub_only earns more relative to buy_only than the reference; moving the base-quality reference timestep rescales every regime but leaves that ratio near +15%");
    rows
}

fn welfare(v: &mut Verdicts, rows: &[SweepRow], reports: &[MarketReport]) {
    section("Welfare");
    let from_rows = rows
        .iter()
        .all(|r| (r.overall_welfare - (r.revenue + r.user_welfare)).abs() <= 4.0 * f64::EPSILON * r.overall_welfare.abs().max(1.0));
    let all = from_rows && reports.iter().all(welfare_identity_holds);
    v.check(
        "welfare identity",
        all,
        format!("overall = revenue + user welfare within 4 ulp on {} reports", rows.len() + reports.len()),
    );
    let mut ok = true;
    let mut parts = Vec::new();
    for (regime, _, reference) in REFERENCE {
        let got = row_for(rows, regime).user_welfare;
        let rel = got / reference - 1.0;
        ok &= rel.abs() <= WELFARE_TOL;
        parts.push(format!("{} {got:.2} vs {reference} ({:+.1}%)", regime.name(), 100.0 * rel));
    }
    v.check("base-case user welfare within ±7%", ok, parts.join(", "));
}

fn subscription_only_never_optimal(v: &mut Verdicts, cfg: &ExperimentConfig) -> Vec<MarketReport> {
    section("Subscription-only improvement");
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5B);
    let mut de = cfg.de();
    de.restarts = PROPERTY_RESTARTS;
    let mut improved = 0;
    let mut smallest = f64::INFINITY;
    let mut reports = Vec::new();
    for _ in 0..PROPERTY_POPULATIONS {
        let pop = verify::random_population(&mut rng);
        let sub = optimize(PricingRegime::SubOnly, &pop, &cfg.product, &cfg.integration, &de).expect("sub-only optimum");
        let better = construct_sub_improvement(&pop, &sub.menu, &cfg.product, &cfg.integration).expect("construction runs");
        let report = expected_revenue(&pop, &better, &cfg.product, &cfg.integration).expect("evaluates");
        let gain = report.revenue - sub.report.revenue;
        if gain > 0.0 {
            improved += 1;
        }
        smallest = smallest.min(gain / sub.report.revenue);
        reports.push(sub.report);
        reports.push(report);
    }
    v.check(
        "subscription-only is never optimal",
        improved == PROPERTY_POPULATIONS,
        format!(
            "{improved}/{PROPERTY_POPULATIONS} random populations strictly improved, smallest gain {:+.3}%, {PROPERTY_RESTARTS} restarts each, {:.0}s",
            100.0 * smallest,
            started.elapsed().as_secs_f64()
        ),
    );
    reports
}

fn engagement_sweep(v: &mut Verdicts, cfg: &ExperimentConfig) -> Vec<SweepRow> {
    section("Engagement sweep");
    let started = Instant::now();
    let mut sc = cfg.clone();
    sc.regimes = vec![Regime::BuyOnly, Regime::Both];
    sc.sweep.param = Some(SweepParam::ShortEngagement);
    sc.sweep.values = SWEEP_X_DELTA.to_vec();
    let rows = run::sweep(&sc).expect("sweep runs").rows;
    let adv: Vec<f64> = SWEEP_X_DELTA
        .iter()
        .map(|&x| {
            rows.iter()
                .find(|r| r.regime == Regime::Both && r.sweep_value == Some(x))
                .expect("sweep row")
                .relative_revenue
                - 1.0
        })
        .collect();
    let decreasing = adv.windows(2).all(|w| w[1] < w[0]);
    let last = *adv.last().expect("values");
    v.check(
        "both advantage shrinks with x_delta",
        decreasing && last < SWEEP_END_MAX,
        format!(
            "advantage over buy_only {} at x_delta {:?}; {:.0}s",
            adv.iter().map(|a| format!("{:+.2}%", 100.0 * a)).collect::<Vec<_>>().join(" "),
            SWEEP_X_DELTA,
            started.elapsed().as_secs_f64()
        ),
    );
    rows
}

fn share_spot_check(v: &mut Verdicts, cfg: &ExperimentConfig) -> MarketReport {
    section("Strategy shares");
    let r = expected_revenue(&cfg.population, &SPOT_PRICES, &cfg.product, &cfg.integration).expect("evaluates");
    let s = |c: StrategyClass| r.arrival_share(1, c);
    let sub_then_buy = s(StrategyClass::SubscribeBuy) + s(StrategyClass::SubscribeBuyBase);
    let direct = s(StrategyClass::BuyBuy) + s(StrategyClass::BuySubscribe);
    v.check(
        "strategy shares of first-step arrivals",
        (sub_then_buy - SPOT_SUB_THEN_BUY).abs() <= SPOT_TOL && (direct - SPOT_DIRECT_BUY).abs() <= SPOT_TOL,
        format!(
            "subscribe-then-buy {:.1}% vs {:.1}%, direct buy {:.1}% vs {:.1}% (±{:.0}pp)",
            100.0 * sub_then_buy,
            100.0 * SPOT_SUB_THEN_BUY,
            100.0 * direct,
            100.0 * SPOT_DIRECT_BUY,
            100.0 * SPOT_TOL
        ),
    );
    info(format!(
        "first-step arrivals: {}",
        StrategyClass::ALL
            .iter()
            .map(|&c| format!("{} {:.1}%", c.label(), 100.0 * s(c)))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    info("buying after a subscription spell only pays off if demand survives the spell; crediting ownership without that survival factor (the closed-form control above) inflates subscribe-then-buy");
    r
}

fn determinism(v: &mut Verdicts, cfg: &ExperimentConfig) {
    section("Determinism");
    let mut small = cfg.clone();
    small.optimizer.generations = 40;
    small.optimizer.restarts = 2;
    let csv = || {
        let out = run::base_case(&small).expect("base case runs");
        let mut buf = Vec::new();
        write_csv(&mut buf, &run::provenance(&small, out.evaluations), &out.rows).expect("csv");
        buf
    };
    let pool = |n: usize| rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("pool");
    let first = csv();
    let second = csv();
    let single = pool(1).install(csv);
    let four = pool(4).install(csv);
    v.check(
        "byte-identical CSVs",
        first == second && first == single && first == four,
        format!(
            "{} bytes; repeat {}, 1 thread {}, 4 threads {}",
            first.len(),
            first == second,
            first == single,
            first == four
        ),
    );
}

fn main() {
    let started = Instant::now();
    let cfg = ExperimentConfig::default();
    println!("acceptance: seed {}, config sha256 {}", cfg.seed, cfg.digest());
    let mut v = Verdicts::default();

    oracle_suites(&mut v, &cfg);
    let base = base_case(&mut v, &cfg);
    let mut reports = subscription_only_never_optimal(&mut v, &cfg);
    let sweep = engagement_sweep(&mut v, &cfg);
    reports.push(share_spot_check(&mut v, &cfg));
    let rows: Vec<SweepRow> = base.iter().chain(&sweep).cloned().collect();
    welfare(&mut v, &rows, &reports);
    determinism(&mut v, &cfg);

    println!(
        "\n{} passed, {} failed in {:.0}s",
        v.passed,
        v.failed.len(),
        started.elapsed().as_secs_f64()
    );
    if !v.failed.is_empty() {
        println!("failed: {}", v.failed.join("; "));
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|s| s == "1") {
            std::process::exit(1);
        }
    }
}
