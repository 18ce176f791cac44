use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::equilibrium::{self, best_response, strategy_value, StrategyClass};
use crate::error::Result;
use crate::market::{expected_revenue, Population};
use crate::model::{Ownership, PriceMenu, ProductConfig, UserType};
use crate::oracles::{evaluate_policy, mdp_best_utility, simulate_population, summation, ClassPolicy, OracleConfig};
use crate::parallel;

use super::config::ExperimentConfig;

/// The closed-form building blocks under test.
pub trait ClosedForms: Sync {
    fn subscription_payment(&self, from: u32, until: u32, engagement: f64, price: f64) -> f64;
    fn demand_at_release(&self, from: u32, until: u32, engagement: f64) -> f64;
    fn pre_release_reward(&self, from: u32, until: u32, own_base: bool, ty: &UserType, cfg: &ProductConfig) -> f64;
    fn post_release_reward(&self, from: u32, until: u32, owned: Ownership, ty: &UserType, cfg: &ProductConfig) -> f64;
}

/// The formulas used by [`crate::equilibrium`].
pub struct Analytic;

impl ClosedForms for Analytic {
    fn subscription_payment(&self, from: u32, until: u32, engagement: f64, price: f64) -> f64 {
        equilibrium::subscription_payment(from, until, engagement, price)
    }
    fn demand_at_release(&self, from: u32, until: u32, engagement: f64) -> f64 {
        equilibrium::demand_at_release(from, until, engagement)
    }
    fn pre_release_reward(&self, from: u32, until: u32, own_base: bool, ty: &UserType, cfg: &ProductConfig) -> f64 {
        equilibrium::pre_release_reward(from, until, own_base, ty, cfg)
    }
    fn post_release_reward(&self, from: u32, until: u32, owned: Ownership, ty: &UserType, cfg: &ProductConfig) -> f64 {
        equilibrium::post_release_reward(from, until, owned, ty, cfg)
    }
}

/// Outcome of one verification suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest deviation seen (relative or absolute, as the suite defines).
    pub max_deviation: f64,
    pub passed: bool,
    pub seconds: f64,
    pub detail: String,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} cases, {} failures, max deviation {:.3e}, {:.2}s; {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.max_deviation,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// A random user type: any arrival, `δ ∈ [0.3, 0.9]`, `γ` from its support,
/// `v ∈ [0, 50]`.
pub fn random_type(rng: &mut impl Rng, cfg: &ProductConfig) -> UserType {
    let arrival = rng.random_range(1..=cfg.n_max);
    let engagement = if rng.random_bool(0.2) { 0.9 } else { rng.random_range(0.3..=0.9) };
    let decay = crate::market::DECAY_SUPPORT[rng.random_range(0..3)];
    UserType::new(arrival, engagement, decay, rng.random_range(0.0..50.0))
}

/// A random menu: each option offered with probability 0.8, prices drawn
/// from ranges around the regime optima.
pub fn random_menu(rng: &mut impl Rng) -> PriceMenu {
    let mut offer = |hi: f64| if rng.random_bool(0.8) { Some(rng.random_range(0.0..hi)) } else { None };
    PriceMenu::new(offer(150.0), offer(90.0), offer(60.0), offer(30.0))
}

/// A random population around the base case.
pub fn random_population(rng: &mut impl Rng) -> Population {
    Population {
        arrival_weight: rng.random_range(1.0..10.0),
        decay_mix: rng.random_range(0.0..=1.0),
        short_engagement: rng.random_range(0.3..=0.9),
        value_sd: rng.random_range(5.0..20.0),
        correlation: rng.random_range(0.0..=1.0),
        ..Population::default()
    }
}

/// Compares the closed-form building blocks with direct summation and
/// demand-path enumeration on random arguments.
pub fn check_closed_forms(forms: &dyn ClosedForms, cfg: &ExperimentConfig) -> SuiteResult {
    let started = Instant::now();
    let product = cfg.product;
    let m = product.m;
    let cases = cfg.verify.closed_form_cases;
    let mut rng = rng_for(cfg.seed, 1);
    let mut max_dev = 0.0f64;
    let mut failures = 0;
    let mut worst = String::new();
    for i in 0..cases {
        let ty = random_type(&mut rng, &product);
        let (name, got, want) = match i % 4 {
            0 => {
                let from = rng.random_range(1..=m + 20);
                let until = rng.random_range(from..=from + 30);
                let price = rng.random_range(0.0..60.0);
                (
                    "rho_sub",
                    forms.subscription_payment(from, until, ty.engagement, price),
                    summation::subscription_payment(from, until, ty.engagement, price),
                )
            }
            1 => {
                let from = rng.random_range(1..=m);
                let until = rng.random_range(from..=m);
                (
                    "kappa",
                    forms.demand_at_release(from, until, ty.engagement),
                    summation::demand_at_release(from, until, ty.engagement),
                )
            }
            2 => {
                let from = rng.random_range(1..=m);
                let until = rng.random_range(from..=m);
                let own = rng.random_bool(0.5);
                (
                    "w_pre",
                    forms.pre_release_reward(from, until, own, &ty, &product),
                    summation::pre_release_reward(from, until, own, &ty, &product),
                )
            }
            _ => {
                let from = rng.random_range(m..=m + 10);
                let until = rng.random_range(from..=from + 25);
                let owned = Ownership::ALL[rng.random_range(0..4)];
                (
                    "w_post",
                    forms.post_release_reward(from, until, owned, &ty, &product),
                    summation::post_release_reward(from, until, owned, &ty, &product),
                )
            }
        };
        let dev = (got - want).abs();
        if !(dev <= cfg.verify.closed_form_tol * want.abs().max(1.0)) {
            failures += 1;
        }
        if dev > max_dev || dev.is_nan() {
            max_dev = if dev.is_nan() { f64::INFINITY } else { dev };
            worst = format!("worst {name}: {got} vs {want} for {ty:?}");
        }
    }
    SuiteResult {
        name: "closed-form identity",
        cases,
        failures,
        max_deviation: max_dev,
        passed: failures == 0,
        seconds: started.elapsed().as_secs_f64(),
        detail: worst,
    }
}

fn instances(cfg: &ExperimentConfig, stream: u64) -> Vec<(UserType, PriceMenu)> {
    let mut rng = rng_for(cfg.seed, stream);
    (0..cfg.verify.instances)
        .map(|_| (random_type(&mut rng, &cfg.product), random_menu(&mut rng)))
        .collect()
}

/// Every feasible class value equals the exact forward evaluation of its
/// explicit per-timestep plan.
pub fn check_class_plans(cfg: &ExperimentConfig) -> Result<SuiteResult> {
    let started = Instant::now();
    let oc = cfg.oracles();
    let product = cfg.product;
    let cases = instances(cfg, 2);
    let per_case = parallel::map(&cases, |(ty, menu)| -> Result<(usize, f64)> {
        let mut fails = 0;
        let mut worst = 0.0f64;
        for class in StrategyClass::ALL {
            let e = strategy_value(class, ty, menu, &product);
            if !e.feasible {
                continue;
            }
            let policy = ClassPolicy::from_eval(&e, ty, &product);
            let horizon = oc.horizon_for(ty, &product).max(policy.last_active() + 1);
            let (w, rho) = evaluate_policy(&policy, ty, menu, &product, horizon)?;
            let dev = relative(e.utility, ty.value * w - rho).max(relative(e.payment, rho));
            worst = worst.max(dev);
            if !(dev <= cfg.verify.relative_tol) {
                fails += 1;
            }
        }
        Ok((fails, worst))
    });
    let mut failures = 0;
    let mut max_dev = 0.0f64;
    for r in per_case {
        let (f, d) = r?;
        failures += f;
        max_dev = max_dev.max(d);
    }
    Ok(SuiteResult {
        name: "class plans vs forward evaluation",
        cases: cases.len(),
        failures,
        max_deviation: max_dev,
        passed: failures == 0,
        seconds: started.elapsed().as_secs_f64(),
        detail: "utility and payment of every feasible class".into(),
    })
}

/// One instance where the best class differs from the full MDP optimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub ty: UserType,
    pub menu: PriceMenu,
    pub closed_form: f64,
    pub mdp: f64,
    pub class: StrategyClass,
}

/// Best-response utility against backward induction over the full action
/// space, on random instances. Returns the suite and the mismatches.
pub fn check_mdp_equivalence(cfg: &ExperimentConfig) -> Result<(SuiteResult, Vec<Mismatch>)> {
    let started = Instant::now();
    let oc: OracleConfig = cfg.oracles();
    let product = cfg.product;
    let cases = instances(cfg, 3);
    let per_case = parallel::map(&cases, |(ty, menu)| -> Result<(f64, Mismatch)> {
        let best = best_response(ty, menu, &product);
        let mdp = mdp_best_utility(ty, menu, &product, &oc)?;
        let mismatch = Mismatch {
            ty: *ty,
            menu: *menu,
            closed_form: best.utility,
            mdp: mdp.utility,
            class: best.class,
        };
        Ok((relative(best.utility, mdp.utility), mismatch))
    });
    let mut mismatches = Vec::new();
    let mut max_dev = 0.0f64;
    let mut above = 0;
    for r in per_case {
        let (dev, m) = r?;
        max_dev = max_dev.max(dev);
        if !(dev <= cfg.verify.relative_tol) {
            if m.closed_form > m.mdp {
                above += 1;
            }
            mismatches.push(m);
        }
    }
    let detail = format!(
        "{} instances where the MDP finds more utility than the best class, {} where the class claims more",
        mismatches.len() - above,
        above
    );
    Ok((
        SuiteResult {
            name: "best response vs full MDP",
            cases: cases.len(),
            failures: mismatches.len(),
            max_deviation: max_dev,
            passed: mismatches.is_empty(),
            seconds: started.elapsed().as_secs_f64(),
            detail,
        },
        mismatches,
    ))
}

/// Analytic revenue against simulated users on random populations and menus.
pub fn check_monte_carlo(cfg: &ExperimentConfig) -> Result<SuiteResult> {
    let started = Instant::now();
    let oc = cfg.oracles();
    let mut rng = rng_for(cfg.seed, 4);
    let pairs: Vec<(Population, PriceMenu)> = (0..cfg.verify.mc_pairs)
        .map(|_| (random_population(&mut rng), random_menu(&mut rng)))
        .collect();
    let mut inside = 0;
    let mut max_z = 0.0f64;
    for (i, (pop, menu)) in pairs.iter().enumerate() {
        let analytic = expected_revenue(pop, menu, &cfg.product, &cfg.integration)?;
        let sim = simulate_population(
            pop,
            menu,
            &cfg.product,
            &OracleConfig {
                seed: oc.seed.wrapping_add(i as u64),
                ..oc
            },
        )?;
        let z = if sim.revenue_se > 0.0 {
            (analytic.revenue - sim.revenue).abs() / sim.revenue_se
        } else if analytic.revenue == sim.revenue {
            0.0
        } else {
            f64::INFINITY
        };
        max_z = max_z.max(z);
        if z <= cfg.verify.mc_band {
            inside += 1;
        }
    }
    let n = pairs.len();
    Ok(SuiteResult {
        name: "Monte Carlo revenue",
        cases: n,
        failures: n - inside,
        max_deviation: max_z,
        passed: inside >= cfg.verify.mc_required,
        seconds: started.elapsed().as_secs_f64(),
        detail: format!(
            "{inside}/{n} inside the {}-SE band (need {}), {} users each; deviation in SE units",
            cfg.verify.mc_band, cfg.verify.mc_required, oc.mc_samples
        ),
    })
}

/// All suites with the configured sizes.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let mut suites = vec![check_closed_forms(&Analytic, cfg), check_class_plans(cfg)?];
    suites.push(check_mdp_equivalence(cfg)?.0);
    suites.push(check_monte_carlo(cfg)?);
    Ok(VerifyReport { suites })
}
