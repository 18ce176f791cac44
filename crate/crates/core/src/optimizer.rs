//! Differential evolution (rand/1/bin, best of several restarts) over the
//! free prices of a pricing regime.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{expected_revenue_over, IntegrationConfig, MarketReport, Population};
use crate::model::{PriceMenu, ProductConfig};
use crate::parallel;

/// Which options the publisher offers, and which prices are searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingRegime {
    /// Base (before and after the release) and upgrade purchases only.
    BuyOnly,
    /// Subscription only.
    SubOnly,
    /// Everything, all four prices free.
    Both,
    /// Everything, with the three buy prices frozen; only `pS` is searched.
    BothGivenBuy { base_pre: f64, base_post: f64, upgrade: f64 },
}

impl PricingRegime {
    pub fn name(&self) -> &'static str {
        match self {
            PricingRegime::BuyOnly => "buy_only",
            PricingRegime::SubOnly => "sub_only",
            PricingRegime::Both => "both",
            PricingRegime::BothGivenBuy { .. } => "both_given_buy",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PricingRegime::BuyOnly => 3,
            PricingRegime::SubOnly | PricingRegime::BothGivenBuy { .. } => 1,
            PricingRegime::Both => 4,
        }
    }

    /// Search box of each free price, in the order used by [`Self::menu`].
    pub fn bounds(&self, b: &PriceBounds) -> Vec<(f64, f64)> {
        match self {
            PricingRegime::BuyOnly => vec![b.base, b.base, b.upgrade],
            PricingRegime::SubOnly | PricingRegime::BothGivenBuy { .. } => vec![b.subscription],
            PricingRegime::Both => vec![b.base, b.base, b.upgrade, b.subscription],
        }
    }

    /// The menu for a point of the search space.
    pub fn menu(&self, x: &[f64]) -> PriceMenu {
        match *self {
            PricingRegime::BuyOnly => PriceMenu::buy_only(x[0], x[1], x[2]),
            PricingRegime::SubOnly => PriceMenu::sub_only(x[0]),
            PricingRegime::Both => PriceMenu::all(x[0], x[1], x[2], x[3]),
            PricingRegime::BothGivenBuy { base_pre, base_post, upgrade } => PriceMenu::all(base_pre, base_post, upgrade, x[0]),
        }
    }
}

/// Price search boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceBounds {
    pub base: (f64, f64),
    pub upgrade: (f64, f64),
    pub subscription: (f64, f64),
}

impl Default for PriceBounds {
    fn default() -> Self {
        Self {
            base: (0.0, 200.0),
            upgrade: (0.0, 200.0),
            subscription: (0.0, 60.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DEConfig {
    /// Individuals per generation; `None` means `15 · dim`.
    pub population: Option<usize>,
    /// Differential weight `F`.
    pub mutation: f64,
    /// Crossover rate `CR`.
    pub crossover: f64,
    pub generations: usize,
    pub restarts: usize,
    /// Stop a restart once the best value has not improved by more than
    /// `stagnation_tol` (relative) for this many generations.
    pub stagnation: usize,
    pub stagnation_tol: f64,
    pub bounds: PriceBounds,
    /// Set from the experiment seed; not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self {
            population: None,
            mutation: 0.8,
            crossover: 0.9,
            generations: 300,
            restarts: 15,
            stagnation: 60,
            stagnation_tol: 1e-6,
            bounds: PriceBounds::default(),
            seed: 20_240_601,
        }
    }
}

impl DEConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, msg: &str| Err(Error::config(format!("optimizer.{key}"), msg));
        if self.restarts < 1 {
            return err("restarts", "must be at least 1");
        }
        if self.generations < 1 {
            return err("generations", "must be at least 1");
        }
        if self.population.is_some_and(|p| p < 4) {
            return err("population", "must be at least 4");
        }
        if !(self.mutation > 0.0 && self.mutation <= 2.0) {
            return err("mutation", "must lie in (0, 2]");
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return err("crossover", "must lie in [0, 1]");
        }
        for (name, (lo, hi)) in [
            ("bounds.base", self.bounds.base),
            ("bounds.upgrade", self.bounds.upgrade),
            ("bounds.subscription", self.bounds.subscription),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                return err(name, "must be finite, nonnegative and ordered");
            }
        }
        Ok(())
    }

    fn population_for(&self, dim: usize) -> usize {
        self.population.unwrap_or(15 * dim).max(4)
    }
}

/// Result of [`differential_evolution`].
#[derive(Debug, Clone, PartialEq)]
pub struct DEOutcome {
    pub argmax: Vec<f64>,
    pub value: f64,
    /// Best value reached by each restart.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Maximizes `objective` over the box `bounds` with best-of-`restarts`
/// rand/1/bin differential evolution. Candidates with a non-finite value
/// are discarded.
pub fn differential_evolution<F>(objective: F, bounds: &[(f64, f64)], de: &DEConfig) -> Result<DEOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    try_differential_evolution(|x| Ok(objective(x)), bounds, de)
}

/// [`differential_evolution`] for an objective that can fail; the first
/// error aborts the search.
pub fn try_differential_evolution<F>(objective: F, bounds: &[(f64, f64)], de: &DEConfig) -> Result<DEOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    de.validate()?;
    if bounds.is_empty() {
        return Err(Error::Optimizer("search space has no dimensions".into()));
    }
    if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::Optimizer(format!("invalid bounds [{lo}, {hi}]")));
    }
    let score = |x: &[f64]| -> Result<f64> {
        let v = objective(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            log::warn!("discarding candidate {x:?} with objective {v}");
            Ok(f64::NEG_INFINITY)
        }
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut history = Vec::with_capacity(de.restarts);
    let mut evaluations = 0;
    for restart in 0..de.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(de.seed);
        rng.set_stream(restart as u64);
        let (x, v, evals) = run_restart(&score, bounds, de, &mut rng)?;
        log::debug!("restart {restart}: best {v} at {x:?} after {evals} evaluations");
        evaluations += evals;
        history.push(v);
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((x, v));
        }
    }
    let (argmax, value) = best.expect("at least one restart");
    Ok(DEOutcome {
        argmax,
        value,
        history,
        evaluations,
    })
}

fn run_restart<F>(score: &F, bounds: &[(f64, f64)], de: &DEConfig, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64, usize)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let dim = bounds.len();
    let np = de.population_for(dim);
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect())
        .collect();
    let mut values = collect(parallel::map(&pop, |x| score(x)))?;
    let mut evaluations = np;
    let mut best = argmax(&values);
    let mut reference = values[best];
    let mut stagnant = 0;

    for _ in 0..de.generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let [a, b, c] = distinct_others(rng, np, i);
                let forced = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        if j == forced || rng.random::<f64>() < de.crossover {
                            let (lo, hi) = bounds[j];
                            let y = pop[a][j] + de.mutation * (pop[b][j] - pop[c][j]);
                            if (lo..=hi).contains(&y) {
                                y
                            } else {
                                lo + (hi - lo) * rng.random::<f64>()
                            }
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_values = collect(parallel::map(&trials, |x| score(x)))?;
        evaluations += np;
        for (i, (trial, value)) in trials.into_iter().zip(trial_values).enumerate() {
            if value >= values[i] {
                pop[i] = trial;
                values[i] = value;
            }
        }
        best = argmax(&values);
        if values[best] > reference + de.stagnation_tol * reference.abs().max(1e-12) {
            reference = values[best];
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= de.stagnation {
                break;
            }
        }
    }
    Ok((pop[best].clone(), values[best], evaluations))
}

fn collect(values: Vec<Result<f64>>) -> Result<Vec<f64>> {
    values.into_iter().collect()
}

/// Index of the largest value; the first one on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn distinct_others(rng: &mut impl Rng, np: usize, exclude: usize) -> [usize; 3] {
    let mut picked = [usize::MAX; 3];
    for k in 0..3 {
        loop {
            let r = rng.random_range(0..np);
            if r != exclude && !picked[..k].contains(&r) {
                picked[k] = r;
                break;
            }
        }
    }
    picked
}

/// The outcome of optimizing one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub regime: PricingRegime,
    pub menu: PriceMenu,
    pub report: MarketReport,
    /// Best revenue of each restart.
    pub restart_values: Vec<f64>,
    pub evaluations: usize,
}

/// Maximizes expected revenue over the free prices of `regime`.
///
/// For [`PricingRegime::BothGivenBuy`] the menu without the subscription is
/// returned when it earns at least as much as the best subscription price.
pub fn optimize(
    regime: PricingRegime,
    pop: &Population,
    cfg: &ProductConfig,
    ic: &IntegrationConfig,
    de: &DEConfig,
) -> Result<OptResult> {
    pop.validate()?;
    cfg.validate()?;
    ic.validate()?;
    let cells = pop.cells(cfg);
    let objective = |x: &[f64]| expected_revenue_over(&cells, &regime.menu(x), cfg, ic).map(|r| r.revenue);
    let outcome = try_differential_evolution(objective, &regime.bounds(&de.bounds), de)?;
    let mut menu = regime.menu(&outcome.argmax);
    let mut report = expected_revenue_over(&cells, &menu, cfg, ic)?;
    let mut evaluations = outcome.evaluations + 1;
    if let PricingRegime::BothGivenBuy { base_pre, base_post, upgrade } = regime {
        let without = PriceMenu::buy_only(base_pre, base_post, upgrade);
        let fallback = expected_revenue_over(&cells, &without, cfg, ic)?;
        evaluations += 1;
        if fallback.revenue >= report.revenue {
            log::info!("subscription does not help at the frozen buy prices; disabling it");
            menu = without;
            report = fallback;
        }
    }
    Ok(OptResult {
        regime,
        menu,
        report,
        restart_values: outcome.history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> DEConfig {
        DEConfig {
            generations: 200,
            restarts: 3,
            ..DEConfig::default()
        }
    }

    #[test]
    fn concave_quadratic() {
        let out = differential_evolution(|x| -(x[0] - 3.0).powi(2), &[(0.0, 10.0)], &quick()).unwrap();
        assert!((out.argmax[0] - 3.0).abs() < 1e-3, "{:?}", out.argmax);
        assert_eq!(out.history.len(), 3);
        assert_eq!(out.value, out.history.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn constant_objective() {
        let out = differential_evolution(|_| 4.5, &[(1.0, 2.0), (-3.0, 3.0)], &quick()).unwrap();
        assert_eq!(out.value, 4.5);
        assert!((1.0..=2.0).contains(&out.argmax[0]) && (-3.0..=3.0).contains(&out.argmax[1]));
    }

    #[test]
    fn rosenbrock_2d() {
        let f = |x: &[f64]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let out = differential_evolution(f, &[(-2.0, 2.0), (-2.0, 2.0)], &DEConfig { stagnation: 200, ..quick() }).unwrap();
        assert!((out.argmax[0] - 1.0).abs() < 1e-2 && (out.argmax[1] - 1.0).abs() < 2e-2, "{:?}", out.argmax);
    }

    #[test]
    fn same_seed_same_result() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + (x[1] * 2.0).cos() - 0.1 * x[0] * x[1];
        let b = [(0.0, 5.0), (0.0, 5.0)];
        let a = differential_evolution(f, &b, &quick()).unwrap();
        let c = differential_evolution(f, &b, &quick()).unwrap();
        assert_eq!(a, c);
        let other = differential_evolution(f, &b, &DEConfig { seed: 99, ..quick() }).unwrap();
        assert_ne!(a.argmax, other.argmax);
    }

    #[test]
    fn non_finite_values_are_discarded() {
        let f = |x: &[f64]| if x[0] > 5.0 { f64::NAN } else { x[0] };
        let out = differential_evolution(f, &[(0.0, 10.0)], &quick()).unwrap();
        assert!(out.value <= 5.0 && out.value > 4.99);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(differential_evolution(|_| 0.0, &[(0.0, 1.0)], &DEConfig { restarts: 0, ..quick() }).is_err());
        assert!(differential_evolution(|_| 0.0, &[(1.0, 0.0)], &quick()).is_err());
        assert!(differential_evolution(|_| 0.0, &[], &quick()).is_err());
    }

    #[test]
    fn regime_shapes() {
        let b = PriceBounds::default();
        for (regime, dim) in [
            (PricingRegime::BuyOnly, 3),
            (PricingRegime::SubOnly, 1),
            (PricingRegime::Both, 4),
            (
                PricingRegime::BothGivenBuy {
                    base_pre: 1.0,
                    base_post: 2.0,
                    upgrade: 3.0,
                },
                1,
            ),
        ] {
            assert_eq!(regime.dim(), dim);
            assert_eq!(regime.bounds(&b).len(), dim);
            let menu = regime.menu(&vec![5.0; dim]);
            match regime {
                PricingRegime::BuyOnly => assert!(menu.subscription.is_none()),
                PricingRegime::SubOnly => assert!(menu.base_pre.is_none() && menu.base_post.is_none() && menu.upgrade.is_none()),
                PricingRegime::BothGivenBuy { .. } => assert_eq!(menu, PriceMenu::all(1.0, 2.0, 3.0, 5.0)),
                PricingRegime::Both => assert_eq!(menu, PriceMenu::all(5.0, 5.0, 5.0, 5.0)),
            }
        }
    }

    #[test]
    fn frozen_buy_prices_never_lose_revenue() {
        let cfg = ProductConfig::default();
        let pop = Population::default();
        let ic = IntegrationConfig::default();
        let buy = PriceMenu::buy_only(20.0, 10.0, 5.0);
        let regime = PricingRegime::BothGivenBuy {
            base_pre: 20.0,
            base_post: 10.0,
            upgrade: 5.0,
        };
        let de = DEConfig {
            restarts: 1,
            generations: 20,
            ..quick()
        };
        let r = optimize(regime, &pop, &cfg, &ic, &de).unwrap();
        let baseline = crate::market::expected_revenue(&pop, &buy, &cfg, &ic).unwrap();
        assert!(r.report.revenue >= baseline.revenue);
        assert_eq!(r.menu.base_pre, Some(20.0));
    }
}
