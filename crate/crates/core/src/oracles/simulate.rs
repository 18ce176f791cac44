use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::equilibrium::{best_response, StrategyClass, StrategyEval};
use crate::error::Result;
use crate::market::Population;
use crate::model::{immediate_payment, immediate_reward, Action, Ownership, PriceMenu, ProductConfig, UserState, UserType};

use super::mdp::next_demand_probability;
use super::policy::ClassPolicy;
use super::OracleConfig;

/// One simulated timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimStep {
    pub n: u32,
    pub demand: bool,
    pub owned: Ownership,
    pub action: Action,
    pub reward: f64,
    pub payment: f64,
}

/// Realized path of one simulated user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub class: StrategyClass,
    pub steps: Vec<SimStep>,
    pub reward: f64,
    pub payment: f64,
}

impl SimTrace {
    pub fn utility(&self, value: f64) -> f64 {
        value * self.reward - self.payment
    }
}

/// Sample means and standard errors over simulated users.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub revenue: f64,
    pub revenue_se: f64,
    pub user_utility: f64,
    pub utility_se: f64,
    pub class_shares: [f64; 5],
    pub samples: usize,
}

/// Plays `eval`'s plan for one user with random demand losses, until the
/// horizon or until nothing more can happen.
pub fn simulate_user(
    ty: &UserType,
    eval: &StrategyEval,
    prices: &PriceMenu,
    cfg: &ProductConfig,
    rng: &mut impl Rng,
    horizon: u32,
) -> Result<SimTrace> {
    let policy = ClassPolicy::from_eval(eval, ty, cfg);
    let mut state = UserState::ARRIVED;
    let mut steps = Vec::new();
    let (mut reward, mut payment) = (0.0, 0.0);
    for n in ty.arrival..=horizon {
        let action = policy.action(n, state);
        let r = immediate_reward(action, ty, state, n, cfg)?;
        let p = immediate_payment(action, prices, n, cfg)?;
        steps.push(SimStep {
            n,
            demand: state.demand,
            owned: state.owned,
            action,
            reward: r,
            payment: p,
        });
        reward += r;
        payment += p;
        let owned = state.owned.union(action.buy);
        let used = state.demand && (action.subscribe || !owned.is_empty());
        let keep = next_demand_probability(state.demand, used, n, ty.engagement, cfg);
        state = UserState {
            demand: rng.random::<f64>() < keep,
            owned,
        };
        let settled = n + 1 >= cfg.m && n >= policy.last_active();
        if settled && (!state.demand || state.owned.is_empty()) {
            break;
        }
    }
    Ok(SimTrace {
        class: eval.class,
        steps,
        reward,
        payment,
    })
}

fn sample_discrete(rng: &mut impl Rng, pmf: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0.0;
    for (x, p) in pmf {
        acc += p;
        last = x;
        if u < acc {
            return x;
        }
    }
    last
}

/// Draws a user type from `pop`.
pub fn sample_type(pop: &Population, cfg: &ProductConfig, rng: &mut impl Rng) -> UserType {
    let arrivals = crate::market::arrival_pmf(pop.arrival_weight, cfg.n_max);
    let arrival = sample_discrete(rng, arrivals.iter().enumerate().map(|(i, &p)| (i as f64 + 1.0, p))) as u32;
    let engagement = sample_discrete(rng, pop.engagement_pmf());
    let decay = sample_discrete(rng, pop.decay_pmf());
    let value = pop.value_density(engagement).quantile(rng.random());
    UserType::new(arrival, engagement, decay, value)
}

/// Simulates `oc.mc_samples` users of `pop` playing their best responses.
/// User `i` draws from its own ChaCha8 stream, so results do not depend on
/// scheduling.
pub fn simulate_population(pop: &Population, prices: &PriceMenu, cfg: &ProductConfig, oc: &OracleConfig) -> Result<MonteCarloReport> {
    pop.validate()?;
    cfg.validate()?;
    prices.validate()?;
    let ids: Vec<u64> = (0..oc.mc_samples as u64).collect();
    let outcomes = crate::parallel::map(&ids, |&i| -> Result<(f64, f64, StrategyClass)> {
        let mut rng = ChaCha8Rng::seed_from_u64(oc.seed);
        rng.set_stream(i);
        let ty = sample_type(pop, cfg, &mut rng);
        let eval = best_response(&ty, prices, cfg);
        let horizon = oc.horizon_for(&ty, cfg);
        let trace = simulate_user(&ty, &eval, prices, cfg, &mut rng, horizon)?;
        Ok((trace.payment, trace.utility(ty.value), eval.class))
    });
    let mut revenue = Vec::with_capacity(outcomes.len());
    let mut utility = Vec::with_capacity(outcomes.len());
    let mut counts = [0usize; 5];
    for o in outcomes {
        let (p, u, class) = o?;
        revenue.push(p);
        utility.push(u);
        counts[class.index()] += 1;
    }
    let samples = revenue.len();
    let (revenue, revenue_se) = mean_se(&revenue);
    let (user_utility, utility_se) = mean_se(&utility);
    Ok(MonteCarloReport {
        revenue,
        revenue_se,
        user_utility,
        utility_se,
        class_shares: counts.map(|c| c as f64 / samples.max(1) as f64),
        samples,
    })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
