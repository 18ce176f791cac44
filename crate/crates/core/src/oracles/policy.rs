use crate::equilibrium::{FirstPhase, PostStrategy, StrategyClass, StrategyEval};
use crate::error::ModelError;
use crate::model::{immediate_payment, immediate_reward, Action, Ownership, PriceMenu, ProductConfig, UserState, UserType};

use super::mdp::next_demand_probability;

/// The explicit per-timestep plan behind a strategy class and its thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassPolicy {
    pub class: StrategyClass,
    pub arrival: u32,
    pub m: u32,
    pub n1: u32,
    pub n2: u32,
    pub n3: u32,
}

impl ClassPolicy {
    pub fn from_eval(eval: &StrategyEval, ty: &UserType, cfg: &ProductConfig) -> Self {
        Self {
            class: eval.class,
            arrival: ty.arrival,
            m: cfg.m,
            n1: eval.n1,
            n2: eval.n2,
            n3: eval.n3,
        }
    }

    fn start(&self) -> u32 {
        self.arrival.max(self.m)
    }

    /// Last timestep in which the plan may act; idle afterwards.
    pub fn last_active(&self) -> u32 {
        self.start().max(self.n2).max(self.n3)
    }

    /// Action taken at `n` in `state`. Users without demand never act.
    pub fn action(&self, n: u32, state: UserState) -> Action {
        if !state.demand || n < self.arrival {
            return Action::IDLE;
        }
        if n < self.m {
            return match self.class.first() {
                FirstPhase::Buy if n == self.arrival => Action::buy(Ownership::BASE),
                FirstPhase::Buy => Action::IDLE,
                FirstPhase::Subscribe if n < self.n1 => Action::subscribe(),
                FirstPhase::Subscribe => Action::IDLE,
            };
        }
        let start = self.start();
        let mut action = Action::IDLE;
        if self.class.first() == FirstPhase::Buy && self.arrival >= self.m && n == self.arrival {
            action.buy.base = true;
        }
        match self.class.tail() {
            PostStrategy::BuyAll => {
                if n == start {
                    action.buy = action.buy.union(state.owned.union(action.buy).missing());
                }
            }
            PostStrategy::Subscribe => action.subscribe = n < self.n2,
            PostStrategy::SubscribeThenBase => {
                action.subscribe = n < self.n3;
                if n == self.n3 {
                    action.buy.base = true;
                }
            }
        }
        action
    }
}

/// Expected reward and payment of a fixed plan, by propagating the exact
/// distribution over `(d, o)` forward from arrival to `horizon`.
pub fn evaluate_policy(
    policy: &ClassPolicy,
    ty: &UserType,
    prices: &PriceMenu,
    cfg: &ProductConfig,
    horizon: u32,
) -> Result<(f64, f64), ModelError> {
    // probability mass per [demand][ownership]
    let mut mass = [[0.0f64; 4]; 2];
    mass[1][Ownership::NONE.index()] = 1.0;
    let mut reward = 0.0;
    let mut payment = 0.0;
    for n in ty.arrival..=horizon {
        let mut next = [[0.0f64; 4]; 2];
        for demand in [false, true] {
            for owned in Ownership::ALL {
                let p = mass[demand as usize][owned.index()];
                if p == 0.0 {
                    continue;
                }
                let state = UserState { demand, owned };
                let action = policy.action(n, state);
                reward += p * immediate_reward(action, ty, state, n, cfg)?;
                payment += p * immediate_payment(action, prices, n, cfg)?;
                let after = owned.union(action.buy);
                let used = demand && (action.subscribe || !after.is_empty());
                let keep = next_demand_probability(demand, used, n, ty.engagement, cfg);
                next[1][after.index()] += p * keep;
                next[0][after.index()] += p * (1.0 - keep);
            }
        }
        mass = next;
    }
    Ok((reward, payment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::strategy_value;
    use crate::oracles::OracleConfig;

    #[test]
    fn forward_propagation_matches_closed_form_for_every_class() {
        let cfg = ProductConfig::default();
        let oc = OracleConfig::default();
        let menus = [
            PriceMenu::all(96.98, 35.19, 47.96, 17.71),
            PriceMenu::all(40.0, 60.0, 5.0, 4.0),
            PriceMenu::buy_only(45.82, 21.8, 18.06),
            PriceMenu::sub_only(14.66),
        ];
        for menu in &menus {
            for arrival in [1, 3, 5, 6, 7, 12] {
                for &(delta, gamma) in &[(0.5, 0.9), (0.9, 0.95), (0.3, 0.85)] {
                    for v in [0.0, 7.0, 25.0, 49.0] {
                        let ty = UserType::new(arrival, delta, gamma, v);
                        for class in StrategyClass::ALL {
                            let e = strategy_value(class, &ty, menu, &cfg);
                            if !e.feasible {
                                continue;
                            }
                            let policy = ClassPolicy::from_eval(&e, &ty, &cfg);
                            let h = oc.horizon_for(&ty, &cfg).max(policy.last_active() + 1);
                            let (w, rho) = evaluate_policy(&policy, &ty, menu, &cfg, h).unwrap();
                            assert!((w - e.reward).abs() < 1e-9, "{class:?} {ty:?} {menu:?}: w {w} vs {}", e.reward);
                            assert!((rho - e.payment).abs() < 1e-7, "{class:?} {ty:?} {menu:?}: rho {rho} vs {}", e.payment);
                        }
                    }
                }
            }
        }
    }
}
