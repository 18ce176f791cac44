use crate::error::ModelError;
use crate::model::{immediate_payment, immediate_reward, Action, Ownership, PriceMenu, ProductConfig, UserState, UserType};

use super::OracleConfig;

/// Optimal expected utility of the truncated user MDP and the expected
/// reward and payment of the optimal policy found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpValue {
    pub utility: f64,
    pub reward: f64,
    pub payment: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Node {
    utility: f64,
    reward: f64,
    payment: f64,
}

/// Probability of having demand in timestep `n + 1` given the demand flag at
/// `n` and whether the product was used at `n`.
pub(crate) fn next_demand_probability(demand: bool, used: bool, n: u32, engagement: f64, cfg: &ProductConfig) -> f64 {
    let kept = match (demand, used) {
        (false, _) => 0.0,
        (true, true) => engagement,
        (true, false) => 1.0,
    };
    if n + 1 == cfg.m {
        kept + (1.0 - kept) * engagement
    } else {
        kept
    }
}

/// Whether `action` is allowed in `state` at `n` under `prices`. Buying the
/// upgrade requires owning (or simultaneously buying) the base product.
pub(crate) fn legal(action: Action, state: UserState, n: u32, prices: &PriceMenu, cfg: &ProductConfig) -> bool {
    if action.subscribe && prices.subscription.is_none() {
        return false;
    }
    if action.buy.base && prices.base_at(n, cfg).is_none() {
        return false;
    }
    if action.buy.upgrade && (n < cfg.m || prices.upgrade.is_none() || !state.owned.union(action.buy).base) {
        return false;
    }
    true
}

/// Exact optimum of the user MDP truncated after the oracle horizon, by
/// backward induction over states `(n, d, o1, o2)` and all eight actions.
pub fn mdp_best_utility(
    ty: &UserType,
    prices: &PriceMenu,
    cfg: &ProductConfig,
    oc: &OracleConfig,
) -> Result<MdpValue, ModelError> {
    ty.validate(cfg)?;
    prices.validate()?;
    let horizon = oc.horizon_for(ty, cfg);
    let required = cfg.m.max(ty.arrival) + 1;
    if horizon < required {
        return Err(ModelError::HorizonTooSmall { horizon, required });
    }

    // values[d][o] for the following timestep
    let mut next = [[Node::default(); 4]; 2];
    for n in (ty.arrival..=horizon).rev() {
        let mut current = [[Node::default(); 4]; 2];
        for demand in [false, true] {
            for owned in Ownership::ALL {
                if owned.upgrade && n < cfg.m {
                    continue;
                }
                let state = UserState { demand, owned };
                let mut best: Option<Node> = None;
                for action in Action::all() {
                    if !legal(action, state, n, prices, cfg) {
                        continue;
                    }
                    let reward = immediate_reward(action, ty, state, n, cfg)?;
                    let payment = immediate_payment(action, prices, n, cfg)?;
                    let after = owned.union(action.buy);
                    let used = demand && (action.subscribe || !after.is_empty());
                    let keep = next_demand_probability(demand, used, n, ty.engagement, cfg);
                    let hi = next[1][after.index()];
                    let lo = next[0][after.index()];
                    let node = Node {
                        utility: ty.value * reward - payment + keep * hi.utility + (1.0 - keep) * lo.utility,
                        reward: reward + keep * hi.reward + (1.0 - keep) * lo.reward,
                        payment: payment + keep * hi.payment + (1.0 - keep) * lo.payment,
                    };
                    if best.is_none_or(|b| node.utility > b.utility) {
                        best = Some(node);
                    }
                }
                current[demand as usize][owned.index()] = best.expect("idling is always legal");
            }
        }
        next = current;
    }
    let start = next[1][Ownership::NONE.index()];
    Ok(MdpValue {
        utility: start.utility,
        reward: start.reward,
        payment: start.payment,
    })
}
