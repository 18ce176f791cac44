//! Closed-form user equilibrium.
//!
//! A user's optimal plan is one of five classes `(α1, α2)`: before the
//! upgrade release they either buy the base product on arrival (`b`) or
//! subscribe while the marginal benefit is positive (`s`); from the release
//! on they buy everything still missing (`b`), keep subscribing without
//! buying (`s`), or subscribe for a while and then buy only the base product
//! (`b_b`). Every class reduces to a handful of thresholds and geometric
//! sums, so evaluating a user is O(m) work.
//!
//! Demand model used throughout: a user who has demand and uses the product
//! in a timestep keeps demand into the next one with probability `δ`; a user
//! without access keeps demand; at the release timestep `m` a user who lost
//! demand regains it with probability `δ`.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{Ownership, PriceMenu, ProductConfig, UserType};

/// The five potentially optimal strategy classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyClass {
    /// Buy the base on arrival, buy the upgrade at release.
    BuyBuy,
    /// Buy the base on arrival, subscribe for the upgrade after release.
    BuySubscribe,
    /// Never buy; subscribe while worthwhile.
    SubscribeOnly,
    /// Subscribe before release, buy everything at release.
    SubscribeBuy,
    /// Subscribe, then buy only the base product after release.
    SubscribeBuyBase,
}

impl StrategyClass {
    /// Canonical order, used for indexing share vectors.
    pub const ALL: [StrategyClass; 5] = [
        StrategyClass::BuyBuy,
        StrategyClass::BuySubscribe,
        StrategyClass::SubscribeOnly,
        StrategyClass::SubscribeBuy,
        StrategyClass::SubscribeBuyBase,
    ];

    /// Preference order among classes with equal utility.
    pub const TIE_ORDER: [StrategyClass; 5] = [
        StrategyClass::BuyBuy,
        StrategyClass::SubscribeBuy,
        StrategyClass::BuySubscribe,
        StrategyClass::SubscribeBuyBase,
        StrategyClass::SubscribeOnly,
    ];

    pub fn index(self) -> usize {
        match self {
            StrategyClass::BuyBuy => 0,
            StrategyClass::BuySubscribe => 1,
            StrategyClass::SubscribeOnly => 2,
            StrategyClass::SubscribeBuy => 3,
            StrategyClass::SubscribeBuyBase => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StrategyClass::BuyBuy => "BB",
            StrategyClass::BuySubscribe => "BS",
            StrategyClass::SubscribeOnly => "SS",
            StrategyClass::SubscribeBuy => "SB",
            StrategyClass::SubscribeBuyBase => "SBb",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }

    pub fn first(self) -> FirstPhase {
        match self {
            StrategyClass::BuyBuy | StrategyClass::BuySubscribe => FirstPhase::Buy,
            _ => FirstPhase::Subscribe,
        }
    }

    pub fn tail(self) -> PostStrategy {
        match self {
            StrategyClass::BuyBuy | StrategyClass::SubscribeBuy => PostStrategy::BuyAll,
            StrategyClass::BuySubscribe | StrategyClass::SubscribeOnly => PostStrategy::Subscribe,
            StrategyClass::SubscribeBuyBase => PostStrategy::SubscribeThenBase,
        }
    }
}

/// `α1`: what the user does before the upgrade release (or at arrival, for late arrivals).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstPhase {
    Buy,
    Subscribe,
}

/// `α2`: what the user does from `max(n_a, m)` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostStrategy {
    BuyAll,
    Subscribe,
    SubscribeThenBase,
}

/// Closed-form value of one strategy class for one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyEval {
    pub class: StrategyClass,
    /// Normalized expected reward `w`.
    pub reward: f64,
    /// Expected payment `ρ`.
    pub payment: f64,
    /// `v·w − ρ`, or `-inf` when infeasible.
    pub utility: f64,
    /// One past the last pre-release subscription timestep.
    pub n1: u32,
    /// One past the last post-release subscription timestep.
    pub n2: u32,
    /// Post-release buy timestep of `SubscribeBuyBase`.
    pub n3: u32,
    pub feasible: bool,
}

impl StrategyEval {
    pub(crate) fn infeasible(class: StrategyClass) -> Self {
        StrategyEval {
            class,
            reward: 0.0,
            payment: 0.0,
            utility: f64::NEG_INFINITY,
            n1: 0,
            n2: 0,
            n3: 0,
            feasible: false,
        }
    }
}

/// Reward and payment from the release timestep on, for a user arriving at `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Continuation {
    pub reward: f64,
    pub payment: f64,
}

impl Continuation {
    pub fn utility(&self, value: f64) -> f64 {
        value * self.reward - self.payment
    }
}

/// `(1 − r^k) / (1 − r)` for `0 <= r < 1`.
#[inline]
fn geometric(ratio: f64, steps: u32) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    (1.0 - pow(ratio, steps)) / (1.0 - ratio)
}

#[inline]
fn pow(x: f64, k: u32) -> f64 {
    x.powi(k.min(i32::MAX as u32) as i32)
}

/// Expected subscription payment of a user who has demand at `from` and
/// subscribes in every timestep before `until` in which they still have demand.
pub fn subscription_payment(from: u32, until: u32, engagement: f64, price: f64) -> f64 {
    debug_assert!(until >= from);
    price * geometric(engagement, until - from)
}

/// Probability that a user who arrived before `m` and used the product on
/// `[from, until)` (and nothing after, before `m`) has demand at `m`.
pub fn demand_at_release(from: u32, until: u32, engagement: f64) -> f64 {
    debug_assert!(until >= from);
    let kept = pow(engagement, until - from);
    kept + engagement * (1.0 - kept)
}

/// Expected normalized reward before `m` for a user arriving at `from < m`
/// who subscribes on `[from, until)` and afterwards owns the base product
/// (if `own_base`) or nothing.
pub fn pre_release_reward(from: u32, until: u32, own_base: bool, ty: &UserType, cfg: &ProductConfig) -> f64 {
    debug_assert!(from <= until && until <= cfg.m);
    let gd = ty.decay * ty.engagement;
    let mut w = cfg.base_quality(ty.decay, from) * geometric(gd, until - from);
    if own_base && until < cfg.m {
        w += pow(ty.engagement, until - from) * cfg.base_quality(ty.decay, until) * geometric(gd, cfg.m - until);
    }
    w
}

/// Expected normalized reward from `from >= m` on for a user with demand at
/// `from` who subscribes on `[from, until)` and afterwards uses only what
/// they own.
pub fn post_release_reward(from: u32, until: u32, owned: Ownership, ty: &UserType, cfg: &ProductConfig) -> f64 {
    debug_assert!(from >= cfg.m && until >= from);
    let gd = ty.decay * ty.engagement;
    let mut w = cfg.quality_of(Ownership::FULL, ty.decay, from) * geometric(gd, until - from);
    if !owned.is_empty() {
        let kept = pow(ty.engagement, until - from);
        if kept > 0.0 {
            w += kept * cfg.quality_of(owned, ty.decay, until) / (1.0 - gd);
        }
    }
    w
}

/// Timestep index from which the scans give up: by then both `γ^k` and
/// `δ^k` are below 1e−18, so nothing after it can change any expectation.
fn scan_cap(start: u32, ty: &UserType) -> u32 {
    let slowest = ty.decay.max(ty.engagement);
    let span = (-41.5 / slowest.ln()).ceil().clamp(1.0, 1.0e7) as u32;
    start.saturating_add(span)
}

/// A threshold timestep and the value `v` up to which it stays unchanged.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Threshold {
    pub at: u32,
    /// Smallest value above the current one at which `at` may change.
    pub valid_below: f64,
}

impl Threshold {
    fn fixed(at: u32) -> Self {
        Threshold {
            at,
            valid_below: f64::INFINITY,
        }
    }
}

/// Smallest `n >= start` with `value·quality(access, n) < bound`, capped.
/// `quality(access, ·)` is a single decaying exponential, which gives an
/// analytic starting point for the scan.
fn first_below(start: u32, access: Ownership, bound: f64, ty: &UserType, cfg: &ProductConfig) -> Threshold {
    let cap = scan_cap(start, ty);
    if !(bound > 0.0) {
        return Threshold::fixed(cap);
    }
    let lhs = |n: u32| ty.value * cfg.quality_of(access, ty.decay, n);
    let l0 = lhs(start);
    let mut n = if l0 < bound {
        start
    } else {
        let k = ((l0 / bound).ln() / -ty.decay.ln()).ceil();
        let mut n = start.saturating_add(k.clamp(0.0, (cap - start) as f64) as u32);
        while n > start && lhs(n - 1) < bound {
            n -= 1;
        }
        n
    };
    while n < cap && !(lhs(n) < bound) {
        n += 1;
    }
    let q = cfg.quality_of(access, ty.decay, n);
    let valid_below = if n < cap && q > 0.0 { bound / q } else { f64::INFINITY };
    Threshold { at: n, valid_below }
}

pub(crate) fn n2_threshold(start: u32, owned: Ownership, ty: &UserType, prices: &PriceMenu, cfg: &ProductConfig) -> Threshold {
    match prices.subscription {
        None => Threshold::fixed(start),
        Some(ps) => first_below(start, owned.missing(), ps, ty, cfg),
    }
}

pub(crate) fn n3_threshold(start: u32, base_post: f64, ty: &UserType, prices: &PriceMenu, cfg: &ProductConfig) -> Threshold {
    match prices.subscription {
        None => Threshold::fixed(start),
        Some(ps) => first_below(start, Ownership::UPGRADE, ps - (1.0 - ty.engagement) * base_post, ty, cfg),
    }
}

/// Pre-release stopping time: the first `n` in `[n_a, m)` where the marginal
/// utility of subscribing, `v·q1(n) − pS − (1−δ)²·(v·w' − ρ')`, is negative.
pub(crate) fn n1_threshold(ty: &UserType, prices: &PriceMenu, cfg: &ProductConfig, cont: &Continuation) -> Threshold {
    let ps = match prices.subscription {
        None => return Threshold::fixed(ty.arrival),
        Some(ps) => ps,
    };
    let loss = (1.0 - ty.engagement).powi(2);
    let bound = ps - loss * cont.payment;
    let v = ty.value;
    let mut valid_below = f64::INFINITY;
    for n in ty.arrival..cfg.m {
        let slope = cfg.base_quality(ty.decay, n) - loss * cont.reward;
        let triggered = v * slope < bound;
        // the predicate `v·slope < bound` flips at bound/slope
        if slope != 0.0 {
            let root = bound / slope;
            if root > v {
                valid_below = valid_below.min(root);
            }
        }
        if triggered {
            return Threshold { at: n, valid_below };
        }
    }
    Threshold { at: cfg.m, valid_below }
}

/// `n2`: end of post-release subscription for a user owning `owned` who buys nothing more.
pub fn threshold_n2(owned: Ownership, ty: &UserType, prices: &PriceMenu, cfg: &ProductConfig) -> u32 {
    n2_threshold(ty.arrival.max(cfg.m), owned, ty, prices, cfg).at
}

/// `n3`: post-release timestep at which a subscribe-then-buy-base user buys.
pub fn threshold_n3(ty: &UserType, prices: &PriceMenu, cfg: &ProductConfig) -> Result<u32, ModelError> {
    let base_post = prices.base_post.ok_or(ModelError::Unavailable("base"))?;
    Ok(n3_threshold(ty.arrival.max(cfg.m), base_post, ty, prices, cfg).at)
}

/// `n1`: end of pre-release subscription given the continuation from `m`.
pub fn threshold_n1(
    _tail: PostStrategy,
    ty: &UserType,
    prices: &PriceMenu,
    cfg: &ProductConfig,
    cont: &Continuation,
) -> u32 {
    if ty.arrival >= cfg.m {
        return cfg.m;
    }
    n1_threshold(ty, prices, cfg, cont).at
}

/// Post-release phase outcome for a user with demand at `start`.
#[derive(Debug, Clone, Copy)]
struct Phase {
    reward: f64,
    payment: f64,
    n2: u32,
    n3: u32,
    valid_below: f64,
}

fn post_phase(
    tail: PostStrategy,
    start: u32,
    owned: Ownership,
    ty: &UserType,
    prices: &PriceMenu,
    cfg: &ProductConfig,
) -> Option<Phase> {
    match tail {
        PostStrategy::BuyAll => {
            let mut payment = prices.upgrade?;
            if !owned.base {
                payment += prices.base_post?;
            }
            Some(Phase {
                reward: post_release_reward(start, start, Ownership::FULL, ty, cfg),
                payment,
                n2: start,
                n3: start,
                valid_below: f64::INFINITY,
            })
        }
        PostStrategy::Subscribe => {
            let t = n2_threshold(start, owned, ty, prices, cfg);
            let payment = match prices.subscription {
                Some(ps) => subscription_payment(start, t.at, ty.engagement, ps),
                None => 0.0,
            };
            Some(Phase {
                reward: post_release_reward(start, t.at, owned, ty, cfg),
                payment,
                n2: t.at,
                n3: start,
                valid_below: t.valid_below,
            })
        }
        PostStrategy::SubscribeThenBase => {
            debug_assert!(owned.is_empty());
            let base = prices.base_post?;
            let t = n3_threshold(start, base, ty, prices, cfg);
            let sub = match prices.subscription {
                Some(ps) => subscription_payment(start, t.at, ty.engagement, ps),
                None => 0.0,
            };
            Some(Phase {
                reward: post_release_reward(start, t.at, Ownership::BASE, ty, cfg),
                payment: sub + pow(ty.engagement, t.at - start) * base,
                n2: start,
                n3: t.at,
                valid_below: t.valid_below,
            })
        }
    }
}

/// Reward and payment from `m` on of the given post-release strategy for a
/// user arriving at `m` with nothing owned.
pub fn continuation(tail: PostStrategy, ty: &UserType, prices: &PriceMenu, cfg: &ProductConfig) -> Option<Continuation> {
    let start = ty.arrival.max(cfg.m);
    post_phase(tail, start, Ownership::NONE, ty, prices, cfg).map(|p| Continuation {
        reward: p.reward,
        payment: p.payment,
    })
}

/// Strategy value together with the value `v` up to which its thresholds
/// stay fixed (the class utility is linear in `v` until then).
pub(crate) fn evaluate_class(
    class: StrategyClass,
    ty: &UserType,
    prices: &PriceMenu,
    cfg: &ProductConfig,
) -> (StrategyEval, f64) {
    let m = cfg.m;
    let start = ty.arrival.max(m);
    let before_release = ty.arrival < m;

    let (pre_reward, pre_payment, survive, n1, pre_valid, tail) = match class.first() {
        FirstPhase::Buy => {
            let price = if before_release { prices.base_pre } else { prices.base_post };
            let Some(price) = price else {
                return (StrategyEval::infeasible(class), f64::INFINITY);
            };
            let Some(tail) = post_phase(class.tail(), start, Ownership::BASE, ty, prices, cfg) else {
                return (StrategyEval::infeasible(class), f64::INFINITY);
            };
            if before_release {
                let reward = pre_release_reward(ty.arrival, ty.arrival, true, ty, cfg);
                let survive = demand_at_release(ty.arrival, m, ty.engagement);
                (reward, price, survive, ty.arrival, f64::INFINITY, tail)
            } else {
                (0.0, price, 1.0, m, f64::INFINITY, tail)
            }
        }
        FirstPhase::Subscribe => {
            let Some(tail) = post_phase(class.tail(), start, Ownership::NONE, ty, prices, cfg) else {
                return (StrategyEval::infeasible(class), f64::INFINITY);
            };
            if before_release {
                let cont = Continuation {
                    reward: tail.reward,
                    payment: tail.payment,
                };
                let t = n1_threshold(ty, prices, cfg, &cont);
                let reward = pre_release_reward(ty.arrival, t.at, false, ty, cfg);
                let payment = match prices.subscription {
                    Some(ps) => subscription_payment(ty.arrival, t.at, ty.engagement, ps),
                    None => 0.0,
                };
                let survive = demand_at_release(ty.arrival, t.at, ty.engagement);
                (reward, payment, survive, t.at, t.valid_below, tail)
            } else {
                (0.0, 0.0, 1.0, m, f64::INFINITY, tail)
            }
        }
    };
    let reward = pre_reward + survive * tail.reward;
    let payment = pre_payment + survive * tail.payment;
    let eval = StrategyEval {
        class,
        reward,
        payment,
        utility: ty.value * reward - payment,
        n1,
        n2: tail.n2,
        n3: tail.n3,
        feasible: true,
    };
    (eval, pre_valid.min(tail.valid_below))
}

/// Closed-form reward, payment and utility of `class` for user `ty`.
pub fn strategy_value(class: StrategyClass, ty: &UserType, prices: &PriceMenu, cfg: &ProductConfig) -> StrategyEval {
    evaluate_class(class, ty, prices, cfg).0
}

/// All five class evaluations, in [`StrategyClass::ALL`] order.
pub fn all_strategies(ty: &UserType, prices: &PriceMenu, cfg: &ProductConfig) -> [StrategyEval; 5] {
    StrategyClass::ALL.map(|c| strategy_value(c, ty, prices, cfg))
}

/// Picks the utility-maximizing evaluation; ties go to the earlier class in
/// [`StrategyClass::TIE_ORDER`].
pub(crate) fn pick_best(evals: &[StrategyEval; 5]) -> StrategyEval {
    let mut best = evals[StrategyClass::TIE_ORDER[0].index()];
    for class in &StrategyClass::TIE_ORDER[1..] {
        let e = evals[class.index()];
        if e.feasible && (!best.feasible || e.utility > best.utility) {
            best = e;
        }
    }
    best
}

/// The utility-maximizing strategy class for user `ty` under `prices`.
pub fn best_response(ty: &UserType, prices: &PriceMenu, cfg: &ProductConfig) -> StrategyEval {
    pick_best(&all_strategies(ty, prices, cfg))
}
