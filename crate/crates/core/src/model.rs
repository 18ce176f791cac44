//! Primitive game types: the product, the user, the price menu and the
//! per-timestep reward and payment of a single action.
//!
//! Timesteps are 1-based. The base product reaches its nominal quality `q1`
//! at `base_release` (1 by default) and the upgrade reaches `q2` at `m`, the
//! timestep it is released. Perceived quality of a component then decays by
//! the user's factor `γ` every timestep.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Publisher-side constants of the game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProductConfig {
    /// Base quality.
    pub q1: f64,
    /// Quality increment added by the upgrade.
    pub q2: f64,
    /// Timestep in which the upgrade is released and the base price changes.
    pub m: u32,
    /// Last timestep in which users arrive.
    pub n_max: u32,
    /// Timestep at which the base product has quality exactly `q1` (0 or 1).
    pub base_release: u32,
}

impl Default for ProductConfig {
    fn default() -> Self {
        Self {
            q1: 1.0,
            q2: 0.5,
            m: 6,
            n_max: 12,
            base_release: 1,
        }
    }
}

impl ProductConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.q1.is_finite() && self.q1 > 0.0) {
            return Err(ModelError::InvalidConfig(format!("q1 must be positive, got {}", self.q1)));
        }
        if !(self.q2.is_finite() && self.q2 >= 0.0) {
            return Err(ModelError::InvalidConfig(format!("q2 must be nonnegative, got {}", self.q2)));
        }
        if self.m < 1 {
            return Err(ModelError::InvalidConfig("m must be at least 1".into()));
        }
        if self.n_max < 1 {
            return Err(ModelError::InvalidConfig("n_max must be at least 1".into()));
        }
        if self.base_release > 1 {
            return Err(ModelError::InvalidConfig(format!(
                "base_release must be 0 or 1, got {}",
                self.base_release
            )));
        }
        Ok(())
    }

    /// Perceived quality of the base product at `n`.
    #[inline]
    pub(crate) fn base_quality(&self, decay: f64, n: u32) -> f64 {
        self.q1 * decay.powi(n as i32 - self.base_release as i32)
    }

    /// Perceived quality of the upgrade at `n >= m`.
    #[inline]
    pub(crate) fn upgrade_quality(&self, decay: f64, n: u32) -> f64 {
        debug_assert!(n >= self.m);
        self.q2 * decay.powi((n - self.m) as i32)
    }

    /// Quality of an access vector without the release-time check.
    #[inline]
    pub(crate) fn quality_of(&self, access: Ownership, decay: f64, n: u32) -> f64 {
        let mut q = 0.0;
        if access.base {
            q += self.base_quality(decay, n);
        }
        if access.upgrade {
            q += self.upgrade_quality(decay, n);
        }
        q
    }
}

/// Ownership (or access) vector `(o1, o2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Ownership {
    pub base: bool,
    pub upgrade: bool,
}

impl Ownership {
    pub const NONE: Ownership = Ownership { base: false, upgrade: false };
    pub const BASE: Ownership = Ownership { base: true, upgrade: false };
    pub const UPGRADE: Ownership = Ownership { base: false, upgrade: true };
    pub const FULL: Ownership = Ownership { base: true, upgrade: true };

    pub const ALL: [Ownership; 4] = [Self::NONE, Self::BASE, Self::UPGRADE, Self::FULL];

    /// Componentwise maximum.
    pub fn union(self, other: Ownership) -> Ownership {
        Ownership {
            base: self.base || other.base,
            upgrade: self.upgrade || other.upgrade,
        }
    }

    /// `[1,1] - o`: the components not yet owned.
    pub fn missing(self) -> Ownership {
        Ownership {
            base: !self.base,
            upgrade: !self.upgrade,
        }
    }

    pub fn is_empty(self) -> bool {
        !self.base && !self.upgrade
    }

    /// Dense index in `0..4`, base bit first.
    pub fn index(self) -> usize {
        self.base as usize | (self.upgrade as usize) << 1
    }
}

/// A user's type `(n_a, δ, γ, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserType {
    /// Arrival timestep `n_a`.
    pub arrival: u32,
    /// Long-term engagement `δ`: probability of keeping demand after a timestep of use.
    pub engagement: f64,
    /// Quality decay factor `γ`.
    pub decay: f64,
    /// Value `v` per unit of quality.
    pub value: f64,
}

impl UserType {
    pub fn new(arrival: u32, engagement: f64, decay: f64, value: f64) -> Self {
        Self {
            arrival,
            engagement,
            decay,
            value,
        }
    }

    pub fn validate(&self, cfg: &ProductConfig) -> Result<(), ModelError> {
        if self.arrival < 1 || self.arrival > cfg.n_max {
            return Err(ModelError::InvalidType(format!(
                "arrival {} outside 1..={}",
                self.arrival, cfg.n_max
            )));
        }
        if !(self.engagement > 0.0 && self.engagement < 1.0) {
            return Err(ModelError::InvalidType(format!("engagement {} outside (0,1)", self.engagement)));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(ModelError::InvalidType(format!("decay {} outside (0,1)", self.decay)));
        }
        if !(self.value.is_finite() && self.value >= 0.0) {
            return Err(ModelError::InvalidType(format!("value {} must be finite and >= 0", self.value)));
        }
        Ok(())
    }

    /// The same user, had they arrived at `arrival`.
    pub fn arriving_at(&self, arrival: u32) -> Self {
        Self { arrival, ..*self }
    }
}

/// A user's state `(d, o)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UserState {
    pub demand: bool,
    pub owned: Ownership,
}

impl UserState {
    pub const ARRIVED: UserState = UserState {
        demand: true,
        owned: Ownership::NONE,
    };
}

/// The publisher's menu. `None` means the option is not offered.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PriceMenu {
    /// Base price before the upgrade release.
    pub base_pre: Option<f64>,
    /// Base price from the upgrade release on.
    pub base_post: Option<f64>,
    /// Upgrade price.
    pub upgrade: Option<f64>,
    /// Per-timestep subscription price.
    pub subscription: Option<f64>,
}

impl PriceMenu {
    pub const UNAVAILABLE: PriceMenu = PriceMenu {
        base_pre: None,
        base_post: None,
        upgrade: None,
        subscription: None,
    };

    pub fn new(base_pre: Option<f64>, base_post: Option<f64>, upgrade: Option<f64>, subscription: Option<f64>) -> Self {
        Self {
            base_pre,
            base_post,
            upgrade,
            subscription,
        }
    }

    pub fn buy_only(base_pre: f64, base_post: f64, upgrade: f64) -> Self {
        Self::new(Some(base_pre), Some(base_post), Some(upgrade), None)
    }

    pub fn sub_only(subscription: f64) -> Self {
        Self::new(None, None, None, Some(subscription))
    }

    pub fn all(base_pre: f64, base_post: f64, upgrade: f64, subscription: f64) -> Self {
        Self::new(Some(base_pre), Some(base_post), Some(upgrade), Some(subscription))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, price) in self.named() {
            if let Some(p) = price {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(ModelError::InvalidPrice(format!("{name} = {p}")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn named(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("base_pre", self.base_pre),
            ("base_post", self.base_post),
            ("upgrade", self.upgrade),
            ("subscription", self.subscription),
        ]
    }

    /// Base price in effect at timestep `n`.
    pub fn base_at(&self, n: u32, cfg: &ProductConfig) -> Option<f64> {
        if n < cfg.m {
            self.base_pre
        } else {
            self.base_post
        }
    }

    /// Multiplies every offered price by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |p: Option<f64>| p.map(|x| x * factor);
        Self::new(s(self.base_pre), s(self.base_post), s(self.upgrade), s(self.subscription))
    }
}

/// One timestep's action `(S, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Action {
    pub subscribe: bool,
    pub buy: Ownership,
}

impl Action {
    pub const IDLE: Action = Action {
        subscribe: false,
        buy: Ownership::NONE,
    };

    pub fn subscribe() -> Self {
        Self {
            subscribe: true,
            buy: Ownership::NONE,
        }
    }

    pub fn buy(buy: Ownership) -> Self {
        Self { subscribe: false, buy }
    }

    /// All eight combinations of subscribe flag and buy vector.
    pub fn all() -> impl Iterator<Item = Action> {
        [false, true]
            .into_iter()
            .flat_map(|subscribe| Ownership::ALL.into_iter().map(move |buy| Action { subscribe, buy }))
    }
}

/// Realized quality of having access to `access` at timestep `n`.
pub fn quality(access: Ownership, decay: f64, n: u32, cfg: &ProductConfig) -> Result<f64, ModelError> {
    if n < 1 {
        return Err(ModelError::InvalidTimestep(n));
    }
    if access.upgrade && n < cfg.m {
        return Err(ModelError::UpgradeNotReleased { n, m: cfg.m });
    }
    Ok(cfg.quality_of(access, decay, n))
}

/// What a subscription grants at timestep `n`.
pub fn subscription_access(n: u32, cfg: &ProductConfig) -> Ownership {
    if n < cfg.m {
        Ownership::BASE
    } else {
        Ownership::FULL
    }
}

fn check_action(action: Action, n: u32, cfg: &ProductConfig) -> Result<(), ModelError> {
    if n < 1 {
        return Err(ModelError::InvalidTimestep(n));
    }
    if action.buy.upgrade && n < cfg.m {
        return Err(ModelError::IllegalAction(format!("upgrade bought at {n} before release at {}", cfg.m)));
    }
    Ok(())
}

/// Normalized immediate reward `w_n`.
pub fn immediate_reward(
    action: Action,
    ty: &UserType,
    state: UserState,
    n: u32,
    cfg: &ProductConfig,
) -> Result<f64, ModelError> {
    check_action(action, n, cfg)?;
    if state.owned.upgrade && n < cfg.m {
        return Err(ModelError::UpgradeNotReleased { n, m: cfg.m });
    }
    if !state.demand {
        return Ok(0.0);
    }
    let access = if action.subscribe {
        subscription_access(n, cfg)
    } else {
        state.owned.union(action.buy)
    };
    Ok(cfg.quality_of(access, ty.decay, n))
}

/// Immediate payment `ρ_n`.
pub fn immediate_payment(action: Action, prices: &PriceMenu, n: u32, cfg: &ProductConfig) -> Result<f64, ModelError> {
    check_action(action, n, cfg)?;
    let mut total = 0.0;
    if action.subscribe {
        total += prices.subscription.ok_or(ModelError::Unavailable("subscription"))?;
    }
    if action.buy.base {
        total += prices.base_at(n, cfg).ok_or(ModelError::Unavailable("base"))?;
    }
    if action.buy.upgrade {
        total += prices.upgrade.ok_or(ModelError::Unavailable("upgrade"))?;
    }
    Ok(total)
}

/// Immediate utility `v·w_n − ρ_n`.
pub fn immediate_utility(
    action: Action,
    ty: &UserType,
    state: UserState,
    prices: &PriceMenu,
    n: u32,
    cfg: &ProductConfig,
) -> Result<f64, ModelError> {
    let reward = immediate_reward(action, ty, state, n, cfg)?;
    let payment = immediate_payment(action, prices, n, cfg)?;
    Ok(ty.value * reward - payment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> ProductConfig {
        ProductConfig::default()
    }

    #[test]
    fn quality_examples() {
        let c = cfg();
        assert_eq!(quality(Ownership::NONE, 0.9, 3, &c).unwrap(), 0.0);
        assert_eq!(quality(Ownership::BASE, 0.9, 1, &c).unwrap(), 1.0);
        let q = quality(Ownership::FULL, 0.9, 6, &c).unwrap();
        assert_abs_diff_eq!(q, 0.9f64.powi(5) + 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q, 1.09049, epsilon = 1e-5);
    }

    #[test]
    fn quality_rejects_unreleased_upgrade() {
        let err = quality(Ownership::UPGRADE, 0.9, 5, &cfg()).unwrap_err();
        assert!(matches!(err, ModelError::UpgradeNotReleased { n: 5, m: 6 }));
    }

    #[test]
    fn release_timestep_quality_equals_nominal() {
        let c = cfg();
        assert_eq!(quality(Ownership::UPGRADE, 0.7, c.m, &c).unwrap(), c.q2);
        let zero_based = ProductConfig { base_release: 0, ..c };
        assert_eq!(quality(Ownership::BASE, 0.9, 1, &zero_based).unwrap(), 0.9);
    }

    #[test]
    fn subscription_access_switches_at_release() {
        let c = cfg();
        assert_eq!(subscription_access(1, &c), Ownership::BASE);
        assert_eq!(subscription_access(5, &c), Ownership::BASE);
        assert_eq!(subscription_access(6, &c), Ownership::FULL);
        assert_eq!(subscription_access(100, &c), Ownership::FULL);
    }

    #[test]
    fn reward_examples() {
        let c = cfg();
        let ty = UserType::new(1, 0.5, 0.9, 10.0);
        let lapsed = UserState {
            demand: false,
            owned: Ownership::BASE,
        };
        assert_eq!(immediate_reward(Action::subscribe(), &ty, lapsed, 3, &c).unwrap(), 0.0);

        let sub = immediate_reward(Action::subscribe(), &ty, UserState::ARRIVED, 3, &c).unwrap();
        assert_eq!(sub, quality(Ownership::BASE, 0.9, 3, &c).unwrap());

        let owner = UserState {
            demand: true,
            owned: Ownership::BASE,
        };
        let r = immediate_reward(Action::buy(Ownership::UPGRADE), &ty, owner, 7, &c).unwrap();
        assert!((r - quality(Ownership::FULL, 0.9, 7, &c).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn subscribing_and_owning_base_match_before_release() {
        let c = cfg();
        let ty = UserType::new(1, 0.5, 0.85, 3.0);
        let owner = UserState {
            demand: true,
            owned: Ownership::BASE,
        };
        for n in 1..c.m {
            let a = immediate_reward(Action::subscribe(), &ty, UserState::ARRIVED, n, &c).unwrap();
            let b = immediate_reward(Action::IDLE, &ty, owner, n, &c).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn payment_examples() {
        let c = cfg();
        let none = PriceMenu::UNAVAILABLE;
        assert_eq!(immediate_payment(Action::IDLE, &none, 1, &c).unwrap(), 0.0);
        let sub = PriceMenu::sub_only(14.66);
        assert_eq!(immediate_payment(Action::subscribe(), &sub, 2, &c).unwrap(), 14.66);
        let buy = PriceMenu::buy_only(45.82, 21.8, 18.06);
        let p = immediate_payment(Action::buy(Ownership::FULL), &buy, 6, &c).unwrap();
        assert_abs_diff_eq!(p, 39.86, epsilon = 1e-12);
        assert_eq!(immediate_payment(Action::buy(Ownership::BASE), &buy, 5, &c).unwrap(), 45.82);
    }

    #[test]
    fn payment_rejects_unavailable_and_illegal() {
        let c = cfg();
        let buy = PriceMenu::buy_only(45.82, 21.8, 18.06);
        assert!(matches!(
            immediate_payment(Action::subscribe(), &buy, 1, &c),
            Err(ModelError::Unavailable("subscription"))
        ));
        assert!(matches!(
            immediate_payment(Action::buy(Ownership::UPGRADE), &buy, 2, &c),
            Err(ModelError::IllegalAction(_))
        ));
    }

    #[test]
    fn utility_is_value_times_reward_minus_payment() {
        let c = cfg();
        let ty = UserType::new(2, 0.5, 0.9, 17.0);
        let menu = PriceMenu::all(40.0, 20.0, 10.0, 5.0);
        for n in 1..12 {
            for action in Action::all().filter(|a| !a.buy.upgrade || n >= c.m) {
                let u = immediate_utility(action, &ty, UserState::ARRIVED, &menu, n, &c).unwrap();
                let w = immediate_reward(action, &ty, UserState::ARRIVED, n, &c).unwrap();
                let p = immediate_payment(action, &menu, n, &c).unwrap();
                assert_eq!(u, ty.value * w - p);
            }
        }
    }

    #[test]
    fn menu_validation() {
        assert!(PriceMenu::all(1.0, 2.0, 3.0, 4.0).validate().is_ok());
        assert!(PriceMenu::sub_only(-1.0).validate().is_err());
        assert!(PriceMenu::sub_only(f64::INFINITY).validate().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(ProductConfig { q1: 0.0, ..cfg() }.validate().is_err());
        assert!(ProductConfig { m: 0, ..cfg() }.validate().is_err());
        assert!(ProductConfig { base_release: 2, ..cfg() }.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quality_strictly_decreasing(decay in 0.05f64..0.99, n in 6u32..60, base in any::<bool>(), upgrade in any::<bool>()) {
                prop_assume!(base || upgrade);
                let c = ProductConfig::default();
                let o = Ownership { base, upgrade };
                let now = quality(o, decay, n, &c).unwrap();
                let next = quality(o, decay, n + 1, &c).unwrap();
                prop_assert!(next < now);
            }

            #[test]
            fn utility_scale_equivariant(
                scale in 0.1f64..10.0,
                value in 0.0f64..50.0,
                n in 1u32..20,
                sub in any::<bool>(),
                b1 in any::<bool>(),
                b2 in any::<bool>(),
            ) {
                let c = ProductConfig::default();
                let action = Action { subscribe: sub, buy: Ownership { base: b1, upgrade: b2 && n >= c.m } };
                let ty = UserType::new(1, 0.5, 0.9, value);
                let scaled_ty = UserType { value: value * scale, ..ty };
                let menu = PriceMenu::all(30.0, 15.0, 12.0, 4.0);
                let u = immediate_utility(action, &ty, UserState::ARRIVED, &menu, n, &c).unwrap();
                let us = immediate_utility(action, &scaled_ty, UserState::ARRIVED, &menu.scaled(scale), n, &c).unwrap();
                prop_assert!((us - scale * u).abs() <= 1e-9 * (1.0 + us.abs()));
            }
        }
    }
}
