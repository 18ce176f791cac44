//! Direct summation and demand-path enumeration for the building blocks of
//! the closed-form strategy values.

use crate::model::{Ownership, ProductConfig, UserType};

/// Sum of the remaining terms below which a summation is cut off.
const CUTOFF: f64 = 1e-16;

/// Expected subscription payments, summed timestep by timestep.
pub fn subscription_payment(from: u32, until: u32, engagement: f64, price: f64) -> f64 {
    let mut alive = 1.0;
    let mut total = 0.0;
    for _ in from..until {
        total += alive * price;
        alive *= engagement;
    }
    total
}

/// Probability of demand at the release timestep, by enumerating every
/// demand path over the `until − from` timesteps of use.
pub fn demand_at_release(from: u32, until: u32, engagement: f64) -> f64 {
    let steps = until - from;
    if steps > 20 {
        // aggregate over paths: survive all steps, or regain demand at release
        let kept = (0..steps).fold(1.0, |p, _| p * engagement);
        return kept + (1.0 - kept) * engagement;
    }
    let mut total = 0.0;
    for path in 0u32..(1 << steps) {
        // bit i set: demand survives timestep i of use. Once demand is gone
        // the product is not used again, so only prefixes of ones are paths.
        let survived = path.trailing_ones().min(steps);
        if path != (1u32 << survived) - 1 {
            continue;
        }
        let mut p = (0..survived).fold(1.0, |p, _| p * engagement);
        if survived < steps {
            p *= 1.0 - engagement;
        }
        let demand_at_m = if survived == steps { 1.0 } else { engagement };
        total += p * demand_at_m;
    }
    total
}

/// Reward before `m` of a user who subscribes on `[from, until)` and then
/// owns the base product (if `own_base`) or nothing, summed per timestep.
pub fn pre_release_reward(from: u32, until: u32, own_base: bool, ty: &UserType, cfg: &ProductConfig) -> f64 {
    let mut alive = 1.0;
    let mut total = 0.0;
    for n in from..cfg.m {
        let access = n < until || own_base;
        if access {
            total += alive * cfg.quality_of(Ownership::BASE, ty.decay, n);
            alive *= ty.engagement;
        }
    }
    total
}

/// Reward from `from >= m` on of a user who subscribes on `[from, until)`
/// and then uses only what they own, summed until the tail is negligible.
pub fn post_release_reward(from: u32, until: u32, owned: Ownership, ty: &UserType, cfg: &ProductConfig) -> f64 {
    let mut alive = 1.0;
    let mut total = 0.0;
    let mut n = from;
    loop {
        let access = if n < until { Ownership::FULL } else { owned };
        if access.is_empty() {
            break;
        }
        let q = cfg.quality_of(access, ty.decay, n);
        total += alive * q;
        alive *= ty.engagement;
        if n >= until && alive * q < CUTOFF * (1.0 - ty.decay * ty.engagement) {
            break;
        }
        n += 1;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_enumeration_examples() {
        assert_eq!(demand_at_release(3, 3, 0.4), 1.0);
        assert!((demand_at_release(1, 3, 0.5) - 0.625).abs() < 1e-15);
        assert!((subscription_payment(1, 3, 0.5, 10.0) - 15.0).abs() < 1e-15);
    }

    #[test]
    fn reward_sums_examples() {
        let cfg = ProductConfig { m: 3, ..ProductConfig::default() };
        let ty = UserType::new(1, 0.5, 0.9, 1.0);
        assert!((pre_release_reward(1, 1, true, &ty, &cfg) - 1.45).abs() < 1e-15);
        assert!((pre_release_reward(1, 3, false, &ty, &cfg) - 1.45).abs() < 1e-15);
        assert_eq!(post_release_reward(3, 3, Ownership::NONE, &ty, &cfg), 0.0);
    }
}
