use licensing_core::experiments::verify::{Analytic, ClosedForms};
use licensing_core::model::quality;
use licensing_core::{Ownership, ProductConfig, UserType};

/// Closed forms whose post-release ownership term drops the probability that
/// demand survives the subscription spell.
pub struct NoSurvivalFactor;

impl ClosedForms for NoSurvivalFactor {
    fn subscription_payment(&self, from: u32, until: u32, engagement: f64, price: f64) -> f64 {
        Analytic.subscription_payment(from, until, engagement, price)
    }
    fn demand_at_release(&self, from: u32, until: u32, engagement: f64) -> f64 {
        Analytic.demand_at_release(from, until, engagement)
    }
    fn pre_release_reward(&self, from: u32, until: u32, own_base: bool, ty: &UserType, cfg: &ProductConfig) -> f64 {
        Analytic.pre_release_reward(from, until, own_base, ty, cfg)
    }
    fn post_release_reward(&self, from: u32, until: u32, owned: Ownership, ty: &UserType, cfg: &ProductConfig) -> f64 {
        let spell = Analytic.post_release_reward(from, until, Ownership::NONE, ty, cfg);
        if owned.is_empty() {
            return spell;
        }
        let q = quality(owned, ty.decay, until, cfg).expect("valid timestep");
        spell + q / (1.0 - ty.decay * ty.engagement)
    }
}
