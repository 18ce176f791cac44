//! Independent brute-force checks of the closed-form equilibrium.
//!
//! Nothing in here calls the closed-form reward or payment formulas: the
//! solvers only use the per-timestep primitives from [`crate::model`] and the
//! demand process.

mod mdp;
mod policy;
pub mod simulate;
pub mod summation;

pub use mdp::{mdp_best_utility, MdpValue};
pub use policy::{evaluate_policy, ClassPolicy};
pub use simulate::{simulate_population, simulate_user, MonteCarloReport, SimStep, SimTrace};

use serde::{Deserialize, Serialize};

use crate::model::{ProductConfig, UserType};

/// Settings shared by the brute-force solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Last timestep of the truncated problem; `None` picks the smallest
    /// horizon meeting `tail_tol` for each user.
    pub horizon: Option<u32>,
    /// Bound on the value that can be obtained after the horizon.
    pub tail_tol: f64,
    /// Users sampled per Monte Carlo run.
    pub mc_samples: usize,
    /// Set from the experiment seed; not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            tail_tol: 1e-9,
            mc_samples: 100_000,
            seed: 0x005E_ED0F_11CE_u64,
        }
    }
}

impl OracleConfig {
    /// Horizon for `ty`: the configured one, or the smallest `H > m` such
    /// that `v·(q1+q2)·γ^(H+1−m) / (1−γ) < tail_tol`, which bounds any reward
    /// collectable after `H`.
    pub fn horizon_for(&self, ty: &UserType, cfg: &ProductConfig) -> u32 {
        if let Some(h) = self.horizon {
            return h;
        }
        let scale = ty.value.max(1.0) * (cfg.q1 + cfg.q2) / (1.0 - ty.decay);
        let steps = if scale <= self.tail_tol {
            1.0
        } else {
            ((self.tail_tol / scale).ln() / ty.decay.ln()).ceil().max(1.0)
        };
        let base = cfg.m.max(ty.arrival).max(cfg.base_release);
        base + (steps as u32).min(1_000_000) + 1
    }
}
