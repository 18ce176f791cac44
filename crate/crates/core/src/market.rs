//! Type distributions and the publisher's expected revenue per user.
//!
//! For a fixed `(n_a, δ, γ)` the thresholds of every strategy class are step
//! functions of `v`, so each class utility is piecewise linear in `v` and the
//! payment of the best response is piecewise constant. The default
//! integrator walks these pieces exactly and integrates each one against the
//! truncated-normal value density in closed form; composite Simpson on a
//! uniform grid is kept as an independent second route.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::equilibrium::{best_response, evaluate_class, StrategyClass, StrategyEval};
use crate::error::{Error, Result};
use crate::model::{PriceMenu, ProductConfig, UserType};
use crate::parallel;

/// Support of the decay factor `γ`; the middle value has probability `x_γ`.
pub const DECAY_SUPPORT: [f64; 3] = [0.85, 0.9, 0.95];
/// Engagement of long-term users.
pub const LONG_ENGAGEMENT: f64 = 0.9;
/// Share of long-term users.
pub const LONG_SHARE: f64 = 0.2;

/// The user population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Population {
    /// `x_a`: arrival mass of timestep 1 relative to each later timestep.
    #[serde(rename = "x_a")]
    pub arrival_weight: f64,
    /// `x_γ`: probability that `γ = 0.9`.
    #[serde(rename = "x_gamma")]
    pub decay_mix: f64,
    /// `x_δ`: engagement of short-term users (probability 0.8).
    #[serde(rename = "x_delta")]
    pub short_engagement: f64,
    /// Mean of the untruncated value normal when `x_c = 0`.
    #[serde(rename = "mu")]
    pub value_mean: f64,
    /// `σ` of the value normal.
    #[serde(rename = "sigma")]
    pub value_sd: f64,
    /// `v_max`; values are truncated to `[0, v_max]`.
    #[serde(rename = "v_max")]
    pub value_cap: f64,
    /// `x_c`: dependence of the value mean on engagement.
    #[serde(rename = "x_c")]
    pub correlation: f64,
}

impl Default for Population {
    fn default() -> Self {
        Self {
            arrival_weight: 5.0,
            decay_mix: 0.8,
            short_engagement: 0.5,
            value_mean: 25.0,
            value_sd: 10.0,
            value_cap: 50.0,
            correlation: 0.0,
        }
    }
}

impl Population {
    pub fn validate(&self) -> Result<()> {
        match self.invalid_field() {
            Some((key, msg)) => Err(Error::InvalidPopulation(format!("{key} {msg}"))),
            None => Ok(()),
        }
    }

    /// The first out-of-range parameter, by its config key, with a message.
    pub fn invalid_field(&self) -> Option<(&'static str, String)> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.arrival_weight) {
            return Some(("x_a", format!("must be positive, got {}", self.arrival_weight)));
        }
        if !(0.0..=1.0).contains(&self.decay_mix) {
            return Some(("x_gamma", format!("must lie in [0,1], got {}", self.decay_mix)));
        }
        if !(self.short_engagement > 0.0 && self.short_engagement < 1.0) {
            return Some(("x_delta", format!("must lie in (0,1), got {}", self.short_engagement)));
        }
        if !self.value_mean.is_finite() {
            return Some(("mu", "must be finite".into()));
        }
        if !positive(self.value_sd) {
            return Some(("sigma", format!("must be positive, got {}", self.value_sd)));
        }
        if !positive(self.value_cap) {
            return Some(("v_max", format!("must be positive, got {}", self.value_cap)));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Some(("x_c", format!("must lie in [0,1], got {}", self.correlation)));
        }
        None
    }

    pub fn engagement_pmf(&self) -> [(f64, f64); 2] {
        [(self.short_engagement, 1.0 - LONG_SHARE), (LONG_ENGAGEMENT, LONG_SHARE)]
    }

    pub fn decay_pmf(&self) -> [(f64, f64); 3] {
        let side = 0.5 * (1.0 - self.decay_mix);
        [
            (DECAY_SUPPORT[0], side),
            (DECAY_SUPPORT[1], self.decay_mix),
            (DECAY_SUPPORT[2], side),
        ]
    }

    /// Mean parameter of the value normal for users with engagement `δ`.
    pub fn value_mean_for(&self, engagement: f64) -> f64 {
        self.value_mean * ((1.0 - self.correlation) + self.correlation * (1.0 - engagement))
    }

    pub fn value_density(&self, engagement: f64) -> TruncatedNormal {
        TruncatedNormal::new(self.value_mean_for(engagement), self.value_sd, 0.0, self.value_cap)
    }

    /// The discrete `(n_a, δ, γ)` cells with their probabilities and value laws.
    pub fn cells(&self, cfg: &ProductConfig) -> Vec<Cell> {
        let arrivals = arrival_pmf(self.arrival_weight, cfg.n_max);
        let mut cells = Vec::with_capacity(arrivals.len() * 6);
        for (i, &fa) in arrivals.iter().enumerate() {
            for (delta, fd) in self.engagement_pmf() {
                for (gamma, fg) in self.decay_pmf() {
                    let weight = fa * fd * fg;
                    if weight == 0.0 {
                        continue;
                    }
                    cells.push(Cell {
                        arrival: i as u32 + 1,
                        engagement: delta,
                        decay: gamma,
                        weight,
                        value: ValueLaw::TruncatedNormal(self.value_density(delta)),
                    });
                }
            }
        }
        cells
    }
}

/// Arrival distribution over `1..=n_max`: timestep 1 carries `x_a` times
/// the mass of every later timestep.
pub fn arrival_pmf(arrival_weight: f64, n_max: u32) -> Vec<f64> {
    let total = arrival_weight + n_max as f64 - 1.0;
    (1..=n_max)
        .map(|n| if n == 1 { arrival_weight / total } else { 1.0 / total })
        .collect()
}

#[inline]
fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Normal `N(μ, σ²)` conditioned on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
    cdf_lo: f64,
    mass: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Self {
        let cdf_lo = std_normal_cdf((lo - mu) / sigma);
        let mass = std_normal_cdf((hi - mu) / sigma) - cdf_lo;
        Self {
            mu,
            sigma,
            lo,
            hi,
            cdf_lo,
            mass,
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        if v < self.lo || v > self.hi {
            return 0.0;
        }
        std_normal_pdf((v - self.mu) / self.sigma) / (self.sigma * self.mass)
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= self.lo {
            return 0.0;
        }
        if v >= self.hi {
            return 1.0;
        }
        ((std_normal_cdf((v - self.mu) / self.sigma) - self.cdf_lo) / self.mass).clamp(0.0, 1.0)
    }

    /// `P(a <= V < b)`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.cdf(b) - self.cdf(a)
    }

    /// `E[V; a <= V < b]`.
    pub fn first_moment_between(&self, a: f64, b: f64) -> f64 {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if b <= a {
            return 0.0;
        }
        let za = (a - self.mu) / self.sigma;
        let zb = (b - self.mu) / self.sigma;
        let phi = std_normal_cdf(zb) - std_normal_cdf(za);
        (self.mu * phi - self.sigma * (std_normal_pdf(zb) - std_normal_pdf(za))) / self.mass
    }

    /// Antiderivatives `(F, G)` at `v` with `P(a <= V < b) = F(b) − F(a)` and
    /// `E[V; a <= V < b] = G(b) − G(a)`.
    pub fn antiderivatives(&self, v: f64) -> (f64, f64) {
        let z = (v.clamp(self.lo, self.hi) - self.mu) / self.sigma;
        let phi = std_normal_cdf(z);
        ((phi - self.cdf_lo) / self.mass, (self.mu * phi - self.sigma * std_normal_pdf(z)) / self.mass)
    }

    /// Inverse CDF, for sampling.
    pub fn quantile(&self, u: f64) -> f64 {
        let p = (self.cdf_lo + u * self.mass).clamp(1e-300, 1.0 - 1e-16);
        let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
        (self.mu + self.sigma * z).clamp(self.lo, self.hi)
    }
}

/// Value distribution inside one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueLaw {
    TruncatedNormal(TruncatedNormal),
    /// All mass on one value.
    Point(f64),
}

impl ValueLaw {
    fn upper(&self) -> f64 {
        match self {
            ValueLaw::TruncatedNormal(t) => t.hi,
            ValueLaw::Point(v) => *v,
        }
    }
}

/// One `(n_a, δ, γ)` atom of the type distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub arrival: u32,
    pub engagement: f64,
    pub decay: f64,
    pub weight: f64,
    pub value: ValueLaw,
}

impl Cell {
    fn user(&self, value: f64) -> UserType {
        UserType::new(self.arrival, self.engagement, self.decay, value)
    }
}

/// How the integral over `v` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Walk the piecewise-linear structure and integrate each piece exactly.
    Exact,
    /// Composite Simpson on `v_nodes` uniform nodes with a grid-doubling check.
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    pub method: Quadrature,
    /// Simpson grid size (odd, >= 3).
    pub v_nodes: usize,
    /// Largest relative change of revenue under grid doubling that Simpson accepts.
    pub refinement: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            method: Quadrature::Exact,
            v_nodes: 2001,
            refinement: 1e-3,
        }
    }
}

impl IntegrationConfig {
    pub fn simpson(v_nodes: usize) -> Self {
        Self {
            method: Quadrature::Simpson,
            v_nodes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_nodes < 3 || self.v_nodes.is_multiple_of(2) {
            return Err(Error::config("integration.v_nodes", format!("must be odd and >= 3, got {}", self.v_nodes)));
        }
        if !(self.refinement > 0.0) {
            return Err(Error::config("integration.refinement", "must be positive"));
        }
        Ok(())
    }
}

/// Expected outcomes per user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketReport {
    pub revenue: f64,
    pub user_welfare: f64,
    pub overall_welfare: f64,
    /// Mass per class, indexed by [`StrategyClass::index`].
    pub class_shares: [f64; 5],
    /// Class shares conditional on each arrival timestep (`arrival_shares[n_a - 1]`).
    pub arrival_shares: Vec<[f64; 5]>,
}

impl MarketReport {
    pub fn share(&self, class: StrategyClass) -> f64 {
        self.class_shares[class.index()]
    }

    pub fn arrival_share(&self, arrival: u32, class: StrategyClass) -> f64 {
        self.arrival_shares[arrival as usize - 1][class.index()]
    }
}

/// Contribution of one cell, unweighted.
#[derive(Debug, Clone, Copy, Default)]
struct CellTotals {
    revenue: f64,
    welfare: f64,
    shares: [f64; 5],
}

impl CellTotals {
    fn add_piece(&mut self, eval: &StrategyEval, mass: f64, first_moment: f64) {
        self.revenue += eval.payment * mass;
        self.welfare += eval.reward * first_moment - eval.payment * mass;
        self.shares[eval.class.index()] += mass;
    }
}

/// Offset used to probe the configuration just right of a breakpoint.
const PROBE: f64 = 1e-9;

/// Walks `[0, v_max]` in pieces on which every class has fixed thresholds,
/// and within a piece follows the upper envelope of the five utility lines.
fn integrate_cell_exact(cell: &Cell, law: &TruncatedNormal, prices: &PriceMenu, cfg: &ProductConfig) -> CellTotals {
    let mut totals = CellTotals::default();
    let hi = law.hi;
    let probe_step = PROBE * hi.max(1.0);
    let mut evals = [StrategyEval::infeasible(StrategyClass::BuyBuy); 5];
    // classes keep their thresholds (and hence their line) below `valid`
    let mut valid = [f64::NEG_INFINITY; 5];
    let mut left = law.lo;
    let mut at_x = (0.0, 0.0);
    while left < hi {
        let probe = (left + probe_step).min(0.5 * (left + hi));
        let ty = cell.user(probe);
        let mut piece_end = hi;
        for class in StrategyClass::ALL {
            let k = class.index();
            if valid[k] <= probe {
                (evals[k], valid[k]) = evaluate_class(class, &ty, prices, cfg);
            }
            if valid[k] > probe {
                piece_end = piece_end.min(valid[k]);
            }
        }
        let mut x = left;
        if x == law.lo {
            at_x = law.antiderivatives(x);
        }
        while x < piece_end {
            let px = (x + probe_step).min(0.5 * (x + piece_end));
            let best = envelope_at(&evals, px);
            let mut next = piece_end;
            for e in evals.iter().filter(|e| e.feasible && e.reward > best.reward) {
                let cross = (e.payment - best.payment) / (e.reward - best.reward);
                if cross > px && cross < next {
                    next = cross;
                }
            }
            let at_next = law.antiderivatives(next);
            totals.add_piece(&best, at_next.0 - at_x.0, at_next.1 - at_x.1);
            at_x = at_next;
            x = next;
        }
        left = piece_end;
    }
    totals
}

/// Best class at `v` given fixed lines; ties resolved by [`StrategyClass::TIE_ORDER`].
fn envelope_at(evals: &[StrategyEval; 5], v: f64) -> StrategyEval {
    let mut best: Option<(StrategyEval, f64)> = None;
    for class in StrategyClass::TIE_ORDER {
        let e = evals[class.index()];
        if !e.feasible {
            continue;
        }
        let u = v * e.reward - e.payment;
        if best.is_none_or(|(_, bu)| u > bu) {
            best = Some((e, u));
        }
    }
    best.expect("the null strategy is always feasible").0
}

fn integrate_cell_simpson(cell: &Cell, law: &TruncatedNormal, prices: &PriceMenu, cfg: &ProductConfig, nodes: usize) -> CellTotals {
    let mut totals = CellTotals::default();
    let h = (law.hi - law.lo) / (nodes - 1) as f64;
    for i in 0..nodes {
        let v = law.lo + h * i as f64;
        let weight = if i == 0 || i == nodes - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        } * h
            / 3.0;
        let density = law.pdf(v) * weight;
        let best = best_response(&cell.user(v), prices, cfg);
        totals.add_piece(&best, density, v * density);
    }
    totals
}

fn integrate_cell(cell: &Cell, prices: &PriceMenu, cfg: &ProductConfig, method: Quadrature, nodes: usize) -> CellTotals {
    match cell.value {
        ValueLaw::Point(v) => {
            let mut totals = CellTotals::default();
            let best = best_response(&cell.user(v), prices, cfg);
            totals.add_piece(&best, 1.0, v);
            totals
        }
        ValueLaw::TruncatedNormal(ref law) => match method {
            Quadrature::Exact => integrate_cell_exact(cell, law, prices, cfg),
            Quadrature::Simpson => integrate_cell_simpson(cell, law, prices, cfg, nodes),
        },
    }
}

fn accumulate(cells: &[Cell], totals: &[CellTotals], n_max: u32) -> MarketReport {
    let mut revenue = 0.0;
    let mut user_welfare = 0.0;
    let mut class_shares = [0.0; 5];
    let mut arrival_shares = vec![[0.0; 5]; n_max as usize];
    let mut arrival_mass = vec![0.0; n_max as usize];
    for (cell, t) in cells.iter().zip(totals) {
        revenue += cell.weight * t.revenue;
        user_welfare += cell.weight * t.welfare;
        let slot = cell.arrival as usize - 1;
        arrival_mass[slot] += cell.weight;
        for k in 0..5 {
            class_shares[k] += cell.weight * t.shares[k];
            arrival_shares[slot][k] += cell.weight * t.shares[k];
        }
    }
    for (shares, mass) in arrival_shares.iter_mut().zip(&arrival_mass) {
        if *mass > 0.0 {
            shares.iter_mut().for_each(|s| *s /= mass);
        }
    }
    MarketReport {
        revenue,
        user_welfare,
        overall_welfare: revenue + user_welfare,
        class_shares,
        arrival_shares,
    }
}

/// Expected revenue and welfare over an explicit list of cells.
pub fn expected_revenue_over(cells: &[Cell], prices: &PriceMenu, cfg: &ProductConfig, ic: &IntegrationConfig) -> Result<MarketReport> {
    cfg.validate()?;
    prices.validate()?;
    ic.validate()?;
    if let Some(cell) = cells.iter().find(|c| c.arrival < 1 || c.arrival > cfg.n_max) {
        return Err(Error::InvalidPopulation(format!("cell arrival {} outside 1..={}", cell.arrival, cfg.n_max)));
    }
    let run = |nodes: usize| {
        let totals = parallel::map(cells, |c| integrate_cell(c, prices, cfg, ic.method, nodes));
        accumulate(cells, &totals, cfg.n_max)
    };
    let report = run(ic.v_nodes);
    if ic.method == Quadrature::Simpson {
        let fine = run(2 * ic.v_nodes - 1);
        let scale = fine.revenue.abs().max(1e-12);
        if (fine.revenue - report.revenue).abs() > ic.refinement * scale {
            return Err(Error::NonConvergence {
                nodes: ic.v_nodes,
                coarse: report.revenue,
                fine: fine.revenue,
            });
        }
    }
    Ok(report)
}

/// Publisher revenue, user welfare and class shares under `prices`.
pub fn expected_revenue(pop: &Population, prices: &PriceMenu, cfg: &ProductConfig, ic: &IntegrationConfig) -> Result<MarketReport> {
    pop.validate()?;
    expected_revenue_over(&pop.cells(cfg), prices, cfg, ic)
}

/// Largest expected subscription payment from the release timestep on (given
/// demand there) over a value grid of every cell.
fn max_post_release_payment(cells: &[Cell], prices: &PriceMenu, cfg: &ProductConfig, nodes: usize) -> f64 {
    let Some(ps) = prices.subscription else { return 0.0 };
    let mut best = 0.0f64;
    for cell in cells {
        let top = cell.value.upper();
        let values: Vec<f64> = match cell.value {
            ValueLaw::Point(v) => vec![v],
            ValueLaw::TruncatedNormal(t) => (0..nodes).map(|i| t.lo + (t.hi - t.lo) * i as f64 / (nodes - 1) as f64).collect(),
        };
        for v in values.into_iter().chain([top]) {
            let ty = cell.user(v);
            let e = best_response(&ty, prices, cfg);
            let start = ty.arrival.max(cfg.m);
            best = best.max(crate::equilibrium::subscription_payment(start, e.n2, ty.engagement, ps));
        }
    }
    best
}

/// Turns a subscription-only menu into one with strictly more revenue by
/// selling the base product at `ρ_max + ε` and giving the upgrade away,
/// where `ρ_max` is the largest expected post-release subscription payment
/// of any type and `ε = 1e−6·ρ_max`.
///
/// The menu with both base prices at `ρ_max + ε` is tried first, then the
/// one offering the base only from the release on. The input is returned
/// unchanged when neither increases revenue or nobody subscribes.
pub fn construct_sub_improvement(
    pop: &Population,
    sub_only: &PriceMenu,
    cfg: &ProductConfig,
    ic: &IntegrationConfig,
) -> Result<PriceMenu> {
    if sub_only.subscription.is_none() || sub_only.base_pre.is_some() || sub_only.base_post.is_some() || sub_only.upgrade.is_some() {
        return Err(Error::Model(crate::error::ModelError::InvalidPrice(
            "expected a menu offering only the subscription".into(),
        )));
    }
    pop.validate()?;
    let cells = pop.cells(cfg);
    let baseline = expected_revenue_over(&cells, sub_only, cfg, ic)?.revenue;
    let rho_max = max_post_release_payment(&cells, sub_only, cfg, ic.v_nodes.max(101));
    if rho_max <= 0.0 || baseline <= 0.0 {
        return Ok(*sub_only);
    }
    let price = rho_max * (1.0 + 1e-6);
    let ps = sub_only.subscription;
    let candidates = [
        PriceMenu::new(Some(price), Some(price), Some(0.0), ps),
        PriceMenu::new(None, Some(price), Some(0.0), ps),
    ];
    for menu in candidates {
        if expected_revenue_over(&cells, &menu, cfg, ic)?.revenue > baseline {
            return Ok(menu);
        }
    }
    Ok(*sub_only)
}
