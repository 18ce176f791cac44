//! WebAssembly bindings for the pricing engine: a best-response strategy map,
//! menu evaluation, and a revenue curve along one price.
//!
//! Every method returns a JSON string. Prices are passed as four optional
//! numbers `(p1_pre, p1_post, p2, p_s)`; `undefined` means "not offered".

use licensing_core::equilibrium::{best_response, StrategyClass};
use licensing_core::market::{expected_revenue, IntegrationConfig, MarketReport, Population};
use licensing_core::{PriceMenu, ProductConfig, UserType};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct StrategyMap {
    classes: Vec<&'static str>,
    arrivals: Vec<u32>,
    values: Vec<f64>,
    /// `best[a][v]`: index into `classes`, or -1 when nothing beats abstaining.
    best: Vec<Vec<i8>>,
    utility: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Evaluation {
    prices: PriceMenu,
    report: MarketReport,
    class_shares: Vec<(&'static str, f64)>,
}

#[derive(Serialize)]
struct Curve {
    price: String,
    x: Vec<f64>,
    revenue: Vec<f64>,
    user_welfare: Vec<f64>,
}

fn menu(p1_pre: Option<f64>, p1_post: Option<f64>, p2: Option<f64>, ps: Option<f64>) -> Result<PriceMenu, String> {
    let m = PriceMenu::new(p1_pre, p1_post, p2, ps);
    m.validate().map_err(|e| e.to_string())?;
    Ok(m)
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[wasm_bindgen]
pub struct Demo {
    population: Population,
    product: ProductConfig,
    integration: IntegrationConfig,
}

#[wasm_bindgen]
impl Demo {
    /// `population_json` may set any of `x_a, x_gamma, x_delta, mu, sigma,
    /// v_max, x_c`; missing keys take the base-case values.
    #[wasm_bindgen(constructor)]
    pub fn new(population_json: &str) -> Result<Demo, String> {
        let population: Population = if population_json.trim().is_empty() {
            Population::default()
        } else {
            serde_json::from_str(population_json).map_err(|e| e.to_string())?
        };
        population.validate().map_err(|e| e.to_string())?;
        Ok(Demo {
            population,
            product: ProductConfig::default(),
            integration: IntegrationConfig::default(),
        })
    }

    #[wasm_bindgen(getter)]
    pub fn n_max(&self) -> u32 {
        self.product.n_max
    }

    #[wasm_bindgen(getter)]
    pub fn release(&self) -> u32 {
        self.product.m
    }

    /// Best class for every arrival timestep and `v_steps` values in `[0, v_max]`.
    #[allow(clippy::too_many_arguments)]
    pub fn strategy_map(
        &self,
        p1_pre: Option<f64>,
        p1_post: Option<f64>,
        p2: Option<f64>,
        ps: Option<f64>,
        engagement: f64,
        decay: f64,
        v_steps: u32,
    ) -> Result<String, String> {
        let prices = menu(p1_pre, p1_post, p2, ps)?;
        let steps = v_steps.max(2);
        let values: Vec<f64> = (0..steps)
            .map(|i| self.population.value_cap * i as f64 / (steps - 1) as f64)
            .collect();
        let arrivals: Vec<u32> = (1..=self.product.n_max).collect();
        let mut best = Vec::with_capacity(arrivals.len());
        let mut utility = Vec::with_capacity(arrivals.len());
        for &a in &arrivals {
            let (mut row, mut urow) = (Vec::new(), Vec::new());
            for &v in &values {
                let ty = UserType::new(a, engagement, decay, v);
                ty.validate(&self.product).map_err(|e| e.to_string())?;
                let br = best_response(&ty, &prices, &self.product);
                let active = br.feasible && br.utility > 0.0;
                row.push(if active { br.class.index() as i8 } else { -1 });
                urow.push(if active { br.utility } else { 0.0 });
            }
            best.push(row);
            utility.push(urow);
        }
        Ok(to_json(&StrategyMap {
            classes: StrategyClass::ALL.iter().map(|c| c.label()).collect(),
            arrivals,
            values,
            best,
            utility,
        }))
    }

    /// Expected revenue, welfare and class shares of one menu.
    pub fn evaluate_menu(
        &self,
        p1_pre: Option<f64>,
        p1_post: Option<f64>,
        p2: Option<f64>,
        ps: Option<f64>,
    ) -> Result<String, String> {
        let prices = menu(p1_pre, p1_post, p2, ps)?;
        let report = self.evaluate(&prices)?;
        let class_shares = StrategyClass::ALL.iter().map(|c| (c.label(), report.class_shares[c.index()])).collect();
        Ok(to_json(&Evaluation {
            prices,
            report,
            class_shares,
        }))
    }

    /// Revenue as `price` (`p1_pre`, `p1_post`, `p2` or `p_s`) moves over
    /// `[from, to]` with the other prices held fixed.
    #[allow(clippy::too_many_arguments)]
    pub fn revenue_curve(
        &self,
        price: &str,
        p1_pre: Option<f64>,
        p1_post: Option<f64>,
        p2: Option<f64>,
        ps: Option<f64>,
        from: f64,
        to: f64,
        steps: u32,
    ) -> Result<String, String> {
        let base = menu(p1_pre, p1_post, p2, ps)?;
        if !(from.is_finite() && to.is_finite() && from >= 0.0 && to > from) {
            return Err(format!("need 0 <= from < to, got [{from}, {to}]"));
        }
        let steps = steps.clamp(2, 2000);
        let mut curve = Curve {
            price: price.to_string(),
            x: Vec::new(),
            revenue: Vec::new(),
            user_welfare: Vec::new(),
        };
        for i in 0..steps {
            let x = from + (to - from) * i as f64 / (steps - 1) as f64;
            let mut m = base;
            let slot = match price {
                "p1_pre" => &mut m.base_pre,
                "p1_post" => &mut m.base_post,
                "p2" => &mut m.upgrade,
                "p_s" => &mut m.subscription,
                other => return Err(format!("unknown price `{other}` (expected p1_pre, p1_post, p2 or p_s)")),
            };
            *slot = Some(x);
            let r = self.evaluate(&m)?;
            curve.x.push(x);
            curve.revenue.push(r.revenue);
            curve.user_welfare.push(r.user_welfare);
        }
        Ok(to_json(&curve))
    }
}

impl Demo {
    fn evaluate(&self, prices: &PriceMenu) -> Result<MarketReport, String> {
        expected_revenue(&self.population, prices, &self.product, &self.integration).map_err(|e| e.to_string())
    }
}
