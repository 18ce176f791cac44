use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market::{IntegrationConfig, Population};
use crate::model::ProductConfig;
use crate::optimizer::DEConfig;
use crate::oracles::OracleConfig;

/// A pricing regime as named in configs, on the command line and in CSVs.
/// `both_given_buy` freezes the buy prices at the `buy_only` optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BuyOnly,
    SubOnly,
    Both,
    BothGivenBuy,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::BuyOnly, Regime::SubOnly, Regime::Both, Regime::BothGivenBuy];

    pub fn name(self) -> &'static str {
        match self {
            Regime::BuyOnly => "buy_only",
            Regime::SubOnly => "sub_only",
            Regime::Both => "both",
            Regime::BothGivenBuy => "both_given_buy",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s.trim())
            .ok_or_else(|| Error::config("regimes", format!("unknown regime `{s}` (expected buy_only, sub_only, both or both_given_buy)")))
    }
}

/// Population parameter that a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "x_delta")]
    ShortEngagement,
    #[serde(rename = "x_gamma")]
    DecayMix,
    #[serde(rename = "sigma")]
    ValueSd,
    #[serde(rename = "x_a")]
    ArrivalWeight,
    #[serde(rename = "x_c")]
    Correlation,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [
        SweepParam::ShortEngagement,
        SweepParam::DecayMix,
        SweepParam::ValueSd,
        SweepParam::ArrivalWeight,
        SweepParam::Correlation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::ShortEngagement => "x_delta",
            SweepParam::DecayMix => "x_gamma",
            SweepParam::ValueSd => "sigma",
            SweepParam::ArrivalWeight => "x_a",
            SweepParam::Correlation => "x_c",
        }
    }

    /// `pop` with this parameter set to `value`.
    pub fn apply(self, pop: &Population, value: f64) -> Population {
        let mut p = *pop;
        match self {
            SweepParam::ShortEngagement => p.short_engagement = value,
            SweepParam::DecayMix => p.decay_mix = value,
            SweepParam::ValueSd => p.value_sd = value,
            SweepParam::ArrivalWeight => p.arrival_weight = value,
            SweepParam::Correlation => p.correlation = value,
        }
        p
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::config("sweep.param", format!("unknown sweep parameter `{s}` (expected x_delta, x_gamma, sigma, x_a or x_c)")))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub param: Option<SweepParam>,
    pub values: Vec<f64>,
}

/// Sizes and tolerances of the verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random `(type, menu)` instances for the MDP and class-plan checks.
    pub instances: usize,
    /// Random cases for the closed-form building blocks.
    pub closed_form_cases: usize,
    /// Random `(population, menu)` pairs for the Monte Carlo check.
    pub mc_pairs: usize,
    /// Pairs that must fall inside the band.
    pub mc_required: usize,
    /// Band half-width in standard errors.
    pub mc_band: f64,
    /// Relative tolerance of the MDP and class-plan checks.
    pub relative_tol: f64,
    /// Absolute tolerance of the closed-form checks.
    pub closed_form_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: 1000,
            closed_form_cases: 10_000,
            mc_pairs: 30,
            mc_required: 28,
            mc_band: 3.0,
            relative_tol: 1e-6,
            closed_form_tol: 1e-10,
        }
    }
}

/// Everything a run needs. All keys are optional in the TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Where CSVs are written. Not part of the provenance hash.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub regimes: Vec<Regime>,
    pub product: ProductConfig,
    pub population: Population,
    pub sweep: SweepSpec,
    pub integration: IntegrationConfig,
    pub optimizer: DEConfig,
    pub oracle: OracleConfig,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            output_dir: PathBuf::from("results"),
            regimes: Regime::ALL.to_vec(),
            product: ProductConfig::default(),
            population: Population::default(),
            sweep: SweepSpec::default(),
            integration: IntegrationConfig::default(),
            optimizer: DEConfig::default(),
            oracle: OracleConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<root>", e.message().to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "<root>".to_string() } else { path };
            Error::config(key, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.product
            .validate()
            .map_err(|e| Error::config("product", e.to_string()))?;
        validate_population(&self.population, "population")?;
        self.integration.validate()?;
        self.optimizer.validate()?;
        if self.regimes.is_empty() {
            return Err(Error::config("regimes", "at least one regime is required"));
        }
        if !(self.oracle.tail_tol > 0.0) {
            return Err(Error::config("oracle.tail_tol", "must be positive"));
        }
        if self.oracle.mc_samples < 2 {
            return Err(Error::config("oracle.mc_samples", "must be at least 2"));
        }
        let v = &self.verify;
        if v.mc_required > v.mc_pairs {
            return Err(Error::config("verify.mc_required", "cannot exceed verify.mc_pairs"));
        }
        if !(v.relative_tol > 0.0 && v.closed_form_tol > 0.0 && v.mc_band > 0.0) {
            return Err(Error::config("verify", "tolerances must be positive"));
        }
        if let Some(param) = self.sweep.param {
            for (i, &value) in self.sweep.values.iter().enumerate() {
                validate_population(&param.apply(&self.population, value), &format!("sweep.values[{i}]"))?;
            }
        }
        Ok(())
    }

    /// Optimizer settings carrying the experiment seed.
    pub fn de(&self) -> DEConfig {
        DEConfig {
            seed: self.seed,
            ..self.optimizer
        }
    }

    /// Oracle settings carrying the experiment seed.
    pub fn oracles(&self) -> OracleConfig {
        OracleConfig {
            seed: self.seed,
            ..self.oracle
        }
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn validate_population(pop: &Population, key: &str) -> Result<()> {
    match pop.invalid_field() {
        Some((field, msg)) if key == "population" => Err(Error::config(format!("{key}.{field}"), msg)),
        Some((field, msg)) => Err(Error::config(key, format!("{field} {msg}"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.population.arrival_weight, 5.0);
        assert_eq!(cfg.population.decay_mix, 0.8);
        assert_eq!(cfg.population.short_engagement, 0.5);
        assert_eq!(cfg.population.value_sd, 10.0);
        assert_eq!((cfg.product.q1, cfg.product.q2, cfg.product.m, cfg.product.n_max), (1.0, 0.5, 6, 12));
    }

    #[test]
    fn parses_nested_keys() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            seed = 9
            regimes = ["sub_only", "both"]
            [population]
            x_delta = 0.7
            [sweep]
            param = "x_c"
            values = [0.0, 0.5, 1.0]
            [optimizer]
            restarts = 2
            [optimizer.bounds]
            subscription = [0.0, 30.0]
            [integration]
            method = "simpson"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.regimes, vec![Regime::SubOnly, Regime::Both]);
        assert_eq!(cfg.population.short_engagement, 0.7);
        assert_eq!(cfg.sweep.param, Some(SweepParam::Correlation));
        assert_eq!(cfg.optimizer.restarts, 2);
        assert_eq!(cfg.optimizer.bounds.subscription, (0.0, 30.0));
        assert_eq!(cfg.de().seed, 9);
        assert_eq!(cfg.integration.method, crate::market::Quadrature::Simpson);
    }

    fn key_of(text: &str) -> String {
        match ExperimentConfig::from_toml_str(text).unwrap_err() {
            Error::Config { key, .. } => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_offending_key() {
        assert_eq!(key_of("[population]\nx_delta = \"high\""), "population.x_delta");
        assert_eq!(key_of("[population]\nsigma = -1.0"), "population.sigma");
        assert_eq!(key_of("[optimizer]\nrestarts = 0"), "optimizer.restarts");
        assert_eq!(key_of("[sweep]\nparam = \"beta\""), "sweep.param");
        assert_eq!(key_of("[sweep]\nparam = \"x_delta\"\nvalues = [0.5, 1.5]"), "sweep.values[1]");
        assert_eq!(key_of("regimes = []"), "regimes");
        assert!(key_of("[product]\nflavour = 1").starts_with("product"));
    }

    #[test]
    fn digest_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..a.clone()
        };
        let c = ExperimentConfig { seed: 1, ..a.clone() };
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.name().parse::<Regime>().unwrap(), r);
        }
        for p in SweepParam::ALL {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
        }
    }
}
