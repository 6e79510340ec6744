use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use worldline_core::selector::{
    AnalyticalTop, CautiousRuntime, RuleBased, RuntimeSource, ScriptedPolicy, ScriptedSelector,
    StrategicSelector,
};
use worldline_core::RunConfig;

use crate::endpoint::{EndpointClient, EndpointConfig, EndpointRuntime, EndpointSelector};

pub const DEFAULT_SEED_BANK: &str = "steinsgate_v1";

/// Strategic selector named on the command line or in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SelectorSpec {
    AnalyticalTop,
    Scripted(ScriptedPolicy),
    Endpoint,
}

impl fmt::Display for SelectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectorSpec::AnalyticalTop => f.write_str("analytical_top"),
            SelectorSpec::Scripted(p) => write!(f, "scripted:{}", p.name()),
            SelectorSpec::Endpoint => f.write_str("endpoint"),
        }
    }
}

impl FromStr for SelectorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytical_top" => Ok(SelectorSpec::AnalyticalTop),
            "endpoint" => Ok(SelectorSpec::Endpoint),
            _ => match s.strip_prefix("scripted:") {
                Some(p) => p.parse().map(SelectorSpec::Scripted),
                None => Err(format!(
                    "unknown selector `{s}` (expected analytical_top, scripted:<policy> or endpoint)"
                )),
            },
        }
    }
}

impl From<SelectorSpec> for String {
    fn from(s: SelectorSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SelectorSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Runtime decision source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RuntimeSpec {
    RuleBased,
    Cautious,
    Endpoint,
}

impl fmt::Display for RuntimeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuntimeSpec::RuleBased => "rule_based",
            RuntimeSpec::Cautious => "scripted:cautious",
            RuntimeSpec::Endpoint => "endpoint",
        })
    }
}

impl FromStr for RuntimeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule_based" => Ok(RuntimeSpec::RuleBased),
            "scripted:cautious" | "cautious" => Ok(RuntimeSpec::Cautious),
            "endpoint" => Ok(RuntimeSpec::Endpoint),
            other => Err(format!(
                "unknown runtime `{other}` (expected rule_based, scripted:cautious or endpoint)"
            )),
        }
    }
}

impl From<RuntimeSpec> for String {
    fn from(s: RuntimeSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for RuntimeSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Everything a run needs, loadable from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed_bank: String,
    pub selector: SelectorSpec,
    pub runtime: RuntimeSpec,
    /// TTC below which the `scripted:cautious` runtime asks for SLOWER (s).
    pub cautious_ttc: f64,
    pub output_dir: PathBuf,
    pub seed_banks: BTreeMap<String, Vec<u64>>,
    pub endpoint: EndpointConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed_bank: DEFAULT_SEED_BANK.to_owned(),
            selector: SelectorSpec::AnalyticalTop,
            runtime: RuntimeSpec::RuleBased,
            cautious_ttc: 4.0,
            output_dir: PathBuf::from("runs"),
            seed_banks: BTreeMap::from([(DEFAULT_SEED_BANK.to_owned(), (1..=10).collect())]),
            endpoint: EndpointConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.run.validate()?;
        self.seeds()?;
        if !(self.cautious_ttc.is_finite() && self.cautious_ttc >= 0.0) {
            bail!("cautious_ttc must be a non-negative number");
        }
        Ok(())
    }

    pub fn seeds(&self) -> anyhow::Result<&[u64]> {
        match self.seed_banks.get(&self.seed_bank) {
            Some(seeds) if !seeds.is_empty() => Ok(seeds),
            Some(_) => bail!("seed bank `{}` is empty", self.seed_bank),
            None => bail!("seed bank `{}` is not defined", self.seed_bank),
        }
    }

    pub fn make_selector(&self) -> anyhow::Result<Box<dyn StrategicSelector + Send>> {
        Ok(match self.selector {
            SelectorSpec::AnalyticalTop => Box::new(AnalyticalTop),
            SelectorSpec::Scripted(p) => Box::new(ScriptedSelector::new(p)),
            SelectorSpec::Endpoint => Box::new(EndpointSelector::new(EndpointClient::from_env(&self.endpoint)?)),
        })
    }

    pub fn make_runtime(&self) -> anyhow::Result<Box<dyn RuntimeSource + Send>> {
        Ok(match self.runtime {
            RuntimeSpec::RuleBased => Box::new(RuleBased),
            RuntimeSpec::Cautious => Box::new(CautiousRuntime {
                ttc_threshold: self.cautious_ttc,
            }),
            RuntimeSpec::Endpoint => Box::new(EndpointRuntime::new(EndpointClient::from_env(&self.endpoint)?)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_round_trip() {
        for s in ["analytical_top", "scripted:top", "scripted:prefer_stress", "endpoint"] {
            assert_eq!(s.parse::<SelectorSpec>().unwrap().to_string(), s);
        }
        for s in ["rule_based", "scripted:cautious", "endpoint"] {
            assert_eq!(s.parse::<RuntimeSpec>().unwrap().to_string(), s);
        }
        assert!("scripted:bogus".parse::<SelectorSpec>().is_err());
        assert!("llm".parse::<RuntimeSpec>().is_err());
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.seeds().unwrap(), &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
    }

    #[test]
    fn shipped_default_matches_code() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
        assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml("selector = \"scripted:top\"\n[run]\nhorizon_steps = 8\n").unwrap();
        assert_eq!(cfg.selector, SelectorSpec::Scripted(ScriptedPolicy::Top));
        assert_eq!(cfg.run.horizon_steps, 8);
        assert_eq!(cfg.run.env, RunConfig::default().env);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("seed_bank = \"nope\"").is_err());
        assert!(ExperimentConfig::from_toml("[run]\nhorizon_steps = 0").is_err());
        assert!(ExperimentConfig::from_toml("[run]\nroles = \"beta\"").is_err());
    }
}
