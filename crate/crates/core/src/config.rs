//! Experiment configuration: one JSON document, validated at load time and
//! echoed verbatim into reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::partitions::{PartitionError, PartitionFamily, Refinement};
use crate::processes::{ProcessError, ProcessModel};
use crate::stopping::{LagSchedule, StoppingError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Schedule(#[from] StoppingError),
    #[error(transparent)]
    Process(#[from] ProcessError),
}

/// Seed list, explicit or as a contiguous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { base: u64, count: u32 },
}

impl Seeds {
    pub fn range(base: u64, count: u32) -> Self {
        Seeds::Range { base, count }
    }

    pub fn values(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { base, count } => (0..u64::from(*count)).map(|i| base + i).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Seeds::List(v) => v.len(),
            Seeds::Range { count, .. } => *count as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same number of seeds, shifted into a disjoint block; used for the
    /// independent comparison sample of distribution checks.
    pub fn independent_counterpart(&self) -> Seeds {
        const OFFSET: u64 = 1 << 32;
        match self {
            Seeds::List(v) => Seeds::List(v.iter().map(|s| s.wrapping_add(OFFSET)).collect()),
            Seeds::Range { base, count } => Seeds::Range { base: base.wrapping_add(OFFSET), count: *count },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

/// A full experiment: model, quantizer family, lag schedule, seeds, and
/// run limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ProcessModel<f64>,
    pub family: PartitionFamily<f64>,
    pub schedule: LagSchedule,
    pub seeds: Seeds,
    /// Maximum samples consumed per seed before the run is recorded as
    /// truncated.
    pub horizon: u64,
    /// Number of stopping times to collect per seed.
    pub k_max: u32,
    /// Rate of the growth-ceiling check; enables the bound columns.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub outputs: Option<OutputSpec>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.family.validate()?;
        self.schedule.validate()?;
        if self.horizon < 1 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        if self.k_max < 1 {
            return Err(ConfigError::Invalid("k_max must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("at least one seed is required".into()));
        }
        // The schedule and the quantizer must cover every level the run can
        // reach; surface table or depth exhaustion now instead of mid-run.
        self.schedule.lag(self.k_max)?;
        self.family.cell_count(self.k_max)?;
        if let Some(eps) = self.epsilon {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(ConfigError::Invalid(format!("epsilon must be positive, got {eps}")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fingerprint of the canonical JSON form.
    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Ready-made configurations used by the CLI examples and the test sweeps.
pub mod presets {
    use super::*;
    use crate::processes::IidDistribution;

    /// Slowly refining quantizer on the unit interval with the log lag
    /// schedule; the regime where stopping times grow almost polynomially.
    pub fn slow_refinement(model: ProcessModel<f64>, seeds: Seeds) -> ExperimentConfig {
        ExperimentConfig {
            model,
            family: PartitionFamily::DyadicFinite {
                lo: 0.0,
                hi: 1.0,
                cells: Refinement::Logarithmic,
            },
            schedule: LagSchedule::LogFloor { c: 3.0 },
            seeds,
            horizon: 200_000,
            k_max: 200,
            epsilon: Some(1.0),
            outputs: None,
        }
    }

    /// The odometer source under the slow-refinement regime.
    pub fn odometer_slow_refinement(seeds: Seeds) -> ExperimentConfig {
        slow_refinement(ProcessModel::odometer(), seeds)
    }

    /// Binary order-1 Markov chain scanned exactly (no quantization) with a
    /// gently growing lag.
    pub fn binary_markov(
        p_one_after_zero: f64,
        p_one_after_one: f64,
        seeds: Seeds,
    ) -> ExperimentConfig {
        let chain = crate::processes::MarkovChain::binary_order1(p_one_after_zero, p_one_after_one)
            .expect("probabilities in range");
        ExperimentConfig {
            model: ProcessModel::Markov(chain),
            family: PartitionFamily::FiniteAlphabetExact { alphabet: vec![0.0, 1.0] },
            schedule: LagSchedule::LogFloor { c: 1.0 },
            seeds,
            horizon: 1_000_000,
            k_max: 200,
            epsilon: None,
            outputs: None,
        }
    }

    /// Fair coin scanned exactly.
    pub fn fair_coin(seeds: Seeds) -> ExperimentConfig {
        ExperimentConfig {
            model: ProcessModel::Iid { dist: IidDistribution::Bernoulli { p: 0.5 } },
            family: PartitionFamily::FiniteAlphabetExact { alphabet: vec![0.0, 1.0] },
            schedule: LagSchedule::LogFloor { c: 1.0 },
            seeds,
            horizon: 1_000_000,
            k_max: 200,
            epsilon: None,
            outputs: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::IidDistribution;

    fn sample_config() -> ExperimentConfig {
        presets::odometer_slow_refinement(Seeds::range(1, 3))
    }

    #[test]
    fn json_round_trip_preserves_the_config() {
        let config = sample_config();
        let echoed = ExperimentConfig::from_json(&config.to_json()).unwrap();
        assert_eq!(config, echoed);
        assert_eq!(config.sha256(), echoed.sha256());
    }

    #[test]
    fn seeds_forms() {
        let list: Seeds = serde_json::from_str("[3, 5, 8]").unwrap();
        assert_eq!(list.values(), vec![3, 5, 8]);
        let range: Seeds = serde_json::from_str(r#"{"base": 10, "count": 3}"#).unwrap();
        assert_eq!(range.values(), vec![10, 11, 12]);
        let shifted = range.independent_counterpart();
        assert!(shifted.values().iter().all(|s| *s >= (1 << 32)));
        assert_eq!(shifted.len(), 3);
    }

    #[test]
    fn validation_failures_are_reported() {
        let mut config = sample_config();
        config.horizon = 0;
        assert!(config.validate().is_err());

        let mut config = sample_config();
        config.k_max = 0;
        assert!(config.validate().is_err());

        let mut config = sample_config();
        config.seeds = Seeds::List(vec![]);
        assert!(config.validate().is_err());

        let mut config = sample_config();
        config.epsilon = Some(-1.0);
        assert!(config.validate().is_err());

        // Lag table shorter than the requested run.
        let mut config = sample_config();
        config.schedule = LagSchedule::Custom { table: vec![1, 2] };
        config.k_max = 5;
        assert!(config.validate().is_err());

        // Quantizer depth exhausted before k_max under the doubling rule.
        let mut config = sample_config();
        config.family =
            PartitionFamily::DyadicFinite { lo: 0.0, hi: 1.0, cells: Refinement::Doubling };
        config.k_max = 60;
        assert!(config.validate().is_err());

        let mut config = sample_config();
        config.model = ProcessModel::Iid { dist: IidDistribution::Bernoulli { p: 2.0 } };
        assert!(config.validate().is_err());
    }

    #[test]
    fn bad_json_is_a_parse_error() {
        assert!(matches!(
            ExperimentConfig::from_json("{not json"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn config_file_example_parses() {
        let text = r#"{
            "model": {"kind": "iid", "dist": {"name": "bernoulli", "p": 0.5}},
            "family": {"kind": "finite_alphabet_exact", "alphabet": [0.0, 1.0]},
            "schedule": {"rule": "log_floor", "c": 1.0},
            "seeds": {"base": 1, "count": 8},
            "horizon": 10000,
            "k_max": 50
        }"#;
        let config = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(config.seeds.len(), 8);
        assert_eq!(config.epsilon, None);
    }

    #[test]
    fn markov_config_parses_with_flattened_chain_fields() {
        let text = r#"{
            "model": {
                "kind": "markov",
                "order": 1,
                "alphabet": [0.0, 1.0],
                "transition": [[0.7, 0.3], [0.3, 0.7]]
            },
            "family": {"kind": "finite_alphabet_exact", "alphabet": [0.0, 1.0]},
            "schedule": {"rule": "log_floor", "c": 1.0},
            "seeds": [4, 9],
            "horizon": 5000,
            "k_max": 40,
            "epsilon": 1.5
        }"#;
        let config = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(config.model.cond_exp(&[0.0]).unwrap(), 0.3);
        let echoed = ExperimentConfig::from_json(&config.to_json()).unwrap();
        assert_eq!(config, echoed);
    }
}
