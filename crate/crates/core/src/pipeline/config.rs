use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::clustering::ClusterConfig;
use crate::eligibility::EligibilityRules;
use crate::flows::ClassifyConfig;
use crate::forensics::DetectorConfig;
use crate::graphs::AssortativityVariant;
use crate::ingest::{IngestConfig, InputPaths, StudyWindow};
use crate::stats::BandwidthRule;
use crate::types::{date_to_timestamp, Timestamp, SECONDS_PER_DAY};

/// A calendar date (`YYYY-MM-DD`, UTC) or a unix timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimePoint {
    Unix(Timestamp),
    Date(String),
}

impl TimePoint {
    /// Dates resolve to their first second, or their last when `end_of_day`.
    pub fn resolve(&self, end_of_day: bool) -> Result<Timestamp, PipelineError> {
        match self {
            TimePoint::Unix(t) => Ok(*t),
            TimePoint::Date(d) => date_to_timestamp(d)
                .map(|t| if end_of_day { t + SECONDS_PER_DAY - 1 } else { t })
                .ok_or_else(|| PipelineError::ConfigInvalid(format!("bad date {d:?}, expected YYYY-MM-DD"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub token_transfers: PathBuf,
    pub external_txs: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_txs: Option<PathBuf>,
    pub contracts: PathBuf,
    pub claims: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balances: Option<PathBuf>,
}

/// Inclusive study window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: TimePoint,
    pub end: TimePoint,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { start: TimePoint::Date("2021-11-15".into()), end: TimePoint::Date("2022-04-13".into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub slice_interval_days: u32,
    pub assortativity: AssortativityVariant,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { slice_interval_days: 7, assortativity: AssortativityVariant::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EligibilityConfig {
    pub rules: EligibilityRules,
    /// Defaults to one day before the window opens.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<TimePoint>,
    /// Defaults to the earliest external transaction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history_start: Option<TimePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Attrition and timeline cutoff; defaults to the window end.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<TimePoint>,
    pub top_contracts: usize,
    pub bandwidth: BandwidthRule,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { cutoff: None, top_contracts: 10, bandwidth: BandwidthRule::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputConfig,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default = "default_decimals")]
    pub token_decimals: u32,
    #[serde(default = "default_decimals")]
    pub native_decimals: u32,
    #[serde(default)]
    pub allow_self_transfers: bool,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub detectors: DetectorConfig,
    #[serde(default)]
    pub eligibility: EligibilityConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub stats: StatsConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_decimals() -> u32 {
    18
}

impl RunConfig {
    pub fn new(inputs: InputConfig) -> Self {
        RunConfig {
            inputs,
            out_dir: default_out(),
            window: WindowConfig::default(),
            token_decimals: 18,
            native_decimals: 18,
            allow_self_transfers: false,
            classify: ClassifyConfig::default(),
            cluster: ClusterConfig::default(),
            detectors: DetectorConfig::default(),
            eligibility: EligibilityConfig::default(),
            graph: GraphConfig::default(),
            stats: StatsConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))
    }

    /// Canonical TOML form; parsing it gives back an equal config.
    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Internal(format!("config serialization: {e}")))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text =
            fs::read_to_string(path).map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        fix(&mut i.token_transfers);
        fix(&mut i.external_txs);
        fix(&mut i.contracts);
        fix(&mut i.claims);
        i.internal_txs.as_mut().map(fix);
        i.balances.as_mut().map(fix);
        fix(&mut self.out_dir);
    }

    pub fn study_window(&self) -> Result<StudyWindow, PipelineError> {
        let w = StudyWindow { start: self.window.start.resolve(false)?, end: self.window.end.resolve(true)? };
        if w.start >= w.end {
            return Err(PipelineError::ConfigInvalid(format!("window start {} is not before end {}", w.start, w.end)));
        }
        Ok(w)
    }

    pub fn ingest_config(&self) -> Result<IngestConfig, PipelineError> {
        Ok(IngestConfig {
            window: self.study_window()?,
            token_decimals: self.token_decimals,
            native_decimals: self.native_decimals,
            allow_self_transfers: self.allow_self_transfers,
        })
    }

    pub fn input_paths(&self) -> InputPaths {
        let i = &self.inputs;
        InputPaths {
            token_transfers: i.token_transfers.clone(),
            external_txs: i.external_txs.clone(),
            internal_txs: i.internal_txs.clone(),
            contracts: i.contracts.clone(),
            claims: i.claims.clone(),
            balances: i.balances.clone(),
        }
    }

    pub fn snapshot(&self) -> Result<Timestamp, PipelineError> {
        match &self.eligibility.snapshot {
            Some(t) => t.resolve(true),
            None => Ok(self.study_window()?.start - SECONDS_PER_DAY),
        }
    }

    pub fn cutoff(&self) -> Result<Timestamp, PipelineError> {
        match &self.stats.cutoff {
            Some(t) => t.resolve(true),
            None => Ok(self.study_window()?.end),
        }
    }

    /// Checks everything that can be checked before reading data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.study_window()?;
        self.snapshot()?;
        self.cutoff()?;
        if let Some(h) = &self.eligibility.history_start {
            h.resolve(false)?;
        }
        self.cluster.validate().map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        self.eligibility.rules.validate().map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        if self.graph.slice_interval_days == 0 {
            return Err(PipelineError::ConfigInvalid("slice_interval_days must be positive".into()));
        }
        Ok(())
    }

    /// Input files must exist when a run starts.
    pub fn check_inputs(&self) -> Result<(), PipelineError> {
        let i = &self.inputs;
        let required = [&i.token_transfers, &i.external_txs, &i.contracts, &i.claims];
        let optional = [i.internal_txs.as_ref(), i.balances.as_ref()];
        for p in required.into_iter().chain(optional.into_iter().flatten()) {
            if !p.is_file() {
                return Err(PipelineError::ConfigInvalid(format!("input {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
