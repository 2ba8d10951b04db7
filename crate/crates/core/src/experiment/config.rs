use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::InjectionSpec;
use crate::detect::{Fallback, ThresholdScope};
use crate::error::{Error, Result};
use crate::graph::DEFAULT_SWAP_FACTOR;
use crate::rng::child_seed;
use crate::train::TrainConfig;

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "GRAPH_ANOMALY_OUT";

/// Child-seed indices derived from the master seed.
pub(crate) mod seeds {
    pub const DATA: u64 = 0;
    pub const INJECT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const REWIRE: u64 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    GraphLstm,
    LstmOnly,
    Arima,
    Decomp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::GraphLstm, ModelKind::LstmOnly, ModelKind::Arima, ModelKind::Decomp];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GraphLstm => "graph-lstm",
            ModelKind::LstmOnly => "lstm-only",
            ModelKind::Arima => "arima",
            ModelKind::Decomp => "decomp",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::GraphLstm | ModelKind::LstmOnly)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}` (expected graph-lstm, lstm-only, arima or decomp)")))
    }
}

/// Synthetic source; see [`crate::data::SynthSpec`] for the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticData {
    pub n_nodes: usize,
    pub len: usize,
    /// Defaults to one factor per node.
    pub n_latent: Option<usize>,
    pub alpha: f64,
    pub ar_coef: f64,
    pub diffusion_lag: usize,
    pub noise_std: f64,
    pub mean_degree: f64,
    pub seasonal_period: Option<f64>,
    pub seasonal_amplitude: f64,
    pub burn_in: usize,
}

impl Default for SyntheticData {
    fn default() -> Self {
        Self {
            n_nodes: 20,
            len: 3000,
            n_latent: None,
            alpha: 0.6,
            ar_coef: 0.9,
            diffusion_lag: 2,
            noise_std: 0.5,
            mean_degree: 2.2,
            seasonal_period: None,
            seasonal_amplitude: 0.0,
            burn_in: 200,
        }
    }
}

impl SyntheticData {
    pub fn to_spec(&self, seed: u64) -> crate::data::SynthSpec {
        crate::data::SynthSpec {
            n_nodes: self.n_nodes,
            len: self.len,
            graph: crate::data::GraphSpec::Random {
                mean_degree: self.mean_degree,
            },
            n_latent: self.n_latent.unwrap_or(self.n_nodes),
            alpha: self.alpha,
            ar_coef: self.ar_coef,
            diffusion_lag: self.diffusion_lag,
            noise_std: self.noise_std,
            seasonal_period: self.seasonal_period,
            seasonal_amplitude: self.seasonal_amplitude,
            burn_in: self.burn_in,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic(SyntheticData),
    /// Directory of labeled univariate files, assembled into one panel with a
    /// correlation k-nearest-neighbor graph.
    Yahoo {
        dir: PathBuf,
        #[serde(default = "default_knn")]
        knn: usize,
    },
    /// Wide panel plus edge list. Cells equal to `missing_sentinel` are
    /// missing; `nan` disables the sentinel.
    WideCsv {
        panel: PathBuf,
        edges: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default = "default_sentinel")]
        missing_sentinel: f64,
        #[serde(default)]
        directed: bool,
    },
}

fn default_knn() -> usize {
    3
}

fn default_sentinel() -> f64 {
    crate::data::DEFAULT_MISSING_SENTINEL
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic(SyntheticData::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.6, val: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    pub run: Vec<ModelKind>,
    /// Seasonal period added to the ARIMA grid.
    pub arima_period: Option<usize>,
    pub decomp_periods: Vec<f64>,
    pub fourier_order: usize,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            run: ModelKind::ALL.to_vec(),
            arima_period: None,
            decomp_periods: Vec::new(),
            fourier_order: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    /// Matching tolerance `w` in steps.
    pub tolerance: usize,
    pub fallback: Fallback,
    pub scope: ThresholdScope,
    /// Models flagged by their forecast interval instead of a swept threshold.
    pub interval_models: Vec<ModelKind>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            tolerance: 3,
            fallback: Fallback::Global,
            scope: ThresholdScope::PerNode,
            interval_models: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub enabled: bool,
    pub swap_factor: f64,
    pub n_random_seeds: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            swap_factor: DEFAULT_SWAP_FACTOR,
            n_random_seeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plots: bool,
    /// Node drawn in the forecast plot; defaults to the node with the most
    /// test anomalies.
    pub forecast_node: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("report"),
            plots: true,
            forecast_node: None,
        }
    }
}

/// A whole experiment. Component seeds (data generation, injection, model
/// initialization, rewiring) are derived from `seed`; the `seed` fields of
/// `[train]` and `[injection]` are overwritten by [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub injection: Option<InjectionSpec>,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            models: ModelsConfig::default(),
            train: TrainConfig::default(),
            injection: None,
            detect: DetectConfig::default(),
            ablation: AblationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg.resolve())
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// returned directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(inj) = &self.injection {
            inj.validate()?;
        }
        if self.models.run.is_empty() {
            return Err(Error::Config("models.run is empty".into()));
        }
        let mut seen = self.models.run.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.run.len() {
            return Err(Error::Config("models.run lists a model twice".into()));
        }
        if let Some(m) = self.detect.interval_models.iter().find(|m| m.is_neural()) {
            return Err(Error::Config(format!("{m} has no forecast intervals; remove it from detect.interval_models")));
        }
        if self.ablation.enabled && !self.models.run.contains(&ModelKind::GraphLstm) {
            return Err(Error::Config("ablation needs graph-lstm in models.run".into()));
        }
        if !(self.ablation.swap_factor >= 0.0) {
            return Err(Error::Config("ablation.swap_factor must be non-negative".into()));
        }
        if let DataConfig::Synthetic(s) = &self.data {
            if s.n_latent == Some(0) {
                return Err(Error::Config("data.n_latent must be positive".into()));
            }
        }
        crate::panel::split_range(1_000_000, self.split.train, self.split.val).map(|_| ())
    }

    /// Fills every derived seed from the master seed.
    pub fn resolve(mut self) -> Self {
        self.train.seed = self.component_seed(seeds::TRAIN);
        if let Some(inj) = &mut self.injection {
            inj.seed = child_seed(self.seed, seeds::INJECT);
        }
        self
    }

    /// Replaces the master seed and re-derives component seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.resolve()
    }

    pub fn component_seed(&self, index: u64) -> u64 {
        child_seed(self.seed, index)
    }

    pub fn dataset_name(&self) -> String {
        match &self.data {
            DataConfig::Synthetic(_) => "synthetic".into(),
            DataConfig::Yahoo { dir, .. } => stem(dir, "yahoo"),
            DataConfig::WideCsv { panel, .. } => stem(panel, "panel"),
        }
    }

    /// Output directory: `cli` if given, else `$GRAPH_ANOMALY_OUT`, else the
    /// configured directory relative to `base`.
    pub fn output_dir(&self, base: &Path, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => base.join(&self.output.dir),
        }
    }
}

fn stem(p: &Path, fallback: &str) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| fallback.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3\n[data]\nsource = \"synthetic\"\nn_nodes = 8\n").unwrap();
        let DataConfig::Synthetic(s) = &cfg.data else { panic!() };
        assert_eq!(s.n_nodes, 8);
        assert_eq!(s.len, 3000);
        assert_eq!(cfg.models.run, ModelKind::ALL.to_vec());
        assert_eq!(cfg.train.seed, child_seed(3, seeds::TRAIN));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "bogus = 1",
            "[data]\nsource = \"synthetic\"\nnodes = 3",
            "[train]\nhiden = 3",
            "[split]\ntest = 0.2",
            "[models]\nrun = [\"prophet\"]",
            "[data]\nsource = \"parquet\"",
            "[output]\nformat = \"html\"",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig {
            data: DataConfig::WideCsv {
                panel: "p.csv".into(),
                edges: "e.csv".into(),
                labels: None,
                missing_sentinel: 0.0,
                directed: false,
            },
            ..ExperimentConfig::default()
        }
        .with_seed(11);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let yahoo = ExperimentConfig::from_toml("[data]\nsource = \"yahoo\"\ndir = \"A1\"\n").unwrap();
        assert_eq!(yahoo.dataset_name(), "A1");
    }

    #[test]
    fn semantic_checks() {
        assert!(ExperimentConfig::from_toml("[models]\nrun = []").is_err());
        assert!(ExperimentConfig::from_toml("[models]\nrun = [\"arima\", \"arima\"]").is_err());
        assert!(ExperimentConfig::from_toml("[split]\ntrain = 0.8\nval = 0.3").is_err());
        assert!(ExperimentConfig::from_toml("[detect]\ninterval_models = [\"lstm-only\"]").is_err());
        assert!(ExperimentConfig::from_toml("[models]\nrun = [\"arima\"]\n[ablation]\nenabled = true").is_err());
    }

    #[test]
    fn cli_output_wins() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.output_dir(Path::new("/base"), Some(Path::new("/x"))), PathBuf::from("/x"));
    }
}
