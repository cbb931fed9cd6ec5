//! Run configuration: one TOML file naming the dataset layout and all
//! tunable pipeline parameters. Relative paths resolve against the config
//! file's directory (dataset paths against the dataset root).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

fn default_schema() -> String {
    "schema.toml".into()
}
fn default_traces_dir() -> String {
    "traces".into()
}
fn default_profiles() -> String {
    "profiles.csv".into()
}
fn default_responses() -> String {
    "responses.csv".into()
}
fn default_out_dir() -> String {
    "out".into()
}
fn default_seed() -> u64 {
    7
}
fn default_agg() -> String {
    "both".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding the dataset (trace files, schema, tables).
    pub dataset_root: String,
    /// Column-mapping schema file, relative to the dataset root.
    #[serde(default = "default_schema")]
    pub schema: String,
    /// Directory of per-subject trace files, relative to the dataset root.
    #[serde(default = "default_traces_dir")]
    pub traces_dir: String,
    /// Subject profile table, relative to the dataset root.
    #[serde(default = "default_profiles")]
    pub profiles: String,
    /// Questionnaire response table, relative to the dataset root.
    #[serde(default = "default_responses")]
    pub responses: String,
    /// Optional item-model file overriding the bundled six-factor model.
    #[serde(default)]
    pub item_model: Option<String>,
    /// Subject whose drive defines the shared route curvature profile.
    pub reference_subject: String,
    /// Output directory, relative to the config file.
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Per-subject aggregation across curves: mean, median, or both.
    #[serde(default = "default_agg")]
    pub agg: String,
    #[serde(default)]
    pub params: Params,
}

fn d_rate() -> f64 {
    50.0
}
fn d_tau() -> f64 {
    0.002
}
fn d_merge() -> f64 {
    10.0
}
fn d_min_len() -> f64 {
    20.0
}
fn d_true() -> bool {
    true
}
fn d_delta_r() -> f64 {
    10.0
}
fn d_delta_s() -> f64 {
    15.0
}
fn d_half_window() -> usize {
    5
}
fn d_v_min() -> f64 {
    1.0
}
fn d_kappa_rate() -> f64 {
    0.0005
}
fn d_min_duration() -> f64 {
    1.0
}
fn d_band_min_samples() -> usize {
    100
}
fn d_components() -> usize {
    2
}
fn d_replicates() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Uniform resampling rate, Hz.
    #[serde(default = "d_rate")]
    pub resample_rate_hz: f64,
    /// Curvature threshold for curve selection, 1/m.
    #[serde(default = "d_tau")]
    pub tau_kappa: f64,
    /// Same-signed curve runs closer than this merge, meters.
    #[serde(default = "d_merge")]
    pub merge_gap_m: f64,
    /// Minimum curve length, meters.
    #[serde(default = "d_min_len")]
    pub min_length_m: f64,
    /// Restrict curve selection to rural segments.
    #[serde(default = "d_true")]
    pub rural_only: bool,
    /// Envelope bin half width, degrees.
    #[serde(default = "d_delta_r")]
    pub delta_r_deg: f64,
    /// Envelope bin stride, degrees.
    #[serde(default = "d_delta_s")]
    pub delta_s_deg: f64,
    /// Half window of the smoothed differentiator, samples.
    #[serde(default = "d_half_window")]
    pub half_window: usize,
    /// Speed floor for drift velocity, m/s.
    #[serde(default = "d_v_min")]
    pub v_min_mps: f64,
    /// Stationarity bound on |d kappa / dt|, 1/(m s).
    #[serde(default = "d_kappa_rate")]
    pub kappa_rate_max: f64,
    /// Minimum stationary run duration, seconds.
    #[serde(default = "d_min_duration")]
    pub min_duration_s: f64,
    /// Fixed center-band half width override, meters; computed from
    /// straight driving when absent.
    #[serde(default)]
    pub band_half_width_m: Option<f64>,
    /// Minimum straight samples per subject for the center band.
    #[serde(default = "d_band_min_samples")]
    pub band_min_samples: usize,
    /// Number of retained envelope components.
    #[serde(default = "d_components")]
    pub pca_components: usize,
    /// Random-data replicates for the component-count heuristic.
    #[serde(default = "d_replicates")]
    pub pa_replicates: usize,
}

impl Default for Params {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(RunConfig, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?;
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((cfg, dir))
    }

    pub fn dataset_root(&self, config_dir: &Path) -> PathBuf {
        config_dir.join(&self.dataset_root)
    }

    pub fn schema_path(&self, config_dir: &Path) -> PathBuf {
        self.dataset_root(config_dir).join(&self.schema)
    }

    pub fn traces_dir(&self, config_dir: &Path) -> PathBuf {
        self.dataset_root(config_dir).join(&self.traces_dir)
    }

    pub fn profiles_path(&self, config_dir: &Path) -> PathBuf {
        self.dataset_root(config_dir).join(&self.profiles)
    }

    pub fn responses_path(&self, config_dir: &Path) -> PathBuf {
        self.dataset_root(config_dir).join(&self.responses)
    }

    pub fn item_model_path(&self, config_dir: &Path) -> Option<PathBuf> {
        self.item_model
            .as_ref()
            .map(|p| self.dataset_root(config_dir).join(p))
    }
}
