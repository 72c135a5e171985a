use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::fit::Topology;
use crate::model::config::{DriveSpec, ModelConfig};
use crate::model::{DriveConfig, SystemModel};
use crate::oracle::OracleOptions;

/// Inclusive uniform axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Range {
    pub fn validate(&self, path: &str) -> Result<(), CliError> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(CliError::config(path, "need finite min < max"));
        }
        if self.points < 2 {
            return Err(CliError::config(path, "need at least 2 points"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.min + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdSpec {
    /// Full window in units of the dressed linewidth.
    #[serde(default = "PsdSpec::default_span")]
    pub span_linewidths: f64,
    #[serde(default = "PsdSpec::default_points")]
    pub points: usize,
}

impl PsdSpec {
    fn default_span() -> f64 {
        20.0
    }
    fn default_points() -> usize {
        801
    }
}

impl Default for PsdSpec {
    fn default() -> Self {
        Self {
            span_linewidths: Self::default_span(),
            points: Self::default_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "OracleSpec::default_c0")]
    pub c0: f64,
    #[serde(default = "OracleSpec::default_duration")]
    pub duration_ms: f64,
    #[serde(default = "OracleSpec::default_dt_scale")]
    pub dt_scale: f64,
    #[serde(default = "OracleSpec::default_samples")]
    pub samples_per_period: usize,
}

impl OracleSpec {
    fn default_c0() -> f64 {
        OracleOptions::default().c0
    }
    fn default_duration() -> f64 {
        OracleOptions::default().duration * 1e3
    }
    fn default_dt_scale() -> f64 {
        1.0
    }
    fn default_samples() -> usize {
        OracleOptions::default().samples_per_period
    }

    pub fn options(&self) -> OracleOptions {
        OracleOptions {
            c0: self.c0,
            duration: self.duration_ms * 1e-3,
            dt_scale: self.dt_scale,
            samples_per_period: self.samples_per_period,
            ..OracleOptions::default()
        }
    }
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            c0: Self::default_c0(),
            duration_ms: Self::default_duration(),
            dt_scale: Self::default_dt_scale(),
            samples_per_period: Self::default_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub n_modes: usize,
    pub crossings: Vec<(usize, usize)>,
}

impl TopologySpec {
    pub fn topology(&self) -> Topology {
        Topology {
            n_modes: self.n_modes,
            crossings: self.crossings.clone(),
        }
    }
}

/// Data files and options of `fit`; relative paths resolve against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySpec>,
    /// Labels of the fitted modes, in descending-slope order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics_csv: Option<PathBuf>,
    /// Any of "z_dis", "power_in", "slope_osc:<label>".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub free: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_csv: Option<PathBuf>,
}

/// Everything a subcommand needs, as read from the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    /// Alternative to `model`: path of a model JSON file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    pub drive: DriveSpec,
    /// Static membrane displacement for spring, psd and oracle.
    #[serde(default)]
    pub z_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_range_nm: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_range_mhz: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd: Option<PsdSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSpec>,
    /// Standard deviation of Gaussian noise added to `spectrum` output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// A validated config with the model resolved and its content hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Effective config: model inlined, command-line overrides applied.
    pub run: RunConfig,
    pub model: SystemModel,
    pub drive: DriveConfig,
    /// Directory of the config file, for relative data paths.
    pub base_dir: PathBuf,
    pub hash: String,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn z_dis(&self) -> f64 {
        self.run.z_nm * crate::units::NM
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// SHA-256 of the canonical JSON of the effective config, output directory excluded.
pub fn content_hash(run: &RunConfig) -> String {
    let mut canon = run.clone();
    canon.out = None;
    let bytes = serde_json::to_vec(&canon).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Parse, resolve and validate a config; `seed` overrides the file value.
pub fn load(path: &Path, seed: Option<u64>) -> Result<LoadedConfig, CliError> {
    let text = read(path)?;
    parse(&text, path.parent().unwrap_or(Path::new(".")), seed)
}

pub fn parse(text: &str, base_dir: &Path, seed: Option<u64>) -> Result<LoadedConfig, CliError> {
    let mut run: RunConfig = serde_json::from_str(text).map_err(|e| CliError::config("config", e))?;
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
    match (&run.model, &run.model_file) {
        (Some(_), Some(_)) => return Err(CliError::config("model", "give either model or model_file, not both")),
        (None, None) => return Err(CliError::config("model", "missing; give model or model_file")),
        (None, Some(f)) => {
            let f = resolve(f);
            let m: ModelConfig = serde_json::from_str(&read(&f)?).map_err(|e| CliError::config("model_file", format!("{}: {e}", f.display())))?;
            run.model = Some(m);
            run.model_file = None;
        }
        (Some(_), None) => {}
    }
    if let Some(s) = seed {
        run.seed = s;
    }
    let model = run.model.as_ref().expect("resolved").to_model().map_err(|e| CliError::config("model", e))?;
    let drive = run.drive.to_drive().map_err(|e| CliError::config("drive", e))?;
    if !run.z_nm.is_finite() {
        return Err(CliError::config("z_nm", "must be finite"));
    }
    if let Some(r) = &run.z_range_nm {
        r.validate("z_range_nm")?;
    }
    if let Some(r) = &run.delta_range_mhz {
        r.validate("delta_range_mhz")?;
    }
    if let Some(p) = &run.psd {
        if !(p.span_linewidths > 0.0) || p.points < 5 {
            return Err(CliError::config("psd", "span_linewidths must be positive and points at least 5"));
        }
    }
    if let Some(o) = &run.oracle {
        if !(o.c0 > 0.0 && o.duration_ms > 0.0 && o.dt_scale > 0.0 && o.dt_scale <= 1.0) || o.samples_per_period < 4 {
            return Err(CliError::config(
                "oracle",
                "c0 and duration_ms must be positive, dt_scale in (0, 1], samples_per_period at least 4",
            ));
        }
    }
    if let Some(n) = run.noise {
        if !(n >= 0.0 && n.is_finite()) {
            return Err(CliError::config("noise", "must be a non-negative number"));
        }
    }
    let hash = content_hash(&run);
    Ok(LoadedConfig {
        run,
        model,
        drive,
        base_dir: base_dir.to_path_buf(),
        hash,
    })
}
