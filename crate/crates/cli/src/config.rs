use std::path::{Path, PathBuf};

use mvlstm::granger::{DEFAULT_LAG, DEFAULT_LEVEL};
use mvlstm::attention::DEFAULT_HISTOGRAM_BINS;
use mvlstm::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub target: Option<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_format")]
    pub format: ReportFormat,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_lag")]
    pub granger_lag: usize,
    #[serde(default = "default_level")]
    pub granger_level: f64,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_format() -> ReportFormat {
    ReportFormat::Json
}
fn default_bins() -> usize {
    DEFAULT_HISTOGRAM_BINS
}
fn default_lag() -> usize {
    DEFAULT_LAG
}
fn default_level() -> f64 {
    DEFAULT_LEVEL
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            target: None,
            output_dir: default_output_dir(),
            format: default_format(),
            bins: default_bins(),
            granger_lag: default_lag(),
            granger_level: default_level(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML file; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| mvlstm::Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::ConfigParse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(input) = &cfg.input {
            cfg.input = Some(base.join(input));
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        let p = self
            .input
            .as_deref()
            .ok_or_else(|| CliError::Usage("no input CSV given (set `input` in the config or pass --input)".into()))?;
        if !p.is_file() {
            return Err(CliError::Usage(format!("input file {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn target(&self) -> Result<&str, CliError> {
        self.target
            .as_deref()
            .ok_or_else(|| CliError::Usage("no target column given (set `target` in the config or pass --target)".into()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        if self.bins == 0 {
            return Err(CliError::Usage("bins must be positive".into()));
        }
        if self.granger_lag == 0 || !(self.granger_level > 0.0 && self.granger_level < 1.0) {
            return Err(CliError::Usage(format!(
                "invalid Granger settings: lag {}, level {}",
                self.granger_lag, self.granger_level
            )));
        }
        Ok(())
    }
}
