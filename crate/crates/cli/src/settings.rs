//! Layered configuration: command-line flags, then `SIGNPIPE_*` environment
//! variables (both handled by clap), then the TOML config file, then
//! built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Deserialize;
use signpipe_core::dialogue::{PromptTemplate, DEFAULT_BASE_URL, DEFAULT_MODEL};
use signpipe_core::gesture::{load_descriptors, DescriptorDb, DEFAULT_WPM};
use signpipe_core::landmark::LabelMap;
use signpipe_core::netpipe::DEFAULT_PORT;
use signpipe_core::nn::{load_weights, Classifier, ModelConfig};
use signpipe_core::preprocess::SelectionSpec;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML file with defaults for any of the options below
    #[arg(long, global = true, env = "SIGNPIPE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "SIGNPIPE_SEED")]
    pub seed: Option<u64>,
    /// Model weights; the architecture is read from `<weights>.json`
    #[arg(long, global = true, env = "SIGNPIPE_WEIGHTS")]
    pub weights: Option<PathBuf>,
    /// JSON array of glosses indexed by class id
    #[arg(long, global = true, env = "SIGNPIPE_LABELS")]
    pub labels: Option<PathBuf>,
    /// Landmark selection JSON ({"lips": [...], "pose": [...]})
    #[arg(long, global = true, env = "SIGNPIPE_SPEC")]
    pub spec: Option<PathBuf>,
    /// Gesture descriptor database JSON
    #[arg(long, global = true, env = "SIGNPIPE_DESCRIPTORS")]
    pub descriptors: Option<PathBuf>,
    /// Directory holding step1.txt and step2.txt prompt templates
    #[arg(long, global = true, env = "SIGNPIPE_TEMPLATES")]
    pub templates: Option<PathBuf>,
    /// Speech rate used for gesture scheduling
    #[arg(long, global = true, env = "SIGNPIPE_WPM")]
    pub wpm: Option<f64>,
    #[arg(long, global = true, env = "SIGNPIPE_PORT")]
    pub port: Option<u16>,
    #[arg(long, global = true, value_enum, env = "SIGNPIPE_BACKEND")]
    pub backend: Option<BackendKind>,
    /// Play robot timelines at their real speed
    #[arg(long, global = true)]
    pub realtime: bool,
    /// Chat-completions base URL for the http backend
    #[arg(long, global = true, env = "SIGNPIPE_LLM_URL")]
    pub llm_url: Option<String>,
    #[arg(long, global = true, env = "SIGNPIPE_LLM_MODEL")]
    pub llm_model: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    weights: Option<PathBuf>,
    labels: Option<PathBuf>,
    spec: Option<PathBuf>,
    descriptors: Option<PathBuf>,
    templates: Option<PathBuf>,
    wpm: Option<f64>,
    port: Option<u16>,
    backend: Option<BackendKind>,
    realtime: Option<bool>,
    llm_url: Option<String>,
    llm_model: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub weights: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub descriptors: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub wpm: f64,
    pub port: u16,
    pub backend: BackendKind,
    pub realtime: bool,
    pub llm_url: String,
    pub llm_model: String,
}

/// Fails with a usage error unless `path` is an existing file.
pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} not found: {}", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} directory not found: {}", path.display())))
    }
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                require_file(path, "config file")?;
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(CliError::Usage)?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        // relative paths in the file are taken relative to the file itself
        let base = args
            .config
            .as_deref()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let settings = Self {
            seed: args.seed.or(file.seed).unwrap_or(0),
            weights: args.weights.clone().or(rel(file.weights)),
            labels: args.labels.clone().or(rel(file.labels)),
            spec: args.spec.clone().or(rel(file.spec)),
            descriptors: args.descriptors.clone().or(rel(file.descriptors)),
            templates: args.templates.clone().or(rel(file.templates)),
            wpm: args.wpm.or(file.wpm).unwrap_or(DEFAULT_WPM),
            port: args.port.or(file.port).unwrap_or(DEFAULT_PORT),
            backend: args.backend.or(file.backend).unwrap_or(BackendKind::Mock),
            realtime: args.realtime || file.realtime.unwrap_or(false),
            llm_url: args.llm_url.clone().or(file.llm_url).unwrap_or_else(|| DEFAULT_BASE_URL.into()),
            llm_model: args.llm_model.clone().or(file.llm_model).unwrap_or_else(|| DEFAULT_MODEL.into()),
        };
        settings.validate()?;
        Ok(settings)
    }

    /// Every configured path must exist before a subcommand runs.
    fn validate(&self) -> Result<(), CliError> {
        for (path, what) in [
            (&self.weights, "weights file"),
            (&self.labels, "label map"),
            (&self.spec, "selection spec"),
            (&self.descriptors, "descriptor database"),
        ] {
            if let Some(p) = path {
                require_file(p, what)?;
            }
        }
        if let Some(dir) = &self.templates {
            require_dir(dir, "templates")?;
        }
        if !(self.wpm > 0.0 && self.wpm.is_finite()) {
            return Err(CliError::usage(format!("--wpm must be positive, got {}", self.wpm)));
        }
        Ok(())
    }

    pub fn selection_spec(&self) -> Result<SelectionSpec, CliError> {
        match &self.spec {
            Some(p) => SelectionSpec::load(p).map_err(|e| CliError::usage(e.to_string())),
            None => Ok(SelectionSpec::default()),
        }
    }

    pub fn label_map(&self, num_classes: usize) -> Result<LabelMap, CliError> {
        match &self.labels {
            Some(p) => {
                let labels = LabelMap::load(p).map_err(|e| CliError::usage(e.to_string()))?;
                if labels.len() != num_classes {
                    return Err(CliError::usage(format!(
                        "label map {} has {} glosses but the model has {num_classes} classes",
                        p.display(),
                        labels.len()
                    )));
                }
                Ok(labels)
            }
            None => Ok(LabelMap::placeholder(num_classes)),
        }
    }

    pub fn descriptor_db(&self) -> Result<DescriptorDb, CliError> {
        match &self.descriptors {
            Some(p) => load_descriptors(p).map_err(|e| CliError::usage(e.to_string())),
            None => Ok(DescriptorDb::sample()),
        }
    }

    pub fn prompt_template(&self) -> Result<PromptTemplate, CliError> {
        match &self.templates {
            Some(dir) => PromptTemplate::load_dir(dir).map_err(|e| CliError::usage(e.to_string())),
            None => Ok(PromptTemplate::default()),
        }
    }

    /// Loads `--weights` with the architecture from `model_config` or the
    /// weights sidecar.
    pub fn classifier(&self, model_config: Option<&Path>) -> Result<Classifier, CliError> {
        let weights = self
            .weights
            .as_deref()
            .ok_or_else(|| CliError::usage("--weights is required"))?;
        let cfg_path = match model_config {
            Some(p) => p.to_path_buf(),
            None => sidecar_path(weights),
        };
        require_file(&cfg_path, "model config")?;
        let cfg = ModelConfig::load(&cfg_path).map_err(|e| CliError::usage(format!("{}: {e}", cfg_path.display())))?;
        let store = load_weights(weights).map_err(|e| CliError::usage(format!("{}: {e}", weights.display())))?;
        Classifier::from_store(&store, &cfg).map_err(|e| CliError::usage(format!("{}: {e}", weights.display())))
    }
}

/// `model.sgnw` -> `model.sgnw.json`.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    let mut name = weights.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}
