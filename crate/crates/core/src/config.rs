//! Run configuration: a single TOML file with nested sections, hashed over a
//! canonical serialization so the config identity is stable under key
//! reordering in the source file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::BackendIds;
use crate::classify::{ClassifierKind, ClassifierSpec};
use crate::corpus::PromptVariant;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Use the split column of the labels CSV (the provided ADReSS split).
    Provided,
    /// Ignore CSV splits and re-split 70:30 stratified by group.
    Resplit7030,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub labels: PathBuf,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub stoplist: Option<PathBuf>,
    #[serde(default)]
    pub reference_image: Option<PathBuf>,
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".iuleak-cache")
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("iuleak-out")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabConfig {
    #[serde(default = "default_min_count")]
    pub min_count: usize,
}

fn default_min_count() -> usize {
    2
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig { min_count: default_min_count() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    #[serde(default = "default_fraction")]
    pub fraction: f64,
}

fn default_fraction() -> f64 {
    0.2
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { fraction: default_fraction() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierPair {
    #[serde(default = "default_text_spec")]
    pub text: ClassifierSpec,
    #[serde(default = "default_image_spec")]
    pub image: ClassifierSpec,
}

fn default_text_spec() -> ClassifierSpec {
    ClassifierSpec::feedforward(0)
}

/// Linear by default: the output-space attribution reads the classifier
/// gradient, which is only directly interpretable for a linear separator.
fn default_image_spec() -> ClassifierSpec {
    ClassifierSpec::max_margin(0)
}

impl Default for ClassifierPair {
    fn default() -> Self {
        ClassifierPair { text: default_text_spec(), image: default_image_spec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub backends: BackendIds,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_clip_limit")]
    pub clip_limit: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<PromptVariant>,
    #[serde(default = "default_split_mode")]
    pub split_mode: SplitMode,
    #[serde(default)]
    pub vocab: VocabConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub classifier: ClassifierPair,
}

fn default_clip_limit() -> usize {
    77
}

fn default_variants() -> Vec<PromptVariant> {
    vec![PromptVariant::Original]
}

fn default_split_mode() -> SplitMode {
    SplitMode::Provided
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip_limit < 1 {
            return Err(Error::Config("clip_limit must be >= 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if !(0.0..1.0).contains(&self.validation.fraction) {
            return Err(Error::Config("validation.fraction must be in [0,1)".into()));
        }
        if self.classifier.image.kind == ClassifierKind::Feedforward
            && self.classifier.image.hidden_layers == 0
        {
            return Err(Error::Config("image classifier hidden_layers must be >= 1".into()));
        }
        Ok(())
    }

    /// Identity hash of the run: canonical JSON of everything that affects
    /// results. Output and cache locations are excluded so moving artifact
    /// directories does not change the run identity.
    pub fn config_hash(&self) -> String {
        let mut identity = self.clone();
        identity.paths.cache_dir = PathBuf::new();
        identity.paths.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&identity).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
