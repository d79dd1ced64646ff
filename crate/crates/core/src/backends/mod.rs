//! Adapter contracts for every external model the pipeline touches, plus the
//! deterministic mock implementations used for desk-scale runs.
//!
//! Real adapters (Stable Diffusion, CLIP, Grounded-SAM, ...) are optional
//! extras wired in by id; the core test suite only ever touches the mocks.

pub mod mock;
pub mod tensor;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classify::TrainedClassifier;
use crate::corpus::Prompt;
use crate::error::{Error, Result};
use crate::iu::IUVocabulary;

/// A generated image: 8-bit RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageArtifact {
    pub pixels: Vec<u8>,
    pub height: u32,
    pub width: u32,
    pub prompt_id: String,
    pub seed: u64,
    pub backend_id: String,
}

impl ImageArtifact {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

/// A joint-space embedding. Stored as f32 so in-memory values and the
/// on-disk cache format agree exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub modality: Modality,
}

/// Pixel-level nonnegative saliency aligned to one image.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub values: Vec<f32>,
    pub height: u32,
    pub width: u32,
}

impl AttentionMap {
    pub fn at(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

/// A boolean localization mask for one information unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMask {
    pub values: Vec<bool>,
    pub height: u32,
    pub width: u32,
    pub label: String,
}

impl SegmentMask {
    /// Popcount of the mask; nonzero for any returned mask (detection
    /// absence is represented by an empty mask list, not an empty mask).
    pub fn area(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosLabel {
    Noun,
    Verb,
    Other,
}

pub trait Generator: Send + Sync {
    fn id(&self) -> &str;
    /// Token budget the backend enforces on prompts (77 for SD v2.1).
    fn clip_limit(&self) -> usize;
    /// The backend's own token counter, used by prompt clipping.
    fn count_tokens(&self, text: &str) -> usize;
    fn generate(&self, prompt: &Prompt, seed: u64) -> Result<ImageArtifact>;
    fn call_count(&self) -> usize {
        0
    }
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;
    fn embed_image(&self, image: &ImageArtifact) -> Result<EmbeddingVector>;
    fn call_count(&self) -> usize {
        0
    }
}

pub trait Segmenter: Send + Sync {
    fn id(&self) -> &str;
    /// Zero or more masks for `label`; empty means not detected.
    fn segment(&self, image: &ImageArtifact, label: &str) -> Result<Vec<SegmentMask>>;
    fn call_count(&self) -> usize {
        0
    }
}

pub trait Attender: Send + Sync {
    fn id(&self) -> &str;
    fn attend(&self, classifier: &TrainedClassifier, image: &ImageArtifact) -> Result<AttentionMap>;
    fn call_count(&self) -> usize {
        0
    }
}

pub trait PosTagger: Send + Sync {
    fn id(&self) -> &str;
    /// One label per input token.
    fn tag(&self, tokens: &[String]) -> Result<Vec<PosLabel>>;
    fn call_count(&self) -> usize {
        0
    }
}

/// Per-token feature attribution over a prompt, in prompt word order.
pub trait Explainer: Send + Sync {
    fn id(&self) -> &str;
    fn explain(&self, prompt: &Prompt, classifier: &TrainedClassifier) -> Result<Vec<f64>>;
    fn call_count(&self) -> usize {
        0
    }
}

/// Image-set quality scorer (IS / FID / LPIPS / TIFA-style adapters).
pub trait QualityScorer: Send + Sync {
    fn id(&self) -> &str;
    fn score(&self, images: &[ImageArtifact], reference: &ImageArtifact) -> Result<f64>;
    fn call_count(&self) -> usize {
        0
    }
}

/// Backend ids selected by the run config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIds {
    #[serde(default = "default_mock")]
    pub generator: String,
    #[serde(default = "default_mock")]
    pub embedder: String,
    #[serde(default = "default_mock")]
    pub segmenter: String,
    #[serde(default = "default_mock")]
    pub attender: String,
    #[serde(default = "default_mock")]
    pub tagger: String,
    #[serde(default = "default_mock")]
    pub explainer: String,
    /// Metric name (inception_score, distribution_distance,
    /// perceptual_distance, faithfulness, semantic_similarity) -> scorer id.
    #[serde(default)]
    pub scorers: BTreeMap<String, String>,
}

fn default_mock() -> String {
    "mock".to_string()
}

impl Default for BackendIds {
    fn default() -> Self {
        BackendIds {
            generator: default_mock(),
            embedder: default_mock(),
            segmenter: default_mock(),
            attender: default_mock(),
            tagger: default_mock(),
            explainer: default_mock(),
            scorers: BTreeMap::new(),
        }
    }
}

/// The resolved adapter set for one pipeline run.
pub struct BackendSet {
    pub generator: Arc<dyn Generator>,
    pub embedder: Arc<dyn Embedder>,
    pub segmenter: Arc<dyn Segmenter>,
    pub attender: Arc<dyn Attender>,
    pub explainer: Arc<dyn Explainer>,
    pub scorers: BTreeMap<String, Arc<dyn QualityScorer>>,
}

impl BackendSet {
    pub fn total_calls(&self) -> usize {
        self.generator.call_count()
            + self.embedder.call_count()
            + self.segmenter.call_count()
            + self.attender.call_count()
            + self.explainer.call_count()
            + self.scorers.values().map(|s| s.call_count()).sum::<usize>()
    }
}

/// Resolve a tagger id. The tagger is vocabulary-independent and therefore
/// resolvable before the vocabulary exists.
pub fn make_tagger(id: &str) -> Result<Arc<dyn PosTagger>> {
    match id {
        "mock" => Ok(Arc::new(mock::MockTagger::new())),
        other => Err(Error::Config(format!("unknown tagger backend `{other}`"))),
    }
}

/// Resolve the remaining backends once the vocabulary is known.
pub fn make_backends(ids: &BackendIds, vocab: &IUVocabulary) -> Result<BackendSet> {
    let vocab = Arc::new(vocab.clone());
    let generator: Arc<dyn Generator> = match ids.generator.as_str() {
        "mock" => Arc::new(mock::MockGenerator::new(vocab.clone())),
        other => return Err(Error::Config(format!("unknown generator backend `{other}`"))),
    };
    let embedder: Arc<dyn Embedder> = match ids.embedder.as_str() {
        "mock" => Arc::new(mock::MockEmbedder::new(vocab.clone())),
        other => return Err(Error::Config(format!("unknown embedder backend `{other}`"))),
    };
    let segmenter: Arc<dyn Segmenter> = match ids.segmenter.as_str() {
        "mock" => Arc::new(mock::MockSegmenter::new(vocab.clone())),
        other => return Err(Error::Config(format!("unknown segmenter backend `{other}`"))),
    };
    let attender: Arc<dyn Attender> = match ids.attender.as_str() {
        "mock" => Arc::new(mock::MockAttender::new(vocab.clone())),
        other => return Err(Error::Config(format!("unknown attender backend `{other}`"))),
    };
    let explainer: Arc<dyn Explainer> = match ids.explainer.as_str() {
        "mock" => Arc::new(mock::MockExplainer::new(vocab.clone())),
        other => return Err(Error::Config(format!("unknown explainer backend `{other}`"))),
    };
    let mut scorers: BTreeMap<String, Arc<dyn QualityScorer>> = BTreeMap::new();
    for (metric, scorer_id) in &ids.scorers {
        let scorer: Arc<dyn QualityScorer> = match scorer_id.as_str() {
            "mock" => Arc::new(mock::MockQualityScorer::new(metric)),
            other => {
                return Err(Error::Config(format!(
                    "unknown scorer backend `{other}` for metric `{metric}`"
                )))
            }
        };
        scorers.insert(metric.clone(), scorer);
    }
    Ok(BackendSet { generator, embedder, segmenter, attender, explainer, scorers })
}
