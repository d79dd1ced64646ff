//! Deterministic mock backends. Each mock is a pure function of its inputs
//! plus the vocabulary, so the whole pipeline is testable without GPUs and
//! every artifact is bit-reproducible.
//!
//! The mock generator renders each vocabulary IU found in the prompt as a
//! small grayscale rectangle inside a cell reserved for that IU's vocabulary
//! position; the background is hash noise constrained to be non-grayscale.
//! The segmenter and embedder recover IU presence exactly by scanning those
//! cells, which gives the pipeline its analytic closure property: an IU is
//! detected in the image iff it occurred in the prompt.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{
    AttentionMap, Attender, Embedder, EmbeddingVector, Explainer, Generator, ImageArtifact,
    Modality, PosLabel, PosTagger, QualityScorer, SegmentMask, Segmenter,
};
use crate::classify::TrainedClassifier;
use crate::corpus::Prompt;
use crate::error::{Error, Result};
use crate::iu::IUVocabulary;
use crate::lemma::lemmatize;

pub const MOCK_IMAGE_SIZE: u32 = 128;
const CELL: u32 = 8;
const GRID: u32 = MOCK_IMAGE_SIZE / CELL;
pub const MOCK_MAX_UNITS: usize = (GRID * GRID) as usize;
/// Extra embedding dimensions fed from content hashes.
pub const MOCK_NOISE_DIMS: usize = 8;
pub const MOCK_CLIP_LIMIT: usize = 77;

fn hash_bytes(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    hasher.finalize().into()
}

fn hash_seed(parts: &[&[u8]]) -> u64 {
    let h = hash_bytes(parts);
    u64::from_le_bytes(h[..8].try_into().unwrap())
}

/// The fixed rectangle the mock generator uses for one IU: cell position
/// comes from the vocabulary index, inner geometry and fill from a hash of
/// the lemma.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub fill: u8,
}

impl Region {
    pub fn area(&self) -> usize {
        (self.w * self.h) as usize
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

pub fn region_of(lemma: &str, vocab_index: usize) -> Region {
    let h = hash_bytes(&[b"region", lemma.as_bytes()]);
    let w = 4 + (h[0] % 3) as u32;
    let hh = 4 + (h[1] % 3) as u32;
    let ox = (h[2] as u32) % (CELL - w + 1);
    let oy = (h[3] as u32) % (CELL - hh + 1);
    let cx = (vocab_index as u32 % GRID) * CELL;
    let cy = (vocab_index as u32 / GRID) * CELL;
    Region { x: cx + ox, y: cy + oy, w, h: hh, fill: h[4] }
}

/// Vocabulary units present in a prompt text, by lemma match on whitespace
/// words (surface forms included).
fn present_units(vocab: &IUVocabulary, text: &str) -> Vec<usize> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let lemmas: std::collections::BTreeSet<String> =
        words.iter().map(|w| lemmatize(w)).collect();
    vocab
        .units
        .iter()
        .enumerate()
        .filter(|(_, u)| {
            lemmas.contains(&u.lemma)
                || u.surface_forms.iter().any(|s| words.contains(&s.as_str()))
        })
        .map(|(j, _)| j)
        .collect()
}

fn rect_is_filled(image: &ImageArtifact, region: &Region) -> bool {
    for y in region.y..region.y + region.h {
        for x in region.x..region.x + region.w {
            let [r, g, b] = image.pixel(x, y);
            if r != g || g != b || r != region.fill {
                return false;
            }
        }
    }
    true
}

fn image_features(vocab: &IUVocabulary, image: &ImageArtifact) -> Vec<f32> {
    let mut features = vec![0.0f32; vocab.len() + MOCK_NOISE_DIMS];
    for (j, unit) in vocab.units.iter().enumerate() {
        if j >= MOCK_MAX_UNITS {
            break;
        }
        if rect_is_filled(image, &region_of(&unit.lemma, j)) {
            features[j] = 1.0;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hash_seed(&[b"image-tail", &image.pixels]));
    for k in 0..MOCK_NOISE_DIMS {
        features[vocab.len() + k] = (rng.gen::<f64>() * 0.05) as f32;
    }
    features
}

fn text_features(vocab: &IUVocabulary, text: &str) -> Vec<f32> {
    let mut features = vec![0.0f32; vocab.len() + MOCK_NOISE_DIMS];
    for j in present_units(vocab, text) {
        features[j] = 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hash_seed(&[b"text-tail", text.as_bytes()]));
    for k in 0..MOCK_NOISE_DIMS {
        features[vocab.len() + k] = (rng.gen::<f64>() * 0.05) as f32;
    }
    features
}

fn normalize(mut values: Vec<f32>) -> Vec<f32> {
    let norm = values.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
    }
    values
}

pub struct MockGenerator {
    vocab: Arc<IUVocabulary>,
    calls: AtomicUsize,
}

impl MockGenerator {
    pub fn new(vocab: Arc<IUVocabulary>) -> Self {
        MockGenerator { vocab, calls: AtomicUsize::new(0) }
    }
}

impl Generator for MockGenerator {
    fn id(&self) -> &str {
        "mock"
    }

    fn clip_limit(&self) -> usize {
        MOCK_CLIP_LIMIT
    }

    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn generate(&self, prompt: &Prompt, seed: u64) -> Result<ImageArtifact> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        // defensive self-clip, mirroring SD's tokenizer behavior
        let words: Vec<&str> = prompt.text.split_whitespace().take(MOCK_CLIP_LIMIT).collect();
        let text = words.join(" ");

        let size = MOCK_IMAGE_SIZE;
        let n = (size * size) as usize;
        let mut pixels = vec![0u8; n * 3];
        let mut rng = ChaCha8Rng::seed_from_u64(hash_seed(&[
            b"generate",
            text.as_bytes(),
            &seed.to_le_bytes(),
        ]));
        rng.fill(&mut pixels[..]);
        // background noise is never grayscale, so IU fill rectangles are
        // recoverable exactly
        for p in pixels.chunks_exact_mut(3) {
            if p[0] == p[1] {
                p[1] ^= 0x80;
            }
        }

        for j in present_units(&self.vocab, &text) {
            if j >= MOCK_MAX_UNITS {
                return Err(Error::backend(
                    self.id(),
                    "generate",
                    Some(&prompt.record_id),
                    format!("mock generator supports at most {MOCK_MAX_UNITS} vocabulary units"),
                ));
            }
            let region = region_of(&self.vocab.units[j].lemma, j);
            for y in region.y..region.y + region.h {
                for x in region.x..region.x + region.w {
                    let i = 3 * (y * size + x) as usize;
                    pixels[i] = region.fill;
                    pixels[i + 1] = region.fill;
                    pixels[i + 2] = region.fill;
                }
            }
        }

        Ok(ImageArtifact {
            pixels,
            height: size,
            width: size,
            prompt_id: prompt.record_id.clone(),
            seed,
            backend_id: self.id().to_string(),
        })
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

pub struct MockEmbedder {
    vocab: Arc<IUVocabulary>,
    calls: AtomicUsize,
}

impl MockEmbedder {
    pub fn new(vocab: Arc<IUVocabulary>) -> Self {
        MockEmbedder { vocab, calls: AtomicUsize::new(0) }
    }
}

impl Embedder for MockEmbedder {
    fn id(&self) -> &str {
        "mock"
    }

    fn dim(&self) -> usize {
        self.vocab.len() + MOCK_NOISE_DIMS
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if text.trim().is_empty() {
            return Err(Error::Validation("cannot embed empty text".into()));
        }
        Ok(EmbeddingVector {
            values: normalize(text_features(&self.vocab, text)),
            modality: Modality::Text,
        })
    }

    fn embed_image(&self, image: &ImageArtifact) -> Result<EmbeddingVector> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if image.pixels.is_empty() {
            return Err(Error::Validation("cannot embed empty image".into()));
        }
        Ok(EmbeddingVector {
            values: normalize(image_features(&self.vocab, image)),
            modality: Modality::Image,
        })
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

pub struct MockSegmenter {
    vocab: Arc<IUVocabulary>,
    calls: AtomicUsize,
}

impl MockSegmenter {
    pub fn new(vocab: Arc<IUVocabulary>) -> Self {
        MockSegmenter { vocab, calls: AtomicUsize::new(0) }
    }
}

impl Segmenter for MockSegmenter {
    fn id(&self) -> &str {
        "mock"
    }

    fn segment(&self, image: &ImageArtifact, label: &str) -> Result<Vec<SegmentMask>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let Some(j) = self.vocab.position(label) else {
            return Err(Error::Validation(format!("label `{label}` not in vocabulary")));
        };
        if j >= MOCK_MAX_UNITS {
            return Ok(Vec::new());
        }
        let region = region_of(label, j);
        if !rect_is_filled(image, &region) {
            return Ok(Vec::new());
        }
        let mut values = vec![false; (image.height * image.width) as usize];
        for y in region.y..region.y + region.h {
            for x in region.x..region.x + region.w {
                values[(y * image.width + x) as usize] = true;
            }
        }
        Ok(vec![SegmentMask {
            values,
            height: image.height,
            width: image.width,
            label: label.to_string(),
        }])
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

pub struct MockAttender {
    vocab: Arc<IUVocabulary>,
    calls: AtomicUsize,
}

impl MockAttender {
    pub fn new(vocab: Arc<IUVocabulary>) -> Self {
        MockAttender { vocab, calls: AtomicUsize::new(0) }
    }
}

impl Attender for MockAttender {
    fn id(&self) -> &str {
        "mock"
    }

    /// |d decision / d feature_j| spread uniformly over IU j's region for
    /// every region the generator placed; zero elsewhere.
    fn attend(&self, classifier: &TrainedClassifier, image: &ImageArtifact) -> Result<AttentionMap> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let features = image_features(&self.vocab, image);
        if classifier.input_dim() != features.len() {
            return Err(Error::Validation(format!(
                "classifier input_dim {} does not match mock embedding dim {}",
                classifier.input_dim(),
                features.len()
            )));
        }
        let grad = classifier.decision_gradient(&normalize(features.clone()));
        let mut values = vec![0.0f32; (image.height * image.width) as usize];
        for (j, unit) in self.vocab.units.iter().enumerate() {
            if j >= MOCK_MAX_UNITS || features[j] == 0.0 {
                continue;
            }
            let region = region_of(&unit.lemma, j);
            let v = (grad[j].abs() / region.area() as f64) as f32;
            for y in region.y..region.y + region.h {
                for x in region.x..region.x + region.w {
                    values[(y * image.width + x) as usize] = v;
                }
            }
        }
        Ok(AttentionMap { values, height: image.height, width: image.width })
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

pub struct MockExplainer {
    vocab: Arc<IUVocabulary>,
    calls: AtomicUsize,
}

impl MockExplainer {
    pub fn new(vocab: Arc<IUVocabulary>) -> Self {
        MockExplainer { vocab, calls: AtomicUsize::new(0) }
    }
}

impl Explainer for MockExplainer {
    fn id(&self) -> &str {
        "mock"
    }

    /// Token importance = |gradient of the decision value w.r.t. the token's
    /// vocabulary feature|; non-vocabulary tokens get zero.
    fn explain(&self, prompt: &Prompt, classifier: &TrainedClassifier) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let features = text_features(&self.vocab, &prompt.text);
        if classifier.input_dim() != features.len() {
            return Err(Error::Validation(format!(
                "classifier input_dim {} does not match mock embedding dim {}",
                classifier.input_dim(),
                features.len()
            )));
        }
        let grad = classifier.decision_gradient(&normalize(features));
        Ok(prompt
            .text
            .split_whitespace()
            .map(|word| {
                let lemma = lemmatize(word);
                match self.vocab.position(&lemma) {
                    Some(j) => grad[j].abs(),
                    None => 0.0,
                }
            })
            .collect())
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

pub struct MockTagger {
    calls: AtomicUsize,
}

/// Bundled lexicon of picture-description nouns and verbs; everything else
/// tags as `other`.
const NOUNS: &[&str] = &[
    "apron", "bench", "boy", "cabinet", "chair", "child", "cloth", "cookie", "counter", "cup",
    "curtain", "dish", "dog", "door", "exterior", "faucet", "floor", "garden", "girl", "glass",
    "hand", "house", "jar", "kitchen", "knife", "lid", "man", "mother", "plate", "shelf", "sink",
    "sister", "stool", "table", "towel", "tree", "water", "window", "woman", "yard",
];
const VERBS: &[&str] = &[
    "ask", "break", "climb", "close", "do", "drop", "dry", "eat", "fall", "get", "give", "go",
    "grab", "have", "help", "hold", "know", "laugh", "look", "open", "overflow", "play", "pour",
    "reach", "run", "say", "see", "spill", "stand", "steal", "take", "think", "tip", "want",
    "wash", "watch", "wobble", "be",
];

impl MockTagger {
    pub fn new() -> Self {
        MockTagger { calls: AtomicUsize::new(0) }
    }
}

impl Default for MockTagger {
    fn default() -> Self {
        Self::new()
    }
}

impl PosTagger for MockTagger {
    fn id(&self) -> &str {
        "mock"
    }

    fn tag(&self, tokens: &[String]) -> Result<Vec<PosLabel>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(tokens
            .iter()
            .map(|t| {
                let lemma = lemmatize(t);
                if NOUNS.contains(&lemma.as_str()) {
                    PosLabel::Noun
                } else if VERBS.contains(&lemma.as_str()) {
                    PosLabel::Verb
                } else {
                    PosLabel::Other
                }
            })
            .collect())
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

pub struct MockQualityScorer {
    metric: String,
    calls: AtomicUsize,
}

impl MockQualityScorer {
    pub fn new(metric: &str) -> Self {
        MockQualityScorer { metric: metric.to_string(), calls: AtomicUsize::new(0) }
    }
}

fn mean_pixel(image: &ImageArtifact) -> f64 {
    image.pixels.iter().map(|p| *p as f64).sum::<f64>() / image.pixels.len() as f64
}

impl QualityScorer for MockQualityScorer {
    fn id(&self) -> &str {
        "mock"
    }

    fn score(&self, images: &[ImageArtifact], reference: &ImageArtifact) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if images.is_empty() {
            return Err(Error::Validation("empty image list for quality scoring".into()));
        }
        let set_mean = images.iter().map(mean_pixel).sum::<f64>() / images.len() as f64;
        let ref_mean = mean_pixel(reference);
        let distance = (set_mean - ref_mean).abs() / 255.0;
        Ok(match self.metric.as_str() {
            "inception_score" => {
                // spread of per-image means, shifted to the IS-like >= 1 range
                let var = images
                    .iter()
                    .map(|i| (mean_pixel(i) - set_mean).powi(2))
                    .sum::<f64>()
                    / images.len() as f64;
                1.0 + var.sqrt() / 255.0
            }
            "faithfulness" => 1.0 / (1.0 + distance),
            // distribution_distance, perceptual_distance, anything else
            _ => distance,
        })
    }

    fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}
