//! Full-audit orchestration: ingest -> vocabulary -> generation -> embedding
//! -> training -> attribution -> metrics -> report, with content-addressed
//! caching and seeded determinism. The no-discourse ablation reruns every
//! downstream stage on stripped prompts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Cursor;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::attribution::{
    input_contributions, output_contributions, summarize_groups, ContributionTable,
};
use crate::backends::{
    make_backends, make_tagger, tensor, BackendSet, EmbeddingVector, ImageArtifact, Modality,
    PosTagger,
};
use crate::classify::{evaluate, train, TrainedClassifier};
use crate::config::{RunConfig, SplitMode};
use crate::corpus::{
    carve_validation, load_manifest, make_prompt, DatasetManifest, DiscourseLexicon, Group,
    Prompt, PromptVariant, Split,
};
use crate::error::{Error, Result};
use crate::iu::{
    build_vocabulary, group_frequency, membership, IUVocabulary, MembershipMatrix, VocabFilters,
};
use crate::metrics::{cosine, ecs_avg, image_quality, ips_avg, QualityScores, UtilityReport};
use crate::report::{AuditReport, VariantReport};

pub fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stable digest over a stage name, upstream artifact hashes, and the config
/// keys relevant to the stage. Changing any of them changes the digest;
/// unrelated config keys never enter a slice.
pub fn cache_key(stage: &str, input_hashes: &[String], config_slice: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(stage.as_bytes());
    hasher.update([0u8]);
    for h in input_hashes {
        hasher.update(h.as_bytes());
        hasher.update([0u8]);
    }
    hasher.update(serde_json::to_vec(config_slice).expect("slice serializes"));
    hex::encode(hasher.finalize())
}

/// Flat on-disk artifact cache: `<root>/<stage>/<key>.<ext>` with an optional
/// JSON sidecar at `<key>.json`.
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: &Path) -> Result<Cache> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Cache { root: root.to_path_buf() })
    }

    fn file(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(stage).join(format!("{key}.{ext}"))
    }

    pub fn get(&self, stage: &str, key: &str, ext: &str) -> Option<Vec<u8>> {
        std::fs::read(self.file(stage, key, ext)).ok()
    }

    pub fn put(
        &self,
        stage: &str,
        key: &str,
        ext: &str,
        bytes: &[u8],
        sidecar: Option<&serde_json::Value>,
    ) -> Result<()> {
        let path = self.file(stage, key, ext);
        let dir = path.parent().expect("cache file has parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        if let Some(meta) = sidecar {
            let meta_path = self.file(stage, key, "json");
            std::fs::write(&meta_path, serde_json::to_vec_pretty(meta).unwrap())
                .map_err(|e| Error::io(&meta_path, e))?;
        }
        Ok(())
    }
}

/// Stratified 70:30 train/test re-split, then the validation carve-out.
fn resplit_70_30(manifest: &DatasetManifest, seed: u64) -> DatasetManifest {
    let mut records = manifest.records.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7030);
    for group in Group::ALL {
        let mut ids: Vec<String> = records
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.id.clone())
            .collect();
        let k = (0.3 * ids.len() as f64 + 0.5).floor() as usize;
        ids.shuffle(&mut rng);
        let test_ids: BTreeSet<&String> = ids.iter().take(k).collect();
        for r in records.iter_mut() {
            if r.group == group {
                r.split = if test_ids.contains(&r.id) { Split::Test } else { Split::Train };
            }
        }
    }
    DatasetManifest::new(records, manifest.seed)
}

pub fn apply_splits(manifest: &DatasetManifest, config: &RunConfig) -> Result<DatasetManifest> {
    let manifest = match config.split_mode {
        SplitMode::Provided => manifest.clone(),
        SplitMode::Resplit7030 => resplit_70_30(manifest, config.seed),
    };
    carve_validation(&manifest, config.validation.fraction, config.seed)
}

fn corpus_hash(manifest: &DatasetManifest) -> String {
    let mut hasher = Sha256::new();
    for r in &manifest.records {
        hasher.update(r.id.as_bytes());
        hasher.update([0u8]);
        hasher.update(r.group.to_string().as_bytes());
        hasher.update(r.split.to_string().as_bytes());
        hasher.update(r.raw_text.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

pub fn load_lexicon(config: &RunConfig) -> Result<DiscourseLexicon> {
    match &config.paths.lexicon {
        Some(path) => DiscourseLexicon::from_file(path),
        None => Ok(DiscourseLexicon::default_lexicon()),
    }
}

pub fn load_filters(config: &RunConfig) -> Result<VocabFilters> {
    let filters = VocabFilters { min_count: config.vocab.min_count, ..VocabFilters::default() };
    match &config.paths.stoplist {
        Some(path) => filters.with_stoplist_file(path),
        None => Ok(filters),
    }
}

/// Build (or load from cache) the IU vocabulary over the entire dataset.
pub fn cached_vocabulary(
    cache: &Cache,
    manifest: &DatasetManifest,
    tagger: &dyn PosTagger,
    filters: &VocabFilters,
    lexicon: &DiscourseLexicon,
) -> Result<IUVocabulary> {
    let slice = serde_json::json!({
        "tagger": tagger.id(),
        "min_count": filters.min_count,
        "stoplist": filters.stoplist,
        "lexicon": lexicon.tokens,
    });
    let key = cache_key("vocab", &[corpus_hash(manifest)], &slice);
    if let Some(bytes) = cache.get("vocab", &key, "vocab.json") {
        let json = String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))?;
        return IUVocabulary::from_json(&json);
    }
    let vocab = build_vocabulary(manifest, tagger, filters, lexicon)?;
    cache.put("vocab", &key, "vocab.json", vocab.to_json().as_bytes(), None)?;
    Ok(vocab)
}

fn encode_png(image: &ImageArtifact) -> Result<Vec<u8>> {
    let rgb = image::RgbImage::from_raw(image.width, image.height, image.pixels.clone())
        .ok_or_else(|| Error::Data("image buffer size mismatch".into()))?;
    let mut bytes = Vec::new();
    rgb.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Data(format!("png encode failed: {e}")))?;
    Ok(bytes)
}

fn decode_png(bytes: &[u8], prompt_id: &str, seed: u64, backend_id: &str) -> Result<ImageArtifact> {
    let decoded = image::load_from_memory(bytes)
        .map_err(|e| Error::Data(format!("png decode failed: {e}")))?
        .to_rgb8();
    Ok(ImageArtifact {
        height: decoded.height(),
        width: decoded.width(),
        pixels: decoded.into_raw(),
        prompt_id: prompt_id.to_string(),
        seed,
        backend_id: backend_id.to_string(),
    })
}

pub fn load_reference_image(path: &Path) -> Result<ImageArtifact> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, "reference", 0, "reference")
}

fn cached_image(
    cache: &Cache,
    backends: &BackendSet,
    prompt: &Prompt,
    seed: u64,
    config_sha: &str,
) -> Result<ImageArtifact> {
    let slice = serde_json::json!({
        "generator": backends.generator.id(),
        "seed": seed,
    });
    let key = cache_key("generate", &[sha_hex(prompt.text.as_bytes())], &slice);
    if let Some(bytes) = cache.get("generate", &key, "png") {
        return decode_png(&bytes, &prompt.record_id, seed, backends.generator.id());
    }
    let image = backends.generator.generate(prompt, seed)?;
    let sidecar = serde_json::json!({
        "prompt_id": prompt.record_id,
        "seed": seed,
        "backend_id": backends.generator.id(),
        "sha256": config_sha,
    });
    cache.put("generate", &key, "png", &encode_png(&image)?, Some(&sidecar))?;
    Ok(image)
}

fn cached_embedding(
    cache: &Cache,
    stage: &str,
    key: &str,
    modality: Modality,
    sidecar: serde_json::Value,
    compute: impl FnOnce() -> Result<EmbeddingVector>,
) -> Result<EmbeddingVector> {
    if let Some(bytes) = cache.get(stage, key, "iulk") {
        let (_, values) = tensor::decode_f32(&bytes)?;
        return Ok(EmbeddingVector { values, modality });
    }
    let embedding = compute()?;
    let blob = tensor::encode_f32(&[embedding.values.len()], &embedding.values);
    cache.put(stage, key, "iulk", &blob, Some(&sidecar))?;
    Ok(embedding)
}

fn cached_table(
    cache: &Cache,
    stage: &str,
    key: &str,
    compute: impl FnOnce() -> Result<ContributionTable>,
) -> Result<ContributionTable> {
    if let Some(bytes) = cache.get(stage, key, "table.json") {
        return serde_json::from_slice(&bytes)
            .map_err(|e| Error::Data(format!("bad cached table: {e}")));
    }
    let table = compute()?;
    cache.put(stage, key, "table.json", &serde_json::to_vec_pretty(&table).unwrap(), None)?;
    Ok(table)
}

fn filter_membership(matrix: &MembershipMatrix, keep: &BTreeSet<String>) -> MembershipMatrix {
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (i, id) in matrix.rows.iter().enumerate() {
        if keep.contains(id) {
            rows.push(id.clone());
            values.extend_from_slice(matrix.row(i));
        }
    }
    MembershipMatrix { rows, columns: matrix.columns.clone(), values }
}

fn filter_table(table: &ContributionTable, keep: &BTreeSet<String>) -> ContributionTable {
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (i, id) in table.rows.iter().enumerate() {
        if keep.contains(id) {
            rows.push(id.clone());
            values.extend_from_slice(table.row(i));
        }
    }
    ContributionTable {
        rows,
        columns: table.columns.clone(),
        values,
        space: table.space,
        variant: table.variant,
    }
}

/// Artifact counts from a partial (ingest/generate/embed) pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageCounts {
    pub records: usize,
    pub vocabulary: usize,
    pub prompts: usize,
    pub images: usize,
    pub embeddings: usize,
}

/// Materialize prompts and images (and optionally embeddings) for every
/// configured variant into the cache, without training or scoring.
pub fn materialize(config: &RunConfig, with_embeddings: bool) -> Result<StageCounts> {
    config.validate()?;
    let config_sha = config.config_hash();
    let lexicon = load_lexicon(config)?;
    let filters = load_filters(config)?;
    let manifest = load_manifest(&config.paths.data_dir, &config.paths.labels, config.seed)?;
    let manifest = apply_splits(&manifest, config)?;
    let cache = Cache::new(&config.paths.cache_dir)?;
    let tagger = make_tagger(&config.backends.tagger)?;
    let vocab = cached_vocabulary(&cache, &manifest, tagger.as_ref(), &filters, &lexicon)?;
    let vocab_hash = sha_hex(vocab.to_json().as_bytes());
    let backends = make_backends(&config.backends, &vocab)?;
    let clip_limit = config.clip_limit.min(backends.generator.clip_limit());

    let mut counts = StageCounts {
        records: manifest.records.len(),
        vocabulary: vocab.len(),
        prompts: 0,
        images: 0,
        embeddings: 0,
    };
    let counter = |text: &str| backends.generator.count_tokens(text);
    let mut seen = BTreeSet::new();
    for &variant in &config.variants {
        if !seen.insert(variant) {
            continue;
        }
        for record in &manifest.records {
            let prompt = make_prompt(record, variant, &lexicon, clip_limit, &counter);
            counts.prompts += 1;
            let image = cached_image(&cache, &backends, &prompt, config.seed, &config_sha)?;
            counts.images += 1;
            if !with_embeddings {
                continue;
            }
            let text_key = cache_key(
                "embed_text",
                &[sha_hex(prompt.text.as_bytes()), vocab_hash.clone()],
                &serde_json::json!({"embedder": backends.embedder.id()}),
            );
            let sidecar = serde_json::json!({
                "prompt_id": prompt.record_id,
                "seed": config.seed,
                "backend_id": backends.embedder.id(),
                "sha256": config_sha,
            });
            cached_embedding(&cache, "embed_text", &text_key, Modality::Text, sidecar.clone(), || {
                backends.embedder.embed_text(&prompt.text)
            })?;
            let image_key = cache_key(
                "embed_image",
                &[sha_hex(&image.pixels), vocab_hash.clone()],
                &serde_json::json!({"embedder": backends.embedder.id()}),
            );
            cached_embedding(&cache, "embed_image", &image_key, Modality::Image, sidecar, || {
                backends.embedder.embed_image(&image)
            })?;
            counts.embeddings += 2;
        }
    }
    Ok(counts)
}

/// Everything a full audit produces besides the report itself.
pub struct AuditOutcome {
    pub report: AuditReport,
    pub tables: Vec<ContributionTable>,
    /// Per-variant (text, image) classifiers, keyed by variant name.
    pub classifiers: BTreeMap<String, (TrainedClassifier, TrainedClassifier)>,
    pub vocab_hash: String,
    /// Backend invocations performed during this run (zero on a warm cache).
    pub backend_calls: usize,
}

pub fn run_audit(config: &RunConfig) -> Result<AuditOutcome> {
    config.validate()?;
    let config_sha = config.config_hash();
    let lexicon = load_lexicon(config)?;
    if config.variants.contains(&PromptVariant::NoDiscourse) && lexicon.tokens.is_empty() {
        return Err(Error::Config(
            "discourse lexicon must be non-empty when the no_discourse variant is enabled".into(),
        ));
    }
    let filters = load_filters(config)?;
    let manifest = load_manifest(&config.paths.data_dir, &config.paths.labels, config.seed)?;
    let manifest = apply_splits(&manifest, config)?;
    let cache = Cache::new(&config.paths.cache_dir)?;

    let tagger = make_tagger(&config.backends.tagger)?;
    let vocab = cached_vocabulary(&cache, &manifest, tagger.as_ref(), &filters, &lexicon)?;
    for unit in &vocab.units {
        if lexicon.contains(&unit.lemma) {
            return Err(Error::Validation(format!(
                "vocabulary lemma `{}` collides with the discourse lexicon",
                unit.lemma
            )));
        }
    }
    let vocab_hash = sha_hex(vocab.to_json().as_bytes());
    let backends = make_backends(&config.backends, &vocab)?;
    let groups_map = manifest.group_of();
    let clip_limit = config.clip_limit.min(backends.generator.clip_limit());

    let reference = match &config.paths.reference_image {
        Some(path) => Some(load_reference_image(path)?),
        None => None,
    };

    let mut variant_reports = BTreeMap::new();
    let mut tables = Vec::new();
    let mut classifiers = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for &variant in &config.variants {
        if !seen.insert(variant) {
            continue;
        }
        let (report, mut variant_tables, pair) = run_variant(
            config,
            &cache,
            &backends,
            &manifest,
            &vocab,
            &vocab_hash,
            &lexicon,
            &groups_map,
            clip_limit,
            variant,
            reference.as_ref(),
            &config_sha,
        )?;
        variant_reports.insert(variant.to_string(), report);
        tables.append(&mut variant_tables);
        classifiers.insert(variant.to_string(), pair);
    }

    let report = AuditReport {
        config_hash: config_sha,
        seed: config.seed,
        split_mode: config.split_mode,
        backend_ids: config.backends.clone(),
        vocabulary: vocab.lemmas(),
        variants: variant_reports,
        notes: vec![
            "vocabulary is built over the entire dataset (train+val+test)".into(),
            "IU membership and contribution matching is lemma-based".into(),
        ],
    };
    let backend_calls = backends.total_calls() + tagger.call_count();
    Ok(AuditOutcome { report, tables, classifiers, vocab_hash, backend_calls })
}

#[allow(clippy::too_many_arguments)]
fn run_variant(
    config: &RunConfig,
    cache: &Cache,
    backends: &BackendSet,
    manifest: &DatasetManifest,
    vocab: &IUVocabulary,
    vocab_hash: &str,
    lexicon: &DiscourseLexicon,
    groups_map: &BTreeMap<String, Group>,
    clip_limit: usize,
    variant: PromptVariant,
    reference: Option<&ImageArtifact>,
    config_sha: &str,
) -> Result<(VariantReport, Vec<ContributionTable>, (TrainedClassifier, TrainedClassifier))> {
    let counter = |text: &str| backends.generator.count_tokens(text);
    let prompts: Vec<Prompt> = manifest
        .records
        .iter()
        .map(|r| make_prompt(r, variant, lexicon, clip_limit, &counter))
        .collect();

    // generation + embeddings, cache-backed per sample
    let mut images = Vec::with_capacity(prompts.len());
    let mut text_embeddings = Vec::with_capacity(prompts.len());
    let mut image_embeddings = Vec::with_capacity(prompts.len());
    for prompt in &prompts {
        let image = cached_image(cache, backends, prompt, config.seed, config_sha)?;
        let text_key = cache_key(
            "embed_text",
            &[sha_hex(prompt.text.as_bytes()), vocab_hash.to_string()],
            &serde_json::json!({"embedder": backends.embedder.id()}),
        );
        let text_sidecar = serde_json::json!({
            "prompt_id": prompt.record_id,
            "seed": config.seed,
            "backend_id": backends.embedder.id(),
            "sha256": config_sha,
        });
        text_embeddings.push(cached_embedding(
            cache,
            "embed_text",
            &text_key,
            Modality::Text,
            text_sidecar,
            || backends.embedder.embed_text(&prompt.text),
        )?);
        let image_key = cache_key(
            "embed_image",
            &[sha_hex(&image.pixels), vocab_hash.to_string()],
            &serde_json::json!({"embedder": backends.embedder.id()}),
        );
        let image_sidecar = serde_json::json!({
            "prompt_id": prompt.record_id,
            "seed": config.seed,
            "backend_id": backends.embedder.id(),
            "sha256": config_sha,
        });
        image_embeddings.push(cached_embedding(
            cache,
            "embed_image",
            &image_key,
            Modality::Image,
            image_sidecar,
            || backends.embedder.embed_image(&image),
        )?);
        images.push(image);
    }

    // split indices
    let idx_of = |split: Split| -> Vec<usize> {
        manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    };
    let train_idx = idx_of(Split::Train);
    let val_idx = idx_of(Split::Val);
    let test_idx = idx_of(Split::Test);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Data("manifest needs non-empty train and test splits".into()));
    }

    let select = |idx: &[usize], source: &[EmbeddingVector]| -> Vec<EmbeddingVector> {
        idx.iter().map(|&i| source[i].clone()).collect()
    };
    let labels_of = |idx: &[usize]| -> Vec<Group> {
        idx.iter().map(|&i| manifest.records[i].group).collect()
    };

    let stage = |name: &str, e: Error| -> Error {
        match e {
            Error::Backend { backend_id, sample_id, message, .. } => Error::Backend {
                backend_id,
                stage: name.to_string(),
                sample_id,
                message,
            },
            other => other,
        }
    };

    // classifier training (pure and deterministic, so not disk-cached)
    let train_pair = |spec, source: &[EmbeddingVector]| -> Result<TrainedClassifier> {
        let val_e = select(&val_idx, source);
        let val_l = labels_of(&val_idx);
        let val = if val_idx.is_empty() { None } else { Some((&val_e[..], &val_l[..])) };
        train(&select(&train_idx, source), &labels_of(&train_idx), spec, val)
    };
    let text_clf = train_pair(&config.classifier.text, &text_embeddings)?;
    let image_clf = train_pair(&config.classifier.image, &image_embeddings)?;

    let input_eval = evaluate(&text_clf, &select(&test_idx, &text_embeddings), &labels_of(&test_idx))?;
    let output_eval =
        evaluate(&image_clf, &select(&test_idx, &image_embeddings), &labels_of(&test_idx))?;

    // attribution over the test set
    let test_prompts: Vec<Prompt> = test_idx.iter().map(|&i| prompts[i].clone()).collect();
    let test_images: Vec<ImageArtifact> = test_idx.iter().map(|&i| images[i].clone()).collect();
    let member = membership(&test_prompts, vocab);

    let mut output_inputs: Vec<String> = test_images.iter().map(|i| sha_hex(&i.pixels)).collect();
    output_inputs.push(vocab_hash.to_string());
    output_inputs.push(image_clf.params_hash());
    let output_key = cache_key(
        "attribute_output",
        &output_inputs,
        &serde_json::json!({
            "segmenter": backends.segmenter.id(),
            "attender": backends.attender.id(),
            "variant": variant,
        }),
    );
    let output_table = cached_table(cache, "attribute_output", &output_key, || {
        output_contributions(
            &test_images,
            &image_clf,
            vocab,
            backends.segmenter.as_ref(),
            backends.attender.as_ref(),
            variant,
        )
        .map_err(|e| stage("attribute_output", e))
    })?;

    let mut input_inputs: Vec<String> =
        test_prompts.iter().map(|p| sha_hex(p.text.as_bytes())).collect();
    input_inputs.push(vocab_hash.to_string());
    input_inputs.push(text_clf.params_hash());
    let input_key = cache_key(
        "attribute_input",
        &input_inputs,
        &serde_json::json!({"explainer": backends.explainer.id(), "variant": variant}),
    );
    let input_table = cached_table(cache, "attribute_input", &input_key, || {
        input_contributions(&test_prompts, &text_clf, vocab, backends.explainer.as_ref())
            .map_err(|e| stage("attribute_input", e))
    })?;

    // propagation metrics on the output space
    let ips = ips_avg(&member, &output_table)?;
    let ecs = ecs_avg(&member, &output_table)?;

    // per-group utility battery
    let mut utility = BTreeMap::new();
    let mut iu_present_mean = BTreeMap::new();
    for group in Group::ALL {
        let ids: BTreeSet<String> = test_idx
            .iter()
            .filter(|&&i| manifest.records[i].group == group)
            .map(|&i| manifest.records[i].id.clone())
            .collect();
        if ids.is_empty() {
            return Err(Error::Data(format!("no test samples for group {group}")));
        }
        let group_member = filter_membership(&member, &ids);
        let group_table = filter_table(&output_table, &ids);
        let group_ips = ips_avg(&group_member, &group_table)?;
        let group_ecs = ecs_avg(&group_member, &group_table)?;

        let present_mean = group_member
            .rows
            .iter()
            .enumerate()
            .map(|(i, _)| group_member.row(i).iter().filter(|p| **p).count() as f64)
            .sum::<f64>()
            / group_member.n() as f64;
        iu_present_mean.insert(group, present_mean);

        let group_test: Vec<usize> = test_idx
            .iter()
            .copied()
            .filter(|&i| manifest.records[i].group == group)
            .collect();
        let similarity = group_test
            .iter()
            .map(|&i| cosine(&text_embeddings[i].values, &image_embeddings[i].values))
            .sum::<f64>()
            / group_test.len() as f64;

        let quality = match reference {
            Some(reference) if !backends.scorers.is_empty() => {
                let group_images: Vec<ImageArtifact> =
                    group_test.iter().map(|&i| images[i].clone()).collect();
                let mut inputs: Vec<String> =
                    group_images.iter().map(|i| sha_hex(&i.pixels)).collect();
                inputs.push(sha_hex(&reference.pixels));
                let scorer_ids: BTreeMap<&String, &str> =
                    backends.scorers.iter().map(|(k, v)| (k, v.id())).collect();
                let key = cache_key(
                    "quality",
                    &inputs,
                    &serde_json::json!({"scorers": scorer_ids, "group": group.to_string()}),
                );
                if let Some(bytes) = cache.get("quality", &key, "json") {
                    serde_json::from_slice(&bytes)
                        .map_err(|e| Error::Data(format!("bad cached quality scores: {e}")))?
                } else {
                    let scores = image_quality(&group_images, reference, &backends.scorers)
                        .map_err(|e| stage("quality", e))?;
                    cache.put(
                        "quality",
                        &key,
                        "json",
                        &serde_json::to_vec_pretty(&scores).unwrap(),
                        None,
                    )?;
                    scores
                }
            }
            _ => QualityScores::default(),
        };

        utility.insert(
            group,
            UtilityReport {
                semantic_similarity: Some(similarity),
                faithfulness: quality.faithfulness,
                inception_score: quality.inception_score,
                distribution_distance: quality.distribution_distance,
                perceptual_distance: quality.perceptual_distance,
                ips: group_ips,
                ecs: group_ecs,
            },
        );
    }

    let input_summary = summarize_groups(&input_table, groups_map)?;
    let output_summary = summarize_groups(&output_table, groups_map)?;
    let frequency = group_frequency(&member, groups_map)?;

    let report = VariantReport {
        input_eval,
        output_eval,
        ips,
        ecs,
        iu_present_mean,
        utility,
        input_summary,
        output_summary,
        group_frequency: frequency,
    };
    Ok((report, vec![input_table, output_table], (text_clf, image_clf)))
}
