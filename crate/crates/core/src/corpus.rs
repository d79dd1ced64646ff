//! Corpus ingestion: labeled transcript records, split management, discourse
//! stripping, and prompt clipping.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "CC")]
    Cc,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Ad, Group::Cc];

    pub fn parse(s: &str) -> Result<Group> {
        match s {
            "AD" => Ok(Group::Ad),
            "CC" => Ok(Group::Cc),
            other => Err(Error::Validation(format!("unknown group value `{other}`"))),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Ad => "AD",
            Group::Cc => "CC",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split value `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One labeled, tokenized speech transcription.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub id: String,
    pub group: Group,
    pub split: Split,
    pub raw_text: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Records ordered by id for byte-stable serialization.
    pub records: Vec<TranscriptRecord>,
    pub seed: u64,
    /// Keys are `<group>-<split>`, e.g. `AD-train`.
    pub counts: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn new(mut records: Vec<TranscriptRecord>, seed: u64) -> DatasetManifest {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let counts = count_records(&records);
        DatasetManifest { records, seed, counts }
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &TranscriptRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn group_of(&self) -> BTreeMap<String, Group> {
        self.records.iter().map(|r| (r.id.clone(), r.group)).collect()
    }
}

fn count_records(records: &[TranscriptRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(format!("{}-{}", r.group, r.split)).or_insert(0) += 1;
    }
    counts
}

/// Filler words and pause markers removable in the ablation variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscourseLexicon {
    pub tokens: BTreeSet<String>,
}

impl DiscourseLexicon {
    /// Shipped default; a config default, not ground truth.
    pub fn default_lexicon() -> DiscourseLexicon {
        let tokens = ["um", "uh", "er", "ah", "eh", "hm", "mhm", "mm"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        DiscourseLexicon { tokens }
    }

    /// One token per line, `#` comments and blank lines allowed.
    pub fn from_file(path: &Path) -> Result<DiscourseLexicon> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.to_lowercase())
            .collect();
        Ok(DiscourseLexicon { tokens })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Original,
    NoDiscourse,
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptVariant::Original => "original",
            PromptVariant::NoDiscourse => "no_discourse",
        })
    }
}

/// A clipped generation prompt derived from one transcript record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub record_id: String,
    pub text: String,
    pub token_count: usize,
    pub variant: PromptVariant,
}

/// Lowercase, punctuation-separating whitespace tokenizer. Word characters
/// are ASCII alphanumerics and apostrophes; every other non-whitespace
/// character becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '\'' {
            for lc in c.to_lowercase() {
                word.push(lc);
            }
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Load every labeled transcript from `data_dir`, tokenized and sorted by id.
///
/// `labels_file` is a CSV with header `id,group,split`; transcripts live at
/// `<data_dir>/<id>.txt`.
pub fn load_manifest(data_dir: &Path, labels_file: &Path, seed: u64) -> Result<DatasetManifest> {
    let mut reader = csv::Reader::from_path(labels_file)
        .map_err(|e| Error::Data(format!("cannot read labels file {}: {e}", labels_file.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("bad labels header: {e}")))?
        .clone();
    let expected = ["id", "group", "split"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Data(format!(
            "labels header must be `id,group,split`, got `{}`",
            got.join(",")
        )));
    }

    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Data(format!("bad labels row: {e}")))?;
        let id = row.get(0).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::Data("labels row with empty id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!("duplicate id `{id}` in labels file")));
        }
        let group = Group::parse(row.get(1).unwrap_or("").trim())?;
        let split = Split::parse(row.get(2).unwrap_or("").trim())?;
        let path = data_dir.join(format!("{id}.txt"));
        let raw_text = std::fs::read_to_string(&path)
            .map_err(|_| Error::MissingTranscript { id: id.clone(), path: path.clone() })?;
        let tokens = tokenize(&raw_text);
        records.push(TranscriptRecord { id, group, split, raw_text, tokens });
    }
    Ok(DatasetManifest::new(records, seed))
}

/// Move `round(fraction * train_count)` train records per group to the
/// validation split, stratified, via a seeded shuffle. Re-carving an already
/// carved manifest with the same seed reproduces the same assignment.
pub fn carve_validation(
    manifest: &DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Validation(format!(
            "validation fraction must be in [0,1), got {fraction}"
        )));
    }
    let mut records = manifest.records.clone();
    // Reset val back to train so the carve is a pure function of train∪val.
    for r in records.iter_mut() {
        if r.split == Split::Val {
            r.split = Split::Train;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for group in Group::ALL {
        let mut ids: Vec<String> = records
            .iter()
            .filter(|r| r.group == group && r.split == Split::Train)
            .map(|r| r.id.clone())
            .collect();
        // round-half-up per class
        let k = (fraction * ids.len() as f64 + 0.5).floor() as usize;
        ids.shuffle(&mut rng);
        let val_ids: BTreeSet<&String> = ids.iter().take(k).collect();
        for r in records.iter_mut() {
            if r.group == group && val_ids.contains(&r.id) {
                r.split = Split::Val;
            }
        }
    }
    Ok(DatasetManifest::new(records, manifest.seed))
}

/// Remove every lexicon member from `tokens`, order preserved.
pub fn strip_discourse(tokens: &[String], lexicon: &DiscourseLexicon) -> Vec<String> {
    tokens.iter().filter(|t| !lexicon.contains(t)).cloned().collect()
}

/// Longest prefix of `tokens` whose joined text counts at most `limit`
/// under `counter`, joined by single spaces.
pub fn clip_prompt(tokens: &[String], limit: usize, counter: &dyn Fn(&str) -> usize) -> String {
    for k in (0..=tokens.len()).rev() {
        let text = tokens[..k].join(" ");
        if counter(&text) <= limit {
            return text;
        }
    }
    String::new()
}

/// Default token counter for the mock backend: whitespace word count.
pub fn whitespace_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Build the generation prompt for one record under the given variant.
pub fn make_prompt(
    record: &TranscriptRecord,
    variant: PromptVariant,
    lexicon: &DiscourseLexicon,
    limit: usize,
    counter: &dyn Fn(&str) -> usize,
) -> Prompt {
    let tokens: Vec<String> = match variant {
        PromptVariant::Original => record.tokens.clone(),
        PromptVariant::NoDiscourse => strip_discourse(&record.tokens, lexicon),
    };
    let text = clip_prompt(&tokens, limit, counter);
    let token_count = counter(&text);
    Prompt { record_id: record.id.clone(), text, token_count, variant }
}
