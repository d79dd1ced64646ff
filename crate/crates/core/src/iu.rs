//! Information-Unit vocabulary construction, prompt membership, and group
//! frequency tables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{PosLabel, PosTagger};
use crate::corpus::{DatasetManifest, DiscourseLexicon, Group, Prompt};
use crate::error::{Error, Result};
use crate::lemma::lemmatize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IuPos {
    Noun,
    Verb,
}

/// One information unit: a unique, meaningful noun or verb lemma.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformationUnit {
    pub lemma: String,
    pub pos: IuPos,
    pub surface_forms: BTreeSet<String>,
}

/// Ordered IU set; ordering is lexicographic by lemma so matrix columns are
/// reproducible across runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IUVocabulary {
    pub units: Vec<InformationUnit>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl IUVocabulary {
    pub fn new(mut units: Vec<InformationUnit>) -> IUVocabulary {
        units.sort_by(|a, b| a.lemma.cmp(&b.lemma));
        units.dedup_by(|a, b| a.lemma == b.lemma);
        let index = units.iter().enumerate().map(|(i, u)| (u.lemma.clone(), i)).collect();
        IUVocabulary { units, index }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn position(&self, lemma: &str) -> Option<usize> {
        self.index.get(lemma).copied()
    }

    pub fn lemmas(&self) -> Vec<String> {
        self.units.iter().map(|u| u.lemma.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.units).expect("vocabulary serializes")
    }

    pub fn from_json(json: &str) -> Result<IUVocabulary> {
        let units: Vec<InformationUnit> = serde_json::from_str(json)
            .map_err(|e| Error::Data(format!("bad vocabulary JSON: {e}")))?;
        Ok(IUVocabulary::new(units))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<IUVocabulary> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        IUVocabulary::from_json(&json)
    }
}

/// Boolean N×M matrix: entry (i, j) = IU_j occurs in prompt_i.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<bool>,
}

impl MembershipMatrix {
    pub fn at(&self, i: usize, j: usize) -> bool {
        self.values[i * self.columns.len() + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        let m = self.columns.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }
}

/// "Meaningful" filters for vocabulary construction: a light-verb/copula
/// stoplist plus a minimum corpus count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabFilters {
    pub stoplist: BTreeSet<String>,
    pub min_count: usize,
}

impl Default for VocabFilters {
    fn default() -> Self {
        let stoplist = [
            "be", "do", "have", "go", "get", "say", "see", "know", "think", "look", "want",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        VocabFilters { stoplist, min_count: 2 }
    }
}

impl VocabFilters {
    /// Stoplist file: one token per line, `#` comments allowed.
    pub fn with_stoplist_file(mut self, path: &Path) -> Result<VocabFilters> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.stoplist = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.to_lowercase())
            .collect();
        Ok(self)
    }
}

/// POS-tag every record (train+val+test) and collect unique noun/verb lemmas,
/// excluding stoplist and discourse-lexicon tokens and lemmas occurring fewer
/// than `min_count` times.
pub fn build_vocabulary(
    manifest: &DatasetManifest,
    tagger: &dyn PosTagger,
    filters: &VocabFilters,
    lexicon: &DiscourseLexicon,
) -> Result<IUVocabulary> {
    if filters.min_count < 1 {
        return Err(Error::Validation("min_count must be >= 1".into()));
    }
    struct Acc {
        pos: IuPos,
        count: usize,
        surfaces: BTreeSet<String>,
    }
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    for record in &manifest.records {
        let labels = tagger.tag(&record.tokens).map_err(|e| {
            Error::Data(format!("tagger failed on record `{}`: {e}", record.id))
        })?;
        for (token, label) in record.tokens.iter().zip(labels) {
            let pos = match label {
                PosLabel::Noun => IuPos::Noun,
                PosLabel::Verb => IuPos::Verb,
                PosLabel::Other => continue,
            };
            let lemma = lemmatize(token);
            if lemma.is_empty()
                || filters.stoplist.contains(&lemma)
                || lexicon.contains(&lemma)
                || lexicon.contains(token)
            {
                continue;
            }
            let entry = acc.entry(lemma).or_insert(Acc { pos, count: 0, surfaces: BTreeSet::new() });
            entry.count += 1;
            entry.surfaces.insert(token.clone());
        }
    }
    let units = acc
        .into_iter()
        .filter(|(_, a)| a.count >= filters.min_count)
        .map(|(lemma, a)| InformationUnit { lemma, pos: a.pos, surface_forms: a.surfaces })
        .collect();
    Ok(IUVocabulary::new(units))
}

/// Lemmas present in a prompt text (whitespace words, lemmatized).
pub fn prompt_lemmas(text: &str) -> BTreeSet<String> {
    text.split_whitespace().map(lemmatize).collect()
}

/// Membership of each vocabulary IU in each prompt, matched at lemma level
/// after lemmatizing prompt tokens (surface forms also count).
pub fn membership(prompts: &[Prompt], vocab: &IUVocabulary) -> MembershipMatrix {
    let columns = vocab.lemmas();
    let mut values = Vec::with_capacity(prompts.len() * columns.len());
    let mut rows = Vec::with_capacity(prompts.len());
    for prompt in prompts {
        rows.push(prompt.record_id.clone());
        let lemmas = prompt_lemmas(&prompt.text);
        let surfaces: BTreeSet<&str> =
            prompt.text.split_whitespace().collect();
        for unit in &vocab.units {
            let hit = lemmas.contains(&unit.lemma)
                || unit.surface_forms.iter().any(|s| surfaces.contains(s.as_str()));
            values.push(hit);
        }
    }
    MembershipMatrix { rows, columns, values }
}

/// Per-group, per-IU counts of samples containing each IU.
pub fn group_frequency(
    matrix: &MembershipMatrix,
    groups: &BTreeMap<String, Group>,
) -> Result<BTreeMap<Group, Vec<usize>>> {
    let m = matrix.m();
    let mut table: BTreeMap<Group, Vec<usize>> = BTreeMap::new();
    for (i, id) in matrix.rows.iter().enumerate() {
        let group = *groups
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no group for sample `{id}`")))?;
        let counts = table.entry(group).or_insert_with(|| vec![0; m]);
        for (j, c) in counts.iter_mut().enumerate() {
            if matrix.at(i, j) {
                *c += 1;
            }
        }
    }
    Ok(table)
}
