//! Per-sample, per-IU contribution scores in both spaces: mask-normalized
//! attention in the output space, aggregated token attributions in the input
//! space.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{AttentionMap, Attender, ImageArtifact, SegmentMask, Segmenter, Explainer};
use crate::classify::TrainedClassifier;
use crate::corpus::{Group, Prompt, PromptVariant};
use crate::error::{Error, Result};
use crate::iu::IUVocabulary;
use crate::lemma::lemmatize;

/// Shared threshold for "C(IU) != 0" in the propagation metrics.
pub const CONTRIBUTION_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Input,
    Output,
}

impl std::fmt::Display for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Space::Input => "input",
            Space::Output => "output",
        })
    }
}

/// N x M nonnegative contribution scores, columns in vocabulary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<f64>,
    pub space: Space,
    pub variant: PromptVariant,
}

impl ContributionTable {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.columns.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.columns.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    /// CSV with header `sample_id,<lemma...>`. Values print in Rust's
    /// shortest round-trip float form, so write -> read is lossless.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
        let mut header = vec!["sample_id".to_string()];
        header.extend(self.columns.clone());
        writer.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
        for (i, id) in self.rows.iter().enumerate() {
            let mut record = vec![id.clone()];
            record.extend(self.row(i).iter().map(|v| format!("{v}")));
            writer.write_record(&record).map_err(|e| Error::Data(e.to_string()))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path, space: Space, variant: PromptVariant) -> Result<ContributionTable> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let headers = reader.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
        let mut iter = headers.iter();
        if iter.next() != Some("sample_id") {
            return Err(Error::Data("contribution CSV must start with sample_id".into()));
        }
        let columns: Vec<String> = iter.map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Data(e.to_string()))?;
            rows.push(record.get(0).unwrap_or("").to_string());
            for j in 0..columns.len() {
                let cell = record.get(j + 1).ok_or_else(|| {
                    Error::Data(format!("short row in {}", path.display()))
                })?;
                values.push(cell.parse::<f64>().map_err(|e| {
                    Error::Data(format!("bad value `{cell}`: {e}"))
                })?);
            }
        }
        Ok(ContributionTable { rows, columns, values, space, variant })
    }

    /// Metadata sidecar: space, variant, and a vocabulary hash.
    pub fn metadata_json(&self, vocab_hash: &str) -> String {
        serde_json::json!({
            "space": self.space,
            "variant": self.variant,
            "vocabulary_hash": vocab_hash,
        })
        .to_string()
    }
}

/// Per-group per-IU mean scores and the absolute AD/CC gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupContributionSummary {
    pub columns: Vec<String>,
    pub means: BTreeMap<Group, Vec<f64>>,
    pub gaps: Vec<f64>,
}

/// Attention mass inside the union of an IU's masks, divided by the union
/// area. No masks means zero.
pub fn contribution_score(attention: &AttentionMap, masks: &[SegmentMask]) -> Result<f64> {
    if masks.is_empty() {
        return Ok(0.0);
    }
    for mask in masks {
        if mask.height != attention.height || mask.width != attention.width {
            return Err(Error::Validation(format!(
                "mask {}x{} does not match attention {}x{}",
                mask.height, mask.width, attention.height, attention.width
            )));
        }
    }
    let len = attention.values.len();
    let mut in_union = vec![false; len];
    for mask in masks {
        for (u, m) in in_union.iter_mut().zip(&mask.values) {
            *u |= *m;
        }
    }
    let area = in_union.iter().filter(|v| **v).count();
    if area == 0 {
        return Ok(0.0);
    }
    let sum: f64 = attention
        .values
        .iter()
        .zip(&in_union)
        .filter(|(_, u)| **u)
        .map(|(v, _)| *v as f64)
        .sum();
    Ok(sum / area as f64)
}

/// Output-space contributions: attend once per image, score every IU against
/// its segmentation masks.
pub fn output_contributions(
    images: &[ImageArtifact],
    classifier: &TrainedClassifier,
    vocab: &IUVocabulary,
    segmenter: &dyn Segmenter,
    attender: &dyn Attender,
    variant: PromptVariant,
) -> Result<ContributionTable> {
    let columns = vocab.lemmas();
    let mut rows = Vec::with_capacity(images.len());
    let mut values = Vec::with_capacity(images.len() * columns.len());
    for image in images {
        rows.push(image.prompt_id.clone());
        let attention = attender.attend(classifier, image).map_err(|e| match e {
            Error::Backend { backend_id, stage, message, .. } => Error::Backend {
                backend_id,
                stage,
                sample_id: Some(image.prompt_id.clone()),
                message,
            },
            other => other,
        })?;
        for lemma in &columns {
            let masks = segmenter.segment(image, lemma)?;
            values.push(contribution_score(&attention, &masks)?);
        }
    }
    Ok(ContributionTable { rows, columns, values, space: Space::Output, variant })
}

/// Input-space contributions: sum of absolute per-token attributions whose
/// lemma matches each IU.
pub fn input_contributions(
    prompts: &[Prompt],
    classifier: &TrainedClassifier,
    vocab: &IUVocabulary,
    explainer: &dyn Explainer,
) -> Result<ContributionTable> {
    let columns = vocab.lemmas();
    let variant = prompts.first().map(|p| p.variant).unwrap_or(PromptVariant::Original);
    let mut rows = Vec::with_capacity(prompts.len());
    let mut values = Vec::with_capacity(prompts.len() * columns.len());
    for prompt in prompts {
        rows.push(prompt.record_id.clone());
        let importances = explainer.explain(prompt, classifier).map_err(|e| match e {
            Error::Backend { backend_id, stage, message, .. } => Error::Backend {
                backend_id,
                stage,
                sample_id: Some(prompt.record_id.clone()),
                message,
            },
            other => other,
        })?;
        let words: Vec<&str> = prompt.text.split_whitespace().collect();
        if importances.len() != words.len() {
            return Err(Error::Validation(format!(
                "explainer returned {} importances for {} tokens on `{}`",
                importances.len(),
                words.len(),
                prompt.record_id
            )));
        }
        let mut row = vec![0.0f64; columns.len()];
        for (word, importance) in words.iter().zip(&importances) {
            if let Some(j) = vocab.position(&lemmatize(word)) {
                row[j] += importance.abs();
            }
        }
        values.extend(row);
    }
    Ok(ContributionTable { rows, columns, values, space: Space::Input, variant })
}

/// Per-group means and |mean_AD - mean_CC| gaps per IU.
pub fn summarize_groups(
    table: &ContributionTable,
    groups: &BTreeMap<String, Group>,
) -> Result<GroupContributionSummary> {
    let m = table.m();
    let mut sums: BTreeMap<Group, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, id) in table.rows.iter().enumerate() {
        let group = *groups
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no group for sample `{id}`")))?;
        let (sum, count) = sums.entry(group).or_insert_with(|| (vec![0.0; m], 0));
        for (s, v) in sum.iter_mut().zip(table.row(i)) {
            *s += v;
        }
        *count += 1;
    }
    for group in Group::ALL {
        if sums.get(&group).map_or(true, |(_, c)| *c == 0) {
            return Err(Error::Validation(format!("empty group {group} in contribution table")));
        }
    }
    let means: BTreeMap<Group, Vec<f64>> = sums
        .into_iter()
        .map(|(g, (sum, count))| (g, sum.into_iter().map(|s| s / count as f64).collect()))
        .collect();
    let gaps = (0..m)
        .map(|j| (means[&Group::Ad][j] - means[&Group::Cc][j]).abs())
        .collect();
    Ok(GroupContributionSummary { columns: table.columns.clone(), means, gaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{region_of, MockAttender, MockGenerator, MockSegmenter, MOCK_NOISE_DIMS};
    use crate::iu::{InformationUnit, IuPos};
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn uniform_attention(h: u32, w: u32, value: f32) -> AttentionMap {
        AttentionMap { values: vec![value; (h * w) as usize], height: h, width: w }
    }

    fn rect_mask(h: u32, w: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> SegmentMask {
        let mut values = vec![false; (h * w) as usize];
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                values[(y * w + x) as usize] = true;
            }
        }
        SegmentMask { values, height: h, width: w, label: "test".into() }
    }

    #[test]
    fn uniform_attention_cancels_area() {
        let attention = uniform_attention(10, 10, 1.0);
        for (rw, rh) in [(1, 1), (2, 5), (10, 10)] {
            let mask = rect_mask(10, 10, 0, 0, rw, rh);
            assert_eq!(contribution_score(&attention, &[mask]).unwrap(), 1.0);
        }
    }

    #[test]
    fn no_masks_scores_zero() {
        let attention = uniform_attention(4, 4, 3.0);
        assert_eq!(contribution_score(&attention, &[]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_score() {
        // attention 2.0 inside a 10-cell mask within a 100-cell map
        let mut attention = uniform_attention(10, 10, 0.0);
        let mask = rect_mask(10, 10, 0, 0, 5, 2);
        for y in 0..2 {
            for x in 0..5 {
                attention.values[y * 10 + x] = 2.0;
            }
        }
        assert_eq!(contribution_score(&attention, &[mask]).unwrap(), 2.0);
    }

    #[test]
    fn union_semantics_for_multiple_masks() {
        let mut attention = uniform_attention(4, 4, 0.0);
        attention.values[0] = 4.0;
        let a = rect_mask(4, 4, 0, 0, 2, 1); // cells {0,1}
        let b = rect_mask(4, 4, 1, 0, 2, 1); // cells {1,2}
        // union {0,1,2}: sum 4.0 over 3 cells
        let score = contribution_score(&attention, &[a, b]).unwrap();
        assert!((score - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let attention = uniform_attention(4, 4, 1.0);
        let mask = rect_mask(5, 5, 0, 0, 1, 1);
        assert!(contribution_score(&attention, &[mask]).is_err());
    }

    #[test]
    fn linearity_under_scaling() {
        let mut attention = uniform_attention(8, 8, 0.0);
        for i in 0..64 {
            attention.values[i] = (i as f32) * 0.17;
        }
        let mask = rect_mask(8, 8, 2, 3, 4, 2);
        let base = contribution_score(&attention, &[mask.clone()]).unwrap();
        for k in [0.0f32, 0.5, 2.0, 10.0] {
            let scaled = AttentionMap {
                values: attention.values.iter().map(|v| v * k).collect(),
                height: 8,
                width: 8,
            };
            let score = contribution_score(&scaled, &[mask.clone()]).unwrap();
            // attention values are f32, so scaling rounds at ~1e-7 relative
            assert!((score - k as f64 * base).abs() <= 1e-5 * (1.0 + k as f64 * base));
        }
    }

    fn vocab3() -> IUVocabulary {
        IUVocabulary::new(
            [("boy", IuPos::Noun), ("fall", IuPos::Verb), ("sink", IuPos::Noun)]
                .iter()
                .map(|(l, p)| InformationUnit {
                    lemma: l.to_string(),
                    pos: *p,
                    surface_forms: BTreeSet::new(),
                })
                .collect(),
        )
    }

    fn prompt(id: &str, text: &str) -> Prompt {
        Prompt {
            record_id: id.into(),
            text: text.into(),
            token_count: text.split_whitespace().count(),
            variant: PromptVariant::Original,
        }
    }

    #[test]
    fn output_contributions_nonzero_exactly_for_present_units() {
        let vocab = vocab3();
        let shared = Arc::new(vocab.clone());
        let generator = MockGenerator::new(shared.clone());
        let segmenter = MockSegmenter::new(shared.clone());
        let attender = MockAttender::new(shared.clone());
        use crate::backends::Generator;

        let classifier = crate::classify::TrainedClassifier::linear(
            (0..vocab.len() + MOCK_NOISE_DIMS).map(|i| 0.5 + i as f64).collect(),
            0.0,
        );
        let image = generator.generate(&prompt("p1", "boy falls"), 5).unwrap();
        let table = output_contributions(
            &[image],
            &classifier,
            &vocab,
            &segmenter,
            &attender,
            PromptVariant::Original,
        )
        .unwrap();
        assert!(table.at(0, vocab.position("boy").unwrap()) > 0.0);
        assert!(table.at(0, vocab.position("fall").unwrap()) > 0.0);
        assert_eq!(table.at(0, vocab.position("sink").unwrap()), 0.0);
        assert!(table.values.iter().all(|v| *v >= 0.0));
        // area-normalized closed form: |grad_j| / area_j
        let grad = classifier.decision_gradient(&vec![0.0; classifier.input_dim()]);
        let j = vocab.position("boy").unwrap();
        let region = region_of("boy", j);
        let expected = grad[j].abs() / region.area() as f64;
        assert!((table.at(0, j) - expected).abs() < 1e-9);
    }

    struct FixedExplainer(f64);
    impl Explainer for FixedExplainer {
        fn id(&self) -> &str {
            "fixed"
        }
        fn explain(&self, prompt: &Prompt, _c: &TrainedClassifier) -> Result<Vec<f64>> {
            Ok(vec![self.0; prompt.text.split_whitespace().count()])
        }
    }

    #[test]
    fn input_contributions_aggregate_by_lemma() {
        let vocab = vocab3();
        let classifier = crate::classify::TrainedClassifier::linear(vec![0.0; 11], 0.0);
        let table = input_contributions(
            &[prompt("p1", "boy falls boy")],
            &classifier,
            &vocab,
            &FixedExplainer(1.0),
        )
        .unwrap();
        assert_eq!(table.at(0, vocab.position("boy").unwrap()), 2.0);
        assert_eq!(table.at(0, vocab.position("fall").unwrap()), 1.0);
        assert_eq!(table.at(0, vocab.position("sink").unwrap()), 0.0);
    }

    #[test]
    fn input_contributions_zero_cases() {
        let vocab = vocab3();
        let classifier = crate::classify::TrainedClassifier::linear(vec![0.0; 11], 0.0);
        let none = input_contributions(
            &[prompt("p1", "the wind blows")],
            &classifier,
            &vocab,
            &FixedExplainer(1.0),
        )
        .unwrap();
        assert!(none.row(0).iter().all(|v| *v == 0.0));

        let zeros = input_contributions(
            &[prompt("p1", "boy falls")],
            &classifier,
            &vocab,
            &FixedExplainer(0.0),
        )
        .unwrap();
        assert!(zeros.values.iter().all(|v| *v == 0.0));
    }

    fn toy_table(values: Vec<f64>, rows: Vec<&str>) -> ContributionTable {
        let m = values.len() / rows.len();
        ContributionTable {
            rows: rows.into_iter().map(str::to_string).collect(),
            columns: (0..m).map(|j| format!("iu{j}")).collect(),
            values,
            space: Space::Output,
            variant: PromptVariant::Original,
        }
    }

    #[test]
    fn summarize_groups_means_and_gaps() {
        let table = toy_table(vec![1.0, 0.0, 3.0, 0.0], vec!["a", "b"]);
        let groups: BTreeMap<String, Group> =
            [("a".to_string(), Group::Ad), ("b".to_string(), Group::Cc)].into_iter().collect();
        let summary = summarize_groups(&table, &groups).unwrap();
        assert_eq!(summary.means[&Group::Ad], vec![1.0, 0.0]);
        assert_eq!(summary.means[&Group::Cc], vec![3.0, 0.0]);
        assert_eq!(summary.gaps, vec![2.0, 0.0]);
    }

    #[test]
    fn summarize_groups_identical_rows_zero_gap() {
        let table = toy_table(vec![0.4, 0.1, 0.4, 0.1], vec!["a", "b"]);
        let groups: BTreeMap<String, Group> =
            [("a".to_string(), Group::Ad), ("b".to_string(), Group::Cc)].into_iter().collect();
        let summary = summarize_groups(&table, &groups).unwrap();
        assert_eq!(summary.gaps, vec![0.0, 0.0]);
    }

    #[test]
    fn summarize_groups_gap_shape_check() {
        let table = toy_table(vec![0.4, 0.06], vec!["a", "b"]);
        let groups: BTreeMap<String, Group> =
            [("a".to_string(), Group::Ad), ("b".to_string(), Group::Cc)].into_iter().collect();
        let summary = summarize_groups(&table, &groups).unwrap();
        assert!((summary.gaps[0] - 0.34).abs() < 1e-12);
    }

    #[test]
    fn summarize_groups_empty_group_errors() {
        let table = toy_table(vec![1.0, 2.0], vec!["a"]);
        let groups: BTreeMap<String, Group> =
            [("a".to_string(), Group::Ad)].into_iter().collect();
        assert!(summarize_groups(&table, &groups).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let table = toy_table(vec![0.1, 0.0, 1.0 / 3.0, 7.25], vec!["a", "b"]);
        let path = dir.path().join("table.csv");
        table.write_csv(&path).unwrap();
        let loaded = ContributionTable::read_csv(&path, Space::Output, PromptVariant::Original).unwrap();
        assert_eq!(loaded, table);
    }
}
