//! Propagation metrics (IPS and ECS) plus the pluggable utility scorer
//! battery.
//!
//! IPS_avg: mean over samples of (prompt-present IUs with nonzero
//! contribution) / (prompt-present IUs). ECS_avg: mean over samples of
//! (prompt-absent IUs with nonzero contribution) / (prompt-absent IUs).
//! Samples whose denominator is zero are excluded from the mean and listed.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attribution::{ContributionTable, CONTRIBUTION_EPSILON};
use crate::backends::{Embedder, ImageArtifact, QualityScorer};
use crate::corpus::Prompt;
use crate::error::{Error, Result};
use crate::iu::MembershipMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationResult {
    pub value: f64,
    pub defined_samples: usize,
    pub excluded_samples: Vec<String>,
}

fn check_aligned(membership: &MembershipMatrix, contributions: &ContributionTable) -> Result<()> {
    if membership.rows != contributions.rows {
        return Err(Error::Validation(
            "membership and contribution rows differ in order or content".into(),
        ));
    }
    if membership.columns != contributions.columns {
        return Err(Error::Validation(
            "membership and contribution columns differ in order or content".into(),
        ));
    }
    Ok(())
}

fn propagation(
    membership: &MembershipMatrix,
    contributions: &ContributionTable,
    count_present: bool,
) -> Result<PropagationResult> {
    check_aligned(membership, contributions)?;
    let m = membership.m();
    let mut sum = 0.0f64;
    let mut defined = 0usize;
    let mut excluded = Vec::new();
    for (i, id) in membership.rows.iter().enumerate() {
        let present: usize = membership.row(i).iter().filter(|p| **p).count();
        let denominator = if count_present { present } else { m - present };
        if denominator == 0 {
            excluded.push(id.clone());
            continue;
        }
        let numerator = (0..m)
            .filter(|&j| {
                membership.at(i, j) == count_present
                    && contributions.at(i, j) > CONTRIBUTION_EPSILON
            })
            .count();
        sum += numerator as f64 / denominator as f64;
        defined += 1;
    }
    let value = if defined > 0 { sum / defined as f64 } else { 0.0 };
    Ok(PropagationResult { value, defined_samples: defined, excluded_samples: excluded })
}

/// Information Units Propagation Score, averaged over defined samples.
pub fn ips_avg(
    membership: &MembershipMatrix,
    contributions: &ContributionTable,
) -> Result<PropagationResult> {
    propagation(membership, contributions, true)
}

/// Extraneous Content Score, averaged over defined samples.
pub fn ecs_avg(
    membership: &MembershipMatrix,
    contributions: &ContributionTable,
) -> Result<PropagationResult> {
    propagation(membership, contributions, false)
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Cosine similarity between the prompt's text embedding and the image's
/// embedding in the shared joint space.
pub fn semantic_similarity(
    prompt: &Prompt,
    image: &ImageArtifact,
    embedder: &dyn Embedder,
) -> Result<f64> {
    let t = embedder.embed_text(&prompt.text)?;
    let i = embedder.embed_image(image)?;
    if t.values.len() != i.values.len() {
        return Err(Error::Validation("text/image embedding dimension mismatch".into()));
    }
    Ok(cosine(&t.values, &i.values))
}

/// Image-quality scores for one group; fields without a registered scorer
/// are marked skipped (None) and the run continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct QualityScores {
    pub inception_score: Option<f64>,
    pub distribution_distance: Option<f64>,
    pub perceptual_distance: Option<f64>,
    pub faithfulness: Option<f64>,
    /// scorer backend id per computed metric
    pub backend_ids: BTreeMap<String, String>,
}

pub const QUALITY_METRICS: [&str; 4] = [
    "inception_score",
    "distribution_distance",
    "perceptual_distance",
    "faithfulness",
];

pub fn image_quality(
    group_images: &[ImageArtifact],
    reference: &ImageArtifact,
    scorers: &BTreeMap<String, Arc<dyn QualityScorer>>,
) -> Result<QualityScores> {
    if group_images.is_empty() {
        return Err(Error::Validation("empty image list for quality scoring".into()));
    }
    let mut out = QualityScores::default();
    for metric in QUALITY_METRICS {
        let Some(scorer) = scorers.get(metric) else {
            continue; // skipped: no backend registered
        };
        let value = scorer.score(group_images, reference)?;
        out.backend_ids.insert(metric.to_string(), scorer.id().to_string());
        match metric {
            "inception_score" => out.inception_score = Some(value),
            "distribution_distance" => out.distribution_distance = Some(value),
            "perceptual_distance" => out.perceptual_distance = Some(value),
            "faithfulness" => out.faithfulness = Some(value),
            _ => unreachable!(),
        }
    }
    Ok(out)
}

/// Per-group utility battery for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub semantic_similarity: Option<f64>,
    pub faithfulness: Option<f64>,
    pub inception_score: Option<f64>,
    pub distribution_distance: Option<f64>,
    pub perceptual_distance: Option<f64>,
    pub ips: PropagationResult,
    pub ecs: PropagationResult,
}
