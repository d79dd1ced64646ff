//! Audit report assembly and emission: full JSON, CSV tables, paper-style
//! markdown tables, and plot-ready per-figure CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{ContributionTable, GroupContributionSummary};
use crate::backends::BackendIds;
use crate::classify::EvalReport;
use crate::config::SplitMode;
use crate::corpus::Group;
use crate::error::{Error, Result};
use crate::metrics::{PropagationResult, UtilityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

/// Everything measured for one prompt variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub input_eval: EvalReport,
    pub output_eval: EvalReport,
    pub ips: PropagationResult,
    pub ecs: PropagationResult,
    /// Mean number of vocabulary IUs present per test prompt, per group.
    pub iu_present_mean: BTreeMap<Group, f64>,
    pub utility: BTreeMap<Group, UtilityReport>,
    pub input_summary: GroupContributionSummary,
    pub output_summary: GroupContributionSummary,
    pub group_frequency: BTreeMap<Group, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config_hash: String,
    pub seed: u64,
    pub split_mode: SplitMode,
    pub backend_ids: BackendIds,
    pub vocabulary: Vec<String>,
    /// keyed by variant name (original, no_discourse)
    pub variants: BTreeMap<String, VariantReport>,
    /// methodological caveats recorded with every run
    pub notes: Vec<String>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(json: &str) -> Result<AuditReport> {
        serde_json::from_str(json).map_err(|e| Error::Data(format!("bad report JSON: {e}")))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "skipped".to_string(),
    }
}

/// Markdown tables mirroring the per-group utility layout: one row per
/// (group, variant).
pub fn render_markdown(report: &AuditReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Leakage audit report\n");
    let _ = writeln!(out, "- config hash: `{}`", report.config_hash);
    let _ = writeln!(out, "- seed: {}", report.seed);
    let _ = writeln!(out, "- vocabulary size: {}\n", report.vocabulary.len());

    let _ = writeln!(out, "## Classification accuracy\n");
    let _ = writeln!(out, "| Variant | Input space | Output space |");
    let _ = writeln!(out, "|---|---|---|");
    for (name, v) in &report.variants {
        let _ = writeln!(
            out,
            "| {name} | {:.4} | {:.4} |",
            v.input_eval.accuracy, v.output_eval.accuracy
        );
    }

    let _ = writeln!(out, "\n## Semantic propagation\n");
    let _ = writeln!(
        out,
        "| Group | Variant | IU Present | Similarity | Faithfulness | IPS |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for group in Group::ALL {
        for (name, v) in &report.variants {
            let u = &v.utility[&group];
            let _ = writeln!(
                out,
                "| {group} | {name} | {:.2} | {} | {} | {:.4} |",
                v.iu_present_mean[&group],
                fmt_opt(u.semantic_similarity),
                fmt_opt(u.faithfulness),
                u.ips.value
            );
        }
    }

    let _ = writeln!(out, "\n## Generation quality and extraneous content\n");
    let _ = writeln!(
        out,
        "| Group | Variant | IS | Distribution distance | Perceptual distance | ECS |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for group in Group::ALL {
        for (name, v) in &report.variants {
            let u = &v.utility[&group];
            let _ = writeln!(
                out,
                "| {group} | {name} | {} | {} | {} | {:.4} |",
                fmt_opt(u.inception_score),
                fmt_opt(u.distribution_distance),
                fmt_opt(u.perceptual_distance),
                u.ecs.value
            );
        }
    }

    if !report.notes.is_empty() {
        let _ = writeln!(out, "\n## Notes\n");
        for note in &report.notes {
            let _ = writeln!(out, "- {note}");
        }
    }
    out
}

fn write_file(path: &Path, content: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))?;
    written.push(path.to_path_buf());
    Ok(())
}

/// Plot-ready CSV: one row per (IU, group) with frequency and mean
/// contribution for one space and variant.
fn figure_csv(
    variant_name: &str,
    space: &str,
    summary: &GroupContributionSummary,
    frequency: &BTreeMap<Group, Vec<usize>>,
) -> String {
    let mut out = String::from("iu,group,frequency,mean_contribution,space,variant\n");
    for (j, lemma) in summary.columns.iter().enumerate() {
        for group in Group::ALL {
            let freq = frequency.get(&group).map_or(0, |f| f[j]);
            let mean = summary.means.get(&group).map_or(0.0, |m| m[j]);
            let _ = writeln!(out, "{lemma},{group},{freq},{mean},{space},{variant_name}");
        }
    }
    out
}

/// Write the report in the requested formats plus per-table and per-figure
/// CSVs. Returns the written paths.
pub fn emit_report(
    report: &AuditReport,
    formats: &[ReportFormat],
    output_dir: &Path,
    tables: &[ContributionTable],
    vocab_hash: &str,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let mut written = Vec::new();

    if formats.contains(&ReportFormat::Json) {
        write_file(&output_dir.join("report.json"), &report.to_json(), &mut written)?;
    }
    if formats.contains(&ReportFormat::Markdown) {
        write_file(&output_dir.join("report.md"), &render_markdown(report), &mut written)?;
    }
    if formats.contains(&ReportFormat::Csv) {
        for table in tables {
            let stem = format!("contributions_{}_{}", table.space, table.variant);
            let path = output_dir.join(format!("{stem}.csv"));
            table.write_csv(&path)?;
            written.push(path);
            write_file(
                &output_dir.join(format!("{stem}.meta.json")),
                &table.metadata_json(vocab_hash),
                &mut written,
            )?;
        }
        for (name, v) in &report.variants {
            for (space, summary) in
                [("input", &v.input_summary), ("output", &v.output_summary)]
            {
                write_file(
                    &output_dir.join(format!("fig_contributions_{space}_{name}.csv")),
                    &figure_csv(name, space, summary, &v.group_frequency),
                    &mut written,
                )?;
            }
        }
    }
    Ok(written)
}
