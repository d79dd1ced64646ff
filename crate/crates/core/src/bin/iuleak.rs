//! `iuleak` — audit how much dementia-related prompt content leaks into
//! generated images. Every subcommand is idempotent: results are
//! content-addressed in the cache, so reruns reuse finished work.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iuleak_core::config::RunConfig;
use iuleak_core::error::{Error, Result};
use iuleak_core::pipeline::{
    apply_splits, cached_vocabulary, load_filters, load_lexicon, materialize, run_audit, Cache,
};
use iuleak_core::report::{emit_report, ReportFormat};
use iuleak_core::{backends, corpus};

#[derive(Parser)]
#[command(name = "iuleak", version, about = "Prompt-to-image information leakage audit")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML)
    #[arg(long, short, global = true, default_value = "iuleak.toml")]
    config: PathBuf,

    /// Override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the cache directory
    #[arg(long, global = true, env = "IULEAK_CACHE")]
    cache_dir: Option<PathBuf>,

    /// Override the output directory
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Override a backend id, e.g. `generator=mock` or `scorer.faithfulness=mock`
    #[arg(long = "backend", global = true, value_name = "STAGE=ID")]
    backends: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the labeled corpus; print split counts
    Ingest,
    /// Build the information-unit vocabulary; print the lemmas
    Vocab,
    /// Generate (or reuse cached) images for every prompt variant
    Generate,
    /// Generate images and compute joint-space embeddings
    Embed,
    /// Run the audit through classifier training; save models, print accuracy
    Train,
    /// Run the audit through attribution; write contribution CSVs
    Attribute,
    /// Run the audit and print IPS/ECS per variant
    Metrics,
    /// Run the audit and emit the report in the chosen formats
    Report {
        /// Output formats
        #[arg(long, value_delimiter = ',', default_values = ["json", "csv", "markdown"])]
        format: Vec<String>,
    },
    /// Full audit: all stages plus every report format
    Run,
}

fn apply_backend_override(config: &mut RunConfig, spec: &str) -> Result<()> {
    let (stage, id) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("backend override `{spec}` is not STAGE=ID")))?;
    match stage {
        "generator" => config.backends.generator = id.to_string(),
        "embedder" => config.backends.embedder = id.to_string(),
        "segmenter" => config.backends.segmenter = id.to_string(),
        "attender" => config.backends.attender = id.to_string(),
        "tagger" => config.backends.tagger = id.to_string(),
        "explainer" => config.backends.explainer = id.to_string(),
        other => match other.strip_prefix("scorer.") {
            Some(metric) if !metric.is_empty() => {
                config.backends.scorers.insert(metric.to_string(), id.to_string());
            }
            _ => return Err(Error::Config(format!("unknown backend stage `{other}`"))),
        },
    }
    Ok(())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = RunConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(dir) = &common.cache_dir {
        config.paths.cache_dir = dir.clone();
    }
    if let Some(dir) = &common.output_dir {
        config.paths.output_dir = dir.clone();
    }
    for spec in &common.backends {
        apply_backend_override(&mut config, spec)?;
    }
    config.validate()?;
    Ok(config)
}

fn parse_formats(names: &[String]) -> Result<Vec<ReportFormat>> {
    names
        .iter()
        .map(|n| match n.as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        })
        .collect()
}

fn cmd_ingest(config: &RunConfig) -> Result<()> {
    let manifest =
        corpus::load_manifest(&config.paths.data_dir, &config.paths.labels, config.seed)?;
    let manifest = apply_splits(&manifest, config)?;
    println!("records: {}", manifest.records.len());
    for (key, count) in &manifest.counts {
        println!("  {key}: {count}");
    }
    Ok(())
}

fn cmd_vocab(config: &RunConfig) -> Result<()> {
    let manifest =
        corpus::load_manifest(&config.paths.data_dir, &config.paths.labels, config.seed)?;
    let manifest = apply_splits(&manifest, config)?;
    let cache = Cache::new(&config.paths.cache_dir)?;
    let tagger = backends::make_tagger(&config.backends.tagger)?;
    let lexicon = load_lexicon(config)?;
    let filters = load_filters(config)?;
    let vocab = cached_vocabulary(&cache, &manifest, tagger.as_ref(), &filters, &lexicon)?;
    println!("vocabulary: {} information units", vocab.len());
    for unit in &vocab.units {
        println!("  {} ({:?})", unit.lemma, unit.pos);
    }
    Ok(())
}

fn cmd_materialize(config: &RunConfig, with_embeddings: bool) -> Result<()> {
    let counts = materialize(config, with_embeddings)?;
    println!("records: {}", counts.records);
    println!("vocabulary: {}", counts.vocabulary);
    println!("prompts: {}", counts.prompts);
    println!("images: {}", counts.images);
    if with_embeddings {
        println!("embeddings: {}", counts.embeddings);
    }
    Ok(())
}

fn cmd_train(config: &RunConfig) -> Result<()> {
    let outcome = run_audit(config)?;
    std::fs::create_dir_all(&config.paths.output_dir)
        .map_err(|e| Error::io(&config.paths.output_dir, e))?;
    for (variant, (text_clf, image_clf)) in &outcome.classifiers {
        let text_path = config.paths.output_dir.join(format!("classifier_text_{variant}.bin"));
        let image_path = config.paths.output_dir.join(format!("classifier_image_{variant}.bin"));
        text_clf.save(&text_path)?;
        image_clf.save(&image_path)?;
        let v = &outcome.report.variants[variant];
        println!(
            "{variant}: input accuracy {:.4}, output accuracy {:.4}",
            v.input_eval.accuracy, v.output_eval.accuracy
        );
        println!("  saved {} and {}", text_path.display(), image_path.display());
    }
    Ok(())
}

fn cmd_attribute(config: &RunConfig) -> Result<()> {
    let outcome = run_audit(config)?;
    let written = emit_report(
        &outcome.report,
        &[ReportFormat::Csv],
        &config.paths.output_dir,
        &outcome.tables,
        &outcome.vocab_hash,
    )?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_metrics(config: &RunConfig) -> Result<()> {
    let outcome = run_audit(config)?;
    for (variant, v) in &outcome.report.variants {
        println!(
            "{variant}: IPS {:.4} ({} samples), ECS {:.4} ({} samples)",
            v.ips.value, v.ips.defined_samples, v.ecs.value, v.ecs.defined_samples
        );
        for id in &v.ips.excluded_samples {
            println!("  excluded from IPS (no IU present): {id}");
        }
        for id in &v.ecs.excluded_samples {
            println!("  excluded from ECS (no IU absent): {id}");
        }
    }
    Ok(())
}

fn cmd_report(config: &RunConfig, formats: &[ReportFormat]) -> Result<()> {
    let outcome = run_audit(config)?;
    let written = emit_report(
        &outcome.report,
        formats,
        &config.paths.output_dir,
        &outcome.tables,
        &outcome.vocab_hash,
    )?;
    for path in written {
        println!("wrote {}", path.display());
    }
    println!("backend calls this run: {}", outcome.backend_calls);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(&cli.common)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&config),
        Command::Vocab => cmd_vocab(&config),
        Command::Generate => cmd_materialize(&config, false),
        Command::Embed => cmd_materialize(&config, true),
        Command::Train => cmd_train(&config),
        Command::Attribute => cmd_attribute(&config),
        Command::Metrics => cmd_metrics(&config),
        Command::Report { format } => cmd_report(&config, &parse_formats(format)?),
        Command::Run => cmd_report(
            &config,
            &[ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown],
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
