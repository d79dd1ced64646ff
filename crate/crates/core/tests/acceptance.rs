//! Acceptance gate: one test per release criterion, each printing a PASS
//! line. Metric checks compare against an independently coded brute-force
//! oracle rather than the library implementation.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iuleak_core::attribution::{
    contribution_score, output_contributions, ContributionTable, Space,
};
use iuleak_core::backends::mock::{MockAttender, MockGenerator, MockSegmenter, MOCK_NOISE_DIMS};
use iuleak_core::backends::{tensor, AttentionMap, Generator, ImageArtifact, SegmentMask};
use iuleak_core::classify::{evaluate, train, ClassifierSpec, TrainedClassifier};
use iuleak_core::config::RunConfig;
use iuleak_core::corpus::{carve_validation, tokenize, DatasetManifest, Group, Prompt, PromptVariant, Split, TranscriptRecord};
use iuleak_core::iu::{membership, InformationUnit, IUVocabulary, IuPos, MembershipMatrix};
use iuleak_core::metrics::{ecs_avg, ips_avg};
use iuleak_core::pipeline::run_audit;

// ---------------------------------------------------------------- helpers

fn matrix(member: &[Vec<bool>]) -> MembershipMatrix {
    let n = member.len();
    let m = member.first().map_or(0, Vec::len);
    MembershipMatrix {
        rows: (0..n).map(|i| format!("s{i}")).collect(),
        columns: (0..m).map(|j| format!("iu{j}")).collect(),
        values: member.iter().flatten().copied().collect(),
    }
}

fn table(contrib: &[Vec<f64>]) -> ContributionTable {
    let n = contrib.len();
    let m = contrib.first().map_or(0, Vec::len);
    ContributionTable {
        rows: (0..n).map(|i| format!("s{i}")).collect(),
        columns: (0..m).map(|j| format!("iu{j}")).collect(),
        values: contrib.iter().flatten().copied().collect(),
        space: Space::Output,
        variant: PromptVariant::Original,
    }
}

/// Brute-force double-sum oracle for the propagation metrics, written
/// directly from the defining formula: mean over samples of
/// |{j : member == want, C > eps}| / |{j : member == want}|, skipping
/// samples with an empty denominator set.
fn oracle(member: &[Vec<bool>], contrib: &[Vec<f64>], want_present: bool) -> (f64, usize) {
    const EPS: f64 = 1e-12;
    let mut total = 0.0;
    let mut defined = 0usize;
    for (mrow, crow) in member.iter().zip(contrib) {
        let mut denominator = 0usize;
        let mut numerator = 0usize;
        for (&present, &c) in mrow.iter().zip(crow) {
            if present == want_present {
                denominator += 1;
                if c > EPS {
                    numerator += 1;
                }
            }
        }
        if denominator > 0 {
            total += numerator as f64 / denominator as f64;
            defined += 1;
        }
    }
    if defined == 0 {
        (0.0, 0)
    } else {
        (total / defined as f64, defined)
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<bool>>, Vec<Vec<f64>>) {
    let n = rng.gen_range(1..=10);
    let m = rng.gen_range(1..=8);
    let member: Vec<Vec<bool>> =
        (0..n).map(|_| (0..m).map(|_| rng.gen_bool(0.5)).collect()).collect();
    // sparse: roughly half the entries are exactly zero
    let contrib: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(1e-9..3.0) })
                .collect()
        })
        .collect();
    (member, contrib)
}

fn assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn bundled_config(tmp: &std::path::Path, variants: &str, seed: u64) -> RunConfig {
    let assets = assets_dir();
    let toml = format!(
        r#"
seed = {seed}
variants = [{variants}]

[paths]
data_dir = "{data}"
labels = "{labels}"
cache_dir = "{cache}"
output_dir = "{out}"

# desk-scale training budget for the bundled 40-sample corpus
[classifier.text]
kind = "feedforward"
hidden_layers = 1
epochs = 150
learning_rate = 0.1
"#,
        data = assets.join("data").display(),
        labels = assets.join("labels.csv").display(),
        cache = tmp.join("cache").display(),
        out = tmp.join("out").display(),
    );
    let path = tmp.join("iuleak.toml");
    std::fs::write(&path, toml).unwrap();
    RunConfig::from_file(&path).unwrap()
}

// ---------------------------------------------------------------- criteria

#[test]
fn criterion_1_ips_ecs_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    for _ in 0..1000 {
        let (member, contrib) = random_instance(&mut rng);
        let matrix = matrix(&member);
        let contributions = table(&contrib);
        let ips = ips_avg(&matrix, &contributions).unwrap();
        let ecs = ecs_avg(&matrix, &contributions).unwrap();
        let (ips_ref, ips_defined) = oracle(&member, &contrib, true);
        let (ecs_ref, ecs_defined) = oracle(&member, &contrib, false);
        assert!((ips.value - ips_ref).abs() <= 1e-12, "{} vs {}", ips.value, ips_ref);
        assert!((ecs.value - ecs_ref).abs() <= 1e-12, "{} vs {}", ecs.value, ecs_ref);
        assert_eq!(ips.defined_samples, ips_defined);
        assert_eq!(ecs.defined_samples, ecs_defined);
        assert_eq!(ips.excluded_samples.len(), member.len() - ips_defined);
        assert_eq!(ecs.excluded_samples.len(), member.len() - ecs_defined);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "oracle sweep took {elapsed:?}");
    println!("ACCEPTANCE 1 ips-ecs-oracle-equivalence: PASS");
}

#[test]
fn criterion_2_metric_boundary_cases() {
    // all present, all propagated -> IPS exactly 1
    let member = vec![vec![true; 5]; 4];
    let contrib = vec![vec![0.3; 5]; 4];
    assert_eq!(ips_avg(&matrix(&member), &table(&contrib)).unwrap().value, 1.0);

    // all-zero contributions -> both metrics exactly 0
    let member = vec![vec![true, false, true], vec![false, true, true]];
    let zeros = vec![vec![0.0; 3]; 2];
    assert_eq!(ips_avg(&matrix(&member), &table(&zeros)).unwrap().value, 0.0);
    assert_eq!(ecs_avg(&matrix(&member), &table(&zeros)).unwrap().value, 0.0);

    // monotonicity: flipping one C from 0 to positive never decreases the
    // corresponding metric
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0B);
    let mut pairs = 0;
    while pairs < 200 {
        let (member, mut contrib) = random_instance(&mut rng);
        let zero_cells: Vec<(usize, usize)> = (0..contrib.len())
            .flat_map(|i| (0..contrib[i].len()).map(move |j| (i, j)))
            .filter(|&(i, j)| contrib[i][j] == 0.0)
            .collect();
        if zero_cells.is_empty() {
            continue;
        }
        let (i, j) = zero_cells[rng.gen_range(0..zero_cells.len())];
        let before_ips = ips_avg(&matrix(&member), &table(&contrib)).unwrap().value;
        let before_ecs = ecs_avg(&matrix(&member), &table(&contrib)).unwrap().value;
        contrib[i][j] = rng.gen_range(0.1..2.0);
        let after_ips = ips_avg(&matrix(&member), &table(&contrib)).unwrap().value;
        let after_ecs = ecs_avg(&matrix(&member), &table(&contrib)).unwrap().value;
        if member[i][j] {
            assert!(after_ips >= before_ips - 1e-15);
            assert_eq!(after_ecs, before_ecs);
        } else {
            assert!(after_ecs >= before_ecs - 1e-15);
            assert_eq!(after_ips, before_ips);
        }
        pairs += 1;
    }
    println!("ACCEPTANCE 2 metric-boundary-cases: PASS");
}

#[test]
fn criterion_3_contribution_score_algebra() {
    let rect = |x0: u32, y0: u32, w: u32, h: u32| {
        let mut values = vec![false; 16 * 16];
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                values[(y * 16 + x) as usize] = true;
            }
        }
        SegmentMask { values, height: 16, width: 16, label: "iu".into() }
    };

    // uniform attention a over any mask -> score == a exactly
    for a in [0.0f32, 0.25, 1.0, 7.5] {
        let attention = AttentionMap { values: vec![a; 256], height: 16, width: 16 };
        for mask in [rect(0, 0, 1, 1), rect(3, 5, 7, 2), rect(0, 0, 16, 16)] {
            assert_eq!(contribution_score(&attention, &[mask]).unwrap(), a as f64);
        }
    }

    // linearity under scaling to 1e-12; attention values are exact dyadic
    // rationals so every f32 product is exact
    let base_values: Vec<f32> = (0..256).map(|i| (i % 13) as f32 / 256.0).collect();
    let attention = AttentionMap { values: base_values.clone(), height: 16, width: 16 };
    let mask = rect(2, 4, 9, 6);
    let base = contribution_score(&attention, &[mask.clone()]).unwrap();
    for k in [0.0f32, 0.5, 2.0, 10.0] {
        let scaled = AttentionMap {
            values: base_values.iter().map(|v| v * k).collect(),
            height: 16,
            width: 16,
        };
        let score = contribution_score(&scaled, &[mask.clone()]).unwrap();
        assert!((score - k as f64 * base).abs() <= 1e-12, "k={k}: {score} vs {}", k as f64 * base);
    }

    // absent mask -> zero
    let attention = AttentionMap { values: vec![5.0; 256], height: 16, width: 16 };
    assert_eq!(contribution_score(&attention, &[]).unwrap(), 0.0);
    println!("ACCEPTANCE 3 contribution-score-algebra: PASS");
}

#[test]
fn criterion_4_mock_closure_absence_axiom() {
    let lemmas = [
        ("boy", IuPos::Noun),
        ("cookie", IuPos::Noun),
        ("curtain", IuPos::Noun),
        ("fall", IuPos::Verb),
        ("jar", IuPos::Noun),
        ("mother", IuPos::Noun),
        ("sink", IuPos::Noun),
        ("spill", IuPos::Verb),
        ("stool", IuPos::Noun),
        ("take", IuPos::Verb),
        ("wash", IuPos::Verb),
        ("window", IuPos::Noun),
    ];
    let vocab = IUVocabulary::new(
        lemmas
            .iter()
            .map(|(l, p)| InformationUnit {
                lemma: l.to_string(),
                pos: *p,
                surface_forms: BTreeSet::new(),
            })
            .collect(),
    );
    let shared = std::sync::Arc::new(vocab.clone());
    let generator = MockGenerator::new(shared.clone());
    let segmenter = MockSegmenter::new(shared.clone());
    let attender = MockAttender::new(shared.clone());
    // any all-nonzero linear classifier gives every region positive attention
    let classifier = TrainedClassifier::linear(
        (0..vocab.len() + MOCK_NOISE_DIMS).map(|i| 0.3 + 0.1 * i as f64).collect(),
        0.0,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0xC105);
    let mut prompts = Vec::new();
    let mut images = Vec::new();
    for i in 0..50 {
        // 1..=vocab-1 lemmas so every prompt has a present and an absent IU
        let k = rng.gen_range(1..vocab.len());
        let mut chosen: Vec<&str> = lemmas.iter().map(|(l, _)| *l).collect();
        for j in (1..chosen.len()).rev() {
            chosen.swap(j, rng.gen_range(0..=j));
        }
        chosen.truncate(k);
        let text = chosen.join(" ");
        let prompt = Prompt {
            record_id: format!("p{i}"),
            text,
            token_count: k,
            variant: PromptVariant::Original,
        };
        images.push(generator.generate(&prompt, 17).unwrap());
        prompts.push(prompt);
    }

    let member = membership(&prompts, &vocab);
    let contributions = output_contributions(
        &images,
        &classifier,
        &vocab,
        &segmenter,
        &attender,
        PromptVariant::Original,
    )
    .unwrap();

    for i in 0..prompts.len() {
        for j in 0..vocab.len() {
            assert_eq!(
                contributions.at(i, j) > 0.0,
                member.at(i, j),
                "closure violated at sample {i}, unit {}",
                contributions.columns[j]
            );
        }
    }
    assert_eq!(ips_avg(&member, &contributions).unwrap().value, 1.0);
    assert_eq!(ecs_avg(&member, &contributions).unwrap().value, 0.0);
    println!("ACCEPTANCE 4 mock-closure-absence-axiom: PASS");
}

#[test]
fn criterion_5_end_to_end_determinism() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = bundled_config(tmp.path(), "\"original\", \"no_discourse\"", 7);

    let cold = run_audit(&config).unwrap();
    assert!(cold.backend_calls > 0, "cold run must invoke backends");
    let warm = run_audit(&config).unwrap();
    assert_eq!(
        cold.report.to_json(),
        warm.report.to_json(),
        "rerun must produce byte-identical report JSON"
    );
    assert_eq!(warm.backend_calls, 0, "warm-cache rerun must perform zero backend calls");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "end-to-end runs took {elapsed:?}");
    println!("ACCEPTANCE 5 end-to-end-determinism: PASS");
}

#[test]
fn criterion_6_classifier_sanity() {
    use iuleak_core::backends::{EmbeddingVector, Modality};
    let embed = |values: Vec<f32>| EmbeddingVector { values, modality: Modality::Text };
    // two deterministic clusters, no randomness: 40 train + 20 test
    let make = |n: usize, start: usize| {
        let mut embeddings = Vec::new();
        let mut labels = Vec::new();
        for i in start..start + n / 2 {
            let jitter = (i % 9) as f32 * 0.05;
            embeddings.push(embed(vec![1.0 + jitter, 0.4, 0.6 - jitter, 0.2]));
            labels.push(Group::Ad);
            embeddings.push(embed(vec![-1.0 - jitter, 0.4, -0.6 + jitter, 0.2]));
            labels.push(Group::Cc);
        }
        (embeddings, labels)
    };
    let (train_e, train_l) = make(40, 0);
    let (test_e, test_l) = make(20, 40);

    for spec in [ClassifierSpec::feedforward(3), ClassifierSpec::max_margin(3)] {
        let clf = train(&train_e, &train_l, &spec, None).unwrap();
        let report = evaluate(&clf, &test_e, &test_l).unwrap();
        assert!(report.accuracy >= 0.90, "{:?}: accuracy {}", spec.kind, report.accuracy);
        assert_eq!(report.confusion.total(), report.n);
    }

    // balanced constant classifier scores exactly 0.5
    let constant = TrainedClassifier::linear(vec![0.0; 4], 1.0);
    let report = evaluate(&constant, &test_e, &test_l).unwrap();
    assert_eq!(report.accuracy, 0.5);
    assert_eq!(report.confusion.total(), report.n);
    println!("ACCEPTANCE 6 classifier-sanity: PASS");
}

#[test]
fn criterion_7_discourse_ablation_plumbing() {
    let tmp = tempfile::tempdir().unwrap();
    let both = bundled_config(tmp.path(), "\"original\", \"no_discourse\"", 7);
    let outcome = run_audit(&both).unwrap();

    // no_discourse prompts contain zero lexicon tokens: verify through the
    // emitted membership-bearing artifacts by rebuilding the prompts
    let lexicon = iuleak_core::pipeline::load_lexicon(&both).unwrap();
    let manifest = iuleak_core::corpus::load_manifest(
        &both.paths.data_dir,
        &both.paths.labels,
        both.seed,
    )
    .unwrap();
    for record in &manifest.records {
        let prompt = iuleak_core::corpus::make_prompt(
            record,
            PromptVariant::NoDiscourse,
            &lexicon,
            both.clip_limit,
            &iuleak_core::corpus::whitespace_count,
        );
        assert!(
            prompt.text.split_whitespace().all(|w| !lexicon.contains(w)),
            "lexicon token left in no_discourse prompt {}",
            record.id
        );
    }

    // membership is variant-invariant: group frequency tables match
    let original = &outcome.report.variants["original"];
    let ablated = &outcome.report.variants["no_discourse"];
    assert_eq!(original.group_frequency, ablated.group_frequency);
    assert_eq!(original.iu_present_mean, ablated.iu_present_mean);

    // original numbers unchanged by enabling the ablation
    let tmp2 = tempfile::tempdir().unwrap();
    let only = bundled_config(tmp2.path(), "\"original\"", 7);
    let solo = run_audit(&only).unwrap();
    assert_eq!(solo.report.variants["original"], *original);
    println!("ACCEPTANCE 7 discourse-ablation-plumbing: PASS");
}

#[test]
fn criterion_8_split_arithmetic() {
    let mut records = Vec::new();
    for group in Group::ALL {
        for i in 0..54 {
            records.push(TranscriptRecord {
                id: format!("{group}tr{i:02}"),
                group,
                split: Split::Train,
                raw_text: "boy takes cookie".into(),
                tokens: tokenize("boy takes cookie"),
            });
        }
        for i in 0..24 {
            records.push(TranscriptRecord {
                id: format!("{group}te{i:02}"),
                group,
                split: Split::Test,
                raw_text: "boy takes cookie".into(),
                tokens: tokenize("boy takes cookie"),
            });
        }
    }
    let manifest = DatasetManifest::new(records, 1);
    let carved = carve_validation(&manifest, 0.2, 99).unwrap();
    for group in ["AD", "CC"] {
        assert_eq!(carved.counts[&format!("{group}-val")], 11);
        assert_eq!(carved.counts[&format!("{group}-train")], 43);
        assert_eq!(carved.counts[&format!("{group}-test")], 24);
    }
    // seed-stable
    let again = carve_validation(&manifest, 0.2, 99).unwrap();
    assert_eq!(carved, again);
    // different seed moves samples but keeps the arithmetic
    let other = carve_validation(&manifest, 0.2, 100).unwrap();
    assert_eq!(other.counts, carved.counts);
    assert_ne!(other, carved);
    println!("ACCEPTANCE 8 split-arithmetic: PASS");
}

#[test]
fn criterion_9_format_round_trips() {
    // tensor blobs, f32 and u8
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);
    let floats: Vec<f32> = (0..60).map(|_| rng.gen_range(-1e6f32..1e6)).collect();
    let blob = tensor::encode_f32(&[3, 20], &floats);
    let (dims, decoded) = tensor::decode_f32(&blob).unwrap();
    assert_eq!(dims, vec![3, 20]);
    assert_eq!(
        decoded.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        floats.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let bytes: Vec<u8> = (0..=255).collect();
    let blob = tensor::encode_u8(&[16, 16], &bytes);
    let (dims, decoded) = tensor::decode_u8(&blob).unwrap();
    assert_eq!(dims, vec![16, 16]);
    assert_eq!(decoded, bytes);

    // contribution CSV, including awkward floats
    let dir = tempfile::tempdir().unwrap();
    let contributions = table(&[
        vec![0.1, 1.0 / 3.0, 0.0],
        vec![f64::MIN_POSITIVE, 1e300, 7.25],
    ]);
    let path = dir.path().join("contributions.csv");
    contributions.write_csv(&path).unwrap();
    let loaded = ContributionTable::read_csv(&path, Space::Output, PromptVariant::Original).unwrap();
    assert_eq!(loaded, contributions);
    println!("ACCEPTANCE 9 format-round-trips: PASS");
}

// ---------------------------------------------------------- sanity extras

/// The bundled corpus must itself exercise the leakage story: separable
/// groups, discourse tokens present, prompts under the clip limit.
#[test]
fn bundled_corpus_drives_a_meaningful_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let config = bundled_config(tmp.path(), "\"original\", \"no_discourse\"", 7);
    let outcome = run_audit(&config).unwrap();
    let original = &outcome.report.variants["original"];
    assert!(original.input_eval.accuracy >= 0.9, "input {}", original.input_eval.accuracy);
    assert!(original.output_eval.accuracy >= 0.9, "output {}", original.output_eval.accuracy);
    // mock closure at corpus scale
    assert_eq!(original.ips.value, 1.0);
    assert_eq!(original.ecs.value, 0.0);
    assert!(original.ips.excluded_samples.is_empty());
    assert!(original.ecs.excluded_samples.is_empty());
    // the generated images actually differ between groups
    for group in Group::ALL {
        assert!(original.utility[&group].semantic_similarity.unwrap() > 0.0);
    }
}

/// `Generator::generate` is never reached with an over-limit prompt: the
/// pipeline clips to min(config, backend) budget first.
#[test]
fn prompts_respect_the_backend_clip_limit() {
    let vocab = IUVocabulary::new(Vec::new());
    let generator = MockGenerator::new(std::sync::Arc::new(vocab));
    let long: Vec<String> = (0..200).map(|i| format!("w{i}")).collect();
    let text = iuleak_core::corpus::clip_prompt(&long, generator.clip_limit(), &|t| {
        generator.count_tokens(t)
    });
    assert_eq!(generator.count_tokens(&text), 77);
}
