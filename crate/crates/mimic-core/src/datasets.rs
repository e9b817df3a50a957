//! Benchmark serialization, corpus statistics, and training-data emission.
//!
//! Manifest format: UTF-8 line-delimited JSON. Line 1 is the header
//! (format version, generation config, class vocabulary); every further
//! line is one query with stable field order. Manifests reference images
//! by id and source URI only and never embed pixels.
//!
//! Training output: one conversation record per line, LLaVA-style:
//! `{"id", "images", "conversations": [{"from": "human"|"gpt", "value"}]}`
//! with one `<image>` tag per image at the head of the first human turn.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotations::{CategoryHierarchy, ClassPool, Corpus, ImageId};
use crate::error::{CoreError, Result};
use crate::prompts::{render_prompt, TemplateSet};
use crate::scoring::render_truth;
use crate::seed::{derive_seed, rng_from};
use crate::taskgen::{Balance, GroundTruth, Plan, QueryInstance, TaskKind, TaskSpec};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// First line of every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub seed: u64,
    pub min_box_fraction: f64,
    /// The class vocabulary of the generating pool; the scorer's answer
    /// matcher is built from this list.
    pub classes: Vec<String>,
    /// Source locator for every image referenced by a query; pixels are
    /// never embedded.
    #[serde(default)]
    pub images: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<Plan>,
}

/// The id -> source_uri table for exactly the images the queries use.
pub fn image_table(corpus: &Corpus, queries: &[QueryInstance]) -> BTreeMap<String, String> {
    let mut table = BTreeMap::new();
    for query in queries {
        for id in &query.images {
            if let Some(record) = corpus.get(id) {
                table
                    .entry(id.0.clone())
                    .or_insert_with(|| record.source_uri.clone());
            }
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub queries: Vec<QueryInstance>,
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let io_err = |e: std::io::Error| CoreError::io(path, e);
    let header = serde_json::to_string(&manifest.header).expect("header serializes");
    writeln!(writer, "{header}").map_err(io_err)?;
    for query in &manifest.queries {
        let line = serde_json::to_string(query).expect("query serializes");
        writeln!(writer, "{line}").map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let reader = BufReader::new(file);
    let path_str = path.display().to_string();
    let mut lines = reader.lines().enumerate();
    let header: ManifestHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| CoreError::io(path, e))?;
            serde_json::from_str(&line)
                .map_err(|e| CoreError::parse(&path_str, Some(1), e.to_string()))?
        }
        None => return Err(CoreError::parse(&path_str, Some(1), "empty manifest")),
    };
    if header.format_version != MANIFEST_FORMAT_VERSION {
        return Err(CoreError::VersionMismatch {
            found: header.format_version,
            supported: MANIFEST_FORMAT_VERSION,
        });
    }
    let mut queries = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let query: QueryInstance = serde_json::from_str(&line)
            .map_err(|e| CoreError::parse(&path_str, Some(idx as u64 + 1), e.to_string()))?;
        queries.push(query);
    }
    Ok(Manifest { header, queries })
}

// ---- statistics -----------------------------------------------------------

/// Per-task row of the benchmark statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub queries: u64,
    pub distinct_images: u64,
    pub mean_object_instances: f64,
    pub min_images: u32,
    pub max_images: u32,
    pub median_images: f64,
    pub mean_words_per_question: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    /// Keyed by task label; counting splits into balanced/unbalanced.
    pub per_task: BTreeMap<String, StatsRow>,
    pub overall: StatsRow,
}

/// Task label used for stats rows and score slicing.
pub fn task_label(query: &QueryInstance) -> String {
    match (query.kind, query.spec.balance) {
        (TaskKind::Counting, Some(Balance::Balanced)) => "counting_balanced".into(),
        (TaskKind::Counting, _) => "counting_unbalanced".into(),
        (kind, _) => kind.slug().to_string(),
    }
}

fn median(mut values: Vec<u32>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    }
}

fn row_from(queries: &[&QueryInstance]) -> StatsRow {
    let mut images: BTreeSet<&ImageId> = BTreeSet::new();
    let mut counts: Vec<u32> = Vec::with_capacity(queries.len());
    let mut instances: u64 = 0;
    let mut words: u64 = 0;
    for q in queries {
        images.extend(q.images.iter());
        counts.push(q.images.len() as u32);
        instances += q.object_instances as u64;
        words += q.prompt.split_whitespace().count() as u64;
    }
    let n = queries.len() as f64;
    StatsRow {
        queries: queries.len() as u64,
        distinct_images: images.len() as u64,
        mean_object_instances: if queries.is_empty() { 0.0 } else { instances as f64 / n },
        min_images: counts.iter().copied().min().unwrap_or(0),
        max_images: counts.iter().copied().max().unwrap_or(0),
        median_images: median(counts),
        mean_words_per_question: if queries.is_empty() { 0.0 } else { words as f64 / n },
    }
}

/// Recompute all statistics from a manifest alone; a pure fold over the
/// query records.
pub fn compute_stats(manifest: &Manifest) -> StatsReport {
    let mut by_task: BTreeMap<String, Vec<&QueryInstance>> = BTreeMap::new();
    for query in &manifest.queries {
        by_task.entry(task_label(query)).or_default().push(query);
    }
    let per_task = by_task
        .iter()
        .map(|(label, queries)| (label.clone(), row_from(queries)))
        .collect();
    let all: Vec<&QueryInstance> = manifest.queries.iter().collect();
    StatsReport {
        per_task,
        overall: row_from(&all),
    }
}

// ---- training emission ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStyle {
    OpenEnded,
    OptionBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub options: Option<Vec<String>>,
}

/// One training conversation over a fixed image set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub id: String,
    pub images: Vec<ImageId>,
    pub turns: Vec<Turn>,
    pub answer_style: AnswerStyle,
}

#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub style: AnswerStyle,
    /// Hard cap on images per sample.
    pub max_images: usize,
    /// Turns per sample; follow-up turns reuse the sample's image set
    /// with a different target class.
    pub max_turns: usize,
    /// Chance of attempting each follow-up turn.
    pub followup_probability: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            style: AnswerStyle::OptionBased,
            max_images: 10,
            max_turns: 3,
            followup_probability: 0.6,
            seed: 0x7472_6169,
        }
    }
}

#[derive(Debug, Default)]
pub struct EmitReport {
    pub samples: Vec<TrainingSample>,
    /// (query_id, reason) pairs for per-sample skips.
    pub skipped: Vec<(String, String)>,
}

/// Turn generated queries into training conversations.
///
/// Each query becomes one sample; follow-up turns ask about a different
/// class over the same image set (answers recomputed exactly from the
/// corpus). Option-based answers get decoys: counts within +/-2 of the
/// truth, classes from the same category, or single-edit class sets. A
/// sample whose options cannot be synthesized is skipped with a reason.
pub fn emit_training(
    corpus: &Corpus,
    pool: &ClassPool,
    hierarchy: &CategoryHierarchy,
    templates: &TemplateSet,
    queries: &[QueryInstance],
    config: &TrainingConfig,
) -> EmitReport {
    let mut report = EmitReport::default();
    for (idx, query) in queries.iter().enumerate() {
        if query.images.len() > config.max_images {
            report.skipped.push((
                query.query_id.clone(),
                format!(
                    "{} images exceed the {}-image cap",
                    query.images.len(),
                    config.max_images
                ),
            ));
            continue;
        }
        let mut rng = rng_from(derive_seed(config.seed, idx as u64, 0));
        let mut turns = Vec::new();
        match build_turn(pool, hierarchy, query, config.style, &mut rng) {
            Ok(turn) => turns.push(turn),
            Err(reason) => {
                report.skipped.push((query.query_id.clone(), reason));
                continue;
            }
        }
        let mut asked: BTreeSet<String> = query.truth.target_classes().into_iter().collect();
        while turns.len() < config.max_turns && rng.random_bool(config.followup_probability) {
            let Some(followup) =
                followup_query(corpus, templates, query, &asked, turns.len(), &mut rng)
            else {
                break;
            };
            asked.extend(followup.truth.target_classes());
            match build_turn(pool, hierarchy, &followup, config.style, &mut rng) {
                Ok(turn) => turns.push(turn),
                Err(_) => break,
            }
        }
        report.samples.push(TrainingSample {
            id: format!("train_{idx:06}"),
            images: query.images.clone(),
            turns,
            answer_style: config.style,
        });
    }
    report
}

fn build_turn(
    pool: &ClassPool,
    hierarchy: &CategoryHierarchy,
    query: &QueryInstance,
    style: AnswerStyle,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> std::result::Result<Turn, String> {
    let answer = render_truth(&query.truth);
    let options = match style {
        AnswerStyle::OpenEnded => None,
        AnswerStyle::OptionBased => Some(synthesize_options(pool, hierarchy, query, rng)?),
    };
    Ok(Turn {
        question: query.prompt.clone(),
        answer,
        options,
    })
}

/// Decoy policy, per answer kind. The truth is always present and all
/// options are pairwise distinct.
fn synthesize_options(
    pool: &ClassPool,
    hierarchy: &CategoryHierarchy,
    query: &QueryInstance,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> std::result::Result<Vec<String>, String> {
    const DECOYS: usize = 3;
    let truth_text = render_truth(&query.truth);
    let mut options: Vec<String> = vec![truth_text.clone()];
    match &query.truth {
        GroundTruth::Counting { counts } => {
            // Perturb one class count by up to +/-2 per decoy.
            let mut seen: BTreeSet<String> = options.iter().cloned().collect();
            let mut budget = 64;
            while options.len() < DECOYS + 1 && budget > 0 {
                budget -= 1;
                let mut perturbed = counts.clone();
                let keys: Vec<&String> = counts.keys().collect();
                let key = keys[rng.random_range(0..keys.len())].clone();
                let delta = [-2i64, -1, 1, 2][rng.random_range(0..4)];
                let value = perturbed[&key] as i64 + delta;
                if value < 0 {
                    continue;
                }
                perturbed.insert(key, value as u32);
                let text = render_truth(&GroundTruth::Counting { counts: perturbed });
                if seen.insert(text.clone()) {
                    options.push(text);
                }
            }
        }
        GroundTruth::Common { class } | GroundTruth::OddOne { class } => {
            let same_category: Vec<&String> = hierarchy
                .category_of(class)
                .and_then(|cat| hierarchy.classes_of(cat))
                .map(|classes| {
                    classes
                        .iter()
                        .filter(|c| *c != class && pool.contains(c))
                        .collect()
                })
                .unwrap_or_default();
            let mut candidates = same_category;
            let mut seen: BTreeSet<String> = options.iter().cloned().collect();
            while options.len() < DECOYS + 1 && !candidates.is_empty() {
                let pick = candidates.remove(rng.random_range(0..candidates.len()));
                if seen.insert(pick.clone()) {
                    options.push(pick.clone());
                }
            }
        }
        GroundTruth::Listing { classes } => {
            let category_classes: Vec<String> = query
                .spec
                .category
                .as_deref()
                .and_then(|cat| hierarchy.classes_of(cat))
                .map(|set| set.iter().cloned().collect())
                .unwrap_or_default();
            let mut seen: BTreeSet<String> = options.iter().cloned().collect();
            let mut budget = 64;
            while options.len() < DECOYS + 1 && budget > 0 {
                budget -= 1;
                let mut mutated = classes.clone();
                let grow = rng.random_bool(0.5);
                if grow {
                    let extras: Vec<&String> = category_classes
                        .iter()
                        .filter(|c| !mutated.contains(*c))
                        .collect();
                    if extras.is_empty() {
                        continue;
                    }
                    mutated.insert(extras[rng.random_range(0..extras.len())].clone());
                } else {
                    if mutated.len() <= 1 {
                        continue;
                    }
                    let victims: Vec<String> = mutated.iter().cloned().collect();
                    mutated.remove(&victims[rng.random_range(0..victims.len())]);
                }
                let text = render_truth(&GroundTruth::Listing { classes: mutated });
                if seen.insert(text.clone()) {
                    options.push(text);
                }
            }
        }
    }
    if options.len() < DECOYS + 1 {
        return Err(format!(
            "only {} of {} options synthesizable",
            options.len(),
            DECOYS + 1
        ));
    }
    // Shuffle so the truth is not always option A.
    for i in (1..options.len()).rev() {
        let j = rng.random_range(0..=i);
        options.swap(i, j);
    }
    debug_assert!(options.contains(&truth_text));
    Ok(options)
}

/// Derive a follow-up counting question over the query's image set, about
/// a class not yet asked. Returns a fully formed query so the stored
/// answer is generator truth like any other.
fn followup_query(
    corpus: &Corpus,
    templates: &TemplateSet,
    base: &QueryInstance,
    asked: &BTreeSet<String>,
    turn_index: usize,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Option<QueryInstance> {
    let mut present: BTreeMap<String, (u32, u32)> = BTreeMap::new(); // class -> (images, instances)
    for id in &base.images {
        for (class, &count) in corpus.eligible_classes(id).unwrap() {
            let entry = present.entry(class.clone()).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += count;
        }
    }
    let candidates: Vec<(&String, &(u32, u32))> =
        present.iter().filter(|(c, _)| !asked.contains(*c)).collect();
    if candidates.is_empty() {
        return None;
    }
    let (class, &(spread, total)) = candidates[rng.random_range(0..candidates.len())];
    let seed = derive_seed(base.spec.seed, 0x666f_6c77, turn_index as u64);
    let spec = TaskSpec {
        kind: TaskKind::Counting,
        k: 1,
        spread_s: spread,
        distractors: base.images.len() as u32 - spread,
        total_images: base.images.len() as u32,
        balance: Some(Balance::Unbalanced),
        instances_total: None,
        category: None,
        m_odd: 1,
        seed,
    };
    let roles = base
        .images
        .iter()
        .map(|id| {
            if corpus.count_instances(id, class) > 0 {
                crate::taskgen::ImageRole::Query
            } else {
                crate::taskgen::ImageRole::Distractor
            }
        })
        .collect();
    let mut query = QueryInstance {
        query_id: format!("{}_turn{turn_index}", base.query_id),
        kind: TaskKind::Counting,
        images: base.images.clone(),
        prompt: String::new(),
        truth: GroundTruth::Counting {
            counts: [(class.clone(), total)].into_iter().collect(),
        },
        spec,
        roles,
        object_instances: base.object_instances,
        composition: None,
    };
    query.prompt = render_prompt(templates, &query, seed).ok()?;
    Some(query)
}

/// Write samples in the conversation format.
pub fn write_training(samples: &[TrainingSample], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let io_err = |e: std::io::Error| CoreError::io(path, e);
    for sample in samples {
        let mut conversations = Vec::with_capacity(sample.turns.len() * 2);
        for (i, turn) in sample.turns.iter().enumerate() {
            let mut value = String::new();
            if i == 0 {
                for _ in 0..sample.images.len() {
                    value.push_str("<image>\n");
                }
            }
            value.push_str(&turn.question);
            if let Some(options) = &turn.options {
                value.push_str("\nOptions: ");
                value.push_str(&options.join(" | "));
            }
            conversations.push(serde_json::json!({"from": "human", "value": value}));
            conversations.push(serde_json::json!({"from": "gpt", "value": turn.answer}));
        }
        let record = serde_json::json!({
            "id": sample.id,
            "images": sample.images,
            "conversations": conversations,
        });
        writeln!(writer, "{record}").map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}
