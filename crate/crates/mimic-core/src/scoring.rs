//! Free-form answer parsing, judging, and sliced aggregation.
//!
//! Parsing never fails hard: text that yields nothing usable becomes an
//! explicit unparsed sentinel that judges to 0. The parser rules are
//! versioned ([`PARSER_VERSION`]) because scores are only comparable
//! under identical extraction rules.
//!
//! Counting extraction: class mentions are matched against the manifest
//! vocabulary (longest surface form first, plural and alias forms
//! included), each mention is paired with the nearest number within a
//! 3-token window before it (else 2 tokens after, covering "dog: 3"),
//! number words zero through twenty count as numbers, and the last
//! stated value per class wins. A bare number with no class mention is
//! kept as a fallback that only applies to single-class queries whose
//! answer text named no class at all.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::english::{enumerate_names, number_word, pluralize};
use crate::error::{CoreError, Result};
use crate::taskgen::{Balance, GroundTruth, QueryInstance, TaskKind};

/// Bump when any extraction rule changes.
pub const PARSER_VERSION: u32 = 1;

/// Answer-side aliases folded into the vocabulary unless strict mode is on.
const ANSWER_ALIASES: &[(&str, &str)] = &[
    ("television", "tv"),
    ("tv monitor", "tv"),
    ("tvmonitor", "tv"),
    ("sofa", "couch"),
    ("aeroplane", "airplane"),
    ("motorbike", "motorcycle"),
    ("mobile phone", "cell phone"),
    ("remote control", "remote"),
    ("hair dryer", "hair drier"),
    ("persons", "person"),
];

/// Class-name matcher over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    surface: BTreeMap<String, String>,
    max_tokens: usize,
}

impl Vocabulary {
    pub fn new(classes: &[String], with_aliases: bool) -> Self {
        let mut vocab = Vocabulary {
            surface: BTreeMap::new(),
            max_tokens: 1,
        };
        for class in classes {
            vocab.add_form(class, class);
            vocab.add_form(&pluralize(class), class);
            if with_aliases {
                for (alias, canonical) in ANSWER_ALIASES {
                    if canonical == class {
                        vocab.add_form(alias, class);
                        vocab.add_form(&pluralize(alias), class);
                    }
                }
            }
        }
        vocab
    }

    fn add_form(&mut self, form: &str, class: &str) {
        let normalized = tokenize(form)
            .into_iter()
            .map(|t| t.text)
            .collect::<Vec<_>>()
            .join(" ");
        if normalized.is_empty() {
            return;
        }
        self.max_tokens = self.max_tokens.max(normalized.split(' ').count());
        self.surface.entry(normalized).or_insert_with(|| class.to_string());
    }

    fn lookup(&self, form: &str) -> Option<&String> {
        self.surface.get(form)
    }
}

struct Token {
    text: String,
}

fn tokenize(text: &str) -> Vec<Token> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| Token { text: s.to_string() })
        .collect()
}

/// Class mentions as (class, start token index, token length).
fn find_mentions(tokens: &[Token], vocab: &Vocabulary) -> Vec<(String, usize, usize)> {
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut matched = None;
        let max_n = vocab.max_tokens.min(tokens.len() - i);
        for n in (1..=max_n).rev() {
            let form = tokens[i..i + n]
                .iter()
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if let Some(class) = vocab.lookup(&form) {
                matched = Some((class.clone(), i, n));
                break;
            }
        }
        match matched {
            Some(m) => {
                i += m.2;
                mentions.push(m);
            }
            None => i += 1,
        }
    }
    mentions
}

fn number_at(token: &Token) -> Option<u32> {
    if token.text.chars().all(|c| c.is_ascii_digit()) {
        token.text.parse().ok()
    } else {
        number_word(&token.text)
    }
}

/// Kind-discriminated parse result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParsedPayload {
    Counts {
        by_class: BTreeMap<String, u32>,
        /// Last number in the text, for class-less single-class answers.
        last_number: Option<u32>,
    },
    ClassSet {
        classes: BTreeSet<String>,
    },
    SingleClass {
        class: String,
    },
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub kind: TaskKind,
    pub payload: ParsedPayload,
    pub raw: String,
}

pub fn parse_answer(kind: TaskKind, text: &str, vocab: &Vocabulary) -> ParsedAnswer {
    let tokens = tokenize(text);
    let mentions = find_mentions(&tokens, vocab);
    let payload = match kind {
        TaskKind::Counting => {
            let numbers: Vec<(usize, u32)> = tokens
                .iter()
                .enumerate()
                .filter_map(|(i, t)| number_at(t).map(|v| (i, v)))
                .collect();
            if mentions.is_empty() && numbers.is_empty() {
                ParsedPayload::Unparsed
            } else {
                let mut by_class: BTreeMap<String, u32> = BTreeMap::new();
                for (class, start, len) in &mentions {
                    let before = numbers
                        .iter()
                        .rev()
                        .find(|(i, _)| *i < *start && start - i <= 3);
                    let after = numbers
                        .iter()
                        .find(|(i, _)| *i >= start + len && i - (start + len) < 2);
                    if let Some((_, value)) = before.or(after) {
                        by_class.insert(class.clone(), *value);
                    }
                }
                ParsedPayload::Counts {
                    by_class,
                    last_number: numbers.last().map(|(_, v)| *v),
                }
            }
        }
        TaskKind::Listing => {
            let classes: BTreeSet<String> =
                mentions.iter().map(|(class, _, _)| class.clone()).collect();
            if classes.is_empty() {
                ParsedPayload::Unparsed
            } else {
                ParsedPayload::ClassSet { classes }
            }
        }
        TaskKind::Common | TaskKind::OddOne => {
            // Longest class name mentioned; ties go to the earliest mention.
            let best = mentions
                .iter()
                .max_by(|(a, ai, _), (b, bi, _)| {
                    a.len().cmp(&b.len()).then(bi.cmp(ai))
                });
            match best {
                Some((class, _, _)) => ParsedPayload::SingleClass {
                    class: class.clone(),
                },
                None => ParsedPayload::Unparsed,
            }
        }
    };
    ParsedAnswer {
        kind,
        payload,
        raw: text.to_string(),
    }
}

/// Judged quality of one answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Headline value in [0, 1]: exact-match accuracy, or F1 for listing.
    pub value: f64,
    /// Counting only: fraction of queried classes answered exactly.
    /// Diagnostic; never part of headline accuracy.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class_recall: Option<f64>,
}

pub fn judge(query: &QueryInstance, parsed: &ParsedAnswer) -> Result<Verdict> {
    if parsed.kind != query.kind {
        return Err(CoreError::KindMismatch {
            expected: query.kind.to_string(),
            got: parsed.kind.to_string(),
        });
    }
    let verdict = match (&query.truth, &parsed.payload) {
        (GroundTruth::Counting { .. }, ParsedPayload::Unparsed) => Verdict {
            value: 0.0,
            class_recall: Some(0.0),
        },
        (GroundTruth::Counting { counts }, ParsedPayload::Counts { by_class, last_number }) => {
            let mut matched = 0usize;
            for (class, truth_count) in counts {
                let predicted = by_class.get(class).copied().or({
                    if counts.len() == 1 && by_class.is_empty() {
                        *last_number
                    } else {
                        None
                    }
                });
                if predicted == Some(*truth_count) {
                    matched += 1;
                }
            }
            Verdict {
                value: if matched == counts.len() { 1.0 } else { 0.0 },
                class_recall: Some(matched as f64 / counts.len() as f64),
            }
        }
        (GroundTruth::Listing { .. }, ParsedPayload::Unparsed) => Verdict {
            value: 0.0,
            class_recall: None,
        },
        (GroundTruth::Listing { classes }, ParsedPayload::ClassSet { classes: predicted }) => {
            let overlap = classes.intersection(predicted).count() as f64;
            let precision = overlap / predicted.len() as f64;
            let recall = overlap / classes.len() as f64;
            let value = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            Verdict {
                value,
                class_recall: None,
            }
        }
        (
            GroundTruth::Common { class } | GroundTruth::OddOne { class },
            ParsedPayload::SingleClass { class: predicted },
        ) => Verdict {
            value: if class == predicted { 1.0 } else { 0.0 },
            class_recall: None,
        },
        (
            GroundTruth::Common { .. } | GroundTruth::OddOne { .. },
            ParsedPayload::Unparsed,
        ) => Verdict {
            value: 0.0,
            class_recall: None,
        },
        _ => {
            return Err(CoreError::KindMismatch {
                expected: query.kind.to_string(),
                got: format!("{:?}", parsed.payload),
            })
        }
    };
    Ok(verdict)
}

/// Render a ground truth the way the oracle answer would state it; the
/// result always parses back to a verdict of 1.
pub fn render_truth(truth: &GroundTruth) -> String {
    match truth {
        GroundTruth::Counting { counts } => {
            if counts.len() == 1 {
                counts.values().next().unwrap().to_string()
            } else {
                let parts: Vec<String> = counts
                    .iter()
                    .map(|(class, count)| {
                        let name = if *count == 1 {
                            class.clone()
                        } else {
                            pluralize(class)
                        };
                        format!("{count} {name}")
                    })
                    .collect();
                enumerate_names(&parts)
            }
        }
        GroundTruth::Listing { classes } => {
            let names: Vec<String> = classes.iter().cloned().collect();
            enumerate_names(&names)
        }
        GroundTruth::Common { class } | GroundTruth::OddOne { class } => class.clone(),
    }
}

// ---- verdict records and aggregation -----------------------------------------

/// One scored query, flattened with its slice keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub query_id: String,
    pub task: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class_recall: Option<f64>,
    pub parsed: ParsedPayload,
    pub spread_s: u32,
    pub distractors: u32,
    pub k: u32,
    pub total_images: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub balance: Option<Balance>,
}

pub fn verdict_record(query: &QueryInstance, parsed: &ParsedAnswer, verdict: Verdict) -> VerdictRecord {
    VerdictRecord {
        query_id: query.query_id.clone(),
        task: crate::datasets::task_label(query),
        value: verdict.value,
        class_recall: verdict.class_recall,
        parsed: parsed.payload.clone(),
        spread_s: query.spec.spread_s,
        distractors: query.spec.distractors,
        k: query.spec.k,
        total_images: query.spec.total_images,
        balance: query.spec.balance,
    }
}

pub fn write_verdicts(records: &[VerdictRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(writer, "{line}").map_err(|e| CoreError::io(path, e))?;
    }
    writer.flush().map_err(|e| CoreError::io(path, e))
}

pub fn read_verdicts(path: &Path) -> Result<Vec<VerdictRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| {
            CoreError::parse(
                path.display().to_string(),
                Some(idx as u64 + 1),
                e.to_string(),
            )
        })?);
    }
    Ok(records)
}

/// Control dimensions a report can be sliced by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKey {
    SpreadS,
    Distractors,
    K,
    TotalImages,
    Balance,
}

impl SliceKey {
    pub const ALL: [SliceKey; 5] = [
        SliceKey::SpreadS,
        SliceKey::Distractors,
        SliceKey::K,
        SliceKey::TotalImages,
        SliceKey::Balance,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SliceKey::SpreadS => "spread_s",
            SliceKey::Distractors => "distractors",
            SliceKey::K => "k",
            SliceKey::TotalImages => "total_images",
            SliceKey::Balance => "balance",
        }
    }

    fn value_of(&self, record: &VerdictRecord) -> Option<String> {
        match self {
            SliceKey::SpreadS => Some(record.spread_s.to_string()),
            SliceKey::Distractors => Some(record.distractors.to_string()),
            SliceKey::K => Some(record.k.to_string()),
            SliceKey::TotalImages => Some(record.total_images.to_string()),
            SliceKey::Balance => record.balance.map(|b| {
                match b {
                    Balance::Balanced => "balanced".to_string(),
                    Balance::Unbalanced => "unbalanced".to_string(),
                }
            }),
        }
    }
}

impl FromStr for SliceKey {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spread_s" => Ok(SliceKey::SpreadS),
            "distractors" => Ok(SliceKey::Distractors),
            "k" => Ok(SliceKey::K),
            "total_images" => Ok(SliceKey::TotalImages),
            "balance" => Ok(SliceKey::Balance),
            other => Err(CoreError::InvalidSpec(format!("unknown slice key '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCount {
    pub mean: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub task: String,
    pub key: String,
    pub value: String,
    pub count: u64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub overall: MeanCount,
    pub per_task: BTreeMap<String, MeanCount>,
    pub slices: Vec<SliceRow>,
    pub notes: Vec<String>,
}

fn mean_count(values: &[f64]) -> MeanCount {
    let count = values.len() as u64;
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    MeanCount { mean, count }
}

/// Group verdicts by task and by each requested slice key.
pub fn aggregate(records: &[VerdictRecord], keys: &[SliceKey]) -> ScoreReport {
    let mut per_task_values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in records {
        per_task_values
            .entry(record.task.clone())
            .or_default()
            .push(record.value);
    }
    let per_task: BTreeMap<String, MeanCount> = per_task_values
        .iter()
        .map(|(task, values)| (task.clone(), mean_count(values)))
        .collect();
    let all: Vec<f64> = records.iter().map(|r| r.value).collect();

    let mut slices = Vec::new();
    let mut notes = Vec::new();
    for key in keys {
        let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for record in records {
            if let Some(value) = key.value_of(record) {
                groups
                    .entry((record.task.clone(), value))
                    .or_default()
                    .push(record.value);
            }
        }
        if groups.is_empty() {
            notes.push(format!(
                "slice key '{}' matched no records; omitted",
                key.name()
            ));
            continue;
        }
        for ((task, value), values) in groups {
            let mc = mean_count(&values);
            slices.push(SliceRow {
                task,
                key: key.name().to_string(),
                value,
                count: mc.count,
                mean: mc.mean,
            });
        }
    }
    ScoreReport {
        overall: mean_count(&all),
        per_task,
        slices,
        notes,
    }
}

impl ScoreReport {
    /// Plot-ready table: task, key, value, count, mean.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("task\tkey\tvalue\tcount\tmean\n");
        for (task, mc) in &self.per_task {
            out.push_str(&format!(
                "{task}\toverall\t-\t{}\t{:.6}\n",
                mc.count, mc.mean
            ));
        }
        for row in &self.slices {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\n",
                row.task, row.key, row.value, row.count, row.mean
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::TaskSpec;

    fn vocab() -> Vocabulary {
        let classes: Vec<String> = crate::synthetic::COCO_CLASSES
            .iter()
            .map(|s| s.to_string())
            .collect();
        Vocabulary::new(&classes, true)
    }

    fn counting_query(counts: &[(&str, u32)]) -> QueryInstance {
        let map: BTreeMap<String, u32> =
            counts.iter().map(|(c, n)| (c.to_string(), *n)).collect();
        QueryInstance {
            query_id: "q".into(),
            kind: TaskKind::Counting,
            images: vec![],
            prompt: String::new(),
            truth: GroundTruth::Counting { counts: map },
            spec: TaskSpec::counting(Balance::Unbalanced, counts.len() as u32, 1, 10, None, 0),
            roles: vec![],
            object_instances: 0,
            composition: None,
        }
    }

    #[test]
    fn spec_example_counting_words_and_digits() {
        let q = counting_query(&[("dog", 3), ("cat", 2)]);
        let parsed = parse_answer(TaskKind::Counting, "There are three dogs and 2 cats.", &vocab());
        let ParsedPayload::Counts { by_class, .. } = &parsed.payload else {
            panic!()
        };
        assert_eq!(by_class.get("dog"), Some(&3));
        assert_eq!(by_class.get("cat"), Some(&2));
        assert_eq!(judge(&q, &parsed).unwrap().value, 1.0);
    }

    #[test]
    fn conflict_keeps_last_stated_value() {
        let parsed = parse_answer(
            TaskKind::Counting,
            "I see 2 dogs... actually there are 4 dogs.",
            &vocab(),
        );
        let ParsedPayload::Counts { by_class, .. } = &parsed.payload else {
            panic!()
        };
        assert_eq!(by_class.get("dog"), Some(&4));
    }

    #[test]
    fn bare_number_fallback_only_for_single_class() {
        let q1 = counting_query(&[("dog", 4)]);
        let parsed = parse_answer(TaskKind::Counting, "4", &vocab());
        assert_eq!(judge(&q1, &parsed).unwrap().value, 1.0);
        // With a different class mentioned, the fallback must not apply.
        let parsed_other = parse_answer(TaskKind::Counting, "3 cats", &vocab());
        assert_eq!(judge(&q1, &parsed_other).unwrap().value, 0.0);
        // Multi-class queries never use the fallback.
        let q2 = counting_query(&[("dog", 4), ("cat", 4)]);
        let parsed_bare = parse_answer(TaskKind::Counting, "4", &vocab());
        assert_eq!(judge(&q2, &parsed_bare).unwrap().value, 0.0);
    }

    #[test]
    fn all_class_conjunction_forces_zero() {
        let q = counting_query(&[("dog", 4), ("cat", 2)]);
        let parsed = parse_answer(TaskKind::Counting, "4 dogs and 3 cats", &vocab());
        let verdict = judge(&q, &parsed).unwrap();
        assert_eq!(verdict.value, 0.0);
        assert_eq!(verdict.class_recall, Some(0.5));
    }

    #[test]
    fn empty_answer_is_unparsed_and_zero() {
        let q = counting_query(&[("dog", 4)]);
        let parsed = parse_answer(TaskKind::Counting, "", &vocab());
        assert_eq!(parsed.payload, ParsedPayload::Unparsed);
        assert_eq!(judge(&q, &parsed).unwrap().value, 0.0);
    }

    #[test]
    fn listing_f1_two_thirds() {
        let q = QueryInstance {
            truth: GroundTruth::Listing {
                classes: ["cat", "dog", "horse"].iter().map(|s| s.to_string()).collect(),
            },
            kind: TaskKind::Listing,
            spec: TaskSpec::listing(Some("animals".into()), 1, 4, 0),
            query_id: "q".into(),
            images: vec![],
            prompt: String::new(),
            roles: vec![],
            object_instances: 0,
            composition: None,
        };
        let parsed = parse_answer(TaskKind::Listing, "cats, dogs and zebras", &vocab());
        let verdict = judge(&q, &parsed).unwrap();
        assert!((verdict.value - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn listing_extraction_drops_non_vocabulary_tokens() {
        let parsed = parse_answer(
            TaskKind::Listing,
            "dogs, cats and a horse maybe splendidly",
            &vocab(),
        );
        let ParsedPayload::ClassSet { classes } = &parsed.payload else {
            panic!()
        };
        let expected: BTreeSet<String> =
            ["cat", "dog", "horse"].iter().map(|s| s.to_string()).collect();
        assert_eq!(classes, &expected);
    }

    #[test]
    fn common_picks_longest_then_earliest() {
        let parsed = parse_answer(
            TaskKind::Common,
            "maybe a dog, or the traffic light",
            &vocab(),
        );
        let ParsedPayload::SingleClass { class } = &parsed.payload else {
            panic!()
        };
        assert_eq!(class, "traffic light");
        let tie = parse_answer(TaskKind::Common, "a dog or a cat", &vocab());
        let ParsedPayload::SingleClass { class } = &tie.payload else {
            panic!()
        };
        assert_eq!(class, "dog");
    }

    #[test]
    fn aliases_respect_strict_mode() {
        let classes = vec!["tv".to_string()];
        let lenient = Vocabulary::new(&classes, true);
        let strict = Vocabulary::new(&classes, false);
        let parsed = parse_answer(TaskKind::Common, "the television", &lenient);
        assert!(matches!(parsed.payload, ParsedPayload::SingleClass { .. }));
        let parsed = parse_answer(TaskKind::Common, "the television", &strict);
        assert_eq!(parsed.payload, ParsedPayload::Unparsed);
    }

    #[test]
    fn kind_mismatch_is_a_usage_error() {
        let q = counting_query(&[("dog", 1)]);
        let parsed = parse_answer(TaskKind::Common, "dog", &vocab());
        assert!(matches!(
            judge(&q, &parsed),
            Err(CoreError::KindMismatch { .. })
        ));
    }

    #[test]
    fn truth_rendering_round_trips_through_the_parser() {
        let cases = vec![
            GroundTruth::Counting {
                counts: [("dog".to_string(), 4)].into_iter().collect(),
            },
            GroundTruth::Counting {
                counts: [("dog".to_string(), 3), ("cat".to_string(), 1)]
                    .into_iter()
                    .collect(),
            },
            GroundTruth::Listing {
                classes: ["cat", "dog", "horse"].iter().map(|s| s.to_string()).collect(),
            },
            GroundTruth::Common {
                class: "traffic light".into(),
            },
            GroundTruth::OddOne {
                class: "zebra".into(),
            },
        ];
        for truth in cases {
            let text = render_truth(&truth);
            let kind = truth.kind();
            let query = QueryInstance {
                query_id: "q".into(),
                kind,
                images: vec![],
                prompt: String::new(),
                spec: match kind {
                    TaskKind::Counting => TaskSpec::counting(
                        Balance::Unbalanced,
                        truth.target_classes().len() as u32,
                        1,
                        10,
                        None,
                        0,
                    ),
                    TaskKind::Listing => TaskSpec::listing(Some("animals".into()), 1, 4, 0),
                    TaskKind::Common => TaskSpec::common(4, 0),
                    TaskKind::OddOne => TaskSpec::odd_one(4, 1, 0),
                },
                truth,
                roles: vec![],
                object_instances: 0,
                composition: None,
            };
            let parsed = parse_answer(kind, &text, &vocab());
            assert_eq!(
                judge(&query, &parsed).unwrap().value,
                1.0,
                "oracle text '{text}' did not judge to 1"
            );
        }
    }

    #[test]
    fn aggregate_means_per_slice() {
        let mk = |task: &str, spread: u32, value: f64| VerdictRecord {
            query_id: format!("{task}-{spread}-{value}"),
            task: task.into(),
            value,
            class_recall: None,
            parsed: ParsedPayload::Unparsed,
            spread_s: spread,
            distractors: 0,
            k: 1,
            total_images: 4,
            balance: None,
        };
        let records = vec![
            mk("counting_unbalanced", 1, 1.0),
            mk("counting_unbalanced", 1, 1.0),
            mk("counting_unbalanced", 1, 0.0),
            mk("counting_unbalanced", 1, 1.0),
            mk("counting_unbalanced", 2, 0.0),
            mk("counting_unbalanced", 2, 0.0),
        ];
        let report = aggregate(&records, &[SliceKey::SpreadS]);
        let s1 = report
            .slices
            .iter()
            .find(|r| r.value == "1")
            .expect("spread 1 slice");
        assert_eq!(s1.count, 4);
        assert!((s1.mean - 0.75).abs() < 1e-12);
        let s2 = report.slices.iter().find(|r| r.value == "2").unwrap();
        assert_eq!(s2.count, 2);
        assert_eq!(s2.mean, 0.0);
        // Weighted slice means reproduce the per-task mean.
        let weighted: f64 = report
            .slices
            .iter()
            .map(|r| r.mean * r.count as f64)
            .sum::<f64>()
            / records.len() as f64;
        assert!((weighted - report.per_task["counting_unbalanced"].mean).abs() < 1e-12);
    }

    #[test]
    fn balance_slice_skips_tasks_without_balance() {
        let record = VerdictRecord {
            query_id: "q".into(),
            task: "listing".into(),
            value: 1.0,
            class_recall: None,
            parsed: ParsedPayload::Unparsed,
            spread_s: 1,
            distractors: 0,
            k: 1,
            total_images: 2,
            balance: None,
        };
        let report = aggregate(&[record], &[SliceKey::Balance]);
        assert!(report.slices.is_empty());
        assert_eq!(report.notes.len(), 1);
    }
}
