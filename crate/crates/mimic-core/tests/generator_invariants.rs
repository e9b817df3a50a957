//! Brute-force re-validation of every generator guarantee over large
//! seeded batches: distractor soundness, balanced conservation, spread
//! exactness, common/odd-one uniqueness, listing truth, image
//! distinctness, and whole-benchmark determinism.

use std::collections::{BTreeMap, BTreeSet};

use mimic_core::annotations::{ClassPool, Corpus};
use mimic_core::prompts::TemplateSet;
use mimic_core::synthetic::{default_hierarchy, synthetic_corpus, SyntheticConfig};
use mimic_core::taskgen::{
    Balance, Generator, GroundTruth, ImageRole, PlanEntry, QueryInstance, TaskKind,
};

const PER_TASK: u64 = 1000;

fn fixture() -> (Corpus, ClassPool) {
    synthetic_corpus(&SyntheticConfig::default(), 0.05).unwrap()
}

fn plan() -> Vec<PlanEntry> {
    let entry = |kind: TaskKind| PlanEntry {
        kind,
        count: PER_TASK,
        balance: None,
        total_images: None,
        k: None,
        spread: None,
        instances_total: None,
        m_odd: None,
        category: None,
    };
    vec![
        PlanEntry {
            kind: TaskKind::Counting,
            count: PER_TASK / 2,
            balance: Some(Balance::Balanced),
            total_images: Some([7, 7]),
            k: Some([1, 1]),
            spread: Some([1, 4]),
            instances_total: Some([2, 4]),
            m_odd: None,
            category: None,
        },
        PlanEntry {
            kind: TaskKind::Counting,
            count: PER_TASK / 2,
            balance: Some(Balance::Unbalanced),
            total_images: Some([2, 35]),
            k: Some([1, 3]),
            spread: Some([1, 4]),
            instances_total: None,
            m_odd: None,
            category: None,
        },
        entry(TaskKind::Common),
        entry(TaskKind::OddOne),
        entry(TaskKind::Listing),
    ]
}

/// Re-derive eligibility for one (image, class) straight from the boxes:
/// the class counts only if every instance clears the area threshold.
fn brute_force_count(corpus: &Corpus, id: &mimic_core::annotations::ImageId, class: &str) -> u32 {
    let record = corpus.get(id).unwrap();
    let area = record.width as f64 * record.height as f64;
    let instances: Vec<_> = record
        .instances
        .iter()
        .filter(|i| i.class_name == class)
        .collect();
    if instances.is_empty()
        || instances
            .iter()
            .any(|i| i.bbox.area() < corpus.min_box_fraction() * area)
    {
        0
    } else {
        instances.len() as u32
    }
}

fn validate_counting(corpus: &Corpus, query: &QueryInstance) {
    let GroundTruth::Counting { counts } = &query.truth else {
        panic!("wrong truth kind")
    };
    assert_eq!(counts.len(), query.spec.k as usize);
    for (class, &total) in counts {
        let sum: u32 = query
            .images
            .iter()
            .map(|id| brute_force_count(corpus, id, class))
            .sum();
        assert_eq!(sum, total, "truth mismatch for {class} in {}", query.query_id);
        // Spread exactness: the class appears in exactly spread_s images.
        let carriers = query
            .images
            .iter()
            .filter(|id| brute_force_count(corpus, id, class) > 0)
            .count();
        assert_eq!(
            carriers, query.spec.spread_s as usize,
            "spread mismatch for {class} in {}",
            query.query_id
        );
    }
    // Distractor soundness and role consistency.
    assert_eq!(query.roles.len(), query.images.len());
    for (id, role) in query.images.iter().zip(&query.roles) {
        let carries_any = counts.keys().any(|c| brute_force_count(corpus, id, c) > 0);
        match role {
            ImageRole::Query => assert!(carries_any, "query-tagged image without targets"),
            ImageRole::Distractor => {
                assert!(!carries_any, "distractor with target instances in {}", query.query_id)
            }
        }
    }
    let distractor_count = query
        .roles
        .iter()
        .filter(|r| **r == ImageRole::Distractor)
        .count();
    assert_eq!(distractor_count, query.spec.distractors as usize);
    // Balanced conservation: totals equal the budget regardless of spread.
    if query.spec.balance == Some(Balance::Balanced) {
        let budget = query.spec.instances_total.unwrap();
        for (class, &total) in counts {
            assert_eq!(total, budget, "balanced budget broken for {class}");
        }
        let composition = query.composition.as_ref().expect("balanced composition");
        for (class, parts) in composition {
            assert_eq!(parts.iter().sum::<u32>(), budget);
            assert_eq!(parts.len(), query.spec.spread_s as usize);
            assert!(parts.iter().all(|&p| p >= 1));
            assert_eq!(counts.contains_key(class), true);
        }
    }
}

fn validate_common(corpus: &Corpus, query: &QueryInstance) {
    let GroundTruth::Common { class } = &query.truth else {
        panic!("wrong truth kind")
    };
    let mut shared: Option<BTreeSet<String>> = None;
    for id in &query.images {
        let present: BTreeSet<String> = corpus
            .eligible_classes(id)
            .unwrap()
            .keys()
            .filter(|c| brute_force_count(corpus, id, c) > 0)
            .cloned()
            .collect();
        shared = Some(match shared {
            None => present,
            Some(prev) => prev.intersection(&present).cloned().collect(),
        });
    }
    let shared = shared.unwrap();
    assert_eq!(shared.len(), 1, "non-unique common class in {}", query.query_id);
    assert!(shared.contains(class));
}

fn validate_odd_one(corpus: &Corpus, query: &QueryInstance) {
    let GroundTruth::OddOne { class } = &query.truth else {
        panic!("wrong truth kind")
    };
    let mut freq: BTreeMap<String, u32> = BTreeMap::new();
    for id in &query.images {
        for c in corpus.eligible_classes(id).unwrap().keys() {
            if brute_force_count(corpus, id, c) > 0 {
                *freq.entry(c.clone()).or_insert(0) += 1;
            }
        }
    }
    let m_odd = query.spec.m_odd;
    assert_eq!(freq[class], m_odd, "odd class frequency in {}", query.query_id);
    for (c, n) in &freq {
        if c != class {
            assert!(
                *n > m_odd,
                "class {c} has frequency {n} <= m_odd in {}",
                query.query_id
            );
        }
    }
}

fn validate_listing(
    corpus: &Corpus,
    hierarchy: &mimic_core::annotations::CategoryHierarchy,
    query: &QueryInstance,
) {
    let GroundTruth::Listing { classes } = &query.truth else {
        panic!("wrong truth kind")
    };
    assert!(!classes.is_empty());
    let category = query.spec.category.as_ref().expect("category recorded");
    let in_cat = hierarchy.classes_of(category).unwrap();
    let mut expected: BTreeSet<String> = BTreeSet::new();
    for id in &query.images {
        for c in in_cat {
            if brute_force_count(corpus, id, c) > 0 {
                expected.insert(c.clone());
            }
        }
    }
    assert_eq!(classes, &expected, "listing truth mismatch in {}", query.query_id);
}

#[test]
fn thousand_queries_per_task_pass_brute_force_revalidation() {
    let (corpus, pool) = fixture();
    let hierarchy = default_hierarchy();
    let templates = TemplateSet::builtin();
    let mut generator = Generator::new(&corpus, &pool, Some(&hierarchy), &templates);
    let queries = generator.gen_benchmark(&plan(), 0xbeef).unwrap();
    assert_eq!(queries.len(), (PER_TASK * 4) as usize);

    let mut validated: BTreeMap<TaskKind, u64> = BTreeMap::new();
    for query in &queries {
        // Image distinctness holds for every task.
        let distinct: BTreeSet<_> = query.images.iter().collect();
        assert_eq!(distinct.len(), query.images.len(), "{}", query.query_id);
        assert_eq!(query.images.len(), query.spec.total_images as usize);
        match query.kind {
            TaskKind::Counting => validate_counting(&corpus, query),
            TaskKind::Common => validate_common(&corpus, query),
            TaskKind::OddOne => validate_odd_one(&corpus, query),
            TaskKind::Listing => validate_listing(&corpus, &hierarchy, query),
        }
        *validated.entry(query.kind).or_insert(0) += 1;
    }
    for kind in TaskKind::ALL {
        assert_eq!(validated[&kind], PER_TASK, "{kind} short of {PER_TASK}");
    }
}

#[test]
fn whole_benchmark_is_a_pure_function_of_seed_and_plan() {
    let (corpus, pool) = fixture();
    let hierarchy = default_hierarchy();
    let templates = TemplateSet::builtin();
    let small_plan: Vec<PlanEntry> = plan()
        .into_iter()
        .map(|mut e| {
            e.count = 40;
            e
        })
        .collect();
    let run = |seed: u64| {
        let mut generator = Generator::new(&corpus, &pool, Some(&hierarchy), &templates);
        serde_json::to_string(&generator.gen_benchmark(&small_plan, seed).unwrap()).unwrap()
    };
    assert_eq!(run(42), run(42));
    assert_ne!(run(42), run(43));
}
