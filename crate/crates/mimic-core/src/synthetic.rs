//! Deterministic synthetic corpora for tests, demos, and dry runs.
//!
//! The layout is simple but exercises every generator path: for each
//! class there are single-class images holding 1 to 4 instances (several
//! of each count), plus two-class images for category and commonality
//! structure, plus occasional sub-threshold decoy boxes that the
//! visibility filter must reject. All boxes comfortably clear the 5%
//! area rule except the decoys.

use std::collections::BTreeMap;

use rand::Rng;

use crate::annotations::{
    BoundingBox, CategoryHierarchy, ClassPool, Corpus, ImageId, ImageRecord, ObjectInstance,
};
use crate::error::Result;
use crate::seed::rng_from;

/// The standard 80-class detection vocabulary.
pub const COCO_CLASSES: &[&str] = &[
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train", "truck", "boat",
    "traffic light", "fire hydrant", "stop sign", "parking meter", "bench", "bird", "cat", "dog",
    "horse", "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella",
    "handbag", "tie", "suitcase", "frisbee", "skis", "snowboard", "sports ball", "kite",
    "baseball bat", "baseball glove", "skateboard", "surfboard", "tennis racket", "bottle",
    "wine glass", "cup", "fork", "knife", "spoon", "bowl", "banana", "apple", "sandwich",
    "orange", "broccoli", "carrot", "hot dog", "pizza", "donut", "cake", "chair", "couch",
    "potted plant", "bed", "dining table", "toilet", "tv", "laptop", "mouse", "remote",
    "keyboard", "cell phone", "microwave", "oven", "toaster", "sink", "refrigerator", "book",
    "clock", "vase", "scissors", "teddy bear", "hair drier", "toothbrush",
];

const DEFAULT_CATEGORIES: &[(&str, &[&str])] = &[
    ("people", &["person"]),
    (
        "vehicles",
        &["bicycle", "car", "motorcycle", "airplane", "bus", "train", "truck", "boat"],
    ),
    (
        "outdoor objects",
        &["traffic light", "fire hydrant", "stop sign", "parking meter", "bench"],
    ),
    (
        "animals",
        &["bird", "cat", "dog", "horse", "sheep", "cow", "elephant", "bear", "zebra", "giraffe"],
    ),
    ("accessories", &["backpack", "umbrella", "handbag", "tie", "suitcase"]),
    (
        "sports items",
        &[
            "frisbee", "skis", "snowboard", "sports ball", "kite", "baseball bat",
            "baseball glove", "skateboard", "surfboard", "tennis racket",
        ],
    ),
    (
        "kitchen items",
        &["bottle", "wine glass", "cup", "fork", "knife", "spoon", "bowl"],
    ),
    (
        "food items",
        &[
            "banana", "apple", "sandwich", "orange", "broccoli", "carrot", "hot dog", "pizza",
            "donut", "cake",
        ],
    ),
    (
        "furniture",
        &["chair", "couch", "potted plant", "bed", "dining table", "toilet"],
    ),
    (
        "electronic devices",
        &["tv", "laptop", "mouse", "remote", "keyboard", "cell phone"],
    ),
    ("appliances", &["microwave", "oven", "toaster", "sink", "refrigerator"]),
    (
        "indoor objects",
        &["book", "clock", "vase", "scissors", "teddy bear", "hair drier", "toothbrush"],
    ),
];

/// The built-in category hierarchy over [`COCO_CLASSES`].
pub fn default_hierarchy() -> CategoryHierarchy {
    let raw: BTreeMap<String, Vec<String>> = DEFAULT_CATEGORIES
        .iter()
        .map(|(cat, classes)| {
            (
                cat.to_string(),
                classes.iter().map(|c| c.to_string()).collect(),
            )
        })
        .collect();
    CategoryHierarchy::from_map(raw).expect("built-in hierarchy is valid")
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    /// How many classes to use (first n of [`COCO_CLASSES`]).
    pub classes: usize,
    /// Single-class images per (class, instance count) for counts 1..=4.
    pub singles_per_count: usize,
    /// Two-class images anchored on each class.
    pub pairs_per_class: usize,
    /// Probability that an image gets a sub-threshold decoy box of some
    /// other class, which the visibility filter must reject.
    pub decoy_probability: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: 48,
            singles_per_count: 3,
            pairs_per_class: 3,
            decoy_probability: 0.15,
            seed: 0x4d49_4d49,
        }
    }
}

const IMG_W: u32 = 640;
const IMG_H: u32 = 480;
/// 130x130 on 640x480 is 5.5% of the image, above the default 5% filter.
const BOX_SIDE: f64 = 130.0;
/// 20x20 is 0.13%, far below any sensible threshold.
const DECOY_SIDE: f64 = 20.0;

fn instance(class: &str, slot: usize, row: usize) -> ObjectInstance {
    ObjectInstance {
        class_name: class.to_string(),
        bbox: BoundingBox {
            x: 10.0 + 140.0 * slot as f64,
            y: 10.0 + 160.0 * row as f64,
            width: BOX_SIDE,
            height: BOX_SIDE,
        },
    }
}

/// Build the raw records (deterministic in the config).
pub fn synthetic_records(cfg: &SyntheticConfig) -> Vec<ImageRecord> {
    let classes: Vec<&str> = COCO_CLASSES.iter().take(cfg.classes).copied().collect();
    let mut rng = rng_from(cfg.seed);
    let mut records = Vec::new();
    let mut push = |id: String, instances: Vec<ObjectInstance>, rng: &mut rand_chacha::ChaCha12Rng| {
        let mut instances = instances;
        if rng.random_bool(cfg.decoy_probability) {
            let other = classes[rng.random_range(0..classes.len())];
            if !instances.iter().any(|i| i.class_name == other) {
                instances.push(ObjectInstance {
                    class_name: other.to_string(),
                    bbox: BoundingBox {
                        x: IMG_W as f64 - DECOY_SIDE - 5.0,
                        y: IMG_H as f64 - DECOY_SIDE - 5.0,
                        width: DECOY_SIDE,
                        height: DECOY_SIDE,
                    },
                });
            }
        }
        records.push(ImageRecord {
            image_id: ImageId(id.clone()),
            source_uri: format!("images/{id}.png"),
            width: IMG_W,
            height: IMG_H,
            instances,
        });
    };

    for (ci, class) in classes.iter().enumerate() {
        for count in 1..=4usize {
            for rep in 0..cfg.singles_per_count {
                let instances = (0..count).map(|slot| instance(class, slot, 0)).collect();
                push(format!("s{ci:03}c{count}r{rep}"), instances, &mut rng);
            }
        }
        for rep in 0..cfg.pairs_per_class {
            let partner = loop {
                let j = rng.random_range(0..classes.len());
                if j != ci {
                    break classes[j];
                }
            };
            let a = rng.random_range(1..=2usize);
            let b = rng.random_range(1..=2usize);
            let mut instances: Vec<ObjectInstance> =
                (0..a).map(|slot| instance(class, slot, 0)).collect();
            instances.extend((0..b).map(|slot| instance(partner, slot, 1)));
            push(format!("p{ci:03}r{rep}"), instances, &mut rng);
        }
    }
    records
}

/// Build the corpus and pool directly.
pub fn synthetic_corpus(cfg: &SyntheticConfig, min_box_fraction: f64) -> Result<(Corpus, ClassPool)> {
    let corpus = Corpus::from_records(synthetic_records(cfg), min_box_fraction)?;
    let pool = corpus.class_pool()?;
    Ok((corpus, pool))
}

/// The same corpus as a COCO-style JSON document, for exercising the
/// loader and the CLI end to end.
pub fn synthetic_coco_json(cfg: &SyntheticConfig) -> serde_json::Value {
    let records = synthetic_records(cfg);
    let mut class_ids: BTreeMap<&str, u64> = BTreeMap::new();
    for record in &records {
        for inst in &record.instances {
            let next = class_ids.len() as u64 + 1;
            class_ids.entry(inst.class_name.as_str()).or_insert(next);
        }
    }
    let categories: Vec<serde_json::Value> = class_ids
        .iter()
        .map(|(name, id)| serde_json::json!({"id": id, "name": name}))
        .collect();
    let images: Vec<serde_json::Value> = records
        .iter()
        .map(|r| {
            serde_json::json!({
                "id": r.image_id.0,
                "file_name": r.source_uri,
                "width": r.width,
                "height": r.height,
            })
        })
        .collect();
    let annotations: Vec<serde_json::Value> = records
        .iter()
        .flat_map(|r| {
            r.instances.iter().map(|inst| {
                serde_json::json!({
                    "image_id": r.image_id.0,
                    "category_id": class_ids[inst.class_name.as_str()],
                    "bbox": [inst.bbox.x, inst.bbox.y, inst.bbox.width, inst.bbox.height],
                    "iscrowd": 0,
                })
            })
        })
        .collect();
    serde_json::json!({
        "images": images,
        "annotations": annotations,
        "categories": categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_corpus_is_deterministic_and_filtered() {
        let cfg = SyntheticConfig {
            classes: 6,
            ..SyntheticConfig::default()
        };
        let (corpus_a, pool_a) = synthetic_corpus(&cfg, 0.05).unwrap();
        let (corpus_b, _) = synthetic_corpus(&cfg, 0.05).unwrap();
        assert_eq!(corpus_a.len(), corpus_b.len());
        assert_eq!(pool_a.classes().len(), 6);
        // Decoy boxes never show up as eligible instances.
        for record in corpus_a.records() {
            for (class, &count) in corpus_a.eligible_classes(&record.image_id).unwrap() {
                assert!(count >= 1);
                assert!(record
                    .instances
                    .iter()
                    .filter(|i| &i.class_name == class)
                    .all(|i| i.bbox.area() >= 0.05 * 640.0 * 480.0));
            }
        }
    }

    #[test]
    fn coco_json_round_trips_through_the_loader() {
        let cfg = SyntheticConfig {
            classes: 5,
            singles_per_count: 2,
            pairs_per_class: 1,
            decoy_probability: 0.3,
            seed: 11,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synthetic.json");
        std::fs::write(&path, synthetic_coco_json(&cfg).to_string()).unwrap();
        let (loaded, pool) = crate::annotations::load_corpus(&path, None, 0.05).unwrap();
        let (direct, direct_pool) = synthetic_corpus(&cfg, 0.05).unwrap();
        assert_eq!(loaded.len(), direct.len());
        assert_eq!(pool.classes(), direct_pool.classes());
        for record in direct.records() {
            assert_eq!(
                loaded.eligible_classes(&record.image_id),
                direct.eligible_classes(&record.image_id),
                "{}",
                record.image_id
            );
        }
    }

    #[test]
    fn default_hierarchy_covers_all_classes() {
        let hierarchy = default_hierarchy();
        for class in COCO_CLASSES {
            assert!(
                hierarchy.category_of(class).is_some(),
                "'{class}' missing from hierarchy"
            );
        }
    }
}
