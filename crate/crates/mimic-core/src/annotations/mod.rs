//! Object-detection annotation ingest and the visibility filter.
//!
//! Two source schemas are supported (see [`coco`] and [`openimages`] for
//! the exact field mappings). Both converge on [`ImageRecord`]s, from
//! which a [`Corpus`] computes per-(image, class) eligibility: a class is
//! *eligible* in an image iff every instance of that class in that image
//! covers at least `min_box_fraction` of the image area. Counting an
//! ineligible class yields 0, so generated ground truths never depend on
//! objects too small to recognize.
//!
//! Crowd/group annotations (COCO `iscrowd`, OpenImages `IsGroupOf`) are
//! dropped at parse time: their instance counts are undefined.

mod coco;
mod hierarchy;
mod openimages;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use hierarchy::{load_hierarchy, CategoryHierarchy};
pub use openimages::OpenImagesSidecars;

use crate::error::{CoreError, Result};

/// Axis-aligned box in pixels from the image's top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// One annotated object: canonical lowercase class name plus its box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub class_name: String,
    pub bbox: BoundingBox,
}

/// Opaque image identifier, unique within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub String);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One annotated image: dimensions plus its object instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub source_uri: String,
    pub width: u32,
    pub height: u32,
    pub instances: Vec<ObjectInstance>,
}

/// Detection-annotation schemas understood by [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    /// COCO-style JSON: `images` / `annotations` / `categories` arrays.
    Coco,
    /// OpenImages-style CSV box list.
    OpenImages,
}

/// Immutable corpus: all records plus the precomputed eligibility table.
#[derive(Debug, Clone)]
pub struct Corpus {
    images: BTreeMap<ImageId, ImageRecord>,
    /// Per image: eligible class -> exact instance count.
    eligible: BTreeMap<ImageId, BTreeMap<String, u32>>,
    min_box_fraction: f64,
}

impl Corpus {
    /// Apply the visibility filter to raw records.
    pub fn from_records(records: Vec<ImageRecord>, min_box_fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&min_box_fraction) {
            return Err(CoreError::InvalidSpec(format!(
                "min_box_fraction must be in [0, 1), got {min_box_fraction}"
            )));
        }
        let mut images = BTreeMap::new();
        let mut eligible = BTreeMap::new();
        for record in records {
            let table = eligibility_table(&record, min_box_fraction);
            if images.contains_key(&record.image_id) {
                return Err(CoreError::parse(
                    "records",
                    None,
                    format!("duplicate image id '{}'", record.image_id),
                ));
            }
            eligible.insert(record.image_id.clone(), table);
            images.insert(record.image_id.clone(), record);
        }
        Ok(Corpus {
            images,
            eligible,
            min_box_fraction,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn min_box_fraction(&self) -> f64 {
        self.min_box_fraction
    }

    pub fn get(&self, id: &ImageId) -> Option<&ImageRecord> {
        self.images.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &ImageRecord> {
        self.images.values()
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &ImageId> {
        self.images.keys()
    }

    /// Eligible classes of an image with their exact instance counts.
    pub fn eligible_classes(&self, id: &ImageId) -> Option<&BTreeMap<String, u32>> {
        self.eligible.get(id)
    }

    /// Exact number of eligible instances of `class_name` in an image.
    /// Zero when the image is unknown, the class is absent, or the class
    /// failed the visibility filter in that image.
    pub fn count_instances(&self, id: &ImageId, class_name: &str) -> u32 {
        self.eligible
            .get(id)
            .and_then(|t| t.get(class_name).copied())
            .unwrap_or(0)
    }

    /// Build the class pool over all eligible (image, class) pairs.
    pub fn class_pool(&self) -> Result<ClassPool> {
        let mut index: BTreeMap<String, Vec<ImageId>> = BTreeMap::new();
        for (id, table) in &self.eligible {
            for class in table.keys() {
                index.entry(class.clone()).or_default().push(id.clone());
            }
        }
        if index.is_empty() {
            return Err(CoreError::EmptyPool);
        }
        Ok(ClassPool {
            classes: index.keys().cloned().collect(),
            index,
        })
    }
}

/// Which classes a query generator may draw, and where to find them.
#[derive(Debug, Clone)]
pub struct ClassPool {
    classes: Vec<String>,
    index: BTreeMap<String, Vec<ImageId>>,
}

impl ClassPool {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn contains(&self, class: &str) -> bool {
        self.index.contains_key(class)
    }

    /// Images where `class` is eligible with at least one instance.
    pub fn images_for(&self, class: &str) -> &[ImageId] {
        self.index.get(class).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Classes eligible in `record` at the given threshold, with counts.
/// A class qualifies iff every one of its instances covers at least
/// `min_box_fraction` of the image area.
fn eligibility_table(record: &ImageRecord, min_box_fraction: f64) -> BTreeMap<String, u32> {
    let image_area = record.width as f64 * record.height as f64;
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut disqualified: BTreeSet<&str> = BTreeSet::new();
    for instance in &record.instances {
        if instance.bbox.area() < min_box_fraction * image_area {
            disqualified.insert(&instance.class_name);
        }
        *counts.entry(instance.class_name.clone()).or_insert(0) += 1;
    }
    counts.retain(|class, _| !disqualified.contains(class.as_str()));
    counts
}

/// Canonical class-name aliases applied on top of lowercasing.
const CLASS_ALIASES: &[(&str, &str)] = &[
    ("tvmonitor", "tv"),
    ("tv monitor", "tv"),
    ("television", "tv"),
    ("sofa", "couch"),
    ("aeroplane", "airplane"),
    ("motorbike", "motorcycle"),
    ("mobile phone", "cell phone"),
    ("remote control", "remote"),
    ("hair dryer", "hair drier"),
];

/// Lowercase, collapse internal whitespace, and resolve source aliases.
pub fn canonical_class_name(raw: &str) -> String {
    let collapsed = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    for (alias, canonical) in CLASS_ALIASES {
        if collapsed == *alias {
            return canonical.to_string();
        }
    }
    collapsed
}

/// Load a detection-annotation file and build the corpus and class pool.
///
/// The format is inferred from the extension (`.json` -> COCO-style,
/// `.csv` -> OpenImages-style) unless given explicitly. OpenImages
/// sidecar files can be supplied through [`openimages::load_openimages`].
pub fn load_corpus(
    path: &Path,
    format: Option<AnnotationFormat>,
    min_box_fraction: f64,
) -> Result<(Corpus, ClassPool)> {
    let format = match format {
        Some(f) => f,
        None => match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => AnnotationFormat::OpenImages,
            _ => AnnotationFormat::Coco,
        },
    };
    let records = match format {
        AnnotationFormat::Coco => coco::load_records(path)?,
        AnnotationFormat::OpenImages => {
            openimages::load_records(path, &OpenImagesSidecars::default())?
        }
    };
    let corpus = Corpus::from_records(records, min_box_fraction)?;
    let pool = corpus.class_pool()?;
    Ok((corpus, pool))
}

/// OpenImages loader with explicit sidecar files.
pub fn load_corpus_openimages(
    boxes: &Path,
    sidecars: &OpenImagesSidecars,
    min_box_fraction: f64,
) -> Result<(Corpus, ClassPool)> {
    let records = openimages::load_records(boxes, sidecars)?;
    let corpus = Corpus::from_records(records, min_box_fraction)?;
    let pool = corpus.class_pool()?;
    Ok((corpus, pool))
}
