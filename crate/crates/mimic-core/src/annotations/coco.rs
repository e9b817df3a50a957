//! COCO-style JSON reader.
//!
//! Field mapping:
//!
//! | corpus field  | COCO source                                   |
//! |---------------|-----------------------------------------------|
//! | image_id      | `images[].id` (stringified)                   |
//! | source_uri    | `images[].coco_url`, else `file_name`         |
//! | width/height  | `images[].width` / `images[].height`          |
//! | class_name    | `categories[].name` via `annotations[].category_id`, canonicalized |
//! | bbox          | `annotations[].bbox` as `[x, y, width, height]` |
//!
//! Annotations with `iscrowd != 0` are dropped. Boxes are clamped to the
//! image bounds; a box with nonpositive size or lying fully outside its
//! image is a parse error.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{CoreError, Result};

use super::{canonical_class_name, BoundingBox, ImageId, ImageRecord, ObjectInstance};

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: serde_json::Value,
    #[serde(default)]
    file_name: Option<String>,
    #[serde(default)]
    coco_url: Option<String>,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: serde_json::Value,
    category_id: i64,
    bbox: Vec<f64>,
    #[serde(default)]
    iscrowd: Option<u8>,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: i64,
    name: String,
}

fn id_string(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn load_records(path: &Path) -> Result<Vec<ImageRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let file: CocoFile = serde_json::from_str(&text).map_err(|e| {
        CoreError::parse(
            path.display().to_string(),
            Some(e.line() as u64),
            e.to_string(),
        )
    })?;
    let path_str = path.display().to_string();

    let categories: BTreeMap<i64, String> = file
        .categories
        .iter()
        .map(|c| (c.id, canonical_class_name(&c.name)))
        .collect();

    let mut records: BTreeMap<String, ImageRecord> = BTreeMap::new();
    for img in &file.images {
        let id = id_string(&img.id);
        if img.width == 0 || img.height == 0 {
            return Err(CoreError::parse(
                &path_str,
                None,
                format!("image '{id}' has zero dimensions"),
            ));
        }
        let source_uri = img
            .coco_url
            .clone()
            .or_else(|| img.file_name.clone())
            .unwrap_or_else(|| format!("{id}.jpg"));
        records.insert(
            id.clone(),
            ImageRecord {
                image_id: ImageId(id),
                source_uri,
                width: img.width,
                height: img.height,
                instances: Vec::new(),
            },
        );
    }

    for (idx, ann) in file.annotations.iter().enumerate() {
        if ann.iscrowd.unwrap_or(0) != 0 {
            continue;
        }
        let image_id = id_string(&ann.image_id);
        let record = records.get_mut(&image_id).ok_or_else(|| {
            CoreError::parse(
                &path_str,
                None,
                format!("annotation {idx} references unknown image '{image_id}'"),
            )
        })?;
        let class_name = categories.get(&ann.category_id).cloned().ok_or_else(|| {
            CoreError::parse(
                &path_str,
                None,
                format!("annotation {idx} references unknown category {}", ann.category_id),
            )
        })?;
        if ann.bbox.len() != 4 {
            return Err(CoreError::parse(
                &path_str,
                None,
                format!("annotation {idx}: bbox must have 4 values, got {}", ann.bbox.len()),
            ));
        }
        let bbox = clamp_box(
            ann.bbox[0],
            ann.bbox[1],
            ann.bbox[2],
            ann.bbox[3],
            record.width,
            record.height,
        )
        .ok_or_else(|| {
            CoreError::parse(
                &path_str,
                None,
                format!(
                    "annotation {idx}: degenerate or out-of-image bbox {:?} in image '{image_id}'",
                    ann.bbox
                ),
            )
        })?;
        record.instances.push(ObjectInstance { class_name, bbox });
    }

    Ok(records.into_values().collect())
}

/// Clamp a box to the image; None when nothing valid remains.
pub(super) fn clamp_box(
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    img_w: u32,
    img_h: u32,
) -> Option<BoundingBox> {
    if w <= 0.0 || h <= 0.0 || !x.is_finite() || !y.is_finite() {
        return None;
    }
    let x0 = x.max(0.0);
    let y0 = y.max(0.0);
    let x1 = (x + w).min(img_w as f64);
    let y1 = (y + h).min(img_h as f64);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    Some(BoundingBox {
        x: x0,
        y: y0,
        width: x1 - x0,
        height: y1 - y0,
    })
}
