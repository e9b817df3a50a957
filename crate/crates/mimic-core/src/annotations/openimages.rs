//! OpenImages-style CSV reader.
//!
//! Expected columns in the boxes file (header names, any order; extra
//! columns ignored): `ImageID`, `LabelName`, `XMin`, `XMax`, `YMin`,
//! `YMax`, optional `IsGroupOf`. Coordinates are normalized to [0, 1] as
//! in the official `*-annotations-bbox.csv` files.
//!
//! Sidecars:
//! - class names: CSV of `LabelName,DisplayName` rows (the official
//!   `class-descriptions-boxable.csv`); without it the raw label is used.
//! - image sizes: CSV with header `ImageID,Width,Height`. Without it
//!   every image gets nominal 1024x1024 dimensions; since boxes are
//!   normalized, area fractions (and thus the visibility filter) are
//!   unaffected.
//!
//! Rows with `IsGroupOf` = 1 are dropped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{CoreError, Result};

use super::{canonical_class_name, coco::clamp_box, ImageId, ImageRecord, ObjectInstance};

/// Nominal dimensions assumed when no size sidecar is provided.
const NOMINAL_SIDE: u32 = 1024;

/// Optional companion files for the OpenImages schema.
#[derive(Debug, Clone, Default)]
pub struct OpenImagesSidecars {
    /// `LabelName,DisplayName` mapping (e.g. `/m/0bt9lr,Dog`).
    pub class_names: Option<PathBuf>,
    /// `ImageID,Width,Height` pixel dimensions.
    pub image_sizes: Option<PathBuf>,
}

fn read_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

fn load_class_names(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    // The official class-descriptions file has no header row.
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(file);
    let mut map = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| {
            CoreError::parse(path.display().to_string(), Some(i as u64 + 1), e.to_string())
        })?;
        if row.len() >= 2 {
            map.insert(row[0].to_string(), row[1].to_string());
        }
    }
    Ok(map)
}

fn load_image_sizes(path: &Path) -> Result<BTreeMap<String, (u32, u32)>> {
    let mut reader = read_csv(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CoreError::parse(path.display().to_string(), Some(1), e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(id_col), Some(w_col), Some(h_col)) =
        (col("ImageID"), col("Width"), col("Height"))
    else {
        return Err(CoreError::parse(
            path.display().to_string(),
            Some(1),
            "expected header with ImageID, Width, Height",
        ));
    };
    let mut map = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| {
            CoreError::parse(path.display().to_string(), Some(line), e.to_string())
        })?;
        let parse_dim = |s: &str| -> Result<u32> {
            s.trim().parse().map_err(|_| {
                CoreError::parse(
                    path.display().to_string(),
                    Some(line),
                    format!("invalid dimension '{s}'"),
                )
            })
        };
        map.insert(
            row[id_col].to_string(),
            (parse_dim(&row[w_col])?, parse_dim(&row[h_col])?),
        );
    }
    Ok(map)
}

pub fn load_records(path: &Path, sidecars: &OpenImagesSidecars) -> Result<Vec<ImageRecord>> {
    let path_str = path.display().to_string();
    let names = match &sidecars.class_names {
        Some(p) => Some(load_class_names(p)?),
        None => None,
    };
    let sizes = match &sidecars.image_sizes {
        Some(p) => Some(load_image_sizes(p)?),
        None => None,
    };

    let mut reader = read_csv(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CoreError::parse(&path_str, Some(1), e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(id_col), Some(label_col)) = (col("ImageID"), col("LabelName")) else {
        return Err(CoreError::parse(
            &path_str,
            Some(1),
            "expected header with ImageID and LabelName",
        ));
    };
    let coord_cols = ["XMin", "XMax", "YMin", "YMax"].map(col);
    let [Some(xmin_col), Some(xmax_col), Some(ymin_col), Some(ymax_col)] = coord_cols else {
        return Err(CoreError::parse(
            &path_str,
            Some(1),
            "expected header with XMin, XMax, YMin, YMax",
        ));
    };
    let group_col = col("IsGroupOf");

    let mut records: BTreeMap<String, ImageRecord> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row =
            row.map_err(|e| CoreError::parse(&path_str, Some(line), e.to_string()))?;
        if let Some(g) = group_col {
            if row.get(g).map(str::trim) == Some("1") {
                continue;
            }
        }
        let image_id = row[id_col].to_string();
        let raw_label = &row[label_col];
        let display = names
            .as_ref()
            .and_then(|m| m.get(raw_label))
            .map(String::as_str)
            .unwrap_or(raw_label);
        let class_name = canonical_class_name(display);

        let parse_coord = |idx: usize| -> Result<f64> {
            row[idx].trim().parse().map_err(|_| {
                CoreError::parse(
                    &path_str,
                    Some(line),
                    format!("invalid coordinate '{}'", &row[idx]),
                )
            })
        };
        let (xmin, xmax) = (parse_coord(xmin_col)?, parse_coord(xmax_col)?);
        let (ymin, ymax) = (parse_coord(ymin_col)?, parse_coord(ymax_col)?);

        let (width, height) = sizes
            .as_ref()
            .and_then(|m| m.get(&image_id).copied())
            .unwrap_or((NOMINAL_SIDE, NOMINAL_SIDE));
        let record = records.entry(image_id.clone()).or_insert_with(|| ImageRecord {
            image_id: ImageId(image_id.clone()),
            source_uri: format!("{image_id}.jpg"),
            width,
            height,
            instances: Vec::new(),
        });
        let bbox = clamp_box(
            xmin * width as f64,
            ymin * height as f64,
            (xmax - xmin) * width as f64,
            (ymax - ymin) * height as f64,
            width,
            height,
        )
        .ok_or_else(|| {
            CoreError::parse(
                &path_str,
                Some(line),
                format!("degenerate box [{xmin}, {xmax}] x [{ymin}, {ymax}]"),
            )
        })?;
        record.instances.push(ObjectInstance { class_name, bbox });
    }

    Ok(records.into_values().collect())
}
