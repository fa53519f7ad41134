//! Manifest JSON: one document per split.
//!
//! Schema (`schema_version` 1):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "split": "train",
//!   "class_names": ["class_0"],
//!   "images": [
//!     {"id": 0, "file_path": "images/img_00000.png", "width": 96, "height": 96}
//!   ],
//!   "annotations": [
//!     {"image_id": 0, "class_id": 0, "polygon": [x1, y1, x2, y2, "..."]}
//!   ]
//! }
//! ```
//!
//! Polygons are flat `[x1, y1, x2, y2, ...]` vertex arrays; bounding circles
//! and mask areas are derived on load.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{AnnotationRecord, DatasetManifest, ImageRecord, InstanceAnnotation};
use crate::error::{Error, Result};
use crate::geom::Contour;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    schema_version: u32,
    split: String,
    class_names: Vec<String>,
    images: Vec<ImageDoc>,
    annotations: Vec<AnnotationDoc>,
}

#[derive(Serialize, Deserialize)]
struct ImageDoc {
    id: u32,
    file_path: String,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
struct AnnotationDoc {
    image_id: u32,
    class_id: usize,
    polygon: Vec<f64>,
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let doc = ManifestDoc {
        schema_version: MANIFEST_SCHEMA_VERSION,
        split: manifest.split.clone(),
        class_names: manifest.class_names.clone(),
        images: manifest
            .images
            .iter()
            .map(|i| ImageDoc {
                id: i.id,
                file_path: i.file_path.clone(),
                width: i.width,
                height: i.height,
            })
            .collect(),
        annotations: manifest
            .annotations
            .iter()
            .map(|a| AnnotationDoc {
                image_id: a.image_id,
                class_id: a.annotation.class_id,
                polygon: a
                    .annotation
                    .boundary
                    .vertices
                    .iter()
                    .flat_map(|v| [v[0], v[1]])
                    .collect(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads and validates a manifest. Validation failures are itemized with the
/// offending record ids in a single error.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let doc: ManifestDoc = serde_json::from_str(&text)?;
    if doc.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported schema_version {} (expected {})",
            doc.schema_version, MANIFEST_SCHEMA_VERSION
        )));
    }

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut problems: Vec<String> = Vec::new();

    let mut ids = HashSet::new();
    for img in &doc.images {
        if !ids.insert(img.id) {
            problems.push(format!("duplicate image id {}", img.id));
        }
        if !base.join(&img.file_path).is_file() {
            problems.push(format!(
                "image {} file missing: {}",
                img.id, img.file_path
            ));
        }
    }

    let mut images = Vec::with_capacity(doc.images.len());
    for img in &doc.images {
        images.push(ImageRecord {
            id: img.id,
            file_path: img.file_path.clone(),
            width: img.width,
            height: img.height,
        });
    }

    let mut annotations = Vec::with_capacity(doc.annotations.len());
    for (idx, ann) in doc.annotations.iter().enumerate() {
        let Some(img) = doc.images.iter().find(|i| i.id == ann.image_id) else {
            problems.push(format!(
                "annotation {idx} references missing image id {}",
                ann.image_id
            ));
            continue;
        };
        if ann.polygon.len() % 2 != 0 || ann.polygon.len() < 6 {
            problems.push(format!(
                "annotation {idx} (image {}) polygon has {} coordinates; need an even count >= 6",
                ann.image_id,
                ann.polygon.len()
            ));
            continue;
        }
        let vertices: Vec<[f64; 2]> = ann
            .polygon
            .chunks_exact(2)
            .map(|c| [c[0], c[1]])
            .collect();
        match InstanceAnnotation::new(ann.class_id, Contour::new(vertices), img.width, img.height)
        {
            Ok(a) => annotations.push(AnnotationRecord {
                image_id: ann.image_id,
                annotation: a,
            }),
            Err(e) => problems.push(format!("annotation {idx} (image {}): {e}", ann.image_id)),
        }
    }

    if !problems.is_empty() {
        return Err(Error::Manifest(problems.join("; ")));
    }

    Ok(DatasetManifest {
        split: doc.split,
        class_names: doc.class_names,
        images,
        annotations,
    })
}
