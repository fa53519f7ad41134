//! Prediction (results) JSON.
//!
//! Schema (`schema_version` 1):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "images": [
//!     {
//!       "id": 0, "width": 96, "height": 96,
//!       "predictions": [
//!         {"class": 0, "score": 0.97,
//!          "circle": [cx, cy, r],
//!          "contour": [x1, y1, x2, y2, "..."]}
//!       ]
//!     }
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Prediction;
use crate::geom::{Circle, Contour};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ResultsDoc {
    schema_version: u32,
    images: Vec<ImageDoc>,
}

#[derive(Serialize, Deserialize)]
struct ImageDoc {
    id: u32,
    width: usize,
    height: usize,
    predictions: Vec<PredictionDoc>,
}

#[derive(Serialize, Deserialize)]
struct PredictionDoc {
    class: usize,
    score: f64,
    circle: [f64; 3],
    contour: Vec<f64>,
}

/// `(image id, width, height, predictions)` per image.
pub type ImagePredictions = (u32, usize, usize, Vec<Prediction>);

pub fn save_results(images: &[ImagePredictions], path: &Path) -> Result<()> {
    let doc = ResultsDoc {
        schema_version: RESULTS_SCHEMA_VERSION,
        images: images
            .iter()
            .map(|(id, w, h, preds)| ImageDoc {
                id: *id,
                width: *w,
                height: *h,
                predictions: preds
                    .iter()
                    .map(|p| PredictionDoc {
                        class: p.class_id,
                        score: p.score,
                        circle: [p.circle.cx, p.circle.cy, p.circle.r],
                        contour: p.contour.vertices.iter().flat_map(|v| [v[0], v[1]]).collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_results(path: &Path) -> Result<Vec<ImagePredictions>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let doc: ResultsDoc = serde_json::from_str(&text)?;
    if doc.schema_version != RESULTS_SCHEMA_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported results schema_version {} (expected {})",
            doc.schema_version, RESULTS_SCHEMA_VERSION
        )));
    }
    doc.images
        .into_iter()
        .map(|img| {
            let preds = img
                .predictions
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    if p.contour.len() % 2 != 0 || p.contour.len() < 6 {
                        return Err(Error::Manifest(format!(
                            "image {} prediction {i}: contour has {} coordinates",
                            img.id,
                            p.contour.len()
                        )));
                    }
                    Ok(Prediction {
                        class_id: p.class,
                        score: p.score,
                        circle: Circle::new(p.circle[0], p.circle[1], p.circle[2]),
                        contour: Contour::new(
                            p.contour.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
                        ),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((img.id, img.width, img.height, preds))
        })
        .collect()
}
