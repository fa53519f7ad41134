//! Evaluation report: one JSON document plus per-metric CSVs and static
//! SVG plots, all byte-stable for identical inputs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ApTable, EllipticityPoint, PrPoint};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub schema_version: u32,
    pub seed: u64,
    pub detection: ApTable,
    pub segmentation: ApTable,
    /// Instance-matched Dice over ground-truth objects.
    pub mean_dice: f64,
    /// Semantic (pixel-union) Dice, emitted alongside for comparison.
    pub pixel_union_dice: f64,
    pub rotation_consistency: Option<f64>,
    pub ellipticity_curve: Vec<EllipticityPoint>,
    /// Per-image instance Dice (boxplot data).
    pub per_image_dice: Vec<f64>,
    pub pr_detection_50: Vec<PrPoint>,
    pub pr_segmentation_50: Vec<PrPoint>,
    /// Resolved run configuration, echoed for the audit trail.
    pub config_echo: serde_json::Value,
}

impl EvalReport {
    pub fn new(seed: u64, config_echo: serde_json::Value) -> Self {
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            seed,
            detection: ApTable::default(),
            segmentation: ApTable::default(),
            mean_dice: 0.0,
            pixel_union_dice: 0.0,
            rotation_consistency: None,
            ellipticity_curve: Vec::new(),
            per_image_dice: Vec::new(),
            pr_detection_50: Vec::new(),
            pr_segmentation_50: Vec::new(),
            config_echo,
        }
    }
}

fn write_file(path: &Path, bytes: &str) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Writes `report.json`, `ap.csv`, `dice_per_image.csv`,
/// `ellipticity.csv`, and the SVG plots into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_file(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(report)?,
    )?;

    let mut ap = String::from("kind,ap,ap50,ap75,ap_s,ap_m\n");
    for (kind, table) in [("detection", &report.detection), ("segmentation", &report.segmentation)]
    {
        let _ = writeln!(
            ap,
            "{kind},{},{},{},{},{}",
            csv_opt(table.ap),
            csv_opt(table.ap50),
            csv_opt(table.ap75),
            csv_opt(table.ap_s),
            csv_opt(table.ap_m)
        );
    }
    write_file(&dir.join("ap.csv"), &ap)?;

    let mut dice = String::from("image_index,instance_dice\n");
    for (i, v) in report.per_image_dice.iter().enumerate() {
        let _ = writeln!(dice, "{i},{v:.6}");
    }
    write_file(&dir.join("dice_per_image.csv"), &dice)?;

    if !report.ellipticity_curve.is_empty() {
        let mut ell = String::from("mean_axis_ratio,detection_ap,segmentation_ap\n");
        for p in &report.ellipticity_curve {
            let _ = writeln!(
                ell,
                "{:.6},{},{}",
                p.mean_axis_ratio,
                csv_opt(p.detection_ap),
                csv_opt(p.segmentation_ap)
            );
        }
        write_file(&dir.join("ellipticity.csv"), &ell)?;

        let det: Vec<(f64, f64)> = report
            .ellipticity_curve
            .iter()
            .filter_map(|p| p.detection_ap.map(|ap| (p.mean_axis_ratio, ap)))
            .collect();
        let seg: Vec<(f64, f64)> = report
            .ellipticity_curve
            .iter()
            .filter_map(|p| p.segmentation_ap.map(|ap| (p.mean_axis_ratio, ap)))
            .collect();
        let svg = crate::eval::line_plot_svg(
            "AP vs mean axis ratio",
            "mean minor/major axis ratio",
            "AP",
            &[("detection", det.as_slice()), ("segmentation", seg.as_slice())],
            ((0.0, 1.0), (0.0, 1.0)),
        );
        write_file(&dir.join("ellipticity.svg"), &svg)?;
    }

    let det_pts: Vec<(f64, f64)> = report
        .pr_detection_50
        .iter()
        .map(|p| (p.recall, p.precision))
        .collect();
    let seg_pts: Vec<(f64, f64)> = report
        .pr_segmentation_50
        .iter()
        .map(|p| (p.recall, p.precision))
        .collect();
    let pr = crate::eval::line_plot_svg(
        "Precision-recall at IoU 0.5",
        "recall",
        "precision",
        &[("detection", det_pts.as_slice()), ("segmentation", seg_pts.as_slice())],
        ((0.0, 1.0), (0.0, 1.0)),
    );
    write_file(&dir.join("pr_curves.svg"), &pr)?;

    let dice_svg = crate::eval::box_plot_svg(
        "Per-image instance Dice",
        "dice",
        &[("test split", report.per_image_dice.as_slice())],
    );
    write_file(&dir.join("dice_box.svg"), &dice_svg)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> EvalReport {
        let mut r = EvalReport::new(42, serde_json::json!({"epochs": 3}));
        r.detection = ApTable {
            ap: Some(0.5),
            ap50: Some(0.9),
            ap75: Some(0.4),
            ap_s: Some(0.5),
            ap_m: None,
        };
        r.mean_dice = 0.87;
        r.pixel_union_dice = 0.91;
        r.per_image_dice = vec![0.8, 0.9, 0.95];
        r.ellipticity_curve = vec![EllipticityPoint {
            mean_axis_ratio: 0.97,
            detection_ap: Some(0.8),
            segmentation_ap: Some(0.85),
        }];
        r.pr_detection_50 = vec![PrPoint {
            recall: 0.5,
            precision: 1.0,
        }];
        r
    }

    #[test]
    fn emission_is_byte_stable_and_round_trips() {
        let report = sample_report();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        emit_report(&report, dir_a.path()).unwrap();
        emit_report(&report, dir_b.path()).unwrap();
        for name in [
            "report.json",
            "ap.csv",
            "dice_per_image.csv",
            "ellipticity.csv",
            "ellipticity.svg",
            "pr_curves.svg",
            "dice_box.svg",
        ] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "file {name} differs between emissions");
        }
        let loaded = load_report(&dir_a.path().join("report.json")).unwrap();
        assert_eq!(loaded, report);
    }

    #[test]
    fn absent_buckets_serialize_as_null() {
        let report = sample_report();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"ap_m\":null"));
    }
}
