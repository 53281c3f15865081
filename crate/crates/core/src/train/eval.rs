use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::isp::{histogram_stretch, STRETCH_HI_PCT, STRETCH_LO_PCT};
use crate::metrics::{format_cell, mean, psnr, ssim};
use crate::models::{forward_pipeline, ModelSpec, Weights};
use crate::train::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneMetrics {
    pub id: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<SceneMetrics>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    /// `scene_id,psnr_db,ssim` per scene.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scene_id,psnr_db,ssim\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.4},{:.6}", r.id, r.psnr_db, r.ssim);
        }
        s
    }

    pub fn to_text(&self, title: &str) -> String {
        let mut s = format!("{title}\n\n{:<10} {:>10} {:>8}\n", "scene", "PSNR (dB)", "SSIM");
        for r in &self.rows {
            let _ = writeln!(s, "{:<10} {:>10.2} {:>8.3}", r.id, r.psnr_db, r.ssim);
        }
        let _ = writeln!(
            s,
            "\nmean over {} scenes: {}",
            self.rows.len(),
            format_cell(self.mean_psnr_db, self.mean_ssim)
        );
        s
    }

    /// Writes `metrics.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path, title: &str) -> Result<()> {
        for (name, body) in [("metrics.csv", self.to_csv()), ("report.txt", self.to_text(title))] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Scores `(id, prediction, reference)` triples.
pub fn evaluate_images<'a>(items: impl IntoIterator<Item = (String, &'a RgbImage, &'a RgbImage)>) -> Result<EvalReport> {
    let rows = items
        .into_iter()
        .map(|(id, pred, reference)| {
            Ok(SceneMetrics {
                psnr_db: psnr(pred, reference, 1.0)?,
                ssim: ssim(pred, reference)?,
                id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        mean_psnr_db: mean(&rows.iter().map(|r| r.psnr_db).collect::<Vec<_>>()),
        mean_ssim: mean(&rows.iter().map(|r| r.ssim).collect::<Vec<_>>()),
        rows,
    })
}

/// Runs the learned pipeline on every scene of `dataset` and scores it against
/// the references, or against stretched references if `stretch_refs`.
/// Predictions are returned alongside the report.
pub fn evaluate(
    spec: &ModelSpec,
    weights: &Weights,
    dataset: &Dataset,
    stretch_refs: bool,
) -> Result<(EvalReport, Vec<RgbImage>)> {
    let mut preds = Vec::with_capacity(dataset.len());
    let mut refs = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        preds.push(forward_pipeline(&s.input, s.ratio, spec, weights)?);
        refs.push(if stretch_refs {
            histogram_stretch(&s.reference, STRETCH_LO_PCT, STRETCH_HI_PCT)?
        } else {
            s.reference.clone()
        });
    }
    let report = evaluate_images(
        dataset
            .samples
            .iter()
            .zip(preds.iter().zip(&refs))
            .map(|(s, (p, r))| (s.id.clone(), p, r)),
    )?;
    Ok((report, preds))
}
