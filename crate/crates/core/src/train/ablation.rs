//! Trains and evaluates the eight controlled-experiment configurations and
//! prints them next to the published reference numbers.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::format_cell;
use crate::models::{InputLayout, ModelKind, ModelSpec};
use crate::raw::Arrangement;
use crate::train::dataset::{Dataset, Split};
use crate::train::eval::evaluate;
use crate::train::trainer::train;
use crate::train::{LossKind, TrainConfig};

/// Row names with the published Sony and Fuji `PSNR/SSIM` cells.
pub const ABLATION_ROWS: [(&str, Option<&str>, Option<&str>); 8] = [
    ("Default", Some("28.88/0.787"), Some("26.61/0.680")),
    ("CAN", Some("27.40/0.792"), Some("25.71/0.710")),
    ("sRGB input", Some("17.40/0.554"), Some("25.11/0.648")),
    ("L2 loss", Some("28.64/0.817"), Some("26.20/0.685")),
    ("SSIM loss", Some("28.47/0.784"), Some("26.51/0.680")),
    ("Masked Bayer", Some("26.95/0.744"), None),
    ("X-Trans 36ch vs 9ch", None, Some("23.05/0.567")),
    ("Stretched references", Some("18.23/0.674"), Some("16.85/0.535")),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationConfig {
    pub train: TrainConfig,
    /// Crop side used for the X-Trans rows (multiple of 6 and of the packed
    /// pooling factor).
    pub xtrans_crop: usize,
}

/// Mean PSNR and SSIM over the test scenes, or why the row failed.
pub type Cell = std::result::Result<(f64, f64), String>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: &'static str,
    pub spec: Option<String>,
    pub result: Cell,
    /// Companion measurement shown in the same row (the 9-channel X-Trans
    /// packing for the 36-channel row).
    pub comparison: Option<(String, Cell)>,
    pub paper_sony: Option<&'static str>,
    pub paper_fuji: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

fn cell_text(c: &Cell) -> String {
    match c {
        Ok((p, s)) => format_cell(*p, *s),
        Err(e) => format!("FAILED ({e})"),
    }
}

impl AblationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<22} {:<34} {:<12} {:<12}\n",
            "condition", "desk PSNR/SSIM", "paper Sony", "paper Fuji"
        );
        for r in &self.rows {
            let mut ours = cell_text(&r.result);
            if let Some((label, c)) = &r.comparison {
                let _ = write!(ours, " ({label}: {})", cell_text(c));
            }
            let _ = writeln!(
                s,
                "{:<22} {:<34} {:<12} {:<12}",
                r.name,
                ours,
                r.paper_sony.unwrap_or("-"),
                r.paper_fuji.unwrap_or("-")
            );
        }
        s.push_str("\nPaper columns are published full-scale results, shown for reference only.\n");
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("condition,psnr_db,ssim,error,paper_sony,paper_fuji\n");
        for r in &self.rows {
            let (p, ss, e) = match &r.result {
                Ok((p, ss)) => (format!("{p:.4}"), format!("{ss:.6}"), String::new()),
                Err(e) => (String::new(), String::new(), e.replace(',', ";")),
            };
            let _ = writeln!(
                s,
                "{},{p},{ss},{e},{},{}",
                r.name,
                r.paper_sony.unwrap_or(""),
                r.paper_fuji.unwrap_or("")
            );
        }
        s
    }

    /// True when every row and companion measurement has finite numbers.
    pub fn all_finite(&self) -> bool {
        let ok = |c: &Cell| matches!(c, Ok((p, s)) if p.is_finite() && s.is_finite());
        self.rows
            .iter()
            .all(|r| ok(&r.result) && r.comparison.as_ref().is_none_or(|(_, c)| ok(c)))
    }
}

fn run(root: &Path, spec: &ModelSpec, cfg: &TrainConfig, stretch_eval: bool) -> Result<(f64, f64)> {
    let train_set = Dataset::load(root, Split::Train)?;
    let test_set = Dataset::load(root, Split::Test)?;
    let outcome = train(&train_set, spec, cfg)?;
    let (report, _) = evaluate(spec, &outcome.weights, &test_set, stretch_eval)?;
    Ok((report.mean_psnr_db, report.mean_ssim))
}

fn xtrans_run(xtrans: Option<&Path>, spec: &ModelSpec, cfg: &TrainConfig) -> Cell {
    let root = xtrans.ok_or_else(|| "no X-Trans dataset given".to_string())?;
    run(root, spec, cfg, false).map_err(|e| e.to_string())
}

/// Runs all eight rows. Bayer rows use `bayer`; the X-Trans row needs
/// `xtrans`. Failures are recorded in their row and the suite continues.
/// `log` receives one line per finished row.
pub fn ablation_suite(bayer: &Path, xtrans: Option<&Path>, cfg: &AblationConfig, mut log: impl FnMut(&str)) -> AblationReport {
    let preset = cfg.train.preset;
    let unet = |input| ModelSpec::preset(ModelKind::UNet, input, preset);
    let bayer4 = InputLayout::Raw(Arrangement::BayerPacked4);
    let base = cfg.train.clone();
    let with = |f: &dyn Fn(&mut TrainConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let xcfg = with(&|c| c.crop = cfg.xtrans_crop);

    let mut rows = Vec::with_capacity(ABLATION_ROWS.len());
    for (i, &(name, paper_sony, paper_fuji)) in ABLATION_ROWS.iter().enumerate() {
        let (spec, result, comparison) = match i {
            0 => {
                let s = unet(bayer4);
                (s, run(bayer, &s, &base, false).map_err(|e| e.to_string()), None)
            }
            1 => {
                let s = ModelSpec::preset(ModelKind::Can, bayer4, preset);
                (s, run(bayer, &s, &base, false).map_err(|e| e.to_string()), None)
            }
            2 => {
                let s = unet(InputLayout::Srgb);
                (s, run(bayer, &s, &base, false).map_err(|e| e.to_string()), None)
            }
            3 | 4 => {
                let loss = if i == 3 { LossKind::L2 } else { LossKind::Ssim };
                let s = unet(bayer4);
                let c = with(&|c| c.loss = loss);
                (s, run(bayer, &s, &c, false).map_err(|e| e.to_string()), None)
            }
            5 => {
                let s = unet(InputLayout::Raw(Arrangement::BayerMasked));
                (s, run(bayer, &s, &base, false).map_err(|e| e.to_string()), None)
            }
            6 => {
                let s36 = unet(InputLayout::Raw(Arrangement::XTrans36));
                let s9 = unet(InputLayout::Raw(Arrangement::XTrans9));
                let r36 = xtrans_run(xtrans, &s36, &xcfg);
                let r9 = xtrans_run(xtrans, &s9, &xcfg);
                (s36, r36, Some(("9ch".to_string(), r9)))
            }
            _ => {
                let s = unet(bayer4);
                let c = with(&|c| c.stretch_targets = true);
                (s, run(bayer, &s, &c, true).map_err(|e| e.to_string()), None)
            }
        };
        let row = AblationRow {
            name,
            spec: Some(spec.descriptor()),
            result,
            comparison,
            paper_sony,
            paper_fuji,
        };
        log(&format!("{name}: {}", cell_text(&row.result)));
        rows.push(row);
    }
    AblationReport { rows }
}

impl AblationReport {
    /// Writes `report.txt` and `ablation.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, body) in [("report.txt", self.to_text()), ("ablation.csv", self.to_csv())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
