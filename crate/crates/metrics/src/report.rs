use ckm_grid::{CkmGrid, ValueMap};
use ndarray::Array2;
use serde::Serialize;

use crate::basic::{mse_gain, mse_pixel, nmse, psnr, rmse, ssim};
use crate::features::builtin_feature_extractor;
use crate::frechet::frechet_distance;
use crate::{MetricsError, Result};

#[derive(Debug, Clone, Default)]
pub struct MetricsConfig {
    /// Drop building-mask pixels from the error statistics (FD always sees
    /// the full images; its features need the 2-D layout).
    pub exclude_buildings: bool,
    /// Skip the Fréchet distance (it needs at least two images per side).
    pub skip_fd: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub mse_pixel: f64,
    pub rmse: f64,
    pub nmse: f64,
    pub mse_gain: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    /// Handcrafted-feature Fréchet distance; absent for single images or
    /// when skipped.
    pub fd: Option<f64>,
    pub n_images: usize,
    pub value_map: ValueMap,
    pub nmse_excluded: usize,
    pub psnr_capped: usize,
    pub exclude_buildings: bool,
}

impl MetricsReport {
    pub fn flags(&self) -> String {
        let mut parts = Vec::new();
        if self.psnr_capped > 0 {
            parts.push(format!("psnr_capped={}", self.psnr_capped));
        }
        if self.nmse_excluded > 0 {
            parts.push(format!("nmse_excluded={}", self.nmse_excluded));
        }
        if self.exclude_buildings {
            parts.push("no_buildings".into());
        }
        if parts.is_empty() {
            "-".into()
        } else {
            parts.join(";")
        }
    }
}

/// All seven metrics for a batch of reconstructions against ground truth.
pub fn compute_report(
    truth: &[CkmGrid],
    recon: &[Array2<f64>],
    cfg: &MetricsConfig,
) -> Result<MetricsReport> {
    if truth.is_empty() || truth.len() != recon.len() {
        return Err(MetricsError::Shape(format!(
            "batch sizes {} vs {}",
            truth.len(),
            recon.len()
        )));
    }
    let value_map = *truth[0].value_map();
    if truth.iter().any(|g| g.value_map() != &value_map) {
        return Err(MetricsError::Precondition(
            "mixed value maps in one batch".into(),
        ));
    }

    // pixel views, optionally restricted to non-building cells (flattened
    // to 1 x n row vectors so every metric sees a matched pixel set)
    let mut xs: Vec<Array2<f64>> = Vec::with_capacity(truth.len());
    let mut ys: Vec<Array2<f64>> = Vec::with_capacity(truth.len());
    for (g, r) in truth.iter().zip(recon) {
        let px = g.pixels();
        if px.dim() != r.dim() {
            return Err(MetricsError::Shape("reconstruction shape mismatch".into()));
        }
        match (cfg.exclude_buildings, g.building_mask()) {
            (true, Some(mask)) => {
                let mut tv = Vec::new();
                let mut rv = Vec::new();
                for (idx, &m) in mask.indexed_iter() {
                    if !m {
                        tv.push(px[idx]);
                        rv.push(r[idx]);
                    }
                }
                if tv.is_empty() {
                    return Err(MetricsError::Precondition(
                        "image is all buildings; nothing to score".into(),
                    ));
                }
                let n = tv.len();
                xs.push(Array2::from_shape_vec((1, n), tv).expect("length"));
                ys.push(Array2::from_shape_vec((1, n), rv).expect("length"));
            }
            _ => {
                xs.push(px);
                ys.push(r.clone());
            }
        }
    }

    let mse = mse_pixel(&xs, &ys)?;
    let (nm, nmse_excluded) = nmse(&xs, &ys)?;
    let (ps, psnr_capped) = psnr(&xs, &ys)?;
    let fd = if cfg.skip_fd || truth.len() < 2 {
        None
    } else {
        let full_truth: Vec<Array2<f64>> = truth.iter().map(|g| g.pixels()).collect();
        let fr = builtin_feature_extractor(&full_truth)?;
        let fc = builtin_feature_extractor(recon)?;
        Some(frechet_distance(&fr, &fc)?)
    };
    Ok(MetricsReport {
        mse_pixel: mse,
        rmse: rmse(&xs, &ys)?,
        nmse: nm,
        mse_gain: mse_gain(&xs, &ys, value_map)?,
        psnr_db: ps,
        ssim: ssim(&xs, &ys)?,
        fd,
        n_images: truth.len(),
        value_map,
        nmse_excluded,
        psnr_capped,
        exclude_buildings: cfg.exclude_buildings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub task: String,
    pub dataset: String,
    #[serde(flatten)]
    pub report: MetricsReport,
}

fn fmt_fd(fd: Option<f64>) -> String {
    fd.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

/// CSV with one row per (method, task); `fd` is blank when unavailable.
pub fn render_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "method,task,dataset,mse_pixel,rmse,nmse,mse_gain,psnr_db,ssim,fd,n_images,flags\n",
    );
    for r in rows {
        let m = &r.report;
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{},{},{}\n",
            r.method,
            r.task,
            r.dataset,
            m.mse_pixel,
            m.rmse,
            m.nmse,
            m.mse_gain,
            m.psnr_db,
            m.ssim,
            m.fd.map_or(String::new(), |v| format!("{v:.4}")),
            m.n_images,
            m.flags()
        ));
    }
    out
}

/// Human-readable aligned table with the improvement arrows.
pub fn render_table(rows: &[BenchRow]) -> String {
    let header = [
        "method",
        "task",
        "dataset",
        "MSE_pixel ↓",
        "RMSE ↓",
        "NMSE ↓",
        "MSE_gain ↓",
        "PSNR ↑",
        "SSIM ↑",
        "FD ↓",
        "N",
        "flags",
    ];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let m = &r.report;
        table.push(vec![
            r.method.clone(),
            r.task.clone(),
            r.dataset.clone(),
            format!("{:.6}", m.mse_pixel),
            format!("{:.6}", m.rmse),
            format!("{:.6}", m.nmse),
            format!("{:.4}", m.mse_gain),
            format!("{:.4}", m.psnr_db),
            format!("{:.4}", m.ssim),
            fmt_fd(m.fd),
            m.n_images.to_string(),
            m.flags(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap())
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<width$}", width = w))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
