//! Reconstruction method registry: name parsing and dispatch from an
//! observation to a pixel map.

use anyhow::{bail, Context, Result};
use ckm_baselines::{
    fit_path_loss, fit_variogram, interpolate, kriging_reconstruct, ls_reconstruct,
    map_reconstruct, mmse_reconstruct, observed_points, spatial_model_predict, GaussianPrior,
    InterpolatorConfig,
};
use ckm_diffusion::{
    condition_from_observation, sample, DdmSchedule, DenoiserNet, IdentityCodec, SampleConfig,
};
use ckm_grid::{Observation, ValueMap};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

pub const METHOD_NAMES: &[&str] = &[
    "ls",
    "knn",
    "bilinear",
    "bicubic",
    "idw",
    "kriging",
    "spatial-model",
    "gaussian-map",
    "gaussian-mmse",
    "ckmdiff",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ls,
    Knn,
    Bilinear,
    Bicubic,
    Idw,
    Kriging,
    SpatialModel,
    GaussianMap,
    GaussianMmse,
    CkmDiff,
}

impl Method {
    pub fn parse(name: &str) -> Result<Method> {
        Ok(match name {
            "ls" => Method::Ls,
            "knn" => Method::Knn,
            "bilinear" => Method::Bilinear,
            "bicubic" => Method::Bicubic,
            "idw" => Method::Idw,
            "kriging" => Method::Kriging,
            "spatial-model" => Method::SpatialModel,
            "gaussian-map" => Method::GaussianMap,
            "gaussian-mmse" => Method::GaussianMmse,
            "ckmdiff" => Method::CkmDiff,
            other => bail!("unknown method '{other}' (expected one of {METHOD_NAMES:?})"),
        })
    }

    pub fn name(&self) -> &'static str {
        METHOD_NAMES[*self as usize]
    }

    pub fn needs_checkpoint(&self) -> bool {
        matches!(self, Method::CkmDiff)
    }
}

/// Loaded diffusion model plus sampling knobs, shared across images.
/// `samples` conditional draws are averaged into a posterior-mean estimate;
/// 1 reproduces a single stochastic sample.
pub struct DiffusionRuntime {
    pub net: DenoiserNet,
    pub steps: usize,
    pub seed: u64,
    pub samples: usize,
}

impl DiffusionRuntime {
    fn reconstruct(&self, obs: &Observation, image_seed: u64) -> Result<Array2<f64>> {
        if self.samples == 0 {
            bail!("diffusion reconstruction needs samples >= 1");
        }
        let cond = condition_from_observation(obs)?;
        let schedule = DdmSchedule::new(self.steps)?;
        let mut mean: Option<Array2<f64>> = None;
        for draw in 0..self.samples as u64 {
            let cfg = SampleConfig {
                schedule: schedule.clone(),
                seed: (self.seed ^ image_seed).wrapping_add(draw.wrapping_mul(0x9e3779b97f4a7c15)),
            };
            let img = sample(&self.net, &IdentityCodec, Some(&cond), &cfg)?;
            match &mut mean {
                None => mean = Some(img),
                Some(acc) => *acc += &img,
            }
        }
        let mut out = mean.expect("samples >= 1");
        out /= self.samples as f64;
        Ok(out)
    }
}

/// Knn/Idw defaults used when the CLI does not override them.
pub const KNN_K: usize = 4;
pub const IDW_POWER: f64 = 2.0;
/// Exponential prior correlation length (cells) for the Gaussian baselines.
pub const GAUSSIAN_PRIOR_CORR: f64 = 8.0;

fn gaussian_prior_from_observation(obs: &Observation) -> Result<GaussianPrior> {
    if obs.values.is_empty() {
        bail!("gaussian baselines need at least one observed value");
    }
    let (l, w) = obs.source_shape;
    let n = l * w;
    let mean_v = obs.values.iter().sum::<f64>() / obs.values.len() as f64;
    let var = (obs
        .values
        .iter()
        .map(|v| (v - mean_v) * (v - mean_v))
        .sum::<f64>()
        / obs.values.len() as f64)
        .max(1e-4);
    let mean = DVector::from_element(n, mean_v);
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let (ri, ci) = (i / w, i % w);
        let (rj, cj) = (j / w, j % w);
        let d = ((ri as f64 - rj as f64).powi(2) + (ci as f64 - cj as f64).powi(2)).sqrt();
        var * (-d / GAUSSIAN_PRIOR_CORR).exp()
    });
    Ok(GaussianPrior::new(mean, cov)?)
}

/// Runs one method on one observation. `image_seed` decorrelates the
/// diffusion sampler across images; `value_map` is only needed by the
/// dB-domain spatial model. All outputs are clamped to pixel range.
pub fn reconstruct(
    obs: &Observation,
    method: Method,
    value_map: ValueMap,
    diffusion: Option<&DiffusionRuntime>,
    image_seed: u64,
) -> Result<Array2<f64>> {
    let px = match method {
        Method::Ls => ls_reconstruct(obs)?,
        Method::Knn => interpolate(obs, &InterpolatorConfig::Knn { k: KNN_K })?,
        Method::Bilinear => interpolate(obs, &InterpolatorConfig::Bilinear)?,
        Method::Bicubic => interpolate(obs, &InterpolatorConfig::Bicubic)?,
        Method::Idw => interpolate(obs, &InterpolatorConfig::Idw { power: IDW_POWER })?,
        Method::Kriging => {
            let vg = fit_variogram(obs)?;
            kriging_reconstruct(obs, &vg)?.pixels
        }
        Method::SpatialModel => spatial_model(obs, value_map)?,
        Method::GaussianMap => map_reconstruct(obs, &gaussian_prior_from_observation(obs)?)?,
        Method::GaussianMmse => mmse_reconstruct(obs, &gaussian_prior_from_observation(obs)?)?,
        Method::CkmDiff => diffusion
            .context("method 'ckmdiff' needs --checkpoint")?
            .reconstruct(obs, image_seed)?,
    };
    Ok(px.mapv(|v| v.clamp(0.0, 1.0)))
}

/// Statistical-model baseline: convert to dB, estimate the transmitter as
/// the strongest observed cell, fit path loss + residual covariance, and
/// predict every cell.
fn spatial_model(obs: &Observation, value_map: ValueMap) -> Result<Array2<f64>> {
    let span = value_map.max_db - value_map.min_db;
    let points = observed_points(obs)?;
    let obs_db: Vec<((usize, usize), f64)> = points
        .iter()
        .map(|p| {
            (
                (p.row.round() as usize, p.col.round() as usize),
                p.value * span + value_map.min_db,
            )
        })
        .collect();
    let tx = obs_db
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(q, _)| q)
        .expect("observed_points is non-empty");
    let fit = fit_path_loss(&obs_db, tx)?;
    let (l, w) = obs.source_shape;
    let targets: Vec<(usize, usize)> = (0..l).flat_map(|r| (0..w).map(move |c| (r, c))).collect();
    let preds = spatial_model_predict(&fit, &obs_db, &targets)?;
    Ok(Array2::from_shape_fn((l, w), |(r, c)| {
        (preds[r * w + c] - value_map.min_db) / span
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ckm_grid::{apply_degradation, CkmGrid, DegradationKind, DegradationSpec};

    fn grid() -> CkmGrid {
        let px = Array2::from_shape_fn((8, 8), |(r, c)| {
            0.3 + 0.4 * (((r * 3 + c) % 7) as f64 / 6.0)
        });
        CkmGrid::from_pixels(px, ValueMap::RADIO_MAP_SEER, None).unwrap()
    }

    #[test]
    fn method_names_parse_and_round_trip() {
        for name in METHOD_NAMES {
            assert_eq!(Method::parse(name).unwrap().name(), *name);
        }
        assert!(Method::parse("cnn").is_err());
    }

    #[test]
    fn classical_methods_run_on_an_inpaint_observation() {
        let mask = Array2::from_shape_fn((8, 8), |(r, c)| !(r < 2 && c < 2));
        let spec = DegradationSpec::new(DegradationKind::Inpaint(mask), 0.05, 3).unwrap();
        let obs = apply_degradation(&grid(), &spec).unwrap();
        for m in [
            Method::Ls,
            Method::Knn,
            Method::Idw,
            Method::Kriging,
            Method::SpatialModel,
            Method::GaussianMap,
            Method::GaussianMmse,
        ] {
            let out = reconstruct(&obs, m, ValueMap::RADIO_MAP_SEER, None, 0)
                .unwrap_or_else(|e| panic!("{}: {e}", m.name()));
            assert_eq!(out.dim(), (8, 8));
            assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn bilinear_bicubic_need_superres() {
        let spec = DegradationSpec::new(DegradationKind::SuperRes(2), 0.0, 0).unwrap();
        let obs = apply_degradation(&grid(), &spec).unwrap();
        for m in [Method::Bilinear, Method::Bicubic] {
            assert!(reconstruct(&obs, m, ValueMap::RADIO_MAP_SEER, None, 0).is_ok());
        }
        let spec = DegradationSpec::new(DegradationKind::Denoise, 0.0, 0).unwrap();
        let obs = apply_degradation(&grid(), &spec).unwrap();
        assert!(reconstruct(&obs, Method::Bilinear, ValueMap::RADIO_MAP_SEER, None, 0).is_err());
    }

    #[test]
    fn ckmdiff_without_checkpoint_is_an_error() {
        let spec = DegradationSpec::new(DegradationKind::Denoise, 0.0, 0).unwrap();
        let obs = apply_degradation(&grid(), &spec).unwrap();
        assert!(reconstruct(&obs, Method::CkmDiff, ValueMap::RADIO_MAP_SEER, None, 0).is_err());
    }
}
