use nalgebra::{DMatrix, DVector};

use crate::{BaselineError, Result};

/// Residual Kriging neighborhood for the statistical-model prediction.
const NEIGHBORS: usize = 16;
const COV_BINS: usize = 12;

/// Fitted parameter vector of the log-distance channel model.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLossFit {
    pub k_db_hat: f64,
    pub n_pl_hat: f64,
    pub shadow_var_hat: f64,
    pub corr_dist_hat: f64,
    pub multipath_var_hat: f64,
    /// Transmitter cell the distances were measured against.
    pub tx: (usize, usize),
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn pl_regressor(q: (usize, usize), tx: (usize, usize)) -> f64 {
    let h = dist((q.0 as f64, q.1 as f64), (tx.0 as f64, tx.1 as f64)).max(1.0);
    -10.0 * h.log10()
}

impl PathLossFit {
    /// Deterministic path-loss term at a cell.
    pub fn path_loss_db(&self, q: (usize, usize)) -> f64 {
        self.k_db_hat + self.n_pl_hat * pl_regressor(q, self.tx)
    }
}

/// Least-squares regression of observed dB values on [1, -10·log10(dist)],
/// then moment-matching the residuals: total residual variance splits into a
/// spatially correlated part (o_hat, d_hat) fitted log-linearly against the
/// binned empirical residual covariance, and an uncorrelated remainder.
pub fn fit_path_loss(obs_db: &[((usize, usize), f64)], tx: (usize, usize)) -> Result<PathLossFit> {
    if obs_db.len() < 3 {
        return Err(BaselineError::Precondition(format!(
            "path-loss fit needs >= 3 observations, got {}",
            obs_db.len()
        )));
    }
    let n = obs_db.len() as f64;
    let xs: Vec<f64> = obs_db.iter().map(|&(q, _)| pl_regressor(q, tx)).collect();
    let ys: Vec<f64> = obs_db.iter().map(|&(_, y)| y).collect();
    let sx: f64 = xs.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let x_var = sxx / n - (sx / n).powi(2);
    if x_var < 1e-12 {
        return Err(BaselineError::Singular {
            condition: f64::INFINITY,
            context: "all observations at the same distance from tx".into(),
        });
    }
    let k_db_hat = (sy * sxx - sx * sxy) / det;
    let n_pl_hat = (n * sxy - sx * sy) / det;

    let residuals: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - k_db_hat - n_pl_hat * x)
        .collect();
    let total_var = residuals.iter().map(|r| r * r).sum::<f64>() / n;
    if total_var < 1e-16 {
        return Ok(PathLossFit {
            k_db_hat,
            n_pl_hat,
            shadow_var_hat: 0.0,
            corr_dist_hat: 1.0,
            multipath_var_hat: 0.0,
            tx,
        });
    }

    // empirical residual covariance binned by pair distance, then
    // ln c(h) = ln o - h/d fitted linearly (our choice; see the shadow model)
    let mut h_max = 0.0f64;
    for (i, &(qi, _)) in obs_db.iter().enumerate() {
        for &(qj, _) in obs_db.iter().skip(i + 1) {
            h_max = h_max.max(dist(
                (qi.0 as f64, qi.1 as f64),
                (qj.0 as f64, qj.1 as f64),
            ));
        }
    }
    let h_max = h_max / 2.0;
    let mut sums = vec![0.0; COV_BINS];
    let mut counts = vec![0usize; COV_BINS];
    if h_max > 0.0 {
        let bw = h_max / COV_BINS as f64;
        for (i, &(qi, _)) in obs_db.iter().enumerate() {
            for (j, &(qj, _)) in obs_db.iter().enumerate().skip(i + 1) {
                let h = dist((qi.0 as f64, qi.1 as f64), (qj.0 as f64, qj.1 as f64));
                if h <= 0.0 || h > h_max {
                    continue;
                }
                let k = ((h / bw) as usize).min(COV_BINS - 1);
                sums[k] += residuals[i] * residuals[j];
                counts[k] += 1;
            }
        }
        let raw: Vec<(f64, f64)> = (0..COV_BINS)
            .filter(|&k| counts[k] > 0 && sums[k] > 0.0)
            .map(|k| ((k as f64 + 0.5) * bw, sums[k] / counts[k] as f64))
            .collect();
        // drop bins more than two e-foldings below the peak: the log of a
        // noisy near-zero covariance estimate would dominate the slope
        let c_peak = raw.iter().fold(0.0f64, |m, &(_, c)| m.max(c));
        let bins: Vec<(f64, f64)> = raw
            .iter()
            .filter(|&&(_, c)| c >= c_peak * (-2.0f64).exp())
            .map(|&(h, c)| (h, c.ln()))
            .collect();
        if bins.len() >= 2 {
            let m = bins.len() as f64;
            let sh: f64 = bins.iter().map(|b| b.0).sum();
            let shh: f64 = bins.iter().map(|b| b.0 * b.0).sum();
            let sl: f64 = bins.iter().map(|b| b.1).sum();
            let shl: f64 = bins.iter().map(|b| b.0 * b.1).sum();
            let d2 = m * shh - sh * sh;
            if d2.abs() > 1e-12 {
                let slope = (m * shl - sh * sl) / d2;
                let intercept = (sl * shh - sh * shl) / d2;
                if slope < 0.0 {
                    let o_hat = intercept.exp().min(total_var);
                    return Ok(PathLossFit {
                        k_db_hat,
                        n_pl_hat,
                        shadow_var_hat: o_hat,
                        corr_dist_hat: -1.0 / slope,
                        multipath_var_hat: total_var - o_hat,
                        tx,
                    });
                }
            }
        }
    }
    // no usable spatial structure: everything is uncorrelated noise
    Ok(PathLossFit {
        k_db_hat,
        n_pl_hat,
        shadow_var_hat: 0.0,
        corr_dist_hat: 1.0,
        multipath_var_hat: total_var,
        tx,
    })
}

/// Path-loss term plus the Gaussian-conditional mean of shadowing given the
/// k nearest residuals (simple Kriging of residuals with known covariance
/// o·exp(-h/d) and nugget sigma^2 on the diagonal).
pub fn spatial_model_predict(
    fit: &PathLossFit,
    obs_db: &[((usize, usize), f64)],
    targets: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let residuals: Vec<f64> = obs_db
        .iter()
        .map(|&(q, y)| y - fit.path_loss_db(q))
        .collect();
    let o = fit.shadow_var_hat;
    let d = fit.corr_dist_hat.max(1e-9);
    let s2 = fit.multipath_var_hat;
    let mut out = Vec::with_capacity(targets.len());
    for &t in targets {
        let base = fit.path_loss_db(t);
        if o == 0.0 || obs_db.is_empty() {
            out.push(base);
            continue;
        }
        // k nearest observations by distance to the target
        let tf = (t.0 as f64, t.1 as f64);
        let mut order: Vec<usize> = (0..obs_db.len()).collect();
        order.sort_by(|&a, &b| {
            let da = dist((obs_db[a].0 .0 as f64, obs_db[a].0 .1 as f64), tf);
            let db = dist((obs_db[b].0 .0 as f64, obs_db[b].0 .1 as f64), tf);
            (da, a).partial_cmp(&(db, b)).unwrap()
        });
        order.truncate(NEIGHBORS);
        let k = order.len();
        let mut cov = DMatrix::zeros(k, k);
        let mut cross = DVector::zeros(k);
        for (a, &ia) in order.iter().enumerate() {
            let qa = (obs_db[ia].0 .0 as f64, obs_db[ia].0 .1 as f64);
            for (b, &ib) in order.iter().enumerate() {
                let qb = (obs_db[ib].0 .0 as f64, obs_db[ib].0 .1 as f64);
                cov[(a, b)] = o * (-dist(qa, qb) / d).exp() + if a == b { s2 } else { 0.0 };
            }
            cross[a] = o * (-dist(qa, tf) / d).exp();
        }
        let r = DVector::from_iterator(k, order.iter().map(|&i| residuals[i]));
        let correction = match cov.clone().cholesky() {
            Some(ch) => cross.dot(&ch.solve(&r)),
            None => match cov.lu().solve(&r) {
                Some(sol) => cross.dot(&sol),
                None => 0.0,
            },
        };
        out.push(base + correction);
    }
    Ok(out)
}
