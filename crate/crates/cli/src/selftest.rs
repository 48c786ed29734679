//! Property-based oracle suites behind `ckmforge selftest`: forward-process
//! statistics, reverse-step identities, finite-difference gradient checks for
//! every graph op plus the full training loss, the degradation-matrix oracle,
//! baseline optimality/exactness oracles, and scalar-loop metric references.

use std::time::Instant;

use anyhow::{ensure, Result};
use ckm_baselines::{
    fit_path_loss, kriging_reconstruct, ls_reconstruct, map_reconstruct, mmse_reconstruct,
    observed_points, GaussianPrior, Variogram,
};
use ckm_diffusion::{ddm_forward_sample, ddm_reverse_step, DenoiserNet, ModelConfig};
use ckm_grid::{
    apply_degradation, materialize_matrix, CkmGrid, DegradationKind, DegradationSpec, Observation,
    ValueMap,
};
use ckm_metrics::{
    frechet_distance, mse_gain, mse_pixel, nmse, psnr, rmse, ssim, PSNR_CAP_DB,
};
use ckm_tensor::gradcheck::max_relative_error;
use ckm_tensor::{Graph, Tensor, Var};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn run_check(name: &'static str, f: impl FnOnce() -> Result<String>) -> CheckOutcome {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(e) => (false, format!("{e:#}")),
    };
    CheckOutcome {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn normals(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Forward marginal z_t = (1-t)z0 + sqrt(t)·eps: empirical mean within
/// 4·sigma/sqrt(N) of (1-t)z0 and variance within 2% of t, for three t.
pub fn forward_statistics() -> Result<String> {
    const N: usize = 100_000;
    let z0_val = 0.7;
    let mut rng = ChaCha12Rng::seed_from_u64(20240601);
    let mut worst = String::new();
    for &t in &[0.1, 0.5, 0.9] {
        let z0 = vec![z0_val; N];
        let eps = normals(&mut rng, N);
        let z = ddm_forward_sample(&z0, t, &eps)?;
        let mean = z.iter().sum::<f64>() / N as f64;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / N as f64;
        let mean_tol = 4.0 * t.sqrt() / (N as f64).sqrt();
        let mean_err = (mean - (1.0 - t) * z0_val).abs();
        let var_err = (var - t).abs();
        ensure!(
            mean_err < mean_tol,
            "t={t}: mean error {mean_err:.2e} exceeds 4 sigma/sqrt(N) = {mean_tol:.2e}"
        );
        ensure!(
            var_err < 0.02 * t,
            "t={t}: variance error {var_err:.2e} exceeds 2% of t"
        );
        worst = format!("t={t}: |dmean|={mean_err:.1e}, |dvar|/t={:.1e}", var_err / t);
    }
    Ok(format!("3 x {N} samples; last: {worst}"))
}

// consistent noise-head inverse at time t: what a perfect eps predictor returns
fn eps_consistent(z: &[f64], z0: &[f64], t: f64) -> Vec<f64> {
    z.iter()
        .zip(z0)
        .map(|(&zt, &x)| (zt - (1.0 - t) * x) / t.sqrt())
        .collect()
}

/// One-step reconstruction is exact (< 1e-12) and the S = 1000 chain with
/// oracle heads lands on z0 with MSE < 1e-4.
pub fn reverse_identities() -> Result<String> {
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let n = 64;
    let z0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let c_hat: Vec<f64> = z0.iter().map(|v| -v).collect();
    let zeros = vec![0.0; n];

    // S = 1: z1 = eps, one reverse step with exact heads recovers z0
    let eps = normals(&mut rng, n);
    let z1 = ddm_forward_sample(&z0, 1.0, &eps)?;
    let eps_hat = eps_consistent(&z1, &z0, 1.0);
    let rec = ddm_reverse_step(&z1, 1.0, 1.0, &c_hat, &eps_hat, &zeros)?;
    let one_step_err = rec
        .iter()
        .zip(&z0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    ensure!(one_step_err < 1e-12, "one-step identity off by {one_step_err:.2e}");

    // S = 1000 chain, noise-free with the consistent inverse as both heads
    let steps = 1000usize;
    let dt = 1.0 / steps as f64;
    let mut z = ddm_forward_sample(&z0, 1.0, &normals(&mut rng, n))?;
    for i in (1..=steps).rev() {
        let t = i as f64 * dt;
        let eps_hat = eps_consistent(&z, &z0, t);
        z = ddm_reverse_step(&z, t, dt, &c_hat, &eps_hat, &zeros)?;
    }
    let mse = z.iter().zip(&z0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    ensure!(mse < 1e-4, "S=1000 chain MSE {mse:.2e} >= 1e-4");
    Ok(format!("one-step max err {one_step_err:.1e}; S=1000 MSE {mse:.1e}"))
}

fn tensor_from(rng: &mut ChaCha12Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

// scalar loss with asymmetric weights so symmetric-gradient bugs can't cancel
fn weighted_sum(g: &mut Graph, v: Var) -> ckm_tensor::Result<Var> {
    let shape = g.value(v).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::from_vec(shape, (0..n).map(|i| 0.3 + 0.1 * i as f64).collect()).unwrap();
    let wv = g.constant(w);
    let prod = g.mul(v, wv)?;
    Ok(g.sum(prod))
}

/// Central finite differences against analytic gradients for every graph op
/// and for the full two-head training loss on a minimal net.
pub fn gradient_checks() -> Result<String> {
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let mut worst = 0.0f64;
    let mut check = |name: &str,
                     inputs: &[Tensor],
                     build: &dyn Fn(&mut Graph, &[Var]) -> ckm_tensor::Result<Var>|
     -> Result<()> {
        let err = max_relative_error(inputs, build, 1e-5)?;
        ensure!(err < 1e-4, "{name}: gradient error {err:.2e} >= 1e-4");
        worst = worst.max(err);
        Ok(())
    };

    let a23 = tensor_from(&mut rng, &[2, 3], -1.0, 1.0);
    let b23 = tensor_from(&mut rng, &[2, 3], -1.0, 1.0);
    check("add", &[a23.clone(), b23.clone()], &|g, v| {
        let s = g.add(v[0], v[1])?;
        weighted_sum(g, s)
    })?;
    let bias3 = tensor_from(&mut rng, &[3], -1.0, 1.0);
    check("add_bias", &[a23.clone(), bias3], &|g, v| {
        let s = g.add_bias(v[0], v[1])?;
        weighted_sum(g, s)
    })?;
    let x2322 = tensor_from(&mut rng, &[2, 3, 2, 2], -1.0, 1.0);
    check("add_channelwise", &[x2322.clone(), a23.clone()], &|g, v| {
        let s = g.add_channelwise(v[0], v[1])?;
        weighted_sum(g, s)
    })?;
    check("mul", &[a23.clone(), b23.clone()], &|g, v| {
        let s = g.mul(v[0], v[1])?;
        weighted_sum(g, s)
    })?;
    check("scale", &[a23.clone()], &|g, v| {
        let s = g.scale(v[0], 1.7);
        weighted_sum(g, s)
    })?;
    // keep relu inputs away from the kink at 0
    let relu_in = Tensor::from_vec(
        vec![2, 3],
        vec![-0.9, 0.7, -0.4, 0.5, 1.2, -1.1],
    )
    .unwrap();
    check("relu", &[relu_in], &|g, v| {
        let s = g.relu(v[0]);
        weighted_sum(g, s)
    })?;
    check("silu", &[a23.clone()], &|g, v| {
        let s = g.silu(v[0]);
        weighted_sum(g, s)
    })?;
    let m32 = tensor_from(&mut rng, &[3, 2], -1.0, 1.0);
    check("matmul", &[a23.clone(), m32], &|g, v| {
        let s = g.matmul(v[0], v[1])?;
        weighted_sum(g, s)
    })?;
    let cx = tensor_from(&mut rng, &[1, 2, 4, 4], -1.0, 1.0);
    let cw = tensor_from(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
    check("conv2d", &[cx.clone(), cw], &|g, v| {
        let s = g.conv2d(v[0], v[1], 1, 1)?;
        weighted_sum(g, s)
    })?;
    let tx = tensor_from(&mut rng, &[1, 2, 3, 3], -1.0, 1.0);
    let tw = tensor_from(&mut rng, &[2, 3, 2, 2], -0.5, 0.5);
    check("transposed_conv2d", &[tx, tw], &|g, v| {
        let s = g.transposed_conv2d(v[0], v[1], 2, 0)?;
        weighted_sum(g, s)
    })?;
    check("avg_pool2d", &[cx.clone()], &|g, v| {
        let s = g.avg_pool2d(v[0], 2)?;
        weighted_sum(g, s)
    })?;
    let ux = tensor_from(&mut rng, &[1, 2, 3, 3], -1.0, 1.0);
    check("upsample_nearest", &[ux], &|g, v| {
        let s = g.upsample_nearest(v[0], 2)?;
        weighted_sum(g, s)
    })?;
    let gx = tensor_from(&mut rng, &[2, 4, 2, 2], -1.0, 1.0);
    let gamma = tensor_from(&mut rng, &[4], 0.5, 1.5);
    let beta = tensor_from(&mut rng, &[4], -0.5, 0.5);
    check("group_norm", &[gx, gamma, beta], &|g, v| {
        let s = g.group_norm(v[0], v[1], v[2], 2)?;
        weighted_sum(g, s)
    })?;
    let ca = tensor_from(&mut rng, &[1, 2, 2, 2], -1.0, 1.0);
    let cb = tensor_from(&mut rng, &[1, 3, 2, 2], -1.0, 1.0);
    check("concat", &[ca, cb], &|g, v| {
        let s = g.concat(&[v[0], v[1]], 1)?;
        weighted_sum(g, s)
    })?;
    let r26 = tensor_from(&mut rng, &[2, 6], -1.0, 1.0);
    check("reshape", &[r26.clone()], &|g, v| {
        let s = g.reshape(v[0], &[3, 4])?;
        weighted_sum(g, s)
    })?;
    check("slice", &[r26], &|g, v| {
        let s = g.slice(v[0], 1, 1, 3)?;
        weighted_sum(g, s)
    })?;
    check("sum", &[a23.clone()], &|g, v| Ok(g.sum(v[0])))?;
    check("mse_between", &[a23, b23], &|g, v| g.mse_between(v[0], v[1]))?;

    // full two-head loss on a minimal net, perturbing one weight per region
    let cfg = ModelConfig {
        image_size: (8, 8),
        base_channels: 4,
        channel_mults: vec![1],
        blocks_per_level: 1,
        cond_channels: 3,
        time_dim: 4,
        groups: 2,
        seed: 11,
    };
    let net = DenoiserNet::new(cfg)?;
    let named = net.named_tensors();
    let chosen = [
        "stem.w",
        "enc0.block0.t.w",
        "cond.level0.w",
        "mid.block0.n2.gamma",
        "head_c.1.w",
        "head_eps.1.b",
    ];
    let idxs: Vec<usize> = chosen
        .iter()
        .map(|want| named.iter().position(|(n, _)| n == want).expect("param name"))
        .collect();
    let inputs: Vec<Tensor> = idxs.iter().map(|&i| named[i].1.clone()).collect();
    let z0: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
    let eps = normals(&mut rng, 64);
    let t = 0.37;
    let zt = Tensor::from_vec(vec![1, 1, 8, 8], ddm_forward_sample(&z0, t, &eps)?).unwrap();
    let cond = Tensor::from_vec(
        vec![1, 3, 8, 8],
        (0..192).map(|i| ((i * 7) % 11) as f64 / 11.0).collect(),
    )
    .unwrap();
    let ct = Tensor::from_vec(vec![1, 1, 8, 8], z0.iter().map(|v| -v).collect()).unwrap();
    let et = Tensor::from_vec(vec![1, 1, 8, 8], eps).unwrap();
    let err = max_relative_error(
        &inputs,
        |g: &mut Graph, vars| {
            let mut p = net.bind(g, false);
            for (k, &i) in idxs.iter().enumerate() {
                p[i] = vars[k];
            }
            let z = g.constant(zt.clone());
            let cv = g.constant(cond.clone());
            let feats = net.encode_condition(g, &p, cv).unwrap();
            let (c_hat, eps_hat) = net.forward(g, &p, z, &[t], &feats).unwrap();
            let ctv = g.constant(ct.clone());
            let etv = g.constant(et.clone());
            let lc = g.mse_between(c_hat, ctv)?;
            let le = g.mse_between(eps_hat, etv)?;
            g.add(lc, le)
        },
        1e-5,
    )?;
    ensure!(err < 1e-4, "training loss: gradient error {err:.2e} >= 1e-4");
    worst = worst.max(err);
    Ok(format!("18 ops + training loss; worst relative error {worst:.1e}"))
}

fn oracle_grid(h: usize, w: usize) -> CkmGrid {
    let px = Array2::from_shape_fn((h, w), |(r, c)| {
        0.15 + 0.7 * ((r * 13 + c * 7) % 23) as f64 / 22.0
    });
    CkmGrid::from_pixels(px, ValueMap::RADIO_MAP_SEER, None).unwrap()
}

fn hide_block(shape: (usize, usize), r0: usize, c0: usize, side: usize) -> Array2<bool> {
    Array2::from_shape_fn(shape, |(r, c)| {
        !(r >= r0 && r < r0 + side && c >= c0 && c < c0 + side)
    })
}

/// apply_degradation (noise-free) agrees elementwise with the materialized
/// matrix-vector product for all four operator families.
pub fn degradation_oracle() -> Result<String> {
    let mut cases = 0usize;
    for (h, w, factor) in [(16usize, 16usize, 4usize), (8, 12, 4), (9, 9, 3)] {
        let grid = oracle_grid(h, w);
        let x: Vec<f64> = grid.pixels().iter().copied().collect();
        let kinds = vec![
            DegradationKind::Denoise,
            DegradationKind::Inpaint(hide_block((h, w), 1, 2, 4)),
            DegradationKind::SuperRes(factor),
            DegradationKind::Generate,
        ];
        for kind in kinds {
            let spec = DegradationSpec::new(kind, 0.0, 0)?;
            let obs = apply_degradation(&grid, &spec)?;
            let a = materialize_matrix(&spec, h, w)?;
            ensure!(a.nrows() == obs.values.len(), "matrix rows vs observation length");
            for (i, row) in a.outer_iter().enumerate() {
                let yi: f64 = row.iter().zip(&x).map(|(m, v)| m * v).sum();
                let err = (yi - obs.values[i]).abs();
                ensure!(
                    err < 1e-10,
                    "{:?} on {h}x{w}: row {i} differs by {err:.2e}",
                    obs.spec.kind
                );
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} operator/shape cases, elementwise < 1e-10"))
}

fn ls_objective(a: &Array2<f64>, x: &Array2<f64>, y: &[f64]) -> f64 {
    let xf: Vec<f64> = x.iter().copied().collect();
    a.outer_iter()
        .zip(y)
        .map(|(row, &yi)| {
            let pred: f64 = row.iter().zip(&xf).map(|(m, v)| m * v).sum();
            (pred - yi) * (pred - yi)
        })
        .sum()
}

fn noisy_inpaint_obs(grid: &CkmGrid, noise: f64, seed: u64) -> Result<Observation> {
    let spec = DegradationSpec::new(
        DegradationKind::Inpaint(hide_block(grid.shape(), 3, 3, 5)),
        noise,
        seed,
    )?;
    Ok(apply_degradation(grid, &spec)?)
}

/// LS optimality against random perturbations, Kriging exactness at observed
/// points, MAP = MMSE agreement, and exact path-loss parameter recovery on
/// noise-free log-distance data.
pub fn baseline_oracles() -> Result<String> {
    let mut rng = ChaCha12Rng::seed_from_u64(515);

    // LS beats 100 random perturbations on the residual objective
    for spec in [
        DegradationSpec::new(DegradationKind::SuperRes(4), 0.02, 5)?,
        DegradationSpec::new(DegradationKind::Inpaint(hide_block((16, 16), 2, 2, 6)), 0.02, 6)?,
    ] {
        let grid = oracle_grid(16, 16);
        let obs = apply_degradation(&grid, &spec)?;
        let a = materialize_matrix(&spec, 16, 16)?;
        let xhat = ls_reconstruct(&obs)?;
        let base = ls_objective(&a, &xhat, &obs.values);
        for k in 0..100 {
            let perturbed = xhat.mapv(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal));
            let obj = ls_objective(&a, &perturbed, &obs.values);
            ensure!(
                base <= obj + 1e-12,
                "LS perturbation {k}: objective {base:.6e} > perturbed {obj:.6e}"
            );
        }
    }

    // ordinary Kriging interpolates the data exactly
    let grid = oracle_grid(12, 12);
    let obs = noisy_inpaint_obs(&grid, 0.0, 0)?;
    let vg = Variogram::new(1.0, 4.0, 0.0)?;
    let out = kriging_reconstruct(&obs, &vg)?;
    ensure!(out.fallback_cells == 0, "kriging fell back on {} cells", out.fallback_cells);
    let mut kriging_err = 0.0f64;
    for p in observed_points(&obs)? {
        let pred = out.pixels[(p.row.round() as usize, p.col.round() as usize)];
        kriging_err = kriging_err.max((pred - p.value).abs());
    }
    ensure!(kriging_err < 1e-8, "kriging exactness off by {kriging_err:.2e}");

    // Gaussian prior: MAP and MMSE coincide
    let n = 36;
    let g6 = oracle_grid(6, 6);
    let obs6 = noisy_inpaint_obs(&g6, 0.05, 9)?;
    let mean = DVector::from_fn(n, |i, _| 0.4 + 0.01 * i as f64);
    let b = DMatrix::from_fn(n, n, |i, j| {
        ChaCha12Rng::seed_from_u64((i * n + j) as u64).gen_range(-0.3..0.3)
    });
    let cov = &b * b.transpose() + DMatrix::identity(n, n);
    let prior = GaussianPrior::new(mean, cov)?;
    let map = map_reconstruct(&obs6, &prior)?;
    let mmse = mmse_reconstruct(&obs6, &prior)?;
    let map_diff = map
        .iter()
        .zip(mmse.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    ensure!(map_diff < 1e-9, "MAP vs MMSE differ by {map_diff:.2e}");

    // exact recovery of (K_dB, n_PL) from noise-free log-distance data
    let (k_db, n_pl) = (-40.0, 3.0);
    let tx = (8usize, 8usize);
    let mut data = Vec::new();
    for r in (0..16).step_by(2) {
        for c in (0..16).step_by(3) {
            let d = (((r as f64 - 8.0).powi(2) + (c as f64 - 8.0).powi(2)).sqrt()).max(1.0);
            data.push(((r, c), k_db + n_pl * (-10.0 * d.log10())));
        }
    }
    let fit = fit_path_loss(&data, tx)?;
    let pl_err = (fit.k_db_hat - k_db).abs().max((fit.n_pl_hat - n_pl).abs());
    ensure!(pl_err < 1e-8, "path-loss recovery off by {pl_err:.2e}");

    Ok(format!(
        "LS optimal vs 200 perturbations; kriging exact ({kriging_err:.1e}); \
         MAP=MMSE ({map_diff:.1e}); path loss recovered ({pl_err:.1e})"
    ))
}

/// All seven metrics match straight-from-formula scalar loops on a 2x2
/// batch; Frechet distance hits the 1-D closed forms; SSIM(X,X) = 1; the
/// gain/pixel span-squared identity holds.
pub fn metric_oracles() -> Result<String> {
    let x = vec![
        ndarray::array![[0.2, 0.8], [0.4, 0.6]],
        ndarray::array![[0.1, 0.3], [0.9, 0.5]],
    ];
    let y = vec![
        ndarray::array![[0.25, 0.7], [0.4, 0.65]],
        ndarray::array![[0.2, 0.3], [0.85, 0.45]],
    ];

    // scalar-loop references
    let mut se = 0.0;
    for (a, b) in x.iter().zip(&y) {
        for (p, q) in a.iter().zip(b.iter()) {
            se += (p - q) * (p - q);
        }
    }
    let mse_ref = se / 8.0;
    let mut nmse_ref = 0.0;
    for (a, b) in x.iter().zip(&y) {
        let num: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
        let den: f64 = a.iter().map(|p| p * p).sum();
        nmse_ref += num / den;
    }
    nmse_ref /= 2.0;
    let mut psnr_ref = 0.0;
    for (a, b) in x.iter().zip(&y) {
        let m: f64 =
            a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / 4.0;
        psnr_ref += 10.0 * (1.0 / m).log10();
    }
    psnr_ref /= 2.0;
    let mut ssim_ref = 0.0;
    for (a, b) in x.iter().zip(&y) {
        let (ma, mb) = (a.sum() / 4.0, b.sum() / 4.0);
        let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
        for (p, q) in a.iter().zip(b.iter()) {
            va += (p - ma) * (p - ma);
            vb += (q - mb) * (q - mb);
            cov += (p - ma) * (q - mb);
        }
        let (va, vb, cov) = (va / 4.0, vb / 4.0, cov / 4.0);
        let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
        ssim_ref += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    ssim_ref /= 2.0;
    let span = ValueMap::RADIO_MAP_SEER.max_db - ValueMap::RADIO_MAP_SEER.min_db;

    let checks: Vec<(&str, f64, f64)> = vec![
        ("mse_pixel", mse_pixel(&x, &y)?, mse_ref),
        ("rmse", rmse(&x, &y)?, mse_ref.sqrt()),
        ("nmse", nmse(&x, &y)?.0, nmse_ref),
        (
            "mse_gain",
            mse_gain(&x, &y, ValueMap::RADIO_MAP_SEER)?,
            mse_ref * span * span,
        ),
        ("psnr", psnr(&x, &y)?.0, psnr_ref),
        ("ssim", ssim(&x, &y)?, ssim_ref),
        ("fd_identical", frechet_distance(
            &[vec![0.3, 0.1], vec![0.7, 0.9], vec![0.2, 0.5]],
            &[vec![0.3, 0.1], vec![0.7, 0.9], vec![0.2, 0.5]],
        )?, 0.0),
    ];
    let mut worst = 0.0f64;
    for (name, got, want) in &checks {
        let err = (got - want).abs() / (1.0 + want.abs());
        ensure!(err < 1e-12, "{name}: {got} vs scalar-loop {want} (err {err:.2e})");
        worst = worst.max(err);
    }

    // 1-D closed forms: exact sample moments, both distances equal 1
    let unit = vec![vec![-1.0], vec![1.0]];
    let shifted = vec![vec![0.0], vec![2.0]];
    let wide = vec![vec![-2.0], vec![2.0]];
    let fd_shift = frechet_distance(&unit, &shifted)?;
    let fd_var = frechet_distance(&unit, &wide)?;
    ensure!((fd_shift - 1.0).abs() < 1e-10, "FD mean-shift case: {fd_shift}");
    ensure!((fd_var - 1.0).abs() < 1e-10, "FD variance-gap case: {fd_var}");

    let self_ssim = ssim(&x, &x)?;
    ensure!((self_ssim - 1.0).abs() < 1e-12, "SSIM(X,X) = {self_ssim}");
    ensure!((psnr(&x, &x)?.0 - PSNR_CAP_DB).abs() < 1e-12, "perfect PSNR not capped");

    let identity_gap = (mse_gain(&x, &y, ValueMap::CKM_IMAGE_NET)?
        - mse_pixel(&x, &y)? * 200.0 * 200.0)
        .abs();
    ensure!(identity_gap < 1e-9, "gain/pixel identity gap {identity_gap:.2e}");

    Ok(format!(
        "7 scalar-loop references (worst {worst:.1e}); FD closed forms = 1; \
         SSIM(X,X) = 1; span-squared identity holds"
    ))
}

/// Runs every suite; names carry stable ids for the acceptance gate.
pub fn all_checks() -> Vec<CheckOutcome> {
    vec![
        run_check("forward-statistics", forward_statistics),
        run_check("reverse-identities", reverse_identities),
        run_check("gradient-checks", gradient_checks),
        run_check("degradation-oracle", degradation_oracle),
        run_check("baseline-oracles", baseline_oracles),
        run_check("metric-oracles", metric_oracles),
    ]
}

/// Prints the disclaimer plus one pass/fail line per suite; true iff all pass.
pub fn run_selftest() -> bool {
    println!("{}", crate::DESK_SCALE_DISCLAIMER);
    let outcomes = all_checks();
    let mut ok = true;
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {:<22} {:6.2}s  {}", o.name, o.seconds, o.detail);
        ok &= o.passed;
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        forward_statistics().unwrap();
        reverse_identities().unwrap();
        degradation_oracle().unwrap();
        baseline_oracles().unwrap();
        metric_oracles().unwrap();
    }
}
