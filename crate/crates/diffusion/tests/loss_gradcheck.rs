//! Finite-difference check of the two-term training loss against the
//! analytic gradients, on a random subset of parameters of a minimal net.

use ckm_diffusion::{ddm_forward_sample, DenoiserNet, ModelConfig};
use ckm_tensor::gradcheck::max_relative_error;
use ckm_tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

#[test]
fn loss_gradient_matches_finite_differences() {
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
    let net = DenoiserNet::new(cfg).unwrap();
    let named = net.named_tensors();

    // one weight from each region of the net: stem, time projection,
    // condition encoder, decoder fuse, a norm scale, and a head output
    let chosen = [
        "stem.w",
        "enc0.block0.t.w",
        "cond.level0.w",
        "dec0.fuse.b",
        "mid.block0.n2.gamma",
        "head_c.1.w",
        "head_eps.1.b",
    ];
    let idxs: Vec<usize> = chosen
        .iter()
        .map(|want| named.iter().position(|(n, _)| n == want).expect("name exists"))
        .collect();
    let inputs: Vec<Tensor> = idxs.iter().map(|&i| named[i].1.clone()).collect();

    // fixed batch of one sample
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let z0: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
    let eps: Vec<f64> = (0..64).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let t = 0.37;
    let zt = ddm_forward_sample(&z0, t, &eps).unwrap();
    let zt_tensor = Tensor::from_vec(vec![1, 1, 8, 8], zt).unwrap();
    let cond_tensor = Tensor::from_vec(
        vec![1, 3, 8, 8],
        (0..192).map(|i| ((i * 7) % 11) as f64 / 11.0).collect(),
    )
    .unwrap();
    let c_target = Tensor::from_vec(vec![1, 1, 8, 8], z0.iter().map(|v| -v).collect()).unwrap();
    let e_target = Tensor::from_vec(vec![1, 1, 8, 8], eps).unwrap();

    let err = max_relative_error(
        &inputs,
        |g: &mut Graph, vars| {
            let mut p = net.bind(g, false);
            for (k, &i) in idxs.iter().enumerate() {
                p[i] = vars[k];
            }
            let z = g.constant(zt_tensor.clone());
            let cond = g.constant(cond_tensor.clone());
            let feats = net.encode_condition(g, &p, cond).unwrap();
            let (c_hat, eps_hat) = net.forward(g, &p, z, &[t], &feats).unwrap();
            let ct = g.constant(c_target.clone());
            let et = g.constant(e_target.clone());
            let lc = g.mse_between(c_hat, ct)?;
            let le = g.mse_between(eps_hat, et)?;
            g.add(lc, le)
        },
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "max relative gradient error {err}");
}
