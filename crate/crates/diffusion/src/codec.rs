use ndarray::Array2;

use crate::{DiffusionError, Result};

/// A codec whose round-trip MSE on representative images exceeds this is
/// refused for training.
pub const CODEC_MSE_THRESHOLD: f64 = 0.05;

/// Pixel ↔ latent transform pair. The diffusion math runs on `encode`d
/// images and `decode`s once at the end of sampling. The desk-scale default
/// is the identity; the trait keeps the latent-space hook open.
pub trait Codec {
    fn encode(&self, pixels: &Array2<f64>) -> Array2<f64>;
    fn decode(&self, latent: &Array2<f64>) -> Array2<f64>;
    /// Latent shape for a given pixel shape.
    fn latent_shape(&self, pixel_shape: (usize, usize)) -> (usize, usize) {
        pixel_shape
    }
    fn id(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCodec;

impl Codec for IdentityCodec {
    fn encode(&self, pixels: &Array2<f64>) -> Array2<f64> {
        pixels.clone()
    }
    fn decode(&self, latent: &Array2<f64>) -> Array2<f64> {
        latent.clone()
    }
    fn id(&self) -> &'static str {
        "identity"
    }
}

/// Multiplies on encode, divides on decode; exercises non-identity scaling
/// without changing shapes.
#[derive(Debug, Clone, Copy)]
pub struct ScaleCodec {
    pub factor: f64,
}

impl Codec for ScaleCodec {
    fn encode(&self, pixels: &Array2<f64>) -> Array2<f64> {
        pixels.mapv(|v| v * self.factor)
    }
    fn decode(&self, latent: &Array2<f64>) -> Array2<f64> {
        latent.mapv(|v| v / self.factor)
    }
    fn id(&self) -> &'static str {
        "scale"
    }
}

/// Block-average downsampling with nearest-neighbor upsampling decode; a
/// lossy stand-in for a learned autoencoder. Round-trip error must be
/// measured before use.
#[derive(Debug, Clone, Copy)]
pub struct DownsampleCodec {
    pub factor: usize,
}

impl Codec for DownsampleCodec {
    fn encode(&self, pixels: &Array2<f64>) -> Array2<f64> {
        let m = self.factor.max(1);
        let (h, w) = pixels.dim();
        let (lh, lw) = (h / m, w / m);
        Array2::from_shape_fn((lh, lw), |(r, c)| {
            let mut acc = 0.0;
            for dr in 0..m {
                for dc in 0..m {
                    acc += pixels[(r * m + dr, c * m + dc)];
                }
            }
            acc / (m * m) as f64
        })
    }
    fn decode(&self, latent: &Array2<f64>) -> Array2<f64> {
        let m = self.factor.max(1);
        let (lh, lw) = latent.dim();
        Array2::from_shape_fn((lh * m, lw * m), |(r, c)| latent[(r / m, c / m)])
    }
    fn latent_shape(&self, pixel_shape: (usize, usize)) -> (usize, usize) {
        let m = self.factor.max(1);
        (pixel_shape.0 / m, pixel_shape.1 / m)
    }
    fn id(&self) -> &'static str {
        "downsample"
    }
}

/// Mean round-trip MSE of decode(encode(x)) over the given images.
pub fn codec_round_trip_mse(codec: &dyn Codec, images: &[Array2<f64>]) -> Result<f64> {
    if images.is_empty() {
        return Err(DiffusionError::Codec("no images to measure on".into()));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for img in images {
        let rt = codec.decode(&codec.encode(img));
        if rt.dim() != img.dim() {
            return Err(DiffusionError::Codec(format!(
                "round trip changed shape: {:?} vs {:?}",
                img.dim(),
                rt.dim()
            )));
        }
        for (a, b) in img.iter().zip(rt.iter()) {
            acc += (a - b) * (a - b);
            n += 1;
        }
    }
    Ok(acc / n as f64)
}

/// Measures the round-trip error and refuses codecs above
/// [`CODEC_MSE_THRESHOLD`]; returns the measured MSE otherwise.
pub fn validate_codec(codec: &dyn Codec, images: &[Array2<f64>]) -> Result<f64> {
    let mse = codec_round_trip_mse(codec, images)?;
    if mse > CODEC_MSE_THRESHOLD {
        return Err(DiffusionError::Codec(format!(
            "round-trip MSE {mse:.6} exceeds threshold {CODEC_MSE_THRESHOLD}"
        )));
    }
    Ok(mse)
}
