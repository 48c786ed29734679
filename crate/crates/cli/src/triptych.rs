//! Side-by-side inspection images: truth | condition | reconstruction as a
//! single 16-bit P5 PGM with one-pixel white separators.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;

const MAXVAL: u16 = u16::MAX;

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * MAXVAL as f64).round() as u16
}

/// Writes the panels left to right. All panels must share a shape; values
/// are clamped to [0,1] before quantization.
pub fn write_triptych(path: &Path, panels: &[&Array2<f64>]) -> Result<()> {
    let Some(first) = panels.first() else {
        bail!("triptych needs at least one panel");
    };
    let (h, w) = first.dim();
    if panels.iter().any(|p| p.dim() != (h, w)) {
        bail!("triptych panels disagree on shape");
    }
    let total_w = panels.len() * w + panels.len() - 1;
    let mut buf = Vec::with_capacity(32 + h * total_w * 2);
    buf.extend_from_slice(format!("P5\n{total_w} {h}\n{MAXVAL}\n").as_bytes());
    for r in 0..h {
        for (i, p) in panels.iter().enumerate() {
            if i > 0 {
                buf.extend_from_slice(&MAXVAL.to_be_bytes());
            }
            for c in 0..w {
                buf.extend_from_slice(&quantize(p[(r, c)]).to_be_bytes());
            }
        }
    }
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}
