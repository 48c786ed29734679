//! Feature emphasis for conditioned reconstruction: isolate building regions
//! by binarization, trace their boundaries with Canny edge detection, and
//! stack (grayscale, building mask, edges) into the 3-channel condition image.

use ndarray::{Array2, Array3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("pixel value {0} outside [0, 1]")]
    PixelRange(f64),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Exact-zero threshold for clean images.
pub const BINARIZE_TAU_EXACT: f64 = 0.0;
/// Threshold for noisy observations: 2 grayscale levels out of 255.
pub const BINARIZE_TAU_NOISY: f64 = 2.0 / 255.0;

#[derive(Debug, Clone, Copy)]
pub struct CannyParams {
    pub blur_sigma: f64,
    pub low_ratio: f64,
    pub high_ratio: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            blur_sigma: 1.0,
            low_ratio: 0.1,
            high_ratio: 0.3,
        }
    }
}

/// Marks cells at or below `tau` as building interior.
pub fn binarize_buildings(image: &Array2<f64>, tau: f64) -> Result<Array2<bool>> {
    for &v in image.iter() {
        if !(0.0..=1.0).contains(&v) {
            return Err(FeatureError::PixelRange(v));
        }
    }
    Ok(image.mapv(|v| v <= tau))
}

fn gaussian_kernel_5(sigma: f64) -> [f64; 5] {
    let mut k = [0.0; 5];
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - 2.0;
        *v = (-x * x / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable 5x5 Gaussian blur with edge clamping.
fn blur(image: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let (h, w) = image.dim();
    let k = gaussian_kernel_5(sigma);
    let mut tmp = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * image[(r, clamp_idx(c as isize + i as isize - 2, w))];
            }
            tmp[(r, c)] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * tmp[(clamp_idx(r as isize + i as isize - 2, h), c)];
            }
            out[(r, c)] = acc;
        }
    }
    out
}

/// Full Canny pipeline on a binary mask: blur, Sobel gradients, non-maximum
/// suppression, double threshold relative to the max gradient, hysteresis by
/// 8-connectivity from strong edges.
pub fn canny_edges(mask: &Array2<bool>, params: &CannyParams) -> Array2<bool> {
    let (h, w) = mask.dim();
    let image = mask.mapv(|b| if b { 1.0 } else { 0.0 });
    let smoothed = blur(&image, params.blur_sigma);

    let at = |r: isize, c: isize| smoothed[(clamp_idx(r, h), clamp_idx(c, w))];
    let mut magnitude = Array2::zeros((h, w));
    let mut direction = Array2::zeros((h, w));
    let mut max_mag = 0.0f64;
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = -at(r - 1, c - 1) + at(r - 1, c + 1) - 2.0 * at(r, c - 1)
                + 2.0 * at(r, c + 1)
                - at(r + 1, c - 1)
                + at(r + 1, c + 1);
            let gy = -at(r - 1, c - 1) - 2.0 * at(r - 1, c) - at(r - 1, c + 1)
                + at(r + 1, c - 1)
                + 2.0 * at(r + 1, c)
                + at(r + 1, c + 1);
            let m = (gx * gx + gy * gy).sqrt();
            magnitude[(r as usize, c as usize)] = m;
            direction[(r as usize, c as usize)] = gy.atan2(gx);
            if m > max_mag {
                max_mag = m;
            }
        }
    }
    if max_mag == 0.0 {
        return Array2::from_elem((h, w), false);
    }

    // non-maximum suppression along the quantized gradient direction
    let mut thinned = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let angle = direction[(r, c)].to_degrees();
            let angle = if angle < 0.0 { angle + 180.0 } else { angle };
            let (dr, dc) = if !(22.5..157.5).contains(&angle) {
                (0isize, 1isize) // horizontal gradient
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let m = magnitude[(r, c)];
            let n1 = magnitude[(
                clamp_idx(r as isize + dr, h),
                clamp_idx(c as isize + dc, w),
            )];
            let n2 = magnitude[(
                clamp_idx(r as isize - dr, h),
                clamp_idx(c as isize - dc, w),
            )];
            thinned[(r, c)] = if m >= n1 && m >= n2 { m } else { 0.0 };
        }
    }

    let low = params.low_ratio * max_mag;
    let high = params.high_ratio * max_mag;
    let mut state = Array2::from_elem((h, w), 0u8); // 0 none, 1 weak, 2 strong
    let mut stack = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let m = thinned[(r, c)];
            if m >= high {
                state[(r, c)] = 2;
                stack.push((r, c));
            } else if m >= low {
                state[(r, c)] = 1;
            }
        }
    }
    // hysteresis: weak pixels survive only when 8-connected to a strong one
    let mut edges = Array2::from_elem((h, w), false);
    while let Some((r, c)) = stack.pop() {
        if edges[(r, c)] {
            continue;
        }
        edges[(r, c)] = true;
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nr >= h as isize || nc < 0 || nc >= w as isize {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if state[(nr, nc)] >= 1 && !edges[(nr, nc)] {
                    stack.push((nr, nc));
                }
            }
        }
    }
    edges
}

/// Stacks (grayscale, building mask, edges) into a `[3, l, w]` condition image.
/// Channel order is fixed.
pub fn stack_condition(
    gray: &Array2<f64>,
    mask: &Array2<bool>,
    edges: &Array2<bool>,
) -> Result<Array3<f64>> {
    if gray.dim() != mask.dim() || gray.dim() != edges.dim() {
        return Err(FeatureError::Shape(format!(
            "gray {:?}, mask {:?}, edges {:?}",
            gray.dim(),
            mask.dim(),
            edges.dim()
        )));
    }
    let (h, w) = gray.dim();
    let mut out = Array3::zeros((3, h, w));
    for r in 0..h {
        for c in 0..w {
            out[(0, r, c)] = gray[(r, c)];
            out[(1, r, c)] = mask[(r, c)] as u8 as f64;
            out[(2, r, c)] = edges[(r, c)] as u8 as f64;
        }
    }
    Ok(out)
}

/// Runs the whole pipeline on a (possibly zero-filled) grayscale condition.
pub fn condition_channels(gray: &Array2<f64>, tau: f64, params: &CannyParams) -> Result<Array3<f64>> {
    let clamped = gray.mapv(|v| v.clamp(0.0, 1.0));
    let mask = binarize_buildings(&clamped, tau)?;
    let edges = canny_edges(&mask, params);
    stack_condition(&clamped, &mask, &edges)
}
