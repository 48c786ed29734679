//! Inner matmul kernels and im2col/col2im for the convolution ops.
//!
//! Plain loops ordered so the innermost runs over contiguous slices; the
//! compiler autovectorizes these well enough for desk-scale training.

/// C[m,n] += A[m,k] * B[k,n]
pub fn matmul_nn_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] += aip * b_row[j];
            }
        }
    }
}

/// C[m,n] += A[m,k] * B[n,k]^T (dot products of rows)
pub fn matmul_nt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for p in 0..k {
                acc += a_row[p] * b_row[p];
            }
            c_row[j] += acc;
        }
    }
}

/// C[m,n] += A[k,m]^T * B[k,n]
pub fn matmul_tn_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                c_row[j] += api * b_row[j];
            }
        }
    }
}

/// Spatial size of a conv output along one axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Unfolds one sample [C,H,W] into a [C*kh*kw, oh*ow] column matrix.
#[allow(clippy::too_many_arguments)]
pub fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    col: &mut [f64],
) {
    let oh = conv_out_dim(h, kh, stride, padding).unwrap();
    let ow = conv_out_dim(w, kw, stride, padding).unwrap();
    debug_assert_eq!(col.len(), c * kh * kw * oh * ow);
    let mut row = 0usize;
    for ci in 0..c {
        let x_chan = &x[ci * h * w..(ci + 1) * h * w];
        for dr in 0..kh {
            for dc in 0..kw {
                let out_row = &mut col[row * oh * ow..(row + 1) * oh * ow];
                for or in 0..oh {
                    let ir = (or * stride + dr) as isize - padding as isize;
                    let base = or * ow;
                    if ir < 0 || ir >= h as isize {
                        out_row[base..base + ow].fill(0.0);
                        continue;
                    }
                    let x_row = &x_chan[ir as usize * w..(ir as usize + 1) * w];
                    for oc in 0..ow {
                        let ic = (oc * stride + dc) as isize - padding as isize;
                        out_row[base + oc] = if ic < 0 || ic >= w as isize {
                            0.0
                        } else {
                            x_row[ic as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds a column matrix back onto a [C,H,W] image,
/// accumulating overlaps.
#[allow(clippy::too_many_arguments)]
pub fn col2im(
    col: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    x: &mut [f64],
) {
    let oh = conv_out_dim(h, kh, stride, padding).unwrap();
    let ow = conv_out_dim(w, kw, stride, padding).unwrap();
    debug_assert_eq!(col.len(), c * kh * kw * oh * ow);
    debug_assert_eq!(x.len(), c * h * w);
    let mut row = 0usize;
    for ci in 0..c {
        let x_chan = &mut x[ci * h * w..(ci + 1) * h * w];
        for dr in 0..kh {
            for dc in 0..kw {
                let in_row = &col[row * oh * ow..(row + 1) * oh * ow];
                for or in 0..oh {
                    let ir = (or * stride + dr) as isize - padding as isize;
                    if ir < 0 || ir >= h as isize {
                        continue;
                    }
                    let base = or * ow;
                    for oc in 0..ow {
                        let ic = (oc * stride + dc) as isize - padding as isize;
                        if ic >= 0 && ic < w as isize {
                            x_chan[ir as usize * w + ic as usize] += in_row[base + oc];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let i3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut c = [0.0; 6];
        matmul_nn_acc(3, 3, 2, &i3, &x, &mut c);
        assert_eq!(c, x);
    }

    #[test]
    fn transposed_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut c_nn = [0.0; 4];
        matmul_nn_acc(2, 3, 2, &a, &b, &mut c_nn);

        // b^T stored as 2x3
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c_nt = [0.0; 4];
        matmul_nt_acc(2, 3, 2, &a, &bt, &mut c_nt);
        assert_eq!(c_nn, c_nt);

        // a^T stored as 3x2
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c_tn = [0.0; 4];
        matmul_tn_acc(2, 3, 2, &at, &b, &mut c_tn);
        assert_eq!(c_nn, c_tn);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let (c, h, w, k, s, p) = (2usize, 5usize, 4usize, 3usize, 2usize, 1usize);
        let oh = conv_out_dim(h, k, s, p).unwrap();
        let ow = conv_out_dim(w, k, s, p).unwrap();
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..c * k * k * oh * ow)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mut col = vec![0.0; y.len()];
        im2col(&x, c, h, w, k, k, s, p, &mut col);
        let mut folded = vec![0.0; x.len()];
        col2im(&y, c, h, w, k, k, s, p, &mut folded);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&folded).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
