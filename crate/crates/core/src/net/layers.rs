//! Per-layer forward/backward kernels.
//!
//! Convolution is im2col + a small dense matmul; the three matmul variants
//! below are plain loops arranged so the innermost loop runs over contiguous
//! memory and auto-vectorizes.

/// c(m,n) += a(m,k) * b(k,n)
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    // Two reduction steps per pass over the output row halves the c traffic.
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        let mut p = 0;
        while p + 2 <= k {
            let a0 = a_row[p];
            let a1 = a_row[p + 1];
            let b0 = &b[p * n..(p + 1) * n];
            let b1 = &b[(p + 1) * n..(p + 2) * n];
            for j in 0..n {
                c_row[j] += a0 * b0[j] + a1 * b1[j];
            }
            p += 2;
        }
        if p < k {
            let a0 = a_row[p];
            let b0 = &b[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] += a0 * b0[j];
            }
        }
    }
}

/// c(m,n) += a(m,k) * b(n,k)^T
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            // Split accumulators so the dot product pipelines.
            let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            let mut p = 0;
            while p + 4 <= k {
                s0 += a_row[p] * b_row[p];
                s1 += a_row[p + 1] * b_row[p + 1];
                s2 += a_row[p + 2] * b_row[p + 2];
                s3 += a_row[p + 3] * b_row[p + 3];
                p += 4;
            }
            let mut acc = (s0 + s1) + (s2 + s3);
            while p < k {
                acc += a_row[p] * b_row[p];
                p += 1;
            }
            c[i * n + j] += acc;
        }
    }
}

/// c(m,n) += a(k,m)^T * b(k,n)
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let v = a[p * m + i];
            if v == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                c_row[j] += v * b_row[j];
            }
        }
    }
}

/// Geometry of one convolution application.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one sample (cin,h,w) into patch columns (cin*k*k, out_h*out_w).
pub(crate) fn im2col(input: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let out_len = g.out_len();
    debug_assert_eq!(cols.len(), g.patch_len() * out_len);
    let mut row = 0;
    for c in 0..g.cin {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let dst = &mut cols[row * out_len..(row + 1) * out_len];
                let mut idx = 0;
                for oy in 0..g.out_h {
                    let in_y = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    if in_y < 0 || in_y >= g.h as isize {
                        dst[idx..idx + g.out_w].fill(0.0);
                        idx += g.out_w;
                        continue;
                    }
                    let src_row = &plane[in_y as usize * g.w..(in_y as usize + 1) * g.w];
                    for ox in 0..g.out_w {
                        let in_x = (ox * g.stride + kx) as isize - g.pad_left as isize;
                        dst[idx] = if in_x < 0 || in_x >= g.w as isize {
                            0.0
                        } else {
                            src_row[in_x as usize]
                        };
                        idx += 1;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Accumulates patch-column gradients back into the input image.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeometry, d_input: &mut [f64]) {
    let out_len = g.out_len();
    let mut row = 0;
    for c in 0..g.cin {
        let plane_off = c * g.h * g.w;
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let src = &cols[row * out_len..(row + 1) * out_len];
                let mut idx = 0;
                for oy in 0..g.out_h {
                    let in_y = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    if in_y < 0 || in_y >= g.h as isize {
                        idx += g.out_w;
                        continue;
                    }
                    let base = plane_off + in_y as usize * g.w;
                    for ox in 0..g.out_w {
                        let in_x = (ox * g.stride + kx) as isize - g.pad_left as isize;
                        if in_x >= 0 && in_x < g.w as isize {
                            d_input[base + in_x as usize] += src[idx];
                        }
                        idx += 1;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward convolution for one sample. `cols` is caller-provided scratch of
/// size `patch_len * out_len`.
pub(crate) fn conv_forward(
    input: &[f64],
    weights: &[f64],
    bias: &[f64],
    g: &ConvGeometry,
    cols: &mut [f64],
    output: &mut [f64],
) {
    im2col(input, g, cols);
    output.fill(0.0);
    gemm_nn(weights, cols, output, g.filters, g.patch_len(), g.out_len());
    let out_len = g.out_len();
    for f in 0..g.filters {
        let b = bias[f];
        for v in &mut output[f * out_len..(f + 1) * out_len] {
            *v += b;
        }
    }
}

/// Backward convolution for one sample; accumulates into `d_weights`,
/// `d_bias` and `d_input`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    input: &[f64],
    weights: &[f64],
    d_output: &[f64],
    g: &ConvGeometry,
    cols: &mut [f64],
    d_cols: &mut [f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    d_input: &mut [f64],
) {
    let out_len = g.out_len();
    for f in 0..g.filters {
        let mut acc = 0.0;
        for v in &d_output[f * out_len..(f + 1) * out_len] {
            acc += v;
        }
        d_bias[f] += acc;
    }
    im2col(input, g, cols);
    gemm_nt(d_output, cols, d_weights, g.filters, out_len, g.patch_len());
    d_cols.fill(0.0);
    gemm_tn(weights, d_output, d_cols, g.patch_len(), g.filters, out_len);
    col2im(d_cols, g, d_input);
}

/// Max-pool forward for one sample; records the flat input index of each
/// window maximum for the backward pass. Ties go to the first element in
/// scan order.
#[allow(clippy::too_many_arguments)]
pub(crate) fn maxpool_forward(
    input: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    size: usize,
    stride: usize,
    output: &mut [f64],
    argmax: &mut [u32],
) {
    let out_h = (h - size) / stride + 1;
    let out_w = (w - size) / stride + 1;
    let mut out_idx = 0;
    for c in 0..channels {
        let plane_off = c * h * w;
        for oy in 0..out_h {
            for ox in 0..out_w {
                let y0 = oy * stride;
                let x0 = ox * stride;
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0u32;
                for ky in 0..size {
                    let row = plane_off + (y0 + ky) * w + x0;
                    for kx in 0..size {
                        let v = input[row + kx];
                        if v > best {
                            best = v;
                            best_idx = (row + kx) as u32;
                        }
                    }
                }
                output[out_idx] = best;
                argmax[out_idx] = best_idx;
                out_idx += 1;
            }
        }
    }
    debug_assert_eq!(out_idx, channels * out_h * out_w);
}

pub(crate) fn maxpool_backward(d_output: &[f64], argmax: &[u32], d_input: &mut [f64]) {
    for (grad, &idx) in d_output.iter().zip(argmax) {
        d_input[idx as usize] += grad;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree_with_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut c_nn = vec![0.0; m * n];
        gemm_nn(&a, &b, &mut c_nn, m, k, n);

        // b transposed: bt(n,k)
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c_nt = vec![0.0; m * n];
        gemm_nt(&a, &bt, &mut c_nt, m, k, n);

        // a transposed: at(k,m)
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c_tn = vec![0.0; m * n];
        gemm_tn(&at, &b, &mut c_tn, m, k, n);

        for i in 0..m {
            for j in 0..n {
                let naive: f64 = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
                assert!((c_nn[i * n + j] - naive).abs() < 1e-12);
                assert!((c_nt[i * n + j] - naive).abs() < 1e-12);
                assert!((c_tn[i * n + j] - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_matches_hand_computation() {
        // 1x3x3 input, one 2x2 filter, valid padding.
        let input = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let weights = [1.0, 0.0, 0.0, -1.0]; // picks top-left minus bottom-right
        let bias = [0.5];
        let g = ConvGeometry {
            cin: 1,
            h: 3,
            w: 3,
            filters: 1,
            kernel: 2,
            stride: 1,
            pad_top: 0,
            pad_left: 0,
            out_h: 2,
            out_w: 2,
        };
        let mut cols = vec![0.0; g.patch_len() * g.out_len()];
        let mut out = vec![0.0; g.out_len()];
        conv_forward(&input, &weights, &bias, &g, &mut cols, &mut out);
        // out[y][x] = in[y][x] - in[y+1][x+1] + 0.5
        assert_eq!(out, vec![1.0 - 5.0 + 0.5, 2.0 - 6.0 + 0.5, 4.0 - 8.0 + 0.5, 5.0 - 9.0 + 0.5]);
    }

    #[test]
    fn same_padding_keeps_size() {
        let input = vec![1.0; 4 * 4];
        let weights = vec![1.0 / 9.0; 9];
        let bias = [0.0];
        let g = ConvGeometry {
            cin: 1,
            h: 4,
            w: 4,
            filters: 1,
            kernel: 3,
            stride: 1,
            pad_top: 1,
            pad_left: 1,
            out_h: 4,
            out_w: 4,
        };
        let mut cols = vec![0.0; g.patch_len() * g.out_len()];
        let mut out = vec![0.0; g.out_len()];
        conv_forward(&input, &weights, &bias, &g, &mut cols, &mut out);
        // Interior pixels average nine ones; the corner only sees four.
        assert!((out[5] - 1.0).abs() < 1e-12);
        assert!((out[0] - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn maxpool_picks_window_maxima() {
        let input = [1.0, 3.0, 2.0, 0.0, 5.0, 4.0, 7.0, 6.0, 9.0, 8.0, 11.0, 10.0, 13.0, 12.0, 15.0, 14.0];
        let mut out = vec![0.0; 4];
        let mut arg = vec![0u32; 4];
        maxpool_forward(&input, 1, 4, 4, 2, 2, &mut out, &mut arg);
        assert_eq!(out, vec![5.0, 7.0, 13.0, 15.0]);

        let mut d_in = vec![0.0; 16];
        maxpool_backward(&[1.0, 1.0, 1.0, 1.0], &arg, &mut d_in);
        assert_eq!(d_in.iter().sum::<f64>(), 4.0);
        assert_eq!(d_in[4], 1.0);
    }
}
