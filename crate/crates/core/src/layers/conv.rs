//! Dilated 2-D convolution with exact zero same-padding.
//!
//! Spatial size is preserved for every odd kernel and dilation: each side is
//! padded by `dilation * (k - 1) / 2` and out-of-bounds taps contribute
//! nothing. The inner loops run over contiguous rows so the compiler can
//! vectorize them; that is what the whole-slide throughput target rests on.

use super::LayerError;
use crate::tensor::Tensor;
use rayon::prelude::*;

/// Weights `(out_ch, in_ch, k, k)`, per-output-channel bias, dilation rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Tensor,
    pub dilation: usize,
    pub kernel: usize,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Tensor, dilation: usize) -> Result<Self, LayerError> {
        let shape = weights.shape().to_vec();
        if shape.len() != 4 {
            return Err(LayerError::BadRank { expected: 4, shape });
        }
        let (out_ch, in_ch, kh, kw) = (shape[0], shape[1], shape[2], shape[3]);
        if kh != kw {
            return Err(LayerError::Incompatible {
                what: "kernel height/width",
                left: vec![kh],
                right: vec![kw],
            });
        }
        if kh % 2 == 0 {
            return Err(LayerError::EvenKernel(kh));
        }
        if bias.shape() != [out_ch] {
            return Err(LayerError::Incompatible {
                what: "bias length vs output channels",
                left: bias.shape().to_vec(),
                right: vec![out_ch],
            });
        }
        assert!(dilation >= 1, "dilation must be >= 1");
        Ok(Self {
            weights,
            bias,
            dilation,
            kernel: kh,
            in_ch,
            out_ch,
        })
    }

    /// Padding applied per side so output H,W match input H,W.
    pub fn pad(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn batch_dims(input: &Tensor) -> Result<(usize, usize, usize, usize), LayerError> {
    match *input.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(LayerError::BadRank {
            expected: 4,
            shape: input.shape().to_vec(),
        }),
    }
}

/// Output x-range `[x0, x1)` for which `x + dx` stays inside `[0, w)`.
fn valid_span(w: usize, dx: isize) -> (usize, usize) {
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize).min(w as isize - dx).max(0) as usize;
    (x0.min(w), x1)
}

// Plane-parallel work is only worth spawning for real batches and images; the
// tiny tensors in gradient checks stay serial. Each plane is written by one
// task with a fixed tap order, so thread count never changes the result.
const PAR_MIN_TAP_WORK: usize = 1 << 22;

/// Convolves `(N, C, H, W)` input into `(N, out_ch, H, W)`.
pub fn conv2d_forward(input: &Tensor, p: &ConvParams) -> Result<Tensor, LayerError> {
    let (n, c, h, w) = batch_dims(input)?;
    if c != p.in_ch {
        return Err(LayerError::ChannelMismatch {
            expected: p.in_ch,
            actual: c,
        });
    }
    let plane = h * w;
    let mut out = vec![0.0f32; n * p.out_ch * plane];
    let work = n * p.out_ch * plane * c * p.kernel * p.kernel;

    let run_plane = |no: usize, out_plane: &mut [f32]| {
        let nb = no / p.out_ch;
        let o = no % p.out_ch;
        forward_plane(
            &input.data()[nb * c * plane..(nb + 1) * c * plane],
            c,
            h,
            w,
            p.weights.data(),
            p.bias.data()[o],
            o,
            p.kernel,
            p.dilation,
            out_plane,
        );
    };
    if work >= PAR_MIN_TAP_WORK && n * p.out_ch > 1 {
        out.par_chunks_mut(plane)
            .enumerate()
            .for_each(|(no, out_plane)| run_plane(no, out_plane));
    } else {
        for (no, out_plane) in out.chunks_mut(plane).enumerate() {
            run_plane(no, out_plane);
        }
    }
    Ok(Tensor::new(&[n, p.out_ch, h, w], out).expect("sized above"))
}

#[allow(clippy::too_many_arguments)]
fn forward_plane(
    input: &[f32],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[f32],
    bias: f32,
    o: usize,
    k: usize,
    dilation: usize,
    out_plane: &mut [f32],
) {
    let pad = (dilation * (k - 1) / 2) as isize;
    out_plane.fill(bias);
    for c in 0..c_in {
        let in_plane = &input[c * h * w..(c + 1) * h * w];
        for i in 0..k {
            let dy = (dilation * i) as isize - pad;
            for j in 0..k {
                let dx = (dilation * j) as isize - pad;
                let wgt = weights[((o * c_in + c) * k + i) * k + j];
                let (x0, x1) = valid_span(w, dx);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let iy = y as isize + dy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let in_row = &in_plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &in_row[(x0 as isize + dx) as usize..(x1 as isize + dx) as usize];
                    let dst = &mut out_plane[y * w + x0..y * w + x1];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += wgt * *s;
                    }
                }
            }
        }
    }
}

/// Exact adjoints of the forward pass for input, weights, and bias.
pub fn conv2d_backward(
    input: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
) -> Result<ConvGrads, LayerError> {
    let (n, c_in, h, w) = batch_dims(input)?;
    if c_in != p.in_ch {
        return Err(LayerError::ChannelMismatch {
            expected: p.in_ch,
            actual: c_in,
        });
    }
    if grad_out.shape() != [n, p.out_ch, h, w] {
        return Err(LayerError::ShapeMismatch {
            left: grad_out.shape().to_vec(),
            right: vec![n, p.out_ch, h, w],
        });
    }
    let (k, dilation, c_out) = (p.kernel, p.dilation, p.out_ch);
    let plane = h * w;
    let pad = (dilation * (k - 1) / 2) as isize;
    let g = grad_out.data();
    let x = input.data();

    let mut grad_bias = vec![0.0f32; c_out];
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        let mut acc = 0.0f32;
        for nb in 0..n {
            for &gv in &g[(nb * c_out + o) * plane..(nb * c_out + o + 1) * plane] {
                acc += gv;
            }
        }
        *gb = acc;
    }

    let work = n * c_out * plane * c_in * k * k;
    let parallel = work >= PAR_MIN_TAP_WORK;

    // grad_weights[o,c,i,j] = sum over valid (n,y,x) of g[n,o,y,x] * in[n,c,y+dy,x+dx]
    let mut grad_weights = vec![0.0f32; c_out * c_in * k * k];
    let weight_block = |oc: usize, gw: &mut [f32]| {
        let o = oc / c_in;
        let c = oc % c_in;
        for i in 0..k {
            let dy = (dilation * i) as isize - pad;
            for j in 0..k {
                let dx = (dilation * j) as isize - pad;
                let (x0, x1) = valid_span(w, dx);
                let mut acc = 0.0f32;
                if x0 < x1 {
                    for nb in 0..n {
                        let g_plane = &g[(nb * c_out + o) * plane..][..plane];
                        let in_plane = &x[(nb * c_in + c) * plane..][..plane];
                        for y in 0..h {
                            let iy = y as isize + dy;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let g_row = &g_plane[y * w + x0..y * w + x1];
                            let in_row = &in_plane[iy as usize * w..][..w];
                            let src =
                                &in_row[(x0 as isize + dx) as usize..(x1 as isize + dx) as usize];
                            for (gv, s) in g_row.iter().zip(src) {
                                acc += *gv * *s;
                            }
                        }
                    }
                }
                gw[i * k + j] = acc;
            }
        }
    };
    if parallel && c_out * c_in > 1 {
        grad_weights
            .par_chunks_mut(k * k)
            .enumerate()
            .for_each(|(oc, gw)| weight_block(oc, gw));
    } else {
        for (oc, gw) in grad_weights.chunks_mut(k * k).enumerate() {
            weight_block(oc, gw);
        }
    }

    // grad_input[n,c,y+dy,x+dx] += w[o,c,i,j] * g[n,o,y,x]
    let mut grad_input = vec![0.0f32; input.len()];
    let wt = p.weights.data();
    let input_plane = |nc: usize, gi_plane: &mut [f32]| {
        let nb = nc / c_in;
        let c = nc % c_in;
        for o in 0..c_out {
            let g_plane = &g[(nb * c_out + o) * plane..][..plane];
            for i in 0..k {
                let dy = (dilation * i) as isize - pad;
                for j in 0..k {
                    let dx = (dilation * j) as isize - pad;
                    let wgt = wt[((o * c_in + c) * k + i) * k + j];
                    let (x0, x1) = valid_span(w, dx);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in 0..h {
                        let iy = y as isize + dy;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let g_row = &g_plane[y * w + x0..y * w + x1];
                        let gi_row = &mut gi_plane[iy as usize * w..][..w];
                        let dst =
                            &mut gi_row[(x0 as isize + dx) as usize..(x1 as isize + dx) as usize];
                        for (d, gv) in dst.iter_mut().zip(g_row) {
                            *d += wgt * *gv;
                        }
                    }
                }
            }
        }
    };
    if parallel && n * c_in > 1 {
        grad_input
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(nc, gi)| input_plane(nc, gi));
    } else {
        for (nc, gi) in grad_input.chunks_mut(plane).enumerate() {
            input_plane(nc, gi);
        }
    }

    Ok(ConvGrads {
        input: Tensor::new(input.shape(), grad_input).expect("sized above"),
        weights: Tensor::new(p.weights.shape(), grad_weights).expect("sized above"),
        bias: Tensor::new(&[c_out], grad_bias).expect("sized above"),
    })
}
