//! Network inference over images of any size, in two application modes.
//!
//! Global mode (the default) reduces the predicted offset field to one
//! per-channel mean and adds it uniformly, which eliminates tile seams by
//! construction. Pixel mode adds the field elementwise. Either way the final
//! pixels are clamped to [0, 1] and that clamp is the only nonlinearity
//! applied after the offsets.
//!
//! Images above the memory threshold are processed tile-by-tile on windows
//! expanded by the model's receptive-field halo radius and zero-filled
//! outside the raster. Because the network's same-padding is also zero, the
//! cropped window outputs are bit-identical to a whole-image pass, and the
//! offset mean is accumulated with one fixed canonical block grouping, so
//! tiled and untiled execution produce bit-identical results at any thread
//! count.

use crate::image::ImageRgb;
use crate::model::{Model, ModelError};
use crate::tensor::Tensor;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetMode {
    /// One per-channel offset (the field's spatial mean) for the whole image.
    Global,
    /// The raw per-pixel field.
    Pixel,
}

#[derive(Debug, Clone, Copy)]
pub struct NormalizeOptions {
    /// Largest image (in pixels) sent through the network in one pass;
    /// larger rasters switch to halo-window tiling.
    pub max_pixels_per_pass: usize,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        Self {
            max_pixels_per_pass: 64 * 1024 * 1024,
        }
    }
}

/// Both the execution tile size and the canonical grouping of the offset-mean
/// reduction. Keeping them identical is what makes the tiled and untiled
/// paths agree bitwise.
const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

fn block_grid(width: usize, height: usize) -> Vec<Rect> {
    let mut rects = Vec::new();
    for y in (0..height).step_by(BLOCK) {
        for x in (0..width).step_by(BLOCK) {
            rects.push(Rect {
                x,
                y,
                w: BLOCK.min(width - x),
                h: BLOCK.min(height - y),
            });
        }
    }
    rects
}

/// Neumaier-compensated accumulator; used with a fixed summation order so the
/// reduction is independent of threading and execution tiling.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.c
    }
}

/// Per-channel compensated sums of a `(3, h, w)` offset tensor, rows in
/// order. This is the canonical within-block order.
fn block_channel_sums(offsets: &Tensor) -> [Compensated; 3] {
    let &[c, h, w] = offsets.shape() else {
        panic!("expected (3, h, w), got {:?}", offsets.shape());
    };
    debug_assert_eq!(c, 3);
    let mut sums = [Compensated::default(); 3];
    for ch in 0..3 {
        let plane = &offsets.data()[ch * h * w..(ch + 1) * h * w];
        for &v in plane {
            sums[ch].add(v as f64);
        }
    }
    sums
}

/// Extracts `(3, rect.h, rect.w)` out of a full `(3, H, W)` field.
fn crop_field(field: &Tensor, width: usize, height: usize, rect: Rect) -> Tensor {
    let mut data = vec![0.0f32; 3 * rect.h * rect.w];
    for ch in 0..3 {
        let plane = &field.data()[ch * height * width..(ch + 1) * height * width];
        for y in 0..rect.h {
            let src = &plane[(rect.y + y) * width + rect.x..][..rect.w];
            data[(ch * rect.h + y) * rect.w..][..rect.w].copy_from_slice(src);
        }
    }
    Tensor::new(&[3, rect.h, rect.w], data).expect("sized above")
}

/// Runs the network on the tile's halo-expanded window, clipped to the image,
/// and crops back to the tile. Where the window edge coincides with the image
/// edge the network's own zero padding applies exactly as in a whole-image
/// pass, and interior window edges only corrupt values inside the discarded
/// halo (the receptive-field cone of the tile never reaches them), so the
/// returned values equal the whole-image forward pass bit-for-bit.
fn infer_window(model: &Model, image: &ImageRgb, rect: Rect, halo: usize) -> Result<Tensor, ModelError> {
    let (iw, ih) = (image.width(), image.height());
    let wx0 = rect.x.saturating_sub(halo);
    let wy0 = rect.y.saturating_sub(halo);
    let wx1 = (rect.x + rect.w + halo).min(iw);
    let wy1 = (rect.y + rect.h + halo).min(ih);
    let (ww, wh) = (wx1 - wx0, wy1 - wy0);

    let mut data = vec![0.0f32; 3 * wh * ww];
    for ch in 0..3 {
        let plane = &mut data[ch * wh * ww..(ch + 1) * wh * ww];
        for wy in 0..wh {
            let src_base = ((wy0 + wy) * iw + wx0) * 3;
            let row = &mut plane[wy * ww..(wy + 1) * ww];
            for (i, v) in row.iter_mut().enumerate() {
                *v = image.pixels()[src_base + i * 3 + ch];
            }
        }
    }
    let input = Tensor::new(&[1, 3, wh, ww], data).expect("sized above");
    let out = model.infer(&input)?;
    let out3 = Tensor::new(&[3, wh, ww], out.into_data()).expect("same data");
    Ok(crop_field(
        &out3,
        ww,
        wh,
        Rect {
            x: rect.x - wx0,
            y: rect.y - wy0,
            w: rect.w,
            h: rect.h,
        },
    ))
}

/// Per-tile offset tensors in block-grid order, computed tile-parallel.
fn tiled_offsets(model: &Model, image: &ImageRgb) -> Result<Vec<Tensor>, ModelError> {
    let halo = model.halo_radius();
    let rects = block_grid(image.width(), image.height());
    rects
        .par_iter()
        .map(|&rect| infer_window(model, image, rect, halo))
        .collect()
}

/// Whole-image offset field as `(3, H, W)`.
fn full_offsets(model: &Model, image: &ImageRgb) -> Result<Tensor, ModelError> {
    let chw = image.to_chw();
    let (h, w) = (image.height(), image.width());
    let input = Tensor::new(&[1, 3, h, w], chw.into_data()).expect("same data");
    let out = model.infer(&input)?;
    Ok(Tensor::new(&[3, h, w], out.into_data()).expect("same data"))
}

/// Combines per-block channel sums in block order into the global mean.
fn finish_mean(block_sums: &[[Compensated; 3]], pixel_count: usize) -> [f32; 3] {
    let mut totals = [Compensated::default(); 3];
    for sums in block_sums {
        for ch in 0..3 {
            totals[ch].add(sums[ch].total());
        }
    }
    totals.map(|t| (t.total() / pixel_count as f64) as f32)
}

/// Applies the offset network to an image. Inference always uses running
/// statistics regardless of the model's mode flag.
pub fn normalize_colornormnet(
    model: &Model,
    image: &ImageRgb,
    mode: OffsetMode,
    opts: &NormalizeOptions,
) -> Result<ImageRgb, ModelError> {
    let (w, h) = (image.width(), image.height());
    let tiled = w * h > opts.max_pixels_per_pass;

    match mode {
        OffsetMode::Global => {
            let offset = global_offset(model, image, opts)?;
            let mut pixels = Vec::with_capacity(w * h * 3);
            for px in image.pixels().chunks_exact(3) {
                pixels.extend_from_slice(&[
                    (px[0] + offset[0]).clamp(0.0, 1.0),
                    (px[1] + offset[1]).clamp(0.0, 1.0),
                    (px[2] + offset[2]).clamp(0.0, 1.0),
                ]);
            }
            Ok(ImageRgb::from_clamped(w, h, pixels))
        }
        OffsetMode::Pixel => {
            let mut pixels = image.pixels().to_vec();
            if tiled {
                let rects = block_grid(w, h);
                let tiles = tiled_offsets(model, image)?;
                for (rect, off) in rects.into_iter().zip(tiles) {
                    for ch in 0..3 {
                        let plane = &off.data()[ch * rect.h * rect.w..(ch + 1) * rect.h * rect.w];
                        for y in 0..rect.h {
                            for x in 0..rect.w {
                                let p = &mut pixels[(((rect.y + y) * w) + rect.x + x) * 3 + ch];
                                *p = (*p + plane[y * rect.w + x]).clamp(0.0, 1.0);
                            }
                        }
                    }
                }
            } else {
                let field = full_offsets(model, image)?;
                for ch in 0..3 {
                    let plane = &field.data()[ch * h * w..(ch + 1) * h * w];
                    for (i, &v) in plane.iter().enumerate() {
                        let p = &mut pixels[i * 3 + ch];
                        *p = (*p + v).clamp(0.0, 1.0);
                    }
                }
            }
            Ok(ImageRgb::from_clamped(w, h, pixels))
        }
    }
}

/// The global offset alone (spatial mean of the predicted field), exposed for
/// evaluation and reporting.
pub fn global_offset(
    model: &Model,
    image: &ImageRgb,
    opts: &NormalizeOptions,
) -> Result<[f32; 3], ModelError> {
    let (w, h) = (image.width(), image.height());
    let block_sums: Vec<[Compensated; 3]> = if w * h > opts.max_pixels_per_pass {
        tiled_offsets(model, image)?
            .iter()
            .map(block_channel_sums)
            .collect()
    } else {
        let field = full_offsets(model, image)?;
        block_grid(w, h)
            .into_iter()
            .map(|rect| block_channel_sums(&crop_field(&field, w, h, rect)))
            .collect()
    };
    Ok(finish_mean(&block_sums, w * h))
}
