//! In-memory RGB raster: H x W x 3 interleaved f32 values in [0, 1].
//!
//! 8-bit payloads convert in by `v / 255` and out by `round(v * 255)` clamped
//! to [0, 255]; the pair is lossless for 8-bit sources, which is what makes
//! the codec round trips bit-exact.

use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("pixel buffer holds {actual} values but {width}x{height}x3 needs {expected}")]
    LengthMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl ImageRgb {
    /// Validating constructor: values must already be finite and in [0, 1].
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        for (index, &value) in pixels.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ImageError::OutOfRange { index, value });
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Clamps values into [0, 1]; used where an additive correction may have
    /// pushed pixels slightly outside the range.
    pub fn from_clamped(width: usize, height: usize, mut pixels: Vec<f32>) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        assert_eq!(pixels.len(), width * height * 3, "pixel count");
        for v in &mut pixels {
            *v = v.clamp(0.0, 1.0);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        let expected = width * height * 3;
        if bytes.len() != expected {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                expected,
                actual: bytes.len(),
            });
        }
        let pixels = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Interleaved H x W x 3 values.
    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let base = (y * self.width + x) * 3;
        [self.pixels[base], self.pixels[base + 1], self.pixels[base + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let base = (y * self.width + x) * 3;
        self.pixels[base..base + 3].copy_from_slice(&rgb);
    }

    /// Channels-first copy `(3, H, W)` for feeding the network.
    pub fn to_chw(&self) -> Tensor {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0f32; 3 * h * w];
        for c in 0..3 {
            let plane = &mut data[c * h * w..(c + 1) * h * w];
            for (i, px) in self.pixels.chunks_exact(3).enumerate() {
                plane[i] = px[c];
            }
        }
        Tensor::new(&[3, h, w], data).expect("sized above")
    }

    /// Rebuilds an image from a `(3, H, W)` tensor, clamping into [0, 1].
    pub fn from_chw_clamped(tensor: &Tensor) -> Self {
        let &[c, h, w] = tensor.shape() else {
            panic!("expected (3, H, W), got {:?}", tensor.shape());
        };
        assert_eq!(c, 3, "expected 3 channels");
        let mut pixels = vec![0.0f32; h * w * 3];
        for ch in 0..3 {
            let plane = &tensor.data()[ch * h * w..(ch + 1) * h * w];
            for (i, &v) in plane.iter().enumerate() {
                pixels[i * 3 + ch] = v.clamp(0.0, 1.0);
            }
        }
        Self {
            width: w,
            height: h,
            pixels,
        }
    }

    /// Copies the `size` x `size` patch whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> ImageRgb {
        assert!(x + w <= self.width && y + h <= self.height, "crop out of bounds");
        let mut pixels = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let base = (row * self.width + x) * 3;
            pixels.extend_from_slice(&self.pixels[base..base + w * 3]);
        }
        ImageRgb {
            width: w,
            height: h,
            pixels,
        }
    }

    /// Rec. 601 luma of the mean pixel, used by the tissue filter.
    pub fn mean_luminance(&self) -> f32 {
        let mut sums = [0.0f64; 3];
        for px in self.pixels.chunks_exact(3) {
            sums[0] += px[0] as f64;
            sums[1] += px[1] as f64;
            sums[2] += px[2] as f64;
        }
        let n = self.pixel_count() as f64;
        ((0.299 * sums[0] + 0.587 * sums[1] + 0.114 * sums[2]) / n) as f32
    }
}
