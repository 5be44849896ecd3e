//! Tiling for rasters too large to hold in working memory at once.
//!
//! The canvas is reflect-padded on the right and bottom to multiples of the
//! tile size (mirror-bounce for padding wider than the image), then cut into
//! non-overlapping tiles. Stitching places tiles back and crops the padding,
//! reproducing the original exactly when tiles are unmodified.

use crate::image::ImageRgb;

#[derive(Debug, Clone)]
pub struct Tile {
    /// Top-left position in the padded canvas; always a multiple of the size.
    pub x: usize,
    pub y: usize,
    pub image: ImageRgb,
}

#[derive(Debug, Clone)]
pub struct TileGrid {
    pub tile_size: usize,
    pub width: usize,
    pub height: usize,
    pub padded_width: usize,
    pub padded_height: usize,
    pub tiles: Vec<Tile>,
}

/// Mirror-bounce a coordinate into [0, n); the reflection includes the edge
/// sample (period 2n).
fn reflect(coord: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let m = coord % period;
    if m < n {
        m
    } else {
        period - 1 - m
    }
}

pub fn tile(image: &ImageRgb, tile_size: usize) -> TileGrid {
    assert!(tile_size >= 1, "tile size must be positive");
    let (w, h) = (image.width(), image.height());
    let padded_width = w.div_ceil(tile_size) * tile_size;
    let padded_height = h.div_ceil(tile_size) * tile_size;

    let mut tiles = Vec::with_capacity((padded_width / tile_size) * (padded_height / tile_size));
    for ty in (0..padded_height).step_by(tile_size) {
        for tx in (0..padded_width).step_by(tile_size) {
            let mut pixels = Vec::with_capacity(tile_size * tile_size * 3);
            for y in ty..ty + tile_size {
                let sy = reflect(y, h);
                for x in tx..tx + tile_size {
                    let sx = reflect(x, w);
                    pixels.extend_from_slice(&image.pixel(sx, sy));
                }
            }
            tiles.push(Tile {
                x: tx,
                y: ty,
                image: ImageRgb::from_clamped(tile_size, tile_size, pixels),
            });
        }
    }
    TileGrid {
        tile_size,
        width: w,
        height: h,
        padded_width,
        padded_height,
        tiles,
    }
}

/// Reassembles the padded canvas from the tiles and crops the padding away.
pub fn stitch(grid: &TileGrid) -> ImageRgb {
    let mut canvas = vec![0.0f32; grid.padded_width * grid.padded_height * 3];
    for t in &grid.tiles {
        for y in 0..t.image.height() {
            let src_base = y * t.image.width() * 3;
            let dst_base = ((t.y + y) * grid.padded_width + t.x) * 3;
            canvas[dst_base..dst_base + t.image.width() * 3]
                .copy_from_slice(&t.image.pixels()[src_base..src_base + t.image.width() * 3]);
        }
    }
    let mut pixels = Vec::with_capacity(grid.width * grid.height * 3);
    for y in 0..grid.height {
        let base = y * grid.padded_width * 3;
        pixels.extend_from_slice(&canvas[base..base + grid.width * 3]);
    }
    ImageRgb::from_clamped(grid.width, grid.height, pixels)
}
