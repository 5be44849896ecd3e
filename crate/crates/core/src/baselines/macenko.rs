//! Macenko stain deconvolution.
//!
//! Tissue pixels (all OD components >= beta) are projected onto the plane of
//! the two leading eigenvectors of the OD covariance; the directions at the
//! 1st and 99th percentile of the in-plane angle are taken as the stain
//! vectors. Concentrations come from the least-squares inverse of the stain
//! matrix, scaled per stain by the ratio of 99th-percentile concentrations.
//!
//! Pixel set semantics: the kept OD triples are sorted before any
//! accumulation, so shuffling the input pixels cannot change the result even
//! at the bit level. Percentiles use the nearest-rank definition throughout.

use super::od::{od_table, od_to_rgb};
use super::BaselineError;
use crate::image::ImageRgb;
use serde::{Deserialize, Serialize};

/// Original method defaults, fixed for determinism.
pub const OD_THRESHOLD_BETA: f32 = 0.15;
pub const ANGLE_PERCENTILE_ALPHA: f64 = 1.0;
const MIN_TISSUE_PIXELS: usize = 100;
const DEGENERATE_EIGENRATIO: f64 = 1e-3;
const CONCENTRATION_PERCENTILE: f64 = 99.0;

/// Two unit OD-space stain directions plus per-stain concentration scales.
///
/// JSON fields: `columns` is `[[r,g,b], [r,g,b]]` (H then E, where E is the
/// column with the larger OD-red component), `max_concentration` is the
/// 99th-percentile concentration per stain in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StainModel {
    pub columns: [[f32; 3]; 2],
    pub max_concentration: [f32; 2],
}

impl StainModel {
    /// Column unit-norm / nonnegativity / positive-scale invariants.
    pub fn is_well_formed(&self) -> bool {
        self.columns.iter().all(|c| {
            let norm: f32 = c.iter().map(|v| v * v).sum::<f32>().sqrt();
            (norm - 1.0).abs() <= 1e-6 && c.iter().all(|&v| v >= 0.0)
        }) && self.max_concentration.iter().all(|&v| v > 0.0)
    }
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Cyclic Jacobi for a symmetric 3x3; returns eigenpairs sorted by descending
/// eigenvalue. Off-diagonal tolerance 1e-10.
fn jacobi_eigen_sym3(mut a: [[f64; 3]; 3]) -> [( f64, [f64; 3]); 3] {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..64 {
        let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
        if off < 1e-10 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in &mut v {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut pairs = [
        (a[0][0], [v[0][0], v[1][0], v[2][0]]),
        (a[1][1], [v[0][1], v[1][1], v[2][1]]),
        (a[2][2], [v[0][2], v[1][2], v[2][2]]),
    ];
    // descending by eigenvalue; ties keep index order for determinism
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).expect("finite eigenvalues"));
    pairs
}

/// Flip so the largest-magnitude component is positive (first index wins
/// ties); keeps eigenvector signs deterministic.
fn canonical_sign(mut v: [f64; 3]) -> [f64; 3] {
    let mut lead = 0;
    for i in 1..3 {
        if v[i].abs() > v[lead].abs() {
            lead = i;
        }
    }
    if v[lead] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

/// Nearest-rank percentile of an unsorted sample (mutates the slice order).
fn percentile_nearest_rank(values: &mut [f64], q: f64) -> f64 {
    let n = values.len();
    debug_assert!(n > 0);
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    let idx = rank.clamp(1, n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).expect("finite"));
    *v
}

/// Kept (tissue) OD triples of an image, sorted into canonical order.
fn tissue_od(image: &ImageRgb) -> Vec<[f32; 3]> {
    let table = od_table();
    let bytes = image.to_rgb8();
    let mut kept: Vec<[f32; 3]> = bytes
        .chunks_exact(3)
        .filter_map(|px| {
            let od = [
                table[px[0] as usize],
                table[px[1] as usize],
                table[px[2] as usize],
            ];
            (od[0] >= OD_THRESHOLD_BETA && od[1] >= OD_THRESHOLD_BETA && od[2] >= OD_THRESHOLD_BETA)
                .then_some(od)
        })
        .collect();
    kept.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite OD"));
    kept
}

/// Least-squares inverse rows of a 3x2 stain matrix: `c = P * od`.
fn pseudo_inverse_rows(columns: &[[f64; 3]; 2]) -> Result<[[f64; 3]; 2], BaselineError> {
    let g00 = dot3(columns[0], columns[0]);
    let g01 = dot3(columns[0], columns[1]);
    let g11 = dot3(columns[1], columns[1]);
    let det = g00 * g11 - g01 * g01;
    if det.abs() < 1e-9 {
        return Err(BaselineError::DegenerateStain(
            "stain directions are numerically parallel",
        ));
    }
    let inv = [[g11 / det, -g01 / det], [-g01 / det, g00 / det]];
    let mut p = [[0.0; 3]; 2];
    for r in 0..2 {
        for k in 0..3 {
            p[r][k] = inv[r][0] * columns[0][k] + inv[r][1] * columns[1][k];
        }
    }
    Ok(p)
}

pub fn estimate_stain_macenko(image: &ImageRgb) -> Result<StainModel, BaselineError> {
    let kept = tissue_od(image);
    if kept.len() < MIN_TISSUE_PIXELS {
        return Err(BaselineError::InsufficientTissue {
            pixels: kept.len(),
            required: MIN_TISSUE_PIXELS,
        });
    }

    // covariance of the kept OD triples (canonical order fixed by the sort)
    let n = kept.len() as f64;
    let mut mean = [0.0f64; 3];
    for od in &kept {
        for c in 0..3 {
            mean[c] += od[c] as f64;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = [[0.0f64; 3]; 3];
    for od in &kept {
        let d = [
            od[0] as f64 - mean[0],
            od[1] as f64 - mean[1],
            od[2] as f64 - mean[2],
        ];
        for r in 0..3 {
            for c in r..3 {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    for r in 0..3 {
        for c in r..3 {
            cov[r][c] /= n;
            cov[c][r] = cov[r][c];
        }
    }

    let eig = jacobi_eigen_sym3(cov);
    if eig[0].0 <= 0.0 || eig[1].0 < DEGENERATE_EIGENRATIO * eig[0].0 {
        return Err(BaselineError::DegenerateStain(
            "OD covariance is effectively rank one (single stain)",
        ));
    }
    let e1 = canonical_sign(eig[0].1);
    let e2 = canonical_sign(eig[1].1);

    let mut angles: Vec<f64> = kept
        .iter()
        .map(|od| {
            let o = [od[0] as f64, od[1] as f64, od[2] as f64];
            dot3(o, e2).atan2(dot3(o, e1))
        })
        .collect();
    let phi_lo = percentile_nearest_rank(&mut angles, ANGLE_PERCENTILE_ALPHA);
    let phi_hi = percentile_nearest_rank(&mut angles, 100.0 - ANGLE_PERCENTILE_ALPHA);

    let direction = |phi: f64| -> Result<[f64; 3], BaselineError> {
        let mut v = [0.0f64; 3];
        for c in 0..3 {
            v[c] = phi.cos() * e1[c] + phi.sin() * e2[c];
        }
        if v.iter().sum::<f64>() < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        for x in &mut v {
            *x = x.max(0.0);
        }
        let norm = dot3(v, v).sqrt();
        if norm < 1e-9 {
            return Err(BaselineError::DegenerateStain(
                "extreme-angle direction vanished after nonnegative projection",
            ));
        }
        Ok(v.map(|x| x / norm))
    };
    let d_lo = direction(phi_lo)?;
    let d_hi = direction(phi_hi)?;
    if dot3(d_lo, d_hi) > (0.5f64).to_radians().cos() {
        return Err(BaselineError::DegenerateStain(
            "extreme-angle directions are nearly identical",
        ));
    }

    // E is the column with the larger OD-red component
    let (h_col, e_col) = if d_lo[0] >= d_hi[0] {
        (d_hi, d_lo)
    } else {
        (d_lo, d_hi)
    };
    let columns = [h_col, e_col];

    let p = pseudo_inverse_rows(&columns)?;
    let mut c0: Vec<f64> = Vec::with_capacity(kept.len());
    let mut c1: Vec<f64> = Vec::with_capacity(kept.len());
    for od in &kept {
        let o = [od[0] as f64, od[1] as f64, od[2] as f64];
        c0.push(dot3(o, p[0]));
        c1.push(dot3(o, p[1]));
    }
    let max0 = percentile_nearest_rank(&mut c0, CONCENTRATION_PERCENTILE);
    let max1 = percentile_nearest_rank(&mut c1, CONCENTRATION_PERCENTILE);
    if max0 <= 0.0 || max1 <= 0.0 {
        return Err(BaselineError::DegenerateStain(
            "non-positive 99th-percentile concentration",
        ));
    }

    Ok(StainModel {
        columns: [columns[0].map(|v| v as f32), columns[1].map(|v| v as f32)],
        max_concentration: [max0 as f32, max1 as f32],
    })
}

/// Projects every source pixel into the source stain basis, rescales each
/// stain's concentration to the target's scale, and reconstructs through the
/// target stain matrix. Background (OD near zero) maps to itself.
pub fn normalize_macenko(source: &ImageRgb, target: &StainModel) -> Result<ImageRgb, BaselineError> {
    let src = estimate_stain_macenko(source)?;
    let src_cols = [src.columns[0].map(|v| v as f64), src.columns[1].map(|v| v as f64)];
    let p = pseudo_inverse_rows(&src_cols)?;
    let p32 = [p[0].map(|v| v as f32), p[1].map(|v| v as f32)];
    let tgt = [&target.columns[0], &target.columns[1]];
    let scale = [
        target.max_concentration[0] / src.max_concentration[0],
        target.max_concentration[1] / src.max_concentration[1],
    ];

    let table = od_table();
    let bytes = source.to_rgb8();
    let mut out = vec![0u8; bytes.len()];
    for (src_px, dst_px) in bytes.chunks_exact(3).zip(out.chunks_exact_mut(3)) {
        let od = [
            table[src_px[0] as usize],
            table[src_px[1] as usize],
            table[src_px[2] as usize],
        ];
        let mut c = [
            p32[0][0] * od[0] + p32[0][1] * od[1] + p32[0][2] * od[2],
            p32[1][0] * od[0] + p32[1][1] * od[1] + p32[1][2] * od[2],
        ];
        c[0] *= scale[0];
        c[1] *= scale[1];
        let od_new = [
            tgt[0][0] * c[0] + tgt[1][0] * c[1],
            tgt[0][1] * c[0] + tgt[1][1] * c[1],
            tgt[0][2] * c[0] + tgt[1][2] * c[1],
        ];
        dst_px.copy_from_slice(&od_to_rgb(od_new));
    }
    Ok(ImageRgb::from_rgb8(source.width(), source.height(), &out).expect("sized above"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::synth;

    fn angle_deg(a: [f32; 3], b: [f32; 3]) -> f64 {
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| *x as f64 * *y as f64).sum();
        dot.clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// Synthetic image whose OD is exactly M*c for known M: mixture pixels
    /// plus explicitly pure pixels of each stain, plus white background.
    fn synthetic_od_image(seed: u64, w: usize, h: usize) -> ImageRgb {
        let m = synth::reference_stains();
        let mut rng = Rng::new(seed);
        let mut bytes = Vec::with_capacity(w * h * 3);
        for _ in 0..w * h {
            let roll = rng.index(100);
            let (ch, ce) = if roll < 4 {
                (rng.uniform_in(0.7, 1.5), 0.0) // pure hematoxylin-like
            } else if roll < 8 {
                (0.0, rng.uniform_in(0.9, 1.6)) // pure eosin-like
            } else if roll < 16 {
                (0.0, 0.0) // background
            } else {
                (rng.uniform_in(0.15, 1.3), rng.uniform_in(0.15, 1.2))
            };
            let od = [
                ch * m[0][0] as f64 + ce * m[1][0] as f64,
                ch * m[0][1] as f64 + ce * m[1][1] as f64,
                ch * m[0][2] as f64 + ce * m[1][2] as f64,
            ];
            bytes.extend_from_slice(&od_to_rgb(od.map(|v| v as f32)));
        }
        ImageRgb::from_rgb8(w, h, &bytes).unwrap()
    }

    #[test]
    fn recovers_known_stain_matrix_within_2_degrees() {
        let img = synthetic_od_image(42, 256, 256);
        let model = estimate_stain_macenko(&img).unwrap();
        assert!(model.is_well_formed());
        let truth = synth::reference_stain_model_columns();
        for (got, want) in model.columns.iter().zip(&truth) {
            let deg = angle_deg(*got, *want);
            assert!(deg < 2.0, "angular error {deg:.3} degrees");
        }
    }

    #[test]
    fn estimation_is_pixel_order_invariant() {
        let img = synthetic_od_image(7, 64, 64);
        let a = estimate_stain_macenko(&img).unwrap();

        // rebuild the image with pixels shuffled
        let bytes = img.to_rgb8();
        let mut px: Vec<[u8; 3]> = bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let mut rng = Rng::new(99);
        for i in (1..px.len()).rev() {
            px.swap(i, rng.index(i + 1));
        }
        let shuffled: Vec<u8> = px.into_iter().flatten().collect();
        let img2 = ImageRgb::from_rgb8(64, 64, &shuffled).unwrap();
        let b = estimate_stain_macenko(&img2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn repeated_estimation_is_bit_identical() {
        let img = synthetic_od_image(3, 64, 64);
        assert_eq!(
            estimate_stain_macenko(&img).unwrap(),
            estimate_stain_macenko(&img).unwrap()
        );
    }

    #[test]
    fn all_white_image_has_insufficient_tissue() {
        let img = ImageRgb::from_clamped(32, 32, vec![1.0; 32 * 32 * 3]);
        assert!(matches!(
            estimate_stain_macenko(&img).unwrap_err(),
            BaselineError::InsufficientTissue { pixels: 0, .. }
        ));
    }

    #[test]
    fn single_stain_image_is_degenerate() {
        let m = synth::reference_stains();
        let mut rng = Rng::new(5);
        let mut bytes = Vec::new();
        for _ in 0..64 * 64 {
            let ch = rng.uniform_in(0.6, 1.6);
            let od = [
                (ch * m[0][0] as f64) as f32,
                (ch * m[0][1] as f64) as f32,
                (ch * m[0][2] as f64) as f32,
            ];
            bytes.extend_from_slice(&od_to_rgb(od));
        }
        let img = ImageRgb::from_rgb8(64, 64, &bytes).unwrap();
        assert!(matches!(
            estimate_stain_macenko(&img).unwrap_err(),
            BaselineError::DegenerateStain(_)
        ));
    }

    #[test]
    fn self_normalization_is_near_identity() {
        let img = synthetic_od_image(11, 128, 128);
        let model = estimate_stain_macenko(&img).unwrap();
        let out = normalize_macenko(&img, &model).unwrap();
        let a = img.to_rgb8();
        let b = out.to_rgb8();
        let within_one = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| (**x as i16 - **y as i16).abs() <= 1)
            .count();
        let frac = within_one as f64 / a.len() as f64;
        assert!(frac >= 0.99, "only {frac:.4} of channel values within 1 level");
    }

    #[test]
    fn white_pixels_stay_white() {
        let img = synthetic_od_image(13, 64, 64);
        let model = estimate_stain_macenko(&img).unwrap();
        let out = normalize_macenko(&img, &model).unwrap();
        for (px_in, px_out) in img.to_rgb8().chunks_exact(3).zip(out.to_rgb8().chunks_exact(3)) {
            if px_in == [255, 255, 255] {
                assert_eq!(px_out, [255, 255, 255]);
            }
        }
    }

    #[test]
    fn concentration_rescaling_aligns_two_densities() {
        // same stain geometry, different concentration scales: after
        // normalizing both to one target they should agree closely
        let base = synthetic_od_image(21, 96, 96);
        let m = synth::reference_stains();
        let mut rng = Rng::new(21); // same draws as synthetic_od_image(21, ..)
        let mut bytes = Vec::new();
        for _ in 0..96 * 96 {
            let roll = rng.index(100);
            let (ch, ce) = if roll < 4 {
                (rng.uniform_in(0.7, 1.5), 0.0)
            } else if roll < 8 {
                (0.0, rng.uniform_in(0.9, 1.6))
            } else if roll < 16 {
                (0.0, 0.0)
            } else {
                (rng.uniform_in(0.15, 1.3), rng.uniform_in(0.15, 1.2))
            };
            // second image: 75% of the first image's concentrations
            let (ch, ce) = (ch * 0.75, ce * 0.75);
            let od = [
                ch * m[0][0] as f64 + ce * m[1][0] as f64,
                ch * m[0][1] as f64 + ce * m[1][1] as f64,
                ch * m[0][2] as f64 + ce * m[1][2] as f64,
            ];
            bytes.extend_from_slice(&od_to_rgb(od.map(|v| v as f32)));
        }
        let scaled = ImageRgb::from_rgb8(96, 96, &bytes).unwrap();

        let target = estimate_stain_macenko(&base).unwrap();
        let n_base = normalize_macenko(&base, &target).unwrap();
        let n_scaled = normalize_macenko(&scaled, &target).unwrap();
        let a = n_base.to_rgb8();
        let b = n_scaled.to_rgb8();
        let close = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| (**x as i16 - **y as i16).abs() <= 2)
            .count();
        let frac = close as f64 / a.len() as f64;
        assert!(frac >= 0.98, "only {frac:.4} of channel values within 2 levels");
    }
}
