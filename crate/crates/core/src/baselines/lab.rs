//! Ruderman lab (l-alpha-beta) color space.
//!
//! RGB -> LMS through the fixed Reinhard matrix, log10 with a 1e-6 floor,
//! then the orthogonal lab rotation. The return path uses the exact inverse
//! of the forward LMS matrix (computed once) rather than the published
//! rounded constants, which keeps the round trip tight.

const RGB_TO_LMS: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

const LOG_FLOOR: f64 = 1e-6;

fn inverse3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = match r {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c1, c2) = match c {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let minor = m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            inv[c][r] = sign * minor * inv_det; // adjugate transpose
        }
    }
    inv
}

pub(crate) fn lms_to_rgb_matrix() -> [[f64; 3]; 3] {
    inverse3(RGB_TO_LMS)
}

const SQRT3: f64 = 1.732050807568877293;
const SQRT6: f64 = 2.449489742783178098;
const SQRT2: f64 = std::f64::consts::SQRT_2;

/// RGB in [0, 1] to Ruderman lab.
pub fn rgb_to_lab(rgb: [f32; 3]) -> [f32; 3] {
    let [r, g, b] = rgb.map(|v| v as f64);
    let mut log_lms = [0.0f64; 3];
    for (row, slot) in RGB_TO_LMS.iter().zip(&mut log_lms) {
        let v = row[0] * r + row[1] * g + row[2] * b;
        *slot = v.max(LOG_FLOOR).log10();
    }
    let [x, y, z] = log_lms;
    [
        ((x + y + z) / SQRT3) as f32,
        ((x + y - 2.0 * z) / SQRT6) as f32,
        ((x - y) / SQRT2) as f32,
    ]
}

/// Inverse of [`rgb_to_lab`]; may return values slightly outside [0, 1] for
/// out-of-gamut lab inputs (callers clamp).
pub fn lab_to_rgb(lab: [f32; 3]) -> [f32; 3] {
    lab_to_rgb_with(&lms_to_rgb_matrix(), lab)
}

/// Same as [`lab_to_rgb`] but with a caller-held inverse matrix so image
/// loops pay the inversion once.
pub(crate) fn lab_to_rgb_with(lms_to_rgb: &[[f64; 3]; 3], lab: [f32; 3]) -> [f32; 3] {
    let l = lab[0] as f64;
    let a = lab[1] as f64;
    let b = lab[2] as f64;
    let x = l / SQRT3 + a / SQRT6 + b / SQRT2;
    let y = l / SQRT3 + a / SQRT6 - b / SQRT2;
    let z = l / SQRT3 - 2.0 * a / SQRT6;
    let lms = [x, y, z].map(|v| 10f64.powf(v));
    let mut rgb = [0.0f32; 3];
    for (row, slot) in lms_to_rgb.iter().zip(&mut rgb) {
        *slot = (row[0] * lms[0] + row[1] * lms[1] + row[2] * lms[2]) as f32;
    }
    rgb
}
