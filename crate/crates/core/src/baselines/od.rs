//! Optical density per channel: `od = -log10(max(I, 1) / 255)` with I0 = 255.
//! Stain mixing is approximately linear in this space (Beer-Lambert), which
//! is what lets Macenko treat stains as directions.

/// Per-channel OD of an 8-bit pixel. The floor of one intensity level avoids
/// log(0) for pure black.
pub fn rgb_to_od(rgb: [u8; 3]) -> [f32; 3] {
    rgb.map(|v| -((v.max(1) as f64 / 255.0).log10()) as f32)
}

/// Inverse map back to 8-bit: `I = round(255 * 10^-od)` clamped to [0, 255].
pub fn od_to_rgb(od: [f32; 3]) -> [u8; 3] {
    od.map(|d| (255.0 * 10f64.powf(-d as f64)).round().clamp(0.0, 255.0) as u8)
}

/// OD lookup for all 256 intensity levels; one table per conversion pass
/// keeps the per-pixel cost to an index.
pub(crate) fn od_table() -> [f32; 256] {
    let mut t = [0.0f32; 256];
    for (v, slot) in t.iter_mut().enumerate() {
        *slot = rgb_to_od([v as u8, 0, 0])[0];
    }
    t
}
