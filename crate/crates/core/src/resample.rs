//! Bilinear resampling with pixel-center alignment and edge clamping.

use crate::grid::Grid;

/// Source coordinate and interpolation weight for one output index.
#[inline]
fn source_coord(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resample to `height x width`. Same-size input is returned
/// unchanged; outputs stay within the input's value range.
pub fn resize_bilinear(g: &Grid, height: usize, width: usize) -> Grid {
    assert!(height > 0 && width > 0, "target dimensions must be positive");
    if g.shape() == (height, width) {
        return g.clone();
    }
    let rows: Vec<_> = (0..height).map(|r| source_coord(r, g.height(), height)).collect();
    let cols: Vec<_> = (0..width).map(|c| source_coord(c, g.width(), width)).collect();
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    Grid::from_fn(height, width, |r, c| {
        let (r0, r1, tr) = rows[r];
        let (c0, c1, tc) = cols[c];
        let top = lerp(g.get(r0, c0), g.get(r0, c1), tc);
        let bottom = lerp(g.get(r1, c0), g.get(r1, c1), tc);
        lerp(top, bottom, tr)
    })
}

/// Output dimension for a scale factor, at least one pixel.
pub fn scaled_len(len: usize, factor: f64) -> usize {
    ((len as f64 * factor).round() as usize).max(1)
}
