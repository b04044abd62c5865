#![allow(dead_code)]

use eptrace::{BinaryMask, BoundingBox, Grid, PointRC};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    eptrace::seed::rng(seed)
}

pub fn random_grid(r: &mut impl Rng, h: usize, w: usize, lo: f64, hi: f64) -> Grid {
    Grid::from_fn(h, w, |_, _| r.random_range(lo..hi))
}

pub fn random_mask(r: &mut impl Rng, h: usize, w: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(h, w, |_, _| r.random_bool(density))
}

pub fn disk(h: usize, w: usize, cr: f64, cc: f64, radius: f64) -> BinaryMask {
    BinaryMask::from_fn(h, w, |r, c| {
        let (dr, dc) = (r as f64 - cr, c as f64 - cc);
        dr * dr + dc * dc <= radius * radius
    })
}

/// Edge weight written out independently of the library: mean of the two
/// pixel costs, times sqrt(2) on diagonal steps when `geometric`.
fn step_cost(cost: &Grid, a: PointRC, b: PointRC, geometric: bool) -> f64 {
    let mean = (cost.get(a.row, a.col) + cost.get(b.row, b.col)) / 2.0;
    if geometric && a.row != b.row && a.col != b.col {
        mean * std::f64::consts::SQRT_2
    } else {
        mean
    }
}

/// Minimum path cost by depth-first enumeration of simple 8-connected paths
/// inside `bbox`, pruned with the best total found so far and a Chebyshev
/// lower bound.
pub fn brute_force_path_cost(cost: &Grid, src: PointRC, dst: PointRC, bbox: &BoundingBox, geometric: bool) -> f64 {
    let min_cost = bbox_cells(bbox)
        .map(|p| cost.get(p.row, p.col))
        .fold(f64::INFINITY, f64::min);
    let w = cost.width();
    let mut visited = vec![false; cost.len()];
    visited[src.row * w + src.col] = true;
    let mut best = f64::INFINITY;
    dfs(cost, src, dst, bbox, geometric, min_cost, 0.0, &mut visited, &mut best);
    best
}

fn bbox_cells(b: &BoundingBox) -> impl Iterator<Item = PointRC> + '_ {
    (b.row_min..=b.row_max).flat_map(move |r| (b.col_min..=b.col_max).map(move |c| PointRC::new(r, c)))
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    cost: &Grid,
    at: PointRC,
    dst: PointRC,
    bbox: &BoundingBox,
    geometric: bool,
    min_cost: f64,
    acc: f64,
    visited: &mut [bool],
    best: &mut f64,
) {
    if at == dst {
        if acc < *best {
            *best = acc;
        }
        return;
    }
    let remaining = at.row.abs_diff(dst.row).max(at.col.abs_diff(dst.col)) as f64;
    if acc + remaining * min_cost * (1.0 - 1e-9) > *best {
        return;
    }
    let w = cost.width();
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (r, c) = (at.row as i64 + dr, at.col as i64 + dc);
            if r < bbox.row_min as i64 || r > bbox.row_max as i64 || c < bbox.col_min as i64 || c > bbox.col_max as i64
            {
                continue;
            }
            let next = PointRC::new(r as usize, c as usize);
            let idx = next.row * w + next.col;
            if visited[idx] {
                continue;
            }
            visited[idx] = true;
            let step = step_cost(cost, at, next, geometric);
            dfs(cost, next, dst, bbox, geometric, min_cost, acc + step, visited, best);
            visited[idx] = false;
        }
    }
}

/// Tight box by scanning every pixel.
pub fn brute_force_box(m: &BinaryMask) -> Option<(usize, usize, usize, usize)> {
    let mut out: Option<(usize, usize, usize, usize)> = None;
    for p in m.foreground() {
        out = Some(match out {
            None => (p.row, p.row, p.col, p.col),
            Some((r0, r1, c0, c1)) => (r0.min(p.row), r1.max(p.row), c0.min(p.col), c1.max(p.col)),
        });
    }
    out
}

/// Central finite-difference gradient of `f` with respect to `x`.
pub fn numeric_gradient(x: &Grid, h: f64, mut f: impl FnMut(&Grid) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let v = x.values()[i];
            probe.values_mut()[i] = v + h;
            let up = f(&probe);
            probe.values_mut()[i] = v - h;
            let down = f(&probe);
            probe.values_mut()[i] = v;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest per-element relative error `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Smallest gap between the largest and second-largest value of any row or
/// column, and between row and column maxima held by different pixels.
/// Instances with a small margin sit near a kink of the box projection.
pub fn projection_margin(p: &Grid) -> f64 {
    let (h, w) = p.shape();
    let top2 = |vals: Vec<(usize, f64)>| {
        let mut v = vals;
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        (v[0].0, v[0].1, v[0].1 - v[1].1)
    };
    let rows: Vec<_> = (0..h)
        .map(|r| top2((0..w).map(|c| (c, p.get(r, c))).collect()))
        .collect();
    let cols: Vec<_> = (0..w)
        .map(|c| top2((0..h).map(|r| (r, p.get(r, c))).collect()))
        .collect();
    let mut margin = f64::INFINITY;
    for &(_, _, gap) in rows.iter().chain(&cols) {
        margin = margin.min(gap);
    }
    for (r, &(rc, rmax, _)) in rows.iter().enumerate() {
        for (c, &(cr, cmax, _)) in cols.iter().enumerate() {
            let same_pixel = (r, rc) == (cr, c);
            if !same_pixel {
                margin = margin.min((rmax - cmax).abs());
            }
        }
    }
    margin
}

/// Mean and population variance per pixel by straightforward two-pass sums.
pub fn brute_force_stats(layers: &[Grid]) -> (Grid, Grid) {
    let t = layers.len() as f64;
    let (h, w) = layers[0].shape();
    let mean = Grid::from_fn(h, w, |r, c| layers.iter().map(|l| l.get(r, c)).sum::<f64>() / t);
    let var = Grid::from_fn(h, w, |r, c| {
        let m = mean.get(r, c);
        layers.iter().map(|l| (l.get(r, c) - m).powi(2)).sum::<f64>() / t
    });
    (mean, var)
}

/// Sobel magnitude with replicate padding, computed by explicit 3x3 kernels.
pub fn brute_force_sobel(mu: &Grid) -> Grid {
    let (h, w) = mu.shape();
    let at = |r: i64, c: i64| mu.get(r.clamp(0, h as i64 - 1) as usize, c.clamp(0, w as i64 - 1) as usize);
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let ky = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    Grid::from_fn(h, w, |r, c| {
        let (mut gx, mut gy) = (0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let v = at(r as i64 + i as i64 - 1, c as i64 + j as i64 - 1);
                gx += kx[i][j] * v;
                gy += ky[i][j] * v;
            }
        }
        (gx * gx + gy * gy).sqrt()
    })
}

pub fn rotate90(g: &Grid) -> Grid {
    let (h, w) = g.shape();
    Grid::from_fn(w, h, |r, c| g.get(h - 1 - c, r))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
