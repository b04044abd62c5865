//! Gradient and cost maps, minimum-cost paths between extreme points, and
//! closed-contour fill into a pseudo label.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bbox_from_extreme_points, neighbors4, BinaryMask, BoundingBox, ExtremePoints, Grid, PointRC};

/// Default epsilon in the cost denominator.
pub const DEFAULT_COST_EPS: f64 = 1e-6;
/// Default dilation of the extreme-point box that confines path search.
pub const DEFAULT_MARGIN: usize = 2;

/// Sobel gradient magnitude with replicate padding and unnormalized kernels.
pub fn sobel_gradient(mu: &Grid) -> Result<Grid> {
    let (h, w) = mu.shape();
    if h < 3 || w < 3 {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            min: 3,
        });
    }
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        mu.get(r, c)
    };
    // (a + c) + 2b: symmetric in a and c
    let tri = |a: f64, b: f64, c: f64| (a + c) + 2.0 * b;
    Ok(Grid::from_fn(h, w, |r, c| {
        let (r, c) = (r as isize, c as isize);
        let gx = tri(at(r - 1, c + 1), at(r, c + 1), at(r + 1, c + 1))
            - tri(at(r - 1, c - 1), at(r, c - 1), at(r + 1, c - 1));
        let gy = tri(at(r + 1, c - 1), at(r + 1, c), at(r + 1, c + 1))
            - tri(at(r - 1, c - 1), at(r - 1, c), at(r - 1, c + 1));
        (gx * gx + gy * gy).sqrt()
    }))
}

/// Strictly positive per-pixel traversal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    grid: Grid,
    alpha: Option<f64>,
    eps: Option<f64>,
}

impl CostMap {
    /// Wraps an arbitrary positive grid, e.g. one read back from disk.
    pub fn from_values(grid: Grid) -> Result<Self> {
        if let Some(&bad) = grid.values().iter().find(|&&v| v <= 0.0) {
            return Err(Error::ValueRange {
                what: "cost",
                value: bad,
            });
        }
        Ok(Self {
            grid,
            alpha: None,
            eps: None,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn eps(&self) -> Option<f64> {
        self.eps
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    /// Multiply every cost by `k > 0`.
    pub fn scaled(&self, k: f64) -> Result<CostMap> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::ValueRange {
                what: "cost scale",
                value: k,
            });
        }
        CostMap::from_values(self.grid.map(|v| v * k))
    }
}

/// `1 / (G + alpha * U + eps)` per pixel.
pub fn build_cost_map(gradient: &Grid, uncertainty: &Grid, alpha: f64, eps: f64) -> Result<CostMap> {
    gradient.ensure_same_shape(uncertainty.shape())?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::ValueRange {
            what: "alpha",
            value: alpha,
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::ValueRange {
            what: "cost eps",
            value: eps,
        });
    }
    if let Some(&bad) = gradient.values().iter().find(|&&g| g < 0.0) {
        return Err(Error::ValueRange {
            what: "gradient",
            value: bad,
        });
    }
    uncertainty.ensure_probabilities("uncertainty")?;
    let data = gradient
        .values()
        .iter()
        .zip(uncertainty.values())
        .map(|(&g, &u)| 1.0 / (g + alpha * u + eps))
        .collect();
    Ok(CostMap {
        grid: Grid::from_vec_unchecked(gradient.height(), gradient.width(), data),
        alpha: Some(alpha),
        eps: Some(eps),
    })
}

/// How a diagonal step is weighted relative to an axial one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLength {
    /// Diagonal steps cost `sqrt(2)` times the averaged pixel cost.
    #[default]
    Geometric,
    /// Every step costs the averaged pixel cost.
    Uniform,
}

/// Cost of moving between two adjacent pixels.
#[inline]
pub fn edge_cost(cost_i: f64, cost_j: f64, diagonal: bool, geometric: bool) -> f64 {
    let base = (cost_i + cost_j) / 2.0;
    if diagonal && geometric {
        base * std::f64::consts::SQRT_2
    } else {
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelPath {
    pub points: Vec<PointRC>,
    pub total_cost: f64,
}

impl PixelPath {
    pub fn source(&self) -> PointRC {
        self.points[0]
    }

    pub fn target(&self) -> PointRC {
        self.points[self.points.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    index: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // reversed: cheapest first, then smallest (row, col)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const STEPS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Dijkstra over the 8-connected pixel graph restricted to `search_box`.
///
/// Frontier ties pop the smaller `(row, col)` first and predecessors change
/// only on strict improvement, so the returned path is reproducible.
pub fn min_cost_path(
    cost: &CostMap,
    src: PointRC,
    dst: PointRC,
    search_box: &BoundingBox,
    step: StepLength,
) -> Result<PixelPath> {
    let (h, w) = cost.shape();
    if !search_box.fits(h, w) {
        return Err(Error::out_of_bounds(format!("search box {search_box:?}"), h, w));
    }
    for p in [src, dst] {
        if !search_box.contains(p) {
            return Err(Error::out_of_bounds(
                format!("point ({}, {}) outside search box {search_box:?}", p.row, p.col),
                h,
                w,
            ));
        }
    }
    let geometric = step == StepLength::Geometric;
    let (r0, c0) = (search_box.row_min, search_box.col_min);
    let (bh, bw) = (search_box.height(), search_box.width());
    let local = |p: PointRC| (p.row - r0) * bw + (p.col - c0);
    let pixel_cost = |i: usize| cost.grid.get(r0 + i / bw, c0 + i % bw);

    let n = bh * bw;
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let (s, t) = (local(src), local(dst));
    dist[s] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Frontier { cost: 0.0, index: s });

    while let Some(Frontier { cost: d, index: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == t {
            break;
        }
        let (ur, uc) = ((u / bw) as isize, (u % bw) as isize);
        let cu = pixel_cost(u);
        for (dr, dc) in STEPS {
            let (vr, vc) = (ur + dr, uc + dc);
            if vr < 0 || vc < 0 || vr >= bh as isize || vc >= bw as isize {
                continue;
            }
            let v = vr as usize * bw + vc as usize;
            if done[v] {
                continue;
            }
            let nd = d + edge_cost(cu, pixel_cost(v), dr != 0 && dc != 0, geometric);
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = u;
                heap.push(Frontier { cost: nd, index: v });
            }
        }
    }

    if !done[t] {
        return Err(Error::Unreachable((src.row, src.col), (dst.row, dst.col)));
    }
    let mut points = vec![dst];
    let mut cur = t;
    while cur != s {
        cur = pred[cur];
        points.push(PointRC::new(r0 + cur / bw, c0 + cur % bw));
    }
    points.reverse();
    Ok(PixelPath {
        points,
        total_cost: dist[t],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub margin: usize,
    pub step: StepLength,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            step: StepLength::default(),
        }
    }
}

/// Everything produced while tracing one pseudo label.
#[derive(Debug, Clone)]
pub struct TracedContour {
    /// Contour plus enclosed area.
    pub mask: BinaryMask,
    /// The 4-connected closed contour alone.
    pub contour: BinaryMask,
    /// Top→Right, Right→Bottom, Bottom→Left, Left→Top.
    pub paths: Vec<PixelPath>,
    pub search_box: BoundingBox,
    /// The extreme points span a single row or column; `mask` is then the
    /// path pixels alone.
    pub degenerate: bool,
}

/// Traces the closed contour Top→Right→Bottom→Left→Top and fills it.
pub fn trace_contour(cost: &CostMap, ep: &ExtremePoints, opts: &TraceOptions) -> Result<TracedContour> {
    let (h, w) = cost.shape();
    ep.validate()?;
    ep.ensure_within(h, w)?;
    let bbox = bbox_from_extreme_points(ep);
    let search_box = bbox.dilate(opts.margin, h, w);
    let degenerate = bbox.height() == 1 || bbox.width() == 1;

    let corners = ep.clockwise();
    let mut paths = Vec::with_capacity(4);
    let mut contour = BinaryMask::empty(h, w);
    for k in 0..4 {
        let path = min_cost_path(cost, corners[k], corners[(k + 1) % 4], &search_box, opts.step)?;
        mark_path_4connected(&path, &mut contour);
        paths.push(path);
    }

    let mask = if degenerate {
        contour.clone()
    } else {
        fill_enclosed(&contour, &search_box)
    };
    Ok(TracedContour {
        mask,
        contour,
        paths,
        search_box,
        degenerate,
    })
}

/// Pseudo label from the extreme points, using geometric steps.
pub fn trace_pseudo_label(cost: &CostMap, ep: &ExtremePoints, margin: usize) -> Result<BinaryMask> {
    let opts = TraceOptions {
        margin,
        ..TraceOptions::default()
    };
    Ok(trace_contour(cost, ep, &opts)?.mask)
}

// Every diagonal step also marks one of the two pixels it cuts past, which
// makes the contour 4-connected. On a clockwise traversal the pixel on the
// right-hand side of travel (the interior side) is chosen.
fn mark_path_4connected(path: &PixelPath, contour: &mut BinaryMask) {
    for p in &path.points {
        contour.set(p.row, p.col, true);
    }
    for pair in path.points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let dr = b.row as isize - a.row as isize;
        let dc = b.col as isize - a.col as isize;
        if dr != 0 && dc != 0 {
            let fill = if dr * dc > 0 {
                PointRC::new(b.row, a.col)
            } else {
                PointRC::new(a.row, b.col)
            };
            contour.set(fill.row, fill.col, true);
        }
    }
}

/// Foreground = contour plus every box pixel that a 4-connected flood from
/// the box border cannot reach without crossing the contour.
fn fill_enclosed(contour: &BinaryMask, search_box: &BoundingBox) -> BinaryMask {
    let (h, w) = contour.shape();
    let mut outside = vec![false; h * w];
    let mut stack = Vec::new();
    for r in search_box.row_min..=search_box.row_max {
        for c in search_box.col_min..=search_box.col_max {
            let on_border = r == search_box.row_min
                || r == search_box.row_max
                || c == search_box.col_min
                || c == search_box.col_max;
            if on_border && !contour.get(r, c) && !outside[r * w + c] {
                outside[r * w + c] = true;
                stack.push((r, c));
            }
        }
    }
    while let Some((r, c)) = stack.pop() {
        for (nr, nc) in neighbors4(r, c, h, w) {
            let j = nr * w + nc;
            if search_box.contains(PointRC::new(nr, nc)) && !outside[j] && !contour.get(nr, nc) {
                outside[j] = true;
                stack.push((nr, nc));
            }
        }
    }
    BinaryMask::from_fn(h, w, |r, c| {
        search_box.contains(PointRC::new(r, c)) && !outside[r * w + c]
    })
}
