//! Dense grids, binary masks and the geometric weak-annotation operations:
//! extreme points, tight boxes and the mask-to-box projection.
//!
//! Coordinates are `(row, col)` with row 0 at the top; boxes are inclusive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 2-D map of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParams(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::InvalidParams(format!(
                "{} values for a {height}x{width} grid",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::ValueRange {
                what: "grid value",
                value: *bad,
            });
        }
        Ok(Self { height, width, data })
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        assert!(value.is_finite());
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { height, width, data }
    }

    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid::from_vec_unchecked(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn ensure_same_shape(&self, other: (usize, usize)) -> Result<()> {
        if self.shape() != other {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other,
            });
        }
        Ok(())
    }

    /// Errors with `ValueRange` unless every value lies in `[0, 1]`.
    pub fn ensure_probabilities(&self, what: &'static str) -> Result<()> {
        match self.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            Some(&value) => Err(Error::ValueRange { what, value }),
            None => Ok(()),
        }
    }

    /// Binarize at `threshold` (values `>= threshold` become foreground).
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask::from_vec_unchecked(
            self.height,
            self.width,
            self.data.iter().map(|&v| v >= threshold).collect(),
        )
    }
}

/// Row-major 2-D map of `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParams(format!(
                "mask dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::InvalidParams(format!(
                "{} values for a {height}x{width} mask",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be positive");
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::empty(height, width);
        for r in 0..height {
            for c in 0..width {
                mask.data[r * width + c] = f(r, c);
            }
        }
        mask
    }

    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<bool>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn values(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn contains(&self, p: PointRC) -> bool {
        p.row < self.height && p.col < self.width && self.get(p.row, p.col)
    }

    /// Foreground pixels in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = PointRC> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| PointRC::new(i / self.width, i % self.width))
    }

    pub fn to_grid(&self) -> Grid {
        Grid::from_vec_unchecked(
            self.height,
            self.width,
            self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn invert(&self) -> BinaryMask {
        BinaryMask::from_vec_unchecked(self.height, self.width, self.data.iter().map(|v| !v).collect())
    }

    /// Tight axis-aligned box of the foreground, `None` for an empty mask.
    pub fn tight_box(&self) -> Option<BoundingBox> {
        let mut it = self.foreground();
        let first = it.next()?;
        let mut b = BoundingBox {
            row_min: first.row,
            row_max: first.row,
            col_min: first.col,
            col_max: first.col,
        };
        for p in it {
            b.row_min = b.row_min.min(p.row);
            b.row_max = b.row_max.max(p.row);
            b.col_min = b.col_min.min(p.col);
            b.col_max = b.col_max.max(p.col);
        }
        Some(b)
    }

    /// Foreground pixels with at least one 4-neighbor that is background or
    /// lies outside the image.
    pub fn boundary(&self) -> BinaryMask {
        let (h, w) = self.shape();
        BinaryMask::from_fn(h, w, |r, c| {
            self.get(r, c)
                && (r == 0
                    || c == 0
                    || r + 1 == h
                    || c + 1 == w
                    || !self.get(r - 1, c)
                    || !self.get(r + 1, c)
                    || !self.get(r, c - 1)
                    || !self.get(r, c + 1))
        })
    }

    /// 4-connected foreground components, each as a list of pixels in
    /// discovery order. Components are ordered by their first raster pixel.
    pub fn components4(&self) -> Vec<Vec<PointRC>> {
        let (h, w) = self.shape();
        let mut seen = vec![false; h * w];
        let mut out = Vec::new();
        for start in 0..h * w {
            if !self.data[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(i) = stack.pop() {
                let (r, c) = (i / w, i % w);
                comp.push(PointRC::new(r, c));
                for (nr, nc) in neighbors4(r, c, h, w) {
                    let j = nr * w + nc;
                    if self.data[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// Keep only the largest 4-connected component (earliest in raster order
    /// on ties).
    pub fn largest_component(&self) -> BinaryMask {
        let mut best: Option<Vec<PointRC>> = None;
        for comp in self.components4() {
            if best.as_ref().is_none_or(|b| comp.len() > b.len()) {
                best = Some(comp);
            }
        }
        let mut out = BinaryMask::empty(self.height, self.width);
        for p in best.into_iter().flatten() {
            out.set(p.row, p.col, true);
        }
        out
    }
}

pub(crate) fn neighbors4(r: usize, c: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    let up = (r > 0).then(|| (r - 1, c));
    let down = (r + 1 < h).then_some((r + 1, c));
    let left = (c > 0).then(|| (r, c - 1));
    let right = (c + 1 < w).then_some((r, c + 1));
    [up, down, left, right].into_iter().flatten()
}

/// Pixel coordinate, serialized as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct PointRC {
    pub row: usize,
    pub col: usize,
}

impl PointRC {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn is_8_neighbor(self, other: PointRC) -> bool {
        self != other && self.row.abs_diff(other.row) <= 1 && self.col.abs_diff(other.col) <= 1
    }
}

impl From<[usize; 2]> for PointRC {
    fn from([row, col]: [usize; 2]) -> Self {
        Self { row, col }
    }
}

impl From<PointRC> for [usize; 2] {
    fn from(p: PointRC) -> Self {
        [p.row, p.col]
    }
}

impl From<(usize, usize)> for PointRC {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

/// The four annotated boundary points of a lesion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremePoints {
    pub top: PointRC,
    pub bottom: PointRC,
    pub left: PointRC,
    pub right: PointRC,
}

impl ExtremePoints {
    pub fn new(top: PointRC, bottom: PointRC, left: PointRC, right: PointRC) -> Result<Self> {
        let ep = Self {
            top,
            bottom,
            left,
            right,
        };
        ep.validate()?;
        Ok(ep)
    }

    pub fn validate(&self) -> Result<()> {
        let pts = self.as_array();
        let ok = pts.iter().all(|p| {
            self.top.row <= p.row && self.bottom.row >= p.row && self.left.col <= p.col && self.right.col >= p.col
        });
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "extreme points are not mutually extremal: {self:?}"
            )))
        }
    }

    pub fn ensure_within(&self, height: usize, width: usize) -> Result<()> {
        for p in self.as_array() {
            if p.row >= height || p.col >= width {
                return Err(Error::out_of_bounds(
                    format!("extreme point ({}, {})", p.row, p.col),
                    height,
                    width,
                ));
            }
        }
        Ok(())
    }

    /// Points in `[top, right, bottom, left]` order.
    pub fn clockwise(&self) -> [PointRC; 4] {
        [self.top, self.right, self.bottom, self.left]
    }

    pub fn as_array(&self) -> [PointRC; 4] {
        [self.top, self.bottom, self.left, self.right]
    }
}

/// Inclusive axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl BoundingBox {
    pub fn new(row_min: usize, row_max: usize, col_min: usize, col_max: usize) -> Result<Self> {
        if row_min > row_max || col_min > col_max {
            return Err(Error::InvalidParams(format!(
                "inverted box rows {row_min}..={row_max}, cols {col_min}..={col_max}"
            )));
        }
        Ok(Self {
            row_min,
            row_max,
            col_min,
            col_max,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            row_min: 0,
            row_max: height - 1,
            col_min: 0,
            col_max: width - 1,
        }
    }

    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains(&self, p: PointRC) -> bool {
        (self.row_min..=self.row_max).contains(&p.row) && (self.col_min..=self.col_max).contains(&p.col)
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.row_max < height && self.col_max < width
    }

    /// Grow by `margin` on every side, clipped to the image.
    pub fn dilate(&self, margin: usize, height: usize, width: usize) -> BoundingBox {
        BoundingBox {
            row_min: self.row_min.saturating_sub(margin),
            row_max: (self.row_max + margin).min(height - 1),
            col_min: self.col_min.saturating_sub(margin),
            col_max: (self.col_max + margin).min(width - 1),
        }
    }
}

/// Topmost, bottommost, leftmost and rightmost foreground pixels. Among
/// pixels sharing the extremal coordinate, the one with the smallest
/// orthogonal coordinate wins.
pub fn extract_extreme_points(mask: &BinaryMask) -> Result<ExtremePoints> {
    let mut it = mask.foreground();
    let first = it.next().ok_or(Error::EmptyMask)?;
    let (mut top, mut bottom, mut left, mut right) = (first, first, first, first);
    for p in it {
        if p.row < top.row || (p.row == top.row && p.col < top.col) {
            top = p;
        }
        if p.row > bottom.row || (p.row == bottom.row && p.col < bottom.col) {
            bottom = p;
        }
        if p.col < left.col || (p.col == left.col && p.row < left.row) {
            left = p;
        }
        if p.col > right.col || (p.col == right.col && p.row < right.row) {
            right = p;
        }
    }
    Ok(ExtremePoints {
        top,
        bottom,
        left,
        right,
    })
}

pub fn bbox_from_extreme_points(ep: &ExtremePoints) -> BoundingBox {
    BoundingBox {
        row_min: ep.top.row,
        row_max: ep.bottom.row,
        col_min: ep.left.col,
        col_max: ep.right.col,
    }
}

pub fn box_mask(bbox: &BoundingBox, height: usize, width: usize) -> Result<BinaryMask> {
    if height == 0
        || width == 0
        || !bbox.fits(height, width)
        || bbox.row_min > bbox.row_max
        || bbox.col_min > bbox.col_max
    {
        return Err(Error::out_of_bounds(format!("box {bbox:?}"), height, width));
    }
    Ok(BinaryMask::from_fn(height, width, |r, c| {
        bbox.contains(PointRC::new(r, c))
    }))
}

/// How per-row and per-column maxima are combined into a box-shaped map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxProjection {
    /// `min(rowmax, colmax)`: idempotent and monotone for any input.
    #[default]
    Min,
    /// `rowmax * colmax`: idempotent only when the global maximum is 0 or 1.
    Product,
}

/// Projects a probability map onto its box-shaped envelope.
pub fn mask_to_box(p: &Grid) -> Result<Grid> {
    mask_to_box_with(p, BoxProjection::default())
}

pub fn mask_to_box_with(p: &Grid, projection: BoxProjection) -> Result<Grid> {
    p.ensure_probabilities("mask_to_box input")?;
    let (row_max, col_max) = row_col_maxima(p);
    Ok(Grid::from_fn(p.height(), p.width(), |r, c| {
        combine(projection, row_max[r].1, col_max[c].1)
    }))
}

#[inline]
pub(crate) fn combine(projection: BoxProjection, row: f64, col: f64) -> f64 {
    match projection {
        BoxProjection::Min => row.min(col),
        BoxProjection::Product => row * col,
    }
}

pub(crate) type Maxima = Vec<(usize, f64)>;

/// Per-row and per-column `(argmax, max)`; the first index wins ties.
pub(crate) fn row_col_maxima(p: &Grid) -> (Maxima, Maxima) {
    let (h, w) = p.shape();
    let mut rows = vec![(0usize, f64::NEG_INFINITY); h];
    let mut cols = vec![(0usize, f64::NEG_INFINITY); w];
    for (r, row) in rows.iter_mut().enumerate() {
        for (c, col) in cols.iter_mut().enumerate() {
            let v = p.get(r, c);
            if v > row.1 {
                *row = (c, v);
            }
            if v > col.1 {
                *col = (r, v);
            }
        }
    }
    (rows, cols)
}
