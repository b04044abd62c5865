//! Monte-Carlo ensemble statistics and entropy-based confidence weighting.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Default epsilon inside the entropy logarithms.
pub const DEFAULT_ENTROPY_EPS: f64 = 1e-12;

/// `T` stochastic single-channel predictions of one image, stored
/// `(t, row, col)`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    passes: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureStack {
    pub fn new(passes: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if passes < 2 {
            return Err(Error::InvalidParams(format!(
                "a feature stack needs at least 2 passes, got {passes}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidParams(format!(
                "stack dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != passes * height * width {
            return Err(Error::InvalidParams(format!(
                "{} values for a {passes}x{height}x{width} stack",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::ValueRange {
                what: "stack value",
                value: *bad,
            });
        }
        Ok(Self {
            passes,
            height,
            width,
            data,
        })
    }

    pub fn from_layers(layers: &[Grid]) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidParams("a feature stack needs at least 2 passes, got 0".into()))?;
        let shape = first.shape();
        let mut data = Vec::with_capacity(layers.len() * first.len());
        for layer in layers {
            first.ensure_same_shape(layer.shape())?;
            data.extend_from_slice(layer.values());
        }
        Self::new(layers.len(), shape.0, shape.1, data)
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn layer(&self, t: usize) -> Grid {
        let n = self.height * self.width;
        Grid::from_vec_unchecked(self.height, self.width, self.data[t * n..(t + 1) * n].to_vec())
    }

    /// Per-pixel values across passes, sorted ascending.
    fn sorted_pixel_values(&self, index: usize, buf: &mut Vec<f64>) {
        let n = self.height * self.width;
        buf.clear();
        buf.extend((0..self.passes).map(|t| self.data[t * n + index]));
        buf.sort_by(f64::total_cmp);
    }
}

// Sums run over the sorted per-pixel values.
fn pixel_stats(stack: &FeatureStack) -> (Grid, Grid) {
    let n = stack.height * stack.width;
    let t = stack.passes as f64;
    let mut mean = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(stack.passes);
    for i in 0..n {
        stack.sorted_pixel_values(i, &mut buf);
        let (lo, hi) = (buf[0], buf[buf.len() - 1]);
        if lo == hi {
            mean.push(lo);
            var.push(0.0);
            continue;
        }
        let mu = (buf.iter().sum::<f64>() / t).clamp(lo, hi);
        let v = buf.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / t;
        mean.push(mu);
        var.push(v);
    }
    (
        Grid::from_vec_unchecked(stack.height, stack.width, mean),
        Grid::from_vec_unchecked(stack.height, stack.width, var),
    )
}

/// Pixel-wise arithmetic mean over the passes.
pub fn ensemble_mean(stack: &FeatureStack) -> Grid {
    pixel_stats(stack).0
}

/// Pixel-wise population variance (divided by `T`, no Bessel correction).
pub fn ensemble_variance(stack: &FeatureStack) -> Grid {
    pixel_stats(stack).1
}

/// Mean and variance in one pass over the stack.
pub fn ensemble_mean_variance(stack: &FeatureStack) -> (Grid, Grid) {
    pixel_stats(stack)
}

/// Affine rescale to `[0, 1]`; a constant grid maps to all zeros.
pub fn minmax_normalize(g: &Grid) -> Grid {
    let (lo, hi) = g.min_max();
    if hi <= lo {
        return Grid::zeros(g.height(), g.width());
    }
    let span = hi - lo;
    g.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

// Both terms come from `large = max(p, 1-p)` and `small = 1 - large`.
fn entropy_terms(p: f64) -> (f64, f64) {
    let large = p.max(1.0 - p);
    (1.0 - large, large)
}

/// Binary entropy with natural log:
/// `-[p ln(p + eps) + (1 - p) ln(1 - p + eps)]`.
#[inline]
pub fn binary_entropy(p: f64, eps: f64) -> f64 {
    let (small, large) = entropy_terms(p);
    -(small * (small + eps).ln() + large * (large + eps).ln())
}

/// `dH/dp` of [`binary_entropy`].
#[inline]
pub fn binary_entropy_derivative(p: f64, eps: f64) -> f64 {
    let q = 1.0 - p;
    (q + eps).ln() - (p + eps).ln() + q / (q + eps) - p / (p + eps)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::ValueRange {
            what: "entropy eps",
            value: eps,
        })
    }
}

pub fn binary_entropy_map(p: &Grid, eps: f64) -> Result<Grid> {
    check_eps(eps)?;
    p.ensure_probabilities("entropy input")?;
    Ok(p.map(|v| binary_entropy(v, eps)))
}

/// Average of the two entropy maps.
pub fn pairwise_uncertainty(p1: &Grid, p2: &Grid, eps: f64) -> Result<Grid> {
    p1.ensure_same_shape(p2.shape())?;
    let h1 = binary_entropy_map(p1, eps)?;
    let h2 = binary_entropy_map(p2, eps)?;
    let data = h1
        .values()
        .iter()
        .zip(h2.values())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    Ok(Grid::from_vec_unchecked(p1.height(), p1.width(), data))
}

/// `exp(-uncertainty)` per pixel.
pub fn confidence_weights(uncertainty: &Grid) -> Result<Grid> {
    if let Some(&bad) = uncertainty.values().iter().find(|&&u| u < 0.0) {
        return Err(Error::NegativeUncertainty(bad));
    }
    Ok(uncertainty.map(|u| (-u).exp()))
}
