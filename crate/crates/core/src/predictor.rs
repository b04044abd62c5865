//! The predictor contract used by the refinement loop, a scripted synthetic
//! predictor built from known masks, and a predictor replaying precomputed
//! Monte-Carlo stacks.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid};
use crate::resample::resize_bilinear;
use crate::seed::rng;
use crate::uncertainty::{ensemble_mean, FeatureStack};

/// A segmentation model as seen by the refinement loop.
///
/// Outputs must have the input image's shape. `predict_stochastic` must be
/// deterministic given `(sample, image, passes, seed)`.
pub trait Predictor {
    /// Called once before any prediction of `epoch` (1-based).
    fn begin_epoch(&mut self, _epoch: usize) {}

    /// Deterministic probability map for `image`.
    fn predict(&self, sample: usize, image: &Grid) -> Result<Grid>;

    /// `passes` stochastic predictions of `image`.
    fn predict_stochastic(&self, sample: usize, image: &Grid, passes: usize, seed: u64) -> Result<FeatureStack>;
}

/// Linear per-epoch sharpness schedule: `start + per_epoch * (epoch - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessRamp {
    pub start: f64,
    pub per_epoch: f64,
}

impl SharpnessRamp {
    pub fn at(&self, epoch: usize) -> f64 {
        (self.start + self.per_epoch * epoch.saturating_sub(1) as f64).max(0.0)
    }
}

/// Stand-in for a dropout network: a sigmoid of the signed distance to each
/// sample's mask, blurred at scale `1 / max(sharpness, 1)`. Stochastic passes
/// perturb the logits with seeded Gaussian noise, so the spread peaks where
/// the prediction is near 0.5.
#[derive(Debug, Clone)]
pub struct SyntheticPredictor {
    distances: Vec<Grid>,
    sharpness: f64,
    noise_sigma: f64,
    ramp: Option<SharpnessRamp>,
}

/// Single-mask synthetic predictor; `sample` indices are ignored.
pub fn synthetic_predictor(gt: &BinaryMask, sharpness: f64, noise_sigma: f64) -> Result<SyntheticPredictor> {
    SyntheticPredictor::new(std::slice::from_ref(gt), sharpness, noise_sigma)
}

impl SyntheticPredictor {
    pub fn new(gts: &[BinaryMask], sharpness: f64, noise_sigma: f64) -> Result<Self> {
        if !(sharpness >= 0.0 && sharpness.is_finite()) {
            return Err(Error::ValueRange {
                what: "sharpness",
                value: sharpness,
            });
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::ValueRange {
                what: "noise sigma",
                value: noise_sigma,
            });
        }
        if gts.is_empty() {
            return Err(Error::InvalidParams(
                "synthetic predictor needs at least one mask".into(),
            ));
        }
        Ok(Self {
            distances: gts.iter().map(signed_distance).collect(),
            sharpness,
            noise_sigma,
            ramp: None,
        })
    }

    /// Sharpness follows `ramp` from the next `begin_epoch` on.
    pub fn with_ramp(mut self, ramp: SharpnessRamp) -> Self {
        self.sharpness = ramp.at(1);
        self.ramp = Some(ramp);
        self
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    fn distance_for(&self, sample: usize) -> &Grid {
        if self.distances.len() == 1 {
            &self.distances[0]
        } else {
            &self.distances[sample]
        }
    }

    fn base_map(&self, sample: usize, image: &Grid) -> Result<Grid> {
        if self.distances.len() > 1 && sample >= self.distances.len() {
            return Err(Error::InvalidParams(format!(
                "no mask for sample {sample} ({} known)",
                self.distances.len()
            )));
        }
        let dist = self.distance_for(sample);
        let s = self.sharpness;
        let prob = dist.map(|d| sigmoid(s * d));
        let blurred = gaussian_blur(&prob, 1.0 / s.max(1.0));
        Ok(resize_bilinear(&blurred, image.height(), image.width()))
    }
}

impl Predictor for SyntheticPredictor {
    fn begin_epoch(&mut self, epoch: usize) {
        if let Some(ramp) = self.ramp {
            self.sharpness = ramp.at(epoch);
        }
    }

    fn predict(&self, sample: usize, image: &Grid) -> Result<Grid> {
        self.base_map(sample, image)
    }

    fn predict_stochastic(&self, sample: usize, image: &Grid, passes: usize, seed: u64) -> Result<FeatureStack> {
        let base = self.base_map(sample, image)?;
        let (h, w) = base.shape();
        let mut data = Vec::with_capacity(passes * h * w);
        if self.noise_sigma == 0.0 {
            for _ in 0..passes {
                data.extend_from_slice(base.values());
            }
        } else {
            let mut rng = rng(seed);
            let logits: Vec<f64> = base.values().iter().map(|&p| logit(p)).collect();
            for _ in 0..passes {
                for &z in &logits {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    data.push(sigmoid(z + self.noise_sigma * n));
                }
            }
        }
        FeatureStack::new(passes, h, w, data)
    }
}

/// Replays externally computed Monte-Carlo stacks, one per sample. The
/// deterministic prediction is the stack mean; every stochastic request
/// returns the stored stack.
#[derive(Debug, Clone)]
pub struct FixedStackPredictor {
    stacks: Vec<FeatureStack>,
}

impl FixedStackPredictor {
    pub fn new(stacks: Vec<FeatureStack>) -> Self {
        Self { stacks }
    }

    fn stack(&self, sample: usize) -> Result<&FeatureStack> {
        self.stacks
            .get(sample)
            .ok_or_else(|| Error::InvalidParams(format!("no stack for sample {sample}")))
    }
}

impl Predictor for FixedStackPredictor {
    fn predict(&self, sample: usize, image: &Grid) -> Result<Grid> {
        let mean = ensemble_mean(self.stack(sample)?).map(|v| v.clamp(0.0, 1.0));
        Ok(resize_bilinear(&mean, image.height(), image.width()))
    }

    fn predict_stochastic(&self, sample: usize, _image: &Grid, _passes: usize, _seed: u64) -> Result<FeatureStack> {
        Ok(self.stack(sample)?.clone())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

/// Signed Euclidean distance, positive inside: foreground pixels get
/// `dist(nearest background) - 1` (so boundary pixels sit at 0), background
/// pixels get `-dist(nearest foreground)`.
pub fn signed_distance(mask: &BinaryMask) -> Grid {
    let (h, w) = mask.shape();
    let to_bg = distance_transform(mask, false);
    let to_fg = distance_transform(mask, true);
    Grid::from_fn(h, w, |r, c| {
        let i = r * w + c;
        if mask.get(r, c) {
            to_bg[i].sqrt() - 1.0
        } else {
            -to_fg[i].sqrt()
        }
    })
}

// Finite distance used when a mask has no pixels of one kind.
const FAR: f64 = 1e6;

/// Squared Euclidean distance from every pixel to the nearest pixel whose
/// mask value equals `target` (exact, separable lower-envelope transform).
fn distance_transform(mask: &BinaryMask, target: bool) -> Vec<f64> {
    let (h, w) = mask.shape();
    let mut d: Vec<f64> = mask
        .values()
        .iter()
        .map(|&v| if v == target { 0.0 } else { FAR * FAR })
        .collect();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for c in 0..w {
        line.clear();
        line.extend((0..h).map(|r| d[r * w + c]));
        edt_1d(&line, &mut out);
        for r in 0..h {
            d[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        line.clear();
        line.extend_from_slice(&d[r * w..(r + 1) * w]);
        edt_1d(&line, &mut out);
        d[r * w..(r + 1) * w].copy_from_slice(&out);
    }
    d
}

fn edt_1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter =
        |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *o = dq * dq + f[v[k]];
    }
}

/// Separable Gaussian blur with replicate borders.
pub fn gaussian_blur(g: &Grid, sigma: f64) -> Grid {
    let radius = (3.0 * sigma).ceil() as isize;
    if sigma <= 0.0 || radius == 0 {
        return g.clone();
    }
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let (h, w) = g.shape();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let horiz = Grid::from_fn(h, w, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, wt)| wt * g.get(r, clamp(c as isize + k as isize - radius, w)))
            .sum()
    });
    Grid::from_fn(h, w, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, wt)| wt * horiz.get(clamp(r as isize + k as isize - radius, h), c))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    })
}
