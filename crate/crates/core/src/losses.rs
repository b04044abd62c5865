//! Training objectives with analytic gradients with respect to the
//! probability maps: BCE+Dice, uncertainty-weighted scale consistency, box
//! alignment, pseudo-label supervision and the weighted total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{combine, row_col_maxima, BinaryMask, BoxProjection, Grid};
use crate::uncertainty::{binary_entropy, binary_entropy_derivative};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the BCE
/// logarithms.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::ValueRange { what, value: v });
            }
        }
        Ok(())
    }
}

/// Whether the scale-consistency gradient differentiates through the
/// confidence weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightGradient {
    /// Weights are treated as constants.
    #[default]
    Detached,
    /// Weights are differentiated through the entropies.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSettings {
    pub dice_smooth: f64,
    pub projection: BoxProjection,
    pub usc_gradient: WeightGradient,
}

impl Default for LossSettings {
    fn default() -> Self {
        Self {
            dice_smooth: 1.0,
            projection: BoxProjection::default(),
            usc_gradient: WeightGradient::default(),
        }
    }
}

/// A scalar loss and its gradient with respect to each probability input,
/// in argument order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grads: Vec<Grid>,
}

fn check_pair(p1: &Grid, p2: &Grid) -> Result<()> {
    p1.ensure_same_shape(p2.shape())?;
    p1.ensure_probabilities("p1")?;
    p2.ensure_probabilities("p2")
}

fn check_target(p: &Grid, target: &BinaryMask) -> Result<()> {
    p.ensure_same_shape(target.shape())
}

/// Mean BCE plus soft-Dice loss, returning value and gradient.
fn bce_dice_raw(p: &[f64], target: &[bool], smooth: f64) -> (f64, Vec<f64>) {
    let n = p.len() as f64;
    let mut bce = 0.0;
    let mut inter = 0.0;
    let mut psum = 0.0;
    let mut tsum = 0.0;
    for (&pi, &ti) in p.iter().zip(target) {
        let pc = pi.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        bce -= if ti { pc.ln() } else { (1.0 - pc).ln() };
        if ti {
            inter += pi;
            tsum += 1.0;
        }
        psum += pi;
    }
    let num = 2.0 * inter + smooth;
    let den = psum + tsum + smooth;
    let value = bce / n + 1.0 - num / den;

    let grad = p
        .iter()
        .zip(target)
        .map(|(&pi, &ti)| {
            let t = if ti { 1.0 } else { 0.0 };
            let d_bce = if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&pi) {
                0.0
            } else if ti {
                -1.0 / pi
            } else {
                1.0 / (1.0 - pi)
            };
            let d_dice = -(2.0 * t * den - num) / (den * den);
            d_bce / n + d_dice
        })
        .collect();
    (value, grad)
}

pub fn bce_dice_loss(p: &Grid, target: &BinaryMask) -> Result<LossValue> {
    bce_dice_loss_with(p, target, LossSettings::default().dice_smooth)
}

pub fn bce_dice_loss_with(p: &Grid, target: &BinaryMask, smooth: f64) -> Result<LossValue> {
    check_target(p, target)?;
    p.ensure_probabilities("prediction")?;
    if !(smooth >= 0.0 && smooth.is_finite()) {
        return Err(Error::ValueRange {
            what: "dice smoothing",
            value: smooth,
        });
    }
    let (value, grad) = bce_dice_raw(p.values(), target.values(), smooth);
    Ok(LossValue {
        value,
        grads: vec![Grid::from_vec_unchecked(p.height(), p.width(), grad)],
    })
}

/// Entropy-weighted mean squared disagreement between two predictions.
pub fn usc_loss(p1: &Grid, p2: &Grid, eps: f64) -> Result<LossValue> {
    usc_loss_with(p1, p2, eps, WeightGradient::default())
}

pub fn usc_loss_with(p1: &Grid, p2: &Grid, eps: f64, mode: WeightGradient) -> Result<LossValue> {
    check_pair(p1, p2)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::ValueRange {
            what: "entropy eps",
            value: eps,
        });
    }
    let n = p1.len() as f64;
    let mut value = 0.0;
    let mut g1 = Vec::with_capacity(p1.len());
    let mut g2 = Vec::with_capacity(p1.len());
    for (&a, &b) in p1.values().iter().zip(p2.values()) {
        let u = 0.5 * (binary_entropy(a, eps) + binary_entropy(b, eps));
        let wgt = (-u).exp();
        let d = a - b;
        value += wgt * d * d;
        let direct = 2.0 * wgt * d / n;
        let (ga, gb) = match mode {
            WeightGradient::Detached => (direct, -direct),
            WeightGradient::Full => {
                // dW/dp = -W * 0.5 * H'(p)
                let sq = d * d / n;
                (
                    direct - wgt * 0.5 * binary_entropy_derivative(a, eps) * sq,
                    -direct - wgt * 0.5 * binary_entropy_derivative(b, eps) * sq,
                )
            }
        };
        g1.push(ga);
        g2.push(gb);
    }
    let (h, w) = p1.shape();
    Ok(LossValue {
        value: value / n,
        grads: vec![Grid::from_vec_unchecked(h, w, g1), Grid::from_vec_unchecked(h, w, g2)],
    })
}

/// `(1/N) * sum(W * (p1 - p2)^2)` for externally supplied weights. This is
/// the objective whose gradient the detached mode of [`usc_loss_with`]
/// returns.
pub fn usc_loss_fixed_weights(p1: &Grid, p2: &Grid, weights: &Grid) -> Result<f64> {
    p1.ensure_same_shape(p2.shape())?;
    p1.ensure_same_shape(weights.shape())?;
    let sum: f64 = p1
        .values()
        .iter()
        .zip(p2.values())
        .zip(weights.values())
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .sum();
    Ok(sum / p1.len() as f64)
}

/// BCE+Dice between the box projection of `p` and `target`, with the
/// gradient pulled back through the projection.
fn projected_bce_dice(p: &Grid, target: &BinaryMask, settings: &LossSettings) -> (f64, Vec<f64>) {
    let (h, w) = p.shape();
    let (rows, cols) = row_col_maxima(p);
    let projected: Vec<f64> = (0..h * w)
        .map(|i| combine(settings.projection, rows[i / w].1, cols[i % w].1))
        .collect();
    let (value, outer) = bce_dice_raw(&projected, target.values(), settings.dice_smooth);
    let mut grad = vec![0.0; h * w];
    for (i, g) in outer.into_iter().enumerate() {
        let (r, c) = (i / w, i % w);
        let (row_arg, row_max) = rows[r];
        let (col_arg, col_max) = cols[c];
        match settings.projection {
            BoxProjection::Min => {
                if row_max <= col_max {
                    grad[r * w + row_arg] += g;
                } else {
                    grad[col_arg * w + c] += g;
                }
            }
            BoxProjection::Product => {
                grad[r * w + row_arg] += g * col_max;
                grad[col_arg * w + c] += g * row_max;
            }
        }
    }
    (value, grad)
}

/// Box-projected predictions against the tight box; the two pair losses are
/// averaged, so swapping `p1` and `p2` leaves the value unchanged.
pub fn box_alignment_loss(p1: &Grid, p2: &Grid, gt_box: &BinaryMask) -> Result<LossValue> {
    box_alignment_loss_with(p1, p2, gt_box, &LossSettings::default())
}

pub fn box_alignment_loss_with(
    p1: &Grid,
    p2: &Grid,
    gt_box: &BinaryMask,
    settings: &LossSettings,
) -> Result<LossValue> {
    check_pair(p1, p2)?;
    check_target(p1, gt_box)?;
    let (v1, g1) = projected_bce_dice(p1, gt_box, settings);
    let (v2, g2) = projected_bce_dice(p2, gt_box, settings);
    let (h, w) = p1.shape();
    Ok(LossValue {
        value: 0.5 * (v1 + v2),
        grads: vec![
            Grid::from_vec_unchecked(h, w, g1.into_iter().map(|g| 0.5 * g).collect()),
            Grid::from_vec_unchecked(h, w, g2.into_iter().map(|g| 0.5 * g).collect()),
        ],
    })
}

pub fn pseudo_label_loss(p1: &Grid, p2: &Grid, pseudo: &BinaryMask) -> Result<LossValue> {
    pseudo_label_loss_with(p1, p2, pseudo, LossSettings::default().dice_smooth)
}

pub fn pseudo_label_loss_with(p1: &Grid, p2: &Grid, pseudo: &BinaryMask, smooth: f64) -> Result<LossValue> {
    check_pair(p1, p2)?;
    let a = bce_dice_loss_with(p1, pseudo, smooth)?;
    let b = bce_dice_loss_with(p2, pseudo, smooth)?;
    let half = |g: &Grid| g.map(|v| 0.5 * v);
    Ok(LossValue {
        value: 0.5 * (a.value + b.value),
        grads: vec![half(&a.grads[0]), half(&b.grads[0])],
    })
}

pub fn total_loss(boxalign: f64, usc: f64, pl: f64, weights: &LossWeights) -> f64 {
    boxalign + weights.lambda1 * usc + weights.lambda2 * pl
}

/// All loss components for one scale pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub boxalign: f64,
    pub usc: f64,
    pub pl: f64,
    pub total: f64,
}

pub fn loss_breakdown(
    p1: &Grid,
    p2: &Grid,
    gt_box: &BinaryMask,
    pseudo: &BinaryMask,
    weights: &LossWeights,
    entropy_eps: f64,
    settings: &LossSettings,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let boxalign = box_alignment_loss_with(p1, p2, gt_box, settings)?.value;
    let usc = usc_loss_with(p1, p2, entropy_eps, settings.usc_gradient)?.value;
    let pl = pseudo_label_loss_with(p1, p2, pseudo, settings.dice_smooth)?.value;
    Ok(LossBreakdown {
        boxalign,
        usc,
        pl,
        total: total_loss(boxalign, usc, pl, weights),
    })
}
