//! Pseudo-label refinement: the uncertainty-aware cost-map trace for one
//! Monte-Carlo stack, and the epoch loop that computes the training losses
//! on scale pairs and refreshes every sample's pseudo label each `K` epochs.

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bbox_from_extreme_points, box_mask, BinaryMask, ExtremePoints, Grid};
use crate::losses::{loss_breakdown, LossBreakdown, LossSettings, LossWeights};
use crate::metrics::iou;
use crate::predictor::Predictor;
use crate::resample::{resize_bilinear, scaled_len};
use crate::seed::{derive_seed, rng};
use crate::trace::{build_cost_map, sobel_gradient, trace_contour, CostMap, StepLength, TraceOptions, TracedContour};
use crate::uncertainty::{ensemble_mean_variance, minmax_normalize, FeatureStack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Monte-Carlo passes per refresh (`T`).
    pub mc_passes: usize,
    /// Refresh interval in epochs (`K`).
    pub update_interval: usize,
    /// Weight of the uncertainty map in the cost denominator.
    pub alpha: f64,
    pub eps_cost: f64,
    pub eps_entropy: f64,
    /// Dilation of the extreme-point box confining the path search.
    pub margin: usize,
    pub scale_set: Vec<f64>,
    pub weights: LossWeights,
    pub seed: u64,
    pub max_epochs: usize,
    pub step: StepLength,
    pub losses: LossSettings,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            mc_passes: 20,
            update_interval: 100,
            alpha: 1.0,
            eps_cost: crate::trace::DEFAULT_COST_EPS,
            eps_entropy: crate::uncertainty::DEFAULT_ENTROPY_EPS,
            margin: crate::trace::DEFAULT_MARGIN,
            scale_set: vec![0.75, 1.0, 1.25],
            weights: LossWeights::default(),
            seed: 0,
            max_epochs: 300,
            step: StepLength::default(),
            losses: LossSettings::default(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.mc_passes < 2 {
            return bad(format!("mc_passes must be >= 2, got {}", self.mc_passes));
        }
        if self.update_interval < 1 {
            return bad("update_interval must be >= 1".into());
        }
        if self.max_epochs < 1 {
            return bad("max_epochs must be >= 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.eps_cost > 0.0 && self.eps_cost.is_finite()) {
            return bad(format!("eps_cost must be > 0, got {}", self.eps_cost));
        }
        if !(self.eps_entropy > 0.0 && self.eps_entropy.is_finite()) {
            return bad(format!("eps_entropy must be > 0, got {}", self.eps_entropy));
        }
        if self.scale_set.len() < 2 {
            return bad("scale_set needs at least two factors".into());
        }
        if let Some(f) = self.scale_set.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return bad(format!("scale factors must be > 0, got {f}"));
        }
        self.weights.validate()
    }

    /// Epochs (1-based) at which pseudo labels are refreshed.
    pub fn refresh_epochs(&self) -> Vec<usize> {
        (1..=self.max_epochs / self.update_interval)
            .map(|k| k * self.update_interval)
            .collect()
    }

    pub fn trace_options(&self) -> TraceOptions {
        TraceOptions {
            margin: self.margin,
            step: self.step,
        }
    }
}

/// Two rescaled copies of an image and the factors used.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePair {
    pub first: Grid,
    pub second: Grid,
    pub factors: (f64, f64),
}

/// Rescales `image` by two factors drawn without replacement from
/// `scale_set`.
pub fn scale_pair(image: &Grid, scale_set: &[f64], seed: u64) -> Result<ScalePair> {
    if scale_set.len() < 2 {
        return Err(Error::InvalidParams("scale_set needs at least two factors".into()));
    }
    if let Some(f) = scale_set.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
        return Err(Error::InvalidParams(format!("scale factors must be > 0, got {f}")));
    }
    let mut r = rng(seed);
    let picked = sample_indices(&mut r, scale_set.len(), 2);
    let (f1, f2) = (scale_set[picked.index(0)], scale_set[picked.index(1)]);
    let rescale = |f: f64| resize_bilinear(image, scaled_len(image.height(), f), scaled_len(image.width(), f));
    Ok(ScalePair {
        first: rescale(f1),
        second: rescale(f2),
        factors: (f1, f2),
    })
}

/// Resample a prediction back onto the reference grid.
pub fn align_to_reference(p: &Grid, height: usize, width: usize) -> Grid {
    resize_bilinear(p, height, width)
}

/// Intermediate maps of one refinement, for inspection and export.
#[derive(Debug, Clone)]
pub struct RefinementMaps {
    pub mean: Grid,
    pub variance: Grid,
    pub uncertainty: Grid,
    pub gradient: Grid,
    pub cost: CostMap,
}

/// Mean, variance, normalized uncertainty, Sobel gradient and cost map of a
/// Monte-Carlo stack.
pub fn refinement_maps(stack: &FeatureStack, alpha: f64, eps: f64) -> Result<RefinementMaps> {
    let (mean, variance) = ensemble_mean_variance(stack);
    let uncertainty = minmax_normalize(&variance);
    let gradient = sobel_gradient(&mean)?;
    let cost = build_cost_map(&gradient, &uncertainty, alpha, eps)?;
    Ok(RefinementMaps {
        mean,
        variance,
        uncertainty,
        gradient,
        cost,
    })
}

pub fn refine_contour(stack: &FeatureStack, ep: &ExtremePoints, cfg: &RefineConfig) -> Result<TracedContour> {
    ep.ensure_within(stack.height(), stack.width())?;
    let maps = refinement_maps(stack, cfg.alpha, cfg.eps_cost)?;
    trace_contour(&maps.cost, ep, &cfg.trace_options())
}

/// Refined pseudo label for one Monte-Carlo stack.
pub fn refine_pseudo_label(stack: &FeatureStack, ep: &ExtremePoints, cfg: &RefineConfig) -> Result<BinaryMask> {
    Ok(refine_contour(stack, ep, cfg)?.mask)
}

/// One training image with its annotation and current supervision.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Grid,
    pub ep: ExtremePoints,
    pub initial_pseudo: BinaryMask,
    /// Ground truth, only used to score pseudo labels.
    pub gt: Option<BinaryMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub sample: usize,
    pub id: String,
    pub scale_factors: (f64, f64),
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshRecord {
    pub epoch: usize,
    pub sample: usize,
    pub id: String,
    pub foreground: usize,
    pub iou: Option<f64>,
    #[serde(skip)]
    pub label: Option<BinaryMask>,
    #[serde(skip)]
    pub contour: Option<BinaryMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementLog {
    pub config: RefineConfig,
    pub refresh_epochs: Vec<usize>,
    /// IoU of each initial pseudo label against its ground truth.
    pub initial_iou: Vec<Option<f64>>,
    pub epochs: Vec<EpochRecord>,
    pub refreshes: Vec<RefreshRecord>,
}

#[derive(Debug, Clone)]
pub struct RefinementOutcome {
    pub log: RefinementLog,
    pub final_labels: Vec<BinaryMask>,
}

const STREAM_SCALE: u64 = 1;
const STREAM_MC: u64 = 2;

fn checked_prediction(expected: (usize, usize), p: Grid) -> Result<Grid> {
    if p.shape() != expected {
        return Err(Error::PredictorShapeMismatch {
            expected,
            found: p.shape(),
        });
    }
    p.ensure_probabilities("prediction")?;
    Ok(p)
}

/// Runs `cfg.max_epochs` epochs. Every epoch computes the loss components
/// on a fresh scale pair of each sample against its current pseudo label;
/// at multiples of `cfg.update_interval` the pseudo label is replaced by the
/// trace of a new Monte-Carlo stack. No parameters are updated here: the
/// predictor owns its own training (or follows a script).
pub fn run_refinement_loop(
    samples: &[Sample],
    predictor: &mut dyn Predictor,
    cfg: &RefineConfig,
) -> Result<RefinementOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    for s in samples {
        let shape = s.image.shape();
        s.ep.ensure_within(shape.0, shape.1)?;
        s.image.ensure_same_shape(s.initial_pseudo.shape())?;
        if let Some(gt) = &s.gt {
            s.image.ensure_same_shape(gt.shape())?;
        }
    }

    let gt_boxes = samples
        .iter()
        .map(|s| box_mask(&bbox_from_extreme_points(&s.ep), s.image.height(), s.image.width()))
        .collect::<Result<Vec<_>>>()?;
    let mut labels: Vec<BinaryMask> = samples.iter().map(|s| s.initial_pseudo.clone()).collect();
    let initial_iou = samples
        .iter()
        .map(|s| s.gt.as_ref().map(|gt| iou(&s.initial_pseudo, gt)).transpose())
        .collect::<Result<Vec<_>>>()?;

    let mut epochs = Vec::with_capacity(cfg.max_epochs * samples.len());
    let mut refreshes = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        predictor.begin_epoch(epoch);
        for (idx, s) in samples.iter().enumerate() {
            let shape = s.image.shape();
            let pair = scale_pair(
                &s.image,
                &cfg.scale_set,
                derive_seed(cfg.seed, &[STREAM_SCALE, epoch as u64, idx as u64]),
            )?;
            let p1 = checked_prediction(pair.first.shape(), predictor.predict(idx, &pair.first)?)?;
            let p2 = checked_prediction(pair.second.shape(), predictor.predict(idx, &pair.second)?)?;
            let p1 = align_to_reference(&p1, shape.0, shape.1);
            let p2 = align_to_reference(&p2, shape.0, shape.1);
            let losses = loss_breakdown(
                &p1,
                &p2,
                &gt_boxes[idx],
                &labels[idx],
                &cfg.weights,
                cfg.eps_entropy,
                &cfg.losses,
            )?;
            epochs.push(EpochRecord {
                epoch,
                sample: idx,
                id: s.id.clone(),
                scale_factors: pair.factors,
                losses,
            });

            if epoch % cfg.update_interval == 0 {
                let stack = predictor.predict_stochastic(
                    idx,
                    &s.image,
                    cfg.mc_passes,
                    derive_seed(cfg.seed, &[STREAM_MC, epoch as u64, idx as u64]),
                )?;
                if stack.shape() != shape {
                    return Err(Error::PredictorShapeMismatch {
                        expected: shape,
                        found: stack.shape(),
                    });
                }
                let traced = refine_contour(&stack, &s.ep, cfg)?;
                let score = s.gt.as_ref().map(|gt| iou(&traced.mask, gt)).transpose()?;
                labels[idx] = traced.mask.clone();
                refreshes.push(RefreshRecord {
                    epoch,
                    sample: idx,
                    id: s.id.clone(),
                    foreground: traced.mask.count(),
                    iou: score,
                    label: Some(traced.mask),
                    contour: Some(traced.contour),
                });
            }
        }
    }

    Ok(RefinementOutcome {
        log: RefinementLog {
            config: cfg.clone(),
            refresh_epochs: cfg.refresh_epochs(),
            initial_iou,
            epochs,
            refreshes,
        },
        final_labels: labels,
    })
}
