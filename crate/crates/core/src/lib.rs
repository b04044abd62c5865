//! Extreme-point pseudo-label tracing for weakly supervised segmentation.
//!
//! From four annotated extreme points and a Monte-Carlo stack of model
//! predictions, the crate builds a gradient-plus-uncertainty cost map, traces
//! minimum-cost paths between the points and fills the closed contour into
//! a pseudo label. It also provides the training losses (with analytic
//! gradients), an epoch loop that refreshes pseudo labels on a fixed
//! schedule, synthetic phantoms and predictors for desk-scale experiments,
//! and IoU/Dice evaluation with fold statistics.

pub mod error;
pub mod grid;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod phantom;
pub mod predictor;
pub mod refine;
pub mod resample;
pub mod seed;
pub mod trace;
pub mod uncertainty;

pub use error::{Error, Result};
pub use grid::{
    bbox_from_extreme_points, box_mask, extract_extreme_points, mask_to_box, mask_to_box_with, BinaryMask, BoundingBox,
    BoxProjection, ExtremePoints, Grid, PointRC,
};
pub use losses::{
    bce_dice_loss, box_alignment_loss, pseudo_label_loss, total_loss, usc_loss, LossBreakdown, LossSettings, LossValue,
    LossWeights, WeightGradient,
};
pub use metrics::{aggregate, dice, iou, make_folds, FoldSplit, MetricsReport};
pub use phantom::{generate_phantom, initial_pseudo_from_box, InitialLabelMode, PhantomSample};
pub use predictor::{synthetic_predictor, FixedStackPredictor, Predictor, SyntheticPredictor};
pub use refine::{
    align_to_reference, refine_pseudo_label, run_refinement_loop, scale_pair, RefineConfig, RefinementLog, Sample,
};
pub use trace::{
    build_cost_map, edge_cost, min_cost_path, sobel_gradient, trace_pseudo_label, CostMap, PixelPath, StepLength,
    TraceOptions,
};
pub use uncertainty::{
    binary_entropy_map, confidence_weights, ensemble_mean, ensemble_variance, minmax_normalize, pairwise_uncertainty,
    FeatureStack,
};
