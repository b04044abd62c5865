//! Synthetic ultrasound-like phantoms with known lesion masks, plus the
//! box-derived initial pseudo labels used in place of a foundation model.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bbox_from_extreme_points, box_mask, extract_extreme_points, BinaryMask, ExtremePoints, Grid};
use crate::seed::{derive_seed, rng};

/// Lesion geometry and contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeParams {
    /// `(row, col)` of the lesion center; `None` draws a jittered center.
    pub center: Option<(f64, f64)>,
    /// Semi-axes in pixels, `(along columns, along rows)`.
    pub semi_axes: (f64, f64),
    /// Relative amplitude of the radial perturbation (0 gives an ellipse).
    pub perturbation: f64,
    /// Highest angular harmonic of the perturbation (from 2 upwards).
    pub harmonics: usize,
    /// Width in pixels of the intensity transition at the boundary.
    pub softness: f64,
    pub inside_level: f64,
    pub outside_level: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            center: None,
            semi_axes: (14.0, 10.0),
            perturbation: 0.08,
            harmonics: 4,
            softness: 0.0,
            inside_level: 0.25,
            outside_level: 0.65,
        }
    }
}

/// Multiplicative gamma speckle with unit mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeckleParams {
    pub variance: f64,
}

impl Default for SpeckleParams {
    fn default() -> Self {
        Self { variance: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub height: usize,
    pub width: usize,
    pub shape: ShapeParams,
    pub speckle: SpeckleParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSample {
    pub image: Grid,
    pub gt: BinaryMask,
    pub ep: ExtremePoints,
    pub params: PhantomParams,
}

/// Smallest phantom side length.
pub const MIN_PHANTOM_SIDE: usize = 32;

pub fn generate_phantom(
    height: usize,
    width: usize,
    shape: &ShapeParams,
    speckle: &SpeckleParams,
    seed: u64,
) -> Result<PhantomSample> {
    validate(height, width, shape, speckle)?;
    let mut shape_rng = rng(derive_seed(seed, &[0x5048_414e]));
    let (a, b) = shape.semi_axes;
    let reach = 1.0 + shape.perturbation;

    let center = match shape.center {
        Some(c) => c,
        None => {
            let (cr, cc) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
            let jr = (cr - b * reach - 2.0).clamp(0.0, 4.0);
            let jc = (cc - a * reach - 2.0).clamp(0.0, 4.0);
            (
                cr + shape_rng.random_range(-1.0..=1.0) * jr,
                cc + shape_rng.random_range(-1.0..=1.0) * jc,
            )
        }
    };
    if center.0 - b * reach < 0.0
        || center.0 + b * reach > (height - 1) as f64
        || center.1 - a * reach < 0.0
        || center.1 + a * reach > (width - 1) as f64
    {
        return Err(Error::InvalidParams(format!(
            "lesion at {center:?} with semi-axes {:?} does not fit a {height}x{width} image",
            shape.semi_axes
        )));
    }

    // Each harmonic k >= 2 gets a random share of the amplitude and phase.
    let terms: Vec<(f64, f64, f64)> = (2..=shape.harmonics.max(1))
        .map(|k| {
            let amp = shape_rng.random_range(-1.0..=1.0) * shape.perturbation / (shape.harmonics.max(2) - 1) as f64;
            let phase = shape_rng.random_range(0.0..std::f64::consts::TAU);
            (k as f64, amp, phase)
        })
        .collect();
    let radius = |theta: f64| {
        1.0 + terms
            .iter()
            .map(|(k, amp, ph)| amp * (k * theta + ph).cos())
            .sum::<f64>()
    };

    // Signed distance to the boundary in pixels (positive inside), measured
    // along the radial direction.
    let signed = |r: usize, c: usize| {
        let dy = (r as f64 - center.0) / b;
        let dx = (c as f64 - center.1) / a;
        let rho = (dx * dx + dy * dy).sqrt();
        let theta = dy.atan2(dx);
        let scale = if rho > 0.0 {
            let (py, px) = (dy * b / rho, dx * a / rho);
            (py * py + px * px).sqrt()
        } else {
            a.min(b)
        };
        (radius(theta) - rho) * scale
    };

    let raw = BinaryMask::from_fn(height, width, |r, c| signed(r, c) >= 0.0);
    let gt = raw.largest_component();
    let ep = extract_extreme_points(&gt)?;

    let (lo, hi) = (shape.inside_level, shape.outside_level);
    let mut image = Grid::from_fn(height, width, |r, c| {
        let inside = if shape.softness > 0.0 {
            1.0 / (1.0 + (-signed(r, c) / shape.softness).exp())
        } else if gt.get(r, c) {
            1.0
        } else {
            0.0
        };
        hi + (lo - hi) * inside
    });

    if speckle.variance > 0.0 {
        let gamma = Gamma::new(1.0 / speckle.variance, speckle.variance)
            .map_err(|e| Error::InvalidParams(format!("speckle: {e}")))?;
        let mut speckle_rng = rng(derive_seed(seed, &[0x5350_4543]));
        for v in image.values_mut() {
            *v *= gamma.sample(&mut speckle_rng);
        }
    }

    Ok(PhantomSample {
        image,
        gt,
        ep,
        params: PhantomParams {
            height,
            width,
            shape: ShapeParams {
                center: Some(center),
                ..shape.clone()
            },
            speckle: *speckle,
            seed,
        },
    })
}

fn validate(height: usize, width: usize, shape: &ShapeParams, speckle: &SpeckleParams) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidParams(msg));
    if height < MIN_PHANTOM_SIDE || width < MIN_PHANTOM_SIDE {
        return bad(format!(
            "phantom must be at least {MIN_PHANTOM_SIDE}x{MIN_PHANTOM_SIDE}, got {height}x{width}"
        ));
    }
    let (a, b) = shape.semi_axes;
    if !(a >= 1.0 && b >= 1.0 && a.is_finite() && b.is_finite()) {
        return bad(format!("semi-axes must be >= 1 px, got {:?}", shape.semi_axes));
    }
    if !(0.0..0.5).contains(&shape.perturbation) {
        return bad(format!("perturbation must be in [0, 0.5), got {}", shape.perturbation));
    }
    if !(shape.softness >= 0.0 && shape.softness.is_finite()) {
        return bad(format!("softness must be >= 0, got {}", shape.softness));
    }
    if !(shape.inside_level > 0.0 && shape.inside_level < shape.outside_level && shape.outside_level.is_finite()) {
        return bad("need 0 < inside_level < outside_level".into());
    }
    if !(speckle.variance >= 0.0 && speckle.variance.is_finite()) {
        return bad(format!("speckle variance must be >= 0, got {}", speckle.variance));
    }
    Ok(())
}

/// Phantom parameters with seeded random semi-axes and perturbation, sized
/// for a 64x64 image.
pub fn random_shape(seed: u64) -> ShapeParams {
    let mut r = rng(derive_seed(seed, &[0x5348_4150]));
    ShapeParams {
        semi_axes: (r.random_range(11.0..=18.0), r.random_range(8.0..=14.0)),
        perturbation: r.random_range(0.0..=0.12),
        ..ShapeParams::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLabelMode {
    #[default]
    BoxFill,
    InscribedEllipse,
}

/// Coarse initial pseudo label derived from the extreme-point box.
pub fn initial_pseudo_from_box(
    ep: &ExtremePoints,
    height: usize,
    width: usize,
    mode: InitialLabelMode,
) -> Result<BinaryMask> {
    ep.ensure_within(height, width)?;
    let bbox = bbox_from_extreme_points(ep);
    match mode {
        InitialLabelMode::BoxFill => box_mask(&bbox, height, width),
        InitialLabelMode::InscribedEllipse => {
            let cr = (bbox.row_min + bbox.row_max) as f64 / 2.0;
            let cc = (bbox.col_min + bbox.col_max) as f64 / 2.0;
            let ar = bbox.height() as f64 / 2.0;
            let ac = bbox.width() as f64 / 2.0;
            Ok(BinaryMask::from_fn(height, width, |r, c| {
                let dy = (r as f64 - cr) / ar;
                let dx = (c as f64 - cc) / ac;
                dy * dy + dx * dx <= 1.0
            }))
        }
    }
}
