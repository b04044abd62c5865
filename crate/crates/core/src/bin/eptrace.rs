use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use eptrace::io::{
    contour_overlay, load_grid, load_json, load_mask, load_stack, save_grid, save_json, save_mask, write_pgm_bytes,
};
use eptrace::losses::loss_breakdown;
use eptrace::metrics::ImageMetrics;
use eptrace::phantom::{random_shape, InitialLabelMode, ShapeParams, SpeckleParams};
use eptrace::predictor::SharpnessRamp;
use eptrace::refine::{refinement_maps, RefinementOutcome};
use eptrace::trace::trace_contour;
use eptrace::{
    aggregate, bbox_from_extreme_points, box_mask, extract_extreme_points, generate_phantom, initial_pseudo_from_box,
    make_folds, run_refinement_loop, BinaryMask, Error, ExtremePoints, FixedStackPredictor, Grid, Predictor,
    RefineConfig, Result, Sample, SyntheticPredictor,
};

#[derive(Parser)]
#[command(
    name = "eptrace",
    version,
    about = "Extreme-point pseudo-label tracing and refinement"
)]
struct Cli {
    /// JSON configuration (refinement settings, predictor, phantom and eval options).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extreme points and tight box of a mask: points.json, box.json.
    ExtractPoints {
        #[arg(long)]
        mask: PathBuf,
    },
    /// Cost map from a Monte-Carlo stack: cost.f32g.
    Costmap(CostmapArgs),
    /// Pseudo label from a cost map and extreme points: pseudo.pgm.
    Trace(TraceArgs),
    /// Loss components for two probability maps: losses.json.
    Losses(LossesArgs),
    /// Epoch loop with periodic pseudo-label refresh.
    Refine {
        #[arg(long)]
        manifest: PathBuf,
        /// Also write contour overlays for every refresh.
        #[arg(long)]
        overlays: bool,
    },
    /// IoU/Dice with fold statistics: metrics.json.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Synthetic phantom set with a refine manifest.
    Phantom {
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
}

#[derive(Args)]
struct CostmapArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    /// Also write mean, uncertainty and gradient maps.
    #[arg(long)]
    all_maps: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    cost: PathBuf,
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    margin: Option<usize>,
    /// Write overlay.pgm with the traced contour.
    #[arg(long)]
    overlay: bool,
    /// Background for the overlay (defaults to the cost map).
    #[arg(long)]
    image: Option<PathBuf>,
}

#[derive(Args)]
struct LossesArgs {
    #[arg(long)]
    p1: PathBuf,
    #[arg(long)]
    p2: PathBuf,
    #[arg(long)]
    pseudo: PathBuf,
    #[arg(long)]
    points: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
struct CliConfig {
    #[serde(flatten)]
    refine: RefineConfig,
    predictor: PredictorConfig,
    phantom: PhantomConfig,
    eval: EvalConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum PredictorConfig {
    /// Needs `gt` for every sample.
    Synthetic {
        #[serde(default = "default_sharpness")]
        sharpness: f64,
        #[serde(default = "default_noise")]
        noise_sigma: f64,
        #[serde(default)]
        ramp: Option<SharpnessRamp>,
    },
    /// Needs `stack` for every sample.
    FixedStack,
}

fn default_sharpness() -> f64 {
    4.0
}

fn default_noise() -> f64 {
    0.5
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig::Synthetic {
            sharpness: default_sharpness(),
            noise_sigma: default_noise(),
            ramp: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
struct PhantomConfig {
    height: usize,
    width: usize,
    /// Fixed geometry; random per phantom when absent.
    shape: Option<ShapeParams>,
    speckle: SpeckleParams,
    initial_label: InitialLabelMode,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            shape: None,
            speckle: SpeckleParams::default(),
            initial_label: InitialLabelMode::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
struct EvalConfig {
    /// Used for entries without an explicit fold.
    n_folds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_folds: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RefineManifest {
    samples: Vec<RefineEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RefineEntry {
    id: String,
    image: PathBuf,
    points: PathBuf,
    initial_pseudo: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stack: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
struct EvalManifest {
    samples: Vec<EvalEntry>,
}

#[derive(Debug, Clone, Deserialize)]
struct EvalEntry {
    id: String,
    prediction: PathBuf,
    gt: PathBuf,
    #[serde(default)]
    fold: Option<usize>,
}

#[derive(Serialize)]
struct BoxJson {
    row_min: usize,
    row_max: usize,
    col_min: usize,
    col_max: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg: CliConfig = match &cli.config {
        Some(p) => load_json(p)?,
        None => CliConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.refine.seed = seed;
    }
    fs::create_dir_all(&cli.out).map_err(|e| Error::Format(format!("{}: {e}", cli.out.display())))?;
    let out = cli.out.as_path();
    match cli.command {
        Command::ExtractPoints { mask } => extract_points(&mask, out),
        Command::Costmap(args) => costmap(&args, &cfg, out),
        Command::Trace(args) => trace(&args, &cfg, out),
        Command::Losses(args) => losses(&args, &cfg, out),
        Command::Refine { manifest, overlays } => refine(&manifest, overlays, &cfg, out),
        Command::Eval { manifest } => eval(&manifest, &cfg, out),
        Command::Phantom { count } => phantom(count, &cfg, out),
    }
}

fn extract_points(mask: &Path, out: &Path) -> Result<()> {
    let mask = load_mask(mask)?;
    let ep = extract_extreme_points(&mask)?;
    let b = bbox_from_extreme_points(&ep);
    save_json(&out.join("points.json"), &ep)?;
    save_json(
        &out.join("box.json"),
        &BoxJson {
            row_min: b.row_min,
            row_max: b.row_max,
            col_min: b.col_min,
            col_max: b.col_max,
        },
    )
}

fn costmap(args: &CostmapArgs, cfg: &CliConfig, out: &Path) -> Result<()> {
    let stack = load_stack(&args.stack)?;
    let maps = refinement_maps(&stack, args.alpha.unwrap_or(cfg.refine.alpha), cfg.refine.eps_cost)?;
    save_grid(&out.join("cost.f32g"), maps.cost.grid())?;
    if args.all_maps {
        save_grid(&out.join("mean.f32g"), &maps.mean)?;
        save_grid(&out.join("uncertainty.f32g"), &maps.uncertainty)?;
        save_grid(&out.join("gradient.f32g"), &maps.gradient)?;
    }
    Ok(())
}

fn trace(args: &TraceArgs, cfg: &CliConfig, out: &Path) -> Result<()> {
    let cost_grid = load_grid(&args.cost)?;
    let cost = eptrace::CostMap::from_values(cost_grid.clone())?;
    let ep: ExtremePoints = load_json(&args.points)?;
    ep.validate()?;
    let mut opts = cfg.refine.trace_options();
    if let Some(m) = args.margin {
        opts.margin = m;
    }
    let traced = trace_contour(&cost, &ep, &opts)?;
    save_mask(&out.join("pseudo.pgm"), &traced.mask)?;
    if args.overlay {
        let base = match &args.image {
            Some(p) => load_grid(p)?,
            None => cost_grid,
        };
        write_overlay(&out.join("overlay.pgm"), &base, &traced.contour)?;
    }
    Ok(())
}

fn losses(args: &LossesArgs, cfg: &CliConfig, out: &Path) -> Result<()> {
    let p1 = load_grid(&args.p1)?;
    let p2 = load_grid(&args.p2)?;
    let pseudo = load_mask(&args.pseudo)?;
    let ep: ExtremePoints = load_json(&args.points)?;
    ep.validate()?;
    let gt_box = box_mask(&bbox_from_extreme_points(&ep), p1.height(), p1.width())?;
    let report = loss_breakdown(
        &p1,
        &p2,
        &gt_box,
        &pseudo,
        &cfg.refine.weights,
        cfg.refine.eps_entropy,
        &cfg.refine.losses,
    )?;
    save_json(&out.join("losses.json"), &report)?;
    print!("{}", eptrace::io::to_json_string(&report)?);
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn refine(manifest_path: &Path, overlays: bool, cfg: &CliConfig, out: &Path) -> Result<()> {
    let manifest: RefineManifest = load_json(manifest_path)?;
    let dir = manifest_dir(manifest_path);
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for e in &manifest.samples {
        let ep: ExtremePoints = load_json(&resolve(&dir, &e.points))?;
        ep.validate()?;
        samples.push(Sample {
            id: e.id.clone(),
            image: load_grid(&resolve(&dir, &e.image))?,
            ep,
            initial_pseudo: load_mask(&resolve(&dir, &e.initial_pseudo))?,
            gt: e.gt.as_ref().map(|p| load_mask(&resolve(&dir, p))).transpose()?,
        });
    }

    let mut predictor: Box<dyn Predictor> = match &cfg.predictor {
        PredictorConfig::Synthetic {
            sharpness,
            noise_sigma,
            ramp,
        } => {
            let gts = samples
                .iter()
                .map(|s| {
                    s.gt.clone()
                        .ok_or_else(|| Error::Format(format!("sample {}: synthetic predictor needs gt", s.id)))
                })
                .collect::<Result<Vec<BinaryMask>>>()?;
            let p = SyntheticPredictor::new(&gts, *sharpness, *noise_sigma)?;
            Box::new(match ramp {
                Some(r) => p.with_ramp(*r),
                None => p,
            })
        }
        PredictorConfig::FixedStack => {
            let stacks = manifest
                .samples
                .iter()
                .map(|e| match &e.stack {
                    Some(p) => load_stack(&resolve(&dir, p)),
                    None => Err(Error::Format(format!(
                        "sample {}: fixed-stack predictor needs stack",
                        e.id
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            Box::new(FixedStackPredictor::new(stacks))
        }
    };

    let RefinementOutcome { log, .. } = run_refinement_loop(&samples, predictor.as_mut(), &cfg.refine)?;
    for r in &log.refreshes {
        if let Some(label) = &r.label {
            save_mask(&out.join(format!("{}_e{}.pgm", r.id, r.epoch)), label)?;
        }
        if overlays {
            if let Some(contour) = &r.contour {
                write_overlay(
                    &out.join(format!("{}_e{}_overlay.pgm", r.id, r.epoch)),
                    &samples[r.sample].image,
                    contour,
                )?;
            }
        }
    }
    save_json(&out.join("refinement_log.json"), &log)
}

fn eval(manifest_path: &Path, cfg: &CliConfig, out: &Path) -> Result<()> {
    let manifest: EvalManifest = load_json(manifest_path)?;
    let dir = manifest_dir(manifest_path);
    let needs_split = manifest.samples.iter().any(|e| e.fold.is_none());
    let split = if needs_split {
        let ids: Vec<&str> = manifest.samples.iter().map(|e| e.id.as_str()).collect();
        Some(make_folds(&ids, cfg.eval.n_folds, cfg.refine.seed)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(manifest.samples.len());
    for e in &manifest.samples {
        let pred = load_mask(&resolve(&dir, &e.prediction))?;
        let gt = load_mask(&resolve(&dir, &e.gt))?;
        let counts = eptrace::metrics::overlap_counts(&pred, &gt)?;
        let fold = match (e.fold, &split) {
            (Some(f), _) => f,
            (None, Some(s)) => s.assignments[&e.id],
            (None, None) => unreachable!(),
        };
        rows.push(ImageMetrics {
            id: e.id.clone(),
            fold,
            iou: counts.iou(),
            dice: counts.dice(),
        });
    }
    let report = aggregate(&rows)?;
    save_json(&out.join("metrics.json"), &report)
}

fn phantom(count: usize, cfg: &CliConfig, out: &Path) -> Result<()> {
    let pc = &cfg.phantom;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let seed = eptrace::seed::derive_seed(cfg.refine.seed, &[i as u64]);
        let shape = pc.shape.clone().unwrap_or_else(|| random_shape(seed));
        let s = generate_phantom(pc.height, pc.width, &shape, &pc.speckle, seed)?;
        let initial = initial_pseudo_from_box(&s.ep, pc.height, pc.width, pc.initial_label)?;
        let id = format!("phantom{i:03}");
        let entry = RefineEntry {
            image: format!("{id}_image.f32g").into(),
            points: format!("{id}_points.json").into(),
            initial_pseudo: format!("{id}_initial.pgm").into(),
            gt: Some(format!("{id}_gt.pgm").into()),
            stack: None,
            id,
        };
        save_grid(&out.join(&entry.image), &s.image)?;
        save_json(&out.join(&entry.points), &s.ep)?;
        save_mask(&out.join(&entry.initial_pseudo), &initial)?;
        save_mask(&out.join(entry.gt.as_ref().unwrap()), &s.gt)?;
        entries.push(entry);
    }
    save_json(&out.join("manifest.json"), &RefineManifest { samples: entries })
}

fn write_overlay(path: &Path, base: &Grid, contour: &BinaryMask) -> Result<()> {
    let bytes = contour_overlay(base, contour)?;
    let mut buf = Vec::new();
    write_pgm_bytes(&mut buf, base.height(), base.width(), &bytes)?;
    fs::write(path, buf).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
