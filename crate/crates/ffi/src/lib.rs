//! C ABI over `eptrace`.
//!
//! Objects cross the boundary as opaque handles (`EptGrid`, `EptMask`,
//! `EptStack`) created by `ept_*_new` and released by `ept_*_free`. Every
//! fallible call returns an `EptStatus`; on failure a description is kept
//! per thread and can be read with `ept_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use eptrace::losses::loss_breakdown;
use eptrace::refine::refine_pseudo_label;
use eptrace::trace::trace_contour;
use eptrace::{
    bbox_from_extreme_points, box_mask, build_cost_map, ensemble_mean, ensemble_variance, extract_extreme_points,
    minmax_normalize, sobel_gradient, BinaryMask, CostMap, Error, ExtremePoints, FeatureStack, Grid, LossWeights,
    PointRC, RefineConfig, TraceOptions,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    OutOfBounds = 4,
    EmptyMask = 5,
    Unreachable = 6,
    BufferTooSmall = 7,
    Format = 8,
    Panic = 9,
}

/// Matrix of doubles.
pub struct EptGrid(Grid);

/// Binary mask.
pub struct EptMask(BinaryMask);

/// Monte-Carlo stack of `passes` probability maps.
pub struct EptStack(FeatureStack);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EptPoint {
    pub row: usize,
    pub col: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EptExtremePoints {
    pub top: EptPoint,
    pub bottom: EptPoint,
    pub left: EptPoint,
    pub right: EptPoint,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EptLosses {
    pub boxalign: f64,
    pub usc: f64,
    pub pl: f64,
    pub total: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EptStatus {
    match e {
        Error::EmptyMask => EptStatus::EmptyMask,
        Error::OutOfBounds { .. } => EptStatus::OutOfBounds,
        Error::ShapeMismatch { .. } | Error::PredictorShapeMismatch { .. } => EptStatus::ShapeMismatch,
        Error::Unreachable(..) => EptStatus::Unreachable,
        Error::Format(_) | Error::Io(_) | Error::Json(_) => EptStatus::Format,
        _ => EptStatus::InvalidArgument,
    }
}

struct Fail(EptStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(EptStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EptStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            EptStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn checked_len(dims: &[usize]) -> Result<usize, Fail> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Fail(EptStatus::InvalidArgument, "dimensions overflow".into()))
}

fn point(p: EptPoint) -> PointRC {
    PointRC::new(p.row, p.col)
}

fn ep_from_c(ep: &EptExtremePoints) -> Result<ExtremePoints, Fail> {
    Ok(ExtremePoints::new(
        point(ep.top),
        point(ep.bottom),
        point(ep.left),
        point(ep.right),
    )?)
}

fn ep_to_c(ep: &ExtremePoints) -> EptExtremePoints {
    let p = |q: PointRC| EptPoint { row: q.row, col: q.col };
    EptExtremePoints {
        top: p(ep.top),
        bottom: p(ep.bottom),
        left: p(ep.left),
        right: p(ep.right),
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ept_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ept_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `height * width` row-major values into a new grid.
///
/// # Safety
/// `data` must point to `height * width` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ept_grid_new(
    height: usize,
    width: usize,
    data: *const f64,
    out: *mut *mut EptGrid,
) -> EptStatus {
    guard(|| {
        let n = checked_len(&[height, width])?;
        let values = slice(data, n, "data")?.to_vec();
        let g = Grid::new(height, width, values)?;
        write_out(out, Box::into_raw(Box::new(EptGrid(g))), "out")
    })
}

/// # Safety
/// `grid` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ept_grid_free(grid: *mut EptGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// `grid` must be a live handle; `height` and `width` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ept_grid_shape(grid: *const EptGrid, height: *mut usize, width: *mut usize) -> EptStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        write_out(height, g.height(), "height")?;
        write_out(width, g.width(), "width")
    })
}

/// Copies the grid values (row-major) into `buf`, which must hold `len >= height * width` doubles.
///
/// # Safety
/// `grid` must be a live handle; `buf` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ept_grid_copy(grid: *const EptGrid, buf: *mut f64, len: usize) -> EptStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        copy_into(g.values(), buf, len)
    })
}

unsafe fn copy_into<T: Copy>(values: &[T], buf: *mut T, len: usize) -> Result<(), Fail> {
    if len < values.len() {
        return Err(Fail(
            EptStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", values.len()),
        ));
    }
    if values.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// New mask from `height * width` bytes; nonzero is foreground.
///
/// # Safety
/// `data` must point to `height * width` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ept_mask_new(
    height: usize,
    width: usize,
    data: *const u8,
    out: *mut *mut EptMask,
) -> EptStatus {
    guard(|| {
        let n = checked_len(&[height, width])?;
        let bits = slice(data, n, "data")?.iter().map(|&b| b != 0).collect();
        let m = BinaryMask::new(height, width, bits)?;
        write_out(out, Box::into_raw(Box::new(EptMask(m))), "out")
    })
}

/// # Safety
/// `mask` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ept_mask_free(mask: *mut EptMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// `mask` must be a live handle; `height` and `width` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ept_mask_shape(mask: *const EptMask, height: *mut usize, width: *mut usize) -> EptStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        write_out(height, m.height(), "height")?;
        write_out(width, m.width(), "width")
    })
}

/// Number of foreground pixels.
///
/// # Safety
/// `mask` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ept_mask_count(mask: *const EptMask, count: *mut usize) -> EptStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        write_out(count, m.count(), "count")
    })
}

/// Copies the mask as 0/1 bytes (row-major) into `buf`.
///
/// # Safety
/// `mask` must be a live handle; `buf` must be writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ept_mask_copy(mask: *const EptMask, buf: *mut u8, len: usize) -> EptStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        let bytes: Vec<u8> = m.values().iter().map(|&b| b as u8).collect();
        copy_into(&bytes, buf, len)
    })
}

/// New stack from `passes * height * width` values in (pass, row, col) order.
///
/// # Safety
/// `data` must point to `passes * height * width` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ept_stack_new(
    passes: usize,
    height: usize,
    width: usize,
    data: *const f64,
    out: *mut *mut EptStack,
) -> EptStatus {
    guard(|| {
        let n = checked_len(&[passes, height, width])?;
        let values = slice(data, n, "data")?.to_vec();
        let s = FeatureStack::new(passes, height, width, values)?;
        write_out(out, Box::into_raw(Box::new(EptStack(s))), "out")
    })
}

/// # Safety
/// `stack` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ept_stack_free(stack: *mut EptStack) {
    if !stack.is_null() {
        drop(Box::from_raw(stack));
    }
}

/// # Safety
/// `mask` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ept_extract_extreme_points(mask: *const EptMask, out: *mut EptExtremePoints) -> EptStatus {
    guard(|| {
        let ep = extract_extreme_points(&deref(mask, "mask")?.0)?;
        write_out(out, ep_to_c(&ep), "out")
    })
}

/// Cost map `1 / (G + alpha * U + eps)` from the stack's mean gradient and
/// normalized variance.
///
/// # Safety
/// `stack` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ept_cost_map(
    stack: *const EptStack,
    alpha: f64,
    eps: f64,
    out: *mut *mut EptGrid,
) -> EptStatus {
    guard(|| {
        let s = &deref(stack, "stack")?.0;
        let g = sobel_gradient(&ensemble_mean(s))?;
        let u = minmax_normalize(&ensemble_variance(s));
        let cost = build_cost_map(&g, &u, alpha, eps)?;
        write_out(out, Box::into_raw(Box::new(EptGrid(cost.into_grid()))), "out")
    })
}

/// Traces the contour through the extreme points on a positive cost grid
/// and fills it.
///
/// # Safety
/// `cost` must be a live handle; `ep` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ept_trace(
    cost: *const EptGrid,
    ep: *const EptExtremePoints,
    margin: usize,
    out: *mut *mut EptMask,
) -> EptStatus {
    guard(|| {
        let cost = CostMap::from_values(deref(cost, "cost")?.0.clone())?;
        let ep = ep_from_c(deref(ep, "ep")?)?;
        let opts = TraceOptions {
            margin,
            ..TraceOptions::default()
        };
        let traced = trace_contour(&cost, &ep, &opts)?;
        write_out(out, Box::into_raw(Box::new(EptMask(traced.mask))), "out")
    })
}

/// Full refresh step: stack statistics, cost map, trace and fill.
///
/// # Safety
/// `stack` must be a live handle; `ep` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ept_refine_pseudo_label(
    stack: *const EptStack,
    ep: *const EptExtremePoints,
    alpha: f64,
    margin: usize,
    out: *mut *mut EptMask,
) -> EptStatus {
    guard(|| {
        let s = &deref(stack, "stack")?.0;
        let ep = ep_from_c(deref(ep, "ep")?)?;
        let cfg = RefineConfig {
            alpha,
            margin,
            ..RefineConfig::default()
        };
        let mask = refine_pseudo_label(s, &ep, &cfg)?;
        write_out(out, Box::into_raw(Box::new(EptMask(mask))), "out")
    })
}

/// # Safety
/// `a`, `b` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ept_iou(a: *const EptMask, b: *const EptMask, out: *mut f64) -> EptStatus {
    guard(|| {
        let v = eptrace::iou(&deref(a, "a")?.0, &deref(b, "b")?.0)?;
        write_out(out, v, "out")
    })
}

/// # Safety
/// `a`, `b` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ept_dice(a: *const EptMask, b: *const EptMask, out: *mut f64) -> EptStatus {
    guard(|| {
        let v = eptrace::dice(&deref(a, "a")?.0, &deref(b, "b")?.0)?;
        write_out(out, v, "out")
    })
}

/// Loss components for two probability maps, the box of `ep` and a pseudo
/// label, with default loss settings.
///
/// # Safety
/// All handles must be live; `ep` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ept_losses(
    p1: *const EptGrid,
    p2: *const EptGrid,
    pseudo: *const EptMask,
    ep: *const EptExtremePoints,
    lambda1: f64,
    lambda2: f64,
    out: *mut EptLosses,
) -> EptStatus {
    guard(|| {
        let p1 = &deref(p1, "p1")?.0;
        let p2 = &deref(p2, "p2")?.0;
        let pseudo = &deref(pseudo, "pseudo")?.0;
        let ep = ep_from_c(deref(ep, "ep")?)?;
        let gt_box = box_mask(&bbox_from_extreme_points(&ep), p1.height(), p1.width())?;
        let b = loss_breakdown(
            p1,
            p2,
            &gt_box,
            pseudo,
            &LossWeights { lambda1, lambda2 },
            eptrace::uncertainty::DEFAULT_ENTROPY_EPS,
            &Default::default(),
        )?;
        write_out(
            out,
            EptLosses {
                boxalign: b.boxalign,
                usc: b.usc,
                pl: b.pl,
                total: b.total,
            },
            "out",
        )
    })
}
