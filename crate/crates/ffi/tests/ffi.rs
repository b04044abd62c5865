use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use eptrace_ffi::*;

fn disk(h: usize, w: usize, r: f64) -> Vec<u8> {
    let (cr, cc) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    (0..h * w)
        .map(|i| {
            let (dr, dc) = ((i / w) as f64 - cr, (i % w) as f64 - cc);
            (dr * dr + dc * dc <= r * r) as u8
        })
        .collect()
}

fn mask(h: usize, w: usize, bits: &[u8]) -> *mut EptMask {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ept_mask_new(h, w, bits.as_ptr(), &mut m) }, EptStatus::Ok);
    m
}

fn last_error() -> String {
    let p = ept_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn grid_round_trip() {
    let data: Vec<f64> = (0..6).map(|v| v as f64 * 0.5).collect();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(ept_grid_new(2, 3, data.as_ptr(), &mut g), EptStatus::Ok);
        let (mut h, mut w) = (0, 0);
        assert_eq!(ept_grid_shape(g, &mut h, &mut w), EptStatus::Ok);
        assert_eq!((h, w), (2, 3));
        let mut buf = vec![0.0; 6];
        assert_eq!(ept_grid_copy(g, buf.as_mut_ptr(), 6), EptStatus::Ok);
        assert_eq!(buf, data);
        assert_eq!(ept_grid_copy(g, buf.as_mut_ptr(), 5), EptStatus::BufferTooSmall);
        ept_grid_free(g);
    }
}

#[test]
fn errors_are_reported() {
    let mut g = ptr::null_mut();
    let bad = [1.0, f64::NAN];
    unsafe {
        assert_eq!(ept_grid_new(1, 2, bad.as_ptr(), &mut g), EptStatus::InvalidArgument);
        assert!(g.is_null());
        assert_eq!(ept_grid_new(1, 2, ptr::null(), &mut g), EptStatus::NullPointer);
        assert!(last_error().contains("null"));

        let empty = mask(3, 3, &[0; 9]);
        let mut ep = EptExtremePoints::default();
        assert_eq!(ept_extract_extreme_points(empty, &mut ep), EptStatus::EmptyMask);
        assert!(!last_error().is_empty());

        let other = mask(2, 2, &[1; 4]);
        let mut v = 0.0;
        assert_eq!(ept_iou(empty, other, &mut v), EptStatus::ShapeMismatch);
        ept_mask_free(empty);
        ept_mask_free(other);
        ept_mask_free(ptr::null_mut());
    }
}

#[test]
fn extreme_points_of_plus() {
    #[rustfmt::skip]
    let bits = [
        0, 0, 1, 0, 0,
        0, 0, 1, 0, 0,
        1, 1, 1, 1, 1,
        0, 0, 1, 0, 0,
        0, 0, 1, 0, 0,
    ];
    let m = mask(5, 5, &bits);
    let mut ep = EptExtremePoints::default();
    unsafe {
        assert_eq!(ept_extract_extreme_points(m, &mut ep), EptStatus::Ok);
        ept_mask_free(m);
    }
    assert_eq!(ep.top, EptPoint { row: 0, col: 2 });
    assert_eq!(ep.bottom, EptPoint { row: 4, col: 2 });
    assert_eq!(ep.left, EptPoint { row: 2, col: 0 });
    assert_eq!(ep.right, EptPoint { row: 2, col: 4 });
}

#[test]
fn refine_recovers_sharp_disk() {
    let (h, w, t) = (40, 40, 4);
    let bits = disk(h, w, 12.0);
    let layer: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
    let data: Vec<f64> = (0..t).flat_map(|_| layer.iter().copied()).collect();
    let gt = mask(h, w, &bits);
    unsafe {
        let mut stack = ptr::null_mut();
        assert_eq!(ept_stack_new(t, h, w, data.as_ptr(), &mut stack), EptStatus::Ok);
        let mut ep = EptExtremePoints::default();
        assert_eq!(ept_extract_extreme_points(gt, &mut ep), EptStatus::Ok);

        let mut refined = ptr::null_mut();
        assert_eq!(ept_refine_pseudo_label(stack, &ep, 1.0, 2, &mut refined), EptStatus::Ok);
        let mut score = 0.0;
        assert_eq!(ept_iou(refined, gt, &mut score), EptStatus::Ok);
        assert!(score >= 0.9, "iou {score}");

        // same result through the two-step path
        let mut cost = ptr::null_mut();
        assert_eq!(ept_cost_map(stack, 1.0, 1e-6, &mut cost), EptStatus::Ok);
        let mut traced = ptr::null_mut();
        assert_eq!(ept_trace(cost, &ep, 2, &mut traced), EptStatus::Ok);
        let (mut a, mut b) = (vec![0u8; h * w], vec![0u8; h * w]);
        assert_eq!(ept_mask_copy(refined, a.as_mut_ptr(), a.len()), EptStatus::Ok);
        assert_eq!(ept_mask_copy(traced, b.as_mut_ptr(), b.len()), EptStatus::Ok);
        assert_eq!(a, b);

        let mut d = 0.0;
        assert_eq!(ept_dice(refined, gt, &mut d), EptStatus::Ok);
        assert_eq!(d, 2.0 * score / (1.0 + score));

        ept_mask_free(traced);
        ept_grid_free(cost);
        ept_mask_free(refined);
        ept_stack_free(stack);
        ept_mask_free(gt);
    }
}

#[test]
fn losses_match_core() {
    let (h, w) = (6, 6);
    let p1: Vec<f64> = (0..h * w).map(|i| 0.1 + 0.8 * ((i * 7) % 11) as f64 / 10.0).collect();
    let p2: Vec<f64> = (0..h * w).map(|i| 0.05 + 0.9 * ((i * 5) % 13) as f64 / 12.0).collect();
    let pseudo_bits: Vec<u8> = (0..h * w)
        .map(|i| ((1..5).contains(&(i / w)) && (1..4).contains(&(i % w))) as u8)
        .collect();
    let ep = EptExtremePoints {
        top: EptPoint { row: 1, col: 2 },
        bottom: EptPoint { row: 4, col: 2 },
        left: EptPoint { row: 2, col: 1 },
        right: EptPoint { row: 2, col: 3 },
    };
    let mut out = EptLosses::default();
    unsafe {
        let (mut g1, mut g2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ept_grid_new(h, w, p1.as_ptr(), &mut g1), EptStatus::Ok);
        assert_eq!(ept_grid_new(h, w, p2.as_ptr(), &mut g2), EptStatus::Ok);
        let pseudo = mask(h, w, &pseudo_bits);
        assert_eq!(ept_losses(g1, g2, pseudo, &ep, 1.0, 1.0, &mut out), EptStatus::Ok);
        assert_eq!(
            ept_losses(g1, g2, pseudo, &ep, -1.0, 1.0, &mut out),
            EptStatus::InvalidArgument
        );
        assert_eq!(ept_losses(g1, g2, pseudo, &ep, 1.0, 1.0, &mut out), EptStatus::Ok);
        ept_mask_free(pseudo);
        ept_grid_free(g1);
        ept_grid_free(g2);
    }

    let g1 = eptrace::Grid::new(h, w, p1).unwrap();
    let g2 = eptrace::Grid::new(h, w, p2).unwrap();
    let pseudo = eptrace::BinaryMask::new(h, w, pseudo_bits.iter().map(|&b| b == 1).collect()).unwrap();
    let gt_box = eptrace::BinaryMask::from_fn(h, w, |r, c| (1..=4).contains(&r) && (1..=3).contains(&c));
    let expect = eptrace::losses::loss_breakdown(
        &g1,
        &g2,
        &gt_box,
        &pseudo,
        &eptrace::LossWeights::default(),
        1e-12,
        &Default::default(),
    )
    .unwrap();
    assert_eq!(
        (out.boxalign, out.usc, out.pl, out.total),
        (expect.boxalign, expect.usc, expect.pl, expect.total)
    );
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ept_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/eptrace.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "ept_grid_new",
        "ept_mask_new",
        "ept_stack_new",
        "ept_extract_extreme_points",
        "ept_cost_map",
        "ept_trace",
        "ept_refine_pseudo_label",
        "ept_iou",
        "ept_dice",
        "ept_losses",
        "ept_last_error",
        "typedef struct EptGrid EptGrid",
        "EPT_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }

    // syntax check with the system C compiler when one is available
    if let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    {
        assert!(status.success(), "header does not compile");
    }
}
