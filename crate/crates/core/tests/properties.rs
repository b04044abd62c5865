mod common;

use eptrace::io::{read_grid, read_pgm_mask, write_grid, write_pgm_mask};
use eptrace::losses::{bce_dice_loss, pseudo_label_loss, usc_loss_with};
use eptrace::metrics::{aggregate, overlap_counts, ImageMetrics};
use eptrace::trace::trace_contour;
use eptrace::uncertainty::binary_entropy;
use eptrace::*;
use proptest::prelude::*;

fn mask_strategy(max: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        proptest::collection::vec(any::<bool>(), h * w).prop_map(move |bits| BinaryMask::new(h, w, bits).unwrap())
    })
}

fn nonempty_mask(max: usize) -> impl Strategy<Value = BinaryMask> {
    mask_strategy(max).prop_filter("nonempty", |m| m.count() > 0)
}

fn prob_grid(h: usize, w: usize) -> impl Strategy<Value = Grid> {
    proptest::collection::vec(0.0..=1.0f64, h * w).prop_map(move |v| Grid::new(h, w, v).unwrap())
}

fn sized_prob_grid(max: usize) -> impl Strategy<Value = Grid> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| prob_grid(h, w))
}

fn positive_grid(h: usize, w: usize) -> impl Strategy<Value = Grid> {
    proptest::collection::vec(0.05..5.0f64, h * w).prop_map(move |v| Grid::new(h, w, v).unwrap())
}

fn pair_of_masks(max: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        let m = move || {
            proptest::collection::vec(any::<bool>(), h * w).prop_map(move |b| BinaryMask::new(h, w, b).unwrap())
        };
        (m(), m())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn extreme_points_lie_on_the_mask(m in nonempty_mask(12)) {
        let ep = extract_extreme_points(&m).unwrap();
        for p in ep.as_array() {
            prop_assert!(m.contains(p));
        }
    }

    #[test]
    fn box_from_points_is_the_tight_box(m in nonempty_mask(12)) {
        let b = bbox_from_extreme_points(&extract_extreme_points(&m).unwrap());
        let (r0, r1, c0, c1) = common::brute_force_box(&m).unwrap();
        prop_assert_eq!((b.row_min, b.row_max, b.col_min, b.col_max), (r0, r1, c0, c1));
    }

    #[test]
    fn box_mask_covers_the_mask(m in nonempty_mask(12)) {
        let b = bbox_from_extreme_points(&extract_extreme_points(&m).unwrap());
        let boxed = box_mask(&b, m.height(), m.width()).unwrap();
        for p in m.foreground() {
            prop_assert!(boxed.contains(p));
        }
    }

    #[test]
    fn mask_to_box_is_idempotent(p in sized_prob_grid(10)) {
        let once = mask_to_box(&p).unwrap();
        prop_assert_eq!(mask_to_box(&once).unwrap(), once);
    }

    #[test]
    fn mask_to_box_is_monotone(
        (p, bump) in (1..=10usize, 1..=10usize).prop_flat_map(|(h, w)| (prob_grid(h, w), prob_grid(h, w)))
    ) {
        let q = Grid::from_fn(p.height(), p.width(), |r, c| {
            let v = p.get(r, c);
            v + (1.0 - v) * bump.get(r, c)
        });
        let (bp, bq) = (mask_to_box(&p).unwrap(), mask_to_box(&q).unwrap());
        for (a, b) in bp.values().iter().zip(bq.values()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn variance_ignores_layer_order(
        (layers, perm) in (2..=8usize).prop_flat_map(|t| {
            (proptest::collection::vec(prob_grid(6, 7), t), Just((0..t).collect::<Vec<_>>()).prop_shuffle())
        })
    ) {
        let a = FeatureStack::from_layers(&layers).unwrap();
        let shuffled: Vec<Grid> = perm.iter().map(|&i| layers[i].clone()).collect();
        let b = FeatureStack::from_layers(&shuffled).unwrap();
        prop_assert_eq!(ensemble_variance(&a), ensemble_variance(&b));
        prop_assert_eq!(ensemble_mean(&a), ensemble_mean(&b));
    }

    #[test]
    fn entropy_is_symmetric(p in 0.0..=1.0f64) {
        prop_assert_eq!(binary_entropy(p, 1e-12), binary_entropy(1.0 - p, 1e-12));
    }

    #[test]
    fn weights_decrease_strictly(a in 0.0..20.0f64, d in 1e-6..5.0f64) {
        let w = confidence_weights(&Grid::new(1, 2, vec![a, a + d]).unwrap()).unwrap();
        prop_assert!(w.get(0, 1) < w.get(0, 0));
        prop_assert!(w.get(0, 0) <= 1.0);
    }

    #[test]
    fn minmax_affine_invariance_on_integers(
        vals in proptest::collection::vec(-1000i32..1000, 2..40),
        a in 1u32..64,
        b in -1000i32..1000,
    ) {
        // integer inputs, power-of-two scale: every step is exact
        let g = Grid::new(1, vals.len(), vals.iter().map(|&v| v as f64).collect()).unwrap();
        let scale = (a.next_power_of_two()) as f64;
        let t = g.map(|v| scale * v + b as f64);
        prop_assert_eq!(minmax_normalize(&g), minmax_normalize(&t));
    }

    #[test]
    fn minmax_affine_invariance_on_reals(g in prob_grid(5, 5), a in 0.01..100.0f64, b in -50.0..50.0f64) {
        let t = g.map(|v| a * v + b);
        let (x, y) = (minmax_normalize(&g), minmax_normalize(&t));
        for (u, v) in x.values().iter().zip(y.values()) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn path_cost_is_symmetric(
        cost in positive_grid(6, 6),
        s in (0..6usize, 0..6usize),
        d in (0..6usize, 0..6usize),
    ) {
        let cost = CostMap::from_values(cost).unwrap();
        let b = BoundingBox::full(6, 6);
        let (s, d) = (PointRC::new(s.0, s.1), PointRC::new(d.0, d.1));
        let fwd = min_cost_path(&cost, s, d, &b, StepLength::Geometric).unwrap();
        let back = min_cost_path(&cost, d, s, &b, StepLength::Geometric).unwrap();
        prop_assert!((fwd.total_cost - back.total_cost).abs() <= 1e-12 * fwd.total_cost.max(1.0));
    }

    #[test]
    fn scaling_cost_scales_total(
        cost in positive_grid(6, 6),
        s in (0..6usize, 0..6usize),
        d in (0..6usize, 0..6usize),
        k in 0..6u32,
    ) {
        // power-of-two scales are exact
        let k = f64::from(1u32 << k) / 4.0;
        let cost = CostMap::from_values(cost).unwrap();
        let b = BoundingBox::full(6, 6);
        let (s, d) = (PointRC::new(s.0, s.1), PointRC::new(d.0, d.1));
        let base = min_cost_path(&cost, s, d, &b, StepLength::Geometric).unwrap();
        let scaled = min_cost_path(&cost.scaled(k).unwrap(), s, d, &b, StepLength::Geometric).unwrap();
        prop_assert_eq!(&scaled.points, &base.points);
        prop_assert_eq!(scaled.total_cost, k * base.total_cost);
    }

    #[test]
    fn zero_alpha_ignores_uncertainty(g in positive_grid(7, 7), u in prob_grid(7, 7)) {
        let with_u = build_cost_map(&g, &u, 0.0, 1e-6).unwrap();
        let without = build_cost_map(&g, &Grid::zeros(7, 7), 0.0, 1e-6).unwrap();
        prop_assert_eq!(with_u.grid(), without.grid());
    }

    #[test]
    fn traced_labels_are_solid_and_contain_the_points(
        cost in positive_grid(10, 10),
        m in proptest::collection::vec(any::<bool>(), 100).prop_filter("nonempty", |b| b.iter().any(|&x| x)),
        margin in 0..3usize,
    ) {
        let cost = CostMap::from_values(cost).unwrap();
        let src = BinaryMask::new(10, 10, m).unwrap();
        let ep = extract_extreme_points(&src).unwrap();
        let traced = trace_contour(&cost, &ep, &TraceOptions { margin, ..Default::default() }).unwrap();
        let label = &traced.mask;
        for p in ep.as_array() {
            prop_assert!(label.contains(p));
        }
        let allowed = bbox_from_extreme_points(&ep).dilate(margin, 10, 10);
        let tight = label.tight_box().unwrap();
        prop_assert!(allowed.contains(PointRC::new(tight.row_min, tight.col_min)));
        prop_assert!(allowed.contains(PointRC::new(tight.row_max, tight.col_max)));
        prop_assert_eq!(label.components4().len(), 1);
        // no holes: the background is one component together with the outside
        let (h, w) = label.shape();
        let padded = BinaryMask::from_fn(h + 2, w + 2, |r, c| {
            r == 0 || c == 0 || r == h + 1 || c == w + 1 || !label.get(r - 1, c - 1)
        });
        prop_assert_eq!(padded.components4().len(), 1);
    }

    #[test]
    fn losses_are_nonnegative(p1 in prob_grid(6, 6), p2 in prob_grid(6, 6), t in proptest::collection::vec(any::<bool>(), 36)) {
        let t = BinaryMask::new(6, 6, t).unwrap();
        prop_assert!(bce_dice_loss(&p1, &t).unwrap().value >= 0.0);
        prop_assert!(usc_loss(&p1, &p2, 1e-12).unwrap().value >= 0.0);
        prop_assert!(box_alignment_loss(&p1, &p2, &t).unwrap().value >= 0.0);
        prop_assert!(pseudo_label_loss(&p1, &p2, &t).unwrap().value >= 0.0);
    }

    #[test]
    fn usc_is_symmetric_and_bounded(p1 in prob_grid(6, 6), p2 in prob_grid(6, 6)) {
        for mode in [WeightGradient::Detached, WeightGradient::Full] {
            let a = usc_loss_with(&p1, &p2, 1e-12, mode).unwrap().value;
            let b = usc_loss_with(&p2, &p1, 1e-12, mode).unwrap().value;
            prop_assert_eq!(a, b);
            let mse = p1.values().iter().zip(p2.values()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 36.0;
            prop_assert!(a <= mse);
        }
    }

    #[test]
    fn total_is_linear(b in 0.0..10.0f64, u in 0.0..10.0f64, p in 0.0..10.0f64, l1 in 0.0..4.0f64, l2 in 0.0..4.0f64) {
        let w = LossWeights { lambda1: l1, lambda2: l2 };
        prop_assert_eq!(total_loss(b, u, p, &w), b + l1 * u + l2 * p);
        prop_assert_eq!(total_loss(b, 0.0, 0.0, &w) + total_loss(0.0, u, 0.0, &w), total_loss(b, u, 0.0, &w));
        let zero = LossWeights { lambda1: 0.0, lambda2: 0.0 };
        prop_assert_eq!(total_loss(b, u, p, &zero), b);
    }

    #[test]
    fn iou_never_exceeds_dice((a, b) in pair_of_masks(10)) {
        let c = overlap_counts(&a, &b).unwrap();
        prop_assert!(c.iou() <= c.dice());
        // |A| + |B| = |A u B| + |A n B|, so dice = 2 iou / (1 + iou)
        prop_assert_eq!(c.a + c.b, c.union + c.intersection);
        let d = 2.0 * c.iou() / (1.0 + c.iou());
        prop_assert!((d - c.dice()).abs() <= 1e-15);
    }

    #[test]
    fn pgm_round_trip(m in mask_strategy(20)) {
        let mut buf = Vec::new();
        write_pgm_mask(&mut buf, &m).unwrap();
        prop_assert_eq!(read_pgm_mask(&buf[..]).unwrap(), m);
    }

    #[test]
    fn f32g_round_trip(v in proptest::collection::vec(-1e6f32..1e6f32, 1..60), w in 1..6usize) {
        let h = v.len() / w;
        prop_assume!(h > 0);
        let g = Grid::new(h, w, v[..h * w].iter().map(|&x| x as f64).collect()).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &g).unwrap();
        prop_assert_eq!(read_grid(&buf[..]).unwrap(), g);
    }

    #[test]
    fn identical_folds_have_zero_std(ious in proptest::collection::vec(0.0..=1.0f64, 1..6), folds in 2..5usize) {
        let rows: Vec<ImageMetrics> = (0..folds)
            .flat_map(|f| ious.iter().enumerate().map(move |(i, &v)| ImageMetrics {
                id: format!("f{f}i{i}"),
                fold: f,
                iou: v,
                dice: 2.0 * v / (1.0 + v),
            }))
            .collect();
        let r = aggregate(&rows).unwrap();
        prop_assert_eq!(r.iou.std, 0.0);
        prop_assert_eq!(r.dice.std, 0.0);
    }
}
