mod common;

use common::oracle;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rankmap::baseline::{makima_interp, makima_slopes, spline_interp, IndexedSamples};
use rankmap::channel::{rank_from_singular_values, singular_values};
use rankmap::correlation::{pearson, CorrelationModel, RURAL_COEFFICIENTS};
use rankmap::covermap::RankGrid;
use rankmap::eval::{calibrate_offset, mae, rank_histogram, Trace, TraceQuantity, TraceSample};
use rankmap::kriging::{semivariogram, solve_weights};
use rankmap::raytrace::{fresnel_reflection, Polarization};
use rankmap::scene::Grid;

fn model() -> CorrelationModel {
    CorrelationModel::from_coefficients(RURAL_COEFFICIENTS, 500.0)
}

fn distinct_points(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::btree_set((0i32..40, 0i32..40), 1..max)
        .prop_map(|s| s.into_iter().map(|(x, y)| [x as f64 * 30.0, y as f64 * 30.0]).collect())
}

fn sorted_samples() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    prop::collection::btree_set(0usize..500, 3..25).prop_flat_map(|idx| {
        let n = idx.len();
        (Just(idx.into_iter().collect::<Vec<_>>()), prop::collection::vec(0.0f64..4.0, n))
    })
}

fn samples(x: &[usize], y: &[f64]) -> IndexedSamples {
    IndexedSamples::new(x.iter().copied().zip(y.iter().copied()).collect()).unwrap()
}

proptest! {
    #[test]
    fn kriging_weights_sum_to_one(pts in distinct_points(25), tx in 0.0f64..1200.0, ty in 0.0f64..1200.0, v2 in 0.01f64..4.0) {
        let s = solve_weights(&pts, [tx, ty], |p, q| semivariogram(&model(), v2, p, q)).unwrap();
        prop_assert!(!s.fallback);
        prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kriging_is_exact_at_samples(pts in distinct_points(25), pick in any::<prop::sample::Index>()) {
        let k = pick.index(pts.len());
        let s = solve_weights(&pts, pts[k], |p, q| semivariogram(&model(), 1.0, p, q)).unwrap();
        for (i, w) in s.weights.iter().enumerate() {
            let expect = if i == k { 1.0 } else { 0.0 };
            prop_assert!((w - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn kriging_translation_invariant(pts in distinct_points(15), dx in -5000.0f64..5000.0, dy in -5000.0f64..5000.0) {
        let target = [301.0, 457.0];
        let g = |p: [f64; 2], q: [f64; 2]| semivariogram(&model(), 0.5, p, q);
        let a = solve_weights(&pts, target, g).unwrap();
        let moved: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
        let b = solve_weights(&moved, [target[0] + dx, target[1] + dy], g).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn baselines_exact_at_knots((x, y) in sorted_samples()) {
        let s = samples(&x, &y);
        for (xi, yi) in x.iter().zip(&y) {
            prop_assert!((spline_interp(&s, *xi as f64).unwrap() - yi).abs() < 1e-9);
            prop_assert!((makima_interp(&s, *xi as f64).unwrap() - yi).abs() < 1e-9);
        }
    }

    #[test]
    fn baselines_reproduce_affine_data((x, _) in sorted_samples(), a in -2.0f64..2.0, b in -5.0f64..5.0, t in 0.0f64..1.0) {
        let y: Vec<f64> = x.iter().map(|&i| a * i as f64 + b).collect();
        let s = samples(&x, &y);
        let x0 = x[0] as f64 + t * (x[x.len() - 1] - x[0]) as f64;
        let expect = a * x0 + b;
        prop_assert!((spline_interp(&s, x0).unwrap() - expect).abs() < 1e-9 * (1.0 + expect.abs()));
        prop_assert!((makima_interp(&s, x0).unwrap() - expect).abs() < 1e-9 * (1.0 + expect.abs()));
    }

    #[test]
    fn spline_matches_dense_oracle((x, y) in sorted_samples(), t in 0.0f64..1.0) {
        let s = samples(&x, &y);
        let xf: Vec<f64> = x.iter().map(|&i| i as f64).collect();
        let x0 = xf[0] + t * (xf[xf.len() - 1] - xf[0]);
        let ours = spline_interp(&s, x0).unwrap();
        let reference = oracle::natural_spline(&xf, &y, x0);
        prop_assert!((ours - reference).abs() < 1e-8, "{} vs {}", ours, reference);
    }

    #[test]
    fn makima_is_local((x, y) in sorted_samples(), bump in 0.5f64..3.0) {
        prop_assume!(x.len() >= 8);
        // perturbing knot 0 leaves the slopes from knot 3 on unchanged
        let mut y2 = y.clone();
        y2[0] += bump;
        let xf: Vec<f64> = x.iter().map(|&i| i as f64).collect();
        let a = makima_slopes(&xf, &y);
        let b = makima_slopes(&xf, &y2);
        for i in 3..x.len() {
            prop_assert!((a[i] - b[i]).abs() < 1e-12);
        }
        let (lo, hi) = (xf[4], xf[5]);
        for k in 0..=10 {
            let x0 = lo + (hi - lo) * k as f64 / 10.0;
            prop_assert!((makima_interp(&samples(&x, &y), x0).unwrap() - makima_interp(&samples(&x, &y2), x0).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_recovers_nearest_grid_point(c in -50.0f64..50.0) {
        let sim: Vec<TraceSample> = (0..40)
            .map(|i| TraceSample { t: i as f64 * 0.1, position: [0.0; 3], value: -70.0 + (i as f64).cos() * 6.0, tower: None })
            .collect();
        let meas: Vec<TraceSample> = sim.iter().map(|s| TraceSample { value: s.value + c, ..*s }).collect();
        let cal = calibrate_offset(
            &Trace::new(TraceQuantity::RssDbm, meas).unwrap(),
            &Trace::new(TraceQuantity::RssDbm, sim).unwrap(),
        ).unwrap();
        prop_assert!((cal.offset_db - c).abs() <= 0.05 + 1e-9);
    }

    #[test]
    fn mae_is_permutation_invariant(v in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..50), seed in any::<u64>()) {
        let (t, e): (Vec<_>, Vec<_>) = v.iter().map(|(a, b)| (Some(*a), Some(*b))).unzip();
        let mut idx: Vec<usize> = (0..v.len()).collect();
        let mut s = seed;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let tp: Vec<_> = idx.iter().map(|&i| t[i]).collect();
        let ep: Vec<_> = idx.iter().map(|&i| e[i]).collect();
        prop_assert!((mae(&t, &e).unwrap() - mae(&tp, &ep).unwrap()).abs() < 1e-12);
        prop_assert!(mae(&t, &e).unwrap() >= 0.0);
    }

    #[test]
    fn pearson_bounded_and_symmetric(v in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 2..30)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        if let Some(r) = pearson(&a, &b) {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((r - pearson(&b, &a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_sums_to_one(cells in prop::collection::vec(prop::option::of(1u8..5), 1..60)) {
        let n = cells.len();
        let mut rg = RankGrid::new(Grid { nx: n, ny: 1, spacing: 30.0 }, vec![30.0], vec![10.0]);
        rg.ranks = cells.clone();
        let h = rank_histogram(&rg, 0, 0);
        prop_assert!((h.total() - 1.0).abs() < 1e-12);
        prop_assert_eq!(h.z_fraction, rankmap::covermap::blockage_fraction(&cells));
    }

    #[test]
    fn rank_monotone_in_threshold(re in prop::collection::vec(-1.0f64..1.0, 16), im in prop::collection::vec(-1.0f64..1.0, 16)) {
        let h: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let sv = singular_values(&DMatrix::from_row_slice(4, 4, &h));
        prop_assume!(sv[0] > 0.0);
        let r: Vec<usize> = [10.0, 100.0, 1000.0].iter().map(|&k| rank_from_singular_values(&sv, k).unwrap()).collect();
        prop_assert!(r[0] <= r[1] && r[1] <= r[2]);
    }

    #[test]
    fn passive_fresnel_magnitude(er in 1.0f64..80.0, ei in 0.0f64..30.0, theta in 0.0f64..std::f64::consts::FRAC_PI_2) {
        let eps = Complex64::new(er, -ei);
        for pol in [Polarization::TE, Polarization::TM] {
            prop_assert!(fresnel_reflection(eps, theta, pol).norm() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn grid_neighbour_spacing() {
    let g = Grid::new([1080.0, 2130.0], 30.0).unwrap();
    let p = g.positions();
    for i in [0, 35, 36, 1000, 2555] {
        let best = p
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| (q[0] - p[i][0]).hypot(q[1] - p[i][1]))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, 30.0);
    }
}
