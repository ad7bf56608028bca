use proptest::prelude::*;

use rieszlab::contour::{build_contour, build_contour_with};
use rieszlab::linalg::c;
use rieszlab::region::Shape;

fn shapes() -> impl Strategy<Value = Shape> {
    prop_oneof![
        (-5.0f64..5.0, 0.1f64..4.0, -3.0f64..3.0, 0.1f64..3.0).prop_map(|(x, w, y, h)| Shape::Rectangle {
            x_min: x,
            x_max: x + w,
            y_min: y,
            y_max: y + h,
        }),
        (-5.0f64..5.0, -5.0f64..5.0, 0.1f64..4.0).prop_map(|(x, y, r)| Shape::Circle { center_re: x, center_im: y, radius: r }),
        (0.5f64..10.0, 0.2f64..6.0, 0.0f64..0.9, 0.1f64..2.0).prop_map(|(l, w, p, h)| Shape::CurvilinearTrapezoid {
            r_left: l,
            r_right: l + w,
            p,
            h,
        }),
        (1.0f64..10.0, 0.2f64..3.0, 0.0f64..0.9, 0.05f64..0.5, 0.0f64..0.8).prop_map(|(s, len, p, delta, b)| {
            Shape::PDeltaNeighborhood { s, t: s + len, p, delta, b_prime: b }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn weights_sum_to_zero_and_reverse(shape in shapes(), n in 8usize..64, gl in any::<bool>()) {
        let rule = if gl { "gauss-legendre" } else { "trapezoid" };
        let contour = build_contour_with(&shape, n, rule).unwrap();
        let scale = contour.length().max(1.0);
        // gauss-legendre integrates every arc exactly to rounding; the trapezoid rule only to O(1/n^2)
        let tol = if gl { 1e-11 * scale } else { scale / (n * n) as f64 };
        prop_assert!(contour.weight_sum().norm() <= tol, "{:?}", contour.weight_sum());
        let rev = contour.reversed();
        prop_assert_eq!(rev.weights.len(), contour.weights.len());
        let mut fwd: Vec<_> = contour.nodes.iter().zip(&contour.weights).map(|(z, w)| (z.re, z.im, w.re, w.im)).collect();
        let mut back: Vec<_> = rev.nodes.iter().zip(&rev.weights).map(|(z, w)| (z.re, z.im, -w.re, -w.im)).collect();
        fwd.sort_by(|a, b| a.partial_cmp(b).unwrap());
        back.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(fwd, back);
        prop_assert_eq!(rev.orientation, -contour.orientation);
    }

    #[test]
    fn cauchy_integral_counts_the_interior(shape in shapes()) {
        let contour = build_contour(&shape, 256).unwrap();
        // a point well inside each generated shape: the polyline centroid
        let poly = contour.polyline(32);
        let centroid = poly.iter().sum::<rieszlab::linalg::C64>() / c(poly.len() as f64, 0.0);
        let longest = contour.length() / contour.segments.len() as f64;
        prop_assume!(contour.distance_to(centroid) > 0.1 * longest);
        let wind = contour.winding_number(centroid);
        let integral = contour.integrate(|z| c(1.0, 0.0) / (z - centroid)) / c(0.0, 2.0 * std::f64::consts::PI);
        prop_assert!((integral - c(wind as f64, 0.0)).norm() < 1e-6, "{integral} vs {wind}");
    }
}
