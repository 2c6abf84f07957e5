use proptest::prelude::*;

use tiltpath::collocation::{FeatureMap, Functional, Representer};
use tiltpath::densities::{GaussianMixture, QuadratureRule};
use tiltpath::kernels::{DerivOrder, ProductKernel};
use tiltpath::metrics::{fraction_left, mmd, spatial_rkhs_norm, Bandwidth, SliceNorm};
use tiltpath::transport::{mccann_inverse, mccann_map, mccann_position};

fn mixture() -> impl Strategy<Value = GaussianMixture> {
    prop::collection::vec((0.1f64..1.0, -6.0f64..6.0, 0.4f64..2.5), 1..4).prop_map(|c| {
        let total: f64 = c.iter().map(|t| t.0).sum();
        let triples: Vec<(f64, f64, f64)> = c.iter().map(|&(w, m, s)| (w / total, m, s)).collect();
        GaussianMixture::from_triples(&triples).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_inverts_cdf(m in mixture(), p in 1e-6f64..(1.0 - 1e-6)) {
        let x = m.quantile(p).unwrap();
        prop_assert!((m.cdf(x) - p).abs() <= 2e-9, "{} vs {p}", m.cdf(x));
    }

    #[test]
    fn mixture_density_integrates_to_one(m in mixture()) {
        let rule = QuadratureRule::default();
        let total: f64 = rule.points().map(|(x, w)| w * m.pdf(x)).sum();
        prop_assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn score_is_log_density_slope(m in mixture(), x in -8.0f64..8.0) {
        let h = 1e-5;
        let fd = (m.log_pdf(x + h) - m.log_pdf(x - h)) / (2.0 * h);
        prop_assert!((fd - m.score(x)).abs() <= 1e-5 * (1.0 + m.score(x).abs()));
    }

    #[test]
    fn mccann_map_is_monotone_and_invertible(eta in mixture(), pi in mixture(), a in -4.0f64..4.0, d in 1e-3f64..2.0) {
        let (ya, yb) = (mccann_map(&eta, &pi, a).unwrap(), mccann_map(&eta, &pi, a + d).unwrap());
        prop_assert!(yb > ya);
        let back = mccann_inverse(&eta, &pi, ya).unwrap();
        prop_assert!((back - a).abs() <= 1e-6 * (1.0 + a.abs()));
        prop_assert_eq!(mccann_position(&eta, &pi, a, 0.0).unwrap(), a);
    }

    #[test]
    fn mmd_symmetric_and_nonnegative(
        a in prop::collection::vec(-5.0f64..5.0, 1..40),
        b in prop::collection::vec(-5.0f64..5.0, 1..40),
    ) {
        let ab = mmd(&a, &b, Bandwidth::MedianHeuristic).unwrap();
        let ba = mmd(&b, &a, Bandwidth::MedianHeuristic).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(mmd(&a, &a, Bandwidth::MedianHeuristic).unwrap() <= 1e-12);
    }

    #[test]
    fn fraction_left_permutation_invariant(mut v in prop::collection::vec(-10.0f64..10.0, 1..60), thr in -5.0f64..5.0) {
        let f = fraction_left(&v, thr).unwrap();
        v.reverse();
        prop_assert_eq!(f, fraction_left(&v, thr).unwrap());
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn kernel_swap_symmetry(
        sx in 0.2f64..4.0, st in 0.05f64..1.0,
        x in -5.0f64..5.0, t in 0.0f64..1.0, xp in -5.0f64..5.0, tp in 0.0f64..1.0,
        sl in 0u8..3, tl in 0u8..2, sr in 0u8..3, tr in 0u8..2,
    ) {
        let k = ProductKernel::new(sx, st).unwrap();
        let o = DerivOrder::new(sl, tl, sr, tr).unwrap();
        prop_assert_eq!(k.deriv(o, (x, t), (xp, tp)), k.deriv(o.swap(), (xp, tp), (x, t)));
    }

    #[test]
    fn spatial_norms_are_homogeneous(c in -5.0f64..5.0, x0 in -2.0f64..2.0, t in 0.0f64..1.0) {
        let k = ProductKernel::new(1.0, 0.4).unwrap();
        let f = FeatureMap::new(vec![Functional::eval((x0, 0.5)), Functional::space_deriv((0.3, 0.2))], k);
        let u1 = Representer::new(f.clone(), vec![1.0, -0.7]).unwrap();
        let uc = Representer::new(f, vec![c, -0.7 * c]).unwrap();
        let grid: Vec<f64> = (0..15).map(|i| -4.0 + 0.6 * i as f64).collect();
        let n1 = spatial_rkhs_norm(&u1, t, &grid, k.space).unwrap();
        let nc = spatial_rkhs_norm(&uc, t, &grid, k.space).unwrap();
        prop_assert!((nc - c.abs() * n1).abs() <= 1e-9 * (1.0 + nc));
        let e1 = SliceNorm::new(&u1).norm_at(t);
        let ec = SliceNorm::new(&uc).norm_at(t);
        prop_assert!((ec - c.abs() * e1).abs() <= 1e-9 * (1.0 + ec));
        prop_assert!(n1 <= e1 * (1.0 + 1e-8));
    }
}
