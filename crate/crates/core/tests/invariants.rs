//! Property tests for the structural invariants that hold on every input,
//! not just the handpicked examples.

use hmlab_core::geom;
use hmlab_core::harmonic::ainfty_scan;
use hmlab_core::measure::{Ball, PointMeasure};
use hmlab_core::riesz::{maximal_density, maximal_riesz, truncated_riesz, Atoms, RieszConfig};
use proptest::prelude::*;

fn small_cloud() -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<f64>)> {
    let pt = (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y)| [x, y]);
    let w = 0.01f64..1.0;
    (
        proptest::collection::vec(pt, 2..12),
        proptest::collection::vec(w, 2..12),
    )
        .prop_map(|(pts, mut ws)| {
            let n = pts.len().min(ws.len());
            ws.truncate(n);
            (pts[..n].to_vec(), ws)
        })
}

fn measure_of(pts: &[[f64; 2]], ws: &[f64]) -> PointMeasure {
    let points: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
    PointMeasure::from_points(1, &points, ws.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn mass_additive_over_disjoint_index_split((pts, ws) in small_cloud(), cut in 0usize..12) {
        let mu = measure_of(&pts, &ws);
        let cut = cut % (mu.len() + 1);
        let left = mu.mass_where(|i| i < cut);
        let right = mu.mass_where(|i| i >= cut);
        let total = mu.mass_where(|_| true);
        prop_assert!((left + right - total).abs() <= 1e-12 * total.max(1.0));
    }

    #[test]
    fn growth_constant_is_scale_covariant((pts, ws) in small_cloud(), scale_pow in -3i32..4) {
        // scaling points by s and weights by s^n leaves mu(B)/r^n invariant
        let s = 2.0f64.powi(scale_pow);
        let mu = measure_of(&pts, &ws);
        let scaled_pts: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] * s, p[1] * s]).collect();
        let scaled_ws: Vec<f64> = ws.iter().map(|w| w * s).collect(); // n = 1
        let mu2 = PointMeasure::from_points(1, &scaled_pts, scaled_ws).unwrap();
        let a = mu.growth_constant_default();
        let b = mu2.growth_constant_default();
        if a.constant.is_finite() {
            prop_assert!((a.constant - b.constant).abs() <= 1e-9 * a.constant.max(1.0),
                "{} vs {}", a.constant, b.constant);
        }
    }

    #[test]
    fn doubling_monotone_in_b((pts, ws) in small_cloud(), r in 0.05f64..1.5, a in 1.1f64..4.0) {
        let mu = measure_of(&pts, &ws);
        let ball = Ball::new(vec![0.0, 0.0], r);
        let mut prev = false;
        for b in [1.0, 1.5, 2.0, 4.0, 16.0] {
            let now = mu.is_doubling_ball(&ball, a, b);
            prop_assert!(!prev || now, "doubling flag flipped back at b = {b}");
            prev = now;
        }
    }

    #[test]
    fn maximal_riesz_dominates_every_truncation((pts, ws) in small_cloud(), eps in 0.01f64..2.0) {
        let cfg = RieszConfig::standard(1);
        let mu = measure_of(&pts, &ws);
        let atoms = Atoms::from_measure(&mu);
        let x = [0.25, -0.1];
        let m = maximal_riesz(&cfg, atoms, None, &x, 0.0);
        let t = geom::norm3(truncated_riesz(&cfg, atoms, None, &x, eps));
        prop_assert!(m >= t - 1e-12 * (1.0 + t));
    }

    #[test]
    fn maximal_operators_nonincreasing_in_delta((pts, ws) in small_cloud()) {
        let cfg = RieszConfig::standard(1);
        let mu = measure_of(&pts, &ws);
        let atoms = Atoms::from_measure(&mu);
        let x = [0.4, 0.3];
        let mut prev_r = f64::INFINITY;
        let mut prev_d = f64::INFINITY;
        for delta in [0.0, 0.2, 0.5, 1.0, 2.0] {
            let r = maximal_riesz(&cfg, atoms, None, &x, delta);
            let d = maximal_density(&cfg, atoms, &x, delta).value;
            prop_assert!(r <= prev_r + 1e-12);
            if prev_d.is_finite() || !d.is_finite() {
                prop_assert!(d <= prev_d + 1e-12 * prev_d.max(1.0));
            }
            prev_r = r;
            prev_d = d;
        }
    }

    #[test]
    fn kernel_antisymmetric_on_atom_pairs(x in -1.0f64..1.0, y in -1.0f64..1.0, w in 0.1f64..2.0) {
        // R_eps evaluated at each of two equal atoms gives opposite vectors
        prop_assume!(x.abs() + y.abs() > 0.1);
        let cfg = RieszConfig::standard(1);
        let pts = vec![vec![0.0, 0.0], vec![x, y]];
        let mu = PointMeasure::from_points(1, &pts, vec![w, w]).unwrap();
        let atoms = Atoms::from_measure(&mu);
        let sep = (x * x + y * y).sqrt();
        let a = truncated_riesz(&cfg, atoms, None, &[0.0, 0.0], sep / 2.0);
        let b = truncated_riesz(&cfg, atoms, None, &[x, y], sep / 2.0);
        for j in 0..3 {
            // numeric negation (0.0 == -0.0) with bit-exact magnitudes
            prop_assert_eq!(a[j], -b[j]);
            prop_assert_eq!(a[j].abs().to_bits(), b[j].abs().to_bits());
        }
    }

    #[test]
    fn ainfty_monotone_and_bounded(
        mu in proptest::collection::vec(0.01f64..1.0, 3..10),
        om in proptest::collection::vec(0.01f64..1.0, 3..10),
    ) {
        let n = mu.len().min(om.len());
        let mu = &mu[..n];
        let om = &om[..n];
        let mut prev = -1.0;
        for k in 0..=10 {
            let eps = k as f64 / 10.0;
            let v = ainfty_scan(mu, om, eps).eps_prime;
            prop_assert!(v >= prev - 1e-15);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            prev = v;
        }
    }
}
