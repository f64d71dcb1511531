use fluctfield_core::potentials::{norm2, PairPotential, Point};
use proptest::prelude::*;

fn kinds() -> Vec<PairPotential> {
    let mut v = Vec::new();
    for d in 1..=3 {
        v.push(PairPotential::smooth_compact(1.3, 1.1, d).unwrap());
        v.push(PairPotential::lennard_jones(1.0, 1.0, 2.5, d).unwrap());
    }
    v
}

fn point(d: usize, c: [f64; 3]) -> Point {
    let mut p = [0.0; 3];
    p[..d].copy_from_slice(&c[..d]);
    p
}

fn neg(p: &Point) -> Point {
    [-p[0], -p[1], -p[2]]
}

// radii where the profile has a kink or a floor
fn near_knot(phi: &PairPotential, r: f64) -> bool {
    let knots = [phi.r_min, phi.range(), 2.0];
    knots.iter().any(|k| (r - k).abs() < 0.02)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn evaluation_is_even(which in 0usize..6, c in prop::array::uniform3(-3.0f64..3.0)) {
        let phi = &kinds()[which];
        let x = point(phi.dim, c);
        prop_assume!(norm2(&x) > 0.0);
        let a = phi.evaluate(&x);
        let b = phi.evaluate(&neg(&x));
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_infinite() && b.is_infinite())),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric error"),
        }
    }

    #[test]
    fn derivatives_match_central_differences(
        which in 0usize..6,
        u in 0.0f64..1.0,
        c in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let phi = &kinds()[which];
        let d = phi.dim;
        let dir = point(d, c);
        let len = norm2(&dir).sqrt();
        prop_assume!(len > 1e-3);
        let (lo, hi) = (phi.r_min + 0.02, phi.range() - 0.02);
        let r = lo + u * (hi - lo);
        prop_assume!(!near_knot(phi, r));
        let x = [dir[0] * r / len, dir[1] * r / len, dir[2] * r / len];
        let (g, h) = phi.derivatives(&x).unwrap();
        let step = 1e-5;
        let f_scale = phi.evaluate(&x).unwrap().abs() + 1.0;
        let g_scale = (0..d).map(|k| g[k].abs()).fold(0.0, f64::max).max(1e-3 * f_scale);
        let h_scale = (0..d).flat_map(|k| (0..d).map(move |l| (k, l))).map(|(k, l)| h[k][l].abs()).fold(0.0, f64::max).max(1e-3 * f_scale);
        for k in 0..d {
            let mut xp = x;
            let mut xm = x;
            xp[k] += step;
            xm[k] -= step;
            let fd = (phi.evaluate(&xp).unwrap() - phi.evaluate(&xm).unwrap()) / (2.0 * step);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * g_scale, "grad {k}: {fd} vs {}", g[k]);
            let (gp, _) = phi.derivatives(&xp).unwrap();
            let (gm, _) = phi.derivatives(&xm).unwrap();
            for l in 0..d {
                let fdh = (gp[l] - gm[l]) / (2.0 * step);
                prop_assert!((fdh - h[l][k]).abs() <= 1e-5 * h_scale, "hess {l}{k}: {fdh} vs {}", h[l][k]);
            }
        }
    }
}

#[test]
fn regime_constant_is_monotone_in_beta() {
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    for phi in kinds() {
        let phi = if phi.is_bounded() { phi } else { phi.with_stability_constant(1.0) };
        let mut last = -1.0;
        for &b in &grid {
            let c = phi.regime_check(b, 1.0).unwrap().c;
            assert!(c >= last - 1e-12, "dim {} beta {b}: {c} < {last}", phi.dim);
            last = c;
        }
    }
}

#[test]
fn regime_constant_is_linear_in_activity() {
    let phi = PairPotential::smooth_compact(1.0, 1.0, 2).unwrap();
    let a = phi.regime_check(0.3, 1.0).unwrap().c;
    let b = phi.regime_check(0.3, 2.5).unwrap().c;
    assert!((b - 2.5 * a).abs() < 1e-12 * b);
}
