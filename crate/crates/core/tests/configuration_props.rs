use fluctfield_core::configuration::{drift_naive, total_energy_naive, Configuration, Torus};
use fluctfield_core::potentials::{PairPotential, Point};
use proptest::prelude::*;

fn potential(which: usize, d: usize) -> PairPotential {
    if which == 0 {
        PairPotential::smooth_compact(1.0, 1.2, d).unwrap()
    } else {
        PairPotential::lennard_jones(1.0, 1.0, 2.5, d).unwrap()
    }
}

// drop points that land inside the hard floor of an earlier one
fn thin(t: &Torus, raw: &[[f64; 3]], d: usize, r_min: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for c in raw {
        let mut p = [0.0; 3];
        for k in 0..d {
            p[k] = c[k] * t.side;
        }
        let ok = out.iter().all(|q| {
            let v = t.displacement(&p, q);
            (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() > r_min * 1.05
        });
        if ok {
            out.push(p);
        }
    }
    out
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cell_list_matches_naive(
        which in 0usize..2,
        d in 1usize..=3,
        side in 5.5f64..11.0,
        raw in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 0..60),
    ) {
        let phi = potential(which, d);
        let t = Torus::new(side, d).unwrap();
        let pts = thin(&t, &raw, d, phi.r_min);
        let c = Configuration::new(t, pts, phi.range());
        prop_assert!(rel(c.total_energy(&phi), total_energy_naive(&c, &phi)) < 1e-12);
        let fast = c.drift(&phi, 0.7).unwrap();
        let slow = drift_naive(&c, &phi, 0.7);
        for (a, b) in fast.iter().zip(&slow) {
            for k in 0..3 {
                prop_assert!(rel(a[k], b[k]) < 1e-12);
            }
        }
    }

    #[test]
    fn energy_is_invariant_under_translation_and_relabeling(
        d in 1usize..=3,
        shift in prop::array::uniform3(-20.0f64..20.0),
        raw in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 2..40),
        seed in any::<u64>(),
    ) {
        let phi = potential(1, d);
        let t = Torus::new(7.0, d).unwrap();
        let pts = thin(&t, &raw, d, phi.r_min);
        let e0 = Configuration::new(t, pts.clone(), phi.range()).total_energy(&phi);
        let moved: Vec<Point> = pts
            .iter()
            .map(|p| {
                let mut q = *p;
                for k in 0..d {
                    q[k] += shift[k];
                }
                t.wrap(q)
            })
            .collect();
        let e1 = Configuration::new(t, moved, phi.range()).total_energy(&phi);
        prop_assert!(rel(e0, e1) < 1e-11, "{e0} {e1}");
        let mut perm = pts.clone();
        let n = perm.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let e2 = Configuration::new(t, perm, phi.range()).total_energy(&phi);
        prop_assert!(rel(e0, e2) < 1e-12);
    }

    #[test]
    fn snapshot_round_trip(
        d in 1usize..=3,
        raw in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 0..30),
        seed in any::<u64>(),
        step in any::<u64>(),
    ) {
        let t = Torus::new(3.3, d).unwrap();
        let pts = thin(&t, &raw, d, 0.0);
        let c = Configuration::new(t, pts, 1.0);
        let mut buf = Vec::new();
        c.write_snapshot(&mut buf, seed, step).unwrap();
        let (back, s2, st2) = Configuration::read_snapshot(&buf[..], 1.0).unwrap();
        prop_assert_eq!(back.positions(), c.positions());
        prop_assert_eq!((s2, st2), (seed, step));
        prop_assert_eq!(back.torus, c.torus);
    }
}
