use fluctfield_core::configuration::{Configuration, Torus};
use fluctfield_core::gibbs::{
    acceptance_probability, estimate_correlations, sample_ensemble, GibbsParams, MoveMix, Proposal, RadialBins,
};
use fluctfield_core::potentials::{PairPotential, Point};
use fluctfield_core::stats::mean_with_error;
use proptest::prelude::*;

fn weight(c: &Configuration, p: &GibbsParams) -> f64 {
    p.z.powi(c.len() as i32) * (-p.beta * c.total_energy(&p.phi)).exp()
}

fn to_points(t: &Torus, raw: &[[f64; 3]]) -> Vec<Point> {
    raw.iter()
        .map(|c| {
            let mut p = [0.0; 3];
            for k in 0..t.dim {
                p[k] = c[k] * t.side;
            }
            p
        })
        .collect()
}

fn params(d: usize, beta: f64, z: f64, insert: f64, cap: Option<usize>) -> GibbsParams {
    let t = Torus::new(5.0, d).unwrap();
    let phi = PairPotential::smooth_compact(1.5, 1.0, d).unwrap();
    let mut p = GibbsParams::new(beta, z, t, phi).unwrap().with_mix(MoveMix {
        insert,
        delete: 0.6 - insert,
        translate: 0.4,
    });
    if let Some(c) = cap {
        p = p.with_max_particles(c);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    // π(γ)·p_ins/|Λ|·a(γ→γ∪x) = π(γ∪x)·p_del/(n+1)·a(γ∪x→γ)
    #[test]
    fn insert_delete_balance(
        d in 1usize..=2,
        beta in 0.0f64..2.0,
        z in 0.1f64..3.0,
        insert in 0.1f64..0.5,
        cap in prop::option::of(1usize..8),
        raw in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 0..7),
        x in prop::array::uniform3(0.0f64..1.0),
    ) {
        let p = params(d, beta, z, insert, cap);
        let t = p.torus;
        let mut pts = to_points(&t, &raw);
        if let Some(c) = cap {
            pts.truncate(c);
        }
        let n = pts.len();
        let state = Configuration::new(t, pts, p.cutoff());
        let y = to_points(&t, &[x])[0];
        let mut grown = state.clone();
        grown.push(y);
        let fwd = weight(&state, &p) * p.mix.insert / t.volume() * acceptance_probability(&state, &p, &Proposal::Insert(y));
        let bwd = weight(&grown, &p) * p.mix.delete / (n + 1) as f64 * acceptance_probability(&grown, &p, &Proposal::Delete(n));
        if cap.is_some_and(|c| n >= c) {
            prop_assert_eq!(fwd, 0.0);
        } else {
            prop_assert!((fwd - bwd).abs() <= 1e-12 * fwd.max(bwd), "{fwd} {bwd}");
        }
    }

    #[test]
    fn translate_balance(
        beta in 0.0f64..2.0,
        raw in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 1..7),
        x in prop::array::uniform3(0.0f64..1.0),
        pick in any::<prop::sample::Index>(),
    ) {
        let p = params(2, beta, 1.0, 0.3, None);
        let t = p.torus;
        let state = Configuration::new(t, to_points(&t, &raw), p.cutoff());
        let i = pick.index(state.len());
        let y = to_points(&t, &[x])[0];
        let mut moved = state.clone();
        let old = state.positions()[i];
        moved.set_position(i, y);
        let fwd = weight(&state, &p) * acceptance_probability(&state, &p, &Proposal::Translate(i, y));
        let bwd = weight(&moved, &p) * acceptance_probability(&moved, &p, &Proposal::Translate(i, old));
        prop_assert!((fwd - bwd).abs() <= 1e-12 * fwd.max(bwd));
    }
}

#[test]
fn compressibility_estimators_agree_and_stability_holds() {
    let t = Torus::new(8.0, 1).unwrap();
    let phi = PairPotential::smooth_compact(1.0, 1.0, 1).unwrap();
    let p = GibbsParams::new(0.5, 1.0, t, phi).unwrap();
    let ens = sample_ensemble(&p, 20_000, 20, 20_000, 17);
    let s = estimate_correlations(&ens, &p, RadialBins::new(4.0, 40).unwrap()).unwrap();
    let se = (s.chi.stderr.powi(2) + s.chi_fluct.stderr.powi(2)).sqrt();
    assert!((s.chi.value - s.chi_fluct.value).abs() < 3.0 * se, "{:?} {:?}", s.chi, s.chi_fluct);
    assert_eq!(s.stability_violations, 0);
}

// pair displacements split by angle: sectors [0, π/8) and [π/8, π/4) of the
// folded angle carry the same pair density for an isotropic potential
#[test]
fn pair_density_is_isotropic_in_2d() {
    let t = Torus::new(7.0, 2).unwrap();
    let phi = PairPotential::smooth_compact(2.0, 1.0, 2).unwrap();
    let p = GibbsParams::new(1.0, 0.8, t, phi).unwrap();
    let ens = sample_ensemble(&p, 4000, 20, 10_000, 23);
    for (lo, hi) in [(0.2, 0.8), (0.8, 1.4), (1.4, 2.5)] {
        let diff: Vec<f64> = ens
            .iter()
            .map(|c| {
                let mut a = 0.0;
                let mut b = 0.0;
                c.for_each_pair(hi, |_, _, v, r2| {
                    let r = r2.sqrt();
                    if r < lo || r >= hi {
                        return;
                    }
                    let (x, y) = (v[0].abs(), v[1].abs());
                    let ang = y.min(x).atan2(y.max(x));
                    if ang < std::f64::consts::PI / 8.0 {
                        a += 1.0;
                    } else {
                        b += 1.0;
                    }
                });
                a - b
            })
            .collect();
        let e = mean_with_error(&diff);
        assert!(e.within_sigmas(0.0, 3.5), "shell [{lo}, {hi}): {e:?}");
    }
}

#[test]
fn ideal_gas_pair_density_is_flat() {
    let t = Torus::new(6.0, 2).unwrap();
    let p = GibbsParams::new(0.0, 1.0, t, PairPotential::zero(2)).unwrap();
    let ens = sample_ensemble(&p, 4000, 10, 1000, 5);
    let s = estimate_correlations(&ens, &p, RadialBins::new(2.5, 5).unwrap()).unwrap();
    assert!(s.rho1.within_sigmas(1.0, 3.5));
    for (k, r) in s.rho2.iter().enumerate() {
        assert!(r.within_sigmas(1.0, 3.5), "bin {k}: {r:?}");
    }
}
