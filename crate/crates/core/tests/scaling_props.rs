use fluctfield_core::configuration::{Configuration, Torus};
use fluctfield_core::potentials::Point;
use fluctfield_core::scaling::{fluctuation_field, s_in, sobolev_norm_neg, HermiteBasis, ScaledField, TestFunction};
use proptest::prelude::*;

const L0: f64 = 4.0;

fn micro(raw: &[[f64; 3]], side: f64, d: usize) -> Vec<Point> {
    raw.iter()
        .map(|c| {
            let mut p = [0.0; 3];
            for k in 0..d {
                p[k] = c[k] * side;
            }
            p
        })
        .collect()
}

fn family(d: usize) -> Vec<TestFunction> {
    let mut c = [0.0; 3];
    for v in c.iter_mut().take(d) {
        *v = 1.7;
    }
    vec![
        TestFunction::fourier_mode([1, 0, 0], false, 1.0, L0, d).unwrap(),
        TestFunction::fourier_mode([1, (d > 1) as i64, 0], true, 0.5, L0, d).unwrap(),
        TestFunction::compact_bump(c, 1.2, 2.0, L0, d).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // field(γ₁ ∪ γ₂) = field(γ₁) + field(γ₂) + one centering term
    #[test]
    fn field_of_union_adds_with_one_centering(
        d in 1usize..=2,
        inv_eps in 1usize..=8,
        rho in 0.1f64..2.0,
        a in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 0..30),
        b in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 0..30),
    ) {
        let eps = 1.0 / inv_eps as f64;
        let side = L0 / eps;
        let t = Torus::new(side, d).unwrap();
        let (pa, pb) = (micro(&a, side, d), micro(&b, side, d));
        let mut both = pa.clone();
        both.extend_from_slice(&pb);
        let ca = Configuration::new(t, pa, 0.0);
        let cb = Configuration::new(t, pb, 0.0);
        let cu = Configuration::new(t, both, 0.0);
        for f in family(d) {
            let fa = fluctuation_field(&ScaledField::new(&ca, eps, rho), &f).unwrap();
            let fb = fluctuation_field(&ScaledField::new(&cb, eps, rho), &f).unwrap();
            let fu = fluctuation_field(&ScaledField::new(&cu, eps, rho), &f).unwrap();
            let centering = eps.powf(d as f64 / 2.0) * rho * eps.powi(-(d as i32)) * f.integral;
            let err = fu - (fa + fb + centering);
            prop_assert!(err.abs() < 1e-10 * (1.0 + fu.abs() + centering.abs()), "{err}");
        }
    }

    // pairing at scale ε equals ε^{d/2} times the unit-scale pairing of the
    // scaled configuration at density ρε^{−d}
    #[test]
    fn scaling_covariance(
        d in 1usize..=2,
        inv_eps in 1usize..=8,
        rho in 0.1f64..2.0,
        a in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 0..40),
    ) {
        let eps = 1.0 / inv_eps as f64;
        let side = L0 / eps;
        let c = Configuration::new(Torus::new(side, d).unwrap(), micro(&a, side, d), 0.0);
        let scaled = s_in(&c, eps);
        for f in family(d) {
            let lhs = fluctuation_field(&ScaledField::new(&c, eps, rho), &f).unwrap();
            let unit = fluctuation_field(&ScaledField::new(&scaled, 1.0, rho * eps.powi(-(d as i32))), &f).unwrap();
            let rhs = eps.powf(d as f64 / 2.0) * unit;
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "{lhs} {rhs}");
        }
    }

    #[test]
    fn negative_sobolev_norm_decreases_in_m(
        values in prop::collection::vec(-5.0f64..5.0, 1..60),
        m in 0.0f64..4.0,
        dm in 0.1f64..3.0,
    ) {
        let basis = HermiteBasis::new(2, 10);
        let a = sobolev_norm_neg(&values, &basis, m).value;
        let b = sobolev_norm_neg(&values, &basis, m + dm).value;
        prop_assert!(b <= a);
    }
}
