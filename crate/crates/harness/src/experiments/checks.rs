//! Finite-volume and equilibrium checks: sampler against the oracle, the
//! β-derivative identity, curvature of the coefficients at β = 0, and the
//! integration-by-parts identity for the generator.

use fluctfield_core::configuration::Torus;
use fluctfield_core::expansion::{coefficients, coercivity_sides, curvature_at_zero, Rho2Approximant, Rho2Source};
use fluctfield_core::gibbs::{CorrelationAccumulator, GibbsParams, RadialBins};
use fluctfield_core::oracle::{Boundary, FiniteVolumeSpec, Oracle, OracleError};
use fluctfield_core::potentials::{PairPotential, Point};
use fluctfield_core::quadrature::GaussLegendre;
use fluctfield_core::stats::Estimate;

use crate::config::{Config, ConfigError};
use crate::records::{point, Outcome, ResultRecord};
use crate::setup::{base_seed, derive_seed, potential_from_config, sample_configurations, test_family, McBudget, System};
use crate::HarnessError;

struct OracleSetup {
    oracle: Oracle,
    beta: f64,
}

fn oracle_from_config(cfg: &Config) -> Result<OracleSetup, HarnessError> {
    let dim = cfg.usize("system.dim")?;
    let (phi, _) = potential_from_config(cfg, dim)?;
    let beta = cfg.f64("system.beta")?;
    let z = cfg.f64_or("system.z", 1.0)?;
    let boundary = match cfg.str_or("oracle.boundary", "periodic")?.as_str() {
        "periodic" => Boundary::Periodic,
        "free" => Boundary::Free,
        other => {
            return Err(ConfigError::Invalid {
                key: "oracle.boundary".into(),
                reason: format!("unknown boundary `{other}` (periodic, free)"),
            }
            .into())
        }
    };
    let spec = FiniteVolumeSpec::new(
        cfg.f64("oracle.side")?,
        dim,
        boundary,
        cfg.usize("oracle.n_max")?,
        cfg.usize("oracle.q")?,
    )?;
    Ok(OracleSetup {
        oracle: Oracle::new(spec, phi, z)?,
        beta,
    })
}

fn along(r: f64, angle: f64, dim: usize) -> Point {
    if dim == 1 {
        [r, 0.0, 0.0]
    } else {
        [r * angle.cos(), r * angle.sin(), 0.0]
    }
}

/// Shell average of r ↦ ρ(0, r·e(θ)) over [a, b], matching the binned
/// pair estimator. In two dimensions the angle is averaged over a quarter
/// turn, which the square box makes sufficient.
fn shell_average(o: &Oracle, beta: f64, a: f64, b: f64) -> Result<f64, OracleError> {
    let dim = o.spec.dim;
    let gl = GaussLegendre::new(12);
    let (rs, ws) = gl.on_interval(a, b);
    let angles: Vec<f64> = if dim == 1 {
        vec![0.0]
    } else {
        (0..8).map(|j| (j as f64 + 0.5) * std::f64::consts::FRAC_PI_2 / 8.0).collect()
    };
    let (mut num, mut den) = (0.0, 0.0);
    for (r, w) in rs.iter().zip(&ws) {
        let jac = r.powi(dim as i32 - 1);
        for &t in &angles {
            num += w * jac * o.correlation(beta, &[[0.0; 3], along(*r, t, dim)])?;
            den += w * jac;
        }
    }
    Ok(num / den)
}

pub fn oracle_mc(cfg: &Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let id = "oracle-mc";
    let OracleSetup { oracle, beta } = oracle_from_config(cfg)?;
    if oracle.spec.boundary != Boundary::Periodic {
        return Err(ConfigError::Invalid {
            key: "oracle.boundary".into(),
            reason: "the sampler lives on a torus; use periodic".into(),
        }
        .into());
    }
    let k = cfg.f64_or("tolerance.sigmas", 3.0)?;
    let rel = cfg.f64_or("tolerance.relative", 0.02)?;
    let spec = &oracle.spec;
    let r_max = cfg.f64_or("oracle_mc.r_max", 0.5 * spec.side)?;
    let bins = RadialBins::new(r_max, cfg.usize_or("oracle_mc.bins", 6)?)?;
    let budget = McBudget::from_config(cfg)?;
    let seed = base_seed(cfg)?;
    let gp = GibbsParams::new(beta, oracle.z, Torus::new(spec.side, spec.dim)?, oracle.phi.clone())?
        .with_max_particles(spec.n_max);
    let sweep = ((oracle.z * spec.volume()).ceil() as u64).max(10);
    let confs = sample_configurations(&gp, &budget, sweep, derive_seed(seed, &[1]));
    let mut acc = CorrelationAccumulator::new(&gp, bins.clone())?;
    for c in &confs {
        acc.observe(c, &gp.phi);
    }
    let st = acc.finish(derive_seed(seed, &[2]))?;
    let pf = oracle.partition_function(beta)?;
    let mut out = vec![ResultRecord::new(id, "", "oracle_remainder_bound", Estimate::exact(pf.remainder_bound))];
    let rule = format!("|d|<={k}se and |d|<={rel}|oracle|");
    let judge = |quantity: String, at: String, mc: Estimate, target: f64| {
        let d = (mc.value - target).abs();
        let ok = d <= k * mc.stderr && d <= rel * target.abs();
        ResultRecord::new(id, at, quantity, mc)
            .target(target)
            .judged(if ok { Outcome::Pass } else { Outcome::Fail }, rule.clone())
    };
    out.push(judge("rho1".into(), "".into(), st.rho1, oracle.correlation(beta, &[[0.0; 3]])?));
    for (b, est) in st.rho2.iter().enumerate() {
        let (lo, hi) = bins.edges(b);
        let target = shell_average(&oracle, beta, lo, hi)?;
        out.push(judge("rho2".into(), point(&[("r_lo", lo.to_string()), ("r_hi", hi.to_string())]), *est, target));
    }
    Ok(out)
}

pub fn beta_derivative(cfg: &Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let id = "beta-derivative";
    let OracleSetup { oracle, beta } = oracle_from_config(cfg)?;
    let betas = cfg.f64_list_or("beta_derivative.betas", &[beta])?;
    let h = cfg.f64_or("beta_derivative.h", 1e-3)?;
    let tol = cfg.f64_or("beta_derivative.tolerance", 1e-3)?;
    // positions as fractions of the side, on the diagonal
    let fracs = cfg.f64_list_or("beta_derivative.points", &[0.3, 0.55])?;
    let side = oracle.spec.side;
    let dim = oracle.spec.dim;
    let pts: Vec<Point> = fracs
        .iter()
        .map(|f| {
            let mut p = [0.0; 3];
            for v in p.iter_mut().take(dim) {
                *v = f * side;
            }
            p
        })
        .collect();
    let mut out = Vec::new();
    for &b in &betas {
        for n in 1..=pts.len() {
            let r = oracle.beta_derivative_check(b, &pts[..n], h)?;
            let at = point(&[("beta", b.to_string()), ("points", n.to_string())]);
            out.push(ResultRecord::new(id, at.clone(), "lhs", Estimate::exact(r.lhs)));
            out.push(ResultRecord::new(id, at.clone(), "rhs", Estimate::exact(r.rhs)));
            let e = r.relative_error();
            out.push(
                ResultRecord::new(id, at, "relative_error", Estimate::exact(e))
                    .target(0.0)
                    .judged(if e < tol { Outcome::Pass } else { Outcome::Fail }, format!("rel<{tol}")),
            );
        }
    }
    Ok(out)
}

/// ρ⁽¹⁾, ρ⁽¹⁾²/χ and D_φ of the oracle box at inverse temperature β, with
/// χ = Var(n)/|Λ| and D_φ from the tabulated pair correlation.
fn box_coefficients(o: &Oracle, beta: f64, panels: usize, q: usize) -> Result<(f64, f64, f64), HarnessError> {
    let rho1 = o.correlation(beta, &[[0.0; 3]])?;
    let pf = o.partition_function(beta)?;
    let chi = pf.count_variance() / o.spec.volume();
    let range = o.phi.range();
    let breaks: Vec<f64> = (0..=panels).map(|i| range * i as f64 / panels as f64).collect();
    let dim = o.spec.dim;
    let rho2 = Rho2Approximant::tabulate(&breaks, q, rho1 * rho1, Rho2Source::OracleInterpolated, |r| {
        o.correlation(beta, &[[0.0; 3], along(r, 0.0, dim)])
    })?;
    let c = coefficients(&o.phi, beta, &rho2, rho1)?;
    Ok((rho1, rho1 * rho1 / chi, c.d_phi))
}

pub fn curvature(cfg: &Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let id = "curvature";
    let OracleSetup { oracle, .. } = oracle_from_config(cfg)?;
    let h = cfg.f64_or("curvature.h", 0.02)?;
    let tol = cfg.f64_or("curvature.tolerance", 0.05)?;
    let panels = cfg.usize_or("curvature.panels", 4)?;
    let q = cfg.usize_or("curvature.panel_q", 12)?;
    let mut vals = Vec::new();
    for i in 0..4 {
        vals.push(box_coefficients(&oracle, i as f64 * h, panels, q)?);
    }
    // one-sided, second order: (2F₀ − 5F₁ + 4F₂ − F₃)/h²
    let d2 = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
        (2.0 * f(&vals[0]) - 5.0 * f(&vals[1]) + 4.0 * f(&vals[2]) - f(&vals[3])) / (h * h)
    };
    let d2_d = d2(&|v| v.2);
    let d2_c = d2(&|v| v.1);
    let d2_r = d2(&|v| v.2 - v.1);
    let want = curvature_at_zero(&oracle.phi)?;
    let rule = format!("|rel|<={tol}");
    let judge = |q: &str, got: f64, target: f64| {
        let ok = (got - target).abs() <= tol * target.abs();
        ResultRecord::new(id, point(&[("h", h.to_string())]), q, Estimate::exact(got))
            .target(target)
            .judged(if ok { Outcome::Pass } else { Outcome::Fail }, rule.clone())
    };
    let mut out = Vec::new();
    for (i, v) in vals.iter().enumerate() {
        let at = point(&[("beta", (i as f64 * h).to_string())]);
        out.push(ResultRecord::new(id, at.clone(), "rho1", Estimate::exact(v.0)));
        out.push(ResultRecord::new(id, at.clone(), "rho1_sq_over_chi", Estimate::exact(v.1)));
        out.push(ResultRecord::new(id, at, "d_phi", Estimate::exact(v.2)));
    }
    out.push(judge("d2_d_phi", d2_d, want.d2_d));
    out.push(judge("d2_rho1_sq_over_chi", d2_c, want.d2_compress));
    out.push(ResultRecord::new(id, point(&[("h", h.to_string())]), "d2_r_phi", Estimate::exact(d2_r)).target(want.d2_r));
    Ok(out)
}

pub fn coercivity(cfg: &Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let id = "coercivity";
    let sys = System::from_config(cfg)?;
    let fs = test_family(cfg, &sys)?;
    let budget = McBudget::from_config(cfg)?;
    let seed = base_seed(cfg)?;
    let k = cfg.f64_or("tolerance.sigmas", 3.0)?;
    let mut systems = vec![(sys.potential.clone(), sys.phi.clone(), sys.beta)];
    if cfg.bool_or("coercivity.poisson", true)? && !sys.is_ideal() {
        systems.insert(0, ("zero".into(), PairPotential::zero(sys.dim), sys.beta));
    }
    let mut out = Vec::new();
    for (si, (name, phi, beta)) in systems.iter().enumerate() {
        let gp = GibbsParams::new(*beta, sys.z, sys.torus(1.0)?, phi.clone())?;
        let ensemble = sample_configurations(&gp, &budget, sys.sweep(1.0), derive_seed(seed, &[si as u64]));
        for (fid, f) in &fs {
            let s = coercivity_sides(f, &ensemble, phi, *beta)?;
            let at = point(&[("potential", name.clone()), ("beta", beta.to_string()), ("f", fid.clone())]);
            out.push(ResultRecord::new(id, at.clone(), "lhs", s.lhs));
            out.push(ResultRecord::new(id, at.clone(), "rhs", s.rhs));
            out.push(ResultRecord::new(id, at, "difference", s.difference).within_sigmas(0.0, k));
        }
    }
    Ok(out)
}
