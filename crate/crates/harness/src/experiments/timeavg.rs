//! Exploratory: time integrals of G′(⟨f, X⟩)·(gap) along trajectories.
//! Nothing here gates; every record is informational.

use fluctfield_core::langevin::{generator_gap_linear, Integrator};
use fluctfield_core::scaling::{fluctuation_field, ScaledField};
use rayon::prelude::*;

use super::{across_replicas, eps_label, replica_starts, Ctx, Timer};
use crate::config::ConfigError;
use crate::records::{point, ResultRecord};
use crate::setup::{derive_seed, eps_ladder, reference, test_family, DynBudget};
use crate::HarnessError;

pub fn run(cfg: &crate::config::Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let ctx = Ctx::new("timeavg-probe", cfg)?;
    let fs = test_family(cfg, &ctx.sys)?;
    let ladder = eps_ladder(cfg)?;
    let db = DynBudget::from_config(cfg)?;
    let window = cfg.f64_or("timeavg.window", db.horizon)?;
    let g_kind = cfg.str_or("timeavg.g", "linear")?;
    let bounded = match g_kind.as_str() {
        "linear" => false,
        "sine" => true,
        other => {
            return Err(ConfigError::Invalid {
                key: "timeavg.g".into(),
                reason: format!("unknown G `{other}` (linear, sine)"),
            }
            .into())
        }
    };
    let refc = reference(cfg, &ctx.sys, ctx.seed_for(&[0]))?;
    let params = refc.ou()?;
    let mut out = Vec::new();
    for (ie, &eps) in ladder.iter().enumerate() {
        let timer = Timer::start();
        let gp = ctx.sys.gibbs(eps)?;
        let starts = replica_starts(&ctx, &gp, eps, db.replicas, ctx.seed_for(&[1, ie as u64]))?;
        let n_steps = (window / (eps * eps) / db.dt).round() as u64;
        let h = db.interval(eps);
        let stride = db.stride(eps);
        let seed = ctx.seed_for(&[2, ie as u64]);
        let per: Vec<Vec<f64>> = starts
            .into_par_iter()
            .enumerate()
            .map(|(r, c)| -> Result<Vec<f64>, HarnessError> {
                let mut it = Integrator::new(c, gp.phi.clone(), gp.beta, derive_seed(seed, &[r as u64]))?;
                let integrand = |it: &Integrator| -> Result<Vec<f64>, HarnessError> {
                    fs.iter()
                        .map(|(_, f)| {
                            let y = fluctuation_field(&ScaledField::new(&it.state, eps, params.rho1), f)?;
                            let g = generator_gap_linear(&it.state, eps, &gp, f, &params)?;
                            Ok(if bounded { y.cos() * g } else { g })
                        })
                        .collect()
                };
                let mut prev = integrand(&it)?;
                let mut acc = vec![0.0; fs.len()];
                for s in 1..=n_steps {
                    it.step(db.dt)?;
                    if s % stride == 0 {
                        let cur = integrand(&it)?;
                        for k in 0..acc.len() {
                            acc[k] += 0.5 * h * (prev[k] + cur[k]);
                        }
                        prev = cur;
                    }
                }
                Ok(acc.into_iter().map(f64::abs).collect())
            })
            .collect::<Result<_, _>>()?;
        let secs = timer.secs();
        for (fi, (id, _)) in fs.iter().enumerate() {
            let v: Vec<f64> = per.iter().map(|p| p[fi]).collect();
            let at = point(&[("eps", eps_label(eps)), ("f", id.clone()), ("g", g_kind.clone()), ("window", window.to_string())]);
            out.push(ctx.record(at, "abs_time_integral", across_replicas(&v)).timed(secs));
        }
    }
    Ok(out)
}
