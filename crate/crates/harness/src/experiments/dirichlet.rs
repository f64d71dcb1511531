//! Decomposition of the microscopic Dirichlet form of F = g(⟨f, ·⟩).
//!
//! Per configuration, ε^d Σ_x g′²|∇f(εx)|² splits into the surviving part
//! g′²ρ⁽¹⁾‖∇f‖² and the vanishing part g′²ε^{d/2}⟨|∇f|², ω⟩. The size of
//! the vanishing part is its standard deviation over the ensemble; its
//! log-log slope in ε should be d/2.

use fluctfield_core::oulimit::{dirichlet_limit_form, CylinderFunction, Profile};
use fluctfield_core::scaling::{fluctuation_field, ScaledField};
use fluctfield_core::stats::{linear_fit, mean, mean_with_error, weighted_linear_fit, Estimate};

use super::{eps_label, Ctx, Timer};
use crate::config::ConfigError;
use crate::records::{point, Outcome, ResultRecord};
use crate::setup::{eps_ladder, reference, sample_map, test_family, McBudget};
use crate::HarnessError;

pub fn run(cfg: &crate::config::Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let ctx = Ctx::new("dirichlet-convergence", cfg)?;
    let fs = test_family(cfg, &ctx.sys)?;
    let ladder = eps_ladder(cfg)?;
    let budget = McBudget::from_config(cfg)?;
    let profile = cfg.str_or("dirichlet.profile", "linear")?;
    let sine = match profile.as_str() {
        "linear" => false,
        "sine" => true,
        other => {
            return Err(ConfigError::Invalid {
                key: "dirichlet.profile".into(),
                reason: format!("unknown profile `{other}` (linear, sine)"),
            }
            .into())
        }
    };
    let slope_tol = cfg.f64_or("dirichlet.slope_tolerance", 0.3)?;
    let limit_samples = cfg.usize_or("dirichlet.limit_samples", 20_000)?;
    let refc = reference(cfg, &ctx.sys, ctx.seed_for(&[0]))?;
    let ou = refc.ou()?;
    let k = ctx.sigmas;
    let d = ctx.sys.dim as f64;
    let mut out = vec![ctx.record(point(&[("source", refc.source.clone())]), "reference_rho1", refc.rho1)];
    for (fi, (id, f)) in fs.iter().enumerate() {
        let mut sizes = Vec::new();
        let cyl = CylinderFunction {
            profile: if sine { Profile::Sine { index: 0 } } else { Profile::Linear(vec![1.0]) },
            fs: vec![f.clone()],
        };
        let limit = dirichlet_limit_form(&cyl, &cyl, &ou, limit_samples, ctx.seed_for(&[2, fi as u64]))?;
        // the limit is linear in ρ⁽¹⁾
        let limit_se = (limit.stderr.powi(2)
            + (limit.value * refc.rho1.stderr / refc.rho1.value).powi(2))
        .sqrt();
        for (ie, &eps) in ladder.iter().enumerate() {
            let timer = Timer::start();
            let gp = ctx.sys.gibbs(eps)?;
            let rho = refc.rho1.value;
            let grad_sq = f.grad_norm_sq;
            let ed = eps.powf(d);
            let (obs, _) = sample_map(&gp, &budget, ctx.sys.sweep(eps), ctx.seed_for(&[1, fi as u64, ie as u64]), |c| {
                let gprime2 = if sine {
                    let y = fluctuation_field(&ScaledField::new(c, eps, rho), f)?;
                    y.cos().powi(2)
                } else {
                    1.0
                };
                let mut s = 0.0;
                for p in c.positions() {
                    let g = f.gradient(&[p[0] * eps, p[1] * eps, p[2] * eps]);
                    s += g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
                }
                let total = gprime2 * ed * s;
                let surviving = gprime2 * rho * grad_sq;
                Ok::<_, fluctfield_core::scaling::ScalingError>((total - surviving, surviving, total))
            });
            let obs = obs.into_iter().collect::<Result<Vec<_>, _>>()?;
            let secs = timer.secs();
            let col = |j: usize| -> Vec<f64> { obs.iter().map(|o| [o.0, o.1, o.2][j]).collect() };
            let (vanishing, surviving, total) = (col(0), col(1), col(2));
            let at = point(&[("eps", eps_label(eps)), ("f", id.clone()), ("profile", profile.clone())]);
            let m = mean(&vanishing);
            let dev: Vec<f64> = vanishing.iter().map(|v| (v - m).powi(2)).collect();
            let var = mean_with_error(&dev);
            let sd = var.value.sqrt();
            let size = Estimate::new(sd, var.stderr / (2.0 * sd));
            sizes.push((eps, size));
            out.push(ctx.record(at.clone(), "vanishing_mean", mean_with_error(&vanishing)).timed(secs));
            out.push(ctx.record(at.clone(), "vanishing_sd", size).timed(secs));
            out.push(ctx.record(at.clone(), "surviving", mean_with_error(&surviving)).target(limit.value));
            let tot = mean_with_error(&total);
            let se = (tot.stderr.powi(2) + limit_se.powi(2)).sqrt();
            let rec = ctx.record(at, "dirichlet_form", Estimate::new(tot.value, se)).timed(secs);
            out.push(if sine {
                rec.target(limit.value)
            } else {
                rec.within_sigmas(limit.value, k)
            });
        }
        let xs: Vec<f64> = sizes.iter().map(|(e, _)| e.ln()).collect();
        let ys: Vec<f64> = sizes.iter().map(|(_, s)| s.value.ln()).collect();
        let sig: Vec<f64> = sizes.iter().map(|(_, s)| s.stderr / s.value).collect();
        let fit = if sig.iter().all(|s| *s > 0.0 && s.is_finite()) {
            weighted_linear_fit(&xs, &ys, &sig)
        } else {
            linear_fit(&xs, &ys)
        };
        let target = d / 2.0;
        let fit_est = Estimate::new(fit.slope, fit.slope_stderr);
        let rec = ctx.record(point(&[("f", id.clone()), ("profile", profile.clone())]), "vanishing_slope", fit_est)
            .target(target);
        let rule = format!("|slope-d/2|<={slope_tol}");
        out.push(if !(fit.slope_stderr < slope_tol) {
            rec.judged(Outcome::Inconclusive, format!("{rule}; slope stderr too wide"))
        } else if (fit.slope - target).abs() <= slope_tol {
            rec.judged(Outcome::Pass, rule)
        } else {
            rec.judged(Outcome::Fail, rule)
        });
    }
    Ok(out)
}
