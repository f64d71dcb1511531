//! Fourth moments of field increments E|⟨f, X(t+τ)⟩ − ⟨f, X(t)⟩|⁴ and the
//! exponent α in E|Δ|⁴ ∝ τ^α for small lags.

use fluctfield_core::scaling::TestFunction;
use fluctfield_core::stats::{linear_fit, weighted_linear_fit, Estimate};

use super::{across_replicas, eps_label, lag_steps, replica_starts, run_replicas, Ctx, Timer};
use crate::records::{point, Outcome, ResultRecord};
use crate::setup::{eps_ladder, reference, test_family, DynBudget};
use crate::HarnessError;

/// Exact E|Δ|⁴ for free particles started from Poisson(z) and a Fourier
/// mode f = A·cos(k·x) or A·sin(k·x), at scale ε and scaled lag τ. With
/// s = |k|²τ the increment is a Poisson sum with second cumulant
/// 2z‖f‖²(1 − e^{−s}) and fourth cumulant ε^d·(3/2)zA²‖f‖²(3 − 4e^{−s} + e^{−4s}).
pub fn free_fourth_moment(f: &TestFunction, z: f64, eps: f64, tau: f64) -> Option<f64> {
    let k = f.wavevector()?;
    let s = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * tau;
    let vol = f.side.powi(f.dim as i32);
    let a2 = 2.0 * f.norm_sq / vol;
    let k2 = 2.0 * z * f.norm_sq * (-(-s).exp_m1());
    let k4 = eps.powi(f.dim as i32) * 1.5 * z * a2 * f.norm_sq * (3.0 - 4.0 * (-s).exp() + (-4.0 * s).exp());
    Some(k4 + 3.0 * k2 * k2)
}

pub fn run(cfg: &crate::config::Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let ctx = Ctx::new("increment-moments", cfg)?;
    let fs = test_family(cfg, &ctx.sys)?;
    let ladder = eps_ladder(cfg)?;
    let db = DynBudget::from_config(cfg)?;
    let lags = cfg.f64_list("increments.lags")?;
    let alpha_min = cfg.f64_or("increments.alpha_min", 1.8)?;
    let free_tol = cfg.f64_or("increments.free_tolerance", 0.1)?;
    let max_se = cfg.f64_or("increments.max_slope_stderr", 0.1)?;
    let refc = reference(cfg, &ctx.sys, ctx.seed_for(&[0]))?;
    let ideal = ctx.sys.is_ideal();
    let k = ctx.sigmas;
    let mut out = Vec::new();
    for (ie, &eps) in ladder.iter().enumerate() {
        let timer = Timer::start();
        let gp = ctx.sys.gibbs(eps)?;
        let starts = replica_starts(&ctx, &gp, eps, db.replicas, ctx.seed_for(&[1, ie as u64]))?;
        let series = run_replicas(starts, &db, eps, &gp, &fs, refc.rho1.value, ctx.seed_for(&[2, ie as u64]))?;
        let secs = timer.secs();
        let interval = db.interval(eps);
        let steps = lag_steps(&lags, interval, "increments.lags")?;
        for (fi, (id, f)) in fs.iter().enumerate() {
            let mut m4s = Vec::new();
            for (&lag, &s) in lags.iter().zip(&steps) {
                let mut per4 = Vec::with_capacity(series.len());
                let mut per2 = Vec::with_capacity(series.len());
                for ser in &series {
                    let x = ser.column(fi);
                    if x.len() <= s {
                        return Err(crate::config::ConfigError::Invalid {
                            key: "increments.lags".into(),
                            reason: format!("lag {lag} exceeds the horizon {}", db.horizon),
                        }
                        .into());
                    }
                    let n = (x.len() - s) as f64;
                    let (mut a4, mut a2) = (0.0, 0.0);
                    for t in 0..x.len() - s {
                        let d = x[t + s] - x[t];
                        a2 += d * d;
                        a4 += d * d * d * d;
                    }
                    per4.push(a4 / n);
                    per2.push(a2 / n);
                }
                let m4 = across_replicas(&per4);
                let at = point(&[("eps", eps_label(eps)), ("f", id.clone()), ("lag", lag.to_string())]);
                out.push(ctx.record(at.clone(), "increment_m2", across_replicas(&per2)).timed(secs));
                let rec = ctx.record(at, "increment_m4", m4).timed(secs);
                out.push(match (ideal, free_fourth_moment(f, ctx.sys.z, eps, lag)) {
                    (true, Some(t)) => rec.within_sigmas(t, k),
                    _ => rec,
                });
                m4s.push((lag, m4));
            }
            let xs: Vec<f64> = m4s.iter().map(|(l, _)| l.ln()).collect();
            let ys: Vec<f64> = m4s.iter().map(|(_, m)| m.value.ln()).collect();
            let sig: Vec<f64> = m4s.iter().map(|(_, m)| m.stderr / m.value).collect();
            let fit = if sig.iter().all(|s| *s > 0.0 && s.is_finite()) {
                weighted_linear_fit(&xs, &ys, &sig)
            } else {
                linear_fit(&xs, &ys)
            };
            let rec = ctx.record(
                point(&[("eps", eps_label(eps)), ("f", id.clone())]),
                "increment_exponent",
                Estimate::new(fit.slope, fit.slope_stderr),
            );
            let (ok, rule, target) = if ideal {
                ((fit.slope - 2.0).abs() <= free_tol, format!("|alpha-2|<={free_tol}"), 2.0)
            } else {
                (fit.slope >= alpha_min, format!("alpha>={alpha_min}"), alpha_min)
            };
            let rec = rec.target(target);
            out.push(if !(fit.slope_stderr <= max_se) {
                rec.judged(Outcome::Inconclusive, format!("{rule}; slope stderr above {max_se}"))
            } else if ok {
                rec.judged(Outcome::Pass, rule)
            } else {
                rec.judged(Outcome::Fail, rule)
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    // direct simulation of the Poisson sum at ε = 1
    #[test]
    fn free_fourth_moment_matches_simulation() {
        let side = 3.0;
        let f = TestFunction::fourier_mode([1, 0, 0], false, 0.8, side, 1).unwrap();
        let (z, tau): (f64, f64) = (1.5, 0.3);
        let kk = 2.0 * std::f64::consts::PI / side;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pois = Poisson::new(z * side).unwrap();
        let step = Normal::new(0.0, (2.0 * tau).sqrt()).unwrap();
        let reps = 200_000;
        let mut acc = Vec::with_capacity(reps);
        for _ in 0..reps {
            let n: f64 = pois.sample(&mut rng);
            let mut d = 0.0;
            for _ in 0..n as usize {
                let x: f64 = rng.gen::<f64>() * side;
                let b = step.sample(&mut rng);
                d += 0.8 * ((kk * (x + b)).cos() - (kk * x).cos());
            }
            acc.push(d.powi(4));
        }
        let m = fluctfield_core::stats::mean(&acc);
        let se = (fluctfield_core::stats::variance(&acc) / reps as f64).sqrt();
        let want = free_fourth_moment(&f, z, 1.0, tau).unwrap();
        assert!((m - want).abs() < 4.0 * se, "{m} ± {se} vs {want}");
    }
}
