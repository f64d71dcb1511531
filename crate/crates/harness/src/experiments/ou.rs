//! Lag autocovariances of the scaled field against the OU limit.

use fluctfield_core::langevin::FieldSeries;
use fluctfield_core::oulimit::{ou_autocov, simulate_ou};
use fluctfield_core::stats::Estimate;

use super::{across_replicas, eps_label, lag_steps, replica_starts, run_replicas, trend_outcome, Ctx, Timer};
use crate::records::{point, ResultRecord};
use crate::setup::{derive_seed, eps_ladder, reference, test_family, DynBudget};
use crate::HarnessError;

/// Per-series autocovariance at each lag, averaged over time origins and
/// centred by `centre`.
fn autocov(series: &[FieldSeries], col: usize, steps: &[usize], centre: f64) -> Vec<Vec<f64>> {
    steps
        .iter()
        .map(|&s| {
            series
                .iter()
                .map(|ser| {
                    let x = ser.column(col);
                    let n = x.len().saturating_sub(s);
                    (0..n).map(|t| (x[t] - centre) * (x[t + s] - centre)).sum::<f64>() / n as f64
                })
                .collect()
        })
        .collect()
}

pub fn run(cfg: &crate::config::Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let ctx = Ctx::new("ou-comparison", cfg)?;
    let fs = test_family(cfg, &ctx.sys)?;
    let ladder = eps_ladder(cfg)?;
    let db = DynBudget::from_config(cfg)?;
    let lags = cfg.f64_list("ou.lags")?;
    let ou_reps = cfg.usize_or("ou.limit_replicas", db.replicas)?;
    let refc = reference(cfg, &ctx.sys, ctx.seed_for(&[0]))?;
    let params = refc.ou()?;
    let exact = ctx.sys.is_ideal();
    let k = ctx.sigmas;
    let mut out = vec![
        ctx.record(point(&[("source", refc.source.clone())]), "reference_rho1", refc.rho1),
        ctx.record(point(&[("source", refc.source.clone())]), "reference_chi", refc.chi),
    ];
    let all_lags: Vec<f64> = std::iter::once(0.0).chain(lags.iter().copied()).collect();
    let mut gaps = vec![vec![Vec::new(); all_lags.len()]; fs.len()];

    // the limit process through the same estimator, as a check on it
    let interval = db.interval(1.0);
    let limit: Vec<FieldSeries> = (0..ou_reps)
        .map(|r| simulate_ou(&params, &fs, db.horizon, interval, derive_seed(ctx.seed, &[3, r as u64])))
        .collect::<Result<_, _>>()?;
    let mut steps = vec![0];
    steps.extend(lag_steps(&lags, interval, "ou.lags")?);
    for (fi, (id, f)) in fs.iter().enumerate() {
        for (li, per) in autocov(&limit, fi, &steps, 0.0).iter().enumerate() {
            let at = point(&[("source", "ou".into()), ("f", id.clone()), ("lag", all_lags[li].to_string())]);
            out.push(
                ctx.record(at, "autocov", across_replicas(per))
                    .within_sigmas(ou_autocov(f, all_lags[li], &params)?, k),
            );
        }
    }

    for (ie, &eps) in ladder.iter().enumerate() {
        let timer = Timer::start();
        let gp = ctx.sys.gibbs(eps)?;
        let starts = replica_starts(&ctx, &gp, eps, db.replicas, ctx.seed_for(&[1, ie as u64]))?;
        let series = run_replicas(starts, &db, eps, &gp, &fs, refc.rho1.value, ctx.seed_for(&[2, ie as u64]))?;
        let secs = timer.secs();
        let mut steps = vec![0];
        steps.extend(lag_steps(&lags, db.interval(eps), "ou.lags")?);
        for (fi, (id, f)) in fs.iter().enumerate() {
            for (li, per) in autocov(&series, fi, &steps, 0.0).iter().enumerate() {
                let lag = all_lags[li];
                let est = across_replicas(per);
                let target = ou_autocov(f, lag, &params)?;
                let at = point(&[("eps", eps_label(eps)), ("f", id.clone()), ("lag", lag.to_string())]);
                let rec = ctx.record(at, "autocov", est).timed(secs);
                out.push(if exact { rec.within_sigmas(target, k) } else { rec.target(target) });
                let target_se = target * refc.chi.stderr / refc.chi.value;
                gaps[fi][li].push(Estimate::new(est.value - target, (est.stderr.powi(2) + target_se.powi(2)).sqrt()));
            }
        }
    }
    if !exact {
        for (fi, (id, _)) in fs.iter().enumerate() {
            for (li, g) in gaps[fi].iter().enumerate() {
                let (o, rule) = trend_outcome(g, k);
                out.push(
                    ctx.record(point(&[("f", id.clone()), ("lag", all_lags[li].to_string())]), "finest_autocov_gap", g[g.len() - 1])
                        .target(0.0)
                        .judged(o, rule),
                );
            }
        }
    }
    Ok(out)
}
