//! Var⟨f, X_ε⟩ along the scale ladder against χ‖f‖².

use fluctfield_core::oulimit::white_noise_variance;
use fluctfield_core::scaling::{fluctuation_fields, ScaledField, TestFunction};
use fluctfield_core::stats::{autocorrelation_time, mean, mean_with_error, Estimate};

use super::{eps_label, trend_outcome, Ctx, Timer};
use crate::records::{point, ResultRecord};
use crate::setup::{eps_ladder, reference, sample_map, test_family, McBudget};
use crate::HarnessError;

pub fn run(cfg: &crate::config::Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let ctx = Ctx::new("variance-convergence", cfg)?;
    let fs = test_family(cfg, &ctx.sys)?;
    let ladder = eps_ladder(cfg)?;
    let budget = McBudget::from_config(cfg)?;
    let refc = reference(cfg, &ctx.sys, ctx.seed_for(&[0]))?;
    let exact = refc.chi.stderr == 0.0 && ctx.sys.is_ideal();
    let k = ctx.sigmas;
    let mut out = vec![
        ctx.record(point(&[("source", refc.source.clone())]), "reference_rho1", refc.rho1),
        ctx.record(point(&[("source", refc.source.clone())]), "reference_chi", refc.chi),
    ];
    let funcs: Vec<TestFunction> = fs.iter().map(|(_, f)| f.clone()).collect();
    let mut gaps: Vec<Vec<Estimate>> = vec![Vec::new(); fs.len()];
    for (ie, &eps) in ladder.iter().enumerate() {
        let timer = Timer::start();
        let gp = ctx.sys.gibbs(eps)?;
        let vol = gp.torus.volume();
        let rho = refc.rho1.value;
        let (obs, stats) = sample_map(&gp, &budget, ctx.sys.sweep(eps), ctx.seed_for(&[1, ie as u64]), |c| {
            let v = fluctuation_fields(&ScaledField::new(c, eps, rho), &funcs);
            (c.len() as f64, v)
        });
        let counts: Vec<f64> = obs.iter().map(|(n, _)| *n).collect();
        let secs = timer.secs();
        let at = |extra: Option<&str>| {
            let mut p = vec![("eps", eps_label(eps))];
            if let Some(id) = extra {
                p.push(("f", id.to_string()));
            }
            point(&p)
        };
        let density: Vec<f64> = counts.iter().map(|n| n / vol).collect();
        let rho_hat = mean_with_error(&density);
        let nbar = mean(&counts);
        let sq: Vec<f64> = counts.iter().map(|n| (n - nbar).powi(2) / vol).collect();
        let chi_hat = mean_with_error(&sq);
        let judge = |r: ResultRecord, target: f64| {
            if exact {
                r.within_sigmas(target, k)
            } else {
                r.target(target)
            }
        };
        out.push(judge(ctx.record(at(None), "rho1", rho_hat).timed(secs), refc.rho1.value));
        out.push(judge(ctx.record(at(None), "chi_fluct", chi_hat).timed(secs), refc.chi.value));
        out.push(ctx.record(
            at(None),
            "translate_acceptance",
            Estimate::exact(stats.acceptance(2)),
        ));
        for (i, (id, f)) in fs.iter().enumerate() {
            let x: Vec<f64> = obs
                .iter()
                .map(|(_, v)| v.as_ref().map(|v| v[i]).map_err(Clone::clone))
                .collect::<Result<_, _>>()?;
            let m = mean(&x);
            let dev: Vec<f64> = x.iter().map(|v| (v - m).powi(2)).collect();
            let var = mean_with_error(&dev);
            let target = white_noise_variance(f, refc.chi.value);
            let target_se = white_noise_variance(f, refc.chi.stderr);
            let tau = autocorrelation_time(&x);
            out.push(
                ctx.record(at(Some(id)), "effective_samples", Estimate::exact(x.len() as f64 / tau.max(1.0))),
            );
            out.push(judge(ctx.record(at(Some(id)), "field_variance", var).timed(secs), target));
            gaps[i].push(Estimate::new(var.value - target, (var.stderr.powi(2) + target_se.powi(2)).sqrt()));
        }
    }
    if !exact {
        for (i, (id, _)) in fs.iter().enumerate() {
            let (o, rule) = trend_outcome(&gaps[i], k);
            let last = gaps[i][gaps[i].len() - 1];
            out.push(
                ctx.record(point(&[("f", id.clone())]), "finest_variance_gap", last)
                    .target(0.0)
                    .judged(o, rule),
            );
        }
    }
    Ok(out)
}
