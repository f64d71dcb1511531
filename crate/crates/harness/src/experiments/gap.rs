//! Second moment of the generator gap (H − H_ε)⟨f, ·⟩ under μ_ε.

use fluctfield_core::expansion::curvature_at_zero;
use fluctfield_core::langevin::generator_gap_linear;
use fluctfield_core::stats::{mean_with_error, Estimate};

use super::{eps_label, Ctx, Timer};
use crate::records::{point, Outcome, ResultRecord};
use crate::setup::{eps_ladder, reference, sample_map, test_family, McBudget};
use crate::HarnessError;

pub fn run(cfg: &crate::config::Config) -> Result<Vec<ResultRecord>, HarnessError> {
    let ctx = Ctx::new("generator-gap", cfg)?;
    let fs = test_family(cfg, &ctx.sys)?;
    let ladder = eps_ladder(cfg)?;
    let budget = McBudget::from_config(cfg)?;
    let zero_tol = cfg.f64_or("gap.zero_tolerance", 1e-10)?;
    let lo = cfg.f64_or("gap.ratio_min", 0.5)?;
    let hi = cfg.f64_or("gap.ratio_max", 2.0)?;
    // the plateau is read off the finest scales
    let plateau = cfg.usize_or("gap.plateau_points", 2)?.clamp(1, ladder.len());
    let refc = reference(cfg, &ctx.sys, ctx.seed_for(&[0]))?;
    let params = refc.ou()?;
    let ideal = ctx.sys.is_ideal();
    let beta = ctx.sys.beta;
    // leading-order R_φ = ½·R″(0)·β²
    let r_lead = if ideal {
        0.0
    } else {
        0.5 * curvature_at_zero(&ctx.sys.phi)?.d2_r * beta * beta
    };
    let mut out = vec![
        ctx.record(point(&[("source", refc.source.clone())]), "reference_rho1", refc.rho1),
        ctx.record(point(&[("source", refc.source.clone())]), "reference_chi", refc.chi),
        ctx.record("", "r_phi_leading", Estimate::exact(r_lead)),
    ];
    for (fi, (id, f)) in fs.iter().enumerate() {
        let target = r_lead * f.lap_norm_sq;
        let mut ratios = Vec::new();
        for (ie, &eps) in ladder.iter().enumerate() {
            let timer = Timer::start();
            let gp = ctx.sys.gibbs(eps)?;
            let (obs, _) = sample_map(&gp, &budget, ctx.sys.sweep(eps), ctx.seed_for(&[1, fi as u64, ie as u64]), |c| {
                generator_gap_linear(c, eps, &gp, f, &params)
            });
            let gaps = obs.into_iter().collect::<Result<Vec<_>, _>>()?;
            let secs = timer.secs();
            let sq: Vec<f64> = gaps.iter().map(|g| g * g).collect();
            let m = mean_with_error(&sq);
            let at = point(&[("eps", eps_label(eps)), ("f", id.clone())]);
            if ideal {
                let max = sq.iter().fold(0.0f64, |a, &b| a.max(b));
                out.push(
                    ctx.record(at, "gap_sq_max", Estimate::exact(max))
                        .target(0.0)
                        .judged(
                            if max <= zero_tol { Outcome::Pass } else { Outcome::Fail },
                            format!("max gap^2<={zero_tol}"),
                        )
                        .timed(secs),
                );
                continue;
            }
            let ratio = Estimate::new(m.value / target, m.stderr / target);
            out.push(ctx.record(at.clone(), "gap_sq", m).target(target).timed(secs));
            out.push(ctx.record(at, "gap_ratio", ratio).target(1.0).timed(secs));
            ratios.push(ratio);
        }
        if ideal {
            continue;
        }
        // inverse-variance average over the plateau points
        let tail = &ratios[ratios.len() - plateau..];
        let w: f64 = tail.iter().map(|r| 1.0 / r.stderr.powi(2)).sum();
        let avg = tail.iter().map(|r| r.value / r.stderr.powi(2)).sum::<f64>() / w;
        let est = Estimate::new(avg, w.sqrt().recip());
        let rule = format!("{lo}<=ratio<={hi}");
        let rec = ctx.record(point(&[("f", id.clone())]), "gap_ratio_plateau", est).target(1.0);
        out.push(if (lo..=hi).contains(&avg) {
            rec.judged(Outcome::Pass, rule)
        } else {
            rec.judged(Outcome::Fail, rule)
        });
    }
    Ok(out)
}
