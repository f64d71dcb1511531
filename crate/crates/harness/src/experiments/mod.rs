//! Experiment registry. Each experiment reads its parameters from a config
//! and returns result records; nothing here touches the file system.

mod checks;
mod dirichlet;
mod gap;
mod increments;
mod ou;
mod timeavg;
mod variance;

use std::collections::BTreeMap;
use std::time::Instant;

use fluctfield_core::configuration::Configuration;
use fluctfield_core::gibbs::GibbsParams;
use fluctfield_core::langevin::{run_scaled, DynamicsParams, FieldSeries};
use fluctfield_core::scaling::TestFunction;
use fluctfield_core::stats::Estimate;
use rayon::prelude::*;

use crate::config::Config;
use crate::records::{Outcome, ResultRecord};
use crate::setup::{base_seed, derive_seed, DynBudget, McBudget, System};
use crate::HarnessError;

pub use increments::free_fourth_moment;

pub const IDS: [&str; 10] = [
    "variance-convergence",
    "dirichlet-convergence",
    "increment-moments",
    "ou-comparison",
    "generator-gap",
    "timeavg-probe",
    "oracle-mc",
    "beta-derivative",
    "curvature",
    "coercivity",
];

pub struct Run {
    pub records: Vec<ResultRecord>,
    pub manifest: BTreeMap<String, String>,
}

pub fn run(id: &str, cfg: &Config) -> Result<Run, HarnessError> {
    let records = match id {
        "variance-convergence" => variance::run(cfg)?,
        "dirichlet-convergence" => dirichlet::run(cfg)?,
        "increment-moments" => increments::run(cfg)?,
        "ou-comparison" => ou::run(cfg)?,
        "generator-gap" => gap::run(cfg)?,
        "timeavg-probe" => timeavg::run(cfg)?,
        "oracle-mc" => checks::oracle_mc(cfg)?,
        "beta-derivative" => checks::beta_derivative(cfg)?,
        "curvature" => checks::curvature(cfg)?,
        "coercivity" => checks::coercivity(cfg)?,
        other => return Err(HarnessError::UnknownExperiment(other.into())),
    };
    let mut manifest = cfg.resolved();
    manifest.insert("experiment.id".into(), id.into());
    manifest.insert("harness.version".into(), env!("CARGO_PKG_VERSION").into());
    manifest.insert("records".into(), records.len().to_string());
    Ok(Run { records, manifest })
}

/// Common inputs of the scale-ladder experiments.
pub(crate) struct Ctx<'a> {
    pub id: &'static str,
    pub cfg: &'a Config,
    pub sys: System,
    pub seed: u64,
    pub sigmas: f64,
}

impl<'a> Ctx<'a> {
    pub fn new(id: &'static str, cfg: &'a Config) -> Result<Self, HarnessError> {
        Ok(Ctx {
            id,
            cfg,
            sys: System::from_config(cfg)?,
            seed: base_seed(cfg)?,
            sigmas: cfg.f64_or("tolerance.sigmas", 3.0)?,
        })
    }

    pub fn record(&self, point: impl Into<String>, quantity: impl Into<String>, est: Estimate) -> ResultRecord {
        ResultRecord::new(self.id, point, quantity, est)
    }

    pub fn seed_for(&self, path: &[u64]) -> u64 {
        derive_seed(self.seed, path)
    }
}

/// Label for a scale in a record point.
pub(crate) fn eps_label(eps: f64) -> String {
    eps.to_string()
}

pub(crate) struct Timer(Instant);

impl Timer {
    pub fn start() -> Self {
        Timer(Instant::now())
    }

    pub fn secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Judges a sequence of gaps (estimate − target) ordered from coarse to
/// fine scale. Pass if every gap is within k·stderr of zero, or if the gaps
/// never grow by more than their errors and the finest is smaller than the
/// coarsest. Fail if some gap grows beyond its error. Otherwise the budget
/// does not resolve the trend.
pub(crate) fn trend_outcome(gaps: &[Estimate], k: f64) -> (Outcome, String) {
    if gaps.iter().all(|g| g.value.abs() <= k * g.stderr) {
        return (Outcome::Pass, format!("all gaps within {k}se"));
    }
    for w in gaps.windows(2) {
        let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        if w[1].value.abs() > w[0].value.abs() + k * se {
            return (Outcome::Fail, format!("gap grows beyond {k}se"));
        }
    }
    let (first, last) = (gaps[0], gaps[gaps.len() - 1]);
    if last.value.abs() < first.value.abs() {
        (Outcome::Pass, "gap shrinks within error".into())
    } else {
        (Outcome::Inconclusive, "shrinkage not resolved".into())
    }
}

/// Independent equilibrium starts: every replica comes from its own chain
/// after burn-in, so the across-replica spread is an honest error.
pub(crate) fn replica_starts(
    ctx: &Ctx,
    gp: &GibbsParams,
    eps: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<Configuration>, HarnessError> {
    let mc = McBudget::from_config(ctx.cfg)?;
    let budget = McBudget {
        samples: replicas,
        chains: replicas,
        ..mc
    };
    Ok(crate::setup::sample_configurations(gp, &budget, ctx.sys.sweep(eps), seed))
}

/// Scaled field series for every replica, run in parallel; replica r uses
/// the seed derived from (seed, r).
pub(crate) fn run_replicas(
    starts: Vec<Configuration>,
    db: &DynBudget,
    eps: f64,
    gp: &GibbsParams,
    fs: &[(String, TestFunction)],
    rho1: f64,
    seed: u64,
) -> Result<Vec<FieldSeries>, HarnessError> {
    starts
        .into_par_iter()
        .enumerate()
        .map(|(r, c)| {
            let p = DynamicsParams::new(db.dt, db.horizon, eps, db.stride(eps), derive_seed(seed, &[r as u64]))?;
            Ok(run_scaled(c, &p, gp, fs, rho1)?)
        })
        .collect()
}

/// Converts macroscopic lags into record steps of a series.
pub(crate) fn lag_steps(lags: &[f64], interval: f64, key: &str) -> Result<Vec<usize>, HarnessError> {
    lags.iter()
        .map(|&l| {
            let s = (l / interval).round();
            if s < 1.0 || ((s * interval - l).abs() > 1e-6 * l.max(interval)) {
                Err(crate::config::ConfigError::Invalid {
                    key: key.into(),
                    reason: format!("lag {l} is not a positive multiple of the record interval {interval}"),
                }
                .into())
            } else {
                Ok(s as usize)
            }
        })
        .collect()
}

/// Mean over replicas of a per-replica statistic, with the replica spread
/// as error.
pub(crate) fn across_replicas(per: &[f64]) -> Estimate {
    let n = per.len() as f64;
    let m = fluctfield_core::stats::mean(per);
    let se = if per.len() > 1 {
        (fluctfield_core::stats::variance(per) / n).sqrt()
    } else {
        f64::NAN
    };
    Estimate::new(m, se)
}
