//! Core objects built from a config: the system, test-function family,
//! budgets, seeds and the reference coefficients used as targets.

use fluctfield_core::configuration::{Configuration, Torus};
use fluctfield_core::expansion::ExpansionCoefficients;
use fluctfield_core::gibbs::{CorrelationAccumulator, GibbsParams, MoveStats, RadialBins, Sampler};
use fluctfield_core::oulimit::OUParams;
use fluctfield_core::potentials::PairPotential;
use fluctfield_core::scaling::TestFunction;
use fluctfield_core::stats::Estimate;
use rayon::prelude::*;

use crate::config::{Config, ConfigError};
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct System {
    pub dim: usize,
    pub beta: f64,
    pub z: f64,
    /// Side of the macroscopic box; the microscopic box at scale ε is l0/ε.
    pub l0: f64,
    pub phi: PairPotential,
    pub potential: String,
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

pub fn potential_from_config(cfg: &Config, dim: usize) -> Result<(PairPotential, String), HarnessError> {
    let kind = cfg.str("potential.kind")?;
    let phi = match kind.as_str() {
        "zero" => PairPotential::zero(dim),
        "bump" => {
            let h = cfg.f64_or("potential.height", 1.0)?;
            let w = cfg.f64_or("potential.width", 1.0)?;
            PairPotential::smooth_compact(h, w, dim)?
        }
        "lj" => {
            let e = cfg.f64_or("potential.well_depth", 1.0)?;
            let s = cfg.f64_or("potential.sigma", 1.0)?;
            let rc = cfg.f64_or("potential.r_cut", 2.5)?;
            let rs = cfg.f64_or("potential.r_switch", 0.8 * rc)?;
            let rm = cfg.f64_or("potential.r_min", 0.5 * s)?;
            PairPotential::lennard_jones_with(e, s, rc, rs, rm, dim)?
        }
        other => return Err(invalid("potential.kind", format!("unknown kind `{other}` (zero, bump, lj)")).into()),
    };
    let phi = if cfg.contains("potential.stability") {
        phi.with_stability_constant(cfg.f64("potential.stability")?)
    } else {
        phi
    };
    Ok((phi, kind))
}

impl System {
    pub fn from_config(cfg: &Config) -> Result<Self, HarnessError> {
        let dim = cfg.usize("system.dim")?;
        if !(1..=3).contains(&dim) {
            return Err(invalid("system.dim", "must be 1, 2 or 3").into());
        }
        let (phi, potential) = potential_from_config(cfg, dim)?;
        let beta = cfg.f64("system.beta")?;
        let z = cfg.f64_or("system.z", 1.0)?;
        let l0 = cfg.f64("system.l0")?;
        if !(beta >= 0.0) {
            return Err(invalid("system.beta", "must be non-negative").into());
        }
        if !(z > 0.0) {
            return Err(invalid("system.z", "must be positive").into());
        }
        if !(l0 > 0.0) {
            return Err(invalid("system.l0", "must be positive").into());
        }
        Ok(System {
            dim,
            beta,
            z,
            l0,
            phi,
            potential,
        })
    }

    pub fn is_ideal(&self) -> bool {
        self.phi.is_zero() || self.beta == 0.0
    }

    pub fn torus(&self, eps: f64) -> Result<Torus, HarnessError> {
        Ok(Torus::new(self.l0 / eps, self.dim)?)
    }

    pub fn gibbs(&self, eps: f64) -> Result<GibbsParams, HarnessError> {
        Ok(GibbsParams::new(self.beta, self.z, self.torus(eps)?, self.phi.clone())?)
    }

    /// Moves per sweep: the expected particle number at activity z, at least 10.
    pub fn sweep(&self, eps: f64) -> u64 {
        let v = (self.l0 / eps).powi(self.dim as i32);
        (self.z * v).ceil().max(10.0) as u64
    }
}

/// Scale ladder, each ε in (0, 1].
pub fn eps_ladder(cfg: &Config) -> Result<Vec<f64>, HarnessError> {
    let eps = cfg.f64_list_or("scaling.eps", &[1.0, 0.5, 0.25, 0.125])?;
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(invalid("scaling.eps", "entries must lie in (0, 1]").into());
    }
    Ok(eps)
}

/// Parses entries like `cos 1 0`, `sin 0 1 amp=0.5` or `bump 0.8` into
/// labelled test functions on the macroscopic box.
pub fn test_family(cfg: &Config, sys: &System) -> Result<Vec<(String, TestFunction)>, HarnessError> {
    let key = "test_functions.family";
    let entries = cfg.str_list(key)?;
    if entries.is_empty() {
        return Err(invalid(key, "empty family").into());
    }
    entries.iter().map(|e| parse_test_function(e, sys).map_err(|r| invalid(key, r).into())).collect()
}

pub fn parse_test_function(entry: &str, sys: &System) -> Result<(String, TestFunction), String> {
    let mut words = entry.split_whitespace();
    let kind = words.next().ok_or("empty entry")?;
    let mut amp = 1.0;
    let mut args = Vec::new();
    for w in words {
        if let Some(a) = w.strip_prefix("amp=") {
            amp = a.parse().map_err(|_| format!("bad amplitude in `{entry}`"))?;
        } else {
            args.push(w);
        }
    }
    let (d, side) = (sys.dim, sys.l0);
    match kind {
        "cos" | "sin" => {
            if args.is_empty() || args.len() > d {
                return Err(format!("`{entry}`: give 1..={d} integer wave numbers"));
            }
            let mut k = [0i64; 3];
            for (slot, a) in k.iter_mut().zip(&args) {
                *slot = a.parse().map_err(|_| format!("bad wave number in `{entry}`"))?;
            }
            let id = format!("{kind}_{}", k[..d].iter().map(|v| v.to_string()).collect::<Vec<_>>().join("_"));
            let f = TestFunction::fourier_mode(k, kind == "sin", amp, side, d).map_err(|e| format!("`{entry}`: {e}"))?;
            Ok((id, f))
        }
        "bump" => {
            let [r] = args[..] else {
                return Err(format!("`{entry}`: give one radius"));
            };
            let radius: f64 = r.parse().map_err(|_| format!("bad radius in `{entry}`"))?;
            let mut c = [0.0; 3];
            for v in c.iter_mut().take(d) {
                *v = 0.5 * side;
            }
            let f = TestFunction::compact_bump(c, radius, amp, side, d).map_err(|e| format!("`{entry}`: {e}"))?;
            Ok((format!("bump_{r}"), f))
        }
        other => Err(format!("unknown test function `{other}` (cos, sin, bump)")),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McBudget {
    pub samples: usize,
    pub chains: usize,
    pub burn_in_sweeps: u64,
    pub thinning_sweeps: f64,
}

impl McBudget {
    pub fn from_config(cfg: &Config) -> Result<Self, HarnessError> {
        let b = McBudget {
            samples: cfg.usize("mc.samples")?,
            chains: cfg.usize_or("mc.chains", 4)?,
            burn_in_sweeps: cfg.u64_or("mc.burn_in", 200)?,
            thinning_sweeps: cfg.f64_or("mc.thinning", 2.0)?,
        };
        if b.samples == 0 || b.chains == 0 || b.samples < b.chains {
            return Err(invalid("mc.samples", "need at least one sample per chain").into());
        }
        if !(b.thinning_sweeps > 0.0) {
            return Err(invalid("mc.thinning", "must be positive").into());
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DynBudget {
    /// Microscopic step.
    pub dt: f64,
    /// Macroscopic horizon.
    pub horizon: f64,
    pub replicas: usize,
    pub record_stride: u64,
    /// Macroscopic time between records; overrides the stride when set.
    pub record_interval: Option<f64>,
}

impl DynBudget {
    pub fn from_config(cfg: &Config) -> Result<Self, HarnessError> {
        let b = DynBudget {
            dt: cfg.f64("dynamics.dt")?,
            horizon: cfg.f64("dynamics.horizon")?,
            replicas: cfg.usize("dynamics.replicas")?,
            record_stride: cfg.u64_or("dynamics.record_stride", 10)?,
            record_interval: if cfg.contains("dynamics.record_interval") {
                Some(cfg.f64("dynamics.record_interval")?)
            } else {
                None
            },
        };
        if let Some(h) = b.record_interval {
            if !(h >= b.dt) {
                return Err(invalid("dynamics.record_interval", "must be at least one step").into());
            }
        }
        if !(b.dt > 0.0 && b.horizon > 0.0) || b.replicas == 0 || b.record_stride == 0 {
            return Err(invalid("dynamics", "dt, horizon, replicas and record_stride must be positive").into());
        }
        Ok(b)
    }

    /// Steps between records at scale ε.
    pub fn stride(&self, eps: f64) -> u64 {
        match self.record_interval {
            Some(h) => ((h / (self.dt * eps * eps)).round() as u64).max(1),
            None => self.record_stride,
        }
    }

    /// Macroscopic time between records at scale ε.
    pub fn interval(&self, eps: f64) -> f64 {
        self.stride(eps) as f64 * self.dt * eps * eps
    }
}

/// Seed derived from the base seed and a path of indices (experiment stage,
/// scale, replica, ...). Distinct paths give unrelated streams.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = splitmix(base ^ 0x6a09_e667_f3bc_c908);
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn base_seed(cfg: &Config) -> Result<u64, HarnessError> {
    Ok(cfg.u64_or("seeds.base", 1)?)
}

/// Runs `budget.chains` independent GCMC chains in parallel and maps every
/// sample through `observe`. Results are concatenated in chain order, so the
/// output does not depend on the thread count.
pub fn sample_map<T, F>(
    gp: &GibbsParams,
    budget: &McBudget,
    sweep: u64,
    seed: u64,
    observe: F,
) -> (Vec<T>, MoveStats)
where
    T: Send,
    F: Fn(&Configuration) -> T + Sync,
{
    let per = budget.samples.div_ceil(budget.chains);
    let thin = ((budget.thinning_sweeps * sweep as f64).ceil() as u64).max(1);
    let burn = budget.burn_in_sweeps * sweep;
    let chains: Vec<(Vec<T>, MoveStats)> = (0..budget.chains)
        .into_par_iter()
        .map(|c| {
            let mut s = Sampler::new(gp.clone(), derive_seed(seed, &[c as u64]));
            let n = per.min(budget.samples - (c * per).min(budget.samples));
            let mut out = Vec::with_capacity(n);
            s.run(n, thin, burn, |cfg| out.push(observe(cfg)));
            (out, s.stats)
        })
        .collect();
    let mut all = Vec::with_capacity(budget.samples);
    let mut stats = MoveStats::default();
    for (v, st) in chains {
        all.extend(v);
        for k in 0..3 {
            stats.attempted[k] += st.attempted[k];
            stats.accepted[k] += st.accepted[k];
        }
    }
    (all, stats)
}

/// Equilibrium configurations, one per chain sample.
pub fn sample_configurations(gp: &GibbsParams, budget: &McBudget, sweep: u64, seed: u64) -> Vec<Configuration> {
    sample_map(gp, budget, sweep, seed, |c| c.clone()).0
}

/// Density and compressibility used as targets, with their provenance.
#[derive(Debug, Clone)]
pub struct Reference {
    pub rho1: Estimate,
    pub chi: Estimate,
    pub source: String,
}

impl Reference {
    pub fn ou(&self) -> Result<OUParams, HarnessError> {
        Ok(OUParams::new(self.rho1.value, self.chi.value)?)
    }
}

/// `reference.source`: `exact` (ideal gas only), `low_beta` (z = 1 only),
/// `fixed` (`reference.rho1`, `reference.chi`) or `mc` (a GCMC run on a box
/// of side `reference.side`).
pub fn reference(cfg: &Config, sys: &System, seed: u64) -> Result<Reference, HarnessError> {
    let default = if sys.is_ideal() { "exact" } else { "mc" };
    let source = cfg.str_or("reference.source", default)?;
    match source.as_str() {
        "exact" => {
            if !sys.is_ideal() {
                return Err(invalid("reference.source", "exact coefficients need the ideal gas").into());
            }
            Ok(Reference {
                rho1: Estimate::exact(sys.z),
                chi: Estimate::exact(sys.z),
                source,
            })
        }
        "low_beta" => {
            if sys.z != 1.0 {
                return Err(invalid("reference.source", "the low-β expansion is taken at z = 1").into());
            }
            let c = ExpansionCoefficients::low_beta(&sys.phi, sys.beta)?;
            Ok(Reference {
                rho1: Estimate::exact(c.rho1),
                chi: Estimate::exact(c.chi),
                source,
            })
        }
        "fixed" => Ok(Reference {
            rho1: Estimate::exact(cfg.f64("reference.rho1")?),
            chi: Estimate::exact(cfg.f64("reference.chi")?),
            source,
        }),
        "mc" => {
            let side = cfg.f64_or("reference.side", sys.l0)?;
            let budget = McBudget {
                samples: cfg.usize_or("reference.samples", 4000)?,
                chains: cfg.usize_or("mc.chains", 4)?,
                burn_in_sweeps: cfg.u64_or("mc.burn_in", 200)?,
                thinning_sweeps: cfg.f64_or("mc.thinning", 2.0)?,
            };
            let gp = GibbsParams::new(sys.beta, sys.z, Torus::new(side, sys.dim)?, sys.phi.clone())?;
            let eps = sys.l0 / side;
            let sweep = sys.sweep(eps);
            let r_max = (0.5 * side).min(sys.phi.range().max(1.0));
            let bins = RadialBins::new(r_max, 4)?;
            let (confs, _) = sample_map(&gp, &budget, sweep, seed, |c| c.clone());
            let mut acc = CorrelationAccumulator::new(&gp, bins)?;
            for c in &confs {
                acc.observe(c, &gp.phi);
            }
            let st = acc.finish(seed)?;
            Ok(Reference {
                rho1: st.rho1,
                chi: st.chi_fluct,
                source,
            })
        }
        other => Err(invalid("reference.source", format!("unknown source `{other}`")).into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(extra: &str) -> (Config, System) {
        let cfg = Config::parse(&format!(
            "[system]\ndim = 2\nbeta = 0.5\nl0 = 4.0\n[potential]\nkind = \"bump\"\n{extra}"
        ))
        .unwrap();
        let s = System::from_config(&cfg).unwrap();
        (cfg, s)
    }

    #[test]
    fn family_parsing() {
        let (_, s) = sys("");
        let (id, f) = parse_test_function("cos 1 2 amp=0.5", &s).unwrap();
        assert_eq!(id, "cos_1_2");
        assert!((f.norm_sq - 0.25 * 8.0).abs() < 1e-12);
        let (id, _) = parse_test_function("bump 0.8", &s).unwrap();
        assert_eq!(id, "bump_0.8");
        assert!(parse_test_function("cos 1 2 3", &s).is_err());
        assert!(parse_test_function("wave 1", &s).is_err());
    }

    #[test]
    fn seeds_differ_by_path() {
        let a = derive_seed(7, &[0, 1]);
        assert_ne!(a, derive_seed(7, &[1, 0]));
        assert_ne!(a, derive_seed(8, &[0, 1]));
        assert_eq!(a, derive_seed(7, &[0, 1]));
    }

    #[test]
    fn chains_are_deterministic_and_sized() {
        let (_, s) = sys("");
        let gp = s.gibbs(1.0).unwrap();
        let b = McBudget {
            samples: 10,
            chains: 3,
            burn_in_sweeps: 5,
            thinning_sweeps: 1.0,
        };
        let (a, _) = sample_map(&gp, &b, s.sweep(1.0), 5, |c| c.len());
        let (c, _) = sample_map(&gp, &b, s.sweep(1.0), 5, |c| c.len());
        assert_eq!(a.len(), 10);
        assert_eq!(a, c);
    }

    #[test]
    fn missing_potential_kind() {
        let cfg = Config::parse("[system]\ndim = 1\nbeta = 0.1\nl0 = 3.0\n").unwrap();
        let e = System::from_config(&cfg).unwrap_err();
        assert_eq!(e.to_string(), "missing config key `potential.kind`");
    }
}
