//! Grand-canonical Metropolis–Hastings sampling of the finite-volume Gibbs
//! measure exp(−βE) dπ_z on the torus, and correlation estimators.
//!
//! The chain optionally caps the particle number. Insertions at the cap are
//! rejected, which keeps detailed balance for the measure restricted to
//! n ≤ cap; the oracle uses the same truncation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::configuration::{Configuration, Torus};
use crate::potentials::{PairPotential, Point};
use crate::stats::{autocorrelation_time, block_bootstrap, mean, Estimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GibbsError {
    #[error("radial bins reach {r_max}, beyond half the box side {half}")]
    BinsTooWide { r_max: f64, half: f64 },
    #[error("invalid bins: {0}")]
    InvalidBins(String),
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveMix {
    pub insert: f64,
    pub delete: f64,
    pub translate: f64,
}

impl Default for MoveMix {
    fn default() -> Self {
        MoveMix {
            insert: 0.25,
            delete: 0.25,
            translate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsParams {
    pub beta: f64,
    pub z: f64,
    pub torus: Torus,
    pub phi: PairPotential,
    pub mix: MoveMix,
    /// Standard deviation of the Gaussian translate proposal per coordinate.
    pub step_size: f64,
    pub max_particles: Option<usize>,
}

impl GibbsParams {
    pub fn new(beta: f64, z: f64, torus: Torus, phi: PairPotential) -> Result<Self, GibbsError> {
        if !(beta >= 0.0) {
            return Err(GibbsError::InvalidParameter(format!("beta {beta}")));
        }
        if !(z > 0.0) {
            return Err(GibbsError::InvalidParameter(format!("activity {z}")));
        }
        if phi.dim != torus.dim {
            return Err(GibbsError::InvalidParameter(format!(
                "potential dimension {} differs from torus dimension {}",
                phi.dim, torus.dim
            )));
        }
        if torus.check_range(phi.range()).is_err() {
            return Err(GibbsError::InvalidParameter(format!(
                "box side {} must exceed twice the potential range {}",
                torus.side,
                phi.range()
            )));
        }
        Ok(GibbsParams {
            beta,
            z,
            torus,
            phi,
            mix: MoveMix::default(),
            step_size: 0.3,
            max_particles: None,
        })
    }

    pub fn with_max_particles(mut self, cap: usize) -> Self {
        self.max_particles = Some(cap);
        self
    }

    pub fn with_step_size(mut self, s: f64) -> Self {
        self.step_size = s;
        self
    }

    pub fn with_mix(mut self, mix: MoveMix) -> Self {
        self.mix = mix;
        self
    }

    /// Neighbor-index cutoff suited to the potential.
    pub fn cutoff(&self) -> f64 {
        self.phi.range()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proposal {
    Insert(Point),
    Delete(usize),
    Translate(usize, Point),
}

/// Attempt and acceptance counts for insert, delete, translate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MoveStats {
    pub attempted: [u64; 3],
    pub accepted: [u64; 3],
}

impl MoveStats {
    pub fn acceptance(&self, k: usize) -> f64 {
        if self.attempted[k] == 0 {
            0.0
        } else {
            self.accepted[k] as f64 / self.attempted[k] as f64
        }
    }
}

fn energy_change(state: &Configuration, p: &GibbsParams, mv: &Proposal) -> f64 {
    match *mv {
        Proposal::Insert(y) => state.energy_at(&y, None, &p.phi),
        Proposal::Delete(i) => -state.energy_at(&state.positions()[i], Some(i), &p.phi),
        Proposal::Translate(i, y) => {
            let new = state.energy_at(&y, Some(i), &p.phi);
            if new == f64::INFINITY {
                return f64::INFINITY;
            }
            new - state.energy_at(&state.positions()[i], Some(i), &p.phi)
        }
    }
}

/// Metropolis–Hastings acceptance probability of a proposal from `state`.
/// With equal insert and delete probabilities the ratios are
/// z|Λ|/(n+1)·e^{−βΔE}, n/(z|Λ|)·e^{−βΔE} and e^{−βΔE}.
pub fn acceptance_probability(state: &Configuration, p: &GibbsParams, mv: &Proposal) -> f64 {
    let n = state.len();
    let vol = p.torus.volume();
    let de = energy_change(state, p, mv);
    let boltz = if de == f64::INFINITY {
        0.0
    } else if p.beta == 0.0 {
        1.0
    } else {
        (-p.beta * de).exp()
    };
    let ratio = match mv {
        Proposal::Insert(_) => {
            if p.max_particles.is_some_and(|cap| n >= cap) {
                return 0.0;
            }
            p.mix.delete / p.mix.insert * p.z * vol / (n + 1) as f64 * boltz
        }
        Proposal::Delete(_) => {
            if n == 0 {
                return 0.0;
            }
            p.mix.insert / p.mix.delete * n as f64 / (p.z * vol) * boltz
        }
        Proposal::Translate(..) => boltz,
    };
    ratio.min(1.0)
}

fn random_point(torus: &Torus, rng: &mut impl Rng) -> Point {
    let mut y = [0.0; 3];
    for k in 0..torus.dim {
        y[k] = rng.gen::<f64>() * torus.side;
    }
    y
}

/// One Metropolis–Hastings move. Returns whether it was accepted; rejected
/// moves leave `state` untouched.
pub fn gcmc_step(state: &mut Configuration, p: &GibbsParams, rng: &mut impl Rng, stats: &mut MoveStats) -> bool {
    let u: f64 = rng.gen();
    let total = p.mix.insert + p.mix.delete + p.mix.translate;
    let (kind, mv) = if u * total < p.mix.insert {
        (0, Proposal::Insert(random_point(&p.torus, rng)))
    } else if u * total < p.mix.insert + p.mix.delete {
        if state.is_empty() {
            stats.attempted[1] += 1;
            return false;
        }
        (1, Proposal::Delete(rng.gen_range(0..state.len())))
    } else {
        if state.is_empty() {
            stats.attempted[2] += 1;
            return false;
        }
        let i = rng.gen_range(0..state.len());
        let mut y = state.positions()[i];
        for k in 0..p.torus.dim {
            let g: f64 = StandardNormal.sample(rng);
            y[k] += p.step_size * g;
        }
        (2, Proposal::Translate(i, p.torus.wrap(y)))
    };
    stats.attempted[kind] += 1;
    let a = acceptance_probability(state, p, &mv);
    let accept = a >= 1.0 || (a > 0.0 && rng.gen::<f64>() < a);
    if accept {
        stats.accepted[kind] += 1;
        match mv {
            Proposal::Insert(y) => state.push(y),
            Proposal::Delete(i) => {
                state.swap_remove(i);
            }
            Proposal::Translate(i, y) => state.set_position(i, y),
        }
    }
    accept
}

/// Seeded GCMC chain.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub params: GibbsParams,
    pub state: Configuration,
    pub stats: MoveStats,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(params: GibbsParams, seed: u64) -> Self {
        let state = Configuration::empty(params.torus, params.cutoff());
        Sampler {
            params,
            state,
            stats: MoveStats::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn step(&mut self) -> bool {
        gcmc_step(&mut self.state, &self.params, &mut self.rng, &mut self.stats)
    }

    /// Runs `steps` moves, nudging the translate step toward 40% acceptance
    /// every 500 translate attempts. Only meant for burn-in.
    pub fn burn_in(&mut self, steps: u64, tune: bool) {
        let mut window = MoveStats::default();
        for _ in 0..steps {
            let before = self.stats;
            self.step();
            window.attempted[2] += self.stats.attempted[2] - before.attempted[2];
            window.accepted[2] += self.stats.accepted[2] - before.accepted[2];
            if tune && window.attempted[2] >= 500 {
                let acc = window.acceptance(2);
                let f = (acc - 0.4).clamp(-0.5, 0.5).exp();
                let cap = 0.5 * self.params.torus.side;
                self.params.step_size = (self.params.step_size * f).clamp(1e-3, cap);
                window = MoveStats::default();
            }
        }
    }

    /// Burn-in, then calls `observe` on the state every `thinning` moves,
    /// `n_samples` times.
    pub fn run(&mut self, n_samples: usize, thinning: u64, burn_in: u64, mut observe: impl FnMut(&Configuration)) {
        self.burn_in(burn_in, true);
        for _ in 0..n_samples {
            for _ in 0..thinning.max(1) {
                self.step();
            }
            observe(&self.state);
        }
    }
}

/// Snapshots of a seeded chain; deterministic in (params, seed).
pub fn sample_ensemble(p: &GibbsParams, n_samples: usize, thinning: u64, burn_in: u64, seed: u64) -> Vec<Configuration> {
    let mut s = Sampler::new(p.clone(), seed);
    let mut out = Vec::with_capacity(n_samples);
    s.run(n_samples, thinning, burn_in, |c| out.push(c.clone()));
    out
}

/// Equal-width radial bins on [0, r_max].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBins {
    pub r_max: f64,
    pub count: usize,
}

impl RadialBins {
    pub fn new(r_max: f64, count: usize) -> Result<Self, GibbsError> {
        if !(r_max > 0.0) || count == 0 {
            return Err(GibbsError::InvalidBins(format!("r_max {r_max}, count {count}")));
        }
        Ok(RadialBins { r_max, count })
    }

    pub fn width(&self) -> f64 {
        self.r_max / self.count as f64
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        (k as f64 * self.width(), (k + 1) as f64 * self.width())
    }

    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.width()
    }

    /// Volume of the k-th shell in d dimensions.
    pub fn shell_volume(&self, k: usize, dim: usize) -> f64 {
        let (a, b) = self.edges(k);
        let ball = |r: f64| match dim {
            1 => 2.0 * r,
            2 => std::f64::consts::PI * r * r,
            _ => 4.0 / 3.0 * std::f64::consts::PI * r * r * r,
        };
        ball(b) - ball(a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub rho1: Estimate,
    pub bin_centers: Vec<f64>,
    pub rho2: Vec<Estimate>,
    pub u2: Vec<Estimate>,
    /// ρ⁽¹⁾ + Σ u⁽²⁾·shell volume, truncated at the last bin edge.
    pub chi: Estimate,
    /// Var(n)/|Λ|.
    pub chi_fluct: Estimate,
    /// |u⁽²⁾(last bin)|·|Λ|, the truncation proxy.
    pub chi_tail: f64,
    pub tail_flagged: bool,
    pub n_samples: usize,
    pub autocorrelation_time: f64,
    pub stability_violations: usize,
}

/// Streaming accumulator for the correlation estimators.
#[derive(Debug, Clone)]
pub struct CorrelationAccumulator {
    torus: Torus,
    bins: RadialBins,
    stability: f64,
    counts: Vec<f64>,
    pair_series: Vec<Vec<f64>>,
    violations: usize,
}

impl CorrelationAccumulator {
    pub fn new(p: &GibbsParams, bins: RadialBins) -> Result<Self, GibbsError> {
        let half = 0.5 * p.torus.side;
        if bins.r_max > half + 1e-12 {
            return Err(GibbsError::BinsTooWide { r_max: bins.r_max, half });
        }
        Ok(CorrelationAccumulator {
            torus: p.torus,
            stability: p.phi.stability_constant,
            pair_series: vec![Vec::new(); bins.count],
            bins,
            counts: Vec::new(),
            violations: 0,
        })
    }

    pub fn observe(&mut self, c: &Configuration, phi: &PairPotential) {
        let n = c.len();
        self.counts.push(n as f64);
        if c.total_energy(phi) < -self.stability * n as f64 - 1e-9 {
            self.violations += 1;
        }
        let w = self.bins.width();
        let mut hist = vec![0.0; self.bins.count];
        c.for_each_pair(self.bins.r_max, |_, _, _, r2| {
            let k = (r2.sqrt() / w) as usize;
            if k < hist.len() {
                hist[k] += 2.0;
            }
        });
        let vol = self.torus.volume();
        for (k, h) in hist.into_iter().enumerate() {
            let shell = self.bins.shell_volume(k, self.torus.dim);
            self.pair_series[k].push(h / (vol * shell));
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn finish(&self, seed: u64) -> Result<EnsembleStats, GibbsError> {
        let ns = self.counts.len();
        if ns == 0 {
            return Err(GibbsError::EmptyEnsemble);
        }
        let vol = self.torus.volume();
        let dim = self.torus.dim;
        let nb = self.bins.count;
        let density: Vec<f64> = self.counts.iter().map(|n| n / vol).collect();
        let squares: Vec<f64> = self.counts.iter().map(|n| n * n).collect();
        let total_pairs: Vec<f64> = (0..ns)
            .map(|t| (0..nb).map(|k| self.pair_series[k][t]).sum())
            .collect();
        let tau = autocorrelation_time(&self.counts).max(autocorrelation_time(&total_pairs));
        let block = ((5.0 * tau).ceil() as usize).max(1);
        let n_boot = 400;

        // Observable layout: [n/V, n², bin_0, .., bin_{nb−1}]
        let mut cols: Vec<&[f64]> = vec![&density, &squares];
        for s in &self.pair_series {
            cols.push(s);
        }
        let rho1 = block_bootstrap(&cols[..1], block, n_boot, seed, |m| m[0]);
        let shells: Vec<f64> = (0..nb).map(|k| self.bins.shell_volume(k, dim)).collect();
        let chi = block_bootstrap(&cols, block, n_boot, seed, |m| {
            let r1 = m[0];
            r1 + (0..nb).map(|k| (m[2 + k] - r1 * r1) * shells[k]).sum::<f64>()
        });
        let chi_fluct = block_bootstrap(&cols[..2], block, n_boot, seed, |m| {
            let mn = m[0] * vol;
            (m[1] - mn * mn) / vol
        });
        let mut rho2 = Vec::with_capacity(nb);
        let mut u2 = Vec::with_capacity(nb);
        for k in 0..nb {
            let pair = [cols[0], cols[2 + k]];
            rho2.push(block_bootstrap(&pair[1..], block, n_boot, seed, |m| m[0]));
            u2.push(block_bootstrap(&pair, block, n_boot, seed, |m| m[1] - m[0] * m[0]));
        }
        let chi_tail = u2.last().map_or(0.0, |u| u.value.abs()) * vol;
        Ok(EnsembleStats {
            tail_flagged: chi_tail > chi.stderr,
            rho1,
            bin_centers: (0..nb).map(|k| self.bins.center(k)).collect(),
            rho2,
            u2,
            chi,
            chi_fluct,
            chi_tail,
            n_samples: ns,
            autocorrelation_time: tau,
            stability_violations: self.violations,
        })
    }

    pub fn mean_count(&self) -> f64 {
        mean(&self.counts)
    }
}

/// Correlation estimates over a stored ensemble.
pub fn estimate_correlations(ensemble: &[Configuration], p: &GibbsParams, bins: RadialBins) -> Result<EnsembleStats, GibbsError> {
    let mut acc = CorrelationAccumulator::new(p, bins)?;
    for c in ensemble {
        let c = if c.cutoff() >= acc.bins.r_max { c.clone() } else { c.reindexed(acc.bins.r_max) };
        acc.observe(&c, &p.phi);
    }
    acc.finish(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuelleReport {
    pub rho1_ok: bool,
    pub bins_ok: Vec<bool>,
    pub max_ratio: f64,
    pub pass: bool,
}

/// Compares ρ⁽¹⁾ ≤ ξ and ρ⁽²⁾ ≤ ξ² bin by bin. Informational.
pub fn ruelle_check(stats: &EnsembleStats, xi: f64) -> RuelleReport {
    let r1 = stats.rho1.value / xi;
    let ratios: Vec<f64> = stats.rho2.iter().map(|e| e.value / (xi * xi)).collect();
    let bins_ok: Vec<bool> = ratios.iter().map(|&r| r <= 1.0).collect();
    let max_ratio = ratios.iter().copied().fold(r1, f64::max);
    RuelleReport {
        rho1_ok: r1 <= 1.0,
        pass: r1 <= 1.0 && bins_ok.iter().all(|&b| b),
        bins_ok,
        max_ratio,
    }
}
