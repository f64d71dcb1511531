//! Overdamped Langevin dynamics dx = B dt + √2 dW with B = −βΣ∇φ, integrated
//! by Euler–Maruyama on the torus, plus the scaled generator evaluated on
//! linear functionals.
//!
//! If a step would put a pair below the hard floor r_min, the step is split
//! into two halves whose Gaussian increments sum to the original one
//! (ξ₁ = (ξ + η)/√2, ξ₂ = (ξ − η)/√2 with a fresh η). Splitting recurses at
//! most 8 levels deep before the step fails.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::configuration::{ConfigError, Configuration};
use crate::gibbs::GibbsParams;
use crate::oulimit::OUParams;
use crate::potentials::{PairPotential, Point};
use crate::scaling::{fluctuation_fields, ScaledField, ScalingError, TestFunction};
use crate::stats::NeumaierSum;

pub const MAX_SPLITS: u32 = 8;

#[derive(Debug, Error)]
pub enum LangevinError {
    #[error("step at micro time {time} still creates a close pair ({i}, {j}) at distance {distance} after {splits} halvings")]
    StiffStep {
        time: f64,
        i: usize,
        j: usize,
        distance: f64,
        splits: u32,
    },
    #[error("pair ({i}, {j}) closer than the hard floor: {distance}")]
    ClosePair { i: usize, j: usize, distance: f64 },
    #[error("invalid dynamics parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    /// Microscopic time step.
    pub dt: f64,
    /// Horizon in scaled time.
    pub horizon: f64,
    pub eps: f64,
    /// Record every this many micro steps.
    pub record_stride: u64,
    pub seed: u64,
}

impl DynamicsParams {
    pub fn new(dt: f64, horizon: f64, eps: f64, record_stride: u64, seed: u64) -> Result<Self, LangevinError> {
        if !(dt > 0.0) {
            return Err(LangevinError::InvalidParameter(format!("dt {dt}")));
        }
        if !(horizon >= 0.0) {
            return Err(LangevinError::InvalidParameter(format!("horizon {horizon}")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(LangevinError::InvalidParameter(format!("eps {eps}")));
        }
        if record_stride == 0 {
            return Err(LangevinError::InvalidParameter("record stride 0".into()));
        }
        Ok(DynamicsParams {
            dt,
            horizon,
            eps,
            record_stride,
            seed,
        })
    }

    /// ε⁻²·T.
    pub fn micro_horizon(&self) -> f64 {
        self.horizon / (self.eps * self.eps)
    }

    pub fn n_steps(&self) -> u64 {
        (self.micro_horizon() / self.dt).round() as u64
    }

    /// Scaled time between records.
    pub fn record_interval(&self) -> f64 {
        self.record_stride as f64 * self.dt * self.eps * self.eps
    }
}

/// Euler–Maruyama integrator holding the current state and its drift.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub phi: PairPotential,
    pub beta: f64,
    pub state: Configuration,
    /// Microscopic time.
    pub time: f64,
    pub splits: u64,
    drift: Vec<Point>,
    rng: ChaCha8Rng,
}

impl Integrator {
    pub fn new(state: Configuration, phi: PairPotential, beta: f64, seed: u64) -> Result<Self, LangevinError> {
        let state = if state.cutoff() < phi.range() { state.reindexed(phi.range()) } else { state };
        let drift = state.drift(&phi, beta).map_err(|e| match e {
            ConfigError::ClosePair { i, j, distance, .. } => LangevinError::ClosePair { i, j, distance },
            other => other.into(),
        })?;
        Ok(Integrator {
            phi,
            beta,
            state,
            time: 0.0,
            splits: 0,
            drift,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn drift(&self) -> &[Point] {
        &self.drift
    }

    fn draw(&mut self, n: usize) -> Vec<Point> {
        let d = self.state.torus.dim;
        let mut xi = vec![[0.0; 3]; n];
        for p in xi.iter_mut() {
            for v in p.iter_mut().take(d) {
                *v = StandardNormal.sample(&mut self.rng);
            }
        }
        xi
    }

    /// One step of length dt with fresh noise, drawn per particle in index order.
    pub fn step(&mut self, dt: f64) -> Result<(), LangevinError> {
        let xi = self.draw(self.state.len());
        self.step_with_noise(dt, &xi)
    }

    /// One step with caller-supplied standard Gaussian increments.
    pub fn step_with_noise(&mut self, dt: f64, xi: &[Point]) -> Result<(), LangevinError> {
        assert_eq!(xi.len(), self.state.len());
        self.advance(dt, xi, 0)
    }

    fn advance(&mut self, dt: f64, xi: &[Point], depth: u32) -> Result<(), LangevinError> {
        let d = self.state.torus.dim;
        let amp = (2.0 * dt).sqrt();
        let old: Vec<Point> = self.state.positions().to_vec();
        for i in 0..old.len() {
            let mut p = old[i];
            for k in 0..d {
                p[k] += self.drift[i][k] * dt + amp * xi[i][k];
            }
            self.state.set_position(i, p);
        }
        let mut new_drift = Vec::with_capacity(old.len());
        match self.state.drift_into(&self.phi, self.beta, &mut new_drift) {
            Ok(()) => {
                self.drift = new_drift;
                self.time += dt;
                Ok(())
            }
            Err(ConfigError::ClosePair { i, j, distance, .. }) => {
                for (k, p) in old.iter().enumerate() {
                    self.state.set_position(k, *p);
                }
                if depth >= MAX_SPLITS {
                    return Err(LangevinError::StiffStep {
                        time: self.time,
                        i,
                        j,
                        distance,
                        splits: depth,
                    });
                }
                self.splits += 1;
                let eta = self.draw(old.len());
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let mut first = vec![[0.0; 3]; old.len()];
                let mut second = vec![[0.0; 3]; old.len()];
                for i in 0..old.len() {
                    for k in 0..d {
                        first[i][k] = s * (xi[i][k] + eta[i][k]);
                        second[i][k] = s * (xi[i][k] - eta[i][k]);
                    }
                }
                self.advance(dt / 2.0, &first, depth + 1)?;
                self.advance(dt / 2.0, &second, depth + 1)
            }
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Configuration>,
    pub dt: f64,
    pub seed: u64,
}

/// Integrates `n_steps` steps, keeping a snapshot every `record_every`
/// (including time 0).
pub fn evolve(
    initial: Configuration,
    phi: &PairPotential,
    beta: f64,
    dt: f64,
    n_steps: u64,
    record_every: u64,
    seed: u64,
) -> Result<Trajectory, LangevinError> {
    let mut it = Integrator::new(initial, phi.clone(), beta, seed)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        snapshots: vec![it.state.clone()],
        dt,
        seed,
    };
    for s in 1..=n_steps {
        it.step(dt)?;
        if s % record_every.max(1) == 0 {
            traj.times.push(s as f64 * dt);
            traj.snapshots.push(it.state.clone());
        }
    }
    Ok(traj)
}

/// Time series of field pairings ⟨f_i, X_ε(t_j)⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub source: String,
    pub eps: f64,
    pub beta: f64,
    pub z: f64,
    /// Microscopic box side L.
    pub side: f64,
    pub dt: f64,
    pub seed: u64,
    pub ids: Vec<String>,
    /// Scaled times.
    pub times: Vec<f64>,
    /// One row per time, one column per test function.
    pub values: Vec<Vec<f64>>,
}

impl FieldSeries {
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[i]).collect()
    }

    /// Header line of key=value metadata, a column header, then rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<(), LangevinError> {
        let mut s = format!(
            "# source={} eps={} beta={} z={} L={} dt={} seed={} ids={}\n",
            self.source,
            self.eps,
            self.beta,
            self.z,
            self.side,
            self.dt,
            self.seed,
            self.ids.join(";")
        );
        s.push('t');
        for id in &self.ids {
            s.push(',');
            s.push_str(id);
        }
        s.push('\n');
        for (t, row) in self.times.iter().zip(&self.values) {
            s.push_str(&t.to_string());
            for v in row {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }
}

/// Runs the microscopic dynamics to ε⁻²T from an equilibrium sample and
/// records the scaled field pairings every `record_stride` steps.
pub fn run_scaled(
    initial: Configuration,
    p: &DynamicsParams,
    gp: &GibbsParams,
    fs: &[(String, TestFunction)],
    rho1: f64,
) -> Result<FieldSeries, LangevinError> {
    let side = initial.torus.side;
    let mut it = Integrator::new(initial, gp.phi.clone(), gp.beta, p.seed)?;
    let funcs: Vec<TestFunction> = fs.iter().map(|(_, f)| f.clone()).collect();
    let mut series = FieldSeries {
        source: "langevin".into(),
        eps: p.eps,
        beta: gp.beta,
        z: gp.z,
        side,
        dt: p.dt,
        seed: p.seed,
        ids: fs.iter().map(|(id, _)| id.clone()).collect(),
        times: Vec::new(),
        values: Vec::new(),
    };
    let record = |it: &Integrator, series: &mut FieldSeries, t: f64| -> Result<(), LangevinError> {
        let v = fluctuation_fields(&ScaledField::new(&it.state, p.eps, rho1), &funcs)?;
        series.times.push(t);
        series.values.push(v);
        Ok(())
    };
    record(&it, &mut series, 0.0)?;
    let n = p.n_steps();
    for s in 1..=n {
        it.step(p.dt).map_err(|e| match e {
            LangevinError::StiffStep { i, j, distance, splits, .. } => LangevinError::StiffStep {
                time: s as f64 * p.dt,
                i,
                j,
                distance,
                splits,
            },
            other => other,
        })?;
        if s % p.record_stride == 0 {
            record(&it, &mut series, s as f64 * p.dt * p.eps * p.eps)?;
        }
    }
    Ok(series)
}

/// (1 − ρ⁽¹⁾/χ)·⟨Δf, ω⟩ − ε^{d/2}·β·Σ_{pairs}(∇φ_ε(x−y), ∇f(x) − ∇f(y)) for
/// ω the scaled field of the microscopic configuration γ. With φ_ε = φ(·/ε)
/// the pair term is ε^{d/2−1}·β·Σ(∇φ(r), ∇f(εx) − ∇f(εy)) in microscopic
/// displacements r.
pub fn generator_gap_linear(
    gamma: &Configuration,
    eps: f64,
    gp: &GibbsParams,
    f: &TestFunction,
    ou: &OUParams,
) -> Result<f64, LangevinError> {
    let d = gamma.torus.dim as f64;
    let mut lap = NeumaierSum::new();
    for p in gamma.positions() {
        lap.add(f.laplacian(&[p[0] * eps, p[1] * eps, p[2] * eps]));
    }
    let coeff = 1.0 - ou.rho1 / ou.chi;
    let omega_lap = eps.powf(d / 2.0) * lap.value();
    let phi = &gp.phi;
    if phi.range() == 0.0 || gp.beta == 0.0 {
        return Ok(coeff * omega_lap);
    }
    let rmin2 = phi.r_min * phi.r_min;
    let pos = gamma.positions();
    let mut pair = NeumaierSum::new();
    let mut close = None;
    gamma.for_each_pair(phi.range(), |i, j, r, r2| {
        if r2 < rmin2 {
            close.get_or_insert((i, j, r2.sqrt()));
            return;
        }
        let g = phi.gradient_factor_r2(r2);
        if g == 0.0 {
            return;
        }
        let gi = f.gradient(&[pos[i][0] * eps, pos[i][1] * eps, pos[i][2] * eps]);
        let gj = f.gradient(&[pos[j][0] * eps, pos[j][1] * eps, pos[j][2] * eps]);
        let mut dot = 0.0;
        for k in 0..3 {
            dot += g * r[k] * (gi[k] - gj[k]);
        }
        pair.add(dot);
    });
    if let Some((i, j, distance)) = close {
        return Err(LangevinError::ClosePair { i, j, distance });
    }
    Ok(coeff * omega_lap - eps.powf(d / 2.0 - 1.0) * gp.beta * pair.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configuration::Torus;

    #[test]
    fn free_increments_have_variance_2dt() {
        let t = Torus::new(50.0, 2).unwrap();
        let c = Configuration::new(t, vec![[25.0, 25.0, 0.0]], 0.0);
        let mut it = Integrator::new(c, PairPotential::zero(2), 1.0, 3).unwrap();
        let dt = 0.01;
        let mut inc = Vec::new();
        for _ in 0..100_000 {
            let before = it.state.positions()[0];
            it.step(dt).unwrap();
            inc.push(t.displacement(&it.state.positions()[0], &before)[0]);
        }
        let v = crate::stats::variance(&inc);
        // stderr of a Gaussian variance estimate is √(2/n)·σ²
        assert!((v - 2.0 * dt).abs() < 3.0 * (2.0f64 / 1e5).sqrt() * 2.0 * dt);
    }

    #[test]
    fn permutation_equivariance() {
        let phi = PairPotential::lennard_jones(1.0, 1.0, 2.5, 2).unwrap();
        let t = Torus::new(8.0, 2).unwrap();
        let pts = vec![[1.0, 1.0, 0.0], [2.2, 1.3, 0.0], [1.4, 2.5, 0.0], [5.0, 5.0, 0.0]];
        let noise = vec![[0.1, -0.3, 0.0], [0.5, 0.2, 0.0], [-1.0, 0.7, 0.0], [0.0, 0.4, 0.0]];
        let perm = [2, 0, 3, 1];
        let mut a = Integrator::new(Configuration::new(t, pts.clone(), 2.5), phi.clone(), 1.0, 0).unwrap();
        let pp: Vec<Point> = perm.iter().map(|&i| pts[i]).collect();
        let pn: Vec<Point> = perm.iter().map(|&i| noise[i]).collect();
        let mut b = Integrator::new(Configuration::new(t, pp, 2.5), phi, 1.0, 0).unwrap();
        a.step_with_noise(1e-3, &noise).unwrap();
        b.step_with_noise(1e-3, &pn).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for c in 0..2 {
                assert!((a.state.positions()[i][c] - b.state.positions()[k][c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn splitting_rescues_overshoot_and_bounds_depth() {
        let phi = PairPotential::lennard_jones(1.0, 1.0, 2.5, 1).unwrap();
        let t = Torus::new(10.0, 1).unwrap();
        let c = Configuration::new(t, vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 2.5);
        let mut it = Integrator::new(c.clone(), phi.clone(), 1.0, 9).unwrap();
        // drive the pair together with large opposing noise
        let r = it.step_with_noise(0.01, &[[3.5, 0.0, 0.0], [-3.5, 0.0, 0.0]]);
        match r {
            Ok(()) => assert!(it.splits > 0),
            Err(LangevinError::StiffStep { splits, .. }) => assert_eq!(splits, MAX_SPLITS),
            Err(e) => panic!("{e}"),
        }
        assert!(it.state.min_pair_distance(2.5).unwrap() >= 0.5);
        // aimed so the unsplit step lands both particles on the same point;
        // whatever the halvings do, no accepted state may violate the floor
        for seed in 0..20 {
            let mut it = Integrator::new(c.clone(), phi.clone(), 1.0, seed).unwrap();
            let a = 1.0 / (2.0f64 * 0.01).sqrt() * 0.515;
            match it.step_with_noise(0.01, &[[a, 0.0, 0.0], [-a, 0.0, 0.0]]) {
                Ok(()) => assert!(it.state.min_pair_distance(2.5).map_or(true, |d| d >= 0.5)),
                Err(LangevinError::StiffStep { splits, .. }) => assert_eq!(splits, MAX_SPLITS),
                Err(e) => panic!("{e}"),
            }
            assert_eq!(it.state.positions().len(), 2);
        }
    }

    #[test]
    fn zero_horizon_records_initial_field() {
        let t = Torus::new(6.0, 2).unwrap();
        let c = Configuration::new(t, vec![[1.0, 2.0, 0.0], [4.0, 4.5, 0.0]], 0.0);
        let gp = GibbsParams::new(1.0, 1.0, t, PairPotential::zero(2)).unwrap();
        let f = TestFunction::fourier_mode([1, 0, 0], false, 1.0, 6.0, 2).unwrap();
        let p = DynamicsParams::new(1e-3, 0.0, 1.0, 10, 1).unwrap();
        let s = run_scaled(c.clone(), &p, &gp, &[("c10".into(), f.clone())], 1.0).unwrap();
        assert_eq!(s.times, vec![0.0]);
        let direct = crate::scaling::fluctuation_field(&ScaledField::new(&c, 1.0, 1.0), &f).unwrap();
        assert_eq!(s.values[0][0], direct);
        assert_eq!(p.micro_horizon(), 0.0);
        let q = DynamicsParams::new(1e-3, 0.5, 0.25, 10, 1).unwrap();
        assert_eq!(q.micro_horizon(), 8.0);
    }

    #[test]
    fn ideal_gap_vanishes() {
        let t = Torus::new(12.0, 2).unwrap();
        let c = Configuration::new(t, vec![[1.0, 2.0, 0.0], [4.0, 4.5, 0.0], [4.2, 4.4, 0.0]], 0.0);
        let gp = GibbsParams::new(0.0, 1.0, t, PairPotential::zero(2)).unwrap();
        let f = TestFunction::fourier_mode([1, 1, 0], false, 1.0, 6.0, 2).unwrap();
        let ou = OUParams::new(1.0, 1.0).unwrap();
        assert_eq!(generator_gap_linear(&c, 0.5, &gp, &f, &ou).unwrap(), 0.0);
    }
}
