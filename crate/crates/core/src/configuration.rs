//! Particle configurations on a periodic box with a cell-list neighbor index.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::potentials::{norm2, PairPotential, Point};
use crate::stats::NeumaierSum;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("particles {i} and {j} are closer ({distance}) than the hard floor {r_min}")]
    ClosePair {
        i: usize,
        j: usize,
        distance: f64,
        r_min: f64,
    },
    #[error("torus side {side} must exceed twice the interaction range {range}")]
    BoxTooSmall { side: f64, range: f64 },
    #[error("invalid torus: {0}")]
    InvalidTorus(String),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torus {
    pub side: f64,
    pub dim: usize,
}

impl Torus {
    pub fn new(side: f64, dim: usize) -> Result<Self, ConfigError> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(ConfigError::InvalidTorus(format!("side length {side}")));
        }
        if !(1..=3).contains(&dim) {
            return Err(ConfigError::InvalidTorus(format!("dimension {dim}")));
        }
        Ok(Torus { side, dim })
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// Minimum image requires L > 2·range.
    pub fn check_range(&self, range: f64) -> Result<(), ConfigError> {
        if self.side > 2.0 * range {
            Ok(())
        } else {
            Err(ConfigError::BoxTooSmall {
                side: self.side,
                range,
            })
        }
    }

    #[inline]
    pub fn wrap(&self, p: Point) -> Point {
        let mut q = [0.0; 3];
        for k in 0..self.dim {
            let mut v = p[k] - self.side * (p[k] / self.side).floor();
            if v >= self.side {
                v = 0.0;
            }
            q[k] = v;
        }
        q
    }

    /// Representative of x − y with every coordinate in [−L/2, L/2).
    #[inline]
    pub fn displacement(&self, x: &Point, y: &Point) -> Point {
        let mut d = [0.0; 3];
        for k in 0..self.dim {
            let v = x[k] - y[k];
            d[k] = v - self.side * (v / self.side + 0.5).floor();
        }
        d
    }
}

#[derive(Debug, Clone)]
struct CellIndex {
    cutoff: f64,
    per_dim: [usize; 3],
    width: f64,
    cells: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    cell_of: Vec<usize>,
}

impl CellIndex {
    fn new(torus: &Torus, cutoff: f64) -> Self {
        let nc = if cutoff > 0.0 {
            ((torus.side / cutoff).floor() as usize).clamp(1, 64)
        } else {
            1
        };
        let mut per_dim = [1; 3];
        for k in 0..torus.dim {
            per_dim[k] = nc;
        }
        let total = per_dim.iter().product::<usize>();
        let mut neighbors = Vec::with_capacity(total);
        for c in 0..total {
            let idx = [c % per_dim[0], (c / per_dim[0]) % per_dim[1], c / (per_dim[0] * per_dim[1])];
            let mut list = Vec::new();
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let off = [dx, dy, dz];
                        let mut n = [0usize; 3];
                        for k in 0..3 {
                            let m = per_dim[k] as i64;
                            n[k] = (idx[k] as i64 + off[k]).rem_euclid(m) as usize;
                        }
                        list.push(n[0] + per_dim[0] * (n[1] + per_dim[1] * n[2]));
                    }
                }
            }
            list.sort_unstable();
            list.dedup();
            neighbors.push(list);
        }
        CellIndex {
            cutoff,
            per_dim,
            width: torus.side / nc as f64,
            cells: vec![Vec::new(); total],
            neighbors,
            cell_of: Vec::new(),
        }
    }

    #[inline]
    fn cell(&self, p: &Point) -> usize {
        let mut c = [0usize; 3];
        for k in 0..3 {
            c[k] = ((p[k] / self.width) as usize).min(self.per_dim[k] - 1);
        }
        c[0] + self.per_dim[0] * (c[1] + self.per_dim[1] * c[2])
    }

    fn insert(&mut self, i: usize, p: &Point) {
        let c = self.cell(p);
        self.cells[c].push(i);
        if i == self.cell_of.len() {
            self.cell_of.push(c);
        } else {
            self.cell_of[i] = c;
        }
    }

    fn detach(&mut self, i: usize) {
        let c = self.cell_of[i];
        let cell = &mut self.cells[c];
        let pos = cell.iter().position(|&j| j == i).expect("particle registered in its cell");
        cell.remove(pos);
    }

    fn relabel(&mut self, from: usize, to: usize) {
        let c = self.cell_of[from];
        for j in self.cells[c].iter_mut() {
            if *j == from {
                *j = to;
            }
        }
        self.cell_of[to] = c;
    }
}

#[derive(Debug, Clone)]
pub struct Configuration {
    pub torus: Torus,
    positions: Vec<Point>,
    index: CellIndex,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.torus == other.torus && self.positions == other.positions
    }
}

impl Configuration {
    /// Builds a configuration whose neighbor index resolves pairs up to `cutoff`.
    /// Positions are wrapped into the box.
    pub fn new(torus: Torus, positions: Vec<Point>, cutoff: f64) -> Self {
        let mut c = Configuration {
            torus,
            positions: Vec::with_capacity(positions.len()),
            index: CellIndex::new(&torus, cutoff),
        };
        for p in positions {
            c.push(p);
        }
        c
    }

    pub fn empty(torus: Torus, cutoff: f64) -> Self {
        Self::new(torus, Vec::new(), cutoff)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn cutoff(&self) -> f64 {
        self.index.cutoff
    }

    pub fn push(&mut self, p: Point) {
        let q = self.torus.wrap(p);
        let i = self.positions.len();
        self.positions.push(q);
        self.index.insert(i, &q);
    }

    /// Removes particle `i`; the last particle takes its label.
    pub fn swap_remove(&mut self, i: usize) -> Point {
        let last = self.positions.len() - 1;
        self.index.detach(i);
        if i != last {
            self.index.relabel(last, i);
        }
        self.index.cell_of.pop();
        self.positions.swap_remove(i)
    }

    pub fn set_position(&mut self, i: usize, p: Point) {
        let q = self.torus.wrap(p);
        let old = self.index.cell_of[i];
        let new = self.index.cell(&q);
        if old != new {
            self.index.detach(i);
            self.index.cells[new].push(i);
            self.index.cell_of[i] = new;
        }
        self.positions[i] = q;
    }

    /// Same positions with a neighbor index for a different cutoff.
    pub fn reindexed(&self, cutoff: f64) -> Configuration {
        Configuration::new(self.torus, self.positions.clone(), cutoff)
    }

    /// Visits every particle j ≠ `skip` within the neighbor cells of `p`,
    /// passing the minimum-image displacement p − x_j and its squared length.
    /// Falls back to all particles when `range` exceeds the index cutoff.
    #[inline]
    pub fn for_each_near(&self, p: &Point, skip: Option<usize>, range: f64, mut f: impl FnMut(usize, Point, f64)) {
        if range > self.index.cutoff {
            for (j, q) in self.positions.iter().enumerate() {
                if Some(j) != skip {
                    let d = self.torus.displacement(p, q);
                    f(j, d, norm2(&d));
                }
            }
            return;
        }
        let c = self.index.cell(p);
        for &nc in &self.index.neighbors[c] {
            for &j in &self.index.cells[nc] {
                if Some(j) != skip {
                    let d = self.torus.displacement(p, &self.positions[j]);
                    f(j, d, norm2(&d));
                }
            }
        }
    }

    /// Visits each unordered pair (i < j) closer than `range` once, with the
    /// displacement x_i − x_j.
    pub fn for_each_pair(&self, range: f64, mut f: impl FnMut(usize, usize, Point, f64)) {
        let r2max = range * range;
        for (i, p) in self.positions.iter().enumerate() {
            self.for_each_near(p, Some(i), range, |j, d, r2| {
                if j > i && r2 < r2max {
                    f(i, j, d, r2);
                }
            });
        }
    }

    /// Σ_y φ(p − y) over particles of this configuration except `skip`.
    pub fn energy_at(&self, p: &Point, skip: Option<usize>, phi: &PairPotential) -> f64 {
        let range = phi.range();
        if range == 0.0 {
            return 0.0;
        }
        let r2max = range * range;
        let mut s = NeumaierSum::new();
        self.for_each_near(p, skip, range, |_, _, r2| {
            if r2 < r2max {
                s.add(phi.energy_r2(r2));
            }
        });
        s.value()
    }

    /// E(γ) = Σ over unordered pairs of φ. +∞ if any pair sits below the floor.
    pub fn total_energy(&self, phi: &PairPotential) -> f64 {
        let range = phi.range();
        if range == 0.0 {
            return 0.0;
        }
        let mut s = NeumaierSum::new();
        self.for_each_pair(range, |_, _, _, r2| s.add(phi.energy_r2(r2)));
        s.value()
    }

    /// W(η|γ) = Σ_{x∈η, y∈γ} φ(x − y).
    pub fn interaction_energy(eta: &Configuration, gamma: &Configuration, phi: &PairPotential) -> f64 {
        let mut s = NeumaierSum::new();
        for p in eta.positions() {
            s.add(gamma.energy_at(p, None, phi));
        }
        s.value()
    }

    /// B(γ, x) = −β Σ_{y≠x} ∇φ(x − y) for every particle.
    pub fn drift(&self, phi: &PairPotential, beta: f64) -> Result<Vec<Point>, ConfigError> {
        let mut out = vec![[0.0; 3]; self.len()];
        self.drift_into(phi, beta, &mut out)?;
        Ok(out)
    }

    pub fn drift_into(&self, phi: &PairPotential, beta: f64, out: &mut Vec<Point>) -> Result<(), ConfigError> {
        out.clear();
        out.resize(self.len(), [0.0; 3]);
        let range = phi.range();
        if range == 0.0 || beta == 0.0 {
            return Ok(());
        }
        let rmin2 = phi.r_min * phi.r_min;
        let mut err = None;
        self.for_each_pair(range, |i, j, d, r2| {
            if r2 < rmin2 {
                if err.is_none() {
                    err = Some(ConfigError::ClosePair {
                        i,
                        j,
                        distance: r2.sqrt(),
                        r_min: phi.r_min,
                    });
                }
                return;
            }
            let g = -beta * phi.gradient_factor_r2(r2);
            for k in 0..3 {
                out[i][k] += g * d[k];
                out[j][k] -= g * d[k];
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Smallest minimum-image pair distance, if any pair lies within `range`.
    pub fn min_pair_distance(&self, range: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        self.for_each_pair(range, |_, _, _, r2| {
            best = Some(best.map_or(r2, |b: f64| b.min(r2)));
        });
        best.map(f64::sqrt)
    }

    /// Writes the plain-text snapshot: header `d L n seed step`, then one row
    /// of d coordinates per particle, shortest round-trip decimals.
    pub fn write_snapshot(&self, mut w: impl Write, seed: u64, step: u64) -> Result<(), ConfigError> {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {} {} {}", self.torus.dim, self.torus.side, self.len(), seed, step);
        for p in &self.positions {
            for k in 0..self.torus.dim {
                if k > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{}", p[k]);
            }
            s.push('\n');
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads a snapshot written by `write_snapshot`; returns (config, seed, step).
    pub fn read_snapshot(r: impl BufRead, cutoff: f64) -> Result<(Configuration, u64, u64), ConfigError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| ConfigError::Snapshot("empty input".into()))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 {
            return Err(ConfigError::Snapshot(format!("header has {} fields, expected 5", h.len())));
        }
        let bad = |what: &str| ConfigError::Snapshot(format!("bad {what} in header"));
        let dim: usize = h[0].parse().map_err(|_| bad("d"))?;
        let side: f64 = h[1].parse().map_err(|_| bad("L"))?;
        let n: usize = h[2].parse().map_err(|_| bad("n"))?;
        let seed: u64 = h[3].parse().map_err(|_| bad("seed"))?;
        let step: u64 = h[4].parse().map_err(|_| bad("step"))?;
        let torus = Torus::new(side, dim)?;
        let mut positions = Vec::with_capacity(n);
        for row in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| ConfigError::Snapshot(format!("missing row {row}")))??;
            let mut p = [0.0; 3];
            let mut count = 0;
            for (k, tok) in line.split_whitespace().enumerate() {
                if k >= dim {
                    return Err(ConfigError::Snapshot(format!("row {row} has too many columns")));
                }
                p[k] = tok
                    .parse()
                    .map_err(|_| ConfigError::Snapshot(format!("row {row}: cannot parse `{tok}`")))?;
                count += 1;
            }
            if count != dim {
                return Err(ConfigError::Snapshot(format!("row {row} has {count} columns")));
            }
            if p.iter().take(dim).any(|&v| !(0.0..side).contains(&v)) {
                return Err(ConfigError::Snapshot(format!("row {row} lies outside [0, L)")));
            }
            positions.push(p);
        }
        Ok((Configuration::new(torus, positions, cutoff), seed, step))
    }

    #[doc(hidden)]
    pub fn index_is_consistent(&self) -> bool {
        let idx = &self.index;
        if idx.cell_of.len() != self.len() {
            return false;
        }
        let listed: usize = idx.cells.iter().map(Vec::len).sum();
        listed == self.len()
            && self
                .positions
                .iter()
                .enumerate()
                .all(|(i, p)| idx.cell_of[i] == idx.cell(p) && idx.cells[idx.cell_of[i]].contains(&i))
    }
}

/// All-pairs energy without the neighbor index.
pub fn total_energy_naive(c: &Configuration, phi: &PairPotential) -> f64 {
    let p = c.positions();
    let mut s = NeumaierSum::new();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            s.add(phi.energy_r2(norm2(&c.torus.displacement(&p[i], &p[j]))));
        }
    }
    s.value()
}

/// All-pairs drift without the neighbor index.
pub fn drift_naive(c: &Configuration, phi: &PairPotential, beta: f64) -> Vec<Point> {
    let p = c.positions();
    let mut out = vec![[0.0; 3]; p.len()];
    for i in 0..p.len() {
        for j in 0..p.len() {
            if i != j {
                let d = c.torus.displacement(&p[i], &p[j]);
                let g = phi.gradient_factor_r2(norm2(&d));
                for k in 0..3 {
                    out[i][k] -= beta * g * d[k];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_config(rng: &mut ChaCha8Rng, n: usize, side: f64, dim: usize, cutoff: f64) -> Configuration {
        let t = Torus::new(side, dim).unwrap();
        let pts = (0..n)
            .map(|_| {
                let mut p = [0.0; 3];
                for k in 0..dim {
                    p[k] = rng.gen::<f64>() * side;
                }
                p
            })
            .collect();
        Configuration::new(t, pts, cutoff)
    }

    #[test]
    fn displacement_wraps() {
        let t = Torus::new(10.0, 2).unwrap();
        assert_eq!(t.displacement(&[9.5, 0.0, 0.0], &[0.5, 0.0, 0.0]), [-1.0, 0.0, 0.0]);
        assert_eq!(t.displacement(&[3.0, 4.0, 0.0], &[3.0, 4.0, 0.0]), [0.0; 3]);
        // half-box lands on the lower end
        assert_eq!(t.displacement(&[5.0, 0.0, 0.0], &[0.0, 0.0, 0.0])[0], -5.0);
        assert_eq!(t.displacement(&[0.0, 0.0, 0.0], &[5.0, 0.0, 0.0])[0], -5.0);
    }

    #[test]
    fn small_energies() {
        let phi = PairPotential::lennard_jones(1.0, 1.0, 2.5, 2).unwrap();
        let t = Torus::new(8.0, 2).unwrap();
        let c = Configuration::new(t, vec![[1.0, 1.0, 0.0]], 2.5);
        assert_eq!(c.total_energy(&phi), 0.0);
        let c = Configuration::new(t, vec![[1.0, 1.0, 0.0], [2.3, 1.0, 0.0]], 2.5);
        assert!((c.total_energy(&phi) - phi.radial(1.3).0).abs() < 1e-15);
    }

    #[test]
    fn three_particles_1d_match_naive() {
        let phi = PairPotential::smooth_compact(1.0, 1.0, 1).unwrap();
        let t = Torus::new(6.0, 1).unwrap();
        let c = Configuration::new(t, vec![[0.2, 0.0, 0.0], [0.9, 0.0, 0.0], [5.7, 0.0, 0.0]], 1.0);
        assert_eq!(c.total_energy(&phi), total_energy_naive(&c, &phi));
    }

    #[test]
    fn drift_five_particles_2d() {
        let phi = PairPotential::lennard_jones(1.0, 1.0, 2.5, 2).unwrap();
        let t = Torus::new(7.0, 2).unwrap();
        let pts = vec![
            [1.0, 1.0, 0.0],
            [2.1, 1.2, 0.0],
            [1.5, 2.3, 0.0],
            [6.5, 1.1, 0.0],
            [3.9, 5.9, 0.0],
        ];
        let c = Configuration::new(t, pts, 2.5);
        let a = c.drift(&phi, 0.7).unwrap();
        let b = drift_naive(&c, &phi, 0.7);
        for (x, y) in a.iter().zip(&b) {
            for k in 0..2 {
                assert!((x[k] - y[k]).abs() <= 1e-12 * y[k].abs().max(1e-12));
            }
        }
    }

    #[test]
    fn drift_pair_is_antisymmetric_and_close_pairs_error() {
        let phi = PairPotential::lennard_jones(1.0, 1.0, 2.5, 2).unwrap();
        let t = Torus::new(8.0, 2).unwrap();
        let c = Configuration::new(t, vec![[1.0, 1.0, 0.0], [2.2, 1.5, 0.0]], 2.5);
        let b = c.drift(&phi, 1.0).unwrap();
        assert_eq!(b[0][0], -b[1][0]);
        assert_eq!(b[0][1], -b[1][1]);
        assert!(c.drift(&phi, 0.0).unwrap().iter().all(|v| *v == [0.0; 3]));
        let c = Configuration::new(t, vec![[1.0, 1.0, 0.0], [1.2, 1.0, 0.0]], 2.5);
        assert!(matches!(c.drift(&phi, 1.0), Err(ConfigError::ClosePair { i: 0, j: 1, .. })));
    }

    #[test]
    fn incremental_updates_keep_index_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut c = random_config(&mut rng, 60, 12.0, 2, 2.5);
        for _ in 0..500 {
            match rng.gen_range(0..3) {
                0 => c.push([rng.gen::<f64>() * 12.0, rng.gen::<f64>() * 12.0, 0.0]),
                1 if !c.is_empty() => {
                    let i = rng.gen_range(0..c.len());
                    c.swap_remove(i);
                }
                _ if !c.is_empty() => {
                    let i = rng.gen_range(0..c.len());
                    let p = c.positions()[i];
                    c.set_position(i, [p[0] + rng.gen::<f64>() - 0.5, p[1] + 3.0, 0.0]);
                }
                _ => {}
            }
        }
        assert!(c.index_is_consistent());
        let phi = PairPotential::lennard_jones(1.0, 1.0, 2.5, 2).unwrap();
        let e = c.total_energy(&phi);
        let n = total_energy_naive(&c, &phi);
        assert!(e == n || ((e - n) / n).abs() < 1e-12);
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_config(&mut rng, 25, 9.3, 3, 2.5);
        let mut buf = Vec::new();
        c.write_snapshot(&mut buf, 77, 1234).unwrap();
        let (d, seed, step) = Configuration::read_snapshot(buf.as_slice(), 2.5).unwrap();
        assert_eq!((seed, step), (77, 1234));
        assert_eq!(d, c);
        assert!(Configuration::read_snapshot("2 5 1 0 0\n1.0\n".as_bytes(), 1.0).is_err());
    }
}
