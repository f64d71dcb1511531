//! Quadrature ground truth for small finite-volume systems.
//!
//! The Lebesgue–Poisson sum Σ_n zⁿ/n! ∫_{Λⁿ} F is discretised with a tensor
//! Gauss–Legendre rule on Λ. For symmetric integrands the ordered node tuples
//! collapse to multisets: a multiset with multiplicities m_j carries weight
//! zⁿ·Π w_j^{m_j}/Π m_j!, so the n! cancels and only nondecreasing index
//! sequences are enumerated. Points sharing a node are distinct particles
//! of the discretised measure and interact through φ(0).
//!
//! The particle number is truncated at n_max for the total configuration
//! (external points included), the same way for Z and every correlation
//! function, so all returned quantities belong to one truncated point process.
//!
//! Correlation functions are densities with respect to Lebesgue measure: at
//! β = 0 they equal z^{|η|}.

use thiserror::Error;

use crate::potentials::{norm2, PairPotential, Point};
use crate::quadrature::GaussLegendre;
use crate::stats::NeumaierSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle box is not tractable: {0}")]
    Intractable(String),
    #[error("potential dimension {phi} does not match box dimension {spec}")]
    DimensionMismatch { phi: usize, spec: usize },
    #[error("periodic box side {side} must exceed twice the potential range {range}")]
    BoxTooSmall { side: f64, range: f64 },
    #[error("point set of size {got} exceeds the particle truncation {n_max}")]
    TooManyPoints { got: usize, n_max: usize },
    #[error("subset enumeration over {0} points refused; declare a support bound")]
    EnumerationTooLarge(usize),
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error("negative inverse temperature {0} needs a bounded potential")]
    NegativeBeta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Free,
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteVolumeSpec {
    /// Λ = [0, side]^dim.
    pub side: f64,
    pub dim: usize,
    pub boundary: Boundary,
    pub n_max: usize,
    pub quad_points: usize,
}

impl FiniteVolumeSpec {
    pub fn new(side: f64, dim: usize, boundary: Boundary, n_max: usize, quad_points: usize) -> Result<Self, OracleError> {
        if !(side > 0.0) {
            return Err(OracleError::Intractable(format!("side {side}")));
        }
        if !(dim == 1 || dim == 2) {
            return Err(OracleError::Intractable(format!("dimension {dim}; only 1 and 2 supported")));
        }
        if n_max < 2 {
            return Err(OracleError::Intractable(format!("n_max {n_max} < 2")));
        }
        if dim * n_max > 8 {
            return Err(OracleError::Intractable(format!("d·n_max = {} exceeds 8", dim * n_max)));
        }
        if quad_points == 0 {
            return Err(OracleError::Intractable("zero quadrature points".into()));
        }
        Ok(FiniteVolumeSpec {
            side,
            dim,
            boundary,
            n_max,
            quad_points,
        })
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionFunction {
    pub value: f64,
    /// Contributions of each particle number n = 0..=n_max.
    pub by_count: Vec<f64>,
    /// Bound on the omitted n > n_max terms relative to `value`.
    pub remainder_bound: f64,
    pub flagged: bool,
}

impl PartitionFunction {
    pub fn mean_count(&self) -> f64 {
        self.by_count.iter().enumerate().map(|(n, w)| n as f64 * w).sum::<f64>() / self.value
    }

    pub fn count_variance(&self) -> f64 {
        let m = self.mean_count();
        self.by_count
            .iter()
            .enumerate()
            .map(|(n, w)| (n as f64 - m).powi(2) * w)
            .sum::<f64>()
            / self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDerivative {
    pub lhs: f64,
    pub rhs: f64,
}

impl BetaDerivative {
    pub fn relative_error(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / scale
        }
    }
}

/// A function on finite point sets with declared support.
pub struct FiniteConfigurationFunction<'a> {
    pub eval: Box<dyn Fn(&[Point]) -> f64 + 'a>,
    /// G(η) = 0 whenever |η| exceeds this.
    pub max_cardinality: Option<usize>,
    /// G(η) = 0 unless every point satisfies this predicate.
    pub region: Option<Box<dyn Fn(&Point) -> bool + 'a>>,
}

impl<'a> FiniteConfigurationFunction<'a> {
    pub fn new(eval: impl Fn(&[Point]) -> f64 + 'a) -> Self {
        FiniteConfigurationFunction {
            eval: Box::new(eval),
            max_cardinality: None,
            region: None,
        }
    }

    pub fn with_max_cardinality(mut self, k: usize) -> Self {
        self.max_cardinality = Some(k);
        self
    }

    pub fn with_region(mut self, region: impl Fn(&Point) -> bool + 'a) -> Self {
        self.region = Some(Box::new(region));
        self
    }
}

const FULL_ENUMERATION_LIMIT: usize = 12;

/// (KG)(γ) = Σ_{η ⊆ γ} G(η), enumerating only subsets allowed by the support.
pub fn k_transform(g: &FiniteConfigurationFunction, gamma: &[Point]) -> Result<f64, OracleError> {
    let pts: Vec<Point> = match &g.region {
        Some(r) => gamma.iter().copied().filter(|p| r(p)).collect(),
        None => gamma.to_vec(),
    };
    let kmax = g.max_cardinality.unwrap_or(pts.len()).min(pts.len());
    if g.max_cardinality.is_none() && pts.len() > FULL_ENUMERATION_LIMIT {
        return Err(OracleError::EnumerationTooLarge(pts.len()));
    }
    let mut sum = NeumaierSum::new();
    let mut subset = Vec::with_capacity(kmax);
    fn rec(
        pts: &[Point],
        start: usize,
        kmax: usize,
        subset: &mut Vec<Point>,
        g: &FiniteConfigurationFunction,
        sum: &mut NeumaierSum,
    ) {
        sum.add((g.eval)(subset));
        if subset.len() == kmax {
            return;
        }
        for i in start..pts.len() {
            subset.push(pts[i]);
            rec(pts, i + 1, kmax, subset, g, sum);
            subset.pop();
        }
    }
    rec(&pts, 0, kmax, &mut subset, g, &mut sum);
    Ok(sum.value())
}

/// Oracle for (spec, φ, z): quadrature nodes and the node–node energy table
/// are built once.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub spec: FiniteVolumeSpec,
    pub phi: PairPotential,
    pub z: f64,
    nodes: Vec<Point>,
    weights: Vec<f64>,
    energy: Vec<f64>,
}

// Per-β enumeration tables.
struct Tables {
    m: usize,
    /// z·w_k·e^{−β u_k}, u_k the interaction with the external points.
    single: Vec<f64>,
    /// e^{−βφ(node_j − node_k)}.
    pair: Vec<f64>,
}

impl Oracle {
    pub fn new(spec: FiniteVolumeSpec, phi: PairPotential, z: f64) -> Result<Self, OracleError> {
        if phi.dim != spec.dim {
            return Err(OracleError::DimensionMismatch {
                phi: phi.dim,
                spec: spec.dim,
            });
        }
        if spec.boundary == Boundary::Periodic && spec.side <= 2.0 * phi.range() {
            return Err(OracleError::BoxTooSmall {
                side: spec.side,
                range: phi.range(),
            });
        }
        let gl = GaussLegendre::new(spec.quad_points);
        let (x, w) = gl.on_interval(0.0, spec.side);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        if spec.dim == 1 {
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push([*xi, 0.0, 0.0]);
                weights.push(*wi);
            }
        } else {
            for (yi, wy) in x.iter().zip(&w) {
                for (xi, wx) in x.iter().zip(&w) {
                    nodes.push([*xi, *yi, 0.0]);
                    weights.push(wx * wy);
                }
            }
        }
        let m = nodes.len();
        let mut o = Oracle {
            spec,
            phi,
            z,
            nodes,
            weights,
            energy: Vec::new(),
        };
        let mut energy = vec![0.0; m * m];
        for j in 0..m {
            for k in 0..m {
                energy[j * m + k] = o.pair_energy(&o.nodes[j], &o.nodes[k]);
            }
        }
        o.energy = energy;
        Ok(o)
    }

    pub fn nodes(&self) -> (&[Point], &[f64]) {
        (&self.nodes, &self.weights)
    }

    fn displacement(&self, x: &Point, y: &Point) -> Point {
        let mut d = [0.0; 3];
        for k in 0..self.spec.dim {
            let v = x[k] - y[k];
            d[k] = match self.spec.boundary {
                Boundary::Free => v,
                Boundary::Periodic => v - self.spec.side * (v / self.spec.side + 0.5).floor(),
            };
        }
        d
    }

    /// φ(x − y) in this box. Coincident points of a singular kind give +∞.
    pub fn pair_energy(&self, x: &Point, y: &Point) -> f64 {
        self.phi.energy_r2(norm2(&self.displacement(x, y)))
    }

    /// Finite-volume energy E_Λ(η).
    pub fn energy(&self, eta: &[Point]) -> f64 {
        let mut s = NeumaierSum::new();
        for i in 0..eta.len() {
            for j in i + 1..eta.len() {
                s.add(self.pair_energy(&eta[i], &eta[j]));
            }
        }
        s.value()
    }

    fn check_beta(&self, beta: f64) -> Result<(), OracleError> {
        if beta < 0.0 && !self.phi.is_bounded() {
            Err(OracleError::NegativeBeta(beta))
        } else {
            Ok(())
        }
    }

    fn boltzmann(beta: f64, e: f64) -> f64 {
        if e == f64::INFINITY {
            if beta > 0.0 {
                0.0
            } else {
                1.0
            }
        } else {
            (-beta * e).exp()
        }
    }

    fn tables(&self, beta: f64, external: &[Point]) -> Tables {
        let m = self.nodes.len();
        let single = (0..m)
            .map(|k| {
                let u: f64 = external.iter().map(|x| self.pair_energy(&self.nodes[k], x)).sum();
                self.z * self.weights[k] * Self::boltzmann(beta, u)
            })
            .collect();
        let pair = self.energy.iter().map(|&e| Self::boltzmann(beta, e)).collect();
        Tables { m, single, pair }
    }

    // Visits every multiset of at most `max_free` nodes with its weight
    // zⁿ Π w / Π m! · e^{−β(W(η|ξ) + E(ξ))}. Zero-weight branches are pruned.
    fn enumerate(&self, t: &Tables, max_free: usize, visit: &mut impl FnMut(&[usize], f64)) {
        let mut stack = Vec::with_capacity(max_free);
        fn rec(
            t: &Tables,
            start: usize,
            max_free: usize,
            weight: f64,
            mult: usize,
            stack: &mut Vec<usize>,
            visit: &mut impl FnMut(&[usize], f64),
        ) {
            visit(stack, weight);
            if stack.len() == max_free {
                return;
            }
            for k in start..t.m {
                let same = stack.last() == Some(&k);
                let mk = if same { mult + 1 } else { 1 };
                let mut f = weight * t.single[k] / mk as f64;
                for &i in stack.iter() {
                    f *= t.pair[i * t.m + k];
                }
                if f == 0.0 {
                    continue;
                }
                stack.push(k);
                rec(t, k, max_free, f, mk, stack, visit);
                stack.pop();
            }
        }
        rec(t, 0, max_free, 1.0, 0, &mut stack, visit);
    }

    fn sums_by_count(&self, beta: f64, external: &[Point], max_free: usize) -> Vec<f64> {
        let t = self.tables(beta, external);
        let mut acc = vec![NeumaierSum::new(); max_free + 1];
        self.enumerate(&t, max_free, &mut |s, w| acc[s.len()].add(w));
        acc.iter().map(NeumaierSum::value).collect()
    }

    /// Truncated Z with per-count contributions and the tail bound
    /// Σ_{n>n_max} (z|Λ|e^{βB})ⁿ/n!, relative to Z.
    pub fn partition_function(&self, beta: f64) -> Result<PartitionFunction, OracleError> {
        self.check_beta(beta)?;
        let by_count = self.sums_by_count(beta, &[], self.spec.n_max);
        let value: f64 = by_count.iter().sum();
        let n = self.spec.n_max;
        let x = self.z * self.spec.volume() * (beta.max(0.0) * self.phi.stability_constant).exp();
        let mut term = 1.0;
        for k in 1..=n + 1 {
            term *= x / k as f64;
        }
        let ratio = x / (n + 2) as f64;
        let bound = if ratio < 1.0 { term / (1.0 - ratio) } else { f64::INFINITY };
        let remainder_bound = bound / value;
        Ok(PartitionFunction {
            value,
            by_count,
            remainder_bound,
            flagged: remainder_bound > 1e-6,
        })
    }

    fn correlation_with_z(&self, beta: f64, eta: &[Point], zval: f64) -> Result<f64, OracleError> {
        let k = eta.len();
        if k > self.spec.n_max {
            return Err(OracleError::TooManyPoints {
                got: k,
                n_max: self.spec.n_max,
            });
        }
        let e = self.energy(eta);
        let outer = zval.powi(k as i32) * Self::boltzmann(beta, e);
        if outer == 0.0 {
            return Ok(0.0);
        }
        let num: f64 = self.sums_by_count(beta, eta, self.spec.n_max - k).iter().sum();
        Ok(outer * num)
    }

    /// ρ_Λ(η) = z^{|η|} Z⁻¹ Σ_n zⁿ/n! ∫ e^{−βE(η∪ξ)} dξ with |η| + n ≤ n_max.
    pub fn correlation(&self, beta: f64, eta: &[Point]) -> Result<f64, OracleError> {
        self.check_beta(beta)?;
        let z = self.partition_function(beta)?.value;
        Ok(self.correlation_with_z(beta, eta, self.z)? / z)
    }

    /// ⟨G⟩ under the truncated Gibbs measure.
    pub fn expectation(&self, beta: f64, g: impl Fn(&[Point]) -> f64) -> Result<f64, OracleError> {
        self.check_beta(beta)?;
        let t = self.tables(beta, &[]);
        let mut num = NeumaierSum::new();
        let mut den = NeumaierSum::new();
        let mut pts = Vec::with_capacity(self.spec.n_max);
        self.enumerate(&t, self.spec.n_max, &mut |s, w| {
            pts.clear();
            pts.extend(s.iter().map(|&i| self.nodes[i]));
            num.add(w * g(&pts));
            den.add(w);
        });
        Ok(num.value() / den.value())
    }

    /// Central difference in β with one Richardson step (error O(h⁴)).
    /// For unbounded potentials at β < 2h a one-sided second-order formula is
    /// used instead.
    pub fn correlation_beta_derivative(&self, beta: f64, eta: &[Point], h: f64) -> Result<f64, OracleError> {
        if !(h > 0.0) {
            return Err(OracleError::BadStep(h));
        }
        let f = |b: f64| self.correlation(b, eta);
        if self.phi.is_bounded() || beta - h >= 0.0 {
            let d = |s: f64| -> Result<f64, OracleError> { Ok((f(beta + s)? - f(beta - s)?) / (2.0 * s)) };
            let dh = d(h)?;
            let dh2 = d(h / 2.0)?;
            Ok((4.0 * dh2 - dh) / 3.0)
        } else {
            let (f0, f1, f2) = (f(beta)?, f(beta + h)?, f(beta + 2.0 * h)?);
            Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
        }
    }

    /// lhs: finite-difference ∂_β ρ(η). rhs:
    /// −E(η)ρ(η) − ∫W(η|x)ρ(η∪x)dx − ½∫∫φ(x−y)[ρ(η∪{x,y}) − ρ(η)ρ⁽²⁾(x,y)]dxdy
    /// with the integrals on the oracle's nodes (Lebesgue-density convention,
    /// the z factors live inside ρ).
    pub fn beta_derivative_check(&self, beta: f64, eta: &[Point], h: f64) -> Result<BetaDerivative, OracleError> {
        self.check_beta(beta)?;
        let k = eta.len();
        if k + 2 > self.spec.n_max {
            return Err(OracleError::TooManyPoints {
                got: k + 2,
                n_max: self.spec.n_max,
            });
        }
        let lhs = self.correlation_beta_derivative(beta, eta, h)?;
        let z = self.partition_function(beta)?.value;
        let rho_eta = self.correlation_with_z(beta, eta, self.z)? / z;
        let m = self.nodes.len();
        let mut rhs = NeumaierSum::new();
        let e_eta = self.energy(eta);
        if rho_eta != 0.0 {
            rhs.add(-e_eta * rho_eta);
        }
        let mut ext = eta.to_vec();
        for j in 0..m {
            let w: f64 = eta.iter().map(|x| self.pair_energy(x, &self.nodes[j])).sum();
            if w == 0.0 {
                continue;
            }
            ext.push(self.nodes[j]);
            let r = self.correlation_with_z(beta, &ext, self.z)? / z;
            ext.pop();
            if r != 0.0 {
                rhs.add(-self.weights[j] * w * r);
            }
        }
        for j in 0..m {
            for l in j..m {
                let phi = self.energy[j * m + l];
                if phi == 0.0 {
                    continue;
                }
                let pair = [self.nodes[j], self.nodes[l]];
                ext.push(pair[0]);
                ext.push(pair[1]);
                let r_eta_xy = self.correlation_with_z(beta, &ext, self.z)? / z;
                ext.truncate(k);
                let r_xy = self.correlation_with_z(beta, &pair, self.z)? / z;
                let bracket = r_eta_xy - rho_eta * r_xy;
                if bracket == 0.0 {
                    continue;
                }
                let mult = if j == l { 1.0 } else { 2.0 };
                rhs.add(-0.5 * mult * self.weights[j] * self.weights[l] * phi * bracket);
            }
        }
        Ok(BetaDerivative { lhs, rhs: rhs.value() })
    }
}

/// Convenience wrapper: truncated partition function for (spec, φ, β, z).
pub fn partition_function(spec: &FiniteVolumeSpec, phi: &PairPotential, beta: f64, z: f64) -> Result<PartitionFunction, OracleError> {
    Oracle::new(spec.clone(), phi.clone(), z)?.partition_function(beta)
}

/// Convenience wrapper: ρ_Λ(η).
pub fn correlation_exact(spec: &FiniteVolumeSpec, phi: &PairPotential, beta: f64, z: f64, eta: &[Point]) -> Result<f64, OracleError> {
    Oracle::new(spec.clone(), phi.clone(), z)?.correlation(beta, eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump1() -> PairPotential {
        PairPotential::smooth_compact(1.0, 1.0, 1).unwrap()
    }

    #[test]
    fn tractability_guard() {
        assert!(FiniteVolumeSpec::new(4.0, 2, Boundary::Free, 5, 6).is_err());
        assert!(FiniteVolumeSpec::new(4.0, 1, Boundary::Free, 1, 6).is_err());
        assert!(FiniteVolumeSpec::new(4.0, 1, Boundary::Free, 8, 6).is_ok());
    }

    #[test]
    fn zero_potential_gives_poisson_normalisation() {
        let spec = FiniteVolumeSpec::new(2.0, 1, Boundary::Free, 8, 6).unwrap();
        let o = Oracle::new(spec, PairPotential::zero(1), 0.5).unwrap();
        let z = o.partition_function(1.0).unwrap();
        let mut exact = 0.0;
        let mut term = 1.0;
        for n in 0..=8 {
            if n > 0 {
                term *= 1.0 / n as f64;
            }
            exact += term;
        }
        assert!((z.value - exact).abs() < 1e-12, "{} vs {}", z.value, exact);
        let missing = (1f64.exp() - z.value) / z.value;
        assert!(z.remainder_bound >= missing && z.remainder_bound < 1.2 * missing);
    }

    #[test]
    fn beta_zero_correlations_are_powers_of_z() {
        let spec = FiniteVolumeSpec::new(4.0, 1, Boundary::Free, 4, 10).unwrap();
        let o = Oracle::new(spec, bump1(), 0.7).unwrap();
        assert!((o.correlation(0.0, &[]).unwrap() - 1.0).abs() < 1e-14);
        let r = o.correlation(0.0, &[[1.0, 0.0, 0.0], [1.3, 0.0, 0.0]]).unwrap();
        // truncation removes mass equally from numerator and Z only in the
        // untruncated limit; compare with the truncated Poisson value
        let x: f64 = 0.7 * 4.0;
        let zt: f64 = (0..=4).map(|n| x.powi(n) / (1..=n).product::<i32>().max(1) as f64).sum();
        let num: f64 = (0..=2).map(|n| x.powi(n) / (1..=n).product::<i32>().max(1) as f64).sum();
        assert!((r - 0.49 * num / zt).abs() < 1e-12);
    }

    #[test]
    fn empty_eta_is_one() {
        let spec = FiniteVolumeSpec::new(4.0, 1, Boundary::Periodic, 4, 12).unwrap();
        let o = Oracle::new(spec, bump1(), 1.0).unwrap();
        assert!((o.correlation(0.3, &[]).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn k_transform_basics() {
        let gamma = [[0.1, 0.0, 0.0], [0.6, 0.0, 0.0], [1.4, 0.0, 0.0]];
        let empty = FiniteConfigurationFunction::new(|e| if e.is_empty() { 1.0 } else { 0.0 }).with_max_cardinality(0);
        assert_eq!(k_transform(&empty, &gamma).unwrap(), 1.0);
        let singles = FiniteConfigurationFunction::new(|e| if e.len() == 1 { 1.0 } else { 0.0 })
            .with_max_cardinality(1)
            .with_region(|p| p[0] < 1.0);
        assert_eq!(k_transform(&singles, &gamma).unwrap(), 2.0);
        let many = vec![[0.0; 3]; 13];
        let unbounded = FiniteConfigurationFunction::new(|_| 1.0);
        assert!(matches!(k_transform(&unbounded, &many), Err(OracleError::EnumerationTooLarge(13))));
        // full enumeration counts subsets
        assert_eq!(k_transform(&unbounded, &gamma).unwrap(), 8.0);
    }

    #[test]
    fn refinement_is_stable() {
        let phi = bump1();
        let a = Oracle::new(FiniteVolumeSpec::new(4.0, 1, Boundary::Free, 4, 48).unwrap(), phi.clone(), 1.0).unwrap();
        let b = Oracle::new(FiniteVolumeSpec::new(4.0, 1, Boundary::Free, 4, 96).unwrap(), phi, 1.0).unwrap();
        let za = a.partition_function(0.3).unwrap().value;
        let zb = b.partition_function(0.3).unwrap().value;
        assert!(((za - zb) / zb).abs() < 1e-6, "{za} {zb}");
    }
}
