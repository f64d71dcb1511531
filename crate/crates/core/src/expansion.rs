//! High-temperature coefficient functions of the fluctuation limit:
//! compressibility χ, bulk diffusion ρ⁽¹⁾/χ, D_φ, the remainder R_φ and their
//! curvature at β = 0, plus both sides of the coercivity identity on linear
//! functionals.
//!
//! Radial integrals use the isotropic reduction
//! ∫ x¹x¹ ∂₁∂₁φ ρ⁽²⁾ dx = |S^{d−1}| ∫ [3r⁴g₂/(d(d+2)) + r²g₁/d] ρ⁽²⁾ r^{d−1} dr
//! with ∇φ = g₁x and ∇²φ = g₂xxᵀ + g₁I.

use thiserror::Error;

use crate::configuration::{ConfigError, Configuration};
use crate::potentials::{sphere_area, PairPotential, PotentialError};
use crate::quadrature::{adaptive_with_breaks, GaussLegendre, QuadratureError};
use crate::scaling::TestFunction;
use crate::stats::{mean_with_error, Estimate, NeumaierSum};

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("potential must be isotropic")]
    NotIsotropic,
    #[error("invalid input: {0}")]
    InvalidParameter(String),
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("test function lives on a torus of side {f_side}, configuration on {side}")]
    TorusMismatch { f_side: f64, side: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rho2Source {
    Boltzmann,
    McInterpolated,
    OracleInterpolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientSource {
    LowBetaAnalytic,
    McBacked,
    OracleBacked,
}

#[derive(Debug, Clone, PartialEq)]
struct Panel {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
    values: Vec<f64>,
}

impl Panel {
    fn eval(&self, r: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((x, w), v) in self.nodes.iter().zip(&self.bary).zip(&self.values) {
            let d = r - x;
            if d == 0.0 {
                return *v;
            }
            let t = w / d;
            num += t * v;
            den += t;
        }
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Boltzmann { phi: PairPotential, beta: f64, scale: f64 },
    Tabulated { panels: Vec<Panel>, tail: f64 },
}

/// Radial pair correlation r ↦ ρ⁽²⁾(x, 0) with |x| = r.
#[derive(Debug, Clone, PartialEq)]
pub struct Rho2Approximant {
    pub source: Rho2Source,
    repr: Repr,
}

impl Rho2Approximant {
    /// scale·e^{−βφ}. Its error is of the order of the Mayer constant C(βφ, 1).
    pub fn boltzmann(phi: &PairPotential, beta: f64, scale: f64) -> Self {
        Rho2Approximant {
            source: Rho2Source::Boltzmann,
            repr: Repr::Boltzmann {
                phi: phi.clone(),
                beta,
                scale,
            },
        }
    }

    /// Tabulates `f` on Gauss–Legendre panels between consecutive `breaks`
    /// with `q` nodes each. Beyond the last break the value is `tail`; below
    /// the first the pair density is taken to vanish (hard core).
    pub fn tabulate<E>(
        breaks: &[f64],
        q: usize,
        tail: f64,
        source: Rho2Source,
        mut f: impl FnMut(f64) -> Result<f64, E>,
    ) -> Result<Self, E> {
        let gl = GaussLegendre::new(q);
        let mut panels = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (nodes, weights) = gl.on_interval(a, b);
            let bary = barycentric_weights(&nodes);
            let values = nodes.iter().map(|&r| f(r)).collect::<Result<Vec<_>, E>>()?;
            panels.push(Panel {
                a,
                b,
                nodes,
                weights,
                bary,
                values,
            });
        }
        Ok(Rho2Approximant {
            source,
            repr: Repr::Tabulated { panels, tail },
        })
    }

    pub fn eval(&self, r: f64) -> f64 {
        match &self.repr {
            Repr::Boltzmann { phi, beta, scale } => {
                if *beta == 0.0 {
                    return *scale;
                }
                let u = phi.energy_r2(r * r);
                if u.is_infinite() {
                    0.0
                } else {
                    scale * (-beta * u).exp()
                }
            }
            Repr::Tabulated { panels, tail } => {
                match panels.first() {
                    Some(p) if r < p.a => return 0.0,
                    None => return *tail,
                    _ => {}
                }
                panels
                    .iter()
                    .find(|p| r <= p.b)
                    .map_or(*tail, |p| p.eval(r))
            }
        }
    }

    /// Value as r → ∞.
    pub fn tail(&self) -> f64 {
        match &self.repr {
            Repr::Boltzmann { scale, .. } => *scale,
            Repr::Tabulated { tail, .. } => *tail,
        }
    }

    /// Rough size of the systematic error, when known.
    pub fn error_scale(&self) -> Option<f64> {
        match &self.repr {
            Repr::Boltzmann { phi, beta, .. } => phi.regime_check(*beta, 1.0).ok().map(|r| r.c),
            Repr::Tabulated { .. } => None,
        }
    }

    /// |S^{d−1}|·∫ h(r, ρ⁽²⁾(r)) r^{d−1} dr over the region where ρ⁽²⁾ is
    /// resolved. `phi` supplies the kinks for the Boltzmann form.
    pub fn radial_integral(
        &self,
        phi: &PairPotential,
        dim: usize,
        h: impl Fn(f64, f64) -> f64,
    ) -> Result<f64, ExpansionError> {
        let di = dim as i32;
        let v = match &self.repr {
            Repr::Boltzmann { .. } => {
                let mut b = phi.breaks();
                if phi.r_min > 0.0 {
                    b.retain(|&x| x >= phi.r_min);
                }
                adaptive_with_breaks(|r| h(r, self.eval(r)) * r.powi(di - 1), &b, 1e-11)?.value
            }
            Repr::Tabulated { panels, .. } => {
                let mut s = NeumaierSum::new();
                for p in panels {
                    for ((r, w), v) in p.nodes.iter().zip(&p.weights).zip(&p.values) {
                        s.add(w * h(*r, *v) * r.powi(di - 1));
                    }
                }
                s.value()
            }
        };
        Ok(sphere_area(dim) * v)
    }

    /// ∫(ρ⁽²⁾ − ρ₁²)dx, counting the excluded core below the resolved region.
    fn excess_integral(&self, phi: &PairPotential, dim: usize, rho1: f64) -> Result<f64, ExpansionError> {
        let sq = rho1 * rho1;
        let core = match &self.repr {
            Repr::Boltzmann { .. } => phi.r_min,
            Repr::Tabulated { panels, .. } => panels.first().map_or(0.0, |p| p.a),
        };
        let ball = sphere_area(dim) * core.powi(dim as i32) / dim as f64;
        Ok(self.radial_integral(phi, dim, |_, v| v - sq)? - sq * ball)
    }
}

fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let p: f64 = (0..x.len()).filter(|&k| k != j).map(|k| x[j] - x[k]).product();
            1.0 / p
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionCoefficients {
    pub rho1: f64,
    pub chi: f64,
    pub bulk_diffusion: f64,
    pub d_phi: f64,
    pub r_phi: f64,
    pub source: CoefficientSource,
}

impl ExpansionCoefficients {
    fn assemble(rho1: f64, chi: f64, d_phi: f64, source: CoefficientSource) -> Self {
        ExpansionCoefficients {
            rho1,
            chi,
            bulk_diffusion: rho1 / chi,
            d_phi,
            r_phi: d_phi - rho1 * rho1 / chi,
            source,
        }
    }

    /// Second-order Taylor polynomials in β at z = 1:
    /// ρ⁽¹⁾ = 1 − βI + β²(I₂/2 + 3I²/2), χ = 1 − 2βI + β²(I₂ + 9I²/2),
    /// D = 1 + β²(J − I²)/2 with I = ∫φ, I₂ = ∫φ², J = ∫(x¹∂₁φ)².
    pub fn low_beta(phi: &PairPotential, beta: f64) -> Result<Self, ExpansionError> {
        let m = phi.moments(beta)?;
        let (i1, i2, j) = (m.int_phi, m.int_phi_sq, m.int_x1d1_sq);
        let b2 = beta * beta;
        let rho1 = 1.0 - beta * i1 + b2 * (0.5 * i2 + 1.5 * i1 * i1);
        let chi = 1.0 - 2.0 * beta * i1 + b2 * (i2 + 4.5 * i1 * i1);
        let d_phi = 1.0 + 0.5 * b2 * (j - i1 * i1);
        Ok(Self::assemble(rho1, chi, d_phi, CoefficientSource::LowBetaAnalytic))
    }
}

/// Coefficients from a pair correlation and the density.
pub fn coefficients(
    phi: &PairPotential,
    beta: f64,
    rho2: &Rho2Approximant,
    rho1: f64,
) -> Result<ExpansionCoefficients, ExpansionError> {
    if !phi.is_isotropic() {
        return Err(ExpansionError::NotIsotropic);
    }
    if !(rho1 > 0.0) {
        return Err(ExpansionError::InvalidParameter(format!("rho1 {rho1}")));
    }
    let d = phi.dim;
    let df = d as f64;
    let chi = rho1 + rho2.excess_integral(phi, d, rho1)?;
    let d_phi = if phi.is_zero() || beta == 0.0 {
        rho1
    } else {
        let c4 = 3.0 / (df * (df + 2.0));
        let moment = rho2.radial_integral(phi, d, |r, v| {
            let (_, g1, g2) = phi.profiles(r * r);
            let r2 = r * r;
            (c4 * g2 * r2 * r2 + g1 * r2 / df) * v
        })?;
        rho1 + 0.5 * beta * moment
    };
    let source = match rho2.source {
        Rho2Source::Boltzmann => CoefficientSource::LowBetaAnalytic,
        Rho2Source::McInterpolated => CoefficientSource::McBacked,
        Rho2Source::OracleInterpolated => CoefficientSource::OracleBacked,
    };
    Ok(ExpansionCoefficients::assemble(rho1, chi, d_phi, source))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    pub d2_d: f64,
    pub d2_compress: f64,
    /// Twice the β² coefficient of R_φ, with R_φ = β²∫(x¹∂₁φ)² + o(β²).
    pub d2_r: f64,
}

pub fn curvature_at_zero(phi: &PairPotential) -> Result<Curvature, ExpansionError> {
    let m = phi.moments(0.0)?;
    let i2 = m.int_phi * m.int_phi;
    Ok(Curvature {
        d2_d: -i2 + m.int_x1d1_sq,
        d2_compress: -i2,
        d2_r: 2.0 * m.int_x1d1_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivitySides {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// lhs − rhs estimated from the paired per-sample differences.
    pub difference: Estimate,
}

/// Per-configuration terms (H F)² and Σ‖∇²f‖² + βΣ_pairs δᵀ∇²φ δ for
/// F = ⟨f, ·⟩, δ = ∇f(x) − ∇f(y).
pub fn coercivity_terms(
    f: &TestFunction,
    c: &Configuration,
    phi: &PairPotential,
    beta: f64,
) -> Result<(f64, f64), ExpansionError> {
    if (f.side - c.torus.side).abs() > 1e-12 * c.torus.side {
        return Err(ExpansionError::TorusMismatch {
            f_side: f.side,
            side: c.torus.side,
        });
    }
    let drift = c.drift(phi, beta)?;
    let pos = c.positions();
    let d = c.torus.dim;
    let mut hf = NeumaierSum::new();
    let mut hs = NeumaierSum::new();
    let mut grads = Vec::with_capacity(pos.len());
    for (x, b) in pos.iter().zip(&drift) {
        let (_, g, lap, hess) = f.jet(x);
        hf.add(-lap);
        for k in 0..d {
            hf.add(-b[k] * g[k]);
            for l in 0..d {
                hs.add(hess[k][l] * hess[k][l]);
            }
        }
        grads.push(g);
    }
    if beta != 0.0 && !phi.is_zero() {
        let mut pair = NeumaierSum::new();
        let mut err = None;
        c.for_each_pair(phi.range(), |i, j, r, _| match phi.derivatives(&r) {
            Ok((_, h)) => {
                let mut delta = [0.0; 3];
                for k in 0..d {
                    delta[k] = grads[i][k] - grads[j][k];
                }
                let mut q = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        q += delta[k] * h[k][l] * delta[l];
                    }
                }
                pair.add(q);
            }
            Err(e) => {
                err.get_or_insert(e);
            }
        });
        if let Some(e) = err {
            return Err(e.into());
        }
        hs.add(beta * pair.value());
    }
    let h = hf.value();
    Ok((h * h, hs.value()))
}

/// Both sides of ⟨(H F)²⟩ = ⟨Σ‖∇²f‖² + βΣ_pairs δᵀ∇²φ δ⟩ over an
/// equilibrium ensemble, with errors from the sample autocorrelation.
pub fn coercivity_sides(
    f: &TestFunction,
    ensemble: &[Configuration],
    phi: &PairPotential,
    beta: f64,
) -> Result<CoercivitySides, ExpansionError> {
    if ensemble.is_empty() {
        return Err(ExpansionError::EmptyEnsemble);
    }
    let mut lhs = Vec::with_capacity(ensemble.len());
    let mut rhs = Vec::with_capacity(ensemble.len());
    for c in ensemble {
        let (a, b) = coercivity_terms(f, c, phi, beta)?;
        lhs.push(a);
        rhs.push(b);
    }
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(CoercivitySides {
        lhs: mean_with_error(&lhs),
        rhs: mean_with_error(&rhs),
        difference: mean_with_error(&diff),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configuration::Torus;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn ideal_and_infinite_temperature_values() {
        let bump = PairPotential::smooth_compact(2.0, 1.0, 2).unwrap();
        for (phi, beta) in [(PairPotential::zero(2), 0.7), (bump.clone(), 0.0)] {
            let r = Rho2Approximant::boltzmann(&phi, beta, 1.0);
            let c = coefficients(&phi, beta, &r, 1.0).unwrap();
            assert_eq!((c.rho1, c.chi, c.bulk_diffusion, c.d_phi, c.r_phi), (1.0, 1.0, 1.0, 1.0, 0.0));
        }
        let c = ExpansionCoefficients::low_beta(&bump, 0.0).unwrap();
        assert_eq!((c.rho1, c.chi, c.d_phi, c.r_phi), (1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn isotropic_reduction_matches_cartesian_quadrature() {
        // ∫ x₁² ∂₁∂₁φ · e^{−βφ} on a 2-d tensor grid versus the radial form
        let phi = PairPotential::smooth_compact(1.5, 1.0, 2).unwrap();
        let beta = 0.4;
        let gl = GaussLegendre::new(64);
        let mut direct = 0.0;
        for half in [(-1.0, 0.0), (0.0, 1.0)] {
            let (xs, wx) = gl.on_interval(half.0, half.1);
            for yh in [(-1.0, 0.0), (0.0, 1.0)] {
                let (ys, wy) = gl.on_interval(yh.0, yh.1);
                for (x, a) in xs.iter().zip(&wx) {
                    for (y, b) in ys.iter().zip(&wy) {
                        let p = [*x, *y, 0.0];
                        let (_, h) = phi.derivatives(&p).unwrap();
                        let v = phi.evaluate(&p).unwrap();
                        direct += a * b * x * x * h[0][0] * (-beta * v).exp();
                    }
                }
            }
        }
        let r = Rho2Approximant::boltzmann(&phi, beta, 1.0);
        let c = coefficients(&phi, beta, &r, 1.0).unwrap();
        // the grid is only C³ at the support edge, so agreement is a few 1e-6
        assert!(close(c.d_phi, 1.0 + 0.5 * beta * direct, 1e-5), "{} {}", c.d_phi, 1.0 + 0.5 * beta * direct);
    }

    #[test]
    fn remainder_identity_and_bulk() {
        let phi = PairPotential::smooth_compact(1.0, 0.8, 3).unwrap();
        let r = Rho2Approximant::boltzmann(&phi, 0.3, 0.81);
        let c = coefficients(&phi, 0.3, &r, 0.9).unwrap();
        assert!((c.r_phi - (c.d_phi - c.rho1 * c.rho1 / c.chi)).abs() < 1e-14);
        assert!((c.bulk_diffusion - c.rho1 / c.chi).abs() < 1e-15);
    }

    #[test]
    fn curvature_signs() {
        let z = curvature_at_zero(&PairPotential::zero(2)).unwrap();
        assert_eq!((z.d2_d, z.d2_compress, z.d2_r), (0.0, 0.0, 0.0));
        for d in 1..=3 {
            let phi = PairPotential::smooth_compact(1.0, 1.0, d).unwrap();
            let c = curvature_at_zero(&phi).unwrap();
            assert!(c.d2_r > 0.0);
            assert!(c.d2_compress < 0.0);
        }
    }

    #[test]
    fn low_beta_first_order_cancels_in_d() {
        // D to first order: ρ⁽¹⁾ + (β/2)∫x²∂²φ = 1 − βI + βI
        let phi = PairPotential::smooth_compact(1.0, 1.0, 1).unwrap();
        let h = 1e-3;
        let a = ExpansionCoefficients::low_beta(&phi, h).unwrap().d_phi;
        let b = ExpansionCoefficients::low_beta(&phi, -h).unwrap().d_phi;
        assert!(((a - b) / (2.0 * h)).abs() < 1e-12);
        let r = Rho2Approximant::boltzmann(&phi, 1e-4, 1.0);
        let c = coefficients(&phi, 1e-4, &r, 1.0 - 1e-4 * phi.moments(0.0).unwrap().int_phi).unwrap();
        assert!((c.d_phi - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tabulated_interpolation() {
        let r = Rho2Approximant::tabulate(&[0.5, 1.0, 2.0], 16, 1.0, Rho2Source::OracleInterpolated, |x| {
            Ok::<_, ()>((-x).exp())
        })
        .unwrap();
        for x in [0.51, 0.777, 1.0, 1.3, 1.999] {
            assert!((r.eval(x) - (-x).exp()).abs() < 1e-12);
        }
        assert_eq!(r.eval(0.2), 0.0);
        assert_eq!(r.eval(5.0), 1.0);
        let phi = PairPotential::zero(1);
        let v = r.radial_integral(&phi, 1, |_, v| v).unwrap();
        assert!((v - 2.0 * ((-0.5f64).exp() - (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn coercivity_poisson_single_mode() {
        // Poisson at intensity z: both sides equal z·∫(Δf)² = z|k|⁴·A²V/2
        let (side, zz) = (4.0, 2.0);
        let t = Torus::new(side, 2).unwrap();
        let f = TestFunction::fourier_mode([1, 1, 0], false, 1.0, side, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pois = Poisson::new(zz * t.volume()).unwrap();
        let ens: Vec<Configuration> = (0..4000)
            .map(|_| {
                let n = pois.sample(&mut rng) as usize;
                let pts = (0..n).map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side, 0.0]).collect();
                Configuration::new(t, pts, 0.0)
            })
            .collect();
        let k2 = 2.0 * (2.0 * std::f64::consts::PI / side).powi(2);
        let exact = zz * k2 * k2 * t.volume() / 2.0;
        let s = coercivity_sides(&f, &ens, &PairPotential::zero(2), 1.0).unwrap();
        assert!(s.lhs.within_sigmas(exact, 3.0), "{:?} {exact}", s.lhs);
        assert!(s.rhs.within_sigmas(exact, 3.0), "{:?} {exact}", s.rhs);
    }
}
