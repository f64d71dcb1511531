//! Position scaling, fluctuation-field pairings, test functions on the scaled
//! torus, the Hermite basis and truncated negative Sobolev norms.
//!
//! A microscopic configuration lives on a torus of side L = L₀/ε. Scaling
//! positions by ε maps it onto the fixed torus of side L₀ where the test
//! functions are defined, and the field pairing is
//! ⟨f, X_ε⟩ = ε^{d/2}(Σ_x f(εx) − ρ⁽¹⁾ε^{−d}∫f).

use std::f64::consts::PI;

use thiserror::Error;

use crate::configuration::{Configuration, Torus};
use crate::potentials::{sphere_area, Matrix, Point};
use crate::quadrature::{adaptive, GaussHermite, QuadratureError};
use crate::stats::NeumaierSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("test function support radius {radius} exceeds half the scaled torus side {half}")]
    SupportTooLarge { radius: f64, half: f64 },
    #[error("invalid test function: {0}")]
    InvalidParameter(String),
    #[error("configuration torus side {side} does not match L0/ε = {expected}")]
    TorusMismatch { side: f64, expected: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunctionKind {
    /// A·cos(q·x) or A·sin(q·x), q = 2πk/L₀.
    FourierMode { k: [i64; 3], sine: bool, amplitude: f64 },
    /// A·exp(1 − 1/(1 − |x−c|²/R²)) inside the ball of radius R.
    CompactBump { center: Point, radius: f64, amplitude: f64 },
    /// Tensor Hermite function e_n(x − c).
    HermiteProxy { index: [usize; 3], center: Point },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub kind: TestFunctionKind,
    pub dim: usize,
    /// Side L₀ of the scaled torus.
    pub side: f64,
    pub norm_sq: f64,
    pub grad_norm_sq: f64,
    pub lap_norm_sq: f64,
    pub integral: f64,
}

fn min_image(side: f64, dim: usize, x: &Point, c: &Point) -> Point {
    let mut d = [0.0; 3];
    for k in 0..dim {
        let v = x[k] - c[k];
        d[k] = v - side * (v / side + 0.5).floor();
    }
    d
}

impl TestFunction {
    pub fn fourier_mode(k: [i64; 3], sine: bool, amplitude: f64, side: f64, dim: usize) -> Result<Self, ScalingError> {
        if k.iter().skip(dim).any(|&v| v != 0) {
            return Err(ScalingError::InvalidParameter(format!("wave vector {k:?} has components beyond d = {dim}")));
        }
        let kind = TestFunctionKind::FourierMode { k, sine, amplitude };
        let vol = side.powi(dim as i32);
        let zero = k.iter().all(|&v| v == 0);
        let q2: f64 = k.iter().map(|&v| (2.0 * PI * v as f64 / side).powi(2)).sum();
        let (norm_sq, integral) = match (zero, sine) {
            (true, true) => (0.0, 0.0),
            (true, false) => (amplitude * amplitude * vol, amplitude * vol),
            (false, _) => (amplitude * amplitude * vol / 2.0, 0.0),
        };
        Ok(TestFunction {
            kind,
            dim,
            side,
            norm_sq,
            grad_norm_sq: q2 * norm_sq,
            lap_norm_sq: q2 * q2 * norm_sq,
            integral,
        })
    }

    pub fn compact_bump(center: Point, radius: f64, amplitude: f64, side: f64, dim: usize) -> Result<Self, ScalingError> {
        if !(radius > 0.0) {
            return Err(ScalingError::InvalidParameter(format!("radius {radius}")));
        }
        if radius > side / 2.0 {
            return Err(ScalingError::SupportTooLarge { radius, half: side / 2.0 });
        }
        let mut f = TestFunction {
            kind: TestFunctionKind::CompactBump { center, radius, amplitude },
            dim,
            side,
            norm_sq: 0.0,
            grad_norm_sq: 0.0,
            lap_norm_sq: 0.0,
            integral: 0.0,
        };
        let area = sphere_area(dim);
        let di = dim as i32;
        let tol = 1e-13;
        let radial = |g: &dyn Fn(f64) -> f64| adaptive(|r| g(r) * r.powi(di - 1), 0.0, radius, tol);
        f.norm_sq = area * radial(&|r| f.bump_profile(r).0.powi(2))?.value;
        f.grad_norm_sq = area * radial(&|r| (f.bump_profile(r).1 * r).powi(2))?.value;
        f.lap_norm_sq = area
            * radial(&|r| {
                let (_, g1, g2) = f.bump_profile(r);
                (dim as f64 * g1 + g2 * r * r).powi(2)
            })?
            .value;
        f.integral = area * radial(&|r| f.bump_profile(r).0)?.value;
        Ok(f)
    }

    pub fn hermite_proxy(index: [usize; 3], center: Point, side: f64, dim: usize) -> Result<Self, ScalingError> {
        if index.iter().skip(dim).any(|&v| v != 0) {
            return Err(ScalingError::InvalidParameter(format!("Hermite index {index:?} beyond d = {dim}")));
        }
        let gh = GaussHermite::new(index.iter().max().unwrap() + 4);
        // One-dimensional moments of e_n² with weight e^{−x²} factored out.
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        let mut integral = 1.0;
        let mut grad = 0.0;
        for k in 0..dim {
            let n = index[k];
            let c = n as f64 * 2.0 + 1.0;
            let mut ak = 0.0;
            for (x, w) in gh.nodes.iter().zip(&gh.weights) {
                let e = hermite_function(n, *x) * (x * x / 2.0).exp();
                ak += w * ((x * x - c) * e).powi(2);
            }
            a[k] = ak;
            b[k] = -(n as f64 + 0.5);
            grad += n as f64 + 0.5;
            integral *= hermite_integral(n);
        }
        let mut lap = 0.0;
        for k in 0..dim {
            lap += a[k];
            for l in 0..dim {
                if l != k {
                    lap += b[k] * b[l];
                }
            }
        }
        Ok(TestFunction {
            kind: TestFunctionKind::HermiteProxy { index, center },
            dim,
            side,
            norm_sq: 1.0,
            grad_norm_sq: grad,
            lap_norm_sq: lap,
            integral,
        })
    }

    pub fn is_mode(&self) -> bool {
        matches!(self.kind, TestFunctionKind::FourierMode { .. })
    }

    /// Wave vector q = 2πk/L₀ of a Fourier mode.
    pub fn wavevector(&self) -> Option<Point> {
        match self.kind {
            TestFunctionKind::FourierMode { k, .. } => {
                let mut q = [0.0; 3];
                for i in 0..self.dim {
                    q[i] = 2.0 * PI * k[i] as f64 / self.side;
                }
                Some(q)
            }
            _ => None,
        }
    }

    // (f, g1, g2) of the bump as a function of r, with ∇f = g1·y and
    // ∇²f = g2·y yᵀ + g1·I.
    fn bump_profile(&self, r: f64) -> (f64, f64, f64) {
        let TestFunctionKind::CompactBump { radius, amplitude, .. } = self.kind else {
            unreachable!()
        };
        let r2 = radius * radius;
        let u = 1.0 - r * r / r2;
        if u <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let f = amplitude * (1.0 - 1.0 / u).exp();
        let g1 = -2.0 * f / (r2 * u * u);
        let g2 = -2.0 / r2 * (g1 / (u * u) + 4.0 * f / (r2 * u * u * u));
        (f, g1, g2)
    }

    pub fn value(&self, x: &Point) -> f64 {
        match self.kind {
            TestFunctionKind::FourierMode { sine, amplitude, .. } => {
                let q = self.wavevector().unwrap();
                let ph = q[0] * x[0] + q[1] * x[1] + q[2] * x[2];
                amplitude * if sine { ph.sin() } else { ph.cos() }
            }
            TestFunctionKind::CompactBump { center, radius, .. } => {
                let y = min_image(self.side, self.dim, x, &center);
                let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                if r2 >= radius * radius {
                    0.0
                } else {
                    self.bump_profile(r2.sqrt()).0
                }
            }
            TestFunctionKind::HermiteProxy { index, center } => {
                let y = min_image(self.side, self.dim, x, &center);
                (0..self.dim).map(|k| hermite_function(index[k], y[k])).product()
            }
        }
    }

    /// (f, ∇f, Δf, ∇²f) at x.
    pub fn jet(&self, x: &Point) -> (f64, Point, f64, Matrix) {
        let d = self.dim;
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        match self.kind {
            TestFunctionKind::FourierMode { sine, amplitude, .. } => {
                let q = self.wavevector().unwrap();
                let ph = q[0] * x[0] + q[1] * x[1] + q[2] * x[2];
                let (s, c) = ph.sin_cos();
                let (f, df) = if sine { (amplitude * s, amplitude * c) } else { (amplitude * c, -amplitude * s) };
                for i in 0..d {
                    grad[i] = df * q[i];
                    for j in 0..d {
                        hess[i][j] = -f * q[i] * q[j];
                    }
                }
                let q2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
                (f, grad, -q2 * f, hess)
            }
            TestFunctionKind::CompactBump { center, radius, .. } => {
                let y = min_image(self.side, d, x, &center);
                let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                if r2 >= radius * radius {
                    return (0.0, grad, 0.0, hess);
                }
                let (f, g1, g2) = self.bump_profile(r2.sqrt());
                for i in 0..d {
                    grad[i] = g1 * y[i];
                    for j in 0..d {
                        hess[i][j] = g2 * y[i] * y[j] + if i == j { g1 } else { 0.0 };
                    }
                }
                (f, grad, d as f64 * g1 + g2 * r2, hess)
            }
            TestFunctionKind::HermiteProxy { index, center } => {
                let y = min_image(self.side, d, x, &center);
                let mut e = [1.0; 3];
                let mut de = [0.0; 3];
                let mut d2e = [0.0; 3];
                for k in 0..d {
                    let n = index[k];
                    e[k] = hermite_function(n, y[k]);
                    let nf = n as f64;
                    let lower = if n > 0 { hermite_function(n - 1, y[k]) } else { 0.0 };
                    de[k] = (nf / 2.0).sqrt() * lower - ((nf + 1.0) / 2.0).sqrt() * hermite_function(n + 1, y[k]);
                    d2e[k] = (y[k] * y[k] - 2.0 * nf - 1.0) * e[k];
                }
                let prod_except = |skip: &[usize]| -> f64 { (0..d).filter(|k| !skip.contains(k)).map(|k| e[k]).product() };
                let f: f64 = (0..d).map(|k| e[k]).product();
                let mut lap = 0.0;
                for i in 0..d {
                    grad[i] = de[i] * prod_except(&[i]);
                    for j in 0..d {
                        hess[i][j] = if i == j {
                            d2e[i] * prod_except(&[i])
                        } else {
                            de[i] * de[j] * prod_except(&[i, j])
                        };
                    }
                    lap += hess[i][i];
                }
                (f, grad, lap, hess)
            }
        }
    }

    pub fn gradient(&self, x: &Point) -> Point {
        self.jet(x).1
    }

    pub fn laplacian(&self, x: &Point) -> f64 {
        self.jet(x).2
    }

    pub fn hessian(&self, x: &Point) -> Matrix {
        self.jet(x).3
    }
}

/// Normalized Hermite function ψ_n(x) = (2ⁿn!√π)^{−1/2} H_n(x) e^{−x²/2}.
/// The recurrence runs on the polynomial part with periodic rescaling and the
/// Gaussian factor is applied in the log domain, so large |x| underflows to 0
/// cleanly instead of producing inf·0.
pub fn hermite_function(n: usize, x: f64) -> f64 {
    let mut log_scale = 0.0f64;
    let mut p_prev = 0.0f64;
    let mut p = PI.powf(-0.25);
    for j in 0..n {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * x * p - (jf / (jf + 1.0)).sqrt() * p_prev;
        p_prev = p;
        p = next;
        if p.abs() > 1e150 {
            p *= 1e-150;
            p_prev *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    if p == 0.0 {
        return 0.0;
    }
    p.signum() * (p.abs().ln() + log_scale - x * x / 2.0).exp()
}

// ∫ψ_n = √(2π)·ψ̂_n(0) and ψ̂_n = (−i)ⁿψ_n, so odd n integrate to zero.
fn hermite_integral(n: usize) -> f64 {
    if n % 2 == 1 {
        0.0
    } else {
        let sign = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
        (2.0 * PI).sqrt() * hermite_function(n, 0.0) * sign
    }
}

/// Tensor Hermite functions with eigenvalues a = 2|n| + d of −Δ + |x|², for
/// all multi-indices with |n| ≤ max_order.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteBasis {
    pub dim: usize,
    pub max_order: usize,
    pub indices: Vec<[usize; 3]>,
    pub eigenvalues: Vec<f64>,
}

impl HermiteBasis {
    pub fn new(dim: usize, max_order: usize) -> Self {
        let mut indices = Vec::new();
        for total in 0..=max_order {
            match dim {
                1 => indices.push([total, 0, 0]),
                2 => {
                    for a in (0..=total).rev() {
                        indices.push([a, total - a, 0]);
                    }
                }
                _ => {
                    for a in (0..=total).rev() {
                        for b in (0..=total - a).rev() {
                            indices.push([a, b, total - a - b]);
                        }
                    }
                }
            }
        }
        let eigenvalues = indices.iter().map(|n| (2 * (n[0] + n[1] + n[2]) + dim) as f64).collect();
        HermiteBasis {
            dim,
            max_order,
            indices,
            eigenvalues,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// e_i(y) for y measured from the basis center.
    pub fn eval(&self, i: usize, y: &Point) -> f64 {
        let n = self.indices[i];
        (0..self.dim).map(|k| hermite_function(n[k], y[k])).product()
    }
}

/// Scales every position by ε; the result lives on the torus of side ε·L.
pub fn s_in(gamma: &Configuration, eps: f64) -> Configuration {
    let t = Torus {
        side: gamma.torus.side * eps,
        dim: gamma.torus.dim,
    };
    let pos = gamma
        .positions()
        .iter()
        .map(|p| [p[0] * eps, p[1] * eps, p[2] * eps])
        .collect();
    Configuration::new(t, pos, gamma.cutoff() * eps)
}

/// A microscopic configuration viewed through the scaling maps.
#[derive(Debug, Clone, Copy)]
pub struct ScaledField<'a> {
    pub config: &'a Configuration,
    pub eps: f64,
    pub rho1: f64,
}

impl<'a> ScaledField<'a> {
    pub fn new(config: &'a Configuration, eps: f64, rho1: f64) -> Self {
        ScaledField { config, eps, rho1 }
    }

    pub fn scaled_side(&self) -> f64 {
        self.config.torus.side * self.eps
    }
}

/// ε^{d/2}(Σ_x f(εx) − ρ⁽¹⁾ε^{−d}∫f) for a test function on the scaled torus.
pub fn fluctuation_field(sf: &ScaledField, f: &TestFunction) -> Result<f64, ScalingError> {
    let side = sf.scaled_side();
    if (side - f.side).abs() > 1e-9 * f.side {
        return Err(ScalingError::TorusMismatch {
            side: sf.config.torus.side,
            expected: f.side / sf.eps,
        });
    }
    if let TestFunctionKind::CompactBump { radius, .. } = f.kind {
        if radius > side / 2.0 {
            return Err(ScalingError::SupportTooLarge { radius, half: side / 2.0 });
        }
    }
    let d = f.dim as i32;
    let e = sf.eps;
    let mut s = NeumaierSum::new();
    for p in sf.config.positions() {
        s.add(f.value(&[p[0] * e, p[1] * e, p[2] * e]));
    }
    if f.integral != 0.0 {
        s.add(-sf.rho1 * e.powi(-d) * f.integral);
    }
    Ok(e.powf(f.dim as f64 / 2.0) * s.value())
}

/// Pairings for a family of test functions in one pass over the particles.
pub fn fluctuation_fields(sf: &ScaledField, fs: &[TestFunction]) -> Result<Vec<f64>, ScalingError> {
    fs.iter().map(|f| fluctuation_field(sf, f)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevNorm {
    pub value: f64,
    /// Number of basis functions included.
    pub truncation: usize,
}

/// ‖ω‖²_{−m,M} = Σ_{i<M} a_i^{−m}⟨e_i, ω⟩².
pub fn sobolev_norm_neg(values: &[f64], basis: &HermiteBasis, m: f64) -> SobolevNorm {
    let n = values.len().min(basis.len());
    let mut s = NeumaierSum::new();
    for i in 0..n {
        s.add(basis.eigenvalues[i].powf(-m) * values[i] * values[i]);
    }
    SobolevNorm {
        value: s.value(),
        truncation: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_state_normalisation() {
        assert!((hermite_function(0, 0.0) - PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(hermite_function(30, 60.0), 0.0);
        assert!(hermite_function(200, 25.0).is_finite());
    }

    #[test]
    fn hermite_orthonormality() {
        let gh = GaussHermite::new(40);
        for i in 0..=10 {
            for j in 0..=10 {
                let v: f64 = gh
                    .nodes
                    .iter()
                    .zip(&gh.weights)
                    .map(|(x, w)| w * (x * x).exp() * hermite_function(i, *x) * hermite_function(j, *x))
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((v - target).abs() < 1e-8, "{i} {j} {v}");
            }
        }
    }

    #[test]
    fn hermite_eigen_relation() {
        let gh = GaussHermite::new(40);
        let h = 1e-4;
        for n in 0..8 {
            let v: f64 = gh
                .nodes
                .iter()
                .zip(&gh.weights)
                .map(|(x, w)| {
                    let e = |t: f64| hermite_function(n, t);
                    let d2 = (e(x + h) - 2.0 * e(*x) + e(x - h)) / (h * h);
                    w * (x * x).exp() * e(*x) * (-d2 + x * x * e(*x))
                })
                .sum();
            assert!((v - (2 * n + 1) as f64).abs() < 1e-6, "{n} {v}");
        }
    }

    #[test]
    fn basis_layout() {
        let b = HermiteBasis::new(2, 3);
        assert_eq!(b.len(), 10);
        assert_eq!(b.eigenvalues[0], 2.0);
        assert!(b.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let s = sobolev_norm_neg(&[1.0], &b, 3.0);
        assert!((s.value - 0.125).abs() < 1e-15);
    }

    #[test]
    fn bump_norms_match_evaluators() {
        let f = TestFunction::compact_bump([3.0, 3.0, 0.0], 1.5, 2.0, 6.0, 2).unwrap();
        // brute-force grid integration
        let n = 600;
        let h = 3.2 / n as f64;
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let x = [1.4 + (i as f64 + 0.5) * h, 1.4 + (j as f64 + 0.5) * h, 0.0];
                let (v, g, l, _) = f.jet(&x);
                s0 += v * v;
                s1 += g[0] * g[0] + g[1] * g[1];
                s2 += l * l;
            }
        }
        let a = h * h;
        assert!((s0 * a - f.norm_sq).abs() < 1e-6 * f.norm_sq);
        assert!((s1 * a - f.grad_norm_sq).abs() < 1e-4 * f.grad_norm_sq);
        assert!((s2 * a - f.lap_norm_sq).abs() < 1e-3 * f.lap_norm_sq);
    }

    #[test]
    fn hermite_proxy_norms() {
        let f = TestFunction::hermite_proxy([2, 1, 0], [0.0; 3], 40.0, 2).unwrap();
        let n = 800;
        let h = 24.0 / n as f64;
        let (mut s1, mut s2, mut si) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let x = [-12.0 + (i as f64 + 0.5) * h, -12.0 + (j as f64 + 0.5) * h, 0.0];
                let (v, g, l, _) = f.jet(&x);
                s1 += g[0] * g[0] + g[1] * g[1];
                s2 += l * l;
                si += v;
            }
        }
        let a = h * h;
        assert!((s1 * a - f.grad_norm_sq).abs() < 1e-6);
        assert!((s2 * a - f.lap_norm_sq).abs() < 1e-5);
        assert!((si * a - f.integral).abs() < 1e-8);
        let g = TestFunction::hermite_proxy([2, 2, 0], [0.0; 3], 40.0, 2).unwrap();
        assert!(g.integral != 0.0);
    }

    #[test]
    fn mode_jet_consistency() {
        let f = TestFunction::fourier_mode([1, 2, 0], false, 1.5, 6.0, 2).unwrap();
        let x = [0.7, 2.1, 0.0];
        let (v, g, l, hs) = f.jet(&x);
        assert!((v - f.value(&x)).abs() < 1e-15);
        let h = 1e-6;
        let fd0 = (f.value(&[x[0] + h, x[1], 0.0]) - f.value(&[x[0] - h, x[1], 0.0])) / (2.0 * h);
        assert!((fd0 - g[0]).abs() < 1e-8);
        assert!((l - hs[0][0] - hs[1][1]).abs() < 1e-12);
        assert!((f.norm_sq - 1.5 * 1.5 * 18.0).abs() < 1e-12);
    }

    #[test]
    fn s_in_scales_distances() {
        let t = Torus::new(12.0, 2).unwrap();
        let c = Configuration::new(t, vec![[1.0, 2.0, 0.0], [5.0, 3.0, 0.0]], 2.5);
        let s = s_in(&c, 0.5);
        assert_eq!(s.torus.side, 6.0);
        assert_eq!(s.len(), 2);
        let d0 = c.torus.displacement(&c.positions()[0], &c.positions()[1]);
        let d1 = s.torus.displacement(&s.positions()[0], &s.positions()[1]);
        assert_eq!([d0[0] * 0.5, d0[1] * 0.5], [d1[0], d1[1]]);
        assert_eq!(s_in(&c, 1.0), c);
    }

    #[test]
    fn constant_field_centering_is_exact() {
        let t = Torus::new(6.0, 2).unwrap();
        let c = Configuration::new(t, vec![[1.0, 2.0, 0.0], [5.0, 3.0, 0.0], [0.5, 0.5, 0.0]], 1.0);
        let f = TestFunction::fourier_mode([0, 0, 0], false, 1.0, 6.0, 2).unwrap();
        let rho = 3.0 / 36.0;
        let v = fluctuation_field(&ScaledField::new(&c, 1.0, rho), &f).unwrap();
        assert!(v.abs() < 1e-14);
        let m = TestFunction::fourier_mode([1, 0, 0], true, 1.0, 6.0, 2).unwrap();
        let empty = Configuration::empty(t, 1.0);
        assert_eq!(fluctuation_field(&ScaledField::new(&empty, 1.0, 1.0), &m).unwrap(), 0.0);
    }
}
