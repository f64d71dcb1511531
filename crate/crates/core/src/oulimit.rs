//! The Gaussian limit: white noise of variance χ, the Ornstein–Uhlenbeck
//! process dX = (ρ/χ)ΔX dt + √(2ρ) dW with W of covariance −Δ, and the
//! limiting Dirichlet form on cylinder functions.
//!
//! On a torus of side L₀ write X = Σ_k a_k e_k with e_k = e^{ik·x}/√|Λ| and
//! a_{−k} = ā_k. The noise projects to independent mode increments of
//! variance 2ρ|k|²dt, so each a_k is a complex OU process with rate
//! θ_k = (ρ/χ)|k|² and stationary E|a_k|² = 2ρ|k|²/(2θ_k) = χ. The exact
//! transition is a ← a·e^{−θdt} + √(χ(1 − e^{−2θdt}))·ξ with E|ξ|² = 1.
//! The k = 0 amplitude is real and conserved.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::langevin::FieldSeries;
use crate::potentials::Point;
use crate::scaling::{TestFunction, TestFunctionKind};
use crate::stats::{mean_with_error, Estimate};

#[derive(Debug, Error)]
pub enum OuError {
    #[error("invalid OU parameter: {0}")]
    InvalidParameter(String),
    #[error("test function is not a Fourier mode")]
    NotAMode,
    #[error("test functions live on different tori")]
    TorusMismatch,
    #[error("mode {0:?} is not part of the simulated set")]
    UnknownMode([i64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OUParams {
    pub rho1: f64,
    pub chi: f64,
}

impl OUParams {
    pub fn new(rho1: f64, chi: f64) -> Result<Self, OuError> {
        if !(rho1 > 0.0 && chi > 0.0) {
            return Err(OuError::InvalidParameter(format!("rho1 {rho1}, chi {chi}")));
        }
        Ok(OUParams { rho1, chi })
    }

    pub fn diffusion(&self) -> f64 {
        self.rho1 / self.chi
    }

    pub fn noise_strength(&self) -> f64 {
        (2.0 * self.rho1).sqrt()
    }

    /// Relaxation rate of a mode with wavevector k.
    pub fn rate(&self, k: &Point) -> f64 {
        self.diffusion() * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2])
    }
}

/// Variance of ⟨f, ·⟩ under white noise of intensity χ.
pub fn white_noise_variance(f: &TestFunction, chi: f64) -> f64 {
    chi * f.norm_sq
}

fn mode_parts(f: &TestFunction) -> Result<([i64; 3], bool, f64), OuError> {
    match f.kind {
        TestFunctionKind::FourierMode { k, sine, amplitude } => Ok((k, sine, amplitude)),
        _ => Err(OuError::NotAMode),
    }
}

/// L² inner product of two Fourier modes on the same torus.
pub fn mode_inner(f: &TestFunction, g: &TestFunction) -> Result<f64, OuError> {
    if f.side != g.side || f.dim != g.dim {
        return Err(OuError::TorusMismatch);
    }
    let (k1, s1, a1) = mode_parts(f)?;
    let (k2, s2, a2) = mode_parts(g)?;
    let vol = f.side.powi(f.dim as i32);
    let zero = [0i64; 3];
    if k1 == zero || k2 == zero {
        return Ok(if k1 == k2 && !s1 && !s2 { a1 * a2 * vol } else { 0.0 });
    }
    let same = k1 == k2;
    let opp = k1.iter().zip(&k2).all(|(a, b)| *a == -*b);
    let half = 0.5 * a1 * a2 * vol;
    Ok(match (s1, s2) {
        (false, false) if same || opp => half,
        (true, true) if same => half,
        (true, true) if opp => -half,
        _ => 0.0,
    })
}

/// Stationary Cov(⟨f, X(t)⟩, ⟨f, X(0)⟩) for a single mode.
pub fn ou_autocov(f: &TestFunction, t: f64, p: &OUParams) -> Result<f64, OuError> {
    ou_autocov_sum(std::slice::from_ref(f), t, p)
}

/// Same for f = Σ f_i, a finite combination of modes.
pub fn ou_autocov_sum(fs: &[TestFunction], t: f64, p: &OUParams) -> Result<f64, OuError> {
    let mut s = 0.0;
    for f in fs {
        let k = f.wavevector().ok_or(OuError::NotAMode)?;
        let decay = (-p.rate(&k) * t.abs()).exp();
        for g in fs {
            s += mode_inner(f, g)? * decay;
        }
    }
    Ok(p.chi * s)
}

fn canonical(k: [i64; 3]) -> ([i64; 3], bool) {
    match k.iter().find(|&&c| c != 0) {
        Some(&c) if c < 0 => ([-k[0], -k[1], -k[2]], true),
        _ => (k, false),
    }
}

/// Complex mode amplitudes of a real field on the torus, one per
/// representative of each ±k pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OUFieldState {
    pub side: f64,
    pub dim: usize,
    pub modes: Vec<[i64; 3]>,
    pub amplitudes: Vec<Complex64>,
}

impl OUFieldState {
    /// Modes needed to pair with `fs`, started from the stationary law.
    pub fn stationary(fs: &[TestFunction], chi: f64, rng: &mut ChaCha8Rng) -> Result<Self, OuError> {
        let first = fs.first().ok_or_else(|| OuError::InvalidParameter("no test functions".into()))?;
        let (side, dim) = (first.side, first.dim);
        let mut modes = Vec::new();
        for f in fs {
            if f.side != side || f.dim != dim {
                return Err(OuError::TorusMismatch);
            }
            let (k, _, _) = mode_parts(f)?;
            let (c, _) = canonical(k);
            if !modes.contains(&c) {
                modes.push(c);
            }
        }
        let amplitudes = modes.iter().map(|k| stationary_draw(*k, chi, rng)).collect();
        Ok(OUFieldState {
            side,
            dim,
            modes,
            amplitudes,
        })
    }

    fn amplitude(&self, k: [i64; 3]) -> Result<Complex64, OuError> {
        let (c, flipped) = canonical(k);
        let i = self.modes.iter().position(|m| *m == c).ok_or(OuError::UnknownMode(k))?;
        let a = self.amplitudes[i];
        Ok(if flipped { a.conj() } else { a })
    }

    /// ⟨f, X⟩: A√|Λ|·Re a_k for cos(k·x), −A√|Λ|·Im a_k for sin(k·x).
    pub fn pairing(&self, f: &TestFunction) -> Result<f64, OuError> {
        let (k, sine, amp) = mode_parts(f)?;
        let root = self.side.powi(self.dim as i32).sqrt();
        let a = self.amplitude(k)?;
        if k == [0; 3] {
            return Ok(if sine { 0.0 } else { amp * root * a.re });
        }
        Ok(if sine { -amp * root * a.im } else { amp * root * a.re })
    }

    /// Exact transition over dt.
    pub fn advance(&mut self, p: &OUParams, dt: f64, rng: &mut ChaCha8Rng) {
        let two_pi = 2.0 * std::f64::consts::PI / self.side;
        for (k, a) in self.modes.iter().zip(self.amplitudes.iter_mut()) {
            if *k == [0; 3] {
                continue;
            }
            let kv = [k[0] as f64 * two_pi, k[1] as f64 * two_pi, k[2] as f64 * two_pi];
            let decay = (-p.rate(&kv) * dt).exp();
            let sd = (p.chi * (1.0 - decay * decay) / 2.0).sqrt();
            let xi = Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
            *a = *a * decay + xi * sd;
        }
    }
}

fn stationary_draw(k: [i64; 3], chi: f64, rng: &mut ChaCha8Rng) -> Complex64 {
    if k == [0; 3] {
        let x: f64 = StandardNormal.sample(rng);
        Complex64::new(chi.sqrt() * x, 0.0)
    } else {
        let sd = (chi / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(sd * re, sd * im)
    }
}

/// Stationary OU pairings with every test function, recorded every dt up
/// to the horizon.
pub fn simulate_ou(
    p: &OUParams,
    fs: &[(String, TestFunction)],
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<FieldSeries, OuError> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(OuError::InvalidParameter(format!("dt {dt}, horizon {horizon}")));
    }
    let funcs: Vec<TestFunction> = fs.iter().map(|(_, f)| f.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = OUFieldState::stationary(&funcs, p.chi, &mut rng)?;
    let n = (horizon / dt).round() as usize;
    let mut series = FieldSeries {
        source: "ou".into(),
        eps: 0.0,
        beta: f64::NAN,
        z: f64::NAN,
        side: state.side,
        dt,
        seed,
        ids: fs.iter().map(|(id, _)| id.clone()).collect(),
        times: Vec::with_capacity(n + 1),
        values: Vec::with_capacity(n + 1),
    };
    for step in 0..=n {
        if step > 0 {
            state.advance(p, dt, &mut rng);
        }
        series.times.push(step as f64 * dt);
        series.values.push(funcs.iter().map(|f| state.pairing(f)).collect::<Result<_, _>>()?);
    }
    Ok(series)
}

/// Outer profile g of a cylinder function F(ω) = g(⟨f₁,ω⟩, …, ⟨f_N,ω⟩).
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// Σ c_i y_i.
    Linear(Vec<f64>),
    /// sin(y_index).
    Sine { index: usize },
}

impl Profile {
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Profile::Constant(_) => vec![0.0; y.len()],
            Profile::Linear(c) => c.clone(),
            Profile::Sine { index } => {
                let mut g = vec![0.0; y.len()];
                g[*index] = y[*index].cos();
                g
            }
        }
    }

    fn is_affine(&self) -> bool {
        !matches!(self, Profile::Sine { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction {
    pub profile: Profile,
    pub fs: Vec<TestFunction>,
}

impl CylinderFunction {
    pub fn linear(f: TestFunction) -> Self {
        CylinderFunction {
            profile: Profile::Linear(vec![1.0]),
            fs: vec![f],
        }
    }
}

/// ⟨f_i, f_j⟩ and ∫(∇f_i, ∇f_j) by the periodic trapezoid rule.
pub fn gram_matrices(fs: &[TestFunction]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), OuError> {
    let n = fs.len();
    let mut g0 = vec![vec![0.0; n]; n];
    let mut g1 = vec![vec![0.0; n]; n];
    let Some(first) = fs.first() else {
        return Ok((g0, g1));
    };
    let (side, dim) = (first.side, first.dim);
    if fs.iter().any(|f| f.side != side || f.dim != dim) {
        return Err(OuError::TorusMismatch);
    }
    let m: usize = match dim {
        1 => 1024,
        2 => 160,
        _ => 48,
    };
    let h = side / m as f64;
    let cell = h.powi(dim as i32);
    let total = m.pow(dim as u32);
    let mut vals = vec![0.0; n];
    let mut grads = vec![[0.0; 3]; n];
    for idx in 0..total {
        let mut x = [0.0; 3];
        let mut r = idx;
        for c in x.iter_mut().take(dim) {
            *c = (r % m) as f64 * h;
            r /= m;
        }
        for (i, f) in fs.iter().enumerate() {
            vals[i] = f.value(&x);
            grads[i] = f.gradient(&x);
        }
        for i in 0..n {
            for j in i..n {
                g0[i][j] += cell * vals[i] * vals[j];
                g1[i][j] += cell * (0..dim).map(|k| grads[i][k] * grads[j][k]).sum::<f64>();
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            g0[i][j] = g0[j][i];
            g1[i][j] = g1[j][i];
        }
    }
    Ok((g0, g1))
}

/// Lower-triangular L with LLᵀ = A for positive semidefinite A; null
/// directions get zero columns.
fn cholesky_psd(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d <= 1e-12 * scale {
            continue;
        }
        let s = d.sqrt();
        l[j][j] = s;
        for i in j + 1..n {
            l[i][j] = (a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>()) / s;
        }
    }
    l
}

/// E(F, G) = ρ⁽¹⁾·E[Σ_{i,j} ∂_i g_F ∂_j g_G ∫(∇f_i, ∇f_j)] under white noise
/// of intensity χ, by Monte Carlo over the Gaussian pairings unless both
/// profiles are affine.
pub fn dirichlet_limit_form(
    f: &CylinderFunction,
    g: &CylinderFunction,
    p: &OUParams,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate, OuError> {
    let nf = f.fs.len();
    let all: Vec<TestFunction> = f.fs.iter().chain(&g.fs).cloned().collect();
    let (g0, g1) = gram_matrices(&all)?;
    let form = |y: &[f64]| {
        let df = f.profile.gradient(&y[..nf]);
        let dg = g.profile.gradient(&y[nf..]);
        let mut s = 0.0;
        for (i, a) in df.iter().enumerate() {
            for (j, b) in dg.iter().enumerate() {
                s += a * b * g1[i][nf + j];
            }
        }
        p.rho1 * s
    };
    if f.profile.is_affine() && g.profile.is_affine() {
        return Ok(Estimate::exact(form(&vec![0.0; all.len()])));
    }
    let cov: Vec<Vec<f64>> = g0.iter().map(|r| r.iter().map(|v| p.chi * v).collect()).collect();
    let l = cholesky_psd(&cov);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = all.len();
    let mut out = Vec::with_capacity(n_samples);
    let mut xi = vec![0.0; n];
    let mut y = vec![0.0; n];
    for _ in 0..n_samples {
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for i in 0..n {
            y[i] = (0..=i).map(|k| l[i][k] * xi[k]).sum();
        }
        out.push(form(&y));
    }
    Ok(mean_with_error(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussHermite;
    use crate::stats::{mean, variance};

    fn mode(k: [i64; 3], sine: bool) -> TestFunction {
        TestFunction::fourier_mode(k, sine, 1.0, 2.0, 2).unwrap()
    }

    #[test]
    fn autocov_closed_forms() {
        let p = OUParams::new(1.0, 1.0).unwrap();
        let f = mode([1, 0, 0], false);
        let k2 = (std::f64::consts::PI).powi(2);
        assert!((ou_autocov(&f, 0.0, &p).unwrap() - white_noise_variance(&f, 1.0)).abs() < 1e-14);
        let v = ou_autocov(&f, 1.0 / k2, &p).unwrap();
        assert!((v - f.norm_sq * (-1.0f64).exp()).abs() < 1e-14);
        assert!(ou_autocov(&f, 50.0, &p).unwrap() < 1e-100);
        let bump = TestFunction::compact_bump([1.0, 1.0, 0.0], 0.5, 1.0, 2.0, 2).unwrap();
        assert!(matches!(ou_autocov(&bump, 0.0, &p), Err(OuError::NotAMode)));
    }

    #[test]
    fn mode_inner_matches_grid() {
        let fs = vec![mode([1, 0, 0], false), mode([-1, 0, 0], true), mode([1, 0, 0], true), mode([0, 2, 0], false)];
        let (g0, g1) = gram_matrices(&fs).unwrap();
        for i in 0..fs.len() {
            for j in 0..fs.len() {
                assert!((g0[i][j] - mode_inner(&fs[i], &fs[j]).unwrap()).abs() < 1e-10);
            }
            assert!((g1[i][i] - fs[i].grad_norm_sq).abs() < 1e-9);
        }
    }

    #[test]
    fn simulated_modes_are_stationary_with_right_decay() {
        let p = OUParams::new(0.8, 1.3).unwrap();
        let fs: Vec<(String, TestFunction)> =
            vec![("c".into(), mode([1, 0, 0], false)), ("s".into(), mode([1, 0, 0], true))];
        let dt = 0.01;
        let s = simulate_ou(&p, &fs, 400.0, dt, 5).unwrap();
        let x = s.column(0);
        let target = white_noise_variance(&fs[0].1, p.chi);
        let v = variance(&x);
        // crude error: integrated autocorrelation 1/θ over a run of length T
        let theta = p.rate(&fs[0].1.wavevector().unwrap());
        let se = target * (2.0 / (theta * 400.0)).sqrt();
        assert!((v - target).abs() < 3.0 * se, "{v} {target} {se}");
        let lag = (0.1 / dt) as usize;
        let m = mean(&x);
        let c: f64 = (0..x.len() - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / (x.len() - lag) as f64;
        let expect = ou_autocov(&fs[0].1, lag as f64 * dt, &p).unwrap();
        assert!((c - expect).abs() < 3.0 * se, "{c} {expect}");
    }

    #[test]
    fn dirichlet_linear_and_constant() {
        let p = OUParams::new(1.7, 0.9).unwrap();
        let f = mode([1, 1, 0], false);
        let e = dirichlet_limit_form(&CylinderFunction::linear(f.clone()), &CylinderFunction::linear(f.clone()), &p, 0, 0)
            .unwrap();
        assert!((e.value - p.rho1 * f.grad_norm_sq).abs() < 1e-8 * e.value);
        let c = CylinderFunction {
            profile: Profile::Constant(3.0),
            fs: vec![f.clone()],
        };
        assert_eq!(dirichlet_limit_form(&c, &CylinderFunction::linear(f), &p, 0, 0).unwrap().value, 0.0);
    }

    #[test]
    fn dirichlet_sine_against_hermite_quadrature() {
        let p = OUParams::new(1.0, 0.7).unwrap();
        let f = TestFunction::fourier_mode([1, 0, 0], false, 0.6, 2.0, 2).unwrap();
        let sin = CylinderFunction {
            profile: Profile::Sine { index: 0 },
            fs: vec![f.clone()],
        };
        let e = dirichlet_limit_form(&sin, &sin, &p, 200_000, 3).unwrap();
        // E[cos²(sY)] with Y standard normal, s² = χ‖f‖²
        let s = (p.chi * f.norm_sq).sqrt();
        let gh = GaussHermite::new(40);
        let ecos2: f64 = gh
            .nodes
            .iter()
            .zip(&gh.weights)
            .map(|(x, w)| w * (s * std::f64::consts::SQRT_2 * x).cos().powi(2))
            .sum::<f64>()
            / std::f64::consts::PI.sqrt();
        let exact = p.rho1 * f.grad_norm_sq * ecos2;
        assert!(e.within_sigmas(exact, 3.0), "{e:?} {exact}");
        assert!(((1.0 + (-2.0 * s * s).exp()) / 2.0 - ecos2).abs() < 1e-12);
    }
}
