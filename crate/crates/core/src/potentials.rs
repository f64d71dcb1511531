//! Isotropic pair potentials and the integral functionals built from them.
//!
//! Every supported kind is radial, so the gradient and Hessian are written
//! through two scalar profiles
//!
//! ```text
//! ∇φ(x)  = g1(r) x
//! ∇²φ(x) = g2(r) x xᵀ + g1(r) I,    g1 = V'/r,  g2 = (V'' − V'/r)/r²
//! ```
//!
//! and all whole-space integrals reduce to radial quadratures.

use std::f64::consts::PI;

use thiserror::Error;

use crate::quadrature::{adaptive_with_breaks, QuadratureError};

/// Points live in R^3; unused coordinates are kept at zero for d < 3.
pub type Point = [f64; 3];
pub type Matrix = [[f64; 3]; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("potential is singular at the origin")]
    SingularOrigin,
    #[error("invalid potential parameter: {0}")]
    InvalidParameter(String),
    #[error("integral of {0} diverges for this potential kind")]
    NotIntegrable(&'static str),
    #[error("inverse temperature must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("activity must be positive, got {0}")]
    NonPositiveActivity(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    Zero,
    /// φ(r) = height·(1 − r²/width²)⁴ for r < width, zero outside. C³ at the edge.
    SmoothCompact { height: f64, width: f64 },
    /// Lennard-Jones, shifted on [0, r_switch] and joined to zero at r_cut by a
    /// polynomial in (r_cut − r) matching value, slope and curvature.
    LennardJones {
        well_depth: f64,
        sigma: f64,
        r_cut: f64,
        r_switch: f64,
    },
}

// Tail polynomial p(u) = a3 u³ + a4 u⁴, u = r_cut − r, and the inner shift.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LjTail {
    a3: f64,
    a4: f64,
    shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairPotential {
    pub kind: PotentialKind,
    /// B(φ) in φ ≥ −B. Metadata supplied by the caller.
    pub stability_constant: f64,
    pub dim: usize,
    /// Hard floor: energies are +∞ for 0 < r < r_min.
    pub r_min: f64,
    tail: Option<LjTail>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    pub c: f64,
    pub in_laht: bool,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialMoments {
    pub dim: usize,
    pub int_phi: f64,
    pub int_phi_sq: f64,
    pub int_x1d1_sq: f64,
    /// ∫ x^k x^l ∂_i∂_j φ, stored flat with index ((k·d + l)·d + i)·d + j.
    pub int_xkxl_didj_phi: Vec<f64>,
    pub mayer_c: f64,
    /// Summed absolute quadrature error estimate.
    pub error: f64,
}

impl PotentialMoments {
    pub fn tensor(&self, k: usize, l: usize, i: usize, j: usize) -> f64 {
        let d = self.dim;
        self.int_xkxl_didj_phi[((k * d + l) * d + i) * d + j]
    }
}

/// Surface area of the unit sphere S^{d−1}.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("dimension {d} not supported"),
    }
}

fn lj_raw(eps: f64, sigma: f64, r: f64) -> (f64, f64, f64) {
    let sr6 = (sigma / r).powi(6);
    let sr12 = sr6 * sr6;
    let v = 4.0 * eps * (sr12 - sr6);
    let dv = 4.0 * eps * (-12.0 * sr12 + 6.0 * sr6) / r;
    let d2v = 4.0 * eps * (156.0 * sr12 - 42.0 * sr6) / (r * r);
    (v, dv, d2v)
}

impl PairPotential {
    pub fn zero(dim: usize) -> Self {
        PairPotential {
            kind: PotentialKind::Zero,
            stability_constant: 0.0,
            dim,
            r_min: 0.0,
            tail: None,
        }
    }

    /// Bump of the given height and support radius. For height ≥ 0 the default
    /// stability constant is 0, otherwise |height|.
    pub fn smooth_compact(height: f64, width: f64, dim: usize) -> Result<Self, PotentialError> {
        if !(width > 0.0) || !height.is_finite() {
            return Err(PotentialError::InvalidParameter(format!(
                "bump needs finite height and width > 0 (height {height}, width {width})"
            )));
        }
        check_dim(dim)?;
        Ok(PairPotential {
            kind: PotentialKind::SmoothCompact { height, width },
            stability_constant: (-height).max(0.0),
            dim,
            r_min: 0.0,
            tail: None,
        })
    }

    /// Lennard-Jones with r_switch = 0.8·r_cut and r_min = 0.5·σ.
    pub fn lennard_jones(well_depth: f64, sigma: f64, r_cut: f64, dim: usize) -> Result<Self, PotentialError> {
        Self::lennard_jones_with(well_depth, sigma, r_cut, 0.8 * r_cut, 0.5 * sigma, dim)
    }

    /// Lennard-Jones with explicit switch radius and hard floor. The default
    /// stability constant is the depth of the smoothed well.
    pub fn lennard_jones_with(
        well_depth: f64,
        sigma: f64,
        r_cut: f64,
        r_switch: f64,
        r_min: f64,
        dim: usize,
    ) -> Result<Self, PotentialError> {
        check_dim(dim)?;
        if !(well_depth > 0.0 && sigma > 0.0) {
            return Err(PotentialError::InvalidParameter(
                "Lennard-Jones needs positive well depth and sigma".into(),
            ));
        }
        let r_well = 2f64.powf(1.0 / 6.0) * sigma;
        if !(r_switch > r_well && r_cut > r_switch) {
            return Err(PotentialError::InvalidParameter(format!(
                "need 2^(1/6)σ < r_switch < r_cut, got r_switch {r_switch}, r_cut {r_cut}"
            )));
        }
        if !(r_min > 0.0 && r_min < sigma) {
            return Err(PotentialError::InvalidParameter(format!(
                "hard floor r_min must lie in (0, σ), got {r_min}"
            )));
        }
        let (vs, dvs, d2vs) = lj_raw(well_depth, sigma, r_switch);
        let us = r_cut - r_switch;
        let a4 = (dvs + us * d2vs / 2.0) / (2.0 * us.powi(3));
        let a3 = (d2vs - 12.0 * a4 * us * us) / (6.0 * us);
        let shift = vs - (a3 * us.powi(3) + a4 * us.powi(4));
        Ok(PairPotential {
            kind: PotentialKind::LennardJones {
                well_depth,
                sigma,
                r_cut,
                r_switch,
            },
            stability_constant: well_depth + shift,
            dim,
            r_min,
            tail: Some(LjTail { a3, a4, shift }),
        })
    }

    pub fn with_stability_constant(mut self, b: f64) -> Self {
        self.stability_constant = b;
        self
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero)
    }

    pub fn is_isotropic(&self) -> bool {
        true
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.kind, PotentialKind::LennardJones { .. })
    }

    /// Radius beyond which φ vanishes identically.
    pub fn range(&self) -> f64 {
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::SmoothCompact { width, .. } => width,
            PotentialKind::LennardJones { r_cut, .. } => r_cut,
        }
    }

    /// Constant subtracted from raw LJ inside r_switch; φ(σ) = −shift.
    pub fn smoothing_shift(&self) -> f64 {
        self.tail.map_or(0.0, |t| t.shift)
    }

    /// (V, V', V'') of the radial profile at r > 0, ignoring the hard floor.
    pub fn radial(&self, r: f64) -> (f64, f64, f64) {
        match self.kind {
            PotentialKind::Zero => (0.0, 0.0, 0.0),
            PotentialKind::SmoothCompact { height, width } => {
                if r >= width {
                    return (0.0, 0.0, 0.0);
                }
                let a2 = width * width;
                let s = 1.0 - r * r / a2;
                let s2 = s * s;
                (
                    height * s2 * s2,
                    -8.0 * height * r * s2 * s / a2,
                    -8.0 * height * s2 * s / a2 + 48.0 * height * r * r * s2 / (a2 * a2),
                )
            }
            PotentialKind::LennardJones {
                well_depth,
                sigma,
                r_cut,
                r_switch,
            } => {
                let t = self.tail.expect("LJ tail coefficients");
                if r >= r_cut {
                    (0.0, 0.0, 0.0)
                } else if r > r_switch {
                    let u = r_cut - r;
                    (
                        u * u * u * (t.a3 + t.a4 * u),
                        -(3.0 * t.a3 * u * u + 4.0 * t.a4 * u * u * u),
                        6.0 * t.a3 * u + 12.0 * t.a4 * u * u,
                    )
                } else {
                    let (v, dv, d2v) = lj_raw(well_depth, sigma, r);
                    (v - t.shift, dv, d2v)
                }
            }
        }
    }

    // (V, g1, g2) as functions of r², smooth at the origin for bounded kinds.
    #[inline]
    pub(crate) fn profiles(&self, r2: f64) -> (f64, f64, f64) {
        match self.kind {
            PotentialKind::Zero => (0.0, 0.0, 0.0),
            PotentialKind::SmoothCompact { height, width } => {
                let a2 = width * width;
                if r2 >= a2 {
                    return (0.0, 0.0, 0.0);
                }
                let s = 1.0 - r2 / a2;
                let s2 = s * s;
                (
                    height * s2 * s2,
                    -8.0 * height * s2 * s / a2,
                    48.0 * height * s2 / (a2 * a2),
                )
            }
            PotentialKind::LennardJones { .. } => {
                let r = r2.sqrt();
                let (v, dv, d2v) = self.radial(r);
                let g1 = dv / r;
                (v, g1, (d2v - g1) / r2)
            }
        }
    }

    /// Energy from a squared distance. Returns +∞ at the origin of a singular
    /// kind and below the hard floor.
    #[inline]
    pub fn energy_r2(&self, r2: f64) -> f64 {
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::SmoothCompact { height, width } => {
                let a2 = width * width;
                if r2 >= a2 {
                    0.0
                } else {
                    let s = 1.0 - r2 / a2;
                    let s2 = s * s;
                    height * s2 * s2
                }
            }
            PotentialKind::LennardJones { r_cut, .. } => {
                if r2 >= r_cut * r_cut {
                    0.0
                } else if r2 < self.r_min * self.r_min || r2 == 0.0 {
                    f64::INFINITY
                } else {
                    self.radial(r2.sqrt()).0
                }
            }
        }
    }

    /// g1 = V'/r, so that ∇φ(x) = g1·x.
    #[inline]
    pub fn gradient_factor_r2(&self, r2: f64) -> f64 {
        if r2 >= self.range() * self.range() {
            return 0.0;
        }
        self.profiles(r2).1
    }

    pub fn evaluate(&self, x: &Point) -> Result<f64, PotentialError> {
        let r2 = norm2(x);
        if r2 == 0.0 && !self.is_bounded() {
            return Err(PotentialError::SingularOrigin);
        }
        Ok(self.energy_r2(r2))
    }

    pub fn derivatives(&self, x: &Point) -> Result<(Point, Matrix), PotentialError> {
        let r2 = norm2(x);
        if r2 == 0.0 && !self.is_bounded() {
            return Err(PotentialError::SingularOrigin);
        }
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        if r2 >= self.range() * self.range() {
            return Ok((grad, hess));
        }
        let (_, g1, g2) = self.profiles(r2);
        for i in 0..self.dim {
            grad[i] = g1 * x[i];
            for j in 0..self.dim {
                hess[i][j] = g2 * x[i] * x[j] + if i == j { g1 } else { 0.0 };
            }
        }
        Ok((grad, hess))
    }

    // Radial quadrature breakpoints covering the support.
    pub(crate) fn breaks(&self) -> Vec<f64> {
        match self.kind {
            PotentialKind::Zero => vec![0.0, 1.0],
            PotentialKind::SmoothCompact { width, .. } => vec![0.0, width],
            PotentialKind::LennardJones {
                sigma, r_cut, r_switch, ..
            } => {
                let mut b = vec![0.0, self.r_min];
                if let Some(r0) = self.sign_change() {
                    b.push(r0);
                }
                b.push(2f64.powf(1.0 / 6.0) * sigma);
                b.push(r_switch);
                b.push(r_cut);
                b.sort_by(|a, c| a.partial_cmp(c).unwrap());
                b.dedup();
                b
            }
        }
    }

    // Zero of the smoothed LJ profile between the floor and the well minimum.
    fn sign_change(&self) -> Option<f64> {
        let PotentialKind::LennardJones { sigma, .. } = self.kind else {
            return None;
        };
        let mut lo = self.r_min;
        let mut hi = 2f64.powf(1.0 / 6.0) * sigma;
        if self.radial(lo).0 * self.radial(hi).0 > 0.0 {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.radial(mid).0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// C(βφ, z) = z·e^{2βB}·∫|e^{−βφ} − 1| dx and the LA-HT flag C < e^{−1}.
    pub fn regime_check(&self, beta: f64, z: f64) -> Result<Regime, PotentialError> {
        if beta < 0.0 {
            return Err(PotentialError::NegativeBeta(beta));
        }
        if !(z > 0.0) {
            return Err(PotentialError::NonPositiveActivity(z));
        }
        if self.is_zero() || beta == 0.0 {
            return Ok(Regime {
                c: 0.0,
                in_laht: true,
                error: 0.0,
            });
        }
        let d = self.dim as i32;
        let area = sphere_area(self.dim);
        let r_min = self.r_min;
        let integrand = |r: f64| {
            let m = if r < r_min {
                1.0
            } else {
                (-(beta * self.radial(r).0)).exp_m1().abs()
            };
            m * r.powi(d - 1)
        };
        let integral = adaptive_with_breaks(integrand, &self.breaks(), 1e-10)?;
        let pref = z * (2.0 * beta * self.stability_constant).exp() * area;
        let c = pref * integral.value;
        Ok(Regime {
            c,
            in_laht: c < (-1f64).exp(),
            error: pref * integral.error,
        })
    }

    /// Whole-space integral functionals of φ. `beta` enters only through the
    /// Mayer constant C(βφ, 1).
    pub fn moments(&self, beta: f64) -> Result<PotentialMoments, PotentialError> {
        let d = self.dim;
        if self.is_zero() {
            return Ok(PotentialMoments {
                dim: d,
                int_phi: 0.0,
                int_phi_sq: 0.0,
                int_x1d1_sq: 0.0,
                int_xkxl_didj_phi: vec![0.0; d.pow(4)],
                mayer_c: 0.0,
                error: 0.0,
            });
        }
        if !self.is_bounded() {
            return Err(PotentialError::NotIntegrable("φ near the origin"));
        }
        let area = sphere_area(d);
        let di = d as i32;
        let df = d as f64;
        let breaks = self.breaks();
        let tol = 1e-10;
        let i1 = adaptive_with_breaks(|r| self.radial(r).0 * r.powi(di - 1), &breaks, tol)?;
        let i2 = adaptive_with_breaks(|r| self.radial(r).0.powi(2) * r.powi(di - 1), &breaks, tol)?;
        let j = adaptive_with_breaks(|r| self.radial(r).1.powi(2) * r.powi(di + 1), &breaks, tol)?;
        let m4 = adaptive_with_breaks(|r| self.profiles(r * r).2 * r.powi(di + 3), &breaks, tol)?;
        let m2 = adaptive_with_breaks(|r| self.profiles(r * r).1 * r.powi(di + 1), &breaks, tol)?;
        let c4 = area / (df * (df + 2.0));
        let c2 = area / df;
        let quartic = c4 * m4.value;
        let quadratic = c2 * m2.value;
        let mut t = vec![0.0; d.pow(4)];
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for k in 0..d {
            for l in 0..d {
                for i in 0..d {
                    for jj in 0..d {
                        t[((k * d + l) * d + i) * d + jj] = quartic
                            * (delta(k, l) * delta(i, jj) + delta(k, i) * delta(l, jj) + delta(k, jj) * delta(l, i))
                            + quadratic * delta(k, l) * delta(i, jj);
                    }
                }
            }
        }
        let regime = self.regime_check(beta.max(0.0), 1.0)?;
        Ok(PotentialMoments {
            dim: d,
            int_phi: area * i1.value,
            int_phi_sq: area * i2.value,
            int_x1d1_sq: 3.0 * c4 * j.value,
            int_xkxl_didj_phi: t,
            mayer_c: regime.c,
            error: area * (i1.error + i2.error) + 3.0 * c4 * j.error + c4 * m4.error + c2 * m2.error + regime.error,
        })
    }
}

fn check_dim(dim: usize) -> Result<(), PotentialError> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(PotentialError::InvalidParameter(format!("dimension must be 1, 2 or 3, got {dim}")))
    }
}

#[inline]
pub fn norm2(x: &Point) -> f64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}
