//! Closed-form scalar profiles and integral kernels of the free
//! Kramers-Fokker-Planck semigroup.
//!
//! Every kernel is evaluated as a single `exp` of a combined exponent, so
//! large arguments underflow to zero instead of producing `inf * 0`. The
//! harmonic-oscillator factor is written in the rotated form
//!
//! ```text
//! K(v, v'; t) = theta(t)^(-1/2) exp(-omega/8 (v + v')^2 - (v - v')^2 / (8 omega))
//! ```
//!
//! which follows from `coth t - cosech t = tanh(t/2) = omega` and
//! `coth t + cosech t = coth(t/2) = 1/omega`, and is stable for both tiny
//! and huge `t`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{check_time, Error, Result};
use crate::potential::Potential;

/// Below this time the drift coupling `omega` uses its Taylor series.
const OMEGA_SERIES_BELOW: f64 = 1e-3;
/// Below this time the x-diffusion scale `sigma` uses its Taylor series.
const SIGMA_SERIES_BELOW: f64 = 0.1;

/// Taylor coefficients of `t - 2 tanh(t/2)` for `t^3, t^5, ..., t^17`.
const SIGMA_SERIES: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    17.0 / 20160.0,
    -31.0 / 362880.0,
    691.0 / 79833600.0,
    -5461.0 / 6227020800.0,
    929569.0 / 10461394944000.0,
    -3202291.0 / 355687428096000.0,
];

/// Taylor coefficients of `tanh(t/2)` for `t, t^3, ..., t^9`.
const OMEGA_SERIES: [f64; 5] = [1.0 / 2.0, -1.0 / 24.0, 1.0 / 240.0, -17.0 / 40320.0, 31.0 / 725760.0];

/// The four scalar time functions of the free fundamental solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeProfile {
    pub t: f64,
    /// x-diffusion scale, `t - 2 coth t + 2 cosech t`.
    pub sigma: f64,
    /// oscillator scale, `4 pi e^-t sinh t`.
    pub theta: f64,
    /// `sigma * theta`.
    pub gamma: f64,
    /// drift coupling, `coth t - cosech t`.
    pub omega: f64,
}

fn odd_series(coeffs: &[f64], t: f64, first_power: i32) -> f64 {
    let t2 = t * t;
    let poly = coeffs.iter().rev().fold(0.0, |acc, &c| acc * t2 + c);
    poly * t.powi(first_power)
}

pub fn time_profiles(t: f64) -> Result<TimeProfile> {
    check_time(t)?;
    let omega = if t < OMEGA_SERIES_BELOW {
        odd_series(&OMEGA_SERIES, t, 1)
    } else {
        (0.5 * t).tanh()
    };
    let sigma = if t < SIGMA_SERIES_BELOW {
        odd_series(&SIGMA_SERIES, t, 3)
    } else {
        t - 2.0 * (0.5 * t).tanh()
    };
    let theta = -2.0 * PI * (-2.0 * t).exp_m1();
    Ok(TimeProfile {
        t,
        sigma,
        theta,
        gamma: sigma * theta,
        omega,
    })
}

impl TimeProfile {
    /// Exponent of the one-dimensional Mehler factor `K(v, v'; t)`.
    #[inline]
    pub fn harmonic_exponent_1d(&self, v: f64, vp: f64) -> f64 {
        let s = v + vp;
        let d = v - vp;
        -0.5 * self.theta.ln() - 0.125 * self.omega * s * s - 0.125 * d * d / self.omega
    }

    /// Exponent of the one-dimensional free kernel `F(x, v, x', v'; t)`.
    #[inline]
    pub fn free_exponent_1d(&self, x: f64, v: f64, xp: f64, vp: f64) -> f64 {
        let shift = x - xp - self.omega * (v + vp);
        -0.5 * (4.0 * PI * self.sigma).ln() - shift * shift / (4.0 * self.sigma) + self.harmonic_exponent_1d(v, vp)
    }

    /// Global supremum of the free kernel in dimension `n`, `(4 pi gamma)^(-n/2)`.
    pub fn free_kernel_sup(&self, n: usize) -> f64 {
        (-0.5 * n as f64 * (4.0 * PI * self.gamma).ln()).exp()
    }
}

/// Arguments of the free kernel `F(x, v, x', v'; t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPoint {
    pub x: Vec<f64>,
    pub xp: Vec<f64>,
    pub v: Vec<f64>,
    pub vp: Vec<f64>,
    pub t: f64,
}

impl KernelPoint {
    pub fn new(x: Vec<f64>, v: Vec<f64>, xp: Vec<f64>, vp: Vec<f64>, t: f64) -> Result<Self> {
        let p = KernelPoint { x, xp, v, vp, t };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    fn validate(&self) -> Result<()> {
        check_time(self.t)?;
        let n = self.x.len();
        check_dim(n)?;
        if self.xp.len() != n || self.v.len() != n || self.vp.len() != n {
            return Err(Error::domain("kernel point coordinates have mismatched lengths"));
        }
        let all = self.x.iter().chain(&self.xp).chain(&self.v).chain(&self.vp);
        if all.clone().any(|c| !c.is_finite()) {
            return Err(Error::domain("kernel point has non-finite coordinates"));
        }
        Ok(())
    }
}

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(Error::domain(format!("dimension must be 1, 2 or 3, got {n}")))
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<usize> {
    let n = a.len();
    check_dim(n)?;
    if b.len() != n {
        return Err(Error::domain("argument vectors have mismatched lengths"));
    }
    if a.iter().chain(b).any(|c| !c.is_finite()) {
        return Err(Error::domain("non-finite coordinates"));
    }
    Ok(n)
}

/// Mehler kernel of `H = -Δ_v + |v|²/4 - n/2`.
pub fn harmonic_kernel(v: &[f64], vp: &[f64], t: f64) -> Result<f64> {
    check_pair(v, vp)?;
    let prof = time_profiles(t)?;
    let e: f64 = v.iter().zip(vp).map(|(&a, &b)| prof.harmonic_exponent_1d(a, b)).sum();
    Ok(e.exp())
}

/// Heat kernel of `-Δ + |x|²`, evaluated literally. Kept as an independent
/// cross-check for [`harmonic_kernel`] through the scaling
/// `K(v, v'; t) = e^(nt/2) 2^(-n/2) E(v/√2, v'/√2; t/2)`.
pub fn ho_heat_kernel_reference(x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    let n = check_pair(x, y)?;
    check_time(t)?;
    let two_t = 2.0 * t;
    let coth = 1.0 / two_t.tanh();
    let cosech = 1.0 / two_t.sinh();
    let sq: f64 = x.iter().chain(y).map(|c| c * c).sum();
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let log_pref = -0.5 * n as f64 * (2.0 * PI * two_t.sinh()).ln();
    Ok((log_pref - 0.5 * coth * sq + cosech * dot).exp())
}

/// Free KFP fundamental solution `F(x, v, x', v'; t)`.
pub fn free_kernel(p: &KernelPoint) -> Result<f64> {
    p.validate()?;
    let prof = time_profiles(p.t)?;
    let mut e = 0.0;
    for j in 0..p.dim() {
        e += prof.free_exponent_1d(p.x[j], p.v[j], p.xp[j], p.vp[j]);
    }
    Ok(e.exp())
}

/// Partial Fourier transform in `x` of the Gaussian factor of the free kernel.
pub fn fourier_factor(v: &[f64], vp: &[f64], xi: &[f64], t: f64) -> Result<Complex64> {
    let n = check_pair(v, vp)?;
    if xi.len() != n || xi.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain("frequency vector must be finite with matching length"));
    }
    let prof = time_profiles(t)?;
    let mut phase = 0.0;
    let mut xi2 = 0.0;
    for j in 0..n {
        phase -= prof.omega * (v[j] + vp[j]) * xi[j];
        xi2 += xi[j] * xi[j];
    }
    Ok(Complex64::from_polar((-prof.sigma * xi2).exp(), phase))
}

/// Square root of the Maxwellian, `(2π)^(-n/4) exp(-(|v|²/2 + V(x))/2)`.
pub fn maxwellian_sqrt(x: &[f64], v: &[f64], potential: &Potential) -> Result<f64> {
    let n = check_pair(x, v)?;
    if n != potential.dim() {
        return Err(Error::domain("potential dimension does not match arguments"));
    }
    Ok(maxwellian_sqrt_unchecked(x, v, potential))
}

#[inline]
pub(crate) fn maxwellian_sqrt_unchecked(x: &[f64], v: &[f64], potential: &Potential) -> f64 {
    let n = v.len() as f64;
    let v2: f64 = v.iter().map(|c| c * c).sum();
    (-0.25 * n * (2.0 * PI).ln() - 0.5 * (0.5 * v2 + potential.value(x))).exp()
}
