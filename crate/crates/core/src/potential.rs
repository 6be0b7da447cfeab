//! Short-range external potentials `V(x)` with analytic gradients.

use crate::error::{Error, Result};
use crate::kernels::check_dim;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialFamily {
    Zero,
    /// `V(x) = c <x>^(-rho)` with `<x> = (1 + |x|²)^(1/2)`.
    InversePower {
        c: f64,
        rho: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    n: usize,
    family: PotentialFamily,
}

impl Potential {
    pub fn zero(n: usize) -> Self {
        assert!((1..=3).contains(&n), "dimension must be 1, 2 or 3");
        Potential {
            n,
            family: PotentialFamily::Zero,
        }
    }

    pub fn inverse_power(n: usize, c: f64, rho: f64) -> Result<Self> {
        check_dim(n)?;
        if !c.is_finite() || !rho.is_finite() {
            return Err(Error::domain("potential parameters must be finite"));
        }
        if rho < -1.0 {
            return Err(Error::domain(format!("decay exponent must be >= -1, got {rho}")));
        }
        Ok(Potential {
            n,
            family: PotentialFamily::InversePower { c, rho },
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> PotentialFamily {
        self.family
    }

    pub fn is_zero(&self) -> bool {
        match self.family {
            PotentialFamily::Zero => true,
            PotentialFamily::InversePower { c, .. } => c == 0.0,
        }
    }

    /// Coupling amplitude `c` (zero for the free case).
    pub fn amplitude(&self) -> f64 {
        match self.family {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::InversePower { c, .. } => c,
        }
    }

    /// Nominal decay exponent; the zero potential decays at every rate, reported as infinity.
    pub fn rho(&self) -> f64 {
        match self.family {
            PotentialFamily::Zero => f64::INFINITY,
            PotentialFamily::InversePower { rho, .. } => rho,
        }
    }

    /// Same family with the amplitude replaced.
    pub fn with_amplitude(&self, c: f64) -> Result<Self> {
        match self.family {
            PotentialFamily::Zero => Potential::inverse_power(self.n, c, 2.0),
            PotentialFamily::InversePower { rho, .. } => Potential::inverse_power(self.n, c, rho),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.family {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::InversePower { c, rho } => {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                c * (1.0 + r2).powf(-0.5 * rho)
            }
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self.family {
            PotentialFamily::Zero => out.iter_mut().for_each(|g| *g = 0.0),
            PotentialFamily::InversePower { c, rho } => {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                let scale = -c * rho * (1.0 + r2).powf(-0.5 * rho - 1.0);
                for (g, xi) in out.iter_mut().zip(x) {
                    *g = scale * xi;
                }
            }
        }
    }

    pub fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        g
    }

    /// `<x>^rho (|V| + <x>|∇V|)` at one point, for a claimed decay exponent.
    pub fn weighted_size(&self, x: &[f64], rho_claimed: f64) -> f64 {
        let jx = (1.0 + x.iter().map(|c| c * c).sum::<f64>()).sqrt();
        let g = self.gradient_vec(x);
        let gnorm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        jx.powf(rho_claimed) * (self.value(x).abs() + jx * gnorm)
    }
}
