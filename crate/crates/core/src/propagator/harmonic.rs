//! The oscillator semigroup `e^{-tH}` in velocity, applied by quadrature of
//! the Mehler kernel.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{check_time, Result};
use crate::kernels::{time_profiles, TimeProfile};
use crate::phase_space::{strides, sub_bases, Axis, VelocityField, VelocityGrid};

/// Exponents below this are treated as exact zeros.
const NEGLIGIBLE_EXPONENT: f64 = -700.0;

/// Quadrature matrix `h K(v_i, v_j; t)` of one velocity axis, with the
/// band of non-negligible entries recorded per row.
#[derive(Debug, Clone)]
pub(crate) struct VelocityKernel {
    n: usize,
    data: Vec<f64>,
    band: Vec<(usize, usize)>,
}

impl VelocityKernel {
    pub(crate) fn new(axis: &Axis, prof: &TimeProfile) -> Self {
        let n = axis.points;
        // each row is a Gaussian in v' with standard deviation sqrt(2 tanh t)
        let width = (2.0 * prof.t.tanh()).sqrt();
        if axis.spacing() > width {
            log::warn!(
                "velocity spacing {} does not resolve the kernel width {width:.3e} at t = {}",
                axis.spacing(),
                prof.t
            );
        }
        let h_ln = axis.spacing().ln();
        let nodes = axis.nodes();
        let mut data = vec![0.0; n * n];
        let mut band = Vec::with_capacity(n);
        for i in 0..n {
            let mut lo = n;
            let mut hi = 0;
            for j in 0..n {
                let e = prof.harmonic_exponent_1d(nodes[i], nodes[j]) + h_ln;
                if e > NEGLIGIBLE_EXPONENT {
                    data[i * n + j] = e.exp();
                    lo = lo.min(j);
                    hi = j + 1;
                }
            }
            band.push(if lo < hi { (lo, hi) } else { (0, 0) });
        }
        VelocityKernel { n, data, band }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub(crate) fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, out) in y.iter_mut().enumerate() {
            let (lo, hi) = self.band[i];
            let row = &self.data[i * self.n + lo..i * self.n + hi];
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, xv) in row.iter().zip(&x[lo..hi]) {
                acc += xv * *k;
            }
            *out = acc;
        }
    }
}

/// Applies a per-axis matrix along `axis` of a row-major array, in place.
pub(crate) fn apply_along_axis(values: &mut [Complex64], shape: &[usize], axis: usize, k: &VelocityKernel) {
    let len = shape[axis];
    let stride = strides(shape)[axis];
    let bases = sub_bases(shape, &[axis]);
    let results: Vec<Vec<Complex64>> = bases
        .par_iter()
        .map(|&b| {
            let line: Vec<Complex64> = (0..len).map(|i| values[b + i * stride]).collect();
            let mut out = vec![Complex64::new(0.0, 0.0); len];
            k.apply(&line, &mut out);
            out
        })
        .collect();
    for (&b, line) in bases.iter().zip(results) {
        for (i, z) in line.into_iter().enumerate() {
            values[b + i * stride] = z;
        }
    }
}

/// Cached `e^{-tH}` for one velocity grid and one time.
#[derive(Debug, Clone)]
pub struct HarmonicPropagator {
    grid: VelocityGrid,
    t: f64,
    kernels: Vec<VelocityKernel>,
}

impl HarmonicPropagator {
    pub fn new(grid: &VelocityGrid, t: f64) -> Result<Self> {
        check_time(t)?;
        let prof = time_profiles(t)?;
        let kernels = grid.axes().iter().map(|ax| VelocityKernel::new(ax, &prof)).collect();
        Ok(HarmonicPropagator {
            grid: grid.clone(),
            t,
            kernels,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn apply(&self, g: &VelocityField) -> Result<VelocityField> {
        if g.grid() != &self.grid {
            return Err(crate::Error::grid("field grid differs from the propagator grid"));
        }
        let shape = self.grid.shape();
        let mut values = g.values().to_vec();
        for (axis, k) in self.kernels.iter().enumerate() {
            debug_assert_eq!(k.len(), shape[axis]);
            apply_along_axis(&mut values, &shape, axis, k);
        }
        Ok(VelocityField::from_parts(self.grid.clone(), values, g.is_real()))
    }
}

pub fn harmonic_step(g: &VelocityField, t: f64) -> Result<VelocityField> {
    HarmonicPropagator::new(g.grid(), t)?.apply(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::hermite_function;
    use approx::assert_relative_eq;

    fn grid() -> VelocityGrid {
        VelocityGrid::uniform(1, Axis::with_spacing(12.0, 0.05).unwrap()).unwrap()
    }

    fn err_inf(a: &VelocityField, b: &VelocityField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn ground_state_is_invariant() {
        let g = grid();
        let phi0 = VelocityField::from_fn(&g, |v| hermite_function(0, v[0]).unwrap());
        let out = harmonic_step(&phi0, 1.3).unwrap();
        assert!(err_inf(&out, &phi0) < 1e-8);
    }

    #[test]
    fn eigenfunctions_decay_at_their_rates() {
        let g = grid();
        for j in 0..=4 {
            let phi = VelocityField::from_fn(&g, |v| hermite_function(j, v[0]).unwrap());
            let out = harmonic_step(&phi, 1.0).unwrap();
            let expect = VelocityField::from_fn(&g, |v| (-(j as f64)).exp() * hermite_function(j, v[0]).unwrap());
            assert!(err_inf(&out, &expect) < 1e-7, "j={j}");
        }
    }

    #[test]
    fn tensor_eigenfunction_in_two_dimensions() {
        let g = VelocityGrid::uniform(2, Axis::with_spacing(10.0, 0.1).unwrap()).unwrap();
        let f = VelocityField::from_fn(&g, |v| {
            hermite_function(1, v[0]).unwrap() * hermite_function(2, v[1]).unwrap()
        });
        let out = harmonic_step(&f, 0.4).unwrap();
        let pair = out.pairing(&f).unwrap().re / f.pairing(&f).unwrap().re;
        assert_relative_eq!(pair, (-1.2f64).exp(), max_relative = 1e-7);
    }

    #[test]
    fn l2_contraction_and_l1_growth_bound() {
        // e^{-tH} is an L² contraction; on L¹ its norm is (e^t / cosh t)^(1/2) > 1
        let g = grid();
        let t = 0.7;
        let f = VelocityField::from_fn(&g, |v| {
            (-(v[0] - 1.0).powi(2)).exp() + 0.3 * (-(v[0] + 2.0).powi(2) * 4.0).exp()
        });
        let out = harmonic_step(&f, t).unwrap();
        assert!(out.lp_norm(2.0).unwrap() <= f.lp_norm(2.0).unwrap());
        let l1_bound = (t.exp() / t.cosh()).sqrt();
        assert!(out.lp_norm(1.0).unwrap() <= l1_bound * f.lp_norm(1.0).unwrap() * (1.0 + 1e-8));
    }

    #[test]
    fn rejects_bad_time() {
        let g = grid();
        let f = VelocityField::from_fn(&g, |v| v[0]);
        assert!(harmonic_step(&f, 0.0).is_err());
        assert!(harmonic_step(&f, f64::NAN).is_err());
    }
}
