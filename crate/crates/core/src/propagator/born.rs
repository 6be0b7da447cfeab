//! First-order Duhamel correction of the perturbed flow.
//!
//! With `P = P₀ + W` and `W = -∇V·∇_v`,
//! `e^{-tP} = e^{-tP₀} - ∫₀ᵗ e^{-(t-s)P₀} W e^{-sP} ds`, so to first order in `V`
//! `e^{-tP} f ≈ e^{-tP₀} f + ∫₀ᵗ e^{-(t-s)P₀} (∇V·∇_v) e^{-sP₀} f ds`.
//! [`born_term`] returns that integral.

use num_complex::Complex64;

use super::FreePropagator;
use crate::error::{check_time, Error, Result};
use crate::phase_space::{strides, sub_bases, Field};
use crate::potential::Potential;

/// `∇V(x)·∇_v f` with second-order centered differences, zero outside the box.
pub fn velocity_coupling(f: &Field, potential: &Potential) -> Result<Field> {
    let grid = f.grid();
    let n = grid.dim();
    if potential.dim() != n {
        return Err(Error::domain("potential dimension does not match the grid"));
    }
    let (_, nv) = grid.block_sizes();
    let vshape: Vec<usize> = (0..n).map(|j| grid.v_axis(j).points).collect();
    let vst = strides(&vshape);
    let src = f.values();
    let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
    let mut x = vec![0.0; n];
    for (ix, block) in out.chunks_mut(nv).enumerate() {
        grid.x_coords(ix, &mut x);
        let grad = potential.gradient_vec(&x);
        let line_src = &src[ix * nv..(ix + 1) * nv];
        for j in 0..n {
            if grad[j] == 0.0 {
                continue;
            }
            let scale = grad[j] / (2.0 * grid.v_axis(j).spacing());
            let len = vshape[j];
            for b in sub_bases(&vshape, &[j]) {
                for i in 0..len {
                    let up = if i + 1 < len {
                        line_src[b + (i + 1) * vst[j]]
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    let down = if i > 0 {
                        line_src[b + (i - 1) * vst[j]]
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    block[b + i * vst[j]] += (up - down) * scale;
                }
            }
        }
    }
    Ok(Field::from_parts(grid.clone(), out, f.is_real()))
}

/// Midpoint rule with `quadrature_steps` nodes, evaluated in Horner form so
/// only free steps of length `h/2` and `h` are needed.
pub fn born_term(f: &Field, t: f64, potential: &Potential, quadrature_steps: usize) -> Result<Field> {
    check_time(t)?;
    if quadrature_steps < 4 {
        return Err(Error::domain(format!(
            "born term needs at least 4 quadrature steps, got {quadrature_steps}"
        )));
    }
    if potential.is_zero() {
        return Ok(Field::zeros(f.grid()));
    }
    let h = t / quadrature_steps as f64;
    let half = FreePropagator::new(f.grid(), 0.5 * h)?;
    let full = FreePropagator::new(f.grid(), h)?;
    let mut fk = half.apply(f)?;
    let mut acc = velocity_coupling(&fk, potential)?;
    for _ in 1..quadrature_steps {
        fk = full.apply(&fk)?;
        acc = full.apply(&acc)?.try_add(&velocity_coupling(&fk, potential)?)?;
    }
    Ok(half.apply(&acc)?.scaled(h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{lp_norm, Axis, PhaseGrid};

    #[test]
    fn coupling_matches_analytic_derivative() {
        let g = PhaseGrid::uniform(1, Axis::new(6.0, 48).unwrap(), Axis::new(6.0, 240).unwrap()).unwrap();
        let pot = Potential::inverse_power(1, 0.7, 2.0).unwrap();
        let f = Field::from_fn(&g, |x, v| (-0.5 * x[0] * x[0] - 0.5 * v[0] * v[0]).exp());
        let exact = Field::from_fn(&g, |x, v| {
            pot.gradient_vec(x)[0] * (-v[0]) * (-0.5 * x[0] * x[0] - 0.5 * v[0] * v[0]).exp()
        });
        let got = velocity_coupling(&f, &pot).unwrap();
        assert!(lp_norm(&got.try_sub(&exact).unwrap(), f64::INFINITY).unwrap() < 5e-4);
    }

    #[test]
    fn zero_potential_gives_zero() {
        let g = PhaseGrid::uniform(1, Axis::new(4.0, 16).unwrap(), Axis::new(4.0, 16).unwrap()).unwrap();
        let f = Field::from_fn(&g, |x, v| (-(x[0] * x[0]) - v[0] * v[0]).exp());
        let b = born_term(&f, 1.0, &Potential::zero(1), 8).unwrap();
        assert_eq!(lp_norm(&b, f64::INFINITY).unwrap(), 0.0);
        assert!(born_term(&f, 1.0, &Potential::zero(1), 3).is_err());
    }

    #[test]
    fn linear_in_the_coupling() {
        let g = PhaseGrid::uniform(1, Axis::new(8.0, 64).unwrap(), Axis::new(8.0, 64).unwrap()).unwrap();
        let f = Field::from_fn(&g, |x, v| (-0.5 * x[0] * x[0] - 0.3 * (v[0] - 1.0).powi(2)).exp());
        let a = born_term(&f, 0.5, &Potential::inverse_power(1, 0.1, 2.0).unwrap(), 8).unwrap();
        let b = born_term(&f, 0.5, &Potential::inverse_power(1, 0.3, 2.0).unwrap(), 8).unwrap();
        let diff = b.try_sub(&a.scaled(3.0)).unwrap();
        assert!(lp_norm(&diff, 2.0).unwrap() < 1e-12 * lp_norm(&b, 2.0).unwrap());
    }
}
