//! Partial Fourier transform in the position variables.
//!
//! Convention: `û(ξ, v) = h Σ_j exp(-i ξ x_j) u(x_j, v)` with `ξ_k = π k / L`
//! and signed `k` in `[-N/2, N/2)`; coefficients are stored in FFT order.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::{strides, sub_bases, Field, PhaseGrid};
use crate::error::Result;

/// Signed wave number `π k / L` of FFT slot `k`.
pub(crate) fn wave_number(k: usize, points: usize, half_width: f64) -> f64 {
    let signed = if k < points / 2 {
        k as f64
    } else {
        k as f64 - points as f64
    };
    std::f64::consts::PI * signed / half_width
}

/// Runs `fft` over every line along `axis`, in place.
pub(crate) fn fft_along_axis(values: &mut [Complex64], shape: &[usize], axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let len = shape[axis];
    let stride = strides(shape)[axis];
    let bases = sub_bases(shape, &[axis]);
    let mut lines = vec![Complex64::new(0.0, 0.0); bases.len() * len];
    for (line, &b) in lines.chunks_mut(len).zip(&bases) {
        for (k, z) in line.iter_mut().enumerate() {
            *z = values[b + k * stride];
        }
    }
    let per_task = (4096 / len).max(1) * len;
    lines.par_chunks_mut(per_task).for_each(|chunk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
    for (line, &b) in lines.chunks(len).zip(&bases) {
        for (k, z) in line.iter().enumerate() {
            values[b + k * stride] = *z;
        }
    }
}

/// A field transformed in all position coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    grid: PhaseGrid,
    values: Vec<Complex64>,
    real_source: bool,
}

impl FourierField {
    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Wave number of slot `k` on position axis `j`.
    pub fn xi(&self, j: usize, k: usize) -> f64 {
        let ax = self.grid.x_axis(j);
        wave_number(k, ax.points, ax.half_width)
    }

    pub fn inverse(&self) -> Field {
        let grid = &self.grid;
        let shape = grid.shape();
        let mut values = self.values.clone();
        let mut planner = FftPlanner::new();
        for j in 0..grid.dim() {
            let ax = *grid.x_axis(j);
            let fft = planner.plan_fft_inverse(ax.points);
            phase_along(&mut values, &shape, j, |k| {
                let xi = wave_number(k, ax.points, ax.half_width);
                Complex64::from_polar(1.0 / (2.0 * ax.half_width), -xi * ax.half_width)
            });
            fft_along_axis(&mut values, &shape, j, &fft);
        }
        Field::from_parts(grid.clone(), values, self.real_source)
    }
}

fn phase_along(values: &mut [Complex64], shape: &[usize], axis: usize, factor: impl Fn(usize) -> Complex64) {
    let st = strides(shape);
    let len = shape[axis];
    let factors: Vec<Complex64> = (0..len).map(factor).collect();
    values.iter_mut().enumerate().for_each(|(i, z)| {
        *z *= factors[(i / st[axis]) % len];
    });
}

pub fn partial_fourier_x(f: &Field) -> Result<FourierField> {
    let grid = f.grid();
    let shape = grid.shape();
    let mut values = f.values().to_vec();
    let mut planner = FftPlanner::new();
    for j in 0..grid.dim() {
        let ax = *grid.x_axis(j);
        let fft = planner.plan_fft_forward(ax.points);
        fft_along_axis(&mut values, &shape, j, &fft);
        // exp(-i ξ x_j) = exp(i ξ L) exp(-2πi k j / N)
        let h = ax.spacing();
        phase_along(&mut values, &shape, j, |k| {
            let xi = wave_number(k, ax.points, ax.half_width);
            Complex64::from_polar(h, xi * ax.half_width)
        });
    }
    Ok(FourierField {
        grid: grid.clone(),
        values,
        real_source: f.is_real(),
    })
}
