//! The free semigroup `e^{-tP₀}` with two backends.
//!
//! Fourier backend: after the FFT in `x_j`, each wave number `ξ` sees the
//! velocity operator `e^{-σξ²} A_ξ K A_ξ` with `A_ξ = diag(e^{-iωξv})`, applied
//! one coordinate pair `(x_j, v_j)` at a time. Direct backend (n = 1 only):
//! quadrature of the kernel itself, periodic in `x`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::harmonic::VelocityKernel;
use crate::error::{check_time, Error, Result};
use crate::kernels::{time_profiles, TimeProfile};
use crate::phase_space::{strides, sub_bases, wave_number, Field, PhaseGrid};

/// Wave numbers whose damping factor falls below this are dropped.
const DAMPING_CUTOFF: f64 = 1e-20;
/// Kernel exponents below this contribute nothing in double precision.
const KERNEL_CUTOFF: f64 = -60.0;

struct CoordinatePlan {
    nx: usize,
    nv: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kernel: VelocityKernel,
    damping: Vec<f64>,
    /// `e^{-iωξ_k v_i}`, row `k`.
    phase: Vec<Complex64>,
}

impl CoordinatePlan {
    fn new(grid: &PhaseGrid, j: usize, prof: &TimeProfile, planner: &mut FftPlanner<f64>) -> Self {
        let xa = grid.x_axis(j);
        let va = grid.v_axis(j);
        let (nx, nv) = (xa.points, va.points);
        let vnodes = va.nodes();
        let mut damping = Vec::with_capacity(nx);
        let mut phase = Vec::with_capacity(nx * nv);
        for k in 0..nx {
            let xi = wave_number(k, nx, xa.half_width);
            let d = (-prof.sigma * xi * xi).exp();
            damping.push(if d < DAMPING_CUTOFF { 0.0 } else { d });
            phase.extend(vnodes.iter().map(|&v| Complex64::from_polar(1.0, -prof.omega * xi * v)));
        }
        CoordinatePlan {
            nx,
            nv,
            fwd: planner.plan_fft_forward(nx),
            inv: planner.plan_fft_inverse(nx),
            kernel: VelocityKernel::new(va, prof),
            damping,
            phase,
        }
    }

    fn apply_row(&self, k: usize, row: &mut [Complex64]) {
        let d = self.damping[k];
        if d == 0.0 {
            row.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            return;
        }
        let a = &self.phase[k * self.nv..(k + 1) * self.nv];
        let mut w: Vec<Complex64> = row.iter().zip(a).map(|(z, p)| z * p).collect();
        let mut y = vec![Complex64::new(0.0, 0.0); self.nv];
        self.kernel.apply(&w, &mut y);
        if k == self.nx / 2 {
            // Nyquist slot stands for both ±ξ; average them so real input stays real
            let mut y2 = vec![Complex64::new(0.0, 0.0); self.nv];
            for (wi, (z, p)) in w.iter_mut().zip(row.iter().zip(a)) {
                *wi = z * p.conj();
            }
            self.kernel.apply(&w, &mut y2);
            for (i, out) in row.iter_mut().enumerate() {
                *out = (a[i] * y[i] + a[i].conj() * y2[i]) * (0.5 * d);
            }
        } else {
            for (i, out) in row.iter_mut().enumerate() {
                *out = a[i] * y[i] * d;
            }
        }
    }

    /// Applies the step to one `(x_j, v_j)` plane stored `[x][v]`.
    fn apply_plane(&self, buf: &mut [Complex64], parallel: bool) {
        let (nx, nv) = (self.nx, self.nv);
        let mut tmp = vec![Complex64::new(0.0, 0.0); nx * nv];
        transpose(buf, &mut tmp, nx, nv);
        fft_rows(&mut tmp, nx, &self.fwd, parallel);
        transpose(&tmp, buf, nv, nx);
        if parallel {
            buf.par_chunks_mut(nv)
                .enumerate()
                .for_each(|(k, row)| self.apply_row(k, row));
        } else {
            buf.chunks_mut(nv)
                .enumerate()
                .for_each(|(k, row)| self.apply_row(k, row));
        }
        transpose(buf, &mut tmp, nx, nv);
        fft_rows(&mut tmp, nx, &self.inv, parallel);
        transpose(&tmp, buf, nv, nx);
        let scale = 1.0 / nx as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

fn fft_rows(buf: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>, parallel: bool) {
    let run = |chunk: &mut [Complex64]| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    };
    if parallel {
        let per_task = (8192 / len).max(1) * len;
        buf.par_chunks_mut(per_task).for_each(run);
    } else {
        run(buf);
    }
}

/// Cached Fourier-backend `e^{-tP₀}` for one grid and one time.
pub struct FreePropagator {
    grid: PhaseGrid,
    profile: TimeProfile,
    coords: Vec<CoordinatePlan>,
    warned: AtomicBool,
}

impl std::fmt::Debug for FreePropagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FreePropagator")
            .field("grid", &self.grid)
            .field("profile", &self.profile)
            .finish()
    }
}

impl FreePropagator {
    pub fn new(grid: &PhaseGrid, t: f64) -> Result<Self> {
        check_time(t)?;
        let profile = time_profiles(t)?;
        let mut planner = FftPlanner::new();
        let coords = (0..grid.dim())
            .map(|j| CoordinatePlan::new(grid, j, &profile, &mut planner))
            .collect();
        Ok(FreePropagator {
            grid: grid.clone(),
            profile,
            coords,
            warned: AtomicBool::new(false),
        })
    }

    pub fn time(&self) -> f64 {
        self.profile.t
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if f.grid() != &self.grid {
            return Err(Error::grid("field grid differs from the propagator grid"));
        }
        warn_on_leakage(f, &self.warned);
        let n = self.grid.dim();
        let shape = self.grid.shape();
        let st = strides(&shape);
        let mut values = f.values().to_vec();
        for (j, plan) in self.coords.iter().enumerate() {
            if n == 1 {
                plan.apply_plane(&mut values, true);
                continue;
            }
            let (sx, sv) = (st[j], st[n + j]);
            let bases = sub_bases(&shape, &[j, n + j]);
            let planes: Vec<Vec<Complex64>> = bases
                .par_iter()
                .map(|&b| {
                    let mut buf = Vec::with_capacity(plan.nx * plan.nv);
                    for ix in 0..plan.nx {
                        for iv in 0..plan.nv {
                            buf.push(values[b + ix * sx + iv * sv]);
                        }
                    }
                    plan.apply_plane(&mut buf, false);
                    buf
                })
                .collect();
            for (&b, buf) in bases.iter().zip(planes) {
                for ix in 0..plan.nx {
                    for iv in 0..plan.nv {
                        values[b + ix * sx + iv * sv] = buf[ix * plan.nv + iv];
                    }
                }
            }
        }
        Ok(Field::from_parts(self.grid.clone(), values, f.is_real()))
    }
}

/// Warns at most once per propagator; repeated steps would otherwise flood the log.
fn warn_on_leakage(f: &Field, warned: &AtomicBool) {
    if warned.load(Ordering::Relaxed) {
        return;
    }
    let leak = f.x_boundary_leakage();
    if leak > 1e-12 && !warned.swap(true, Ordering::Relaxed) {
        log::warn!("field reaches {leak:.2e} of its maximum on the x boundary; periodic wrap-around is not negligible");
    }
}

pub fn free_step_fourier(f: &Field, t: f64) -> Result<Field> {
    FreePropagator::new(f.grid(), t)?.apply(f)
}

/// `∫ Λ(z) N(z; μ, τ²) dz` with `Λ` the unit hat on `[-1, 1]`.
fn hat_weight(mu: f64, tau: f64) -> f64 {
    let phi = |b: f64| (-0.5 * b * b).exp() / (2.0 * PI).sqrt();
    // Φ(b) - Φ(a) from whichever tail keeps it accurate
    let cdf_diff = |a: f64, b: f64| {
        let c = |z: f64| 0.5 * libm::erfc(z / SQRT_2);
        if a >= 0.0 {
            c(a) - c(b)
        } else if b <= 0.0 {
            c(-b) - c(-a)
        } else {
            1.0 - c(-a) - c(b)
        }
    };
    let piece = |l: f64, u: f64, alpha: f64, beta: f64| {
        let (bl, bu) = ((l - mu) / tau, (u - mu) / tau);
        (alpha + beta * mu) * cdf_diff(bl, bu) + beta * tau * (phi(bl) - phi(bu))
    };
    (piece(-1.0, 0.0, 1.0, 1.0) + piece(0.0, 1.0, 1.0, -1.0)).max(0.0)
}

/// Source velocity `jv` contributes `Σ_d weights[d - lo] f(x_{i-d}, v_jv)`.
#[derive(Debug, Clone)]
struct PairTable {
    jv: usize,
    lo: i64,
    weights: Vec<f64>,
}

/// Cached direct-backend `e^{-tP₀}`, `n = 1` only.
///
/// Velocity uses the trapezoid rule. In `x`, the kernel is sampled with the
/// trapezoid rule while its width `sqrt(2σ)` is at least `h_x`; below that it
/// is integrated exactly against the piecewise-linear interpolant of the data,
/// which keeps every weight non-negative.
#[derive(Debug)]
pub struct DirectPropagator {
    grid: PhaseGrid,
    profile: TimeProfile,
    rows: Vec<Vec<PairTable>>,
    warned: AtomicBool,
}

impl DirectPropagator {
    pub fn new(grid: &PhaseGrid, t: f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::capability("the direct kernel backend is limited to n = 1"));
        }
        let prof = time_profiles(t)?;
        let (xa, va) = (*grid.x_axis(0), *grid.v_axis(0));
        let nx = xa.points as i64;
        let (hx, hv) = (xa.spacing(), va.spacing());
        let vnodes = va.nodes();
        let width = (2.0 * prof.sigma).sqrt();
        let resolved = width >= hx;
        let tau = width / hx;
        let reach = ((-KERNEL_CUTOFF) * 4.0 * prof.sigma).sqrt() / hx;
        let half = (reach.ceil() as i64 + 1).min(nx / 2);

        let rows = vnodes
            .par_iter()
            .map(|&v| {
                let mut row = Vec::new();
                for (jv, &vp) in vnodes.iter().enumerate() {
                    let ev = prof.harmonic_exponent_1d(v, vp);
                    if ev < KERNEL_CUTOFF {
                        continue;
                    }
                    let vw = hv * ev.exp();
                    let s = prof.omega * (v + vp);
                    let (lo, hi, weights) = if resolved {
                        let center = (s / hx).round() as i64;
                        let (lo, hi) = if 2 * half + 1 >= nx {
                            (center - nx / 2, center + nx / 2)
                        } else {
                            (center - half, center + half + 1)
                        };
                        let w = (lo..hi)
                            .map(|d| (prof.free_exponent_1d(d as f64 * hx, v, 0.0, vp) + (hx * hv).ln()).exp())
                            .collect::<Vec<_>>();
                        (lo, hi, w)
                    } else {
                        let mu0 = s / hx;
                        let lo = (mu0 - 1.0 - 12.0 * tau).floor() as i64;
                        let hi = ((mu0 + 1.0 + 12.0 * tau).ceil() as i64 + 1).min(lo + nx);
                        let w = (lo..hi).map(|d| vw * hat_weight(d as f64 - mu0, tau)).collect();
                        (lo, hi, w)
                    };
                    debug_assert_eq!(weights.len() as i64, hi - lo);
                    row.push(PairTable { jv, lo, weights });
                }
                row
            })
            .collect();
        Ok(DirectPropagator {
            grid: grid.clone(),
            profile: prof,
            rows,
            warned: AtomicBool::new(false),
        })
    }

    pub fn time(&self) -> f64 {
        self.profile.t
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if f.grid() != &self.grid {
            return Err(Error::grid("field grid differs from the propagator grid"));
        }
        warn_on_leakage(f, &self.warned);
        let nx = self.grid.x_axis(0).points;
        let nv = self.grid.v_axis(0).points;
        // f stored [v'][x] so each source column is contiguous
        let mut ft = vec![Complex64::new(0.0, 0.0); f.values().len()];
        transpose(f.values(), &mut ft, nx, nv);

        let columns: Vec<Vec<Complex64>> = self
            .rows
            .par_iter()
            .map(|row| {
                let mut col = vec![Complex64::new(0.0, 0.0); nx];
                for pt in row {
                    let src = &ft[pt.jv * nx..(pt.jv + 1) * nx];
                    for (i, out) in col.iter_mut().enumerate() {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (k, w) in pt.weights.iter().enumerate() {
                            let j = (i as i64 - pt.lo - k as i64).rem_euclid(nx as i64) as usize;
                            acc += src[j] * *w;
                        }
                        *out += acc;
                    }
                }
                col
            })
            .collect();
        let mut values = vec![Complex64::new(0.0, 0.0); f.values().len()];
        for (iv, col) in columns.iter().enumerate() {
            for (ix, z) in col.iter().enumerate() {
                values[ix * nv + iv] = *z;
            }
        }
        Ok(Field::from_parts(self.grid.clone(), values, f.is_real()))
    }
}

pub fn free_step_direct(f: &Field, t: f64) -> Result<Field> {
    DirectPropagator::new(f.grid(), t)?.apply(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{free_kernel, maxwellian_sqrt, KernelPoint};
    use crate::phase_space::{lp_norm, Axis};
    use crate::potential::Potential;

    fn rel_l2(a: &Field, b: &Field) -> f64 {
        lp_norm(&a.try_sub(b).unwrap(), 2.0).unwrap() / lp_norm(b, 2.0).unwrap()
    }

    fn smooth(grid: &PhaseGrid) -> Field {
        Field::from_fn(grid, |x, v| {
            (-(x[0] - 0.5).powi(2) - 0.3 * (v[0] + 0.4).powi(2)).exp() * (1.0 + 0.2 * (1.3 * x[0]).sin())
        })
    }

    #[test]
    fn maxwellian_is_stationary() {
        let g = PhaseGrid::uniform(1, Axis::new(16.0, 256).unwrap(), Axis::new(10.0, 160).unwrap()).unwrap();
        let m = Field::from_fn(&g, |x, v| maxwellian_sqrt(x, v, &Potential::zero(1)).unwrap());
        let out = free_step_fourier(&m, 0.7).unwrap();
        assert!(rel_l2(&out, &m) < 1e-6);
    }

    #[test]
    fn backends_agree() {
        let g = PhaseGrid::uniform(1, Axis::new(8.0, 512).unwrap(), Axis::new(8.0, 64).unwrap()).unwrap();
        let f = smooth(&g);
        for t in [0.2, 1.0] {
            let a = free_step_fourier(&f, t).unwrap();
            let b = free_step_direct(&f, t).unwrap();
            assert!(rel_l2(&b, &a) < 1e-6, "t={t}: {}", rel_l2(&b, &a));
        }
    }

    #[test]
    fn spike_reproduces_kernel_slice() {
        let g = PhaseGrid::uniform(1, Axis::new(6.0, 256).unwrap(), Axis::new(6.0, 64).unwrap()).unwrap();
        let (i0, j0) = (128usize, 40usize);
        let mut vals = vec![0.0; g.len()];
        vals[i0 * 64 + j0] = 1.0;
        let spike = Field::from_real(&g, &vals).unwrap();
        let t = 1.0;
        let out = free_step_direct(&spike, t).unwrap();
        let (x0, v0) = (g.x_axis(0).node(i0), g.v_axis(0).node(j0));
        let cell = g.cell_volume();
        for &(i, j) in &[(128usize, 32usize), (140, 40), (110, 20)] {
            let (x, v) = (g.x_axis(0).node(i), g.v_axis(0).node(j));
            let k = free_kernel(&KernelPoint::new(vec![x], vec![v], vec![x0], vec![v0], t).unwrap()).unwrap();
            let got = out.values()[i * 64 + j].re;
            assert!((got - k * cell).abs() <= 1e-12 + 1e-10 * k * cell);
        }
    }

    #[test]
    fn short_time_continuity() {
        // the velocity kernel has width sqrt(2 tanh t) ≈ 0.045, so the grid must resolve it
        let g = PhaseGrid::uniform(1, Axis::new(8.0, 128).unwrap(), Axis::new(8.0, 512).unwrap()).unwrap();
        let f = smooth(&g);
        assert!(rel_l2(&free_step_fourier(&f, 1e-3).unwrap(), &f) < 0.02);
    }

    #[test]
    fn tensor_application_matches_product_in_two_dimensions() {
        let g1 = PhaseGrid::uniform(1, Axis::new(6.0, 64).unwrap(), Axis::new(6.0, 32).unwrap()).unwrap();
        let g2 = PhaseGrid::uniform(2, Axis::new(6.0, 64).unwrap(), Axis::new(6.0, 32).unwrap()).unwrap();
        let a = |x: f64, v: f64| (-(x - 0.3).powi(2) - 0.5 * v * v).exp();
        let b = |x: f64, v: f64| (-0.7 * x * x - 0.4 * (v - 1.0).powi(2)).exp();
        let fa = free_step_fourier(&Field::from_fn(&g1, |x, v| a(x[0], v[0])), 0.6).unwrap();
        let fb = free_step_fourier(&Field::from_fn(&g1, |x, v| b(x[0], v[0])), 0.6).unwrap();
        let f2 = free_step_fourier(&Field::from_fn(&g2, |x, v| a(x[0], v[0]) * b(x[1], v[1])), 0.6).unwrap();
        // layout (x1, x2, v1, v2)
        let mut worst = 0.0f64;
        for i1 in 0..64 {
            for i2 in 0..64 {
                for j1 in 0..32 {
                    for j2 in 0..32 {
                        let prod = fa.values()[i1 * 32 + j1] * fb.values()[i2 * 32 + j2];
                        let got = f2.values()[((i1 * 64 + i2) * 32 + j1) * 32 + j2];
                        worst = worst.max((prod - got).norm());
                    }
                }
            }
        }
        assert!(worst < 1e-13, "{worst}");
    }

    fn hat_weight_by_quadrature(mu: f64, tau: f64) -> f64 {
        // composite Simpson on [-1, 1] with a kink-aligned split at 0
        let dens = |z: f64| (-0.5 * ((z - mu) / tau).powi(2)).exp() / (tau * (2.0 * std::f64::consts::PI).sqrt());
        let simpson = |a: f64, b: f64, g: &dyn Fn(f64) -> f64| {
            let m = 20000;
            let h = (b - a) / m as f64;
            let mut acc = g(a) + g(b);
            for k in 1..m {
                acc += g(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        simpson(-1.0, 0.0, &|z| (1.0 + z) * dens(z)) + simpson(0.0, 1.0, &|z| (1.0 - z) * dens(z))
    }

    #[test]
    fn hat_weights_match_quadrature_and_partition_unity() {
        for &(mu, tau) in &[(0.0, 0.3), (0.4, 0.05), (-0.9, 0.8), (1.5, 0.4), (3.0, 1.2)] {
            let w = hat_weight(mu, tau);
            assert!(
                (w - hat_weight_by_quadrature(mu, tau)).abs() < 1e-10,
                "mu={mu} tau={tau}"
            );
        }
        for &(frac, tau) in &[(0.0, 0.01), (0.37, 0.2), (0.81, 1.7)] {
            let sum: f64 = (-40..=40).map(|d| hat_weight(d as f64 - frac, tau)).sum();
            assert!((sum - 1.0).abs() < 1e-13);
        }
        // vanishing width reduces to linear interpolation
        assert!((hat_weight(0.3, 1e-9) - 0.7).abs() < 1e-12);
        assert!(hat_weight(6.0, 0.1) >= 0.0);
    }

    #[test]
    fn direct_backend_is_positive_at_short_times() {
        let g = PhaseGrid::uniform(1, Axis::new(8.0, 128).unwrap(), Axis::new(8.0, 128).unwrap()).unwrap();
        let f = Field::from_fn(&g, |x, v| {
            if x[0].abs() < 1.0 && v[0] > -0.5 {
                (1.0 - x[0].abs()) * (-v[0] * v[0]).exp()
            } else {
                0.0
            }
        });
        for t in [1e-3, 0.01, 0.05] {
            let out = free_step_direct(&f, t).unwrap();
            assert!(out.min_real() >= 0.0, "t={t}: {}", out.min_real());
        }
    }

    #[test]
    fn backends_agree_at_short_times() {
        // shifts ω(v + v') below h_x make the interpolation error ~ s h_x f''/2, first order in h_x
        let gap = |nx: usize| {
            let g = PhaseGrid::uniform(1, Axis::new(8.0, nx).unwrap(), Axis::new(8.0, 256).unwrap()).unwrap();
            let f = smooth(&g);
            let a = free_step_fourier(&f, 0.01).unwrap();
            rel_l2(&free_step_direct(&f, 0.01).unwrap(), &a)
        };
        let (coarse, fine) = (gap(128), gap(256));
        assert!(fine < 1e-3 && coarse / fine > 1.8, "{coarse} {fine}");
    }

    #[test]
    fn direct_backend_refuses_higher_dimensions() {
        let g = PhaseGrid::uniform(2, Axis::new(4.0, 16).unwrap(), Axis::new(4.0, 16).unwrap()).unwrap();
        assert!(matches!(
            free_step_direct(&Field::zeros(&g), 0.5),
            Err(Error::Capability(_))
        ));
    }
}
