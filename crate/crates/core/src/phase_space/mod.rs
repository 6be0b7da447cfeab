//! Uniform tensor grids on a truncated `(x, v)` box and the fields sampled on them.
//!
//! Every axis is the node set `-L + j h`, `j = 0..N`, `h = 2L/N`, which is
//! periodic-compatible (the FFT in `x` sees it as one period) and symmetric
//! under `j -> (N - j) mod N`. Storage is row-major with axes ordered
//! `x_1..x_n, v_1..v_n`, so the last velocity axis is contiguous.

mod fourier;
mod io;

pub(crate) use fourier::wave_number;
pub use fourier::{partial_fourier_x, FourierField};
pub(crate) use io::write_atomic;
pub use io::{read_field, read_field_csv, write_field, write_field_csv};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::check_dim;

/// Dense fields larger than this are refused before allocation.
pub const MAX_CELLS: usize = 1 << 28;
/// Smallest admissible number of nodes on an axis.
pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub half_width: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        let ax = Axis { half_width, points };
        ax.validate()?;
        Ok(ax)
    }

    /// Axis with the requested spacing, rounding the node count up to an even number.
    pub fn with_spacing(half_width: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::grid(format!("invalid spacing {spacing}")));
        }
        let mut points = (2.0 * half_width / spacing).round() as usize;
        points += points % 2;
        Axis::new(half_width, points)
    }

    fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::grid(format!("invalid half width {}", self.half_width)));
        }
        if self.points < MIN_POINTS || self.points % 2 != 0 {
            return Err(Error::grid(format!(
                "axis needs an even number of at least {MIN_POINTS} points, got {}",
                self.points
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.node(j)).collect()
    }

    /// Index of the mirror node `-v`; node 0 (`-L`) is its own mirror.
    #[inline]
    pub fn mirror(&self, j: usize) -> usize {
        (self.points - j) % self.points
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Flat offsets of every element whose indices along `fixed` axes are zero.
pub(crate) fn sub_bases(shape: &[usize], fixed: &[usize]) -> Vec<usize> {
    let st = strides(shape);
    let free: Vec<usize> = (0..shape.len()).filter(|a| !fixed.contains(a)).collect();
    let count: usize = free.iter().map(|&a| shape[a]).product();
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; free.len()];
    for _ in 0..count {
        out.push(free.iter().zip(&idx).map(|(&a, &i)| i * st[a]).sum());
        for k in (0..free.len()).rev() {
            idx[k] += 1;
            if idx[k] < shape[free[k]] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

fn check_cells(axes: &[Axis]) -> Result<usize> {
    axes.iter().try_fold(1usize, |acc, ax| {
        acc.checked_mul(ax.points)
            .filter(|&c| c <= MAX_CELLS)
            .ok_or_else(|| Error::capability(format!("grid exceeds the dense-field limit of {MAX_CELLS} cells")))
    })
}

/// Phase-space grid with axes `x_1..x_n, v_1..v_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    n: usize,
    axes: Vec<Axis>,
}

impl PhaseGrid {
    pub fn new(n: usize, axes: Vec<Axis>) -> Result<Self> {
        check_dim(n)?;
        if axes.len() != 2 * n {
            return Err(Error::grid(format!("expected {} axes, got {}", 2 * n, axes.len())));
        }
        for ax in &axes {
            ax.validate()?;
        }
        check_cells(&axes)?;
        Ok(PhaseGrid { n, axes })
    }

    /// Same `x` axis for every position coordinate and same `v` axis for every velocity.
    pub fn uniform(n: usize, x: Axis, v: Axis) -> Result<Self> {
        let mut axes = vec![x; n];
        axes.extend(std::iter::repeat(v).take(n));
        PhaseGrid::new(n, axes)
    }

    /// Cell count a uniform grid would have, without allocating anything.
    pub fn cells_for(n: usize, x_points: usize, v_points: usize) -> Option<usize> {
        x_points
            .checked_pow(n as u32)?
            .checked_mul(v_points.checked_pow(n as u32)?)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn x_axis(&self, j: usize) -> &Axis {
        &self.axes[j]
    }

    pub fn v_axis(&self, j: usize) -> &Axis {
        &self.axes[self.n + j]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|a| 2.0 * a.half_width).product()
    }

    pub fn velocity_grid(&self) -> VelocityGrid {
        VelocityGrid {
            axes: self.axes[self.n..].to_vec(),
        }
    }

    /// Number of points in the position block and in the velocity block.
    pub(crate) fn block_sizes(&self) -> (usize, usize) {
        let nx = self.axes[..self.n].iter().map(|a| a.points).product();
        let nv = self.axes[self.n..].iter().map(|a| a.points).product();
        (nx, nv)
    }

    /// Position coordinates of flat position-block index `ix`.
    pub(crate) fn x_coords(&self, mut ix: usize, out: &mut [f64]) {
        for j in (0..self.n).rev() {
            let ax = &self.axes[j];
            out[j] = ax.node(ix % ax.points);
            ix /= ax.points;
        }
    }

    pub(crate) fn v_coords(&self, mut iv: usize, out: &mut [f64]) {
        for j in (0..self.n).rev() {
            let ax = &self.axes[self.n + j];
            out[j] = ax.node(iv % ax.points);
            iv /= ax.points;
        }
    }
}

/// Velocity-only grid for the oscillator semigroup and the spectral checks.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    axes: Vec<Axis>,
}

impl VelocityGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        check_dim(axes.len())?;
        for ax in &axes {
            ax.validate()?;
        }
        check_cells(&axes)?;
        Ok(VelocityGrid { axes })
    }

    pub fn uniform(n: usize, axis: Axis) -> Result<Self> {
        VelocityGrid::new(vec![axis; n])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    pub(crate) fn coords(&self, mut iv: usize, out: &mut [f64]) {
        for j in (0..self.axes.len()).rev() {
            let ax = &self.axes[j];
            out[j] = ax.node(iv % ax.points);
            iv /= ax.points;
        }
    }
}

fn lp_of(values: &[Complex64], cell: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::domain(format!("norm exponent must lie in [1, inf], got {p}")));
    }
    if p.is_infinite() {
        return Ok(values.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    if p == 1.0 {
        return Ok(values.iter().map(|z| z.norm()).sum::<f64>() * cell);
    }
    if p == 2.0 {
        return Ok((values.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell).sqrt());
    }
    let s: f64 = values.iter().map(|z| z.norm().powf(p)).sum();
    Ok((s * cell).powf(1.0 / p))
}

fn pairing_of(f: &[Complex64], g: &[Complex64], cell: f64) -> Complex64 {
    f.iter().zip(g).map(|(a, b)| a.conj() * b).sum::<Complex64>() * cell
}

/// A complex distribution sampled on a [`PhaseGrid`]; real fields carry a tag
/// and keep a zero imaginary part through real-preserving operations.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: PhaseGrid,
    values: Vec<Complex64>,
    real: bool,
}

impl Field {
    pub fn zeros(grid: &PhaseGrid) -> Self {
        Field {
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            grid: grid.clone(),
            real: true,
        }
    }

    pub fn from_values(grid: &PhaseGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::grid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("field values must be finite"));
        }
        let real = values.iter().all(|z| z.im == 0.0);
        Ok(Field {
            grid: grid.clone(),
            values,
            real,
        })
    }

    pub fn from_real(grid: &PhaseGrid, values: &[f64]) -> Result<Self> {
        Field::from_values(grid, values.iter().map(|&r| Complex64::new(r, 0.0)).collect())
    }

    /// Samples a real function of `(x, v)` on the grid.
    pub fn from_fn(grid: &PhaseGrid, f: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> Self {
        let mut field = Field::from_fn_complex(grid, |x, v| Complex64::new(f(x, v), 0.0));
        field.real = true;
        field
    }

    pub fn from_fn_complex(grid: &PhaseGrid, f: impl Fn(&[f64], &[f64]) -> Complex64 + Sync) -> Self {
        use rayon::prelude::*;
        let n = grid.dim();
        let (_, nv) = grid.block_sizes();
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        values.par_chunks_mut(nv).enumerate().for_each(|(ix, row)| {
            let mut x = vec![0.0; n];
            let mut v = vec![0.0; n];
            grid.x_coords(ix, &mut x);
            for (iv, out) in row.iter_mut().enumerate() {
                grid.v_coords(iv, &mut v);
                *out = f(&x, &v);
            }
        });
        let real = values.iter().all(|z| z.im == 0.0);
        Field {
            grid: grid.clone(),
            values,
            real,
        }
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    /// Smallest real part over the grid.
    pub fn min_real(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn from_parts(grid: PhaseGrid, values: Vec<Complex64>, real: bool) -> Self {
        let mut f = Field { grid, values, real };
        if real {
            f.values.iter_mut().for_each(|z| z.im = 0.0);
        }
        f
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| z * a).collect(),
            real: self.real,
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.same_grid(other)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x * a + y * b)
                .collect(),
            real: self.real && other.real,
        })
    }

    pub fn try_add(&self, other: &Field) -> Result<Field> {
        self.combine(1.0, other, 1.0)
    }

    pub fn try_sub(&self, other: &Field) -> Result<Field> {
        self.combine(1.0, other, -1.0)
    }

    pub(crate) fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::grid("fields live on different grids"));
        }
        Ok(())
    }

    /// Largest modulus on the outermost `x` nodes relative to the global maximum.
    pub fn x_boundary_leakage(&self) -> f64 {
        let shape = self.grid.shape();
        let st = strides(&shape);
        let max = lp_of(&self.values, 1.0, f64::INFINITY).unwrap_or(0.0);
        if max == 0.0 {
            return 0.0;
        }
        let mut edge = 0.0f64;
        for j in 0..self.grid.dim() {
            let last = (shape[j] - 1) * st[j];
            for base in sub_bases(&shape, &[j]) {
                edge = edge.max(self.values[base].norm()).max(self.values[base + last].norm());
            }
        }
        edge / max
    }

    /// Integral over all position coordinates, as a velocity field.
    pub fn x_marginal(&self) -> VelocityField {
        let (nx, nv) = self.grid.block_sizes();
        let hx: f64 = (0..self.grid.dim()).map(|j| self.grid.x_axis(j).spacing()).product();
        let mut out = vec![Complex64::new(0.0, 0.0); nv];
        for ix in 0..nx {
            for (o, z) in out.iter_mut().zip(&self.values[ix * nv..(ix + 1) * nv]) {
                *o += z;
            }
        }
        out.iter_mut().for_each(|z| *z *= hx);
        VelocityField::from_parts(self.grid.velocity_grid(), out, self.real)
    }
}

/// `(Σ |f|^p cellvol)^(1/p)`; `p = inf` gives the grid maximum, a lower bound
/// of the continuum sup-norm.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    lp_of(&f.values, f.grid.cell_volume(), p)
}

/// L² norm with weight `<x>^(2s)`.
pub fn weighted_l2s_norm(f: &Field, s: f64) -> f64 {
    let grid = &f.grid;
    let (nx, nv) = grid.block_sizes();
    let mut x = vec![0.0; grid.dim()];
    let mut total = 0.0;
    for ix in 0..nx {
        grid.x_coords(ix, &mut x);
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let w = if s == 0.0 { 1.0 } else { (1.0 + r2).powf(s) };
        let row: f64 = f.values[ix * nv..(ix + 1) * nv].iter().map(|z| z.norm_sqr()).sum();
        total += w * row;
    }
    (total * grid.cell_volume()).sqrt()
}

/// `Σ conj(f) g cellvol`.
pub fn pairing(f: &Field, g: &Field) -> Result<Complex64> {
    f.same_grid(g)?;
    Ok(pairing_of(&f.values, &g.values, f.grid.cell_volume()))
}

/// Velocity reflection `J f(x, v) = f(x, -v)`.
pub fn reflect_v(f: &Field) -> Result<Field> {
    let grid = &f.grid;
    let n = grid.dim();
    let (nx, nv) = grid.block_sizes();
    let vgrid = grid.velocity_grid();
    let vshape = vgrid.shape();
    let vst = strides(&vshape);
    let mirror: Vec<usize> = (0..nv)
        .map(|iv| {
            let mut rest = iv;
            let mut out = 0;
            for j in (0..n).rev() {
                let ax = &vgrid.axes[j];
                let i = rest % ax.points;
                rest /= ax.points;
                out += ax.mirror(i) * vst[j];
            }
            out
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); f.values.len()];
    for ix in 0..nx {
        let src = &f.values[ix * nv..(ix + 1) * nv];
        let dst = &mut values[ix * nv..(ix + 1) * nv];
        for (iv, &m) in mirror.iter().enumerate() {
            dst[iv] = src[m];
        }
    }
    Ok(Field {
        grid: grid.clone(),
        values,
        real: f.real,
    })
}

/// Field on a [`VelocityGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: VelocityGrid,
    values: Vec<Complex64>,
    real: bool,
}

impl VelocityField {
    pub fn from_values(grid: &VelocityGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::grid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("field values must be finite"));
        }
        let real = values.iter().all(|z| z.im == 0.0);
        Ok(VelocityField {
            grid: grid.clone(),
            values,
            real,
        })
    }

    pub fn from_fn(grid: &VelocityGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut out = VelocityField::from_fn_complex(grid, |v| Complex64::new(f(v), 0.0));
        out.real = true;
        out
    }

    pub fn from_fn_complex(grid: &VelocityGrid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let mut v = vec![0.0; grid.dim()];
        let values: Vec<Complex64> = (0..grid.len())
            .map(|iv| {
                grid.coords(iv, &mut v);
                f(&v)
            })
            .collect();
        let real = values.iter().all(|z| z.im == 0.0);
        VelocityField {
            grid: grid.clone(),
            values,
            real,
        }
    }

    pub(crate) fn from_parts(grid: VelocityGrid, values: Vec<Complex64>, real: bool) -> Self {
        let mut f = VelocityField { grid, values, real };
        if real {
            f.values.iter_mut().for_each(|z| z.im = 0.0);
        }
        f
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_of(&self.values, self.grid.cell_volume(), p)
    }

    pub fn pairing(&self, other: &VelocityField) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::grid("fields live on different grids"));
        }
        Ok(pairing_of(&self.values, &other.values, self.grid.cell_volume()))
    }

    pub fn combine(&self, a: Complex64, other: &VelocityField, b: Complex64) -> Result<VelocityField> {
        if self.grid != other.grid {
            return Err(Error::grid("fields live on different grids"));
        }
        let values: Vec<Complex64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * a + y * b)
            .collect();
        let real = values.iter().all(|z| z.im == 0.0);
        Ok(VelocityField {
            grid: self.grid.clone(),
            values,
            real,
        })
    }
}

/// Which quantity a [`NormRecord`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    OperatorNormExact,
    OperatorNormLowerBound,
    FieldNorm,
}

impl NormKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormKind::OperatorNormExact => "operator_norm_exact",
            NormKind::OperatorNormLowerBound => "operator_norm_lower_bound",
            NormKind::FieldNorm => "field_norm",
        }
    }
}

/// One measured norm at time `t` with its theoretical comparator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRecord {
    pub p: f64,
    pub q: f64,
    pub t: f64,
    pub value: f64,
    pub bound: f64,
    pub kind: NormKind,
}
