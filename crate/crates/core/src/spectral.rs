//! Hermite functions, oscillator eigenfunctions and their complex shifts.
//!
//! Polynomials follow the probabilists' convention
//! `F_j(s) = (-1)^j e^{s²/2} d^j/ds^j e^{-s²/2}` and the normalized functions are
//! `φ_j = (j! √(2π))^{-1/2} e^{-s²/4} F_j`, eigenfunctions of
//! `H = -d²/ds² + s²/4 - 1/2` with eigenvalue `j`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phase_space::{strides, sub_bases, VelocityField, VelocityGrid};

pub const DEFAULT_J_MAX: usize = 30;
/// Shifted eigenfunctions grow like `e^{|ξ|²}`; larger shifts need an explicit override.
pub const DEFAULT_XI_MAX: f64 = 2.0;
/// Coarsest velocity spacing accepted by [`apply_p0_hat`].
pub const MAX_FD_SPACING: f64 = 0.5;
/// Largest integrand modulus tolerated on the outermost quadrature nodes.
pub const TAIL_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLimits {
    pub j_max: usize,
    pub xi_max: f64,
}

impl Default for SpectralLimits {
    fn default() -> Self {
        SpectralLimits {
            j_max: DEFAULT_J_MAX,
            xi_max: DEFAULT_XI_MAX,
        }
    }
}

fn check_degree(j: usize, limits: &SpectralLimits) -> Result<()> {
    if j > limits.j_max {
        return Err(Error::capability(format!(
            "Hermite degree {j} exceeds the cap {}",
            limits.j_max
        )));
    }
    Ok(())
}

pub fn hermite_polynomial(j: usize, s: f64) -> Result<f64> {
    hermite_polynomial_with(j, s, &SpectralLimits::default())
}

pub fn hermite_polynomial_with(j: usize, s: f64, limits: &SpectralLimits) -> Result<f64> {
    check_degree(j, limits)?;
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..j {
        let next = s * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `φ_0..=φ_j` at a complex argument via the normalized recurrence
/// `φ_{k+1} = (z φ_k - √k φ_{k-1}) / √(k+1)`, which avoids factorial overflow.
fn hermite_functions_upto(j: usize, z: Complex64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(j + 1);
    let phi0 = (-z * z / 4.0).exp() * (2.0 * std::f64::consts::PI).powf(-0.25);
    out.push(phi0);
    if j >= 1 {
        out.push(z * phi0);
    }
    for k in 1..j {
        let next = (z * out[k] - out[k - 1] * (k as f64).sqrt()) / ((k + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

pub fn hermite_function(j: usize, s: f64) -> Result<f64> {
    check_degree(j, &SpectralLimits::default())?;
    Ok(hermite_functions_upto(j, Complex64::new(s, 0.0))[j].re)
}

pub fn hermite_function_complex(j: usize, z: Complex64, limits: &SpectralLimits) -> Result<Complex64> {
    check_degree(j, limits)?;
    Ok(hermite_functions_upto(j, z)[j])
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HermiteIndex {
    alpha: Vec<usize>,
}

impl HermiteIndex {
    pub fn new(alpha: Vec<usize>) -> Result<Self> {
        crate::kernels::check_dim(alpha.len())?;
        Ok(HermiteIndex { alpha })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn degree(&self) -> usize {
        self.alpha.iter().sum()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.alpha
    }
}

impl std::fmt::Display for HermiteIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.alpha.iter().map(|a| a.to_string()).collect();
        write!(f, "({})", parts.join(" "))
    }
}

/// All multi-indices of length `n` with degree `<= max_degree`, ordered by degree.
pub fn multi_indices(n: usize, max_degree: usize) -> Result<Vec<HermiteIndex>> {
    crate::kernels::check_dim(n)?;
    let mut all = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        if idx.iter().sum::<usize>() <= max_degree {
            all.push(HermiteIndex { alpha: idx.clone() });
        }
        let mut k = n;
        loop {
            if k == 0 {
                all.sort_by_key(|a| (a.degree(), a.alpha.clone()));
                return Ok(all);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] <= max_degree {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `ψ_α^ξ(v) = ψ_α(v + 2iξ)` sampled on a velocity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedEigenfunction {
    pub alpha: HermiteIndex,
    pub xi: Vec<f64>,
    pub field: VelocityField,
}

impl ShiftedEigenfunction {
    /// Eigenvalue `|α| + |ξ|²` of the Fourier-side free operator.
    pub fn eigenvalue(&self) -> f64 {
        self.alpha.degree() as f64 + self.xi.iter().map(|x| x * x).sum::<f64>()
    }
}

fn check_shift(xi: &[f64], n: usize, limits: &SpectralLimits) -> Result<()> {
    if xi.len() != n {
        return Err(Error::domain(format!("shift has length {}, expected {n}", xi.len())));
    }
    if xi.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("shift must be finite"));
    }
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > limits.xi_max {
        return Err(Error::capability(format!(
            "shift |xi| = {norm} exceeds the cap {}; values grow like exp(|xi|^2)",
            limits.xi_max
        )));
    }
    Ok(())
}

pub fn shifted_eigenfunction(alpha: &HermiteIndex, xi: &[f64], vgrid: &VelocityGrid) -> Result<ShiftedEigenfunction> {
    shifted_eigenfunction_with(alpha, xi, vgrid, &SpectralLimits::default())
}

pub fn shifted_eigenfunction_with(
    alpha: &HermiteIndex,
    xi: &[f64],
    vgrid: &VelocityGrid,
    limits: &SpectralLimits,
) -> Result<ShiftedEigenfunction> {
    let n = vgrid.dim();
    if alpha.dim() != n {
        return Err(Error::domain(format!(
            "multi-index has length {}, grid has dimension {n}",
            alpha.dim()
        )));
    }
    check_shift(xi, n, limits)?;
    for &a in alpha.as_slice() {
        check_degree(a, limits)?;
    }
    // one table of φ_{α_j}(v + 2iξ_j) per axis, then tensor products
    let tables: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let ax = vgrid.axes()[j];
            (0..ax.points)
                .map(|i| {
                    hermite_functions_upto(alpha.as_slice()[j], Complex64::new(ax.node(i), 2.0 * xi[j]))
                        [alpha.as_slice()[j]]
                })
                .collect()
        })
        .collect();
    let shape = vgrid.shape();
    let values: Vec<Complex64> = (0..vgrid.len())
        .map(|mut iv| {
            let mut z = Complex64::new(1.0, 0.0);
            for j in (0..n).rev() {
                z *= tables[j][iv % shape[j]];
                iv /= shape[j];
            }
            z
        })
        .collect();
    Ok(ShiftedEigenfunction {
        alpha: alpha.clone(),
        xi: xi.to_vec(),
        field: VelocityField::from_values(vgrid, values)?,
    })
}

/// Eighth-order centered second-difference weights.
const LAPLACE_8: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];

/// `P̂₀(ξ) = -Δ_v + ¼ Σ (v_j + 2iξ_j)² - n/2 + |ξ|²` by eighth-order centered
/// differences; samples beyond the grid are taken as zero.
pub fn apply_p0_hat(xi: &[f64], f: &VelocityField) -> Result<VelocityField> {
    let grid = f.grid();
    let n = grid.dim();
    if xi.len() != n {
        return Err(Error::domain(format!("shift has length {}, expected {n}", xi.len())));
    }
    if let Some(ax) = grid.axes().iter().find(|a| a.spacing() > MAX_FD_SPACING) {
        return Err(Error::grid(format!(
            "velocity spacing {} is coarser than {MAX_FD_SPACING}; the difference operator is not resolved",
            ax.spacing()
        )));
    }
    let shape = grid.shape();
    let st = strides(&shape);
    let src = f.values();
    let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
    for j in 0..n {
        let len = shape[j];
        let h2 = grid.axes()[j].spacing().powi(2);
        for base in sub_bases(&shape, &[j]) {
            for i in 0..len {
                let mut acc = src[base + i * st[j]] * LAPLACE_8[0];
                for (k, w) in LAPLACE_8.iter().enumerate().skip(1) {
                    if i >= k {
                        acc += src[base + (i - k) * st[j]] * *w;
                    }
                    if i + k < len {
                        acc += src[base + (i + k) * st[j]] * *w;
                    }
                }
                out[base + i * st[j]] -= acc / h2;
            }
        }
    }
    let xi2: f64 = xi.iter().map(|x| x * x).sum();
    let mut v = vec![0.0; n];
    for (iv, o) in out.iter_mut().enumerate() {
        grid.coords(iv, &mut v);
        let mut pot = Complex64::new(xi2 - n as f64 / 2.0, 0.0);
        for (vj, xj) in v.iter().zip(xi) {
            let w = Complex64::new(*vj, 2.0 * xj);
            pot += w * w / 4.0;
        }
        *o += pot * src[iv];
    }
    VelocityField::from_values(grid, out)
}

/// `‖P̂₀(ξ)ψ - λψ‖₂ / ‖ψ‖₂` for the eigenvalue `λ = |α| + |ξ|²`.
pub fn eigen_residual(ef: &ShiftedEigenfunction) -> Result<f64> {
    let applied = apply_p0_hat(&ef.xi, &ef.field)?;
    let lambda = Complex64::new(ef.eigenvalue(), 0.0);
    let diff = applied.combine(Complex64::new(1.0, 0.0), &ef.field, -lambda)?;
    Ok(diff.lp_norm(2.0)? / ef.field.lp_norm(2.0)?)
}

/// Pairings `⟨ψ_α^ξ, ψ_β^{-ξ}⟩` over all multi-indices up to a degree.
#[derive(Debug, Clone, PartialEq)]
pub struct BiorthogonalityMatrix {
    pub indices: Vec<HermiteIndex>,
    pub xi: Vec<f64>,
    /// Row-major, row `α`, column `β`.
    pub entries: Vec<Complex64>,
    /// Largest integrand modulus on the outermost quadrature nodes.
    pub tail: f64,
}

impl BiorthogonalityMatrix {
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn entry(&self, a: usize, b: usize) -> Complex64 {
        self.entries[a * self.indices.len() + b]
    }

    /// Largest `|M - I|` entry with its position.
    pub fn max_deviation(&self) -> (f64, usize, usize) {
        let m = self.size();
        let mut worst = (0.0, 0, 0);
        for a in 0..m {
            for b in 0..m {
                let target = if a == b { 1.0 } else { 0.0 };
                let d = (self.entry(a, b) - target).norm();
                if d > worst.0 {
                    worst = (d, a, b);
                }
            }
        }
        worst
    }
}

fn boundary_modulus(f: &[Complex64], g: &[Complex64], shape: &[usize]) -> f64 {
    let st = strides(shape);
    let mut worst = 0.0f64;
    for j in 0..shape.len() {
        let last = (shape[j] - 1) * st[j];
        for base in sub_bases(shape, &[j]) {
            worst = worst
                .max((f[base] * g[base]).norm())
                .max((f[base + last] * g[base + last]).norm());
        }
    }
    worst
}

pub fn biorthogonality_matrix(xi: &[f64], max_degree: usize, vgrid: &VelocityGrid) -> Result<BiorthogonalityMatrix> {
    biorthogonality_matrix_with(xi, max_degree, vgrid, &SpectralLimits::default(), true)
}

/// With `opposite = false` both sides use the same shift `ξ`; that pairing is not
/// biorthogonal and serves as a guard against pairing the wrong family.
pub fn biorthogonality_matrix_with(
    xi: &[f64],
    max_degree: usize,
    vgrid: &VelocityGrid,
    limits: &SpectralLimits,
    opposite: bool,
) -> Result<BiorthogonalityMatrix> {
    let n = vgrid.dim();
    let indices = multi_indices(n, max_degree)?;
    let neg: Vec<f64> = xi.iter().map(|x| -x).collect();
    let right_shift = if opposite { &neg } else { xi };
    let left: Vec<ShiftedEigenfunction> = indices
        .iter()
        .map(|a| shifted_eigenfunction_with(a, xi, vgrid, limits))
        .collect::<Result<_>>()?;
    let right: Vec<ShiftedEigenfunction> = indices
        .iter()
        .map(|a| shifted_eigenfunction_with(a, right_shift, vgrid, limits))
        .collect::<Result<_>>()?;
    let shape = vgrid.shape();
    let mut tail = 0.0f64;
    let m = indices.len();
    let mut entries = Vec::with_capacity(m * m);
    for l in &left {
        let conj_l: Vec<Complex64> = l.field.values().iter().map(|z| z.conj()).collect();
        for r in &right {
            tail = tail.max(boundary_modulus(&conj_l, r.field.values(), &shape));
            entries.push(l.field.pairing(&r.field)?);
        }
    }
    if tail > TAIL_TOLERANCE {
        return Err(Error::grid(format!(
            "quadrature box too narrow: integrand reaches {tail:.3e} on the boundary (tolerance {TAIL_TOLERANCE:e})"
        )));
    }
    Ok(BiorthogonalityMatrix {
        indices,
        xi: xi.to_vec(),
        entries,
        tail,
    })
}

/// The default quadrature grid: half width 12, spacing 0.05.
pub fn default_velocity_grid(n: usize) -> Result<VelocityGrid> {
    VelocityGrid::uniform(n, crate::phase_space::Axis::with_spacing(12.0, 0.05)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::Axis;
    use approx::assert_relative_eq;

    /// Coefficients of `F_j` from the defining derivative formula:
    /// `d/ds [q e^{-s²/2}] = (q' - s q) e^{-s²/2}`, so `q_{j+1} = s q_j - q_j'`.
    fn symbolic_hermite(j: usize) -> Vec<i64> {
        let mut q = vec![1i64];
        for _ in 0..j {
            let mut next = vec![0i64; q.len() + 1];
            for (k, &c) in q.iter().enumerate() {
                next[k + 1] += c;
                if k > 0 {
                    next[k - 1] -= k as i64 * c;
                }
            }
            q = next;
        }
        q
    }

    #[test]
    fn recurrence_matches_derivative_definition() {
        for j in 0..=6 {
            let coeffs = symbolic_hermite(j);
            for s in [-2.5f64, -1.0, 0.0, 0.3, 1.0, 2.0, 4.0] {
                let exact: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| c as f64 * s.powi(k as i32))
                    .sum();
                assert_relative_eq!(
                    hermite_polynomial(j, s).unwrap(),
                    exact,
                    epsilon = 1e-12,
                    max_relative = 1e-14
                );
            }
        }
        assert_eq!(symbolic_hermite(2), vec![-1, 0, 1]);
        let f2: Vec<f64> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&s| hermite_polynomial(2, s).unwrap())
            .collect();
        assert_eq!(f2, vec![-1.0, 0.0, 3.0]);
    }

    #[test]
    fn low_degree_and_recurrence() {
        for s in [-3.0, 0.0, 1.7] {
            assert_eq!(hermite_polynomial(0, s).unwrap(), 1.0);
            assert_eq!(hermite_polynomial(1, s).unwrap(), s);
        }
        for j in 1..20 {
            for s in [-6.0, -2.2, 0.5, 3.3, 6.0] {
                let lhs = hermite_polynomial(j + 1, s).unwrap();
                let rhs = s * hermite_polynomial(j, s).unwrap() - j as f64 * hermite_polynomial(j - 1, s).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn degree_cap() {
        assert!(matches!(hermite_polynomial(31, 0.0), Err(Error::Capability(_))));
        assert!(hermite_polynomial(30, 0.0).is_ok());
        let lim = SpectralLimits { j_max: 40, xi_max: 2.0 };
        assert!(hermite_polynomial_with(35, 1.0, &lim).is_ok());
    }

    #[test]
    fn functions_match_polynomial_formula() {
        let mut fact = 1.0;
        for j in 0..12 {
            if j > 0 {
                fact *= j as f64;
            }
            for s in [-3.0f64, -0.4, 0.0, 2.5] {
                let direct = (fact * (2.0 * std::f64::consts::PI).sqrt()).powf(-0.5)
                    * (-s * s / 4.0).exp()
                    * hermite_polynomial(j, s).unwrap();
                assert!((hermite_function(j, s).unwrap() - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn functions_satisfy_normalized_recurrence() {
        for j in 1..25 {
            for s in [-5.0, -1.3, 0.2, 4.4] {
                let lhs = ((j + 1) as f64).sqrt() * hermite_function(j + 1, s).unwrap();
                let rhs = s * hermite_function(j, s).unwrap() - (j as f64).sqrt() * hermite_function(j - 1, s).unwrap();
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    fn quad(j: usize, k: usize) -> f64 {
        let h = 0.05;
        (0..481)
            .map(|i| {
                let s = -12.0 + i as f64 * h;
                hermite_function(j, s).unwrap() * hermite_function(k, s).unwrap() * h
            })
            .sum()
    }

    #[test]
    fn orthonormality_by_quadrature() {
        assert!((quad(0, 0) - 1.0).abs() < 1e-10);
        for j in 0..=8 {
            for k in 0..=8 {
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((quad(j, k) - target).abs() < 1e-9, "j={j} k={k}");
            }
        }
    }

    #[test]
    fn oscillator_eigenrelation_by_differences() {
        // sixth-order stencil built independently of apply_p0_hat
        let h = 0.05;
        for j in 0..=6 {
            let phi = |s: f64| hermite_function(j, s).unwrap();
            let mut worst = 0.0f64;
            for i in 0..200 {
                let s = -5.0 + i as f64 * h;
                let d2 = (2.0 * (phi(s + 3.0 * h) + phi(s - 3.0 * h)) - 27.0 * (phi(s + 2.0 * h) + phi(s - 2.0 * h))
                    + 270.0 * (phi(s + h) + phi(s - h))
                    - 490.0 * phi(s))
                    / (180.0 * h * h);
                let hphi = -d2 + (s * s / 4.0 - 0.5) * phi(s);
                worst = worst.max((hphi - j as f64 * phi(s)).abs());
            }
            assert!(worst < 1e-6, "j={j} residual {worst}");
        }
    }

    #[test]
    fn multi_index_enumeration() {
        let all = multi_indices(2, 2).unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].as_slice(), &[0, 0]);
        assert!(all.windows(2).all(|w| w[0].degree() <= w[1].degree()));
        assert_eq!(multi_indices(3, 6).unwrap().len(), 84);
        assert!(HermiteIndex::new(vec![]).is_err());
    }

    #[test]
    fn unshifted_eigenfunction_is_real() {
        let g = VelocityGrid::uniform(2, Axis::new(8.0, 64).unwrap()).unwrap();
        let a = HermiteIndex::new(vec![1, 2]).unwrap();
        let ef = shifted_eigenfunction(&a, &[0.0, 0.0], &g).unwrap();
        assert!(ef.field.is_real());
        assert_eq!(ef.eigenvalue(), 3.0);
        assert!(shifted_eigenfunction(&a, &[2.5, 0.0], &g).is_err());
    }

    #[test]
    fn eigen_residuals() {
        let g = default_velocity_grid(1).unwrap();
        let ground = shifted_eigenfunction(&HermiteIndex::new(vec![0]).unwrap(), &[0.0], &g).unwrap();
        assert!(eigen_residual(&ground).unwrap() < 1e-6);
        let one = shifted_eigenfunction(&HermiteIndex::new(vec![1]).unwrap(), &[0.5], &g).unwrap();
        assert_eq!(one.eigenvalue(), 1.25);
        assert!(eigen_residual(&one).unwrap() < 1e-6);
    }

    #[test]
    fn p0_hat_is_linear_and_refuses_coarse_grids() {
        let g = VelocityGrid::uniform(1, Axis::new(6.0, 64).unwrap()).unwrap();
        let f = VelocityField::from_fn(&g, |v| (-v[0] * v[0]).exp());
        let h = VelocityField::from_fn(&g, |v| v[0] * (-v[0] * v[0] / 2.0).exp());
        let (a, b) = (Complex64::new(0.5, -1.0), Complex64::new(2.0, 0.25));
        let lhs = apply_p0_hat(&[0.3], &f.combine(a, &h, b).unwrap()).unwrap();
        let rhs = apply_p0_hat(&[0.3], &f)
            .unwrap()
            .combine(a, &apply_p0_hat(&[0.3], &h).unwrap(), b)
            .unwrap();
        for (x, y) in lhs.values().iter().zip(rhs.values()) {
            assert!((x - y).norm() < 1e-12 * (1.0 + x.norm()));
        }
        let coarse = VelocityGrid::uniform(1, Axis::new(6.0, 16).unwrap()).unwrap();
        let f = VelocityField::from_fn(&coarse, |v| (-v[0] * v[0]).exp());
        assert!(matches!(apply_p0_hat(&[0.0], &f), Err(Error::Grid(_))));
    }

    #[test]
    fn biorthogonality_and_guard() {
        let g = default_velocity_grid(1).unwrap();
        let m0 = biorthogonality_matrix(&[0.0], 6, &g).unwrap();
        assert!(m0.max_deviation().0 < 1e-9);
        let m = biorthogonality_matrix(&[0.5], 6, &g).unwrap();
        assert!(m.max_deviation().0 < 1e-8);
        let same = biorthogonality_matrix_with(&[0.5], 0, &g, &SpectralLimits::default(), false).unwrap();
        // ⟨ψ_0^ξ, ψ_0^ξ⟩ = e^{2ξ²}
        assert_relative_eq!(same.entry(0, 0).re, (0.5f64).exp(), max_relative = 1e-10);
        assert!(same.max_deviation().0 > 0.01);
    }

    #[test]
    fn narrow_box_is_reported() {
        let g = VelocityGrid::uniform(1, Axis::new(4.0, 160).unwrap()).unwrap();
        match biorthogonality_matrix(&[1.0], 4, &g) {
            Err(Error::Grid(msg)) => assert!(msg.contains("boundary")),
            other => panic!("expected grid error, got {other:?}"),
        }
    }
}
