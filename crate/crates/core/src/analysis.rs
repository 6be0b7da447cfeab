//! Norm measurements, power-law fits, the potential decay check, the
//! exponent recursion behind the large-time bootstrap, and the discrete
//! stationarity residual of the Maxwellian.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_time, Error, Result};
use crate::kernels::{check_dim, maxwellian_sqrt_unchecked, time_profiles};
use crate::phase_space::{lp_norm, Field, NormKind, NormRecord, PhaseGrid};
use crate::potential::Potential;

pub const SHORT_TIME_WINDOW: (f64, f64) = (1e-3, 1e-2);
pub const LONG_TIME_WINDOW: (f64, f64) = (20.0, 50.0);

/// Finest velocity spacing [`stationarity_residual`] accepts.
pub const MAX_RESIDUAL_SPACING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    ShortTime,
    LongTime,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::ShortTime => "short_time",
            Regime::LongTime => "long_time",
        }
    }

    pub fn default_window(&self) -> (f64, f64) {
        match self {
            Regime::ShortTime => SHORT_TIME_WINDOW,
            Regime::LongTime => LONG_TIME_WINDOW,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short_time" => Ok(Regime::ShortTime),
            "long_time" => Ok(Regime::LongTime),
            other => Err(Error::Config(format!("unknown regime {other:?}"))),
        }
    }
}

/// `‖e^{-tP₀}‖_{1→∞} = (4πγ(t))^{-n/2}`. The kernel is positive and attains
/// this supremum, so the value is the operator norm itself, not just a bound.
pub fn free_norm_1_to_inf(t: f64, n: usize) -> Result<f64> {
    check_dim(n)?;
    Ok(time_profiles(t)?.free_kernel_sup(n))
}

/// Comparator `(4πγ(t))^{-(n/2)(1/p - 1/q)}` for `‖e^{-tP₀}‖_{p→q}`, obtained
/// by interpolating the `1→∞` value against a `p→p` contraction.
pub fn free_norm_comparator(p: f64, q: f64, t: f64, n: usize) -> Result<f64> {
    check_exponents(p, q)?;
    Ok(free_norm_1_to_inf(t, n)?.powf(1.0 / p - 1.0 / q))
}

fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(p >= 1.0 && q >= 1.0) || p.is_nan() || q.is_nan() {
        return Err(Error::domain(format!(
            "exponents must lie in [1, inf], got p = {p}, q = {q}"
        )));
    }
    if p > q {
        return Err(Error::domain(format!("need p <= q, got p = {p}, q = {q}")));
    }
    Ok(())
}

/// Decay rate of `‖e^{-tP}‖_{p→q}`: the power of `t` at large times, the power
/// of `1/t` at small times (`γ ~ t⁴` there).
pub fn expected_exponent(p: f64, q: f64, n: usize, regime: Regime) -> Result<f64> {
    check_exponents(p, q)?;
    check_dim(n)?;
    let d = 1.0 / p - 1.0 / q;
    Ok(match regime {
        Regime::LongTime => 0.5 * n as f64 * d,
        Regime::ShortTime => 2.0 * n as f64 * d,
    })
}

/// Least-squares fit of `log(value)` against `log(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub samples: usize,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerFit> {
    if points.len() < 5 {
        return Err(Error::Data(format!(
            "need at least 5 points for a fit, got {}",
            points.len()
        )));
    }
    if let Some(&(t, y)) = points
        .iter()
        .find(|(t, y)| !(*t > 0.0 && *y > 0.0 && t.is_finite() && y.is_finite()))
    {
        return Err(Error::Data(format!(
            "non-positive sample ({t}, {y}) cannot be fitted on log scales"
        )));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Data("all samples share one time".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PowerFit {
        slope,
        intercept,
        r2,
        samples: points.len(),
    })
}

/// Measured decay of one `(p, q)` pair. Both exponents are log-log slopes,
/// so a decaying norm has negative values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub regime: Regime,
    pub p: f64,
    pub q: f64,
    pub fitted_exponent: f64,
    pub expected_exponent: f64,
    pub r2: f64,
    pub time_window: (f64, f64),
}

impl DecayFit {
    pub fn deviation(&self) -> f64 {
        (self.fitted_exponent - self.expected_exponent).abs()
    }
}

/// Fits the records of a single `(p, q)` pair inside `window`.
pub fn fit_decay_exponent(records: &[NormRecord], window: (f64, f64), regime: Regime, n: usize) -> Result<DecayFit> {
    let (t_min, t_max) = window;
    if !(t_min > 0.0 && t_min < t_max) {
        return Err(Error::domain(format!("invalid fit window [{t_min}, {t_max}]")));
    }
    let first = records.first().ok_or_else(|| Error::Data("no records to fit".into()))?;
    if records.iter().any(|r| r.p != first.p || r.q != first.q) {
        return Err(Error::Data("records mix different (p, q) pairs".into()));
    }
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t >= t_min && r.t <= t_max)
        .map(|r| (r.t, r.value))
        .collect();
    let fit = fit_power_law(&points)?;
    let rate = expected_exponent(first.p, first.q, n, regime)?;
    Ok(DecayFit {
        regime,
        p: first.p,
        q: first.q,
        fitted_exponent: fit.slope,
        expected_exponent: -rate,
        r2: fit.r2,
        time_window: window,
    })
}

/// Probe functions for [`norm_lower_bound`]: Gaussian bumps with seeded
/// centers and widths, plus single-cell spikes near the origin when `p = 1`.
pub fn default_test_family(grid: &PhaseGrid, p: f64, seed: u64) -> Vec<Field> {
    let n = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut family = Vec::new();
    let x_reach: Vec<f64> = (0..n).map(|j| 0.25 * grid.x_axis(j).half_width).collect();
    let v_reach: Vec<f64> = (0..n).map(|j| (0.25 * grid.v_axis(j).half_width).min(2.0)).collect();
    for _ in 0..8 {
        let xc: Vec<f64> = x_reach.iter().map(|&r| rng.gen_range(-r..=r)).collect();
        let vc: Vec<f64> = v_reach.iter().map(|&r| rng.gen_range(-r..=r)).collect();
        let wx: f64 = rng.gen_range(0.3..1.5);
        let wv: f64 = rng.gen_range(0.3..1.5);
        family.push(Field::from_fn(grid, |x, v| {
            let dx: f64 = x.iter().zip(&xc).map(|(a, b)| (a - b).powi(2)).sum();
            let dv: f64 = v.iter().zip(&vc).map(|(a, b)| (a - b).powi(2)).sum();
            (-0.5 * dx / (wx * wx) - 0.5 * dv / (wv * wv)).exp()
        }));
    }
    if p == 1.0 {
        let shape = grid.shape();
        let centre: Vec<usize> = shape.iter().map(|&m| m / 2).collect();
        let mut spots = vec![centre.clone()];
        for dv in [-1i64, 1, 2] {
            let mut s = centre.clone();
            for j in n..2 * n {
                s[j] = (s[j] as i64 + dv).clamp(0, shape[j] as i64 - 1) as usize;
            }
            spots.push(s);
        }
        for idx in spots {
            let flat = idx.iter().zip(&shape).fold(0, |acc, (&i, &m)| acc * m + i);
            let mut vals = vec![0.0; grid.len()];
            vals[flat] = 1.0;
            family.push(Field::from_real(grid, &vals).expect("spike matches its grid"));
        }
    }
    family
}

/// `max ‖T f‖_q / ‖f‖_p` over the family: a certified lower bound of `‖T‖_{p→q}`.
pub fn norm_lower_bound<F>(propagate: F, p: f64, q: f64, t: f64, family: &[Field], bound: f64) -> Result<NormRecord>
where
    F: Fn(&Field) -> Result<Field>,
{
    check_time(t)?;
    if !(p >= 1.0 && q >= 1.0) {
        return Err(Error::domain(format!(
            "exponents must lie in [1, inf], got p = {p}, q = {q}"
        )));
    }
    let mut best: Option<f64> = None;
    for (k, f) in family.iter().enumerate() {
        let np = lp_norm(f, p)?;
        if !(np > 0.0 && np.is_finite()) {
            log::warn!("test function {k} has ‖f‖_{p} = {np}; skipped");
            continue;
        }
        let ratio = lp_norm(&propagate(f)?, q)? / np;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    let value = best.ok_or_else(|| Error::Data("test family has no usable member".into()))?;
    Ok(NormRecord {
        p,
        q,
        t,
        value,
        bound,
        kind: NormKind::OperatorNormLowerBound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub rho_claimed: f64,
    /// Supremum of `<x>^ρ (|V| + <x>|∇V|)` over the probes.
    pub c_measured: f64,
    /// Log-log slope of the probe envelope over the outer decade of radii.
    pub tail_slope: f64,
    pub passed: bool,
    /// First probe point with a non-finite sample, if any.
    pub non_finite_at: Option<Vec<f64>>,
}

/// Samples the decay condition along radial probes out to `probe_radius`.
/// The verdict fails when the weighted size still grows over the outer decade.
pub fn potential_condition_check(
    potential: &Potential,
    rho_claimed: f64,
    probe_radius: f64,
) -> Result<ConditionReport> {
    if !(probe_radius > 0.0 && probe_radius.is_finite()) {
        return Err(Error::domain(format!(
            "probe radius must be positive, got {probe_radius}"
        )));
    }
    if !rho_claimed.is_finite() {
        return Err(Error::domain("claimed decay exponent must be finite"));
    }
    let n = potential.dim();
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for j in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[j] = s;
            directions.push(d);
        }
    }
    if n > 1 {
        directions.push(vec![1.0 / (n as f64).sqrt(); n]);
    }
    const SAMPLES: usize = 400;
    let radius = |k: usize| probe_radius * k as f64 / SAMPLES as f64;
    let mut c_measured = 0.0f64;
    let mut envelope = vec![0.0f64; SAMPLES + 1];
    for d in &directions {
        for (k, env) in envelope.iter_mut().enumerate() {
            let x: Vec<f64> = d.iter().map(|c| c * radius(k)).collect();
            let s = potential.weighted_size(&x, rho_claimed);
            if !s.is_finite() {
                return Ok(ConditionReport {
                    rho_claimed,
                    c_measured: f64::INFINITY,
                    tail_slope: f64::NAN,
                    passed: false,
                    non_finite_at: Some(x),
                });
            }
            c_measured = c_measured.max(s);
            *env = env.max(s);
        }
    }
    let tail: Vec<(f64, f64)> = (SAMPLES / 10..=SAMPLES)
        .filter(|&k| envelope[k] > 0.0)
        .map(|k| ((1.0 + radius(k) * radius(k)).sqrt(), envelope[k]))
        .collect();
    let tail_slope = if tail.len() >= 5 {
        fit_power_law(&tail)?.slope
    } else {
        0.0
    };
    Ok(ConditionReport {
        rho_claimed,
        c_measured,
        tail_slope,
        passed: tail_slope <= 0.05,
        non_finite_at: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapTrace {
    pub rho: f64,
    /// `r_1, r_2, …`, ending with the first value above 1 when it terminates.
    pub sequence: Vec<f64>,
    /// 1-based index of the first `r_k > 1`; `None` if `max_iter` ran out.
    pub terminated_at: Option<usize>,
    /// `ρ / (3 - 2ρ)`, defined for `ρ < 3/2`.
    pub fixed_point: Option<f64>,
}

/// Runs `r_1 = 2ρ²/3`, `r_k = ρ(1 + 2r_{k-1})/3` until some `r_k > 1`.
pub fn bootstrap_exponents(rho: f64, max_iter: usize) -> Result<BootstrapTrace> {
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(Error::domain(format!("rho must exceed 1, got {rho}")));
    }
    if max_iter == 0 {
        return Err(Error::domain("max_iter must be at least 1"));
    }
    let fixed_point = (rho < 1.5).then(|| rho / (3.0 - 2.0 * rho));
    let mut r = 2.0 * rho * rho / 3.0;
    let mut sequence = vec![r];
    let mut terminated_at = (r > 1.0).then_some(1);
    while terminated_at.is_none() && sequence.len() < max_iter {
        r = rho * (1.0 + 2.0 * r) / 3.0;
        sequence.push(r);
        if r > 1.0 {
            terminated_at = Some(sequence.len());
        }
    }
    Ok(BootstrapTrace {
        rho,
        sequence,
        terminated_at,
        fixed_point,
    })
}

/// Relative discrete `‖P f‖₂ / ‖f‖₂` on the grid interior, with
/// `P = -Δ_v + |v|²/4 - n/2 + v·∇_x - ∇V·∇_v` in second-order centered differences.
pub fn operator_residual(f: &Field, potential: &Potential) -> Result<f64> {
    let grid = f.grid();
    let n = grid.dim();
    if potential.dim() != n {
        return Err(Error::domain("potential dimension does not match the grid"));
    }
    let shape = grid.shape();
    let strides = crate::phase_space::strides(&shape);
    let vals = f.values();
    let (_, nv) = grid.block_sizes();
    let mut x = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut idx = vec![0usize; 2 * n];
    let (mut num, mut den) = (0.0, 0.0);
    for flat in 0..vals.len() {
        let mut rem = flat;
        for a in (0..2 * n).rev() {
            idx[a] = rem % shape[a];
            rem /= shape[a];
        }
        if idx.iter().zip(&shape).any(|(&i, &m)| i == 0 || i + 1 == m) {
            continue;
        }
        grid.x_coords(flat / nv, &mut x);
        grid.v_coords(flat % nv, &mut v);
        let grad = potential.gradient_vec(&x);
        let c = vals[flat];
        let v2: f64 = v.iter().map(|a| a * a).sum();
        let mut pf = c * (0.25 * v2 - 0.5 * n as f64);
        for j in 0..n {
            let (hx, hv) = (grid.x_axis(j).spacing(), grid.v_axis(j).spacing());
            let (sx, sv) = (strides[j], strides[n + j]);
            let dxf = (vals[flat + sx] - vals[flat - sx]) / (2.0 * hx);
            let dvf = (vals[flat + sv] - vals[flat - sv]) / (2.0 * hv);
            let d2v = (vals[flat + sv] - c * 2.0 + vals[flat - sv]) / (hv * hv);
            pf += -d2v + dxf * v[j] - dvf * grad[j];
        }
        num += pf.norm_sqr();
        den += c.norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::Data("field vanishes on the grid interior".into()));
    }
    Ok((num / den).sqrt())
}

/// [`operator_residual`] of the Maxwellian square root `m_V`.
pub fn stationarity_residual(potential: &Potential, grid: &PhaseGrid) -> Result<f64> {
    let n = grid.dim();
    if potential.dim() != n {
        return Err(Error::domain("potential dimension does not match the grid"));
    }
    for j in 0..n {
        let h = grid.v_axis(j).spacing();
        if h > MAX_RESIDUAL_SPACING {
            return Err(Error::grid(format!(
                "velocity spacing {h} does not resolve the Maxwellian (need <= {MAX_RESIDUAL_SPACING})"
            )));
        }
    }
    let m = Field::from_fn(grid, |x, v| maxwellian_sqrt_unchecked(x, v, potential));
    operator_residual(&m, potential)
}
