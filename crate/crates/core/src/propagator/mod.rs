//! Semigroups on phase space: the free flow `e^{-tP₀}`, the oscillator flow
//! `e^{-tH}`, the drift map `e^{-tW}`, their splitting composition for
//! `e^{-tP}`, and the first-order Duhamel correction.

mod born;
mod drift;
mod free;
mod harmonic;

pub use born::{born_term, velocity_coupling};
pub use drift::{drift_step, DriftReport};
pub use free::{free_step_direct, free_step_fourier, DirectPropagator, FreePropagator};
pub use harmonic::{harmonic_step, HarmonicPropagator};

use std::str::FromStr;

use crate::error::{check_time, Error, Result};
use crate::phase_space::{Field, PhaseGrid};
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    DirectKernel,
    FourierFactorized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    /// `free(dt) ∘ drift(dt)`, first order.
    Lie,
    /// `drift(dt/2) ∘ free(dt) ∘ drift(dt/2)`, second order.
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Positivity- and max-norm-preserving.
    Linear,
    /// Catmull-Rom; more accurate, no sign guarantee.
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    ZeroFill,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($text:literal => $val:expr),+) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($val),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " {:?}"), other))),
                }
            }
        }
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                $(if *self == $val { return $text; })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(Backend, "backend", "direct_kernel" => Backend::DirectKernel, "fourier_factorized" => Backend::FourierFactorized);
keyword_enum!(Splitting, "splitting", "lie" => Splitting::Lie, "strang" => Splitting::Strang);
keyword_enum!(Interpolation, "interpolation", "linear" => Interpolation::Linear, "cubic" => Interpolation::Cubic);
keyword_enum!(Boundary, "boundary", "zero_fill" => Boundary::ZeroFill);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorPlan {
    pub backend: Backend,
    pub splitting: Splitting,
    pub dt: f64,
    pub interpolation: Interpolation,
    pub boundary: Boundary,
}

impl PropagatorPlan {
    pub fn new(dt: f64) -> Result<Self> {
        check_time(dt)?;
        Ok(PropagatorPlan {
            backend: Backend::FourierFactorized,
            splitting: Splitting::Strang,
            dt,
            interpolation: Interpolation::Linear,
            boundary: Boundary::ZeroFill,
        })
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_splitting(mut self, splitting: Splitting) -> Self {
        self.splitting = splitting;
        self
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn validate(&self, grid: &PhaseGrid) -> Result<()> {
        check_time(self.dt)?;
        if self.backend == Backend::DirectKernel && grid.dim() != 1 {
            return Err(Error::capability("the direct kernel backend is limited to n = 1"));
        }
        Ok(())
    }
}

/// A free step of fixed length, prepared once and reused.
#[derive(Debug)]
pub enum FreeStepper {
    Fourier(FreePropagator),
    Direct(DirectPropagator),
}

impl FreeStepper {
    pub fn new(grid: &PhaseGrid, t: f64, backend: Backend) -> Result<Self> {
        check_time(t)?;
        match backend {
            Backend::FourierFactorized => Ok(FreeStepper::Fourier(FreePropagator::new(grid, t)?)),
            Backend::DirectKernel => Ok(FreeStepper::Direct(DirectPropagator::new(grid, t)?)),
        }
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        match self {
            FreeStepper::Fourier(p) => p.apply(f),
            FreeStepper::Direct(p) => p.apply(f),
        }
    }
}

pub fn free_step(f: &Field, t: f64, backend: Backend) -> Result<Field> {
    FreeStepper::new(f.grid(), t, backend)?.apply(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    /// Total mass pushed out of the velocity box by the drift.
    pub shifted_out_mass: f64,
}

fn step_index(t: f64, dt: f64) -> Option<usize> {
    let k = (t / dt).round();
    if k >= 1.0 && (k * dt - t).abs() <= 1e-9 * t.max(dt) {
        Some(k as usize)
    } else {
        None
    }
}

/// One splitting step of length `plan.dt`, reusing a prepared free step.
pub fn split_step(
    f: &Field,
    potential: &Potential,
    plan: &PropagatorPlan,
    free: &FreeStepper,
) -> Result<(Field, DriftReport)> {
    let dt = plan.dt;
    match plan.splitting {
        Splitting::Strang => {
            let (a, r1) = drift_step(f, 0.5 * dt, potential, plan.interpolation)?;
            let b = free.apply(&a)?;
            let (c, r2) = drift_step(&b, 0.5 * dt, potential, plan.interpolation)?;
            Ok((
                c,
                DriftReport {
                    shifted_out_mass: r1.shifted_out_mass + r2.shifted_out_mass,
                    max_shift: r1.max_shift.max(r2.max_shift),
                },
            ))
        }
        Splitting::Lie => {
            let (a, r) = drift_step(f, dt, potential, plan.interpolation)?;
            Ok((free.apply(&a)?, r))
        }
    }
}

/// Runs the splitting scheme to `t_total`, returning a snapshot at every
/// requested time; each sample time must be a positive multiple of `dt`.
pub fn evolve(
    f: &Field,
    t_total: f64,
    potential: &Potential,
    plan: &PropagatorPlan,
    sample_times: &[f64],
) -> Result<Evolution> {
    check_time(t_total)?;
    plan.validate(f.grid())?;
    if potential.dim() != f.grid().dim() {
        return Err(Error::domain("potential dimension does not match the grid"));
    }
    let steps = step_index(t_total, plan.dt)
        .ok_or_else(|| Error::domain(format!("total time {t_total} is not a multiple of dt = {}", plan.dt)))?;
    let mut sample_steps = Vec::with_capacity(sample_times.len());
    for &s in sample_times {
        if !(s > 0.0 && s <= t_total * (1.0 + 1e-12)) {
            return Err(Error::domain(format!("sample time {s} outside (0, {t_total}]")));
        }
        let k = step_index(s, plan.dt)
            .ok_or_else(|| Error::domain(format!("sample time {s} is not a multiple of dt = {}", plan.dt)))?;
        if sample_steps.last().is_some_and(|&prev| k <= prev) {
            return Err(Error::domain("sample times must be strictly increasing"));
        }
        sample_steps.push(k);
    }

    let free = FreeStepper::new(f.grid(), plan.dt, plan.backend)?;
    let mut u = f.clone();
    let mut lost = 0.0;
    let mut snapshots = Vec::with_capacity(sample_steps.len());
    let mut next = sample_steps.iter().peekable();
    for k in 1..=steps {
        let (v, rep) = split_step(&u, potential, plan, &free)?;
        u = v;
        lost += rep.shifted_out_mass;
        if next.peek() == Some(&&k) {
            next.next();
            snapshots.push(Snapshot {
                t: k as f64 * plan.dt,
                field: u.clone(),
            });
        }
    }
    if lost > 0.0 {
        log::info!("drift moved mass {lost:.3e} across the velocity boundary");
    }
    Ok(Evolution {
        snapshots,
        steps,
        shifted_out_mass: lost,
    })
}
