//! The `kfp` experiment runner.
//!
//! Exit codes: 0 success, 1 a threshold or acceptance check failed,
//! 2 usage, configuration or runtime error.

use std::ffi::OsString;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::analysis::{
    bootstrap_exponents, default_test_family, fit_decay_exponent, free_norm_1_to_inf, free_norm_comparator,
    norm_lower_bound, Regime,
};
use crate::config::{Config, Key, Kind};
use crate::error::{Error, Result};
use crate::kernels::{maxwellian_sqrt, time_profiles};
use crate::phase_space::{
    lp_norm, pairing, read_field, read_field_csv, write_atomic, write_field, Axis, Field, NormKind, NormRecord,
    PhaseGrid, VelocityGrid,
};
use crate::potential::Potential;
use crate::propagator::{evolve, Backend, FreeStepper, Interpolation, PropagatorPlan, Splitting};
use crate::spectral::{biorthogonality_matrix, eigen_residual, multi_indices, shifted_eigenfunction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DIMS: Kind = Kind::Choice(&["1", "2", "3"]);
const BACKENDS: Kind = Kind::Choice(&["direct_kernel", "fourier_factorized"]);

pub const KERNEL_EVAL_KEYS: &[Key] = &[
    Key::new("dim", "1", DIMS, "phase-space dimension n"),
    Key::new("times", "0.001,0.01,0.1,1,10", Kind::FloatList, "times to tabulate"),
];

pub const DECAY_SCAN_KEYS: &[Key] = &[
    Key::new("dim", "1", DIMS, "phase-space dimension n"),
    Key::new(
        "source",
        "analytic",
        Kind::Choice(&["analytic", "probe"]),
        "exact 1->inf norm or test-family probing",
    ),
    Key::new("pairs", "1:inf", Kind::PairList, "(p, q) pairs as p:q"),
    Key::new(
        "times",
        "",
        Kind::FloatList,
        "explicit times; empty means log-spaced t_min..t_max",
    ),
    Key::new("t_min", "0.001", Kind::PositiveFloat, "first log-spaced time"),
    Key::new("t_max", "50", Kind::PositiveFloat, "last log-spaced time"),
    Key::new("t_count", "60", Kind::Int, "number of log-spaced times"),
    Key::new("short_window", "0.001,0.01", Kind::FloatList, "short-time fit window"),
    Key::new("long_window", "20,50", Kind::FloatList, "long-time fit window"),
    Key::new(
        "short_tolerance",
        "0.1",
        Kind::PositiveFloat,
        "allowed |fitted - expected| at short times",
    ),
    Key::new(
        "long_tolerance",
        "0.05",
        Kind::PositiveFloat,
        "allowed |fitted - expected| at long times",
    ),
    Key::new("x_half_width", "16", Kind::PositiveFloat, "probe grid: x half width"),
    Key::new("x_points", "256", Kind::Int, "probe grid: x points"),
    Key::new("v_half_width", "10", Kind::PositiveFloat, "probe grid: v half width"),
    Key::new("v_points", "160", Kind::Int, "probe grid: v points"),
    Key::new("backend", "fourier_factorized", BACKENDS, "probe propagation backend"),
    Key::new("seed", "1", Kind::Int, "seed of the probe family"),
];

pub const SPECTRAL_CHECK_KEYS: &[Key] = &[
    Key::new("dim", "1", DIMS, "velocity dimension n"),
    Key::new("max_degree", "6", Kind::Int, "largest |alpha|"),
    Key::new(
        "xi_list",
        "0,0.5,1",
        Kind::FloatList,
        "shift magnitudes, applied along (1,..,1)/sqrt(n)",
    ),
    Key::new("v_half_width", "12", Kind::PositiveFloat, "quadrature half width"),
    Key::new("v_spacing", "0.05", Kind::PositiveFloat, "quadrature spacing"),
    Key::new(
        "eigen_threshold",
        "1e-5",
        Kind::PositiveFloat,
        "largest accepted eigenrelation residual",
    ),
    Key::new(
        "biorth_threshold",
        "1e-8",
        Kind::PositiveFloat,
        "largest accepted biorthogonality deviation",
    ),
];

pub const EVOLVE_KEYS: &[Key] = &[
    Key::new("dim", "1", DIMS, "phase-space dimension n"),
    Key::new("x_half_width", "16", Kind::PositiveFloat, "x half width"),
    Key::new("x_points", "256", Kind::Int, "x points"),
    Key::new("v_half_width", "10", Kind::PositiveFloat, "v half width"),
    Key::new("v_points", "160", Kind::Int, "v points"),
    Key::new(
        "potential",
        "inverse_power",
        Kind::Choice(&["zero", "inverse_power"]),
        "potential family",
    ),
    Key::new("c", "0.5", Kind::Float, "potential amplitude"),
    Key::new("rho", "2", Kind::Float, "potential decay exponent"),
    Key::new("backend", "fourier_factorized", BACKENDS, "free-step backend"),
    Key::new(
        "splitting",
        "strang",
        Kind::Choice(&["lie", "strang"]),
        "splitting scheme",
    ),
    Key::new(
        "interpolation",
        "linear",
        Kind::Choice(&["linear", "cubic"]),
        "drift interpolation",
    ),
    Key::new(
        "boundary",
        "zero_fill",
        Kind::Choice(&["zero_fill"]),
        "drift boundary rule",
    ),
    Key::new("dt", "0.01", Kind::PositiveFloat, "step"),
    Key::new("t_total", "2", Kind::PositiveFloat, "final time"),
    Key::new("record_every", "10", Kind::Int, "steps between CSV rows"),
    Key::new(
        "initial",
        "maxwellian",
        Kind::Choice(&["maxwellian", "local_equilibrium", "gaussian", "file"]),
        "initial datum",
    ),
    Key::new("x0", "0", Kind::Float, "gaussian centre in every x coordinate"),
    Key::new("v0", "0", Kind::Float, "gaussian centre in every v coordinate"),
    Key::new("width", "1", Kind::PositiveFloat, "gaussian standard deviation"),
    Key::new(
        "input",
        "",
        Kind::Text,
        "field file for initial = file (.csv or binary)",
    ),
    Key::new(
        "snapshot_times",
        "",
        Kind::FloatList,
        "times of field snapshots; empty means t_total",
    ),
    Key::new(
        "snapshot_prefix",
        "",
        Kind::Text,
        "snapshot path prefix; empty means the --out stem",
    ),
];

pub const BOOTSTRAP_KEYS: &[Key] = &[
    Key::new(
        "rho_list",
        "1.01,1.1,1.2,1.5",
        Kind::FloatList,
        "decay exponents rho > 1",
    ),
    Key::new("max_iter", "10000", Kind::Int, "iteration cap"),
];

#[derive(Debug, Parser)]
#[command(name = "kfp", version, about = "Kramers-Fokker-Planck propagation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the time profiles and the exact free 1->inf norm.
    KernelEval(Common),
    /// Measure norms over time and fit decay exponents.
    DecayScan(Common),
    /// Check the shifted Hermite eigenrelation and biorthogonality.
    SpectralCheck(Common),
    /// Run the splitting scheme and record conservation diagnostics.
    Evolve(Common),
    /// Trace the exponent recursion for a list of rho.
    Bootstrap(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// key = value configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output CSV; stdout when absent
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Override one configuration key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    ThresholdFailure,
}

struct Output<'a> {
    out_path: Option<&'a Path>,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Output<'_> {
    fn emit(&mut self, body: &str) -> Result<()> {
        match self.out_path {
            Some(p) => write_atomic(p, |w| w.write_all(body.as_bytes())),
            None => Ok(self.stdout.write_all(body.as_bytes())?),
        }
    }

    fn note(&mut self, line: &str) {
        let _ = writeln!(self.stderr, "{line}");
    }
}

/// Parses `args` (including the program name) and runs one command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = stdout.write_all(text.as_bytes());
            } else {
                let _ = stderr.write_all(text.as_bytes());
            }
            return code;
        }
    };
    let (name, schema, common): (&str, &[Key], &Common) = match &cli.command {
        Command::KernelEval(c) => ("kernel-eval", KERNEL_EVAL_KEYS, c),
        Command::DecayScan(c) => ("decay-scan", DECAY_SCAN_KEYS, c),
        Command::SpectralCheck(c) => ("spectral-check", SPECTRAL_CHECK_KEYS, c),
        Command::Evolve(c) => ("evolve", EVOLVE_KEYS, c),
        Command::Bootstrap(c) => ("bootstrap", BOOTSTRAP_KEYS, c),
    };
    let cfg = match Config::load(name, schema, common.config.as_deref(), &common.set) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let _ = writeln!(stderr, "# resolved configuration for {name}");
    for line in cfg.lines() {
        let _ = writeln!(stderr, "#   {line}");
    }
    let mut out = Output {
        out_path: common.out.as_deref(),
        stdout,
        stderr,
    };
    let result = match &cli.command {
        Command::KernelEval(_) => kernel_eval(&cfg, &mut out),
        Command::DecayScan(_) => decay_scan(&cfg, &mut out),
        Command::SpectralCheck(_) => spectral_check(&cfg, &mut out),
        Command::Evolve(_) => cmd_evolve(&cfg, &mut out),
        Command::Bootstrap(_) => bootstrap(&cfg, &mut out),
    };
    match result {
        Ok(Verdict::Pass) => EXIT_OK,
        Ok(Verdict::ThresholdFailure) => EXIT_THRESHOLD,
        Err(e) => {
            out.note(&format!("error: {e}"));
            EXIT_USAGE
        }
    }
}

fn dim(cfg: &Config) -> Result<usize> {
    cfg.usize("dim")
}

fn count(cfg: &Config, key: &str) -> Result<usize> {
    let v = cfg.usize(key)?;
    if v == 0 {
        return Err(Error::Config(format!("{key} must be at least 1")));
    }
    Ok(v)
}

fn positive_times(cfg: &Config, key: &str) -> Result<Vec<f64>> {
    let ts = cfg.list(key)?;
    if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::Config(format!(
            "{key} contains {t}; times must be positive and finite"
        )));
    }
    Ok(ts)
}

fn window(cfg: &Config, key: &str) -> Result<(f64, f64)> {
    match cfg.list(key)?.as_slice() {
        &[a, b] if a > 0.0 && a < b => Ok((a, b)),
        other => Err(Error::Config(format!(
            "{key} must be two increasing positive times, got {other:?}"
        ))),
    }
}

fn fmt_q(q: f64) -> String {
    if q.is_infinite() {
        "inf".into()
    } else {
        q.to_string()
    }
}

/// Shortest round-trip float, switching to exponent form outside [1e-4, 1e15).
struct Num(f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

pub fn kernel_eval_csv(cfg: &Config) -> Result<String> {
    let n = dim(cfg)?;
    let times = positive_times(cfg, "times")?;
    if times.is_empty() {
        return Err(Error::Config("times is empty".into()));
    }
    let mut s = cfg.csv_preamble();
    s.push_str("t,sigma,theta,gamma,omega,norm_1_to_inf\n");
    for t in times {
        let p = time_profiles(t)?;
        let _ = writeln!(
            s,
            "{t},{},{},{},{},{}",
            Num(p.sigma),
            Num(p.theta),
            Num(p.gamma),
            Num(p.omega),
            Num(free_norm_1_to_inf(t, n)?)
        );
    }
    Ok(s)
}

fn kernel_eval(cfg: &Config, out: &mut Output) -> Result<Verdict> {
    out.emit(&kernel_eval_csv(cfg)?)?;
    Ok(Verdict::Pass)
}

fn log_spaced(a: f64, b: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![a];
    }
    (0..k).map(|i| a * (b / a).powf(i as f64 / (k - 1) as f64)).collect()
}

fn probe_grid(cfg: &Config, n: usize) -> Result<PhaseGrid> {
    let x = Axis::new(cfg.f64("x_half_width")?, count(cfg, "x_points")?)?;
    let v = Axis::new(cfg.f64("v_half_width")?, count(cfg, "v_points")?)?;
    PhaseGrid::uniform(n, x, v)
}

fn decay_scan(cfg: &Config, out: &mut Output) -> Result<Verdict> {
    let n = dim(cfg)?;
    let pairs = cfg.pairs("pairs")?;
    if pairs.is_empty() {
        return Err(Error::Config("pairs is empty".into()));
    }
    for &(p, q) in &pairs {
        if !(p >= 1.0 && p <= q) {
            return Err(Error::Config(format!("pair {p}:{} needs 1 <= p <= q", fmt_q(q))));
        }
    }
    let mut times = positive_times(cfg, "times")?;
    if times.is_empty() {
        let (a, b) = (cfg.f64("t_min")?, cfg.f64("t_max")?);
        if a >= b {
            return Err(Error::Config(format!("t_min = {a} must be below t_max = {b}")));
        }
        times = log_spaced(a, b, count(cfg, "t_count")?);
    }
    let short = window(cfg, "short_window")?;
    let long = window(cfg, "long_window")?;
    let source = cfg.text("source").to_string();

    let per_time: Vec<Result<Vec<NormRecord>>> = if source == "analytic" {
        if let Some(&(p, q)) = pairs.iter().find(|(p, q)| !(*p == 1.0 && q.is_infinite())) {
            return Err(Error::Config(format!(
                "source = analytic only knows the pair 1:inf, got {p}:{}; use source = probe",
                fmt_q(q)
            )));
        }
        times
            .iter()
            .map(|&t| {
                let v = free_norm_1_to_inf(t, n)?;
                Ok(vec![NormRecord {
                    p: 1.0,
                    q: f64::INFINITY,
                    t,
                    value: v,
                    bound: v,
                    kind: NormKind::OperatorNormExact,
                }])
            })
            .collect()
    } else {
        let grid = probe_grid(cfg, n)?;
        let backend: Backend = cfg.parsed("backend")?;
        let seed = cfg.u64("seed")?;
        let families: Vec<(f64, Vec<Field>)> = {
            let mut ps: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            ps.dedup();
            ps.into_iter()
                .map(|p| (p, default_test_family(&grid, p, seed)))
                .collect()
        };
        times
            .par_iter()
            .map(|&t| {
                let step = FreeStepper::new(&grid, t, backend)?;
                pairs
                    .iter()
                    .map(|&(p, q)| {
                        let family = &families.iter().find(|f| f.0 == p).expect("family per p").1;
                        let bound = free_norm_comparator(p, q, t, n)?;
                        norm_lower_bound(|f| step.apply(f), p, q, t, family, bound)
                    })
                    .collect()
            })
            .collect()
    };

    let mut s = cfg.csv_preamble();
    s.push_str("t,p,q,norm_est,bound,regime\n");
    let mut records: Vec<NormRecord> = Vec::new();
    let mut failure = None;
    for r in per_time {
        match r {
            Ok(recs) => {
                for rec in recs {
                    let regime = if rec.t >= short.0 && rec.t <= short.1 {
                        Regime::ShortTime.as_str()
                    } else if rec.t >= long.0 && rec.t <= long.1 {
                        Regime::LongTime.as_str()
                    } else {
                        "intermediate"
                    };
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{regime}",
                        rec.t,
                        rec.p,
                        fmt_q(rec.q),
                        Num(rec.value),
                        Num(rec.bound)
                    );
                    records.push(rec);
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    if let Some(e) = failure {
        s.push_str("# scan aborted: propagation failed\n");
        out.emit(&s)?;
        return Err(e);
    }

    let mut verdict = Verdict::Pass;
    for &(p, q) in &pairs {
        let recs: Vec<NormRecord> = records.iter().filter(|r| r.p == p && r.q == q).copied().collect();
        if p == q {
            if let Some(r) = recs.iter().find(|r| r.value > 1.0 + 1e-6) {
                let line = format!("# note p=q={p}: norm {} exceeds 1 at t={}", r.value, r.t);
                out.note(&line);
                s.push_str(&line);
                s.push('\n');
            }
        }
        for (regime, win, tol) in [
            (Regime::ShortTime, short, cfg.f64("short_tolerance")?),
            (Regime::LongTime, long, cfg.f64("long_tolerance")?),
        ] {
            let line = match fit_decay_exponent(&recs, win, regime, n) {
                Ok(fit) => {
                    let pass = fit.deviation() <= tol;
                    if !pass {
                        verdict = Verdict::ThresholdFailure;
                    }
                    format!(
                        "# fit regime={regime} p={p} q={} fitted={:.6} expected={:.6} r2={:.8} window={}:{} tolerance={tol} status={}",
                        fmt_q(q),
                        fit.fitted_exponent,
                        fit.expected_exponent,
                        fit.r2,
                        win.0,
                        win.1,
                        if pass { "pass" } else { "fail" }
                    )
                }
                Err(Error::Data(msg)) => format!("# fit regime={regime} p={p} q={} skipped: {msg}", fmt_q(q)),
                Err(e) => return Err(e),
            };
            out.note(&line);
            s.push_str(&line);
            s.push('\n');
        }
    }
    out.emit(&s)?;
    Ok(verdict)
}

fn spectral_check(cfg: &Config, out: &mut Output) -> Result<Verdict> {
    let n = dim(cfg)?;
    let max_degree = cfg.usize("max_degree")?;
    let xis = cfg.list("xi_list")?;
    if xis.is_empty() {
        return Err(Error::Config("xi_list is empty".into()));
    }
    let eig_tol = cfg.f64("eigen_threshold")?;
    let bio_tol = cfg.f64("biorth_threshold")?;
    let axis = Axis::with_spacing(cfg.f64("v_half_width")?, cfg.f64("v_spacing")?)?;
    let vgrid = VelocityGrid::uniform(n, axis)?;
    let indices = multi_indices(n, max_degree)?;

    let mut s = cfg.csv_preamble();
    s.push_str("check,alpha,beta,xi,value,threshold,status\n");
    let mut worst_eig = (0.0f64, String::new(), 0.0);
    let mut worst_bio = (0.0f64, String::new(), String::new(), 0.0);
    for &xi_mag in &xis {
        let xi = vec![xi_mag / (n as f64).sqrt(); n];
        for alpha in &indices {
            let r = eigen_residual(&shifted_eigenfunction(alpha, &xi, &vgrid)?)?;
            let status = if r < eig_tol { "pass" } else { "fail" };
            let _ = writeln!(s, "eigen,{alpha},,{xi_mag},{r:e},{eig_tol:e},{status}");
            if r.is_nan() || r > worst_eig.0 {
                worst_eig = (r, alpha.to_string(), xi_mag);
            }
        }
        let m = biorthogonality_matrix(&xi, max_degree, &vgrid)?;
        let (d, a, b) = m.max_deviation();
        let status = if d < bio_tol { "pass" } else { "fail" };
        let (ia, ib) = (m.indices[a].to_string(), m.indices[b].to_string());
        let _ = writeln!(s, "biorthogonality,{ia},{ib},{xi_mag},{d:e},{bio_tol:e},{status}");
        if d.is_nan() || d > worst_bio.0 {
            worst_bio = (d, ia, ib, xi_mag);
        }
    }
    let eig_ok = worst_eig.0 < eig_tol;
    let bio_ok = worst_bio.0 < bio_tol;
    let summary = [
        format!(
            "# worst eigen residual {:e} at alpha={} xi={} ({})",
            worst_eig.0,
            worst_eig.1,
            worst_eig.2,
            if eig_ok { "pass" } else { "fail" }
        ),
        format!(
            "# worst biorthogonality deviation {:e} at alpha={} beta={} xi={} ({})",
            worst_bio.0,
            worst_bio.1,
            worst_bio.2,
            worst_bio.3,
            if bio_ok { "pass" } else { "fail" }
        ),
    ];
    for line in &summary {
        out.note(line);
        s.push_str(line);
        s.push('\n');
    }
    out.emit(&s)?;
    Ok(if eig_ok && bio_ok {
        Verdict::Pass
    } else {
        Verdict::ThresholdFailure
    })
}

fn potential_from(cfg: &Config, n: usize) -> Result<Potential> {
    match cfg.text("potential") {
        "zero" => Ok(Potential::zero(n)),
        _ => Potential::inverse_power(n, cfg.f64("c")?, cfg.f64("rho")?),
    }
}

fn initial_field(cfg: &Config, grid: &PhaseGrid, pot: &Potential) -> Result<Field> {
    match cfg.text("initial") {
        "maxwellian" => {
            let m = Field::from_fn(grid, |x, v| maxwellian_sqrt(x, v, pot).unwrap_or(0.0));
            Ok(m)
        }
        "local_equilibrium" => Ok(Field::from_fn(grid, |x, v| {
            let x2: f64 = x.iter().map(|a| a * a).sum();
            let v2: f64 = v.iter().map(|a| a * a).sum();
            (-0.5 * x2 - 0.25 * v2).exp()
        })),
        "gaussian" => {
            let (x0, v0, w) = (cfg.f64("x0")?, cfg.f64("v0")?, cfg.f64("width")?);
            Ok(Field::from_fn(grid, |x, v| {
                let dx: f64 = x.iter().map(|a| (a - x0).powi(2)).sum();
                let dv: f64 = v.iter().map(|a| (a - v0).powi(2)).sum();
                (-(dx + dv) / (2.0 * w * w)).exp()
            }))
        }
        _ => {
            let path = cfg.text("input");
            if path.is_empty() {
                return Err(Error::Config("initial = file needs input = <path>".into()));
            }
            let f = if path.ends_with(".csv") {
                read_field_csv(path)?
            } else {
                read_field(path)?
            };
            if f.grid() != grid {
                return Err(Error::Config(format!(
                    "grid of {path} differs from the configured grid"
                )));
            }
            Ok(f)
        }
    }
}

fn snapshot_path(prefix: &str, t: f64) -> PathBuf {
    PathBuf::from(format!("{prefix}.t{t}.kfpf"))
}

fn cmd_evolve(cfg: &Config, out: &mut Output) -> Result<Verdict> {
    let n = dim(cfg)?;
    let x = Axis::new(cfg.f64("x_half_width")?, count(cfg, "x_points")?)?;
    let v = Axis::new(cfg.f64("v_half_width")?, count(cfg, "v_points")?)?;
    // the memory guard in PhaseGrid refuses oversized grids before any field exists
    let grid = PhaseGrid::uniform(n, x, v)?;
    let pot = potential_from(cfg, n)?;
    let dt = cfg.f64("dt")?;
    let plan = PropagatorPlan::new(dt)?
        .with_backend(cfg.parsed::<Backend>("backend")?)
        .with_splitting(cfg.parsed::<Splitting>("splitting")?)
        .with_interpolation(cfg.parsed::<Interpolation>("interpolation")?);
    plan.validate(&grid)?;
    let t_total = cfg.f64("t_total")?;
    let steps = (t_total / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - t_total).abs() > 1e-9 * t_total {
        return Err(Error::Config(format!(
            "t_total = {t_total} is not a multiple of dt = {dt}"
        )));
    }
    let every = count(cfg, "record_every")?;
    let mut sample_steps: Vec<usize> = (every..=steps).step_by(every).collect();
    if sample_steps.last() != Some(&steps) {
        sample_steps.push(steps);
    }
    let mut snap_steps = Vec::new();
    let snap_times = positive_times(cfg, "snapshot_times")?;
    for &t in &snap_times {
        let k = (t / dt).round() as usize;
        if k == 0 || k > steps || ((k as f64) * dt - t).abs() > 1e-9 * t.max(dt) {
            return Err(Error::Config(format!(
                "snapshot time {t} is not a multiple of dt within (0, t_total]"
            )));
        }
        snap_steps.push(k);
    }
    if snap_steps.is_empty() {
        snap_steps.push(steps);
    }
    let mut all_steps: Vec<usize> = sample_steps.iter().chain(&snap_steps).copied().collect();
    all_steps.sort_unstable();
    all_steps.dedup();
    let sample_times: Vec<f64> = all_steps.iter().map(|&k| k as f64 * dt).collect();

    let f0 = initial_field(cfg, &grid, &pot)?;
    let m = Field::from_fn(&grid, |x, v| maxwellian_sqrt(x, v, &pot).unwrap_or(0.0));
    let ev = evolve(&f0, t_total, &pot, &plan, &sample_times)?;

    let stats = |t: f64, f: &Field| -> Result<String> {
        let mass: Complex64 = pairing(&m, f)?;
        Ok(format!(
            "{t},{},{},{},{},{}\n",
            Num(mass.re),
            Num(lp_norm(f, 1.0)?),
            Num(lp_norm(f, 2.0)?),
            Num(lp_norm(f, f64::INFINITY)?),
            Num(f.min_real())
        ))
    };
    let mut s = cfg.csv_preamble();
    s.push_str("t,mass_functional,norm_l1,norm_l2,norm_linf,positivity_min\n");
    s.push_str(&stats(0.0, &f0)?);
    for (k, snap) in all_steps.iter().zip(&ev.snapshots) {
        if sample_steps.contains(k) {
            s.push_str(&stats(snap.t, &snap.field)?);
        }
    }
    let _ = writeln!(s, "# shifted_out_mass = {}", Num(ev.shifted_out_mass));

    let prefix = match (cfg.text("snapshot_prefix"), out.out_path) {
        ("", Some(p)) => Some(p.with_extension("").to_string_lossy().into_owned()),
        ("", None) => None,
        (p, _) => Some(p.to_string()),
    };
    match prefix {
        Some(prefix) => {
            for (k, snap) in all_steps.iter().zip(&ev.snapshots) {
                if snap_steps.contains(k) {
                    let path = snapshot_path(&prefix, snap.t);
                    write_field(&path, &snap.field)?;
                    out.note(&format!("# wrote snapshot {}", path.display()));
                }
            }
        }
        None => out.note("# no --out or snapshot_prefix given; field snapshots not written"),
    }
    out.emit(&s)?;
    Ok(Verdict::Pass)
}

fn bootstrap(cfg: &Config, out: &mut Output) -> Result<Verdict> {
    let rhos = cfg.list("rho_list")?;
    if rhos.is_empty() {
        return Err(Error::Config("rho_list is empty".into()));
    }
    if let Some(r) = rhos.iter().find(|r| !(**r > 1.0 && r.is_finite())) {
        return Err(Error::Config(format!("rho_list contains {r}; every rho must exceed 1")));
    }
    let max_iter = count(cfg, "max_iter")?;
    let mut s = cfg.csv_preamble();
    s.push_str("rho,k,r_k,terminated,fixed_point\n");
    let mut verdict = Verdict::Pass;
    for &rho in &rhos {
        let trace = bootstrap_exponents(rho, max_iter)?;
        let ell = trace.fixed_point.map_or("nan".to_string(), |l| l.to_string());
        for (i, r) in trace.sequence.iter().enumerate() {
            let done = trace.terminated_at == Some(i + 1);
            let _ = writeln!(s, "{rho},{},{},{done},{ell}", i + 1, Num(*r));
        }
        if trace.terminated_at.is_none() {
            verdict = Verdict::ThresholdFailure;
            out.note(&format!("# rho = {rho}: no r_k > 1 within {max_iter} iterations"));
        }
    }
    out.emit(&s)?;
    Ok(verdict)
}
