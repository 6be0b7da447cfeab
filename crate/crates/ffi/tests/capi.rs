use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use kfp_core::phase_space::{Axis, Field, PhaseGrid};
use kfp_core::propagator::{free_step, Backend};
use kfp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(kfp_last_error()) }
        .to_string_lossy()
        .into_owned()
}

struct Grid(*mut KfpGrid);

impl Grid {
    fn new(xp: usize, vp: usize) -> Self {
        let mut g = ptr::null_mut();
        assert_eq!(
            unsafe { kfp_grid_new(1, 8.0, xp, 6.0, vp, &mut g) },
            KfpStatus::Ok,
            "{}",
            last_error()
        );
        Grid(g)
    }
}

impl Drop for Grid {
    fn drop(&mut self) {
        unsafe { kfp_grid_free(self.0) }
    }
}

struct FieldHandle(*mut KfpField);

impl Drop for FieldHandle {
    fn drop(&mut self) {
        unsafe { kfp_field_free(self.0) }
    }
}

impl FieldHandle {
    fn values(&self) -> Vec<f64> {
        let n = unsafe { kfp_field_len(self.0) };
        let mut re = vec![0.0; n];
        assert_eq!(
            unsafe { kfp_field_values(self.0, re.as_mut_ptr(), ptr::null_mut(), n) },
            KfpStatus::Ok
        );
        re
    }
}

fn bump(x: f64, v: f64) -> f64 {
    (-(x - 0.5).powi(2) - 2.0 * (v + 0.3).powi(2)).exp()
}

fn samples(xp: usize, vp: usize) -> (PhaseGrid, Vec<f64>) {
    let g = PhaseGrid::uniform(1, Axis::new(8.0, xp).unwrap(), Axis::new(6.0, vp).unwrap()).unwrap();
    let f = Field::from_fn(&g, |x, v| bump(x[0], v[0]));
    let re = f.real_parts();
    (g, re)
}

fn field_from(grid: &Grid, re: &[f64]) -> FieldHandle {
    let mut f = ptr::null_mut();
    let s = unsafe { kfp_field_from_values(grid.0, re.as_ptr(), ptr::null(), re.len(), &mut f) };
    assert_eq!(s, KfpStatus::Ok, "{}", last_error());
    FieldHandle(f)
}

#[test]
fn time_profile_and_norm() {
    let mut p = KfpTimeProfile::default();
    assert_eq!(unsafe { kfp_time_profiles(1.0, &mut p) }, KfpStatus::Ok);
    assert!((p.theta - 5.432_848_644_004_314).abs() < 1e-12);
    assert!((p.gamma - p.sigma * p.theta).abs() < 1e-15);
    let mut norm = 0.0;
    assert_eq!(unsafe { kfp_free_norm_1_to_inf(1.0, 1, &mut norm) }, KfpStatus::Ok);
    assert!((norm - 0.439_688_378_237_730_07).abs() < 1e-13);

    assert_eq!(unsafe { kfp_time_profiles(-1.0, &mut p) }, KfpStatus::Domain);
    assert!(last_error().contains("time must be positive"));
    assert_eq!(unsafe { kfp_free_norm_1_to_inf(1.0, 4, &mut norm) }, KfpStatus::Domain);
}

#[test]
fn free_step_matches_the_library() {
    let grid = Grid::new(64, 64);
    let (g, re) = samples(64, 64);
    let f = field_from(&grid, &re);
    for (code, backend) in [
        (KFP_BACKEND_FOURIER_FACTORIZED, Backend::FourierFactorized),
        (KFP_BACKEND_DIRECT_KERNEL, Backend::DirectKernel),
    ] {
        let mut out = ptr::null_mut();
        assert_eq!(
            unsafe { kfp_free_step(f.0, 0.3, code, &mut out) },
            KfpStatus::Ok,
            "{}",
            last_error()
        );
        let out = FieldHandle(out);
        let want = free_step(&Field::from_real(&g, &re).unwrap(), 0.3, backend)
            .unwrap()
            .real_parts();
        assert_eq!(out.values(), want);
    }
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { kfp_free_step(f.0, 0.3, 9, &mut out) }, KfpStatus::Domain);
    assert!(out.is_null());
    assert!(last_error().contains("backend"));
}

#[test]
fn maxwellian_is_nearly_stationary_under_the_propagator() {
    let grid = Grid::new(64, 96);
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { kfp_field_maxwellian(grid.0, 0.5, 2.0, &mut m) }, KfpStatus::Ok);
    let m = FieldHandle(m);

    let mut prop = ptr::null_mut();
    let s = unsafe {
        kfp_propagator_new(
            grid.0,
            0.01,
            0.5,
            2.0,
            KFP_BACKEND_FOURIER_FACTORIZED,
            KFP_SPLITTING_STRANG,
            KFP_INTERPOLATION_CUBIC,
            &mut prop,
        )
    };
    assert_eq!(s, KfpStatus::Ok, "{}", last_error());

    let mut out = ptr::null_mut();
    let mut lost = f64::NAN;
    assert_eq!(
        unsafe { kfp_propagator_advance(prop, m.0, 50, &mut out, &mut lost) },
        KfpStatus::Ok
    );
    let out = FieldHandle(out);
    assert!((0.0..1e-10).contains(&lost));

    let (a, b) = (m.values(), out.values());
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut sup = 0.0;
    assert_eq!(unsafe { kfp_field_norm(m.0, f64::INFINITY, &mut sup) }, KfpStatus::Ok);
    assert!(gap < 1e-3 * sup, "gap {gap}");

    let mut mass0 = 0.0;
    let mut mass1 = 0.0;
    unsafe {
        assert_eq!(kfp_field_pairing(m.0, m.0, &mut mass0), KfpStatus::Ok);
        assert_eq!(kfp_field_pairing(m.0, out.0, &mut mass1), KfpStatus::Ok);
    }
    assert!((mass1 - mass0).abs() < 1e-4 * mass0);

    // A field from another grid is refused.
    let other = Grid::new(32, 96);
    let mut o = ptr::null_mut();
    assert_eq!(
        unsafe { kfp_field_maxwellian(other.0, 0.5, 2.0, &mut o) },
        KfpStatus::Ok
    );
    let o = FieldHandle(o);
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { kfp_propagator_advance(prop, o.0, 1, &mut out, ptr::null_mut()) },
        KfpStatus::Grid
    );

    unsafe { kfp_propagator_free(prop) };
}

#[test]
fn invalid_arguments_are_reported() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { kfp_grid_new(1, 8.0, 15, 6.0, 16, &mut g) }, KfpStatus::Grid);
    assert!(g.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { kfp_grid_new(1, 8.0, 16, 6.0, 16, ptr::null_mut()) },
        KfpStatus::NullPointer
    );

    let grid = Grid::new(16, 16);
    assert_eq!(unsafe { kfp_grid_len(grid.0) }, 256);
    assert_eq!(unsafe { kfp_grid_len(ptr::null()) }, 0);
    let short = [0.0; 10];
    let mut f = ptr::null_mut();
    let s = unsafe { kfp_field_from_values(grid.0, short.as_ptr(), ptr::null(), short.len(), &mut f) };
    assert_eq!(s, KfpStatus::BufferSize);
    let s = unsafe { kfp_field_from_values(ptr::null(), short.as_ptr(), ptr::null(), 256, &mut f) };
    assert_eq!(s, KfpStatus::NullPointer);
    assert!(last_error().contains("grid"));

    let field = field_from(&grid, &[1.0; 256]);
    let mut buf = vec![0.0; 8];
    assert_eq!(
        unsafe { kfp_field_values(field.0, buf.as_mut_ptr(), ptr::null_mut(), 8) },
        KfpStatus::BufferSize
    );
    let mut norm = 0.0;
    assert_eq!(unsafe { kfp_field_norm(field.0, 0.5, &mut norm) }, KfpStatus::Domain);

    let mut prop = ptr::null_mut();
    let s = unsafe { kfp_propagator_new(grid.0, 0.01, 0.5, 2.0, 0, 7, 0, &mut prop) };
    assert_eq!(s, KfpStatus::Domain);
    let s = unsafe { kfp_propagator_new(grid.0, 0.0, 0.5, 2.0, 0, 0, 0, &mut prop) };
    assert_eq!(s, KfpStatus::Domain);
    assert!(prop.is_null());

    unsafe {
        kfp_field_free(ptr::null_mut());
        kfp_grid_free(ptr::null_mut());
        kfp_propagator_free(ptr::null_mut());
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("f.kfpf").to_str().unwrap()).unwrap();
    let grid = Grid::new(32, 32);
    let (_, re) = samples(32, 32);
    let f = field_from(&grid, &re);
    assert_eq!(unsafe { kfp_field_write(f.0, path.as_ptr()) }, KfpStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { kfp_field_read(path.as_ptr(), &mut back) }, KfpStatus::Ok);
    let back = FieldHandle(back);
    assert_eq!(back.values(), re);

    let missing = CString::new(dir.path().join("none").to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { kfp_field_read(missing.as_ptr(), &mut g) }, KfpStatus::Io);
    assert_eq!(unsafe { kfp_field_read(ptr::null(), &mut g) }, KfpStatus::NullPointer);
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("kfp.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 15);
    for name in exports {
        assert!(
            text.contains(&format!(" {name}(")) || text.contains(&format!("*{name}(")),
            "{name} missing"
        );
    }
}

/// Compiles and runs a small C program against the static library when a C
/// compiler and the archive are available.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let Some(lib) = exe.parent().and_then(Path::parent).map(|d| d.join("libkfp_ffi.a")) else {
        return;
    };
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "kfp.h"

int main(void) {
    KfpGrid *g = NULL;
    KfpField *m = NULL, *out = NULL;
    double norm = 0.0;
    if (kfp_grid_new(1, 8.0, 32, 6.0, 32, &g) != KFP_STATUS_OK) return 1;
    if (kfp_field_maxwellian(g, 0.0, 2.0, &m) != KFP_STATUS_OK) return 2;
    if (kfp_free_step(m, 0.5, KFP_BACKEND_FOURIER_FACTORIZED, &out) != KFP_STATUS_OK) return 3;
    if (kfp_field_norm(out, 2.0, &norm) != KFP_STATUS_OK || !(norm > 0.0)) return 4;
    if (kfp_grid_new(1, 8.0, 31, 6.0, 32, &g) != KFP_STATUS_GRID) return 5;
    printf("%s|%s\n", kfp_status_name(KFP_STATUS_GRID), kfp_last_error());
    kfp_field_free(out);
    kfp_field_free(m);
    kfp_grid_free(g);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.starts_with("grid|"), "{stdout}");
}
