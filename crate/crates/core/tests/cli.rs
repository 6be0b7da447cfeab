use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kfp_core::config::SCHEMA_VERSION;
use kfp_core::phase_space::{read_field, write_field_csv, Axis, Field, PhaseGrid};

fn kfp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfp"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("run kfp")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn header(csv: &str) -> &str {
    csv.lines().find(|l| !l.starts_with('#')).unwrap()
}

const SMALL_EVOLVE: &[&str] = &[
    "--set",
    "x_points=32",
    "--set",
    "v_points=32",
    "--set",
    "x_half_width=8",
    "--set",
    "v_half_width=8",
    "--set",
    "t_total=0.1",
    "--set",
    "record_every=5",
];

#[test]
fn kernel_eval_writes_versioned_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(dir.path(), &["kernel-eval", "--out", "k.csv", "--set", "times=0.5,1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("times = 0.5,1"));

    let csv = fs::read_to_string(dir.path().join("k.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        format!("# kfp schema_version = {SCHEMA_VERSION}")
    );
    assert_eq!(lines.next().unwrap(), "# command = kernel-eval");
    assert!(csv.contains("# dim = 1\n# times = 0.5,1\n"));
    assert_eq!(header(&csv), "t,sigma,theta,gamma,omega,norm_1_to_inf");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2);
    let theta: f64 = rows[1][2].parse().unwrap();
    assert!((theta - 5.432_848_644_004_314).abs() < 1e-9);
}

#[test]
fn set_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "# tabulation\ndim = 3\ntimes = 1, 2, 3  # three rows\n",
    )
    .unwrap();
    let o = kfp(dir.path(), &["kernel-eval", "--config", "run.cfg", "--set", "times=4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("# dim = 3\n"));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "4");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "times = 1\nspeed = 3\n").unwrap();
    let o = kfp(dir.path(), &["kernel-eval", "--config", "bad.cfg"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("speed"));

    assert_eq!(code(&kfp(dir.path(), &["kernel-eval", "--config", "missing.cfg"])), 2);
    assert_eq!(code(&kfp(dir.path(), &["kernel-eval", "--set", "dim=4"])), 2);
    assert_eq!(code(&kfp(dir.path(), &["kernel-eval", "--bogus"])), 2);
    assert_eq!(code(&kfp(dir.path(), &[])), 2);

    let o = kfp(dir.path(), &["bootstrap", "--set", "rho_list=1.3,1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("rho_list contains 1"));
}

#[test]
fn failed_run_leaves_existing_output_alone() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("keep.csv");
    fs::write(&out, "previous contents\n").unwrap();
    let o = kfp(dir.path(), &["kernel-eval", "--out", "keep.csv", "--set", "times=-1"]);
    assert_eq!(code(&o), 2);
    assert_eq!(fs::read_to_string(&out).unwrap(), "previous contents\n");

    let o = kfp(dir.path(), &["kernel-eval", "--out", "keep.csv"]);
    assert_eq!(code(&o), 0);
    let names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names, vec!["keep.csv"], "no temporary files left behind");
}

#[test]
fn decay_scan_threshold_failure_exits_one_with_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(dir.path(), &["decay-scan", "--set", "dim=3", "--out", "d.csv"]);
    assert_eq!(code(&o), 1);
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(header(&csv), "t,p,q,norm_est,bound,regime");
    assert!(csv.contains("# fit regime=short_time") && csv.contains("status=pass"));
    assert!(csv.contains("# fit regime=long_time") && csv.contains("status=fail"));

    let o = kfp(dir.path(), &["decay-scan"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn bootstrap_reports_termination() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(dir.path(), &["bootstrap", "--set", "rho_list=1.2"]);
    assert_eq!(code(&o), 0);
    let rows = data_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 2.0 * 1.2 * 1.2 / 3.0);
    assert_eq!(rows[1][3], "true");
    assert!((rows[1][4].parse::<f64>().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn evolve_writes_rows_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["evolve", "--out", "ev.csv", "--set", "snapshot_times=0.05,0.1"];
    args.extend_from_slice(SMALL_EVOLVE);
    let o = kfp(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("ev.csv")).unwrap();
    assert_eq!(
        header(&csv),
        "t,mass_functional,norm_l1,norm_l2,norm_linf,positivity_min"
    );
    let rows = data_rows(&csv);
    let times: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(times.len(), 3);
    assert!(times[0] == 0.0 && (times[2] - 0.1).abs() < 1e-12);
    assert!(csv.contains("# shifted_out_mass = "));

    let snap = read_field(dir.path().join("ev.t0.1.kfpf")).unwrap();
    assert_eq!(snap.grid().shape(), vec![32, 32]);
    assert!(dir.path().join("ev.t0.05.kfpf").exists());

    // A snapshot can seed a later run on the same grid.
    let mut args = vec!["evolve", "--set", "initial=file", "--set", "input=ev.t0.1.kfpf"];
    args.extend_from_slice(SMALL_EVOLVE);
    let o = kfp(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn evolve_reads_csv_fields_and_checks_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let g = PhaseGrid::uniform(1, Axis::new(8.0, 32).unwrap(), Axis::new(8.0, 32).unwrap()).unwrap();
    let f = Field::from_fn(&g, |x, v| (-x[0] * x[0] - v[0] * v[0]).exp());
    write_field_csv(dir.path().join("init.csv"), &f).unwrap();

    let mut args = vec!["evolve", "--set", "initial=file", "--set", "input=init.csv"];
    args.extend_from_slice(SMALL_EVOLVE);
    let o = kfp(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    args.extend_from_slice(&["--set", "x_points=64"]);
    let o = kfp(dir.path(), &args);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("differs from the configured grid"));
}

#[test]
fn spectral_check_breach_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(
        dir.path(),
        &[
            "spectral-check",
            "--set",
            "max_degree=3",
            "--set",
            "eigen_threshold=1e-30",
        ],
    );
    assert_eq!(code(&o), 1);
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(header(&out), "check,alpha,beta,xi,value,threshold,status");
    assert!(out.contains(",fail"));
}
