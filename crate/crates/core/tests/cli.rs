//! End-to-end runs of the `wgmirror` executable.

use std::path::Path;
use std::process::{Command, Output};

use wgmirror::config::RunConfig;
use wgmirror::output::{read_numeric_csv, Manifest};

fn wgmirror(args: &[&str], paths: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgmirror"))
        .args(args)
        .args(paths)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> std::path::PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&RunConfig::device_default().to_json()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn missing_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", |v| {
        v.as_object_mut().unwrap().remove("seed");
    });
    let o = wgmirror(&["mode", "--config"], &[&cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", |v| {
        v["geometry"]["widht_nm"] = 300.0.into();
    });
    let o = wgmirror(&["mode", "--config"], &[&cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("widht_nm"));
}

#[test]
fn unguided_waveguide_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", |v| {
        v["geometry"]["width_nm"] = 50.0.into();
    });
    let out = dir.path().join("out");
    let o = wgmirror(&["mode", "--config"], &[&cfg, Path::new("--out"), &out]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("no bound mode"));
}

#[test]
fn malformed_table_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    std::fs::write(
        &table,
        "qd,lambda_nm,gamma_max,gamma_min,nu_gamma,nu_I\n1,923.45,1.00,0.63,0.27,0.42\n2,925.82,x,0.77,0.15,0.64\n",
    )
    .unwrap();
    let out = dir.path().join("a");
    let o = wgmirror(&["analyze", "--lifetimes"], &[&table, Path::new("--out"), &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn config_and_preset_are_exclusive() {
    let o = wgmirror(&["mode", "--preset", "qd1", "--config", "x.json"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = RunConfig::load(&root.join("default.json")).unwrap();
    assert_eq!(default, RunConfig::device_default());
    let qd1 = RunConfig::load(&root.join("qd1.json")).unwrap();
    assert_eq!(qd1.hash(), RunConfig::qd1().unwrap().hash());
}

#[test]
fn same_seed_reproduces_and_new_seed_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = wgmirror(&["simulate", "--preset", "qd1", "--seed", seed, "--out"], &[&out]);
        assert!(o.status.success(), "{}", stderr(&o));
        Manifest::load(&out.join("manifest.json")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    // the seed is part of the configuration
    assert_ne!(a.config_hash, c.config_hash);
    let sweep = |m: &Manifest| m.files.iter().find(|f| f.path == "sweep.csv").unwrap().sha256.clone();
    assert_ne!(sweep(&a), sweep(&c));
}

#[test]
fn perfect_absorber_gives_a_flat_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", |v| {
        v["mirror"]["r_m_mag"] = 0.0.into();
        v["sweep"]["noiseless"] = true.into();
    });
    let out = dir.path().join("sim");
    let o = wgmirror(&["simulate", "--config"], &[&cfg, Path::new("--out"), &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_numeric_csv(&out.join("sweep.csv"), &["voltage", "phi_rad", "intensity_counts"]).unwrap();
    let first = rows[0][2];
    assert!(rows.iter().all(|r| (r[2] - first).abs() <= 1e-9 * first));
}

#[test]
fn analysis_from_loose_files_matches_the_manifest_route() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let o = wgmirror(&["simulate", "--preset", "qd1", "--out"], &[&sim]);
    assert!(o.status.success(), "{}", stderr(&o));

    let via_manifest = dir.path().join("m");
    let o = wgmirror(&["analyze", "--manifest"], &[&sim.join("manifest.json"), Path::new("--out"), &via_manifest]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut args: Vec<std::path::PathBuf> = vec!["--sweep".into(), sim.join("sweep.csv")];
    for i in 0..12 {
        args.push("--hist".into());
        args.push(sim.join(format!("hist/hist_{i:03}.csv")));
    }
    args.push("--out".into());
    let via_files = dir.path().join("f");
    args.push(via_files.clone());
    let refs: Vec<&Path> = args.iter().map(|p| p.as_path()).collect();
    let o = wgmirror(&["analyze", "--preset", "qd1"], &refs);
    assert!(o.status.success(), "{}", stderr(&o));

    let a = std::fs::read(via_manifest.join("report.json")).unwrap();
    let b = std::fs::read(via_files.join("report.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reference_sweep_gives_a_phase_map() {
    let dir = tempfile::tempdir().unwrap();
    let coeff = 11.0 * std::f64::consts::PI / 1200.0;
    let mut text = String::from("voltage,intensity_counts\n");
    for i in 0..150 {
        let v = 14.0 * i as f64 / 149.0;
        text.push_str(&format!("{v},{}\n", 1e4 * (1.0 + 0.7 * (2.0 * coeff * v * v + 0.4).cos())));
    }
    let reference = dir.path().join("ref.csv");
    std::fs::write(&reference, text).unwrap();
    let out = dir.path().join("pm");
    let o = wgmirror(&["analyze", "--reference"], &[&reference, Path::new("--out"), &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("phase_map.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("phase_map.json")).unwrap()).unwrap();
    assert_eq!(summary["reflection_ambiguous"], false);
}
