use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn das(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_das")).args(args).output().expect("spawn das")
}

fn run_ok(args: &[&str]) -> Output {
    let out = das(args);
    assert!(out.status.success(), "das {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const SMALL_PLACEMENT: &str = r#"
experiment = "placement"
seed = 42

[channel]
alpha = 4.0
sigma_sh_db = 8.0

[system]
n_ports = 3

[optimizer]
n_iter = 5000
restarts = 2
snapshot_stride = 500

[mc]
n_samples = 2000

[sweep]
gamma = [0.0, 0.5]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// `(x, y)` of every port in the last snapshot of restart 0, point 0.
fn final_ports(trajectory: &str) -> Vec<(f64, f64)> {
    let mut rdr = csv::Reader::from_reader(trajectory.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let last_iter = rows.iter().map(|r| r[2].parse::<usize>().unwrap()).max().unwrap();
    rows.iter()
        .filter(|r| &r[0] == "0" && &r[1] == "0" && r[2].parse::<usize>().unwrap() == last_iter)
        .map(|r| (r[4].parse().unwrap(), r[5].parse().unwrap()))
        .collect()
}

#[test]
fn lists_at_least_seven_recipes() {
    let out = run_ok(&["list-recipes"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().filter_map(|l| l.split_whitespace().next()).collect();
    assert!(names.len() >= 7, "{text}");
    for expected in ["example1-lowerbound", "fig-trajectory-a6", "interference-shrinkage", "ase-curve"] {
        assert!(names.contains(&expected), "missing {expected}");
    }
}

#[test]
fn every_recipe_validates() {
    let text = String::from_utf8(run_ok(&["list-recipes"]).stdout).unwrap();
    for name in text.lines().filter_map(|l| l.split_whitespace().next()) {
        run_ok(&["validate", name]);
    }
}

#[test]
fn identical_configs_give_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_PLACEMENT);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["run", &cfg, "--output-dir", a.to_str().unwrap(), "--threads", "1"]);
    run_ok(&["run", &cfg, "--output-dir", b.to_str().unwrap(), "--threads", "3"]);
    assert_eq!(read(&a, "results.csv"), read(&b, "results.csv"));
    assert_eq!(read(&a, "trajectory.csv"), read(&b, "trajectory.csv"));
    let results = String::from_utf8(read(&a, "results.csv")).unwrap();
    assert!(results.starts_with("experiment,seed,point,alpha,gamma,radius,n_ports,csi,target_rate,restart,port,metric,value,std_error,units\n"));
    // every row carries the seed and its sweep coordinate
    for line in results.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], "42");
        assert!(f[4] == "0.0" || f[4] == "0.5", "{line}");
    }
}

#[test]
fn manifest_alone_reproduces_the_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_PLACEMENT);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["run", &cfg, "--output-dir", a.to_str().unwrap(), "--seed-override", "7"]);
    let manifest = a.join("manifest.json");
    run_ok(&["run", manifest.to_str().unwrap(), "--output-dir", b.to_str().unwrap()]);
    assert_eq!(read(&a, "results.csv"), read(&b, "results.csv"));
    let m: serde_json::Value = serde_json::from_slice(&read(&a, "manifest.json")).unwrap();
    assert_eq!(m["config"]["seed"], 7);
    assert!(m["version"].is_string());
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn seed_override_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_PLACEMENT);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["run", &cfg, "--output-dir", a.to_str().unwrap()]);
    run_ok(&["run", &cfg, "--output-dir", b.to_str().unwrap(), "--seed-override", "43"]);
    assert_ne!(read(&a, "trajectory.csv"), read(&b, "trajectory.csv"));
}

#[test]
fn negative_alpha_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "experiment = \"capacity\"\nseed = 1\n[channel]\nalpha = -2.0\n");
    let out_dir = dir.path().join("out");
    let out = das(&["run", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("alpha"), "{err}");
    assert!(!out_dir.exists() || fs::read_dir(&out_dir).unwrap().next().is_none());
}

#[test]
fn unknown_keys_and_missing_seed_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write_config(dir.path(), "typo.toml", "experiment = \"capacity\"\nseed = 1\n[system]\nn_port = 3\n");
    let out = das(&["validate", &typo]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("n_port"));
    let unseeded = write_config(dir.path(), "unseeded.toml", "experiment = \"capacity\"\n");
    assert!(!das(&["validate", &unseeded]).status.success());
}

#[test]
fn unattainable_target_is_reported_and_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sat.toml",
        "experiment = \"min-power\"\nseed = 1\n[system]\nn_ports = 1\ntarget_rate = 40.0\n\
         [layout]\ninit = \"colocated\"\n[interference]\ngamma = 1.0\n[mc]\nn_samples = 500\n",
    );
    let out_dir = dir.path().join("out");
    let out = das(&["run", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("not attainable"));
    assert!(!out_dir.exists() || fs::read_dir(&out_dir).unwrap().next().is_none());
}

#[test]
fn trajectory_recipe_settles_near_550() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["run", "fig-trajectory-a6", "--output-dir", dir.path().to_str().unwrap()]);
    let traj = String::from_utf8(read(dir.path(), "trajectory.csv")).unwrap();
    assert!(traj.starts_with("point,restart,iteration,port,x,y,power\n"));
    let ports = final_ports(&traj);
    assert_eq!(ports.len(), 3);
    for (x, y) in ports {
        let r = x.hypot(y);
        assert!((r - 550.0).abs() <= 30.0, "final port radius {r}");
    }
}

#[test]
fn lower_bound_recipe_radius_range() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["run", "example1-lowerbound", "--output-dir", dir.path().to_str().unwrap()]);
    let text = String::from_utf8(read(dir.path(), "results.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let radii: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[11] == "mean_radius_over_R" && r[9].is_empty())
        .map(|r| (r[3].parse().unwrap(), r[12].parse().unwrap()))
        .collect();
    assert_eq!(radii.len(), 5);
    for (alpha, r) in radii {
        assert!((0.57..=0.58).contains(&r), "alpha {alpha}: r/R = {r}");
    }
}
