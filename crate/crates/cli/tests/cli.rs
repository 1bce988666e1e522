use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, sub: &[&str], config: &str) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_bumpfield"))
        .args(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(dir.join("out"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[test]
fn zero_duration_simulation_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["simulate"],
        "duration = 0.0\ntransient = 0.0\n",
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = data_lines(&dir.path().join("out/trajectory.csv"));
    assert_eq!(traj.len(), 2, "header plus one row");
    assert!(traj[0].starts_with("t,u_0,"));
    assert_eq!(traj[0].split(',').count(), 201);
    let v = data_lines(&dir.path().join("out/v_series.csv"));
    assert_eq!(v, vec!["t,peak_u,peak_a,V".to_owned(), v[1].clone()]);
}

#[test]
fn reruns_are_byte_identical_and_config_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        "duration = 20.0\ntransient = 5.0\nseed = 42\n[noise]\nvariant = \"white\"\neta = 1e-3\n";
    let first = run(dir.path(), &["simulate"], cfg);
    assert!(first.status.success(), "{}", stderr(&first));
    let out = dir.path().join("out");
    let a = std::fs::read(out.join("trajectory.csv")).unwrap();
    let b = std::fs::read(out.join("v_series.csv")).unwrap();
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 42"));
    assert!(echoed.contains("eta = 0.001"));

    let second = run(dir.path(), &["simulate"], cfg);
    assert!(second.status.success());
    assert_eq!(std::fs::read(out.join("trajectory.csv")).unwrap(), a);
    assert_eq!(std::fs::read(out.join("v_series.csv")).unwrap(), b);

    // the echo is itself a valid config reproducing the run
    let again = run(dir.path(), &["simulate"], &echoed);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(std::fs::read(out.join("v_series.csv")).unwrap(), b);

    let other = run(
        dir.path(),
        &["simulate"],
        &cfg.replace("seed = 42", "seed = 43"),
    );
    assert!(other.status.success());
    assert_ne!(std::fs::read(out.join("v_series.csv")).unwrap(), b);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("durationn = 5.0\n", "durationn"),
        ("[estimate.database]\nh_binn = 0.1\n", "h_binn"),
        ("tau = 0.0\n", "`tau`"),
        ("M = 2\n", "`M`"),
        ("sample_interval = 0.001\n", "sample_interval"),
        ("duration = 1.01\ntransient = 0.0\n", "duration"),
        ("[noise]\nvariant = \"white\"\neta = -1.0\n", "noise.eta"),
    ];
    for (cfg, key) in cases {
        let o = run(dir.path(), &["simulate"], cfg);
        assert!(!o.status.success(), "accepted {cfg:?}");
        assert!(stderr(&o).contains(key), "{cfg:?}: {}", stderr(&o));
    }
    let o = run(dir.path(), &["bifurcate"], "");
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bifurcate.values"), "{}", stderr(&o));
    let o = run(dir.path(), &["lift"], "[lift.sa]\ncooling = 1.5\n");
    assert!(!o.status.success());
    assert!(stderr(&o).contains("lift.sa.cooling"), "{}", stderr(&o));
}

#[test]
fn burst_estimate_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        "[estimate]\nmethod = \"burst\"\nv_grid = [-0.1, 0.1]\n[estimate.burst]\nn_bursts = 20\n";
    let o = run(dir.path(), &["estimate"], cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = data_lines(&dir.path().join("out/drift_diffusion.csv"));
    assert_eq!(lines[0], "v,mu,mu_se,d,d_se,n");
    assert_eq!(lines.len(), 3);
    let mu: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // outward drift on both sides of the barrier at the default A
    assert!(mu[0] < 0.0 && mu[1] > 0.0, "{mu:?}");
}

#[test]
fn dmap_then_lift_from_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("out/dmap_model");
    let cfg = format!(
        "[dmap]\nduration = 1600.0\nsample_every = 8.0\n[lift]\ntarget = 0.0\nmodel = {:?}\n",
        model.display().to_string()
    );
    let o = run(dir.path(), &["dmap"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let coords = data_lines(&dir.path().join("out/coordinates.csv"));
    assert_eq!(coords[0], "index,Phi2,Phi3,Phi4,Phi5,V");
    assert!(coords.len() > 200);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/dmap.json")).unwrap())
            .unwrap();
    assert!(
        report["spearman_phi2_v"].as_f64().unwrap() > 0.9,
        "{report}"
    );

    let o = run(dir.path(), &["lift"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let lift: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/lift.json")).unwrap())
            .unwrap();
    assert_eq!(lift["success"], true);
    assert!(lift["achieved_phi2"].as_f64().unwrap().abs() <= 1e-2);
    assert_eq!(data_lines(&dir.path().join("out/lifted.csv")).len(), 2);
}
