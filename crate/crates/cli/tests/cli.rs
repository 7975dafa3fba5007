use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn leafwise(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leafwise"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn report(out: &Path, command: &str) -> serde_json::Value {
    let text = fs::read_to_string(out.join(format!("{command}_report.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn verify_passes_on_euclidean_planes() {
    let dir = tempfile::tempdir().unwrap();
    let o = leafwise(&["verify", "--scenario", "euclidean_planes"], dir.path());
    assert!(o.status.success(), "{}\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "verify");
    assert_eq!(r["pass"], true);
    let checks = r["checks"].as_array().unwrap();
    assert!(checks.len() > 30);
    assert!(checks.iter().all(|c| c["pass"] == true));
    assert!(checks.iter().any(|c| c["id"] == "chart_tangency"));
}

#[test]
fn check_involutive_flags_contact() {
    let dir = tempfile::tempdir().unwrap();
    let o = leafwise(&["check-involutive", "--scenario", "contact3d"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("at base point [0.000000, 0.000000, 0.000000]: 1.0000000000000000e0"), "{text}");
    assert!(text.contains("scenario flagged non-involutive"), "{text}");
    let r = report(dir.path(), "check-involutive");
    let base = r["checks"].as_array().unwrap().iter().find(|c| c["id"] == "involutivity_at_base").unwrap();
    assert!((base["value"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    let csv = fs::read_to_string(dir.path().join("involutivity.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x1,x2,x3,residual"));
    assert_eq!(csv.lines().count(), 1 + 9 * 9 * 9);
}

#[test]
fn chart_on_sphere_is_tangent() {
    let dir = tempfile::tempdir().unwrap();
    let o = leafwise(&["chart", "--scenario", "sphere_foliation"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("max tangency residual: ")).unwrap();
    let value: f64 = line["max tangency residual: ".len()..].split_whitespace().next().unwrap().parse().unwrap();
    assert!(value <= 1e-5, "{line}");
    let csv = fs::read_to_string(dir.path().join("chart.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x1,x2,x3,y1,y2,y3,residual"));
    assert_eq!(csv.lines().count(), 1 + 729);
    // Points sharing the transverse coordinate lie on one sphere.
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    let mut radii: std::collections::BTreeMap<u64, (f64, f64)> = Default::default();
    for row in &rows {
        let r = (row[3] * row[3] + row[4] * row[4] + row[5] * row[5]).sqrt();
        let e = radii.entry(row[2].to_bits()).or_insert((r, r));
        e.0 = e.0.min(r);
        e.1 = e.1.max(r);
    }
    assert_eq!(radii.len(), 9);
    for (lo, hi) in radii.values() {
        assert!(hi - lo <= 1e-5, "{lo} {hi}");
    }
}

#[test]
fn leaf_refuses_contact_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = leafwise(&["leaf", "--scenario", "contact3d"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not involutive"));
    let o = leafwise(&["leaf", "--scenario", "contact3d", "--allow-non-involutive"], dir.path());
    assert!(o.status.success());
    let r = report(dir.path(), "leaf");
    assert!(r["checks"][0]["value"].as_f64().unwrap() > 1e-2);
    assert_eq!(r["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        for cmd in ["connection", "compare", "jacobi"] {
            let o = leafwise(&[cmd, "--scenario", "warped_product", "--seed", "7"], dir);
            assert!(o.status.success(), "{cmd}");
        }
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn seed_and_step_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let o = leafwise(&["geodesic", "--scenario", "warped_product", "--step", "0.01"], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("geodesic.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 101);
    assert_eq!(report(dir.path(), "geodesic")["numerics"]["h"], 0.01);

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    leafwise(&["connection", "--scenario", "warped_product", "--seed", "1"], a.path());
    leafwise(&["connection", "--scenario", "warped_product", "--seed", "2"], b.path());
    let x = fs::read(a.path().join("connection.csv")).unwrap();
    let y = fs::read(b.path().join("connection.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no_rank.toml");
    fs::write(
        &path,
        "n = 3\nmetric = [\"1\", \"0\", \"0\", \"1\", \"0\", \"1\"]\nframe = [[\"1\", \"0\", \"0\"]]\n[domain]\nlower = [-1.0, -1.0, -1.0]\nupper = [1.0, 1.0, 1.0]\n",
    )
    .unwrap();
    let o = leafwise(&["geodesic", "--scenario", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("r required"));

    let o = leafwise(&["geodesic", "--scenario", "no_such_scenario"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_scenario"));
}

#[test]
fn custom_scenario_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cone.toml");
    fs::write(
        &path,
        r#"name = "cone"
n = 2
r = 1
metric = ["1", "0", "1"]
frame = [["x1", "x2"]]
base_point = [1.0, 0.5]
initial_velocity = [0.2, 0.1]

[domain]
lower = [0.5, -1.0]
upper = [2.0, 1.0]

[numerics]
m = 5
"#,
    )
    .unwrap();
    let o = leafwise(&["leaf", "--scenario", path.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "leaf");
    assert_eq!(r["scenario"], "cone");
    assert_eq!(r["numerics"]["m"], 5);
    assert_eq!(r["pass"], true);
}
