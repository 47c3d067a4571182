use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcorr")).args(args).output().expect("spawn qcorr")
}

fn stdout(args: &[&str]) -> String {
    let out = qcorr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("QCORR_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}; rerun with QCORR_BLESS=1", path.display()));
    assert!(expected == actual, "{name} differs from golden output");
}

#[test]
fn measured_singlet_matrix() {
    let path = fixture("r_singlet_measured.json");
    let json: serde_json::Value = serde_json::from_str(&stdout(&["measures", "--R", path.to_str().unwrap(), "--format", "json"])).unwrap();
    let m = &json["measures"];
    for (name, expect) in [("bell_B", 0.993), ("steering_S", 0.969), ("fef", 0.969)] {
        let v = m[name].as_f64().unwrap();
        assert!((v - expect).abs() < 0.005, "{name} = {v}");
    }
    assert!(m["concurrence"].is_null());
    assert_eq!(m["hierarchy_H"], 3);
}

#[test]
fn measured_noise_matrix_is_accepted_with_warning() {
    let path = fixture("r_noise_measured.json");
    let out = qcorr(&["measures", "--R", path.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative eigenvalue"));
    let text = String::from_utf8(out.stdout).unwrap();
    let values: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(values[0], "0", "fef of white noise");
}

#[test]
fn werner_half() {
    let text = stdout(&["measures", "--family", "werner", "--p", "0.5", "--format", "csv"]);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let values: Vec<&str> = lines.next().unwrap().split(',').collect();
    let get = |k: &str| values[header.iter().position(|h| *h == k).unwrap()];
    assert_eq!(get("fef"), "0.25");
    assert_eq!(get("concurrence"), "0.25");
    assert_eq!(get("steering_S"), "0");
    assert_eq!(get("bell_B"), "0");
    assert_eq!(get("hierarchy_H"), "1");
    assert_eq!(get("werner_region"), "entangled-unsteerable");
}

#[test]
fn exit_codes() {
    assert_eq!(qcorr(&["measures", "--family", "werner", "--p", "1.5"]).status.code(), Some(2));
    assert_eq!(qcorr(&["measures", "--R", "/nonexistent/r.json"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "[[1, 0, 0], [0, -0.5, 0], [0, 0, 0.2]]").unwrap();
    assert_eq!(qcorr(&["measures", "--R", bad.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&bad, "[[1, 0.3, 0], [0, 1, 0], [0, 0, 1]]").unwrap();
    assert_eq!(qcorr(&["measures", "--R", bad.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(qcorr(&["pipeline", "--family", "dephased", "--q", "0.3"]).status.code(), Some(2));
    assert_eq!(qcorr(&["sweep", "--family", "werner", "--grid", "0:1"]).status.code(), Some(2));
    // one trial per setting leaves too few usable resamples
    let out = qcorr(&["pipeline", "--events", "1", "--mc-samples", "100", "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gws_hierarchy_plateaus() {
    let text = stdout(&["sweep", "--family", "gws", "--grid", "0:1:0.01,0:1:0.01", "--measures", "hierarchy_H"]);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "p,q,hierarchy_H");
    let mut counts = [0usize; 4];
    let mut n = 0;
    for line in lines {
        let h: usize = line.rsplit(',').next().unwrap().parse().unwrap();
        counts[h] += 1;
        n += 1;
    }
    assert_eq!(n, 101 * 101);
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
}

#[test]
fn report_tables_has_no_mismatch() {
    let text = stdout(&["report-tables"]);
    assert_eq!(text.lines().count(), 41);
    assert!(!text.contains("MISMATCH"));
}

#[test]
fn plot_of_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    std::fs::write(&input, "p,fef\n").unwrap();
    let svg = dir.path().join("out.svg");
    for kind in ["curves", "heatmap", "scatter"] {
        let out = qcorr(&["plot", "--input", input.to_str().unwrap(), "--kind", kind, "--out", svg.to_str().unwrap()]);
        assert!(out.status.success(), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    }
}

#[test]
fn seed_from_environment() {
    let args = ["pipeline", "--events", "1e4", "--mc-samples", "0", "--p", "0.8"];
    let from_env = Command::new(env!("CARGO_BIN_EXE_qcorr")).args(args).env("QCORR_SEED", "5").output().unwrap();
    let mut with_flag = args.to_vec();
    with_flag.extend(["--seed", "5"]);
    assert_eq!(from_env.stdout, stdout(&with_flag).into_bytes());
}

#[test]
fn pipeline_golden() {
    let json = stdout(&["pipeline", "--events", "1e4", "--mc-samples", "100", "--seed", "42", "--p", "0.5,0.8,1"]);
    check_golden("werner_pipeline_seed42.json", &json);
}
