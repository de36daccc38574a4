use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kg"))
        .args(args)
        .output()
        .expect("spawn kg")
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn measure_of_coprime_slab() {
    let out = kg(&[
        "measure",
        "--q",
        "2,2",
        "--m",
        "1",
        "--delta",
        "1/10",
        "--coprime",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_stdout(&out), serde_json::json!({"exact": "1/10"}));
    let header: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(header["subcommand"], "measure");
    assert_eq!(header["params_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn negative_coordinates_and_plain_slab() {
    let out = kg(&["measure", "--q", "-3,1", "--m", "2", "--delta", "1/4"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_stdout(&out)["exact"], "1/4");
}

#[test]
fn exit_codes() {
    assert_eq!(
        kg(&["measure", "--q", "1,1", "--delta", "1/2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kg(&["measure", "--q", "1,x", "--delta", "1/4"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kg(&["series", "--psi", "power:1/4", "--N", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kg(&["series", "--psi", "/no/such/file.json", "--N", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kg(&["measure", "--q", "0,0", "--delta", "1/4"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        kg(&["series", "--psi", "constant:1/4", "--N", "0"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn log_certificate_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cert.json");
    let out = kg(&[
        "counterexample",
        "--gauge",
        "log",
        "--blocks",
        "5",
        "--m",
        "1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cert = read_json(&path);
    assert_eq!(cert["blocks"].as_array().unwrap().len(), 5);
    assert_eq!(cert["blocks"][0]["h"], "2*3*5*7*11*13*17*19");
    for v in ["block_sums", "monotone", "vb1", "final_inequality"] {
        assert_eq!(cert["verdicts"][v], true, "{v}");
    }
    let header = read_json(&dir.path().join("cert.json.header.json"));
    assert_eq!(header["params"]["gauge"], "log");
}

#[test]
fn exp_gauge_reports_infeasibility() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = kg(&[
        "counterexample",
        "--gauge",
        "exp:2",
        "--blocks",
        "1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let report = read_json(&path);
    assert_eq!(report["t"], 1);
    assert_eq!(report["x"], 16);
    let lo: Vec<f64> = report["required_theta_lo"]
        .as_str()
        .unwrap()
        .split('/')
        .map(|s| s.parse().unwrap())
        .collect();
    let need = lo[0] / lo[1];
    assert!((need / (2.0 * 32f64.exp()) - 1.0).abs() < 1e-9, "{need}");
}

#[test]
fn series_csv_has_header_row() {
    let out = kg(&[
        "series",
        "--psi",
        "power:1/4,1",
        "--N",
        "3",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("h,psi_pow,khintchine_partial,sum_b_prime,phi,chi")
    );
    assert_eq!(lines.next(), Some("1,1/4,1/4,4/1,2/1,2/1"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn psi_from_file_matches_inline() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("psi.json");
    fs::write(&file, r#"{"kind":"table","values":{"1":"1/10"}}"#).unwrap();
    let a = kg(&["series", "--psi", file.to_str().unwrap(), "--N", "2"]);
    let b = kg(&["series", "--psi", "table:1=1/10", "--N", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let header: Value = serde_json::from_slice(&a.stderr).unwrap();
    assert!(header["psi_source"].as_str().unwrap().starts_with("file:"));
}

#[test]
fn outputs_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        vec![
            "qia",
            "--psi",
            "power:1/4,1",
            "--N",
            "20",
            "--samples",
            "5000",
            "--seed",
            "9",
        ],
        vec![
            "schmidt",
            "--psi",
            "power:1/4,1",
            "--samples",
            "4",
            "--h",
            "16,64",
            "--seed",
            "3",
            "--format",
            "csv",
        ],
        vec![
            "count",
            "--psi",
            "table:1=1/10",
            "--h",
            "1",
            "--samples",
            "5000",
            "--seed",
            "1",
        ],
        vec![
            "measure",
            "--q",
            "1,2",
            "--delta",
            "1/4",
            "--samples",
            "5000",
        ],
    ];
    for (k, args) in runs.iter().enumerate() {
        let mut files = Vec::new();
        for workers in ["1", "4", "1"] {
            let path = dir
                .path()
                .join(format!("{k}-{workers}-{}.out", files.len()));
            let mut a = args.clone();
            a.extend(["--workers", workers, "--out", path.to_str().unwrap()]);
            let out = kg(&a);
            assert_eq!(
                out.status.code(),
                Some(0),
                "{args:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            let header = fs::read_to_string(dir.path().join(format!(
                "{}.header.json",
                path.file_name().unwrap().to_str().unwrap()
            )))
            .unwrap();
            files.push((fs::read(&path).unwrap(), header));
        }
        assert!(files.windows(2).all(|w| w[0] == w[1]), "{args:?}");
    }
}

#[test]
fn selftest_passes() {
    let out = kg(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let checks = json_stdout(&out);
    assert!(checks
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));
}
