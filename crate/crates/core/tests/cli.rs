use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use primpca::elliptical::{sample_elliptical, EllipticalModel, Radial};
use primpca::ingest::write_csv_matrix;
use primpca::matrix::DataMatrix;
use primpca::rng::RngStream;
use serde_json::Value;
use tempfile::TempDir;

fn primpca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_primpca")).args(args).env_remove("PRIMPCA_THREADS").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", stderr(out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_schema(&v);
    v
}

fn assert_schema(report: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/run_report.schema.json");
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

fn write_csv(dir: &TempDir, name: &str, x: &DataMatrix) -> PathBuf {
    let path = dir.path().join(name);
    write_csv_matrix(x, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn gaussian_csv(dir: &TempDir, variances: &[f64], n: usize, seed: u64) -> PathBuf {
    let model = EllipticalModel::centered_diagonal(variances, Radial::GaussianChi).unwrap();
    let x = sample_elliptical(&model, n, RngStream::new(seed, 0)).unwrap();
    write_csv(dir, "gaussian.csv", &x)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn identity_covariance_scree() {
    let dir = TempDir::new().unwrap();
    // Four points at (±1, ±1) have sample covariance (4/3)·I; scale to the identity.
    let a = (0.75f64).sqrt();
    let x = DataMatrix::from_rows(&[vec![a, a], vec![a, -a], vec![-a, a], vec![-a, -a]]).unwrap();
    let input = write_csv(&dir, "id.csv", &x);
    let out_dir = dir.path().join("pca");
    let report = json(&primpca(&["pca", "--input", s(&input), "--k", "1", "--out", s(&out_dir), "--no-timing"]));
    assert_eq!(report["command"], "pca");
    let scree = fs::read_to_string(out_dir.join("scree.csv")).unwrap();
    let rows: Vec<Vec<&str>> = scree.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], (i + 1).to_string());
        assert!((row[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-12, "{row:?}");
    }
    let basis = fs::read_to_string(out_dir.join("basis.csv")).unwrap();
    assert_eq!(basis.lines().next().unwrap(), "eigenvalue,v1,v2");
    assert_eq!(basis.lines().count(), 3);
}

#[test]
fn missing_file_names_the_path() {
    let out = primpca(&["gap", "--input", "/nonexistent/dir/data.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/nonexistent/dir/data.csv"), "{}", stderr(&out));
}

#[test]
fn malformed_csv_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "1,2\n3,oops\n").unwrap();
    let out = primpca(&["peel", "--input", s(&path), "--k", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.csv"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_64() {
    let dir = TempDir::new().unwrap();
    let input = gaussian_csv(&dir, &[4.0, 1.0], 200, 1);
    for args in [
        vec!["verify", "--suite", "theorem9"],
        vec!["prim", "--input", s(&input), "--alpha", "0.6"],
        vec!["peel", "--input", s(&input), "--k", "1", "--beta", "0"],
        vec!["peel", "--input", s(&input), "--k", "1", "--beta", "1.5"],
        vec!["bootstrap", "--input", s(&input), "--k", "1", "--B", "1"],
        vec!["peel", "--input", s(&input), "--k", "0"],
        vec!["frobnicate"],
        vec!["peel"],
    ] {
        let out = primpca(&args);
        assert_eq!(code(&out), 64, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&primpca(&["--help"])), 0);
    assert_eq!(code(&primpca(&["--version"])), 0);
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_primpca"))
        .args(["verify", "--suite", "nfl"])
        .env("PRIMPCA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("PRIMPCA_THREADS"));
}

#[test]
fn empty_retention_exits_2() {
    let dir = TempDir::new().unwrap();
    let input = gaussian_csv(&dir, &[4.0, 1.0, 0.5], 12, 2);
    let out = primpca(&["peel", "--input", s(&input), "--k", "2", "--beta", "0.05", "--band", "tail"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("survive"), "{}", stderr(&out));
}

#[test]
fn beta_one_is_a_no_op_peel() {
    let dir = TempDir::new().unwrap();
    let model = EllipticalModel::centered_diagonal(&[9.0, 4.0, 1.0], Radial::GaussianChi).unwrap();
    let x = sample_elliptical(&model, 300, RngStream::new(3, 0)).unwrap();
    let input = write_csv(&dir, "gaussian.csv", &x);
    let full = primpca::covstats::cov_stats(&primpca::matrix::sample_covariance(&x).unwrap()).unwrap();
    let report = json(&primpca(&["peel", "--input", s(&input), "--k", "1", "--beta", "1", "--no-timing"]));
    for peel in report["peels"].as_array().unwrap() {
        assert_eq!(peel["retained_count"], 300);
        assert_eq!(peel["retained_fraction"], 1.0);
        let tv = peel["stats"]["total_variance"].as_f64().unwrap();
        assert!((tv - full.total_variance).abs() <= 1e-9 * full.total_variance, "{tv} vs {}", full.total_variance);
    }
}

#[test]
fn peel_report_orders_modes_and_echoes_config() {
    let dir = TempDir::new().unwrap();
    let input = gaussian_csv(&dir, &[9.0, 4.0, 1.0, 0.5], 2000, 4);
    let volume = json(&primpca(&["peel", "--input", s(&input), "--k", "1", "--beta", "0.9", "--band", "tail", "--seed", "11", "--no-timing"]));
    assert_eq!(volume["config"]["seed"], 11);
    assert_eq!(volume["config"]["band"], "tail");
    assert_eq!(volume["peels"][0]["label"], "tail");
    assert_eq!(volume["peels"][1]["label"], "principal");
    assert_eq!(volume["peels"][0]["components"], serde_json::json!([4]));
    assert_eq!(volume["peels"][1]["components"], serde_json::json!([1]));
    let tail_tv = volume["peels"][0]["stats"]["total_variance"].as_f64().unwrap();
    let principal_tv = volume["peels"][1]["stats"]["total_variance"].as_f64().unwrap();
    assert!(tail_tv > principal_tv);
    assert!(volume["peels"][0]["active_information"].as_f64().is_some());
    let variance = json(&primpca(&["peel", "--input", s(&input), "--k", "1", "--beta", "0.9", "--mode", "variance", "--band", "tail", "--no-timing"]));
    assert_eq!(variance["peels"][0]["label"], "principal");
    assert!(volume.get("timing_seconds").unwrap().is_null());
}

#[test]
fn embedding_join_attaches_survivor_coordinates() {
    let dir = TempDir::new().unwrap();
    let input = gaussian_csv(&dir, &[4.0, 1.0], 100, 5);
    let coords: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, -(i as f64)]).collect();
    let emb = write_csv(&dir, "emb.csv", &DataMatrix::from_rows(&coords).unwrap());
    let report = json(&primpca(&["peel", "--input", s(&input), "--k", "1", "--beta", "0.8", "--embedding", s(&emb), "--no-timing"]));
    let peel = &report["peels"][0];
    let rows = peel["retained_rows"].as_array().unwrap();
    let embedding = peel["embedding"].as_array().unwrap();
    assert_eq!(rows.len(), embedding.len());
    for (r, e) in rows.iter().zip(embedding) {
        assert_eq!(e[0].as_f64().unwrap(), r.as_u64().unwrap() as f64);
    }

    let short = write_csv(&dir, "short.csv", &DataMatrix::from_rows(&coords[..10]).unwrap());
    let out = primpca(&["peel", "--input", s(&input), "--k", "1", "--embedding", s(&short)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bootstrap_smoke_and_determinism() {
    let dir = TempDir::new().unwrap();
    let input = gaussian_csv(&dir, &[9.0, 4.0, 1.0], 400, 6);
    let args = ["bootstrap", "--input", s(&input), "--k", "1", "--beta", "0.9", "--B", "2", "--seed", "3", "--no-timing"];
    let first = primpca(&args);
    let report = json(&first);
    let boot = &report["bootstrap"];
    assert_eq!(boot["replicates"], 2);
    assert_eq!(boot["modes"].as_array().unwrap().len(), 2);
    assert!(boot["modes"][0]["total_variance"]["se"].as_f64().unwrap() >= 0.0);
    assert_eq!(first.stdout, primpca(&args).stdout);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let input = gaussian_csv(&dir, &[9.0, 4.0, 1.0], 300, 7);
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_primpca"))
            .args(["bootstrap", "--input", s(&input), "--k", "1", "--B", "20", "--seed", "9", "--no-timing"])
            .env("PRIMPCA_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    assert_eq!(one.stdout, run("3").stdout);
}

#[test]
fn json_flag_writes_file() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("report.json");
    let out = primpca(&["verify", "--suite", "nfl", "--json", s(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_schema(&report);
    assert_eq!(report["verification"]["passed"], true);
    assert_eq!(report["verification"]["checks"][0]["value"], 0.0);
    assert!(report["timing_seconds"].as_f64().is_some());
}

#[test]
fn gap_reports_both_selections_and_scree() {
    let dir = TempDir::new().unwrap();
    let input = gaussian_csv(&dir, &[100.0, 90.0, 1.0, 0.9, 0.8], 3000, 8);
    let scree = dir.path().join("scree.csv");
    let report = json(&primpca(&["gap", "--input", s(&input), "--k", "2", "--scree", s(&scree), "--no-timing"]));
    assert_eq!(report["selection"]["kind"], "log_gap");
    assert_eq!(report["selection"]["gap_index"], 2);
    assert_eq!(report["selection"]["pettiest_band"], serde_json::json!([1, 2]));
    assert_eq!(report["naive_selection"]["pettiest_band"], serde_json::json!([4, 5]));
    assert!(fs::read_to_string(&scree).unwrap().starts_with("index,eigenvalue,log10_eigenvalue,band"));
}

#[test]
fn prim_finds_both_modes_of_a_mixture() {
    let dir = TempDir::new().unwrap();
    let model = EllipticalModel::centered_diagonal(&[0.25, 0.25], Radial::GaussianChi).unwrap();
    let noise = sample_elliptical(&model, 1000, RngStream::new(10, 0)).unwrap();
    let rows: Vec<Vec<f64>> = (0..1000)
        .map(|i| {
            let shift = if i % 2 == 0 { 4.0 } else { -4.0 };
            vec![noise.get(i, 0) + shift, noise.get(i, 1) + shift]
        })
        .collect();
    let input = write_csv(&dir, "mixture.csv", &DataMatrix::from_rows(&rows).unwrap());
    let report = json(&primpca(&["prim", "--input", s(&input), "--alpha", "0.1", "--beta", "0.3", "--covers", "2", "--no-timing"]));
    let peels = report["peels"].as_array().unwrap();
    assert_eq!(peels.len(), 2);
    let center = |p: &Value| {
        let lo = p["lo"][0].as_f64().unwrap();
        let hi = p["hi"][0].as_f64().unwrap();
        (lo + hi) / 2.0
    };
    let (a, b) = (center(&peels[0]), center(&peels[1]));
    assert!(a * b < 0.0, "centers {a} and {b} should sit on opposite modes");
    assert!(peels.iter().all(|p| p["stats"].is_object()));
}

#[test]
fn prim_single_gaussian_box_contains_the_mean() {
    let dir = TempDir::new().unwrap();
    let input = gaussian_csv(&dir, &[1.0, 1.0], 1000, 11);
    let report = json(&primpca(&["prim", "--input", s(&input), "--covers", "1", "--no-timing"]));
    let peel = &report["peels"][0];
    for j in 0..2 {
        assert!(peel["lo"][j].as_f64().unwrap() < 0.0 && peel["hi"][j].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn prim_response_column_must_exist() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("named.csv");
    fs::write(&path, "a,b,y\n0,1,2\n1,0,3\n2,2,1\n3,1,0\n").unwrap();
    let out = primpca(&["prim", "--input", s(&path), "--response", "missing"]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("missing"), "{}", stderr(&out));
}

#[test]
fn idx_input_selects_one_class() {
    let dir = TempDir::new().unwrap();
    let n = 30;
    let mut images = vec![0u8, 0, 8, 3, 0, 0, 0, n as u8, 0, 0, 0, 2, 0, 0, 0, 2];
    let mut labels = vec![0u8, 0, 8, 1, 0, 0, 0, n as u8];
    for i in 0..n {
        let label = (i % 3) as u8;
        labels.push(label);
        images.extend([(i * 7 % 256) as u8, (i * 13 % 256) as u8, (i * 29 % 256) as u8, label * 40]);
    }
    let img = dir.path().join("images-idx3-ubyte");
    let lab = dir.path().join("labels-idx1-ubyte");
    fs::write(&img, &images).unwrap();
    fs::write(&lab, &labels).unwrap();
    let report = json(&primpca(&["gap", "--images", s(&img), "--labels", s(&lab), "--label", "1", "--k", "1", "--no-timing"]));
    assert_eq!(report["input"]["rows"], 10);
    assert_eq!(report["input"]["cols"], 4);

    let out = primpca(&["gap", "--images", s(&img), "--labels", s(&lab), "--label", "5", "--k", "1"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    fs::write(&img, &images[..40]).unwrap();
    let out = primpca(&["gap", "--images", s(&img), "--labels", s(&lab), "--label", "1", "--k", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("images-idx3-ubyte"), "{}", stderr(&out));
}
