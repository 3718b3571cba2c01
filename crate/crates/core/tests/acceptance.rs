//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! Fashion-MNIST files are read from `$PRIMPCA_FASHION_DIR`, falling back to
//! `data/fashion-mnist` at the workspace root (see `scripts/fetch_fashion_mnist.sh`).

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use primpca::covstats::{bootstrap, peels_in_basis, CovStats, Pipeline};
use primpca::gapsel::log_spectral_gap;
use primpca::ingest::{split_by_label, LabeledDataset};
use primpca::matrix::{eigendecompose, project, sample_covariance, DataMatrix};
use primpca::peel::{PeelMode, PettiestRule};
use primpca::rng::{streams, RngStream};
use primpca::verify::{run_suite, Suite, SuiteReport};

const SEED: u64 = 20240601;
const FASHION_K: usize = 20;
const FASHION_BETA: f64 = 0.5;
const FASHION_FLOOR: usize = 2;
const FASHION_B: usize = 1000;
const TROUSER: u8 = 1;
const SNEAKER: u8 = 7;
const ANKLE_BOOT: u8 = 9;

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome { passed, detail: detail.into() }
    }
}

fn suite_outcome(suite: Suite, budget_seconds: Option<f64>) -> Outcome {
    let started = Instant::now();
    let report = match run_suite(suite, SEED) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("suite error: {e}")),
    };
    let seconds = started.elapsed().as_secs_f64();
    let in_time = budget_seconds.is_none_or(|b| seconds < b);
    let failing: Vec<String> = failing_checks(&report);
    let mut detail = format!("{} checks, {:.1}s", report.checks.len(), seconds);
    if let Some(b) = budget_seconds {
        detail.push_str(&format!(" (budget {b}s)"));
    }
    if !failing.is_empty() {
        detail.push_str(&format!("; failing: {}", failing.join("; ")));
    }
    Outcome::new(report.passed && in_time, detail)
}

fn failing_checks(report: &SuiteReport) -> Vec<String> {
    report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} = {:.4} vs {}", c.name, c.value, c.threshold))
        .collect()
}

fn checks_matching(suite: Suite, prefix: &str) -> Outcome {
    let report = match run_suite(suite, SEED) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("suite error: {e}")),
    };
    let picked: Vec<_> = report.checks.iter().filter(|c| c.name.starts_with(prefix)).collect();
    let worst = picked.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max);
    let passed = !picked.is_empty() && picked.iter().all(|c| c.passed);
    Outcome::new(passed, format!("{} checks, largest value {:.4} (threshold {})", picked.len(), worst, picked.first().map_or(0.0, |c| c.threshold)))
}

fn criterion_operator_norm() -> Outcome {
    let report = match run_suite(Suite::Prop2, SEED) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("suite error: {e}")),
    };
    let picked: Vec<_> = report.checks.iter().filter(|c| c.name.starts_with("operator norm")).collect();
    let detail = picked.iter().map(|c| format!("{} {:.2}", c.name, c.value)).collect::<Vec<_>>().join(", ");
    Outcome::new(!picked.is_empty() && picked.iter().all(|c| c.passed), detail)
}

fn fashion_dir() -> PathBuf {
    match std::env::var_os("PRIMPCA_FASHION_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/fashion-mnist"),
    }
}

fn load_fashion() -> Result<LabeledDataset, String> {
    let dir = fashion_dir();
    LabeledDataset::load(&dir.join("t10k-images-idx3-ubyte.gz"), &dir.join("t10k-labels-idx1-ubyte.gz"))
        .map_err(|e| format!("cannot load Fashion-MNIST from {}: {e} (run scripts/fetch_fashion_mnist.sh)", dir.display()))
}

/// Point estimates of principal, gap-band pettiest and naive-tail pettiest peels.
struct ClassPeels {
    principal: CovStats,
    pettiest: CovStats,
    naive: CovStats,
}

fn class_peels(x: &DataMatrix) -> Result<ClassPeels, String> {
    let basis = eigendecompose(&sample_covariance(x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let y = project(x, &basis).map_err(|e| e.to_string())?;
    let modes = [PeelMode::MinVariance, PeelMode::MinVolume(PettiestRule::Gap), PeelMode::MinVolume(PettiestRule::Tail)];
    let mut out = peels_in_basis(&y, &basis, FASHION_K, FASHION_BETA, &modes, FASHION_FLOOR).map_err(|e| e.to_string())?;
    let naive = out.pop().unwrap().1;
    let pettiest = out.pop().unwrap().1;
    let principal = out.pop().unwrap().1;
    Ok(ClassPeels { principal, pettiest, naive })
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value / target - 1.0).abs() <= rel
}

fn criterion_class_bootstrap(ds: &LabeledDataset) -> Outcome {
    let started = Instant::now();
    let pipeline = Pipeline {
        k: FASHION_K,
        beta: FASHION_BETA,
        modes: vec![PeelMode::MinVariance, PeelMode::MinVolume(PettiestRule::Gap)],
        min_retained: Some(FASHION_FLOOR),
    };
    let mut passed = true;
    let mut lines = Vec::new();
    let mut worst_se = 0.0f64;
    for label in 0..10u8 {
        let x = match split_by_label(ds, label) {
            Ok(x) => x,
            Err(e) => return Outcome::new(false, format!("class {label}: {e}")),
        };
        let rng = RngStream::new(SEED, streams::BOOTSTRAP).split(label as u64);
        let report = match bootstrap(&x, &pipeline, FASHION_B, rng) {
            Ok(r) => r,
            Err(e) => return Outcome::new(false, format!("class {label}: bootstrap failed: {e}")),
        };
        let principal = &report.modes[0];
        let pettiest = &report.modes[1];
        let ratio = pettiest.total_variance.mean / principal.total_variance.mean;
        let class_ok = ratio > 1.0 && (1.5..=4.5).contains(&ratio);
        passed &= class_ok;
        for m in [principal, pettiest] {
            for e in [&m.total_variance, &m.frobenius, &m.operator_norm] {
                worst_se = worst_se.max(e.se / e.mean.abs());
            }
        }
        lines.push(format!(
            "{}: principal {:.3e} (se {:.2e}), pettiest {:.3e} (se {:.2e}), ratio {:.2}{}",
            LabeledDataset::class_name(label).unwrap_or("?"),
            principal.total_variance.mean,
            principal.total_variance.se,
            pettiest.total_variance.mean,
            pettiest.total_variance.se,
            ratio,
            if class_ok { "" } else { " [out of range]" }
        ));
        if label == TROUSER {
            let p_ok = within(principal.total_variance.mean, 6.74e5, 0.15);
            let q_ok = within(pettiest.total_variance.mean, 2.81e6, 0.15);
            passed &= p_ok && q_ok;
            lines.push(format!(
                "trouser targets: principal 6.74e5 ±15% {}, pettiest 2.81e6 ±15% {}",
                if p_ok { "met" } else { "missed" },
                if q_ok { "met" } else { "missed" }
            ));
        }
    }
    let se_ok = worst_se < 0.01;
    passed &= se_ok;
    let seconds = started.elapsed().as_secs_f64();
    let time_ok = seconds < 600.0;
    passed &= time_ok;
    lines.push(format!("largest relative bootstrap se {:.4} (limit 0.01)", worst_se));
    lines.push(format!("runtime {:.0}s (budget 600s)", seconds));
    Outcome::new(passed, lines.join("\n    "))
}

fn criterion_naive_tail(ds: &LabeledDataset) -> Outcome {
    let mut passed = true;
    let mut lines = Vec::new();
    let cases: [(u8, (f64, f64)); 3] = [(TROUSER, (1.24, 4.2)), (SNEAKER, (1.32, 2.15)), (ANKLE_BOOT, (1.38, 2.50))];
    for (label, (naive_target, gap_target)) in cases {
        let peels = match split_by_label(ds, label).map_err(|e| e.to_string()).and_then(|x| class_peels(&x)) {
            Ok(p) => p,
            Err(e) => return Outcome::new(false, format!("class {label}: {e}")),
        };
        let naive = peels.naive.total_variance / peels.principal.total_variance;
        let gap = peels.pettiest.total_variance / peels.principal.total_variance;
        let ok = if label == TROUSER {
            (1.1..=1.5).contains(&naive) && gap >= 3.5
        } else {
            (naive - naive_target).abs() <= 0.25 && (gap - gap_target).abs() <= 0.25
        };
        passed &= ok;
        lines.push(format!(
            "{}: naive ratio {:.2} (target {naive_target}), gap ratio {:.2} (target {gap_target}){}",
            LabeledDataset::class_name(label).unwrap_or("?"),
            naive,
            gap,
            if ok { "" } else { " [missed]" }
        ));
    }
    Outcome::new(passed, lines.join("\n    "))
}

fn criterion_scree_gap(ds: &LabeledDataset) -> Outcome {
    let result = split_by_label(ds, TROUSER)
        .and_then(|x| sample_covariance(&x))
        .and_then(|c| eigendecompose(&c))
        .and_then(|b| log_spectral_gap(&b, FASHION_K));
    match result {
        Ok(sel) => {
            let band = (sel.pettiest_band.first, sel.pettiest_band.last);
            Outcome::new(sel.gap_index == Some(456) && band == (437, 456), format!("gap index {:?}, pettiest band {}-{}", sel.gap_index, band.0, band.1))
        }
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn run_cli(args: &[String]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_primpca")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{:?} exited with {}: {}", args, out.status, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn criterion_determinism() -> Outcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let csv = dir.path().join("sample.csv");
    let model = primpca::elliptical::EllipticalModel::centered_diagonal(&[9.0, 4.0, 1.0, 0.25], primpca::elliptical::Radial::GaussianChi);
    let written = model
        .and_then(|m| primpca::elliptical::sample_elliptical(&m, 400, RngStream::new(SEED, streams::SAMPLER)))
        .and_then(|x| {
            let f = std::fs::File::create(&csv).map_err(|e| primpca::Error::Io { path: csv.clone(), source: e })?;
            primpca::ingest::write_csv_matrix(&x, f)
        });
    if let Err(e) = written {
        return Outcome::new(false, e.to_string());
    }
    let input = csv.display().to_string();
    let seed = SEED.to_string();
    let s = |v: &[&str]| v.iter().map(|a| a.to_string()).collect::<Vec<String>>();
    let commands = vec![
        s(&["peel", "--input", &input, "--k", "2", "--beta", "0.8", "--seed", &seed, "--no-timing"]),
        s(&["peel", "--input", &input, "--mode", "variance", "--band", "tail", "--k", "1", "--seed", &seed, "--no-timing"]),
        s(&["bootstrap", "--input", &input, "--k", "2", "--beta", "0.8", "--B", "50", "--seed", &seed, "--no-timing"]),
        s(&["prim", "--input", &input, "--covers", "2", "--seed", &seed, "--no-timing"]),
        s(&["gap", "--input", &input, "--k", "1", "--no-timing"]),
        s(&["verify", "--suite", "prop3", "--seed", &seed, "--no-timing"]),
        s(&["verify", "--suite", "nfl", "--seed", &seed, "--no-timing"]),
    ];
    let mut identical = 0;
    let mut problems = Vec::new();
    for args in &commands {
        match (run_cli(args), run_cli(args)) {
            (Ok(a), Ok(b)) if a == b && !a.is_empty() => identical += 1,
            (Ok(_), Ok(_)) => problems.push(format!("{} output differs", args[0])),
            (Err(e), _) | (_, Err(e)) => problems.push(e),
        }
    }
    let mut detail = format!("{identical}/{} seeded invocations byte-identical", commands.len());
    if !problems.is_empty() {
        detail.push_str(&format!("; {}", problems.join("; ")));
    }
    Outcome::new(problems.is_empty(), detail)
}

fn main() {
    let fashion = load_fashion();
    let fashion_outcome = |f: &dyn Fn(&LabeledDataset) -> Outcome| match &fashion {
        Ok(ds) => f(ds),
        Err(e) => Outcome::new(false, e.clone()),
    };
    let criteria: Vec<Criterion> = vec![
        ("1 ordering of preserved trace and Frobenius norm", Box::new(|| suite_outcome(Suite::Theorem1, Some(90.0)))),
        ("2 Gaussian closed form and quadrature oracle", Box::new(|| suite_outcome(Suite::Corollary8, None))),
        ("3 log generalized variance constancy", Box::new(|| checks_matching(Suite::Prop2, "log generalized variance"))),
        ("4 log volume ordering", Box::new(|| suite_outcome(Suite::Prop3, None))),
        ("5 operator norm minimized by peeling index 1", Box::new(criterion_operator_norm)),
        ("6 correlation inequality", Box::new(|| suite_outcome(Suite::Lemma6, None))),
        ("7 no free lunch", Box::new(|| suite_outcome(Suite::Nfl, Some(5.0)))),
        ("8 Fashion-MNIST bootstrap statistics", Box::new(|| fashion_outcome(&criterion_class_bootstrap))),
        ("9 naive tail contrast collapse", Box::new(|| fashion_outcome(&criterion_naive_tail))),
        ("10 trouser log-spectral gap", Box::new(|| fashion_outcome(&criterion_scree_gap))),
        ("11 seeded CLI determinism", Box::new(criterion_determinism)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let outcome = check();
        if !outcome.passed {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if outcome.passed { "PASS" } else { "FAIL" }, outcome.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
