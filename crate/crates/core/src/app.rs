//! The `primpca` command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 data or runtime failure,
//! 64 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::covstats::{bootstrap, peels_in_basis, Pipeline};
use crate::error::Error;
use crate::gapsel::{log_spectral_gap, naive_tail, scree_export, GapSelection};
use crate::ingest::{read_csv_matrix, split_by_label, write_csv_matrix, CsvOptions, Header, LabeledDataset};
use crate::matrix::{eigendecompose, project, sample_covariance, DataMatrix, EigenBasis};
use crate::peel::{active_information, prim_classic, support_log_volume, PeelMode, PettiestRule, PrimConfig, PrimResponse};
use crate::report::{BootstrapOut, InputOut, PeelOut, Real, RunReport, SelectionOut, VerificationOut};
use crate::rng::{streams, RngStream};
use crate::verify::{run_suite, Suite};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "PRIMPCA_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "primpca", version, about = "Bump hunting by peeling principal or pettiest components")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Numeric CSV file, rows are observations.
    #[arg(long, conflicts_with = "images")]
    input: Option<PathBuf>,
    /// IDX image file (optionally gzipped); needs --labels and --label.
    #[arg(long, requires_all = ["labels", "label"])]
    images: Option<PathBuf>,
    /// IDX label file matching --images.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Class to analyze, 0-9.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=9))]
    label: Option<u8>,
    /// Whether the CSV's first row holds column names.
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    header: HeaderArg,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Leave wall-clock timing out of the report.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args, Debug)]
struct PeelArgs {
    /// Number of components truncated.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Retained probability β in (0, 1]; each tail loses (1 − β)/(2k).
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// How the pettiest band is chosen.
    #[arg(long, value_enum, default_value_t = BandArg::Gap)]
    band: BandArg,
    /// Minimum rows a peel must keep (default: columns + 1).
    #[arg(long)]
    min_retained: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum HeaderArg {
    Auto,
    Yes,
    No,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BandArg {
    Gap,
    Tail,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Volume,
    Variance,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SuiteArg {
    Theorem1,
    Prop2,
    Prop3,
    Corollary8,
    Lemma6,
    Nfl,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigendecompose the sample covariance; write the scree table and basis.
    Pca {
        #[command(flatten)]
        input: InputArgs,
        /// Band width used to tag the scree table.
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Directory receiving scree.csv and basis.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Locate the pettiest band by the largest log-eigenvalue drop.
    Gap {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Also write the scree table as CSV.
        #[arg(long)]
        scree: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// One FastPRIM peel, with statistics for both principal and pettiest peels.
    Peel {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Volume)]
        mode: ModeArg,
        #[command(flatten)]
        peel: PeelArgs,
        /// CSV of per-row embedding coordinates to attach to the survivors.
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Bootstrap means and standard errors of the principal and pettiest peel statistics.
    Bootstrap {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        peel: PeelArgs,
        /// Number of bootstrap replicates.
        #[arg(long = "B", default_value_t = 1000)]
        replicates: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a seeded verification suite.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Classic peel/cover PRIM on the raw columns.
    Prim {
        #[command(flatten)]
        input: InputArgs,
        /// Mass peeled per step, in (0, 1/2).
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Minimum box mass, in (0, 1).
        #[arg(long, default_value_t = 0.3)]
        beta: f64,
        /// Maximum number of cover boxes.
        #[arg(long, default_value_t = 1)]
        covers: usize,
        /// `counts` for box density, or the name of a response column.
        #[arg(long, default_value = "counts")]
        response: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// A failure with its exit code and a message naming the offending input.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::InvalidRadialParam(_) | Error::NonPositiveFraction(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Failure { code, message: e.to_string() }
    }
}

fn in_file(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| {
        let failure = Failure::from(e);
        let text = path.display().to_string();
        if failure.message.contains(&text) {
            failure
        } else {
            Failure { code: failure.code, message: format!("{text}: {}", failure.message) }
        }
    }
}

struct Loaded {
    x: DataMatrix,
    source: String,
}

fn load(input: &InputArgs) -> Result<Loaded, Failure> {
    match (&input.input, &input.images) {
        (Some(path), None) => {
            let header = match input.header {
                HeaderArg::Auto => Header::Auto,
                HeaderArg::Yes => Header::Present,
                HeaderArg::No => Header::Absent,
            };
            let x = read_csv_matrix(path, CsvOptions { header }).map_err(in_file(path))?;
            Ok(Loaded { x, source: path.display().to_string() })
        }
        (None, Some(images)) => {
            let labels = input.labels.as_ref().ok_or_else(|| Failure::usage("--images needs --labels"))?;
            let label = input.label.ok_or_else(|| Failure::usage("--images needs --label"))?;
            let ds = LabeledDataset::load(images, labels).map_err(in_file(images))?;
            let x = split_by_label(&ds, label)?;
            Ok(Loaded { x, source: format!("{}#label={label}", images.display()) })
        }
        _ => Err(Failure::usage("give either --input FILE or --images FILE --labels FILE --label N")),
    }
}

fn input_out(l: &Loaded) -> InputOut {
    InputOut { source: l.source.clone(), rows: l.x.nrows(), cols: l.x.ncols() }
}

fn emit(report: &mut RunReport, output: &OutputArgs, started: Instant) -> Result<(), Failure> {
    if !output.no_timing {
        report.timing_seconds = Some(Real(started.elapsed().as_secs_f64()));
    }
    let text = report.to_json();
    match &output.json {
        Some(path) => fs::write(path, text).map_err(|e| Failure::from(Error::io(path, e))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Failure::from(Error::io("<stdout>", e)))
        }
    }
}

fn pca(x: &DataMatrix) -> Result<(EigenBasis, DataMatrix), Failure> {
    let basis = eigendecompose(&sample_covariance(x)?)?;
    let y = project(x, &basis)?;
    Ok((basis, y))
}

fn select(basis: &EigenBasis, k: usize, band: BandArg) -> Result<GapSelection, Failure> {
    Ok(match band {
        BandArg::Gap => log_spectral_gap(basis, k)?,
        BandArg::Tail => naive_tail(basis, k)?,
    })
}

fn check_beta(beta: f64) -> Result<(), Failure> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("--beta must lie in (0, 1], got {beta}")))
    }
}

fn config(pairs: serde_json::Value) -> serde_json::Map<String, serde_json::Value> {
    match pairs {
        serde_json::Value::Object(m) => m,
        _ => serde_json::Map::new(),
    }
}

fn band_name(b: BandArg) -> &'static str {
    match b {
        BandArg::Gap => "gap",
        BandArg::Tail => "tail",
    }
}

fn pettiest_mode(b: BandArg) -> PeelMode {
    match b {
        BandArg::Gap => PeelMode::MinVolume(PettiestRule::Gap),
        BandArg::Tail => PeelMode::MinVolume(PettiestRule::Tail),
    }
}

fn with_active_information(mut out: PeelOut, y: &DataMatrix, indices: &[usize]) -> PeelOut {
    let support = support_log_volume(y, indices);
    out.active_information = active_information(out.retained_fraction.0, out.log_volume.0, support).ok().map(Real);
    out
}

fn cmd_pca(input: &InputArgs, k: usize, out: &Path, output: &OutputArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let loaded = load(input)?;
    let (basis, _) = pca(&loaded.x)?;
    let k = k.clamp(1, basis.dim());
    let selection = match log_spectral_gap(&basis, k) {
        Ok(s) => s,
        Err(Error::DegenerateSpectrum | Error::InvalidParameter(_)) => {
            log::warn!("no usable log-spectral gap; tagging the naive tail instead");
            naive_tail(&basis, k)?
        }
        Err(e) => return Err(e.into()),
    };
    fs::create_dir_all(out).map_err(|e| Failure::from(Error::io(out, e)))?;
    let scree_path = out.join("scree.csv");
    let file = fs::File::create(&scree_path).map_err(|e| Failure::from(Error::io(&scree_path, e)))?;
    scree_export(&basis, &selection).write_csv(file).map_err(in_file(&scree_path))?;
    let basis_path = out.join("basis.csv");
    let d = basis.dim();
    let mut rows = Vec::with_capacity(d * (d + 1));
    for j in 0..d {
        rows.push(basis.eigenvalues()[j]);
        rows.extend_from_slice(basis.vector(j));
    }
    let mut names = vec!["eigenvalue".to_string()];
    names.extend((1..=d).map(|i| format!("v{i}")));
    let table = DataMatrix::from_row_major(d, d + 1, &rows)?.with_names(names)?;
    let file = fs::File::create(&basis_path).map_err(|e| Failure::from(Error::io(&basis_path, e)))?;
    write_csv_matrix(&table, file).map_err(in_file(&basis_path))?;

    let mut report = RunReport::new("pca");
    report.config = config(json!({ "k": k, "out": out.display().to_string() }));
    report.input = Some(input_out(&loaded));
    report.selection = Some((&selection).into());
    report.naive_selection = Some((&naive_tail(&basis, k)?).into());
    emit(&mut report, output, started)?;
    Ok(EXIT_OK)
}

fn cmd_gap(input: &InputArgs, k: usize, scree: Option<&Path>, output: &OutputArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let loaded = load(input)?;
    let (basis, _) = pca(&loaded.x)?;
    let selection = log_spectral_gap(&basis, k)?;
    if let Some(path) = scree {
        let file = fs::File::create(path).map_err(|e| Failure::from(Error::io(path, e)))?;
        scree_export(&basis, &selection).write_csv(file).map_err(in_file(path))?;
    }
    let mut report = RunReport::new("gap");
    report.config = config(json!({ "k": k }));
    report.input = Some(input_out(&loaded));
    report.selection = Some(SelectionOut::from(&selection));
    report.naive_selection = Some((&naive_tail(&basis, k)?).into());
    emit(&mut report, output, started)?;
    Ok(EXIT_OK)
}

fn cmd_peel(input: &InputArgs, mode: ModeArg, p: &PeelArgs, embedding: Option<&Path>, output: &OutputArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    check_beta(p.beta)?;
    let loaded = load(input)?;
    let (basis, y) = pca(&loaded.x)?;
    let selection = select(&basis, p.k, p.band)?;
    let floor = p.min_retained.unwrap_or(y.ncols() + 1);
    let pettiest = pettiest_mode(p.band);
    let modes = match mode {
        ModeArg::Volume => vec![pettiest, PeelMode::MinVariance],
        ModeArg::Variance => vec![PeelMode::MinVariance, pettiest],
    };
    let results = peels_in_basis(&y, &basis, p.k, p.beta, &modes, floor)?;
    let coords = match embedding {
        Some(path) => {
            let e = read_csv_matrix(path, CsvOptions::default()).map_err(in_file(path))?;
            if e.nrows() != y.nrows() {
                return Err(Failure::from(Error::DimensionMismatch { expected: y.nrows(), actual: e.nrows() }));
            }
            Some(e)
        }
        None => None,
    };
    let mut report = RunReport::new("peel");
    report.config = config(json!({
        "mode": match mode { ModeArg::Volume => "volume", ModeArg::Variance => "variance" },
        "k": p.k,
        "beta": p.beta,
        "band": band_name(p.band),
        "min_retained": floor,
        "seed": p.seed,
        "embedding": embedding.map(|e| e.display().to_string()),
    }));
    report.input = Some(input_out(&loaded));
    report.selection = Some((&selection).into());
    report.naive_selection = Some((&naive_tail(&basis, p.k)?).into());
    for (mode, (r, stats)) in modes.iter().zip(&results) {
        let mut out = with_active_information(PeelOut::new(mode.label(), r, Some(stats)), &y, &r.bounds.indices);
        if let Some(e) = &coords {
            out.embedding = Some(r.retained.iter().map(|&i| e.row(i).into_iter().map(Real).collect()).collect());
        }
        report.peels.push(out);
    }
    emit(&mut report, output, started)?;
    Ok(EXIT_OK)
}

fn cmd_bootstrap(input: &InputArgs, p: &PeelArgs, replicates: usize, output: &OutputArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    check_beta(p.beta)?;
    if replicates < 2 {
        return Err(Failure::usage(format!("--B must be at least 2, got {replicates}")));
    }
    let loaded = load(input)?;
    let (basis, y) = pca(&loaded.x)?;
    let selection = select(&basis, p.k, p.band)?;
    let pipeline = Pipeline {
        k: p.k,
        beta: p.beta,
        modes: vec![PeelMode::MinVariance, pettiest_mode(p.band)],
        min_retained: p.min_retained,
    };
    let floor = p.min_retained.unwrap_or(y.ncols() + 1);
    let point = peels_in_basis(&y, &basis, p.k, p.beta, &pipeline.modes, floor)?;
    let rng = RngStream::new(p.seed, streams::BOOTSTRAP);
    let boot = bootstrap(&loaded.x, &pipeline, replicates, rng)?;
    let mut report = RunReport::new("bootstrap");
    report.config = config(json!({
        "k": p.k,
        "beta": p.beta,
        "band": band_name(p.band),
        "min_retained": floor,
        "replicates": replicates,
        "seed": p.seed,
    }));
    report.input = Some(input_out(&loaded));
    report.selection = Some((&selection).into());
    report.naive_selection = Some((&naive_tail(&basis, p.k)?).into());
    for (mode, (r, stats)) in pipeline.modes.iter().zip(&point) {
        report.peels.push(with_active_information(PeelOut::new(mode.label(), r, Some(stats)), &y, &r.bounds.indices));
    }
    report.bootstrap = Some(BootstrapOut::from(&boot));
    emit(&mut report, output, started)?;
    Ok(EXIT_OK)
}

fn cmd_verify(suite: SuiteArg, seed: u64, output: &OutputArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let suite = match suite {
        SuiteArg::Theorem1 => Suite::Theorem1,
        SuiteArg::Prop2 => Suite::Prop2,
        SuiteArg::Prop3 => Suite::Prop3,
        SuiteArg::Corollary8 => Suite::Corollary8,
        SuiteArg::Lemma6 => Suite::Lemma6,
        SuiteArg::Nfl => Suite::Nfl,
    };
    let result = run_suite(suite, seed)?;
    for c in &result.checks {
        eprintln!("{} {}: {:.4} (threshold {})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    let mut report = RunReport::new("verify");
    report.config = config(json!({ "suite": suite.name(), "seed": seed }));
    report.verification = Some(VerificationOut::from(&result));
    emit(&mut report, output, started)?;
    Ok(if result.passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

#[allow(clippy::too_many_arguments)]
fn cmd_prim(
    input: &InputArgs,
    alpha: f64,
    beta: f64,
    covers: usize,
    response: &str,
    seed: u64,
    output: &OutputArgs,
) -> Result<i32, Failure> {
    let started = Instant::now();
    let cfg = PrimConfig {
        alpha_peel: alpha,
        beta_floor: beta,
        max_covers: covers,
        response: if response == "counts" { PrimResponse::Counts } else { PrimResponse::Column(response.to_string()) },
    };
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Failure::usage(format!("--alpha must lie in (0, 1/2), got {alpha}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Failure::usage(format!("--beta must lie in (0, 1), got {beta}")));
    }
    if covers == 0 {
        return Err(Failure::usage("--covers must be at least 1"));
    }
    let loaded = load(input)?;
    let x = &loaded.x;
    let boxes = prim_classic(x, &cfg)?;
    let mut report = RunReport::new("prim");
    report.config = config(json!({
        "alpha": alpha,
        "beta": beta,
        "covers": covers,
        "response": response,
        "peel_steps": cfg.peel_steps(),
        "seed": seed,
    }));
    report.input = Some(input_out(&loaded));
    for (i, b) in boxes.iter().enumerate() {
        let stats = if b.retained.len() >= 2 {
            let c = sample_covariance(&x.select_rows(&b.retained))?;
            crate::covstats::cov_stats(&c).ok()
        } else {
            None
        };
        let out = PeelOut::new(format!("cover-{}", i + 1), b, stats.as_ref());
        report.peels.push(with_active_information(out, x, &b.bounds.indices));
    }
    emit(&mut report, output, started)?;
    Ok(EXIT_OK)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // A second call in the same process keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Pca { input, k, out, output } => cmd_pca(input, *k, out, output),
        Command::Gap { input, k, scree, output } => cmd_gap(input, *k, scree.as_deref(), output),
        Command::Peel { input, mode, peel, embedding, output } => cmd_peel(input, *mode, peel, embedding.as_deref(), output),
        Command::Bootstrap { input, peel, replicates, output } => cmd_bootstrap(input, peel, *replicates, output),
        Command::Verify { suite, seed, output } => cmd_verify(*suite, *seed, output),
        Command::Prim { input, alpha, beta, covers, response, seed, output } => {
            cmd_prim(input, *alpha, *beta, *covers, response, *seed, output)
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
