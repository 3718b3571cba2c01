//! Statistics of the covariance preserved by a peel, the orderings they
//! obey on elliptical data, and bootstrap standard errors.

use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gapsel::RANK_RTOL;
use crate::matrix::{eigendecompose, eigenvalues, project, sample_covariance, CovMatrix, DataMatrix, EigenBasis};
use crate::peel::{fastprim_with_floor, PeelMode, PeelResult, PettiestRule};
use crate::rng::RngStream;

/// Number of contiguous row blocks used for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovStats {
    pub total_variance: f64,
    pub frobenius: f64,
    /// Sum of `ln λ` over eigenvalues above `10⁻¹²·λ₁`.
    pub log_generalized_variance: f64,
    pub operator_norm: f64,
    /// Eigenvalues left out of the log-determinant.
    pub excluded_eigenvalues: usize,
}

/// Covariance of the retained rows of `y` over all of its columns.
pub fn preserved_cov(y: &DataMatrix, result: &PeelResult) -> Result<CovMatrix> {
    let required = y.ncols() + 1;
    if result.retained.len() < required {
        return Err(Error::EmptyRetention { retained: result.retained.len(), required });
    }
    sample_covariance(&y.select_rows(&result.retained))
}

pub fn cov_stats(c: &CovMatrix) -> Result<CovStats> {
    let stats = cov_stats_lenient(c)?;
    if stats.operator_norm <= 0.0 {
        return Err(Error::AllZeroSpectrum);
    }
    Ok(stats)
}

/// [`cov_stats`] that reports `-∞` as the log-determinant of a zero matrix.
fn cov_stats_lenient(c: &CovMatrix) -> Result<CovStats> {
    let values = eigenvalues(c)?;
    let top = values.first().copied().unwrap_or(0.0);
    let floor = RANK_RTOL * top;
    let kept: Vec<f64> = values.iter().copied().filter(|&v| top > 0.0 && v > floor).collect();
    let log_generalized_variance = if kept.is_empty() { f64::NEG_INFINITY } else { kept.iter().map(|v| v.ln()).sum() };
    Ok(CovStats {
        total_variance: c.trace(),
        frobenius: c.frobenius(),
        log_generalized_variance,
        operator_norm: top,
        excluded_eigenvalues: values.len() - kept.len(),
    })
}

/// Rotates `x` into its own principal-component basis and runs one peel per
/// mode on the scores. Returns each peel with the statistics of its survivors.
pub fn pca_peels(x: &DataMatrix, k: usize, beta: f64, modes: &[PeelMode], min_retained: usize) -> Result<Vec<(PeelResult, CovStats)>> {
    let basis = eigendecompose(&sample_covariance(x)?)?;
    let y = project(x, &basis)?;
    peels_in_basis(&y, &basis, k, beta, modes, min_retained)
}

/// [`pca_peels`] for scores `y` already projected onto `basis`.
pub fn peels_in_basis(
    y: &DataMatrix,
    basis: &EigenBasis,
    k: usize,
    beta: f64,
    modes: &[PeelMode],
    min_retained: usize,
) -> Result<Vec<(PeelResult, CovStats)>> {
    modes
        .iter()
        .map(|mode| {
            let r = fastprim_with_floor(y, basis, k, beta, mode, min_retained)?;
            let c = sample_covariance(&y.select_rows(&r.retained))?;
            Ok((r, cov_stats_lenient(&c)?))
        })
        .collect()
}

/// Difference `first − second` of one statistic with its Monte Carlo SE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub statistic: String,
    pub first: f64,
    pub second: f64,
    pub delta: f64,
    pub se: f64,
}

impl Comparison {
    /// `delta / se`; zero when both are zero.
    pub fn z(&self) -> f64 {
        if self.se > 0.0 {
            self.delta / self.se
        } else if self.delta == 0.0 {
            0.0
        } else {
            self.delta.signum() * f64::INFINITY
        }
    }
}

fn sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.iter().all(|v| *v == values[0]) {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Evaluates `f` on the full sample and on `batches` contiguous row blocks.
/// Returns the full-sample values and their batch-means standard errors.
fn batch_means<F>(x: &DataMatrix, batches: usize, f: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&DataMatrix) -> Result<Vec<f64>> + Sync,
{
    if batches < 2 || x.nrows() / batches < 2 {
        return Err(Error::InvalidParameter(format!("cannot split {} rows into {batches} batches", x.nrows())));
    }
    let full = f(x)?;
    let size = x.nrows() / batches;
    let per_batch: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let rows: Vec<usize> = (b * size..(b + 1) * size).collect();
            f(&x.select_rows(&rows))
        })
        .collect::<Result<_>>()?;
    let se = (0..full.len())
        .map(|s| sd(&per_batch.iter().map(|v| v[s]).collect::<Vec<_>>()) / (batches as f64).sqrt())
        .collect();
    Ok((full, se))
}

fn compare(statistic: &str, first: f64, second: f64, se: f64) -> Comparison {
    Comparison { statistic: statistic.into(), first, second, delta: first - second, se }
}

/// Trace and Frobenius norm after peeling the last `k` versus the first `k` components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingVerdict {
    pub pettiest: CovStats,
    pub leading: CovStats,
    /// Pettiest minus leading.
    pub trace: Comparison,
    pub frobenius: Comparison,
}

impl OrderingVerdict {
    /// Smallest of the two effect sizes in SE units.
    pub fn min_z(&self) -> f64 {
        self.trace.z().min(self.frobenius.z())
    }
}

pub fn ordering_check(y: &DataMatrix, k: usize, beta: f64) -> Result<OrderingVerdict> {
    ordering_check_batched(y, k, beta, DEFAULT_BATCHES)
}

pub fn ordering_check_batched(y: &DataMatrix, k: usize, beta: f64, batches: usize) -> Result<OrderingVerdict> {
    let d = y.ncols();
    if k == 0 || k >= d {
        return Err(Error::InvalidParameter(format!("need 1 ≤ k < d (d={d}, k={k})")));
    }
    let modes = [PeelMode::MinVolume(PettiestRule::Tail), PeelMode::MinVariance];
    let run = |z: &DataMatrix| -> Result<Vec<f64>> {
        let out = pca_peels(z, k, beta, &modes, d + 1)?;
        let (p, l) = (&out[0].1, &out[1].1);
        Ok(vec![p.total_variance - l.total_variance, p.frobenius - l.frobenius])
    };
    let (_, se) = batch_means(y, batches, run)?;
    let full = pca_peels(y, k, beta, &modes, d + 1)?;
    let (pettiest, leading) = (full[0].1, full[1].1);
    Ok(OrderingVerdict {
        trace: compare("total_variance", pettiest.total_variance, leading.total_variance, se[0]),
        frobenius: compare("frobenius", pettiest.frobenius, leading.frobenius, se[1]),
        pettiest,
        leading,
    })
}

/// Log box volume for the last `k` versus the first `k` components (expected negative).
pub fn volume_check(y: &DataMatrix, k: usize, beta: f64, batches: usize) -> Result<Comparison> {
    let d = y.ncols();
    let modes = [PeelMode::MinVolume(PettiestRule::Tail), PeelMode::MinVariance];
    let run = |z: &DataMatrix| -> Result<Vec<f64>> {
        let out = pca_peels(z, k, beta, &modes, d + 1)?;
        let (last, first) = (out[0].0.log_volume, out[1].0.log_volume);
        Ok(vec![last, first, last - first])
    };
    let (full, se) = batch_means(y, batches, run)?;
    Ok(compare("log_volume", full[0], full[1], se[2]))
}

/// Operator norms for the peel containing component 1 and for peels that avoid it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpnormVerdict {
    /// 0-based component sets; the first one is `{0, …, k−1}`.
    pub subsets: Vec<Vec<usize>>,
    pub operator_norms: Vec<f64>,
    /// Each peel avoiding component 1 minus the peel containing it (expected positive).
    pub first_vs_rest: Vec<Comparison>,
    /// Pairwise differences among the peels avoiding component 1 (expected zero).
    pub rest_pairs: Vec<Comparison>,
}

pub fn opnorm_check(y: &DataMatrix, k: usize, beta: f64) -> Result<OpnormVerdict> {
    opnorm_check_batched(y, k, beta, DEFAULT_BATCHES)
}

pub fn opnorm_check_batched(y: &DataMatrix, k: usize, beta: f64, batches: usize) -> Result<OpnormVerdict> {
    let d = y.ncols();
    if d < 3 || k == 0 || k >= d {
        return Err(Error::InvalidParameter(format!("operator-norm check needs d ≥ 3 and 1 ≤ k < d (d={d}, k={k})")));
    }
    let subsets: Vec<Vec<usize>> = (0..=d - k).map(|s| (s..s + k).collect()).collect();
    let modes: Vec<PeelMode> = subsets.iter().cloned().map(PeelMode::Explicit).collect();
    let norms = |z: &DataMatrix| -> Result<Vec<f64>> {
        Ok(pca_peels(z, k, beta, &modes, d + 1)?.iter().map(|(_, s)| s.operator_norm).collect())
    };
    let m = subsets.len();
    let mut pairs = Vec::new();
    for j in 1..m {
        pairs.push((j, 0));
    }
    for i in 1..m {
        for j in i + 1..m {
            pairs.push((i, j));
        }
    }
    let (_, se) = batch_means(y, batches, |z: &DataMatrix| {
        let v = norms(z)?;
        Ok(pairs.iter().map(|&(i, j)| v[i] - v[j]).collect())
    })?;
    let operator_norms = norms(y)?;
    let mut first_vs_rest = Vec::new();
    let mut rest_pairs = Vec::new();
    for (&(i, j), &s) in pairs.iter().zip(&se) {
        let c = compare("operator_norm", operator_norms[i], operator_norms[j], s);
        if j == 0 { first_vs_rest.push(c) } else { rest_pairs.push(c) }
    }
    Ok(OpnormVerdict { subsets, operator_norms, first_vs_rest, rest_pairs })
}

/// Largest pairwise gap in log generalized variance across peels of the given
/// 0-based component subsets.
pub fn gen_var_constancy(y: &DataMatrix, k: usize, beta: f64, subsets: &[Vec<usize>]) -> Result<f64> {
    let values = log_gen_vars(y, k, beta, subsets)?;
    Ok(max_pairwise(&values).0)
}

fn log_gen_vars(y: &DataMatrix, k: usize, beta: f64, subsets: &[Vec<usize>]) -> Result<Vec<f64>> {
    if subsets.len() < 2 {
        return Err(Error::InvalidParameter("need at least two subsets to compare".into()));
    }
    let modes: Vec<PeelMode> = subsets.iter().cloned().map(PeelMode::Explicit).collect();
    Ok(pca_peels(y, k, beta, &modes, y.ncols() + 1)?.iter().map(|(_, s)| s.log_generalized_variance).collect())
}

fn max_pairwise(values: &[f64]) -> (f64, usize, usize) {
    let mut best = (0.0, 0, 1);
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let delta = (values[i] - values[j]).abs();
            if delta > best.0 {
                best = (delta, i, j);
            }
        }
    }
    best
}

/// Log generalized variances per subset and every pairwise difference with a
/// bootstrap standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenVarReport {
    pub log_generalized_variances: Vec<f64>,
    pub pairs: Vec<Comparison>,
    pub max_delta: f64,
}

pub fn gen_var_bootstrap(y: &DataMatrix, k: usize, beta: f64, subsets: &[Vec<usize>], b: usize, rng: RngStream) -> Result<GenVarReport> {
    if b < 2 {
        return Err(Error::InvalidParameter(format!("bootstrap needs B ≥ 2, got {b}")));
    }
    let values = log_gen_vars(y, k, beta, subsets)?;
    let reps: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|r| log_gen_vars(&resample(y, rng.split(r as u64)), k, beta, subsets))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let deltas: Vec<f64> = reps.iter().map(|v| v[i] - v[j]).collect();
            pairs.push(compare("log_generalized_variance", values[i], values[j], sd(&deltas)));
        }
    }
    Ok(GenVarReport { max_delta: max_pairwise(&values).0, log_generalized_variances: values, pairs })
}

fn resample(x: &DataMatrix, rng: RngStream) -> DataMatrix {
    let n = x.nrows();
    let mut g = rng.rng();
    let rows: Vec<usize> = (0..n).map(|_| g.random_range(0..n)).collect();
    x.select_rows(&rows)
}

/// PCA, selection and peel settings rerun on every bootstrap replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub k: usize,
    pub beta: f64,
    pub modes: Vec<PeelMode>,
    /// Minimum survivors per peel; `None` means `d + 1`.
    pub min_retained: Option<usize>,
}

impl Pipeline {
    fn floor(&self, d: usize) -> usize {
        self.min_retained.unwrap_or(d + 1)
    }

    /// Runs the pipeline once on `x`.
    pub fn run(&self, x: &DataMatrix) -> Result<Vec<(PeelResult, CovStats)>> {
        pca_peels(x, self.k, self.beta, &self.modes, self.floor(x.ncols()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

fn estimate(values: &[f64]) -> Estimate {
    let mean = if values.iter().all(|v| *v == values[0]) { values[0] } else { values.iter().sum::<f64>() / values.len() as f64 };
    Estimate { mean, se: sd(values) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: String,
    pub total_variance: Estimate,
    pub frobenius: Estimate,
    pub log_generalized_variance: Estimate,
    pub operator_norm: Estimate,
    pub retained_fraction: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: usize,
    pub failed: usize,
    pub seed: RngStream,
    pub modes: Vec<ModeSummary>,
}

fn replicate_failure(e: &Error) -> bool {
    matches!(e, Error::EmptyRetention { .. } | Error::DegenerateSpectrum | Error::TooFewSamples(_))
}

/// Resamples rows with replacement `b` times, reruns the whole pipeline on each
/// resample, and reports the mean and standard deviation of each statistic.
/// Replicate `r` draws from `rng.split(r)`, so results do not depend on the
/// worker count.
pub fn bootstrap(x: &DataMatrix, pipeline: &Pipeline, b: usize, rng: RngStream) -> Result<BootstrapReport> {
    if b < 2 {
        return Err(Error::InvalidParameter(format!("bootstrap needs B ≥ 2, got {b}")));
    }
    if pipeline.modes.is_empty() {
        return Err(Error::InvalidParameter("pipeline has no peel modes".into()));
    }
    let outcomes: Vec<Result<Vec<(f64, CovStats)>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let sample = resample(x, rng.split(r as u64));
            Ok(pipeline.run(&sample)?.into_iter().map(|(p, s)| (p.retained_fraction, s)).collect())
        })
        .collect();
    let mut ok = Vec::with_capacity(b);
    let mut failed = 0;
    let mut first = None;
    for outcome in outcomes {
        match outcome {
            Ok(v) => ok.push(v),
            Err(e) if replicate_failure(&e) => {
                failed += 1;
                first.get_or_insert_with(|| e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    if failed * 100 > b || ok.len() < 2 {
        return Err(Error::ReplicateFailure { failed, total: b, first: first.unwrap_or_default() });
    }
    if failed > 0 {
        log::warn!("{failed} of {b} bootstrap replicates failed and were dropped");
    }
    let modes = pipeline
        .modes
        .iter()
        .enumerate()
        .map(|(m, mode)| {
            let column = |f: &dyn Fn(&(f64, CovStats)) -> f64| estimate(&ok.iter().map(|rep| f(&rep[m])).collect::<Vec<_>>());
            ModeSummary {
                mode: mode.label(),
                total_variance: column(&|r| r.1.total_variance),
                frobenius: column(&|r| r.1.frobenius),
                log_generalized_variance: column(&|r| r.1.log_generalized_variance),
                operator_norm: column(&|r| r.1.operator_norm),
                retained_fraction: column(&|r| r.0),
            }
        })
        .collect();
    Ok(BootstrapReport { replicates: b, failed, seed: rng, modes })
}
