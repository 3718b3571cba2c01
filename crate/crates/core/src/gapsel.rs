//! Choosing which band of principal components counts as "pettiest".
//!
//! Indices in [`Band`] and [`GapSelection`] are 1-based component ranks, as
//! they appear on a scree plot. Use [`Band::columns`] for 0-based columns.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::EigenBasis;

/// Eigenvalues at or below this fraction of `λ₁` are numerical zeros.
pub const RANK_RTOL: f64 = 1e-12;

/// Inclusive 1-based range of component ranks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub first: usize,
    pub last: usize,
}

impl Band {
    pub fn contains(&self, index: usize) -> bool {
        (self.first..=self.last).contains(&index)
    }

    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }

    /// 0-based column indices of the band.
    pub fn columns(&self) -> Vec<usize> {
        (self.first - 1..self.last).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    LogGap,
    NaiveTail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSelection {
    pub kind: SelectionKind,
    pub k: usize,
    /// `j*`, the last rank before the largest log-eigenvalue drop.
    pub gap_index: Option<usize>,
    /// `log₁₀ λ_{j*} − log₁₀ λ_{j*+1}`; infinite when `λ_{j*+1}` is exactly zero.
    pub gap_size: Option<f64>,
    pub pettiest_band: Band,
    pub principal_band: Band,
}

fn check_k(d: usize, k: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!("band width k must lie in 1..={d}, got {k}")));
    }
    Ok(())
}

/// Places the pettiest band so it ends at the largest drop of the log scree plot.
///
/// Candidate `j` must satisfy `k ≤ j ≤ d − 1` and `λ_j > 10⁻¹²·λ₁`, so the band
/// fits and never starts inside the numerical-zero floor. Ties go to the smallest `j`.
pub fn log_spectral_gap(basis: &EigenBasis, k: usize) -> Result<GapSelection> {
    let lambda = basis.eigenvalues();
    let d = lambda.len();
    check_k(d, k)?;
    let top = lambda[0];
    if !(top > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    let floor = RANK_RTOL * top;
    let above = lambda.iter().take_while(|&&v| v > floor).count();
    if above < k {
        return Err(Error::InvalidParameter(format!(
            "need at least {k} eigenvalues above the numerical floor, found {above}"
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for j in k..d {
        if lambda[j - 1] <= floor {
            break;
        }
        let next = lambda[j];
        let gap = if next <= 0.0 { f64::INFINITY } else { (lambda[j - 1] / next).log10() };
        if best.is_none_or(|(_, g)| gap > g) {
            best = Some((j, gap));
        }
    }
    let (j_star, gap) = best.ok_or_else(|| Error::InvalidParameter(format!("no admissible gap index for d = {d}, k = {k}")))?;
    if gap <= 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    Ok(GapSelection {
        kind: SelectionKind::LogGap,
        k,
        gap_index: Some(j_star),
        gap_size: Some(gap),
        pettiest_band: Band { first: j_star + 1 - k, last: j_star },
        principal_band: Band { first: 1, last: k },
    })
}

/// The last `k` components, regardless of eigenvalue magnitudes.
pub fn naive_tail(basis: &EigenBasis, k: usize) -> Result<GapSelection> {
    let d = basis.dim();
    check_k(d, k)?;
    Ok(GapSelection {
        kind: SelectionKind::NaiveTail,
        k,
        gap_index: None,
        gap_size: None,
        pettiest_band: Band { first: d + 1 - k, last: d },
        principal_band: Band { first: 1, last: k },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandTag {
    Principal,
    Pettiest,
    Naive,
    None,
}

impl BandTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BandTag::Principal => "principal",
            BandTag::Pettiest => "pettiest",
            BandTag::Naive => "naive",
            BandTag::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeRow {
    pub index: usize,
    pub eigenvalue: f64,
    /// `-∞` for eigenvalues clamped to zero.
    pub log10_eigenvalue: f64,
    pub band: BandTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeTable {
    pub rows: Vec<ScreeRow>,
}

/// Scree-plot data. A row in several bands is tagged principal first, then
/// pettiest (log-gap selections only), then naive tail.
pub fn scree_export(basis: &EigenBasis, selection: &GapSelection) -> ScreeTable {
    let d = basis.dim();
    let k = selection.k.min(d);
    let tail = Band { first: d + 1 - k, last: d };
    let rows = basis
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &eigenvalue)| {
            let index = i + 1;
            let band = if selection.principal_band.contains(index) {
                BandTag::Principal
            } else if selection.kind == SelectionKind::LogGap && selection.pettiest_band.contains(index) {
                BandTag::Pettiest
            } else if tail.contains(index) {
                BandTag::Naive
            } else {
                BandTag::None
            };
            ScreeRow { index, eigenvalue, log10_eigenvalue: eigenvalue.log10(), band }
        })
        .collect();
    ScreeTable { rows }
}

impl ScreeTable {
    /// CSV with header `index,eigenvalue,log10_eigenvalue,band`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue", "log10_eigenvalue", "band"])?;
        for row in &self.rows {
            let log = if row.log10_eigenvalue == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{:.16e}", row.log10_eigenvalue)
            };
            w.write_record([
                row.index.to_string(),
                format!("{:.16e}", row.eigenvalue),
                log,
                row.band.as_str().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}
