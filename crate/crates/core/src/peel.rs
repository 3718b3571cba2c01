//! Inter-quantile boxes, the one-shot FastPRIM peel in the principal-component
//! basis, and the iterative peel/cover PRIM baseline.
//!
//! Column indices are 0-based throughout this module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gapsel::{log_spectral_gap, naive_tail};
use crate::matrix::{DataMatrix, EigenBasis};

/// Type-7 sample quantile: linear interpolation between order statistics at
/// position `(n − 1)·p` (0-based).
pub fn quantile(column: &[f64], p: f64) -> Result<f64> {
    if column.is_empty() {
        return Err(Error::EmptyColumn);
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// [`quantile`] on an already ascending column.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyColumn);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("quantile level must lie in [0, 1], got {p}")));
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let below = sorted[lo];
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return Ok(below);
    }
    Ok(below + frac * (sorted[lo + 1] - below))
}

/// Which components a FastPRIM peel truncates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PettiestRule {
    /// Band ending at the largest log-eigenvalue drop.
    Gap,
    /// The last `k` components.
    Tail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeelMode {
    /// Truncate the pettiest `k` components: smallest box volume.
    MinVolume(PettiestRule),
    /// Truncate the leading `k` components: smallest preserved variance.
    MinVariance,
    /// Truncate the listed components.
    Explicit(Vec<usize>),
}

impl PeelMode {
    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            PeelMode::MinVolume(PettiestRule::Gap) => "pettiest".into(),
            PeelMode::MinVolume(PettiestRule::Tail) => "tail".into(),
            PeelMode::MinVariance => "principal".into(),
            PeelMode::Explicit(idx) => {
                let parts: Vec<String> = idx.iter().map(|i| (i + 1).to_string()).collect();
                format!("explicit[{}]", parts.join(","))
            }
        }
    }

    /// Component indices truncated by this mode.
    pub fn resolve(&self, basis: &EigenBasis, k: usize) -> Result<Vec<usize>> {
        let d = basis.dim();
        if k == 0 || k > d {
            return Err(Error::InvalidParameter(format!("k must lie in 1..={d}, got {k}")));
        }
        match self {
            PeelMode::MinVolume(PettiestRule::Gap) => Ok(log_spectral_gap(basis, k)?.pettiest_band.columns()),
            PeelMode::MinVolume(PettiestRule::Tail) => Ok(naive_tail(basis, k)?.pettiest_band.columns()),
            PeelMode::MinVariance => Ok((0..k).collect()),
            PeelMode::Explicit(idx) => {
                if idx.len() != k {
                    return Err(Error::InvalidParameter(format!("explicit index set has {} entries, k = {k}", idx.len())));
                }
                Ok(idx.clone())
            }
        }
    }
}

/// Components to truncate and the retained-probability target `β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeelSpec {
    indices: Vec<usize>,
    beta: f64,
}

impl PeelSpec {
    pub fn new(indices: Vec<usize>, beta: f64, d: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter("peel needs at least one component".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= d) {
            return Err(Error::InvalidParameter(format!("component {bad} out of range for d = {d}")));
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("peel components must be distinct".into()));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("β must lie in (0, 1], got {beta}")));
        }
        Ok(Self { indices, beta })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    /// Mass removed from each tail of each truncated component: `(1 − β)/(2k)`.
    pub fn tail_mass(&self) -> f64 {
        (1.0 - self.beta) / (2.0 * self.k() as f64)
    }
}

/// Product of closed intervals over a subset of columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    pub indices: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl IntervalBox {
    pub fn contains_row(&self, x: &DataMatrix, row: usize) -> bool {
        self.indices
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&j, (&lo, &hi))| (lo..=hi).contains(&x.get(row, j)))
    }

    /// `Σ ln(hi − lo)`; `-∞` if any side has zero width.
    pub fn log_volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(lo, hi)| (hi - lo).ln()).sum()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeelResult {
    #[serde(rename = "box")]
    pub bounds: IntervalBox,
    pub retained: Vec<usize>,
    pub log_volume: f64,
    pub retained_fraction: f64,
}

/// Central inter-quantile interval on every truncated column.
pub fn interquantile_box(y: &DataMatrix, spec: &PeelSpec) -> Result<IntervalBox> {
    let tail = spec.tail_mass();
    let mut lo = Vec::with_capacity(spec.k());
    let mut hi = Vec::with_capacity(spec.k());
    for &j in spec.indices() {
        if j >= y.ncols() {
            return Err(Error::DimensionMismatch { expected: j + 1, actual: y.ncols() });
        }
        let mut sorted = y.column(j).to_vec();
        sorted.sort_by(f64::total_cmp);
        lo.push(quantile_sorted(&sorted, tail)?);
        hi.push(quantile_sorted(&sorted, 1.0 - tail)?);
    }
    Ok(IntervalBox { indices: spec.indices().to_vec(), lo, hi })
}

/// One simultaneous peel of every truncated column of `y`. Fewer than `d + 1`
/// survivors is an error since their covariance would be singular.
pub fn peel(y: &DataMatrix, spec: &PeelSpec) -> Result<PeelResult> {
    peel_with_floor(y, spec, y.ncols() + 1)
}

/// [`peel`] with an explicit minimum survivor count. Rank-deficient data
/// (e.g. images with constant pixels) can use a floor below `d + 1`.
pub fn peel_with_floor(y: &DataMatrix, spec: &PeelSpec, required: usize) -> Result<PeelResult> {
    let bounds = interquantile_box(y, spec)?;
    let retained: Vec<usize> = (0..y.nrows()).filter(|&i| bounds.contains_row(y, i)).collect();
    if retained.len() < required.max(1) {
        return Err(Error::EmptyRetention { retained: retained.len(), required });
    }
    Ok(PeelResult {
        log_volume: bounds.log_volume(),
        retained_fraction: retained.len() as f64 / y.nrows() as f64,
        bounds,
        retained,
    })
}

/// FastPRIM on data `y` already projected onto `basis` (column `j` holds
/// the scores of component `j + 1`).
pub fn fastprim(y: &DataMatrix, basis: &EigenBasis, k: usize, beta: f64, mode: &PeelMode) -> Result<PeelResult> {
    fastprim_with_floor(y, basis, k, beta, mode, y.ncols() + 1)
}

/// [`fastprim`] with the survivor floor of [`peel_with_floor`].
pub fn fastprim_with_floor(
    y: &DataMatrix,
    basis: &EigenBasis,
    k: usize,
    beta: f64,
    mode: &PeelMode,
    min_retained: usize,
) -> Result<PeelResult> {
    if y.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), actual: y.ncols() });
    }
    let indices = mode.resolve(basis, k)?;
    let spec = PeelSpec::new(indices, beta, y.ncols())?;
    peel_with_floor(y, &spec, min_retained)
}

/// Target maximized by each PRIM peel step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimResponse {
    /// Box density: `ln(rows in box) − ln(box volume)`.
    Counts,
    /// Mean of the named column, which is then excluded from the box.
    Column(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimConfig {
    pub alpha_peel: f64,
    pub beta_floor: f64,
    pub max_covers: usize,
    pub response: PrimResponse,
}

impl PrimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha_peel > 0.0 && self.alpha_peel < 0.5) {
            return Err(Error::InvalidParameter(format!("alpha_peel must lie in (0, 1/2), got {}", self.alpha_peel)));
        }
        if !(self.beta_floor > 0.0 && self.beta_floor < 1.0) {
            return Err(Error::InvalidParameter(format!("beta_floor must lie in (0, 1), got {}", self.beta_floor)));
        }
        if self.max_covers == 0 {
            return Err(Error::InvalidParameter("max_covers must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of peel steps per cover: the largest `L` with `(1 − α)^L ≥ β`.
    pub fn peel_steps(&self) -> usize {
        let exact = self.beta_floor.ln() / (1.0 - self.alpha_peel).ln();
        // absorb roundoff when (1 − α)^L hits β exactly
        (exact + 1e-9).floor() as usize
    }
}

/// Peel/cover PRIM. Each cover starts from the bounding box of the rows not
/// claimed by earlier covers and performs [`PrimConfig::peel_steps`] steps;
/// each step drops the lower `α`-tail or upper `α`-tail of one column,
/// whichever maximizes the target on the rows left. Ties go to the lowest
/// column, lower tail first.
pub fn prim_classic(x: &DataMatrix, cfg: &PrimConfig) -> Result<Vec<PeelResult>> {
    cfg.validate()?;
    let n = x.nrows();
    let (dims, response): (Vec<usize>, Option<&[f64]>) = match &cfg.response {
        PrimResponse::Counts => ((0..x.ncols()).collect(), None),
        PrimResponse::Column(name) => {
            let names = x.names().ok_or_else(|| Error::InvalidParameter(format!("no column named {name:?}")))?;
            let r = names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::InvalidParameter(format!("no column named {name:?}")))?;
            let col = x.column(r);
            if col.iter().all(|v| *v == col[0]) {
                return Err(Error::DegenerateResponse);
            }
            ((0..x.ncols()).filter(|&j| j != r).collect(), Some(col))
        }
    };
    if dims.is_empty() {
        return Err(Error::InvalidParameter("PRIM needs at least one box dimension".into()));
    }
    let steps = cfg.peel_steps();
    let mut pool: Vec<usize> = (0..n).collect();
    let mut boxes = Vec::new();
    for _ in 0..cfg.max_covers {
        if pool.len() < 2 {
            break;
        }
        let (bounds, members) = peel_one_cover(x, &dims, response, &pool, cfg.alpha_peel, steps)?;
        if members.is_empty() {
            break;
        }
        let in_box: std::collections::HashSet<usize> = members.iter().copied().collect();
        pool.retain(|i| !in_box.contains(i));
        boxes.push(PeelResult {
            log_volume: bounds.log_volume(),
            retained_fraction: members.len() as f64 / n as f64,
            bounds,
            retained: members,
        });
    }
    Ok(boxes)
}

fn target(response: Option<&[f64]>, rows: &[usize], lo: &[f64], hi: &[f64]) -> f64 {
    match response {
        Some(r) => rows.iter().map(|&i| r[i]).sum::<f64>() / rows.len() as f64,
        None => {
            let log_vol: f64 = lo.iter().zip(hi).map(|(l, h)| (h - l).ln()).sum();
            (rows.len() as f64).ln() - log_vol
        }
    }
}

fn peel_one_cover(
    x: &DataMatrix,
    dims: &[usize],
    response: Option<&[f64]>,
    pool: &[usize],
    alpha: f64,
    steps: usize,
) -> Result<(IntervalBox, Vec<usize>)> {
    let mut rows = pool.to_vec();
    let mut lo = Vec::with_capacity(dims.len());
    let mut hi = Vec::with_capacity(dims.len());
    for &j in dims {
        let (mn, mx) = rows
            .iter()
            .map(|&i| x.get(i, j))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        lo.push(mn);
        hi.push(mx);
    }
    for _ in 0..steps {
        let mut best: Option<(f64, usize, bool, f64, Vec<usize>)> = None;
        for (slot, &j) in dims.iter().enumerate() {
            let mut sorted: Vec<f64> = rows.iter().map(|&i| x.get(i, j)).collect();
            sorted.sort_by(f64::total_cmp);
            for upper in [false, true] {
                let cut = quantile_sorted(&sorted, if upper { 1.0 - alpha } else { alpha })?;
                let kept: Vec<usize> = rows
                    .iter()
                    .copied()
                    .filter(|&i| if upper { x.get(i, j) <= cut } else { x.get(i, j) >= cut })
                    .collect();
                if kept.is_empty() || kept.len() == rows.len() {
                    continue;
                }
                let (mut clo, mut chi) = (lo.clone(), hi.clone());
                if upper {
                    chi[slot] = cut;
                } else {
                    clo[slot] = cut;
                }
                let value = target(response, &kept, &clo, &chi);
                if value.is_nan() {
                    continue;
                }
                if best.as_ref().is_none_or(|b| value > b.0) {
                    best = Some((value, slot, upper, cut, kept));
                }
            }
        }
        let Some((_, slot, upper, cut, kept)) = best else {
            break;
        };
        if upper {
            hi[slot] = cut;
        } else {
            lo[slot] = cut;
        }
        rows = kept;
    }
    Ok((IntervalBox { indices: dims.to_vec(), lo, hi }, rows))
}

/// Per-column `ln(max − min)` summed over `indices`: log volume of the
/// empirical bounding box.
pub fn support_log_volume(x: &DataMatrix, indices: &[usize]) -> f64 {
    indices
        .iter()
        .map(|&j| {
            let col = x.column(j);
            let mx = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mn = col.iter().copied().fold(f64::INFINITY, f64::min);
            (mx - mn).ln()
        })
        .sum()
}

/// `ln P̂(B) − ln P₀(B)` with `P₀` uniform on the support box.
pub fn active_information(retained_fraction: f64, box_logvol: f64, support_logvol: f64) -> Result<f64> {
    if !(retained_fraction > 0.0) {
        return Err(Error::NonPositiveFraction(retained_fraction));
    }
    if retained_fraction > 1.0 {
        return Err(Error::InvalidParameter(format!("retained fraction exceeds 1: {retained_fraction}")));
    }
    if !box_logvol.is_finite() || !support_logvol.is_finite() {
        return Err(Error::InvalidParameter("box volumes must be finite and positive".into()));
    }
    Ok(retained_fraction.ln() - (box_logvol - support_logvol))
}
