//! Elliptical-family samplers built on the stochastic representation
//! `X = μ + L·A·U` (`U` uniform on the unit sphere, `L ≥ 0` independent),
//! and the radial-law integrals behind the truncated-covariance coefficients.
//!
//! For a spherical vector `S = R·O` peeled on coordinate `i` at
//! `|S_i| ≤ q`, the conditional covariance is `diag(a, …, b, …, a)` with
//!
//! ```text
//! D  = ∫ F_R(q/ω) f(ω) dω
//! I₁ = ∫ M(q/ω) f(ω) dω,   I₂ = ∫ ω² M(q/ω) f(ω) dω,   M(x) = E[R²; R ≤ x]
//! a  = (I₁ − k·I₂) / ((d − k)·D),   b = I₂ / D
//! ```
//!
//! where `f` is the density of `|O_i|`.

use std::f64::consts::FRAC_PI_2;

use faer::Mat;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::matrix::{CovMatrix, DataMatrix};
use crate::quadrature::integrate;
use crate::rng::RngStream;

/// Law of the radial variable `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Radial {
    /// `L² ~ χ²_d`: the multivariate normal.
    GaussianChi,
    /// Multivariate Student-t with `ν > 2` degrees of freedom.
    StudentT { nu: f64 },
    /// Symmetric multivariate Laplace: `L = √W·χ_d` with `W ~ Exp(1)`.
    Laplace,
    /// `L ≡ r`: uniform on the ellipsoid shell of radius `r`.
    Constant(f64),
}

impl Radial {
    pub fn name(&self) -> &'static str {
        match self {
            Radial::GaussianChi => "GaussianChi",
            Radial::StudentT { .. } => "StudentT",
            Radial::Laplace => "Laplace",
            Radial::Constant(_) => "Constant",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Radial::StudentT { nu } if !(nu > 2.0 && nu.is_finite()) => Err(Error::InvalidRadialParam(format!(
                "Student-t needs ν > 2 for a finite covariance, got {nu}"
            ))),
            Radial::Constant(r) if !(r >= 0.0 && r.is_finite()) => {
                Err(Error::InvalidRadialParam(format!("constant radius must be finite and ≥ 0, got {r}")))
            }
            _ => Ok(()),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> f64 {
        let chi2 = || ChiSquared::new(d as f64).expect("d ≥ 1");
        match *self {
            Radial::GaussianChi => chi2().sample(rng).sqrt(),
            Radial::StudentT { nu } => {
                let w = ChiSquared::new(nu).expect("validated ν").sample(rng) / nu;
                (chi2().sample(rng) / w).sqrt()
            }
            Radial::Laplace => {
                let w: f64 = Exp1.sample(rng);
                (w * chi2().sample(rng)).sqrt()
            }
            Radial::Constant(r) => r,
        }
    }

    /// `E[L²]/d`: the sample covariance converges to this multiple of `A·Aᵀ`.
    pub fn covariance_factor(&self, d: usize) -> f64 {
        match *self {
            Radial::GaussianChi | Radial::Laplace => 1.0,
            Radial::StudentT { nu } => nu / (nu - 2.0),
            Radial::Constant(r) => r * r / d as f64,
        }
    }

    /// Quantile of one coordinate of the spherical vector `L·U` (scale matrix = identity).
    pub fn marginal_quantile(&self, d: usize, p: f64) -> Result<f64> {
        match *self {
            Radial::GaussianChi => Ok(Normal::standard().inverse_cdf(p)),
            Radial::StudentT { nu } => {
                let t = StudentsT::new(0.0, 1.0, nu).map_err(|e| Error::InvalidRadialParam(e.to_string()))?;
                Ok(t.inverse_cdf(p))
            }
            Radial::Laplace => {
                // √W·Z with W ~ Exp(1) is Laplace with scale 1/√2.
                let b = std::f64::consts::FRAC_1_SQRT_2;
                Ok(if p < 0.5 { b * (2.0 * p).ln() } else { -b * (2.0 * (1.0 - p)).ln() })
            }
            Radial::Constant(r) => {
                // r·O_i with O_i² ~ Beta(1/2, (d−1)/2).
                if d == 1 {
                    return Ok(if p < 0.5 { -r } else { r });
                }
                let target = (2.0 * p - 1.0).abs();
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if beta_reg(0.5, 0.5 * (d as f64 - 1.0), mid * mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let s = r * 0.5 * (lo + hi);
                Ok(if p < 0.5 { -s } else { s })
            }
        }
    }

    /// `F_R(m) = P(R ≤ m)`.
    pub fn radial_cdf(&self, d: usize, m: f64) -> Result<f64> {
        let df = d as f64;
        match *self {
            _ if m.is_infinite() => Ok(1.0),
            Radial::GaussianChi => Ok(gamma_lr(0.5 * df, 0.5 * m * m)),
            Radial::StudentT { nu } => Ok(f_cdf(df, nu, m * m / df)),
            _ => Err(Error::UnsupportedRadial(self.name())),
        }
    }

    /// `M(m) = E[R²·1{R ≤ m}]`.
    pub fn truncated_second_moment(&self, d: usize, m: f64) -> Result<f64> {
        let df = d as f64;
        match *self {
            Radial::GaussianChi => Ok(if m.is_infinite() { df } else { df * gamma_lr(0.5 * df + 1.0, 0.5 * m * m) }),
            Radial::StudentT { nu } => {
                let full = df * nu / (nu - 2.0);
                if m.is_infinite() {
                    return Ok(full);
                }
                Ok(full * f_cdf(df + 2.0, nu - 2.0, m * m * (nu - 2.0) / (nu * (df + 2.0))))
            }
            _ => Err(Error::UnsupportedRadial(self.name())),
        }
    }
}

/// CDF of Fisher's F(d1, d2) at `x`.
fn f_cdf(d1: f64, d2: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    beta_reg(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2))
}

/// `X = μ + L·A·U` with `A·Aᵀ = Σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticalModel {
    mean: Vec<f64>,
    scale: Mat<f64>,
    radial: Radial,
}

impl EllipticalModel {
    pub fn new(mean: Vec<f64>, scale: Mat<f64>, radial: Radial) -> Result<Self> {
        let d = mean.len();
        if d == 0 || scale.nrows() != d || scale.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: scale.nrows() });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("mean must be finite".into()));
        }
        radial.validate()?;
        Ok(Self { mean, scale, radial })
    }

    /// Zero mean, `A = diag(√σ²)`: covariance proportional to `diag(variances)`.
    pub fn centered_diagonal(variances: &[f64], radial: Radial) -> Result<Self> {
        if variances.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("variances must be nonnegative".into()));
        }
        let d = variances.len();
        let scale = Mat::from_fn(d, d, |i, j| if i == j { variances[i].sqrt() } else { 0.0 });
        Self::new(vec![0.0; d], scale, radial)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn radial(&self) -> Radial {
        self.radial
    }

    /// `Σ = A·Aᵀ`.
    pub fn sigma(&self) -> CovMatrix {
        let d = self.dim();
        let a = &self.scale;
        let m = Mat::from_fn(d, d, |i, j| (0..d).map(|k| a[(i, k)] * a[(j, k)]).sum());
        CovMatrix::new(m).expect("A·Aᵀ is symmetric with nonnegative diagonal")
    }
}

fn sphere_point<R: Rng + ?Sized>(d: usize, rng: &mut R, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            norm2 += *v * *v;
        }
        if norm2 > 0.0 {
            let inv = norm2.sqrt().recip();
            out.iter_mut().for_each(|v| *v *= inv);
            // d = 1 must land exactly on ±1
            if d == 1 {
                out[0] = out[0].signum();
            }
            return;
        }
    }
}

/// `n` points uniform on the unit sphere `𝕊^{d−1}`.
pub fn sample_sphere(d: usize, n: usize, rng: RngStream) -> Result<DataMatrix> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!("sphere sampling needs d ≥ 1 and n ≥ 1 (d={d}, n={n})")));
    }
    let mut g = rng.rng();
    let mut flat = vec![0.0; n * d];
    for row in flat.chunks_mut(d) {
        sphere_point(d, &mut g, row);
    }
    DataMatrix::from_row_major(n, d, &flat)
}

/// `n` draws of `μ + L·A·U`.
pub fn sample_elliptical(model: &EllipticalModel, n: usize, rng: RngStream) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be ≥ 1".into()));
    }
    let d = model.dim();
    let mut g = rng.rng();
    let mut u = vec![0.0; d];
    let mut flat = vec![0.0; n * d];
    for row in flat.chunks_mut(d) {
        let radius = model.radial.draw(d, &mut g);
        sphere_point(d, &mut g, &mut u);
        for (i, out) in row.iter_mut().enumerate() {
            let au: f64 = (0..d).map(|k| model.scale[(i, k)] * u[k]).sum();
            *out = model.mean[i] + radius * au;
        }
    }
    DataMatrix::from_row_major(n, d, &flat)
}

/// Conditional-covariance coefficients for a peel of `k` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbCoefficients {
    /// Multiplier on the untouched eigenvalues.
    pub a: f64,
    /// Multiplier on the peeled eigenvalues.
    pub b: f64,
    pub d_integral: f64,
    pub i1: f64,
    pub i2: f64,
    pub relative_error: f64,
}

const QUAD_RTOL: f64 = 1e-11;
/// Worst accepted relative error estimate on `D`, `I₁`, `I₂`.
pub const QUAD_MAX_RELATIVE_ERROR: f64 = 1e-6;

/// Integrates `D`, `I₁`, `I₂` for a single peeled coordinate (`k = 1`) and
/// per-tail mass `alpha / 2`. Larger `k` goes through [`coeffs_ab_monte_carlo`].
pub fn coeffs_ab_quadrature(model: &EllipticalModel, k: usize, alpha: f64) -> Result<AbCoefficients> {
    let d = model.dim();
    if k != 1 || d < 2 {
        return Err(Error::InvalidParameter(format!(
            "quadrature handles k = 1 with d ≥ 2 (got k={k}, d={d}); use the Monte Carlo estimator"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("tail mass α must lie in (0, 1], got {alpha}")));
    }
    let radial = model.radial;
    // Surface the unsupported-law error before integrating.
    radial.radial_cdf(d, 1.0)?;
    let q = radial.marginal_quantile(d, 1.0 - alpha / 2.0)?;

    // ω = sin θ turns the |O_i| density 2(1−ω²)^{(d−3)/2}/B(½,(d−1)/2) into
    // a smooth weight ∝ cos^{d−2}θ on (0, π/2).
    let df = d as f64;
    let norm = 2.0 / ln_beta(0.5, 0.5 * (df - 1.0)).exp();
    let weight = |theta: f64| norm * theta.cos().powi(d as i32 - 2);
    let m_of = |theta: f64| {
        let w = theta.sin();
        if w == 0.0 { f64::INFINITY } else { q / w }
    };
    let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
    let eval = |g: &dyn Fn(f64) -> Result<f64>| {
        integrate(
            |t| match g(t) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            FRAC_PI_2,
            QUAD_RTOL,
            2000,
        )
    };
    let d_int = eval(&|t| Ok(radial.radial_cdf(d, m_of(t))? * weight(t)));
    let i1 = eval(&|t| Ok(radial.truncated_second_moment(d, m_of(t))? * weight(t)));
    let i2 = eval(&|t| {
        let w = t.sin();
        Ok(w * w * radial.truncated_second_moment(d, m_of(t))? * weight(t))
    });
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let relative_error = d_int.relative_error().max(i1.relative_error()).max(i2.relative_error());
    if !(relative_error <= QUAD_MAX_RELATIVE_ERROR) {
        return Err(Error::QuadratureNonConvergent(relative_error));
    }
    let (dv, i1v, i2v) = (d_int.value, i1.value, i2.value);
    let kf = k as f64;
    Ok(AbCoefficients {
        a: (i1v - kf * i2v) / ((df - kf) * dv),
        b: i2v / dv,
        d_integral: dv,
        i1: i1v,
        i2: i2v,
        relative_error,
    })
}

/// Monte Carlo estimate of `(a, b)` with standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbEstimate {
    pub a: f64,
    pub a_se: f64,
    pub b: f64,
    pub b_se: f64,
    pub retained: usize,
}

/// Simulates the spherical law, keeps draws with `|S_i| ≤ q` on the first `k`
/// coordinates, and averages squared coordinates inside and outside the peel.
pub fn coeffs_ab_monte_carlo(model: &EllipticalModel, k: usize, alpha: f64, n: usize, rng: RngStream) -> Result<AbEstimate> {
    let d = model.dim();
    if k == 0 || k >= d {
        return Err(Error::InvalidParameter(format!("need 1 ≤ k < d (k={k}, d={d})")));
    }
    if !(alpha > 0.0 && k as f64 * alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < kα ≤ 1 (k={k}, α={alpha})")));
    }
    let q = model.radial.marginal_quantile(d, 1.0 - alpha / 2.0)?;
    let spherical = EllipticalModel::centered_diagonal(&vec![1.0; d], model.radial)?;
    let s = sample_elliptical(&spherical, n, rng)?;
    let mut peeled = Vec::new();
    let mut free = Vec::new();
    for i in 0..n {
        if (0..k).all(|j| s.get(i, j).abs() <= q) {
            // per-row averages keep draws independent for the SE
            peeled.push((0..k).map(|j| s.get(i, j).powi(2)).sum::<f64>() / k as f64);
            free.push((k..d).map(|j| s.get(i, j).powi(2)).sum::<f64>() / (d - k) as f64);
        }
    }
    if peeled.len() < 2 {
        return Err(Error::EmptyRetention { retained: peeled.len(), required: 2 });
    }
    let (b, b_se) = mean_and_se(&peeled);
    let (a, a_se) = mean_and_se(&free);
    Ok(AbEstimate { a, a_se, b, b_se, retained: peeled.len() })
}

pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample covariance between `f(ω) = ω²` and `g(ω) = M(q/ω)` for `ω = |O_1|`
/// with its standard error. The correlation inequality for an increasing and a
/// decreasing function says the population value is `≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub covariance: f64,
    pub se: f64,
}

pub fn chebyshev_covariance(radial: Radial, d: usize, alpha: f64, n: usize, rng: RngStream) -> Result<CovarianceEstimate> {
    if d < 2 || n < 2 {
        return Err(Error::InvalidParameter(format!("need d ≥ 2 and n ≥ 2 (d={d}, n={n})")));
    }
    let q = radial.marginal_quantile(d, 1.0 - alpha / 2.0)?;
    let o = sample_sphere(d, n, rng)?;
    let mut f = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        let w = o.get(i, 0).abs();
        f.push(w * w);
        g.push(radial.truncated_second_moment(d, if w == 0.0 { f64::INFINITY } else { q / w })?);
    }
    let (mf, _) = mean_and_se(&f);
    let (mg, _) = mean_and_se(&g);
    let products: Vec<f64> = f.iter().zip(&g).map(|(a, b)| (a - mf) * (b - mg)).collect();
    let (mean, se) = mean_and_se(&products);
    let nf = n as f64;
    Ok(CovarianceEstimate { covariance: mean * nf / (nf - 1.0), se })
}
