//! JSON run reports. Non-finite numbers become the strings `"inf"`, `"-inf"`
//! or `"nan"` so that every report parses back to the same value.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::covstats::{BootstrapReport, CovStats, Estimate, ModeSummary};
use crate::gapsel::GapSelection;
use crate::peel::PeelResult;
use crate::rng::RngStream;
use crate::verify::SuiteReport;

/// An `f64` that survives a JSON round trip even when infinite or NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Real(pub f64);

impl From<f64> for Real {
    fn from(v: f64) -> Self {
        Real(v)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RealVisitor;
        impl Visitor<'_> for RealVisitor {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                match v {
                    "inf" => Ok(Real(f64::INFINITY)),
                    "-inf" => Ok(Real(f64::NEG_INFINITY)),
                    "nan" => Ok(Real(f64::NAN)),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(RealVisitor)
    }
}

fn reals(values: &[f64]) -> Vec<Real> {
    values.iter().copied().map(Real).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsOut {
    pub total_variance: Real,
    pub frobenius: Real,
    pub log_generalized_variance: Real,
    pub operator_norm: Real,
    pub excluded_eigenvalues: usize,
}

impl From<&CovStats> for StatsOut {
    fn from(s: &CovStats) -> Self {
        StatsOut {
            total_variance: Real(s.total_variance),
            frobenius: Real(s.frobenius),
            log_generalized_variance: Real(s.log_generalized_variance),
            operator_norm: Real(s.operator_norm),
            excluded_eigenvalues: s.excluded_eigenvalues,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionOut {
    pub kind: String,
    pub k: usize,
    pub gap_index: Option<usize>,
    pub gap_size: Option<Real>,
    pub pettiest_band: [usize; 2],
    pub principal_band: [usize; 2],
}

impl From<&GapSelection> for SelectionOut {
    fn from(s: &GapSelection) -> Self {
        SelectionOut {
            kind: serde_json::to_value(s.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
            k: s.k,
            gap_index: s.gap_index,
            gap_size: s.gap_size.map(Real),
            pettiest_band: [s.pettiest_band.first, s.pettiest_band.last],
            principal_band: [s.principal_band.first, s.principal_band.last],
        }
    }
}

/// One peel: its box, survivors and the statistics of their covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeelOut {
    pub label: String,
    /// 1-based component (or column) indices constrained by the box.
    pub components: Vec<usize>,
    pub lo: Vec<Real>,
    pub hi: Vec<Real>,
    pub retained_fraction: Real,
    pub log_volume: Real,
    pub retained_count: usize,
    pub stats: Option<StatsOut>,
    pub active_information: Option<Real>,
    /// 0-based row indices of the survivors.
    pub retained_rows: Vec<usize>,
    /// Embedding coordinates of the survivors, if an embedding was joined.
    pub embedding: Option<Vec<Vec<Real>>>,
}

impl PeelOut {
    pub fn new(label: String, r: &PeelResult, stats: Option<&CovStats>) -> Self {
        PeelOut {
            label,
            components: r.bounds.indices.iter().map(|i| i + 1).collect(),
            lo: reals(&r.bounds.lo),
            hi: reals(&r.bounds.hi),
            retained_fraction: Real(r.retained_fraction),
            log_volume: Real(r.log_volume),
            retained_count: r.retained.len(),
            stats: stats.map(StatsOut::from),
            active_information: None,
            retained_rows: r.retained.clone(),
            embedding: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOut {
    pub mean: Real,
    pub se: Real,
}

impl From<&Estimate> for EstimateOut {
    fn from(e: &Estimate) -> Self {
        EstimateOut { mean: Real(e.mean), se: Real(e.se) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeOut {
    pub mode: String,
    pub total_variance: EstimateOut,
    pub frobenius: EstimateOut,
    pub log_generalized_variance: EstimateOut,
    pub operator_norm: EstimateOut,
    pub retained_fraction: EstimateOut,
}

impl From<&ModeSummary> for ModeOut {
    fn from(m: &ModeSummary) -> Self {
        ModeOut {
            mode: m.mode.clone(),
            total_variance: (&m.total_variance).into(),
            frobenius: (&m.frobenius).into(),
            log_generalized_variance: (&m.log_generalized_variance).into(),
            operator_norm: (&m.operator_norm).into(),
            retained_fraction: (&m.retained_fraction).into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOut {
    pub replicates: usize,
    pub failed: usize,
    pub seed: RngStream,
    pub modes: Vec<ModeOut>,
}

impl From<&BootstrapReport> for BootstrapOut {
    fn from(b: &BootstrapReport) -> Self {
        BootstrapOut { replicates: b.replicates, failed: b.failed, seed: b.seed, modes: b.modes.iter().map(ModeOut::from).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOut {
    pub name: String,
    pub value: Real,
    pub threshold: Real,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationOut {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<CheckOut>,
}

impl From<&SuiteReport> for VerificationOut {
    fn from(r: &SuiteReport) -> Self {
        VerificationOut {
            suite: r.suite.name().to_string(),
            passed: r.passed,
            checks: r
                .checks
                .iter()
                .map(|c| CheckOut { name: c.name.clone(), value: Real(c.value), threshold: Real(c.threshold), passed: c.passed })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputOut {
    pub source: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    /// Every parameter of the run, including the seed.
    pub config: serde_json::Map<String, serde_json::Value>,
    pub input: Option<InputOut>,
    pub selection: Option<SelectionOut>,
    pub naive_selection: Option<SelectionOut>,
    pub peels: Vec<PeelOut>,
    pub bootstrap: Option<BootstrapOut>,
    pub verification: Option<VerificationOut>,
    pub timing_seconds: Option<Real>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::Map::new(),
            input: None,
            selection: None,
            naive_selection: None,
            peels: Vec::new(),
            bootstrap: None,
            verification: None,
            timing_seconds: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report fields always serialize");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinels_round_trip() {
        let values = vec![Real(1.5), Real(f64::INFINITY), Real(f64::NEG_INFINITY), Real(-0.25)];
        let text = serde_json::to_string(&values).unwrap();
        assert_eq!(text, r#"[1.5,"inf","-inf",-0.25]"#);
        assert_eq!(serde_json::from_str::<Vec<Real>>(&text).unwrap(), values);
        let nan: Real = serde_json::from_str(r#""nan""#).unwrap();
        assert!(nan.0.is_nan());
    }

    #[test]
    fn report_round_trip_is_identity() {
        let mut r = RunReport::new("peel");
        r.config.insert("seed".into(), 7.into());
        r.peels.push(PeelOut {
            label: "pettiest".into(),
            components: vec![2],
            lo: vec![Real(-1.0)],
            hi: vec![Real(1.0)],
            retained_fraction: Real(0.9),
            log_volume: Real(2f64.ln()),
            retained_count: 9,
            stats: Some(StatsOut {
                total_variance: Real(3.0),
                frobenius: Real(2.0),
                log_generalized_variance: Real(f64::NEG_INFINITY),
                operator_norm: Real(1.0),
                excluded_eigenvalues: 1,
            }),
            active_information: Some(Real(0.1)),
            retained_rows: (0..9).collect(),
            embedding: None,
        });
        let text = r.to_json();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json(), text);
    }
}
