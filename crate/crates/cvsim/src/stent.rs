//! Stent evaluation: compares required (diameter, pressure) points from the
//! simulation against stent chronic-outward-force pressure–diameter curves.
//!
//! Curves are external CSV data (`diameter_mm,pressure_kpa`, one curve per
//! file) referenced from a manifest that maps stent names to files. The
//! curves shipped in `data/stents/` are synthetic illustrations, not device
//! measurements.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::driver::RequirementPoint;

#[derive(Debug, Error)]
pub enum StentError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("curve {name} has fewer than two samples")]
    TooShort { name: String },
    #[error("curve {name}: diameters must be strictly increasing at sample {index}")]
    NotSorted { name: String, index: usize },
}

/// A stent's applied-pressure-versus-open-diameter curve.
#[derive(Debug, Clone)]
pub struct StentCurve {
    pub name: String,
    /// (open diameter mm, applied pressure kPa), diameters strictly
    /// increasing.
    pub samples: Vec<(f64, f64)>,
    /// Set when the pressure is not non-increasing with diameter; kept as a
    /// warning because digitized curves can be noisy.
    pub non_monotone: bool,
}

impl StentCurve {
    pub fn new(name: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self, StentError> {
        let name = name.into();
        if samples.len() < 2 {
            return Err(StentError::TooShort { name });
        }
        for i in 1..samples.len() {
            if samples[i].0 <= samples[i - 1].0 {
                return Err(StentError::NotSorted { name, index: i });
            }
        }
        let non_monotone = samples.windows(2).any(|w| w[1].1 > w[0].1);
        Ok(StentCurve {
            name,
            samples,
            non_monotone,
        })
    }

    /// Parses one curve from CSV text with header `diameter_mm,pressure_kpa`.
    pub fn from_csv(name: impl Into<String>, path: &Path) -> Result<Self, StentError> {
        let text = std::fs::read_to_string(path).map_err(|source| StentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut samples = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if i == 0 || (samples.is_empty() && line.starts_with("diameter_mm")) {
                let expect = "diameter_mm,pressure_kpa";
                if line != expect {
                    return Err(StentError::Format {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("expected header `{expect}`, found `{line}`"),
                    });
                }
                continue;
            }
            let mut cols = line.split(',');
            let parse = |field: Option<&str>, what: &str| -> Result<f64, StentError> {
                field
                    .map(str::trim)
                    .ok_or(())
                    .and_then(|s| s.parse::<f64>().map_err(|_| ()))
                    .map_err(|_| StentError::Format {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("missing or non-numeric {what}"),
                    })
            };
            let d = parse(cols.next(), "diameter")?;
            let p = parse(cols.next(), "pressure")?;
            if cols.next().is_some() {
                return Err(StentError::Format {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected exactly two columns".into(),
                });
            }
            samples.push((d, p));
        }
        Self::new(name, samples)
    }

    pub fn diameter_span(&self) -> (f64, f64) {
        (
            self.samples.first().unwrap().0,
            self.samples.last().unwrap().0,
        )
    }

    /// Linear interpolation of the applied pressure at `diameter_mm`;
    /// `None` outside the sampled span.
    pub fn pressure_at(&self, diameter_mm: f64) -> Option<f64> {
        let (lo, hi) = self.diameter_span();
        if diameter_mm < lo || diameter_mm > hi {
            return None;
        }
        let idx = self
            .samples
            .partition_point(|&(d, _)| d <= diameter_mm)
            .min(self.samples.len() - 1)
            .max(1);
        let (d0, p0) = self.samples[idx - 1];
        let (d1, p1) = self.samples[idx];
        Some(p0 + (p1 - p0) * (diameter_mm - d0) / (d1 - d0))
    }
}

/// Outcome of matching one requirement against one curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StentVerdict {
    /// Curve pressure at the required diameter meets the requirement
    /// (boundary inclusive); margin = curve − required (kPa).
    Success { margin_kpa: f64 },
    /// Curve pressure falls short; margin is negative.
    Failure { margin_kpa: f64 },
    /// Required diameter outside the curve's sampled span.
    OutOfRange,
}

impl StentVerdict {
    pub fn succeeded(&self) -> bool {
        matches!(self, StentVerdict::Success { .. })
    }

    pub fn margin_kpa(&self) -> Option<f64> {
        match *self {
            StentVerdict::Success { margin_kpa } | StentVerdict::Failure { margin_kpa } => {
                Some(margin_kpa)
            }
            StentVerdict::OutOfRange => None,
        }
    }
}

/// Whether the stent can supply the required pressure at the required
/// diameter.
pub fn stent_succeeds(curve: &StentCurve, req: &RequirementPoint) -> StentVerdict {
    assert!(
        req.diameter_mm > 0.0 && req.pressure_kpa > 0.0,
        "requirement must be positive"
    );
    match curve.pressure_at(req.diameter_mm) {
        None => StentVerdict::OutOfRange,
        Some(p) => {
            let margin_kpa = p - req.pressure_kpa;
            if margin_kpa >= 0.0 {
                StentVerdict::Success { margin_kpa }
            } else {
                StentVerdict::Failure { margin_kpa }
            }
        }
    }
}

/// Loads every curve named by a manifest file. Manifest lines are
/// `name = relative/path.csv`; blank lines and `#` comments are skipped.
pub fn load_manifest(path: &Path) -> Result<Vec<StentCurve>, StentError> {
    let text = std::fs::read_to_string(path).map_err(|source| StentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut curves = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, rel) = line.split_once('=').ok_or_else(|| StentError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `name = file.csv`".into(),
        })?;
        curves.push(StentCurve::from_csv(name.trim(), &dir.join(rel.trim()))?);
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn req(d: f64, p: f64) -> RequirementPoint {
        RequirementPoint {
            diameter_mm: d,
            pressure_kpa: p,
        }
    }

    #[test]
    fn constant_curve_success_with_full_margin() {
        let c = StentCurve::new("flat", vec![(1.0, 20.0), (5.0, 20.0)]).unwrap();
        let v = stent_succeeds(&c, &req(3.0, 10.0));
        assert_eq!(v, StentVerdict::Success { margin_kpa: 10.0 });
    }

    #[test]
    fn on_curve_requirement_is_inclusive() {
        let c = StentCurve::new("line", vec![(1.0, 20.0), (3.0, 10.0)]).unwrap();
        let v = stent_succeeds(&c, &req(2.0, 15.0));
        assert!(v.succeeded());
        assert_relative_eq!(v.margin_kpa().unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_diameter_is_flagged() {
        let c = StentCurve::new("line", vec![(1.0, 20.0), (3.0, 10.0)]).unwrap();
        assert_eq!(stent_succeeds(&c, &req(3.5, 1.0)), StentVerdict::OutOfRange);
        assert_eq!(stent_succeeds(&c, &req(0.5, 1.0)), StentVerdict::OutOfRange);
    }

    #[test]
    fn span_endpoints_are_in_range() {
        let c = StentCurve::new("line", vec![(1.0, 20.0), (3.0, 10.0)]).unwrap();
        assert_relative_eq!(c.pressure_at(1.0).unwrap(), 20.0);
        assert_relative_eq!(c.pressure_at(3.0).unwrap(), 10.0);
    }

    #[test]
    fn unsorted_curve_rejected_and_noisy_curve_warned() {
        assert!(matches!(
            StentCurve::new("bad", vec![(2.0, 5.0), (1.0, 6.0)]),
            Err(StentError::NotSorted { .. })
        ));
        let noisy = StentCurve::new("noisy", vec![(1.0, 5.0), (2.0, 6.0), (3.0, 4.0)]).unwrap();
        assert!(noisy.non_monotone);
        let clean = StentCurve::new("clean", vec![(1.0, 6.0), (2.0, 5.0)]).unwrap();
        assert!(!clean.non_monotone);
    }

    #[test]
    fn csv_round_trip_via_tempfile() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.csv");
        std::fs::write(&file, "diameter_mm,pressure_kpa\n1.0,12.0\n2.0,8.0\n").unwrap();
        let c = StentCurve::from_csv("c", &file).unwrap();
        assert_eq!(c.samples, vec![(1.0, 12.0), (2.0, 8.0)]);

        std::fs::write(&file, "diameter,pressure\n1.0,12.0\n").unwrap();
        assert!(matches!(
            StentCurve::from_csv("c", &file),
            Err(StentError::Format { .. })
        ));
    }

    #[test]
    fn manifest_loads_named_curves() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("a.csv"),
            "diameter_mm,pressure_kpa\n1.0,12.0\n2.0,8.0\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("manifest.txt"),
            "# synthetic\nalpha = a.csv\n",
        )
        .unwrap();
        let curves = load_manifest(&dir.path().join("manifest.txt")).unwrap();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].name, "alpha");
    }

    proptest! {
        /// If curve A is pointwise at or above curve B, any requirement B
        /// satisfies is satisfied by A.
        #[test]
        fn monotone_dominance(
            base in proptest::collection::vec(0.1f64..50.0, 2..8),
            lift in 0.0f64..10.0,
            frac in 0.0f64..1.0,
            req_scale in 0.1f64..1.5,
        ) {
            let n = base.len();
            let b: Vec<(f64, f64)> =
                base.iter().enumerate().map(|(i, &p)| (1.0 + i as f64, p)).collect();
            let a: Vec<(f64, f64)> = b.iter().map(|&(d, p)| (d, p + lift)).collect();
            let curve_a = StentCurve::new("a", a).unwrap();
            let curve_b = StentCurve::new("b", b).unwrap();
            let d = 1.0 + frac * (n - 1) as f64;
            let p_req = req_scale * curve_b.pressure_at(d).unwrap().max(1e-3);
            let r = req(d, p_req);
            if stent_succeeds(&curve_b, &r).succeeded() {
                prop_assert!(stent_succeeds(&curve_a, &r).succeeded());
            }
        }

        /// A requirement above the curve maximum always fails in range.
        #[test]
        fn above_max_always_fails(
            base in proptest::collection::vec(0.1f64..50.0, 2..8),
            frac in 0.0f64..1.0,
            excess in 0.001f64..10.0,
        ) {
            let b: Vec<(f64, f64)> =
                base.iter().enumerate().map(|(i, &p)| (1.0 + i as f64, p)).collect();
            let curve = StentCurve::new("b", b).unwrap();
            let p_max = base.iter().cloned().fold(f64::MIN, f64::max);
            let d = 1.0 + frac * (base.len() - 1) as f64;
            let v = stent_succeeds(&curve, &req(d, p_max + excess));
            prop_assert!(!v.succeeded());
            prop_assert!(v != StentVerdict::OutOfRange);
        }
    }
}
