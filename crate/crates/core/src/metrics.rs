//! Relative and absolute forecast accuracy metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of zero-valued targets tolerated by [`evaluate`].
pub const MAX_ZERO_TARGET_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Mape,
    Cv,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Mape => "MAPE",
            Metric::Cv => "CV",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MAPE" => Ok(Metric::Mape),
            "CV" => Ok(Metric::Cv),
            other => Err(Error::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    /// Percent.
    pub value: f64,
    pub skipped_zero_targets: usize,
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    Ok(())
}

/// Mean absolute percentage error over the targets with `x(t) > 0`.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<Mape> {
    check_lengths(actual, predicted)?;
    let (sum, used) = actual
        .iter()
        .zip(predicted)
        .filter(|(a, _)| **a > 0.0)
        .fold((0.0, 0usize), |(s, n), (a, p)| {
            (s + ((a - p) / a).abs(), n + 1)
        });
    if used == 0 {
        return Err(Error::AllTargetsZero);
    }
    Ok(Mape {
        value: 100.0 * sum / used as f64,
        skipped_zero_targets: actual.len() - used,
    })
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let ss: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok(ss / actual.len() as f64)
}

/// Coefficient of variation of the residuals: RMSE over the mean target, percent.
pub fn cv(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    let mse = mse(actual, predicted)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::NonPositiveMean(mean));
    }
    Ok(100.0 * mse.sqrt() / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mape: f64,
    pub cv: f64,
    pub mse: f64,
    pub skipped_zero_targets: usize,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Mape => self.mape,
            Metric::Cv => self.cv,
        }
    }
}

/// All metrics at once; rejects runs where more than 10% of targets are zero.
pub fn evaluate(actual: &[f64], predicted: &[f64]) -> Result<MetricReport> {
    let m = mape(actual, predicted)?;
    if m.skipped_zero_targets as f64 > MAX_ZERO_TARGET_FRACTION * actual.len() as f64 {
        return Err(Error::TooManyZeroTargets {
            skipped: m.skipped_zero_targets,
            total: actual.len(),
        });
    }
    Ok(MetricReport {
        mape: m.value,
        cv: cv(actual, predicted)?,
        mse: mse(actual, predicted)?,
        skipped_zero_targets: m.skipped_zero_targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap().value, 0.0);
        assert!((mape(&[1.0, 2.0], &[2.0, 1.0]).unwrap().value - 75.0).abs() < 1e-9);
        let m = mape(&[0.0, 1.0], &[5.0, 1.0]).unwrap();
        assert_eq!((m.value, m.skipped_zero_targets), (0.0, 1));
    }

    #[test]
    fn mape_errors() {
        assert!(matches!(
            mape(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::AllTargetsZero)
        ));
        assert!(matches!(
            mape(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn cv_examples() {
        assert_eq!(cv(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!((cv(&[1.0, 1.0], &[0.0, 2.0]).unwrap() - 100.0).abs() < 1e-9);
        assert!((cv(&[2.0, 2.0], &[1.0, 3.0]).unwrap() - 50.0).abs() < 1e-9);
        assert!(matches!(
            cv(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::NonPositiveMean(_))
        ));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert!((mse(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap() - 5.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn evaluate_zero_target_limit() {
        let mut actual = vec![1.0; 20];
        let predicted = vec![1.0; 20];
        actual[0] = 0.0;
        actual[1] = 0.0;
        assert_eq!(
            evaluate(&actual, &predicted).unwrap().skipped_zero_targets,
            2
        );
        actual[2] = 0.0;
        assert!(matches!(
            evaluate(&actual, &predicted),
            Err(Error::TooManyZeroTargets {
                skipped: 3,
                total: 20
            })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            prop::collection::vec((0.1f64..100.0, 0.0f64..100.0), 1..60)
                .prop_map(|v| v.into_iter().unzip())
        }

        proptest! {
            #[test]
            fn relative_metrics_scale_invariant((x, xh) in pairs(), c in 1e-3f64..1e3) {
                let sx: Vec<f64> = x.iter().map(|v| v * c).collect();
                let sxh: Vec<f64> = xh.iter().map(|v| v * c).collect();
                let (a, b) = (cv(&x, &xh).unwrap(), cv(&sx, &sxh).unwrap());
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
                let (a, b) = (mape(&x, &xh).unwrap().value, mape(&sx, &sxh).unwrap().value);
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }

            #[test]
            fn cv_mse_identity((x, xh) in pairs()) {
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                let lhs = cv(&x, &xh).unwrap().powi(2) * mean * mean;
                let rhs = 1e4 * mse(&x, &xh).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1e-300));
            }
        }
    }
}
