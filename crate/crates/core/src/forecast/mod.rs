//! Adaptive univariate forecasters and the rolling-origin driver.

mod ffnn;
mod naive;
mod sar;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ffnn::{fit_ffnn, predict_ffnn, training_set, FfnnModel, FfnnSpec, Network, Scaler};
pub use naive::seasonal_naive;
pub use sar::{fit_sar, predict_sar, SarModel, SarSpec};

use crate::data::{format_timestamp, LoadSeries, Timestamp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForecasterSpec {
    SeasonalNaive { season: usize },
    Sar(SarSpec),
    Ffnn(FfnnSpec),
}

impl ForecasterSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ForecasterSpec::SeasonalNaive { season } if *season == 0 => {
                Err(Error::InvalidParameter("season must be >= 1".into()))
            }
            ForecasterSpec::SeasonalNaive { .. } => Ok(()),
            ForecasterSpec::Sar(s) => s.validate(),
            ForecasterSpec::Ffnn(s) => s.validate(),
        }
    }

    /// Smallest training window the forecaster can be fitted on.
    pub fn min_window(&self) -> usize {
        match self {
            ForecasterSpec::SeasonalNaive { season } => *season,
            ForecasterSpec::Sar(s) => s.min_history(),
            ForecasterSpec::Ffnn(s) => s.min_history(),
        }
    }

    pub fn fit(&self, window: &[f64]) -> Result<Fitted> {
        Ok(match self {
            ForecasterSpec::SeasonalNaive { season } => {
                if window.len() < *season {
                    return Err(Error::InsufficientHistory {
                        needed: *season,
                        have: window.len(),
                    });
                }
                Fitted::SeasonalNaive { season: *season }
            }
            ForecasterSpec::Sar(s) => Fitted::Sar(fit_sar(window, s)?),
            ForecasterSpec::Ffnn(s) => Fitted::Ffnn(fit_ffnn(window, s)?),
        })
    }
}

#[derive(Debug, Clone)]
pub enum Fitted {
    SeasonalNaive { season: usize },
    Sar(SarModel),
    Ffnn(FfnnModel),
}

impl Fitted {
    pub fn predict(&self, history: &[f64], h: usize) -> Result<Vec<f64>> {
        match self {
            Fitted::SeasonalNaive { season } => seasonal_naive(history, *season, h),
            Fitted::Sar(m) => predict_sar(m, history, h),
            Fitted::Ffnn(m) => predict_ffnn(m, history, h),
        }
    }
}

/// Aligned h-step-ahead predictions and the values they target.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRun {
    pub horizon: usize,
    pub window: usize,
    /// Index (into the source series) of the first target.
    pub first_target: usize,
    pub timestamps: Vec<Timestamp>,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingOptions {
    /// Training window, samples.
    pub window: usize,
    /// First forecast origin; the first one-step target is at this index.
    pub start: usize,
    /// Refit cadence in origins; 1 refits before every forecast.
    pub refit_every: usize,
}

impl RollingOptions {
    pub fn new(window: usize, start: usize) -> Self {
        Self {
            window,
            start,
            refit_every: 1,
        }
    }
}

/// Rolling-origin forecast for one horizon: at each origin `t` the model is
/// fitted on `series[t - window .. t]` and the h-step prediction for
/// `t + h - 1` is kept.
pub fn rolling_forecast(
    series: &LoadSeries,
    spec: &ForecasterSpec,
    horizon: usize,
    window: usize,
    start: usize,
) -> Result<ForecastRun> {
    let mut runs =
        rolling_forecast_horizons(series, spec, &[horizon], RollingOptions::new(window, start))?;
    Ok(runs.remove(0))
}

/// Several horizons from the same sequence of fits.
pub fn rolling_forecast_horizons(
    series: &LoadSeries,
    spec: &ForecasterSpec,
    horizons: &[usize],
    opts: RollingOptions,
) -> Result<Vec<ForecastRun>> {
    spec.validate()?;
    let RollingOptions {
        window,
        start,
        refit_every,
    } = opts;
    let x = series.values();
    let min_h = *horizons
        .iter()
        .min()
        .ok_or_else(|| Error::InvalidParameter("no horizons".into()))?;
    let max_h = *horizons.iter().max().unwrap();
    if min_h == 0 || refit_every == 0 {
        return Err(Error::InvalidParameter(
            "horizon and refit_every must be >= 1".into(),
        ));
    }
    if window < spec.min_window() {
        return Err(Error::InvalidParameter(format!(
            "window {window} is smaller than the {} samples the forecaster needs",
            spec.min_window()
        )));
    }
    if start < window {
        return Err(Error::InvalidParameter(format!(
            "start {start} precedes a full window of {window}"
        )));
    }
    if x.len() < start + max_h {
        return Err(Error::InsufficientHistory {
            needed: start + max_h,
            have: x.len(),
        });
    }

    // origins that feed at least one horizon
    let last_origin = x.len() - min_h;
    let chunk_starts: Vec<usize> = (start..=last_origin).step_by(refit_every).collect();
    let per_chunk: Vec<Vec<Vec<f64>>> = chunk_starts
        .par_iter()
        .map(|&t0| {
            let model = spec.fit(&x[t0 - window..t0])?;
            (t0..(t0 + refit_every).min(last_origin + 1))
                .map(|t| {
                    let steps = max_h.min(x.len() - t);
                    model.predict(&x[t - window..t], steps)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let paths: Vec<Vec<f64>> = per_chunk.into_iter().flatten().collect();

    Ok(horizons
        .iter()
        .map(|&h| {
            let n = x.len() - start - h + 1;
            let first_target = start + h - 1;
            ForecastRun {
                horizon: h,
                window,
                first_target,
                timestamps: (first_target..first_target + n)
                    .map(|i| series.timestamp(i))
                    .collect(),
                predictions: paths[..n].iter().map(|p| p[h - 1]).collect(),
                targets: x[first_target..first_target + n].to_vec(),
            }
        })
        .collect())
}

/// Appends rows `<prefix..>,group_id,timestamp,horizon,actual,predicted`
/// (header written by the caller).
pub fn write_forecast_rows<W: Write>(
    w: &mut csv::Writer<W>,
    prefix: &[&str],
    group_id: &str,
    run: &ForecastRun,
) -> Result<()> {
    let h = run.horizon.to_string();
    for ((ts, a), p) in run
        .timestamps
        .iter()
        .zip(&run.targets)
        .zip(&run.predictions)
    {
        let fields = [
            group_id,
            &format_timestamp(*ts),
            &h,
            &a.to_string(),
            &p.to_string(),
        ];
        w.write_record(prefix.iter().chain(fields.iter()))?;
    }
    Ok(())
}

pub const FORECAST_HEADER: [&str; 5] = ["group_id", "timestamp", "horizon", "actual", "predicted"];

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic(len: usize) -> LoadSeries {
        LoadSeries::hourly(
            (0..len)
                .map(|t| 1.0 + ((t % 24) as f64 / 5.0).sin().abs())
                .collect(),
            0,
        )
        .unwrap()
    }

    fn noisy(len: usize, seed: u64) -> LoadSeries {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        LoadSeries::hourly(
            (0..len)
                .map(|t| 2.0 + ((t % 24) as f64 / 4.0).sin() + rng.random_range(0.0..0.5))
                .collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn naive_on_periodic_is_exact() {
        let s = periodic(200);
        let run =
            rolling_forecast(&s, &ForecasterSpec::SeasonalNaive { season: 24 }, 1, 48, 48).unwrap();
        assert!(run
            .predictions
            .iter()
            .zip(&run.targets)
            .all(|(p, t)| p == t));
    }

    #[test]
    fn run_length_contract() {
        let s = noisy(300, 1);
        let spec = ForecasterSpec::Sar(SarSpec::new(1, 1, 24).unwrap());
        for h in 1..=4 {
            let run = rolling_forecast(&s, &spec, h, 100, 120).unwrap();
            assert_eq!(run.predictions.len(), 300 - 120 - h + 1);
            assert_eq!(run.targets.len(), run.predictions.len());
            assert_eq!(run.first_target, 120 + h - 1);
        }
    }

    #[test]
    fn multi_horizon_matches_single() {
        let s = noisy(260, 2);
        let spec = ForecasterSpec::Sar(SarSpec::new(2, 1, 24).unwrap());
        let runs =
            rolling_forecast_horizons(&s, &spec, &[1, 3], RollingOptions::new(80, 90)).unwrap();
        assert_eq!(runs[0], rolling_forecast(&s, &spec, 1, 80, 90).unwrap());
        assert_eq!(runs[1], rolling_forecast(&s, &spec, 3, 80, 90).unwrap());
    }

    #[test]
    fn causality() {
        let s = noisy(250, 3);
        let spec = ForecasterSpec::Sar(SarSpec::new(3, 1, 24).unwrap());
        let h = 2;
        let base = rolling_forecast(&s, &spec, h, 96, 100).unwrap();
        let cut = 180;
        let mut v = s.values().to_vec();
        for x in &mut v[cut..] {
            *x += 10.0;
        }
        let perturbed =
            rolling_forecast(&LoadSeries::hourly(v, 0).unwrap(), &spec, h, 96, 100).unwrap();
        for i in 0..base.predictions.len() {
            if base.first_target + i <= cut {
                // target at or before the first perturbed sample
                assert_eq!(base.predictions[i], perturbed.predictions[i]);
            }
        }
        assert_ne!(base.predictions, perturbed.predictions);
    }

    #[test]
    fn refit_cadence_keeps_alignment() {
        let s = noisy(300, 4);
        let spec = ForecasterSpec::Sar(SarSpec::new(1, 1, 24).unwrap());
        let every = RollingOptions {
            refit_every: 1,
            ..RollingOptions::new(100, 100)
        };
        let sparse = RollingOptions {
            refit_every: 24,
            ..every
        };
        let a = rolling_forecast_horizons(&s, &spec, &[1], every).unwrap();
        let b = rolling_forecast_horizons(&s, &spec, &[1], sparse).unwrap();
        assert_eq!(a[0].targets, b[0].targets);
        // origins that coincide with a refit see the same model
        for i in (0..a[0].predictions.len()).step_by(24) {
            assert_eq!(a[0].predictions[i], b[0].predictions[i]);
        }
    }

    #[test]
    fn window_too_small() {
        let s = noisy(300, 5);
        let spec = ForecasterSpec::Sar(SarSpec::new(1, 1, 24).unwrap());
        assert!(matches!(
            rolling_forecast(&s, &spec, 1, 30, 30),
            Err(Error::InvalidParameter(_))
        ));
        assert!(rolling_forecast(&s, &spec, 1, 100, 50).is_err());
        assert!(rolling_forecast(&s, &spec, 10, 100, 295).is_err());
    }
}
