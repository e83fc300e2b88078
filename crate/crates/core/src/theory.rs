//! Closed-form error decomposition for aggregated loads and the Monte Carlo
//! checks behind it.

use std::io::Write;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{rolling_forecast, ForecasterSpec};
use crate::metrics::{cv, Metric};
use crate::rng;
use crate::scaling::ScalingFit;
use crate::synth::{
    gen_deviations, synth_population, DeviationKind, DeviationModel, PopulationParams,
};

/// `VAR(Σ_{n≤N} e_n(t))`.
pub fn variance_of_sum(model: &DeviationModel, n: usize) -> f64 {
    let n_f = n as f64;
    match model.kind {
        DeviationKind::FiniteK { .. } => model.sigma_prime_sq(n) * n_f,
        DeviationKind::RandomPair { .. } => {
            model.kappa() * n_f * n_f + model.sigma_prime_sq(n) * n_f
        }
    }
}

/// Sample variance of the summed deviation over independent draws of the
/// whole population (correlation structure included).
pub fn mc_variance(model: &DeviationModel, n: usize, trials: usize, seed: u64) -> Result<f64> {
    if trials < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need >= 1000 trials, got {trials}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let sums: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|k| Ok(gen_deviations(model, n, 1, rng::child_seed(seed, rng::TRIAL, k))?.sum()))
        .collect::<Result<_>>()?;
    Ok(sample_mean_var(&sums).1)
}

fn sample_mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean squared gap between the population mean profile and a per-customer
/// estimate of it.
pub fn population_bias(profiles: &Array2<f64>, estimate: &[f64]) -> Result<f64> {
    let mean = profiles
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::Empty("no profiles".into()))?;
    if mean.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            left: mean.len(),
            right: estimate.len(),
        });
    }
    Ok(mean
        .iter()
        .zip(estimate)
        .map(|(m, e)| (m - e).powi(2))
        .sum::<f64>()
        / mean.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    /// Per-customer squared bias plus the correlated-deviation coefficient.
    pub delta_sq: f64,
    /// Per-customer additive variance.
    pub sigma_sq: f64,
    /// Per-customer mean floor, kWh.
    pub mu: f64,
}

impl EnvelopeParams {
    pub fn new(delta_sq: f64, sigma_sq: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !(delta_sq >= 0.0) || !(sigma_sq >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "envelope needs mu > 0 and non-negative variances, got delta²={delta_sq} sigma²={sigma_sq} mu={mu}"
            )));
        }
        Ok(Self {
            delta_sq,
            sigma_sq,
            mu,
        })
    }

    /// A forecaster with per-customer squared bias `bias_sq` that sees the
    /// deviations as unpredictable noise.
    pub fn from_parts(bias_sq: f64, model: &DeviationModel, mu: f64) -> Result<Self> {
        Self::new(bias_sq + model.kappa(), model.sigma_prime_sq_max(), mu)
    }

    /// The seasonal-naive forecaster: unbiased for a periodic profile, but its
    /// residual `e(t) - e(t - s)` carries the deviation variance twice.
    pub fn seasonal_naive(model: &DeviationModel, mu: f64) -> Result<Self> {
        Self::new(2.0 * model.kappa(), 2.0 * model.sigma_prime_sq_max(), mu)
    }

    /// The envelope rewritten as a CV law in `W = Nμ` with `p = 1`.
    pub fn as_scaling_law(&self) -> ScalingFit {
        ScalingFit {
            alpha0: 1e4 * self.sigma_sq / self.mu,
            alpha1: 1e4 * self.delta_sq / (self.mu * self.mu),
            p: 1.0,
            metric: Metric::Cv,
            horizon: 1,
            sse: 0.0,
            ci_sqrt_alpha1: None,
        }
    }
}

/// Upper bound on the expected CV (percent) of an `n`-customer aggregate.
pub fn cv_envelope(params: &EnvelopeParams, n: usize) -> f64 {
    let mu_sq = params.mu * params.mu;
    100.0 * (params.delta_sq / mu_sq + params.sigma_sq / (mu_sq * n as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvCheck {
    pub n: usize,
    pub mean_cv: f64,
    pub std_error: f64,
    pub envelope: f64,
    pub holds: bool,
}

/// Simulates `trials` populations of `n` customers, forecasts each aggregate
/// with the one-day seasonal-naive baseline and compares the mean CV with
/// the envelope (allowing three standard errors).
pub fn mc_cv_check(
    params: &PopulationParams,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<CvCheck> {
    if trials < 100 {
        return Err(Error::InvalidParameter(format!(
            "need >= 100 trials, got {trials}"
        )));
    }
    let season = params.profile.t_day;
    let spec = ForecasterSpec::SeasonalNaive { season };
    let cvs: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let pop = synth_population(
                n,
                params.days,
                &params.profile,
                &params.deviation,
                rng::child_seed(seed, rng::TRIAL, k),
            )?;
            let customers = pop.dataset.customers();
            let mut agg = vec![0.0; pop.dataset.series_len()];
            for c in customers {
                for (a, v) in agg.iter_mut().zip(c.series.values()) {
                    *a += v;
                }
            }
            let agg = crate::data::LoadSeries::hourly(agg, pop.dataset.start())?;
            let run = rolling_forecast(&agg, &spec, 1, season, season)?;
            cv(&run.targets, &run.predictions)
        })
        .collect::<Result<_>>()?;
    let (mean_cv, var) = sample_mean_var(&cvs);
    let std_error = (var / trials as f64).sqrt();
    let envelope = cv_envelope(
        &EnvelopeParams::seasonal_naive(&params.deviation, params.profile.mean_mu)?,
        n,
    );
    Ok(CvCheck {
        n,
        mean_cv,
        std_error,
        envelope,
        holds: mean_cv <= envelope + 3.0 * std_error,
    })
}

/// `n,mc_cv,envelope,holds`.
pub fn write_cv_checks<W: Write>(checks: &[CvCheck], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "mc_cv", "envelope", "holds"])?;
    for c in checks {
        w.write_record([
            c.n.to_string(),
            c.mean_cv.to_string(),
            c.envelope.to_string(),
            c.holds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<cv checks>", e))?;
    Ok(())
}
