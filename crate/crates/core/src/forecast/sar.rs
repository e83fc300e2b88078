//! Seasonal autoregression without moving-average terms:
//!
//! `x(t) - c = Σ_k θ_k (x(t-k) - c) + Σ_k φ_k (x(t-s·k) - c) + ε(t)`
//!
//! with `c` the training-window mean. Conditional least squares is exact
//! for this model since it is linear in `(θ, φ)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SarSpec {
    pub ar_order: usize,
    pub seasonal_ar_order: usize,
    pub season: usize,
}

impl SarSpec {
    pub fn new(ar_order: usize, seasonal_ar_order: usize, season: usize) -> Result<Self> {
        let spec = Self {
            ar_order,
            seasonal_ar_order,
            season,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.ar_order) {
            return Err(Error::InvalidParameter(format!(
                "AR order must be 1..=3, got {}",
                self.ar_order
            )));
        }
        if self.seasonal_ar_order < 1 {
            return Err(Error::InvalidParameter(
                "seasonal AR order must be >= 1".into(),
            ));
        }
        if self.season < 2 {
            return Err(Error::InvalidParameter("season must be >= 2".into()));
        }
        Ok(())
    }

    pub fn max_lag(&self) -> usize {
        self.ar_order.max(self.season * self.seasonal_ar_order)
    }

    /// Shortest history `fit_sar` accepts: all lags plus 24 effective samples.
    pub fn min_history(&self) -> usize {
        self.season * self.seasonal_ar_order + self.ar_order + 24
    }

    fn lags(&self) -> Vec<usize> {
        (1..=self.ar_order)
            .chain((1..=self.seasonal_ar_order).map(|k| k * self.season))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SarModel {
    pub spec: SarSpec,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub center: f64,
    pub resid_var: f64,
    /// Set when the regression was singular and the model predicts `center` only.
    pub degenerate: bool,
}

impl SarModel {
    fn center_only(spec: SarSpec, center: f64, resid_var: f64) -> Self {
        Self {
            spec,
            theta: vec![0.0; spec.ar_order],
            phi: vec![0.0; spec.seasonal_ar_order],
            center,
            resid_var,
            degenerate: true,
        }
    }

    fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.theta.iter().chain(&self.phi).copied()
    }

    /// One-step residuals over the given history (first `max_lag` samples are warm-up).
    pub fn residuals(&self, history: &[f64]) -> Vec<f64> {
        let lags = self.spec.lags();
        (self.spec.max_lag()..history.len())
            .map(|t| {
                let pred: f64 = lags
                    .iter()
                    .zip(self.coefficients())
                    .map(|(&l, c)| c * (history[t - l] - self.center))
                    .sum();
                history[t] - self.center - pred
            })
            .collect()
    }
}

pub fn fit_sar(history: &[f64], spec: &SarSpec) -> Result<SarModel> {
    spec.validate()?;
    let needed = spec.min_history();
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            have: history.len(),
        });
    }
    let center = history.iter().sum::<f64>() / history.len() as f64;
    let centered: Vec<f64> = history.iter().map(|v| v - center).collect();
    let scale = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 1e-12 * center.abs().max(1.0) {
        return Ok(SarModel::center_only(*spec, center, 0.0));
    }

    let lags = spec.lags();
    let k = lags.len();
    let rows = history.len() - spec.max_lag();
    let design = DMatrix::from_fn(rows, k, |r, j| centered[r + spec.max_lag() - lags[j]]);
    let target = DVector::from_fn(rows, |r, _| centered[r + spec.max_lag()]);

    let gram = design.transpose() * &design;
    let rhs = design.transpose() * &target;
    let svd = gram.clone().svd(true, true);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| {
            (hi.max(s), lo.min(s))
        });
    if !(smin > 1e-12 * smax) {
        let var = centered.iter().map(|v| v * v).sum::<f64>() / centered.len() as f64;
        return Ok(SarModel::center_only(*spec, center, var));
    }
    let beta = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::InvalidParameter(format!("SAR solve failed: {e}")))?;
    let resid = &target - &design * &beta;
    let resid_var = resid.norm_squared() / rows as f64;

    Ok(SarModel {
        spec: *spec,
        theta: beta.iter().take(spec.ar_order).copied().collect(),
        phi: beta.iter().skip(spec.ar_order).copied().collect(),
        center,
        resid_var,
        degenerate: false,
    })
}

/// Recursive multi-step forecast from the end of `history`.
pub fn predict_sar(model: &SarModel, history: &[f64], h: usize) -> Result<Vec<f64>> {
    let needed = model.spec.max_lag();
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            have: history.len(),
        });
    }
    if model.degenerate {
        return Ok(vec![model.center; h]);
    }
    let lags = model.spec.lags();
    let mut buf: Vec<f64> = history[history.len() - needed..]
        .iter()
        .map(|v| v - model.center)
        .collect();
    let mut out = Vec::with_capacity(h);
    for _ in 0..h {
        let t = buf.len();
        let next: f64 = lags
            .iter()
            .zip(model.coefficients())
            .map(|(&l, c)| c * buf[t - l])
            .sum();
        buf.push(next);
        out.push(next + model.center);
    }
    Ok(out)
}
