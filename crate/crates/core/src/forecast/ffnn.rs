//! Single-hidden-layer feed-forward network with logistic hidden units and a
//! linear output, trained by full-batch gradient descent on min-max scaled lags.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FfnnSpec {
    pub input_lags: usize,
    pub include_seasonal_lag: bool,
    pub season: usize,
    pub hidden_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FfnnSpec {
    fn default() -> Self {
        Self {
            input_lags: 3,
            include_seasonal_lag: true,
            season: 24,
            hidden_units: 24,
            epochs: 500,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

impl FfnnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_lags < 1 || self.hidden_units < 1 {
            return Err(Error::InvalidParameter(
                "input_lags and hidden_units must be >= 1".into(),
            ));
        }
        if self.include_seasonal_lag && self.season < 1 {
            return Err(Error::InvalidParameter("season must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning_rate must be > 0".into()));
        }
        Ok(())
    }

    pub fn lags(&self) -> Vec<usize> {
        let mut lags: Vec<usize> = (1..=self.input_lags).collect();
        if self.include_seasonal_lag && self.season > self.input_lags {
            lags.push(self.season);
        }
        lags
    }

    pub fn max_lag(&self) -> usize {
        *self.lags().last().unwrap()
    }

    pub fn min_history(&self) -> usize {
        let seasonal = if self.include_seasonal_lag {
            self.season
        } else {
            0
        };
        self.input_lags + seasonal + 24
    }
}

/// Weights flattened as `[W1 (hidden x inputs, row-major), b1, w2, b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    inputs: usize,
    hidden: usize,
    params: Vec<f64>,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn init(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; hidden * inputs + 2 * hidden + 1];
        let a1 = (6.0 / (inputs + hidden) as f64).sqrt();
        for w in &mut params[..hidden * inputs] {
            *w = rng.random_range(-a1..a1);
        }
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        let w2 = hidden * inputs + hidden;
        for w in &mut params[w2..w2 + hidden] {
            *w = rng.random_range(-a2..a2);
        }
        Self {
            inputs,
            hidden,
            params,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len());
        self.params.copy_from_slice(params);
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (w1, rest) = self.params.split_at(self.hidden * self.inputs);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.hidden);
        (w1, b1, w2, b2[0])
    }

    fn hidden_activations(&self, x: &[f64], out: &mut [f64]) {
        let (w1, b1, _, _) = self.split();
        for (j, h) in out.iter_mut().enumerate() {
            let row = &w1[j * self.inputs..(j + 1) * self.inputs];
            let z = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *h = logistic(z);
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.hidden_activations(x, &mut h);
        let (_, _, w2, b2) = self.split();
        b2 + w2.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Mean squared error over the batch and its gradient w.r.t. all parameters.
    /// `xs` is row-major with `self.inputs()` columns.
    pub fn loss_and_gradient(&self, xs: &[f64], ys: &[f64]) -> (f64, Vec<f64>) {
        let n = ys.len();
        let (_, _, w2, b2) = self.split();
        let mut grad = vec![0.0; self.params.len()];
        let mut h = vec![0.0; self.hidden];
        let mut loss = 0.0;
        let w2_off = self.hidden * self.inputs + self.hidden;
        let b1_off = self.hidden * self.inputs;
        let scale = 2.0 / n as f64;
        for (x, &y) in xs.chunks_exact(self.inputs).zip(ys) {
            self.hidden_activations(x, &mut h);
            let out = b2 + w2.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
            let err = out - y;
            loss += err * err;
            let d_out = scale * err;
            grad[w2_off + self.hidden] += d_out;
            for j in 0..self.hidden {
                grad[w2_off + j] += d_out * h[j];
                let d_z = d_out * w2[j] * h[j] * (1.0 - h[j]);
                grad[b1_off + j] += d_z;
                let g = &mut grad[j * self.inputs..(j + 1) * self.inputs];
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += d_z * xi;
                }
            }
        }
        (loss / n as f64, grad)
    }
}

/// Min-max scaling fitted on the training window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaler {
    pub min: f64,
    pub range: f64,
}

impl Scaler {
    pub fn fit(values: &[f64]) -> Self {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        let range = if range > 1e-12 * hi.abs().max(1.0) {
            range
        } else {
            1.0
        };
        Self { min: lo, range }
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / self.range
    }

    pub fn unscale(&self, v: f64) -> f64 {
        v * self.range + self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnnModel {
    pub spec: FfnnSpec,
    pub network: Network,
    pub scaler: Scaler,
    pub final_loss: f64,
}

/// Scaled lag matrix (row-major) and targets for every usable time in `history`.
pub fn training_set(history: &[f64], spec: &FfnnSpec, scaler: &Scaler) -> (Vec<f64>, Vec<f64>) {
    let lags = spec.lags();
    let start = spec.max_lag();
    let mut xs = Vec::with_capacity((history.len() - start) * lags.len());
    let mut ys = Vec::with_capacity(history.len() - start);
    for t in start..history.len() {
        xs.extend(lags.iter().map(|&l| scaler.scale(history[t - l])));
        ys.push(scaler.scale(history[t]));
    }
    (xs, ys)
}

pub fn fit_ffnn(history: &[f64], spec: &FfnnSpec) -> Result<FfnnModel> {
    spec.validate()?;
    let needed = spec.min_history();
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            have: history.len(),
        });
    }
    let scaler = Scaler::fit(history);
    let (xs, ys) = training_set(history, spec, &scaler);
    let mut network = Network::init(spec.lags().len(), spec.hidden_units, spec.seed);
    let mut params = network.params().to_vec();
    let mut final_loss = f64::NAN;
    for epoch in 0..spec.epochs {
        let (loss, grad) = network.loss_and_gradient(&xs, &ys);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= spec.learning_rate * g;
        }
        network.set_params(&params);
        final_loss = loss;
    }
    Ok(FfnnModel {
        spec: *spec,
        network,
        scaler,
        final_loss,
    })
}

/// Recursive multi-step forecast from the end of `history`.
pub fn predict_ffnn(model: &FfnnModel, history: &[f64], h: usize) -> Result<Vec<f64>> {
    let lags = model.spec.lags();
    let needed = model.spec.max_lag();
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            have: history.len(),
        });
    }
    let mut buf: Vec<f64> = history[history.len() - needed..]
        .iter()
        .map(|&v| model.scaler.scale(v))
        .collect();
    let mut x = vec![0.0; lags.len()];
    let mut out = Vec::with_capacity(h);
    for _ in 0..h {
        let t = buf.len();
        for (xi, &l) in x.iter_mut().zip(&lags) {
            *xi = buf[t - l];
        }
        let y = model.network.forward(&x);
        buf.push(y);
        out.push(model.scaler.unscale(y));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(len: usize) -> Vec<f64> {
        (0..len)
            .map(|t| 1.0 + 0.5 * (t as f64 * 2.0 * std::f64::consts::PI / 24.0).sin())
            .collect()
    }

    #[test]
    fn constant_series() {
        let spec = FfnnSpec::default();
        let m = fit_ffnn(&[2.5; 200], &spec).unwrap();
        for v in predict_ffnn(&m, &[2.5; 200], 3).unwrap() {
            assert!((v - 2.5).abs() < 0.025, "{v}");
        }
    }

    #[test]
    fn deterministic_weights() {
        let spec = FfnnSpec {
            epochs: 50,
            seed: 4,
            ..Default::default()
        };
        let a = fit_ffnn(&wave(150), &spec).unwrap();
        let b = fit_ffnn(&wave(150), &spec).unwrap();
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn training_reduces_loss() {
        let spec = FfnnSpec {
            epochs: 2000,
            learning_rate: 0.1,
            ..Default::default()
        };
        let hist = wave(300);
        let m = fit_ffnn(&hist, &spec).unwrap();
        let (xs, ys) = training_set(&hist, &spec, &m.scaler);
        let init = Network::init(4, 24, spec.seed)
            .loss_and_gradient(&xs, &ys)
            .0;
        assert!(m.final_loss < 0.5 * init, "{} vs {init}", m.final_loss);
    }

    #[test]
    fn divergence_is_reported() {
        let spec = FfnnSpec {
            learning_rate: 1e6,
            epochs: 100,
            ..Default::default()
        };
        assert!(matches!(
            fit_ffnn(&wave(200), &spec),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn insufficient_history() {
        assert!(matches!(
            fit_ffnn(&wave(50), &FfnnSpec::default()),
            Err(Error::InsufficientHistory {
                needed: 51,
                have: 50
            })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let spec = FfnnSpec::default();
        let hist = wave(100 + spec.max_lag());
        let scaler = Scaler::fit(&hist);
        let (xs, ys) = training_set(&hist, &spec, &scaler);
        assert_eq!(ys.len(), 100);
        let net = Network::init(spec.lags().len(), spec.hidden_units, 1);
        let (_, analytic) = net.loss_and_gradient(&xs, &ys);
        let eps = 1e-6;
        let mut numeric = Vec::new();
        let mut probe = net.clone();
        for i in 0..net.params().len() {
            let mut p = net.params().to_vec();
            p[i] += eps;
            probe.set_params(&p);
            let up = probe.loss_and_gradient(&xs, &ys).0;
            p[i] -= 2.0 * eps;
            probe.set_params(&p);
            let down = probe.loss_and_gradient(&xs, &ys).0;
            numeric.push((up - down) / (2.0 * eps));
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-4, "{}", diff / norm);
    }
}
