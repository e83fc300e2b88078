//! Synthetic customer populations built as `x_n(t) = p_n(t) + e_n(t)`: a
//! customer-specific daily profile tiled over days plus a random deviation
//! stream with one of two cross-customer correlation structures.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CustomerRecord, Dataset, LoadSeries, Timestamp};
use crate::error::{Error, Result};
use crate::rng;

/// 2010-08-01T00:00Z in epoch minutes.
pub const DEFAULT_START: Timestamp = 21_368_160;

const BASE_AMPLITUDE: f64 = 0.4;
const PEAK_LAG_HOURS: f64 = 6.0;
const MAX_FLOOR_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileParams {
    pub t_day: usize,
    /// Population mean hourly load, kWh.
    pub mean_mu: f64,
    /// Between-customer variance of profile values, kWh².
    pub profile_var: f64,
    pub fourier_terms: usize,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            t_day: 24,
            mean_mu: 1.05,
            profile_var: 0.01,
            fourier_terms: 3,
        }
    }
}

impl ProfileParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.mean_mu > 0.0 && self.mean_mu.is_finite()) {
            return bad(format!("mean_mu must be > 0, got {}", self.mean_mu));
        }
        if !(self.profile_var >= 0.0 && self.profile_var.is_finite()) {
            return bad(format!(
                "profile_var must be >= 0, got {}",
                self.profile_var
            ));
        }
        if self.t_day < 1 {
            return bad("t_day must be >= 1".into());
        }
        // harmonics k = 1..=J with 2k < t_day stay zero-mean over the day
        if 2 * self.fourier_terms >= self.t_day && self.fourier_terms > 0 {
            return bad(format!(
                "fourier_terms {} too many for t_day {}",
                self.fourier_terms, self.t_day
            ));
        }
        if self.profile_var > 0.0 && self.fourier_terms == 0 {
            return bad("profile_var > 0 needs at least one fourier term".into());
        }
        Ok(())
    }

    /// The shared deterministic daily shape.
    pub fn base_shape(&self) -> Vec<f64> {
        let t = self.t_day as f64;
        let lag = PEAK_LAG_HOURS * t / 24.0;
        (0..self.t_day)
            .map(|h| {
                self.mean_mu * (1.0 + BASE_AMPLITUDE * (2.0 * PI * (h as f64 - lag) / t).sin())
            })
            .collect()
    }
}

/// Cross-customer correlation structure of the deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationKind {
    /// Each customer's deviation has covariance `rho` with its `k_neighbors`
    /// nearest ring neighbours.
    FiniteK {
        k_neighbors: usize,
        rho: f64,
        sigma: f64,
    },
    /// Any pair of customers has covariance `rho * sigma² / 2` with probability `gamma`.
    RandomPair { gamma: f64, rho: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationModel {
    #[serde(flatten)]
    pub kind: DeviationKind,
    /// AR(1) coefficient of every latent stream in time; 0 gives white noise.
    #[serde(default)]
    pub persistence: f64,
}

impl DeviationModel {
    pub fn finite_k(k_neighbors: usize, rho: f64, sigma: f64) -> Result<Self> {
        Self::new(
            DeviationKind::FiniteK {
                k_neighbors,
                rho,
                sigma,
            },
            0.0,
        )
    }

    pub fn random_pair(gamma: f64, rho: f64, sigma: f64) -> Result<Self> {
        Self::new(DeviationKind::RandomPair { gamma, rho, sigma }, 0.0)
    }

    pub fn uncorrelated(sigma: f64) -> Result<Self> {
        Self::finite_k(0, 0.0, sigma)
    }

    pub fn new(kind: DeviationKind, persistence: f64) -> Result<Self> {
        let m = Self { kind, persistence };
        m.validate()?;
        Ok(m)
    }

    pub fn with_persistence(mut self, persistence: f64) -> Result<Self> {
        self.persistence = persistence;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let (rho, sigma) = match self.kind {
            DeviationKind::FiniteK { rho, sigma, .. }
            | DeviationKind::RandomPair { rho, sigma, .. } => (rho, sigma),
        };
        if !(sigma > 0.0 && sigma.is_finite()) {
            return bad(format!("sigma must be > 0, got {sigma}"));
        }
        if !(0.0..=1.0).contains(&rho) {
            return bad(format!("rho must lie in [0, 1], got {rho}"));
        }
        match self.kind {
            DeviationKind::FiniteK { k_neighbors, .. } => {
                if k_neighbors as f64 * rho > sigma * sigma * (1.0 + 1e-12) {
                    return bad(format!(
                        "K * rho = {} exceeds sigma² = {}; neighbour covariance not realisable",
                        k_neighbors as f64 * rho,
                        sigma * sigma
                    ));
                }
            }
            DeviationKind::RandomPair { gamma, .. } => {
                if !(0.0..=1.0).contains(&gamma) {
                    return bad(format!("gamma must lie in [0, 1], got {gamma}"));
                }
            }
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return bad(format!(
                "persistence must lie in [0, 1), got {}",
                self.persistence
            ));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        match self.kind {
            DeviationKind::FiniteK { sigma, .. } | DeviationKind::RandomPair { sigma, .. } => sigma,
        }
    }

    /// Coefficient of the quadratic term of `VAR(Σ e_n)`.
    pub fn kappa(&self) -> f64 {
        match self.kind {
            DeviationKind::FiniteK { .. } => 0.0,
            DeviationKind::RandomPair { gamma, rho, sigma } => gamma * rho * sigma * sigma / 2.0,
        }
    }

    /// Coefficient of the linear term of `VAR(Σ e_n)` for a population of `n`.
    ///
    /// For the ring structure this depends on `n` only while `n <= K`.
    pub fn sigma_prime_sq(&self, n: usize) -> f64 {
        match self.kind {
            DeviationKind::FiniteK {
                k_neighbors,
                rho,
                sigma,
            } => sigma * sigma + ring_degree(k_neighbors, n) as f64 * rho,
            DeviationKind::RandomPair { sigma, .. } => sigma * sigma - self.kappa(),
        }
    }

    /// Largest value of [`Self::sigma_prime_sq`] over all population sizes.
    pub fn sigma_prime_sq_max(&self) -> f64 {
        match self.kind {
            DeviationKind::FiniteK {
                k_neighbors,
                rho,
                sigma,
            } => sigma * sigma + k_neighbors as f64 * rho,
            DeviationKind::RandomPair { sigma, .. } => sigma * sigma - self.kappa(),
        }
    }
}

/// Ring offsets used for the finite-K structure: `±1..=±K/2`, plus the
/// antipodal node when `K` is odd and `n` even. Capped at the complete graph.
pub(crate) fn ring_offsets(k: usize, n: usize) -> Vec<usize> {
    if n <= 1 || k == 0 {
        return Vec::new();
    }
    if k >= n - 1 {
        return (1..n).collect();
    }
    let half = k / 2;
    let mut offsets: Vec<usize> = (1..=half).chain((n - half)..n).collect();
    if k % 2 == 1 && n.is_multiple_of(2) {
        offsets.push(n / 2);
    }
    offsets.sort_unstable();
    offsets.dedup();
    offsets
}

/// Number of correlated neighbours each customer actually has.
pub fn ring_degree(k: usize, n: usize) -> usize {
    ring_offsets(k, n).len()
}

/// One row per customer, `t_day` columns.
pub fn gen_profiles(n: usize, params: &ProfileParams, seed: u64) -> Result<Array2<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter(
            "customer count must be >= 1".into(),
        ));
    }
    let t_day = params.t_day;
    let base = params.base_shape();
    check_floor(&base, params.profile_var)?;
    let terms = params.fourier_terms;
    let amp_sd = if terms > 0 {
        (params.profile_var / terms as f64).sqrt()
    } else {
        0.0
    };

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, rng::PROFILE, i as u64);
            let coeffs: Vec<(f64, f64)> = (0..terms)
                .map(|_| {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    (a * amp_sd, b * amp_sd)
                })
                .collect();
            (0..t_day)
                .map(|h| {
                    let mut v = base[h];
                    for (j, (a, b)) in coeffs.iter().enumerate() {
                        let angle = 2.0 * PI * (j + 1) as f64 * h as f64 / t_day as f64;
                        v += a * angle.cos() + b * angle.sin();
                    }
                    v.max(0.0)
                })
                .collect::<Vec<f64>>()
        })
        .collect();

    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, t_day), flat).expect("shape"))
}

/// Rejects parameters where more than 1% of samples of `N(base[h], var)`
/// would fall below zero. Judged on the parameters rather than a realized
/// draw so small populations are not rejected by chance.
fn check_floor(base: &[f64], var: f64) -> Result<()> {
    let expected_fraction = if var > 0.0 {
        let scale = (2.0 * var).sqrt();
        base.iter()
            .map(|m| 0.5 * libm::erfc(m / scale))
            .sum::<f64>()
            / base.len() as f64
    } else {
        base.iter().filter(|m| **m < 0.0).count() as f64 / base.len() as f64
    };
    if expected_fraction > MAX_FLOOR_FRACTION {
        return Err(Error::TooManyFloored { expected_fraction });
    }
    Ok(())
}

/// Unit-variance latent stream, AR(1) in time with coefficient `phi`.
fn latent_stream(seed: u64, domain: u64, index: u64, horizon: usize, phi: f64) -> Vec<f64> {
    let mut rng = rng::stream(seed, domain, index);
    let innovation = (1.0 - phi * phi).sqrt();
    let mut out = Vec::with_capacity(horizon);
    let mut prev: f64 = rng.sample(StandardNormal);
    out.push(prev);
    for _ in 1..horizon {
        let z: f64 = rng.sample(StandardNormal);
        prev = phi * prev + innovation * z;
        out.push(prev);
    }
    out
}

/// Deviation matrix, one row per customer and one column per hour.
///
/// The correlation structure (ring edges, or the set of customers sharing
/// the common factor) is drawn once per call and held fixed over the horizon.
pub fn gen_deviations(
    model: &DeviationModel,
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    model.validate()?;
    if n == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("n and horizon must be >= 1".into()));
    }
    let phi = model.persistence;
    let mut out = Array2::<f64>::zeros((n, horizon));
    match model.kind {
        DeviationKind::FiniteK {
            k_neighbors,
            rho,
            sigma,
        } => {
            let offsets = ring_offsets(k_neighbors, n);
            let degree = offsets.len();
            let idio_sd = (sigma * sigma - degree as f64 * rho).max(0.0).sqrt();
            out.axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .for_each(|(i, mut row)| {
                    let idio = latent_stream(seed, rng::IDIOSYNCRATIC, i as u64, horizon, phi);
                    for (dst, z) in row.iter_mut().zip(&idio) {
                        *dst = idio_sd * z;
                    }
                });
            if degree > 0 && rho > 0.0 {
                let edge_sd = rho.sqrt();
                // each undirected edge {i, j} is generated once, keyed by its lower endpoint
                let edges: Vec<(usize, usize)> = (0..n)
                    .flat_map(|i| offsets.iter().map(move |&o| (i, (i + o) % n)))
                    .filter(|&(i, j)| i < j)
                    .collect();
                let streams: Vec<Vec<f64>> = edges
                    .par_iter()
                    .map(|&(i, j)| {
                        let key = ((i as u64) << 32) | j as u64;
                        latent_stream(seed, rng::EDGE, key, horizon, phi)
                    })
                    .collect();
                for (&(i, j), z) in edges.iter().zip(&streams) {
                    for (t, zt) in z.iter().enumerate() {
                        out[[i, t]] += edge_sd * zt;
                        out[[j, t]] += edge_sd * zt;
                    }
                }
            }
        }
        DeviationKind::RandomPair { gamma, rho, sigma } => {
            let select_p = gamma.sqrt();
            let loading_sq = rho * sigma * sigma / 2.0;
            let common = latent_stream(seed, rng::COMMON_FACTOR, 0, horizon, phi);
            out.axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .for_each(|(i, mut row)| {
                    let selected =
                        rng::stream(seed, rng::SELECTION, i as u64).random::<f64>() < select_p;
                    let idio = latent_stream(seed, rng::IDIOSYNCRATIC, i as u64, horizon, phi);
                    let (load, idio_sd) = if selected {
                        (loading_sq.sqrt(), (sigma * sigma - loading_sq).sqrt())
                    } else {
                        (0.0, sigma)
                    };
                    for ((dst, z), f) in row.iter_mut().zip(&idio).zip(&common) {
                        *dst = load * f + idio_sd * z;
                    }
                });
        }
    }
    Ok(out)
}

/// Population-level synthetic parameters (everything but the customer count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub days: usize,
    pub profile: ProfileParams,
    pub deviation: DeviationModel,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub profiles: Array2<f64>,
    /// Samples raised to the zero-consumption floor.
    pub floored: usize,
}

pub fn synth_population(
    n: usize,
    days: usize,
    profile: &ProfileParams,
    deviation: &DeviationModel,
    seed: u64,
) -> Result<SynthOutput> {
    if days == 0 {
        return Err(Error::InvalidParameter("days must be >= 1".into()));
    }
    // profile and deviation are independent Gaussians, so their sum is too
    check_floor(
        &profile.base_shape(),
        profile.profile_var + deviation.sigma().powi(2),
    )?;
    let profiles = gen_profiles(n, profile, rng::child_seed(seed, rng::PROFILE, 0))?;
    let horizon = days * profile.t_day;
    let deviations = gen_deviations(
        deviation,
        n,
        horizon,
        rng::child_seed(seed, rng::IDIOSYNCRATIC, 0),
    )?;
    let width = n.to_string().len().max(6);

    let rows: Vec<(CustomerRecord, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = profiles.row(i);
            let mut floored = 0;
            let values = deviations
                .row(i)
                .iter()
                .enumerate()
                .map(|(t, e)| {
                    let v = p[t % profile.t_day] + e;
                    if v < 0.0 {
                        floored += 1;
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let series = LoadSeries::hourly(values, DEFAULT_START)?;
            Ok((
                CustomerRecord::new(format!("c{i:0width$}"), series)?,
                floored,
            ))
        })
        .collect::<Result<_>>()?;

    let floored: usize = rows.iter().map(|r| r.1).sum();
    let dataset = Dataset::new(rows.into_iter().map(|r| r.0).collect())?;
    Ok(SynthOutput {
        dataset,
        profiles,
        floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_var(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    fn mc_sum_var(model: &DeviationModel, n: usize, reps: u64) -> f64 {
        let sums: Vec<f64> = (0..reps)
            .map(|r| gen_deviations(model, n, 1, r).unwrap().sum())
            .collect();
        sample_var(&sums)
    }

    #[test]
    fn zero_variance_profile_is_base_shape() {
        let p = ProfileParams {
            profile_var: 0.0,
            ..Default::default()
        };
        let m = gen_profiles(1, &p, 3).unwrap();
        assert_eq!(m.row(0).to_vec(), p.base_shape());
    }

    #[test]
    fn profile_grand_mean_and_variance() {
        let p = ProfileParams {
            mean_mu: 1.0,
            profile_var: 0.02,
            ..Default::default()
        };
        let m = gen_profiles(10_000, &p, 11).unwrap();
        let grand = m.mean().unwrap();
        assert!((0.99..=1.01).contains(&grand), "{grand}");
        let col: Vec<f64> = m.column(5).to_vec();
        let v = sample_var(&col);
        assert!((v / 0.02 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn profiles_deterministic() {
        let p = ProfileParams::default();
        assert_eq!(
            gen_profiles(50, &p, 9).unwrap(),
            gen_profiles(50, &p, 9).unwrap()
        );
        assert_ne!(
            gen_profiles(50, &p, 9).unwrap(),
            gen_profiles(50, &p, 10).unwrap()
        );
    }

    #[test]
    fn infeasible_profile_rejected() {
        let p = ProfileParams {
            mean_mu: 0.1,
            profile_var: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            gen_profiles(100, &p, 1),
            Err(Error::TooManyFloored { .. })
        ));
    }

    #[test]
    fn noisy_deviations_rejected_for_any_population_size() {
        let dev = DeviationModel::uncorrelated(0.6).unwrap();
        for n in [1, 500] {
            assert!(matches!(
                synth_population(n, 2, &ProfileParams::default(), &dev, 0),
                Err(Error::TooManyFloored { .. })
            ));
        }
        // a single small customer is not rejected by an unlucky draw
        let dev = DeviationModel::uncorrelated(0.2).unwrap();
        for seed in 0..50 {
            synth_population(1, 2, &ProfileParams::default(), &dev, seed).unwrap();
        }
    }

    #[test]
    fn independent_deviation_sum() {
        let m = DeviationModel::uncorrelated(1.0).unwrap();
        let v = mc_sum_var(&m, 10, 10_000);
        assert!((v / 10.0 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn finite_k_sum() {
        let m = DeviationModel::finite_k(4, 0.25, 1.0).unwrap();
        let v = mc_sum_var(&m, 5, 10_000);
        assert!((v / 10.0 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn random_pair_full_sum() {
        let m = DeviationModel::random_pair(1.0, 1.0, 1.0).unwrap();
        let v = mc_sum_var(&m, 10, 10_000);
        assert!((v / 55.0 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn marginal_moments() {
        for m in [
            DeviationModel::finite_k(4, 0.2, 1.0).unwrap(),
            DeviationModel::random_pair(0.3, 0.8, 1.0).unwrap(),
            DeviationModel::random_pair(0.3, 0.8, 1.0)
                .unwrap()
                .with_persistence(0.7)
                .unwrap(),
        ] {
            let d = gen_deviations(&m, 200, 2000, 4).unwrap();
            let all: Vec<f64> = d.iter().copied().collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let var = sample_var(&all);
            assert!(mean.abs() < 0.05, "{m:?} mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "{m:?} var {var}");
        }
    }

    #[test]
    fn persistence_sets_lag_one_autocorrelation() {
        let m = DeviationModel::uncorrelated(1.0)
            .unwrap()
            .with_persistence(0.6)
            .unwrap();
        let d = gen_deviations(&m, 1, 50_000, 2).unwrap();
        let x: Vec<f64> = d.row(0).to_vec();
        let c: f64 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (x.len() - 1) as f64;
        assert!((c - 0.6).abs() < 0.03, "{c}");
    }

    #[test]
    fn ring_degrees() {
        assert_eq!(ring_degree(4, 5), 4);
        assert_eq!(ring_degree(4, 100), 4);
        assert_eq!(ring_degree(3, 10), 3);
        assert_eq!(ring_degree(3, 11), 2);
        assert_eq!(ring_degree(4, 1), 0);
        assert_eq!(ring_degree(6, 3), 2);
    }

    #[test]
    fn invalid_models() {
        assert!(DeviationModel::finite_k(4, 0.5, 1.0).is_err());
        assert!(DeviationModel::random_pair(1.5, 0.5, 1.0).is_err());
        assert!(DeviationModel::random_pair(0.5, 0.5, 0.0).is_err());
        assert!(DeviationModel::uncorrelated(1.0)
            .unwrap()
            .with_persistence(1.0)
            .is_err());
    }

    #[test]
    fn derived_coefficients() {
        let m = DeviationModel::random_pair(1.0, 1.0, 1.0).unwrap();
        assert_eq!(m.kappa(), 0.5);
        assert_eq!(m.sigma_prime_sq(10), 0.5);
        let f = DeviationModel::finite_k(4, 0.25, 1.0).unwrap();
        assert_eq!(f.kappa(), 0.0);
        assert_eq!(f.sigma_prime_sq(5), 2.0);
    }

    #[test]
    fn noiseless_population_is_periodic_and_identical() {
        let p = ProfileParams {
            profile_var: 0.0,
            ..Default::default()
        };
        let d = DeviationModel::uncorrelated(1e-300).unwrap();
        let out = synth_population(3, 4, &p, &d, 1).unwrap();
        let first = out.dataset.customers()[0].series.values().to_vec();
        for c in out.dataset.customers() {
            assert_eq!(c.series.values(), first.as_slice());
        }
        for t in 24..first.len() {
            assert_eq!(first[t], first[t - 24]);
        }
    }

    #[test]
    fn desk_population_shape() {
        let out = synth_population(
            2000,
            60,
            &ProfileParams::default(),
            &DeviationModel::uncorrelated(0.2).unwrap(),
            5,
        )
        .unwrap();
        assert_eq!(out.dataset.len(), 2000);
        assert_eq!(out.dataset.series_len(), 1440);
        assert!(out.floored < 2000 * 1440 / 100);
    }

    #[test]
    fn aggregate_hourly_variance_matches_formula() {
        // fixed hour of day, deviations across days; profile part is constant
        let dev = DeviationModel::random_pair(0.2, 1.0, 0.2).unwrap();
        let n = 300;
        let p = ProfileParams::default();
        let mut sums = Vec::new();
        for seed in 0..60 {
            let out = synth_population(n, 20, &p, &dev, seed).unwrap();
            let len = out.dataset.series_len();
            let agg: Vec<f64> = (0..len)
                .map(|t| {
                    out.dataset
                        .customers()
                        .iter()
                        .map(|c| c.series.values()[t])
                        .sum()
                })
                .collect();
            let profile_sum: Vec<f64> = (0..24).map(|h| out.profiles.column(h).sum()).collect();
            sums.extend(agg.iter().enumerate().map(|(t, x)| x - profile_sum[t % 24]));
        }
        let expected = dev.kappa() * (n * n) as f64 + dev.sigma_prime_sq(n) * n as f64;
        let v = sample_var(&sums);
        assert!((v / expected - 1.0).abs() < 0.10, "{v} vs {expected}");
    }

    #[test]
    fn a1_support_bound() {
        let out = synth_population(
            200,
            5,
            &ProfileParams::default(),
            &DeviationModel::uncorrelated(0.2).unwrap(),
            8,
        )
        .unwrap();
        let means: Vec<f64> = out.dataset.customers().iter().map(|c| c.mean_w).collect();
        let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
        for k in [1, 10, 50, 200] {
            let s: f64 = means[..k].iter().sum();
            assert!(s >= k as f64 * min);
        }
    }
}
