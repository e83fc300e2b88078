//! The aggregation scaling law `err(W) = √(α₀/Wᵖ + α₁)`.
//!
//! Fitting works on `err²`, which is linear in `(α₀, α₁)` for fixed `p`:
//! a two-variable non-negative least squares is solved in closed form and
//! profiled over `p`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::rng;

pub const P_MIN: f64 = 0.1;
pub const P_MAX: f64 = 2.0;
const P_GRID_STEP: f64 = 0.01;
const P_TOL: f64 = 1e-10;
/// Free-p fits need `max W / min W` at least this large.
pub const MIN_W_SPAN: f64 = 10.0;
pub const MIN_QUANTILE_SAMPLES: usize = 5;
pub const DEFAULT_REGIME_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub group_id: String,
    pub size: usize,
    /// Group mean load, kWh.
    pub w: f64,
    /// Percent.
    pub err: f64,
    pub metric: Metric,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub alpha0: f64,
    pub alpha1: f64,
    pub p: f64,
    pub metric: Metric,
    pub horizon: usize,
    /// Residual sum of squares in the `err²` domain.
    pub sse: f64,
    pub ci_sqrt_alpha1: Option<(f64, f64)>,
}

impl ScalingFit {
    pub fn from_sqrt(
        sqrt_alpha0: f64,
        sqrt_alpha1: f64,
        p: f64,
        metric: Metric,
        horizon: usize,
    ) -> Self {
        Self {
            alpha0: sqrt_alpha0 * sqrt_alpha0,
            alpha1: sqrt_alpha1 * sqrt_alpha1,
            p,
            metric,
            horizon,
            sse: 0.0,
            ci_sqrt_alpha1: None,
        }
    }

    pub fn sqrt_alpha0(&self) -> f64 {
        self.alpha0.sqrt()
    }

    pub fn sqrt_alpha1(&self) -> f64 {
        self.alpha1.sqrt()
    }

    fn reducible(&self, w: f64) -> f64 {
        self.alpha0 / w.powf(self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Scaling,
    Transition,
    Saturation,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Scaling => "scaling",
            Regime::Transition => "transition",
            Regime::Saturation => "saturation",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
struct Inner {
    alpha0: f64,
    alpha1: f64,
    sse: f64,
}

fn sse(xs: &[f64], ys: &[f64], a0: f64, a1: f64) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (y - a0 * x - a1).powi(2))
        .sum()
}

/// Least squares of `y ≈ a0·x + a1` with `a0, a1 ≥ 0`.
fn nnls2(xs: &[f64], ys: &[f64]) -> Inner {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx > 0.0 {
        let a0 = sxy / sxx;
        let a1 = my - a0 * mx;
        if a0 >= 0.0 && a1 >= 0.0 {
            return Inner {
                alpha0: a0,
                alpha1: a1,
                sse: sse(xs, ys, a0, a1),
            };
        }
    }
    // constrained optimum sits on one of the two edges
    let edge_a1 = Inner {
        alpha0: 0.0,
        alpha1: my.max(0.0),
        sse: sse(xs, ys, 0.0, my.max(0.0)),
    };
    let xx: f64 = xs.iter().map(|x| x * x).sum();
    let a0 = if xx > 0.0 {
        (xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / xx).max(0.0)
    } else {
        0.0
    };
    let edge_a0 = Inner {
        alpha0: a0,
        alpha1: 0.0,
        sse: sse(xs, ys, a0, 0.0),
    };
    if edge_a0.sse < edge_a1.sse {
        edge_a0
    } else {
        edge_a1
    }
}

fn inner_at(ws: &[f64], ys: &[f64], p: f64) -> Inner {
    let xs: Vec<f64> = ws.iter().map(|w| w.powf(-p)).collect();
    nnls2(&xs, ys)
}

fn check_points(points: &[ErrorPoint]) -> Result<(Metric, usize)> {
    let first = points
        .first()
        .ok_or(Error::TooFewPoints { have: 0, needed: 1 })?;
    for pt in points {
        if !(pt.w > 0.0 && pt.w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{}: W must be positive, got {}",
                pt.group_id, pt.w
            )));
        }
        if !(pt.err >= 0.0 && pt.err.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{}: error must be >= 0, got {}",
                pt.group_id, pt.err
            )));
        }
        if pt.metric != first.metric || pt.horizon != first.horizon {
            return Err(Error::InvalidParameter(
                "points mix metrics or horizons".into(),
            ));
        }
    }
    Ok((first.metric, first.horizon))
}

/// Least-squares fit of the law; `fixed_p` skips the exponent search.
pub fn fit_scaling_law(points: &[ErrorPoint], fixed_p: Option<f64>) -> Result<ScalingFit> {
    let (metric, horizon) = check_points(points)?;
    let needed = if fixed_p.is_some() { 2 } else { 3 };
    if points.len() < needed {
        return Err(Error::TooFewPoints {
            have: points.len(),
            needed,
        });
    }
    let ws: Vec<f64> = points.iter().map(|p| p.w).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.err * p.err).collect();
    let (lo, hi) = ws.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &w| {
        (lo.min(w), hi.max(w))
    });

    let p = match fixed_p {
        Some(p) => {
            if !(p > 0.0 && p <= P_MAX) {
                return Err(Error::InvalidParameter(format!(
                    "p must lie in (0, {P_MAX}], got {p}"
                )));
            }
            p
        }
        None => {
            if hi / lo < MIN_W_SPAN {
                return Err(Error::NarrowSpan { ratio: hi / lo });
            }
            search_p(&ws, &ys)
        }
    };
    let inner = inner_at(&ws, &ys, p);
    Ok(ScalingFit {
        alpha0: inner.alpha0,
        alpha1: inner.alpha1,
        p,
        metric,
        horizon,
        sse: inner.sse,
        ci_sqrt_alpha1: None,
    })
}

/// Grid scan to bracket the minimum, then golden section inside the bracket.
fn search_p(ws: &[f64], ys: &[f64]) -> f64 {
    let f = |p: f64| inner_at(ws, ys, p).sse;
    let steps = ((P_MAX - P_MIN) / P_GRID_STEP).round() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| P_MIN + i as f64 * P_GRID_STEP)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&p| f(p)).collect();
    let best = (0..vals.len()).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });

    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(steps)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > P_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let p_gs = 0.5 * (a + b);
    let f_gs = f(p_gs);
    let (p_star, f_star) = if f_gs <= vals[best] {
        (p_gs, f_gs)
    } else {
        (grid[best], vals[best])
    };

    // flat objective (e.g. α₀ = 0): the exponent is unidentified, report 1
    let tol = 1e-12 * ys.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);
    if vals.iter().all(|v| v - f_star <= tol) {
        return 1.0;
    }
    p_star
}

pub fn critical_load(fit: &ScalingFit) -> Result<f64> {
    if !(fit.alpha1 > 0.0) {
        return Err(Error::NoCriticalLoad(
            "irreducible term is zero (ideal aggregation)",
        ));
    }
    if !(fit.alpha0 > 0.0) {
        return Err(Error::NoCriticalLoad("reducible term is zero"));
    }
    Ok((fit.alpha0 / fit.alpha1).powf(1.0 / fit.p))
}

pub fn classify_regime(w: f64, fit: &ScalingFit, factor: f64) -> Regime {
    let r = fit.reducible(w);
    if r > factor * fit.alpha1 {
        Regime::Scaling
    } else if r * factor < fit.alpha1 {
        Regime::Saturation
    } else {
        Regime::Transition
    }
}

pub fn predict_error(fit: &ScalingFit, w: f64) -> f64 {
    (fit.reducible(w) + fit.alpha1).sqrt()
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn by_size(points: &[ErrorPoint]) -> BTreeMap<usize, Vec<&ErrorPoint>> {
    let mut strata: BTreeMap<usize, Vec<&ErrorPoint>> = BTreeMap::new();
    for p in points {
        strata.entry(p.size).or_default().push(p);
    }
    strata
}

/// Percentile interval on `√α₁` from a size-stratified nonparametric bootstrap.
pub fn bootstrap_ci(
    points: &[ErrorPoint],
    replicates: usize,
    level: f64,
    seed: u64,
    fixed_p: Option<f64>,
) -> Result<(f64, f64)> {
    if replicates < 100 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs >= 100 replicates, got {replicates}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    check_points(points)?;
    let strata: Vec<Vec<&ErrorPoint>> = by_size(points).into_values().collect();
    let outcomes: Vec<Option<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, rng::BOOTSTRAP, r);
            let sample: Vec<ErrorPoint> = strata
                .iter()
                .flat_map(|s| {
                    (0..s.len())
                        .map(|_| s[rng.random_range(0..s.len())].clone())
                        .collect::<Vec<_>>()
                })
                .collect();
            fit_scaling_law(&sample, fixed_p)
                .ok()
                .map(|f| f.sqrt_alpha1())
        })
        .collect();
    let mut ok: Vec<f64> = outcomes.into_iter().flatten().collect();
    let failed = replicates - ok.len();
    if failed as f64 > 0.05 * replicates as f64 {
        return Err(Error::BootstrapFailures {
            failed,
            total: replicates,
        });
    }
    ok.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&ok, tail), quantile_sorted(&ok, 1.0 - tail)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCurve {
    pub quantile: f64,
    /// One point per group size at the mean W of that size.
    pub points: Vec<ErrorPoint>,
}

/// Per-size empirical quantiles of the error, each track fittable on its own.
pub fn quantile_curves(points: &[ErrorPoint], quantiles: &[f64]) -> Result<Vec<QuantileCurve>> {
    let (metric, horizon) = check_points(points)?;
    if let Some(q) = quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::InvalidParameter(format!(
            "quantile {q} outside [0, 1]"
        )));
    }
    let strata = by_size(points);
    let mut summaries = Vec::with_capacity(strata.len());
    for (&size, pts) in &strata {
        if pts.len() < MIN_QUANTILE_SAMPLES {
            return Err(Error::InsufficientReplicates {
                size,
                have: pts.len(),
                needed: MIN_QUANTILE_SAMPLES,
            });
        }
        let mean_w = pts.iter().map(|p| p.w).sum::<f64>() / pts.len() as f64;
        let mut errs: Vec<f64> = pts.iter().map(|p| p.err).collect();
        errs.sort_by(f64::total_cmp);
        summaries.push((size, mean_w, errs));
    }
    Ok(quantiles
        .iter()
        .map(|&q| QuantileCurve {
            quantile: q,
            points: summaries
                .iter()
                .map(|(size, w, errs)| ErrorPoint {
                    group_id: format!("q{q}-n{size}"),
                    size: *size,
                    w: *w,
                    err: quantile_sorted(errs, q),
                    metric,
                    horizon,
                })
                .collect(),
        })
        .collect())
}
