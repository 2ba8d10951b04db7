//! Additive trend + Fourier-seasonality forecaster.
//!
//! The design matrix holds an intercept, a linear time term, hinge terms at
//! the 25/50/75% quantiles of the training span and `K` sine/cosine pairs per
//! seasonal period. Coefficients come from ordinary least squares, or ridge
//! with λ = 1e-6 when the design is rank deficient.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::arima::Z_95;
use crate::error::{Error, Result};
use crate::forecast::ForecastSet;
use crate::linalg;
use crate::panel::Panel;

pub const RIDGE_LAMBDA: f64 = 1e-6;
pub const CHANGEPOINT_QUANTILES: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompFit {
    /// Training range the trend was fitted on; time is rescaled to [0, 1]
    /// over it.
    pub train: Range<usize>,
    /// Changepoint times (absolute indices).
    pub changepoints: Vec<f64>,
    /// Intercept, slope, then one hinge coefficient per changepoint.
    pub trend: Vec<f64>,
    pub periods: Vec<f64>,
    pub fourier_order: usize,
    /// `[sin_1, cos_1, …, sin_K, cos_K]` per period.
    pub seasonal: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Set when the ridge fallback was used.
    pub ridge: bool,
}

impl DecompFit {
    fn scale(&self) -> f64 {
        (self.train.len().max(2) - 1) as f64
    }

    /// Trend slope of each segment in value units per time step, from the
    /// first segment to the last.
    pub fn slopes(&self) -> Vec<f64> {
        let mut s = self.trend[1];
        let mut out = vec![s / self.scale()];
        for h in &self.trend[2..] {
            s += h;
            out.push(s / self.scale());
        }
        out
    }

    pub fn trend_at(&self, t: f64) -> f64 {
        let row = trend_row(self, t);
        row.iter().zip(&self.trend).map(|(a, b)| a * b).sum()
    }

    pub fn seasonal_at(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (p, coef) in self.periods.iter().zip(&self.seasonal) {
            for k in 1..=self.fourier_order {
                let a = 2.0 * PI * k as f64 * t / p;
                acc += coef[2 * (k - 1)] * a.sin() + coef[2 * (k - 1) + 1] * a.cos();
            }
        }
        acc
    }

    pub fn predict(&self, t: f64) -> f64 {
        self.trend_at(t) + self.seasonal_at(t)
    }

    pub fn half_width(&self) -> f64 {
        Z_95 * self.sigma
    }
}

fn trend_row(fit: &DecompFit, t: f64) -> Vec<f64> {
    let s = fit.scale();
    let x = (t - fit.train.start as f64) / s;
    let mut row = vec![1.0, x];
    for c in &fit.changepoints {
        let xc = (c - fit.train.start as f64) / s;
        row.push((x - xc).max(0.0));
    }
    row
}

fn design_row(fit: &DecompFit, t: f64) -> Vec<f64> {
    let mut row = trend_row(fit, t);
    for p in &fit.periods {
        for k in 1..=fit.fourier_order {
            let a = 2.0 * PI * k as f64 * t / p;
            row.push(a.sin());
            row.push(a.cos());
        }
    }
    row
}

/// Fits trend and seasonality to the finite entries of `series[train]`.
pub fn decomp_fit(series: &[f64], train: Range<usize>, periods: &[f64], fourier_order: usize) -> Result<DecompFit> {
    if train.end > series.len() || train.len() < 2 {
        return Err(Error::Shape(format!(
            "decomposition training range {train:?} invalid for a series of length {}",
            series.len()
        )));
    }
    if let Some(p) = periods.iter().find(|p| !(**p >= 2.0)) {
        return Err(Error::Config(format!("seasonal period {p} must be at least 2")));
    }
    let max_period = periods.iter().cloned().fold(0.0, f64::max);
    if (train.len() as f64) < 2.0 * max_period {
        return Err(Error::Shape(format!(
            "training length {} shorter than twice the longest period {max_period}",
            train.len()
        )));
    }
    let span = (train.len() - 1) as f64;
    let mut fit = DecompFit {
        train: train.clone(),
        changepoints: CHANGEPOINT_QUANTILES.iter().map(|q| train.start as f64 + q * span).collect(),
        trend: Vec::new(),
        periods: periods.to_vec(),
        fourier_order,
        seasonal: Vec::new(),
        sigma: 0.0,
        ridge: false,
    };
    let times: Vec<usize> = train.clone().filter(|&t| series[t].is_finite()).collect();
    let ncol = 2 + CHANGEPOINT_QUANTILES.len() + 2 * fourier_order * periods.len();
    if times.len() < 2 {
        return Err(Error::Shape("fewer than 2 finite training values".into()));
    }
    let rows: Vec<Vec<f64>> = times.iter().map(|&t| design_row(&fit, t as f64)).collect();
    let x = DMatrix::from_fn(times.len(), ncol, |r, c| rows[r][c]);
    let y = DVector::from_iterator(times.len(), times.iter().map(|&t| series[t]));
    let sol = linalg::lstsq_or_ridge(&x, &y, RIDGE_LAMBDA)
        .ok_or_else(|| Error::Shape("decomposition design could not be solved".into()))?;
    let coef: Vec<f64> = sol.coef.iter().copied().collect();
    let nt = 2 + CHANGEPOINT_QUANTILES.len();
    fit.trend = coef[..nt].to_vec();
    fit.seasonal = coef[nt..].chunks(2 * fourier_order.max(1)).map(|c| c.to_vec()).collect();
    if fourier_order == 0 {
        fit.seasonal = vec![Vec::new(); periods.len()];
    }
    fit.ridge = sol.ridge;
    let resid = &y - &x * &sol.coef;
    let n = resid.len() as f64;
    let m = resid.sum() / n;
    fit.sigma = (resid.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / n).sqrt();
    Ok(fit)
}

/// Forecasts trend + seasonality at each time of `range`; half-width
/// `1.959964·σ`.
pub fn decomp_forecast(fit: &DecompFit, range: Range<usize>) -> Result<ForecastSet> {
    let values = Array2::from_shape_fn((1, range.len()), |(_, k)| fit.predict((range.start + k) as f64));
    let hw = Array2::from_elem(values.dim(), fit.half_width());
    ForecastSet::new(range, values, Some(hw))
}

/// Per-node decomposition fits on `train`, forecasting `eval`. Missing
/// training values are skipped.
pub fn decomp_forecast_panel(
    panel: &Panel,
    train: Range<usize>,
    eval: Range<usize>,
    periods: &[f64],
    fourier_order: usize,
) -> Result<(Vec<DecompFit>, ForecastSet)> {
    let mut fits = Vec::with_capacity(panel.n_nodes());
    let mut rows = Vec::with_capacity(panel.n_nodes());
    for i in 0..panel.n_nodes() {
        let series: Vec<f64> = (0..panel.len())
            .map(|t| if panel.is_observed(i, t) { panel.values()[[i, t]] } else { f64::NAN })
            .collect();
        let fit = decomp_fit(&series, train.clone(), periods, fourier_order)?;
        rows.push(decomp_forecast(&fit, eval.clone())?);
        fits.push(fit);
    }
    Ok((fits, ForecastSet::stack(&rows)?))
}
