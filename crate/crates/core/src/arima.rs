//! ARIMA baseline fitted by the Hannan–Rissanen two-stage regression.
//!
//! Orders are chosen by AIC over a small grid. Stage one fits a long
//! autoregression to the differenced series and keeps its residuals as
//! innovation estimates; stage two regresses the differenced series on its own
//! lags and on lagged innovation estimates. Seasonal terms enter as extra lags
//! at multiples of the period (additively, not as a multiplicative
//! polynomial).

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ForecastSet;
use crate::linalg;
use crate::panel::Panel;

/// Two-sided 95% normal quantile used for prediction intervals.
pub const Z_95: f64 = 1.959964;

const MAX_P: usize = 3;
const MAX_D: usize = 1;
const MAX_Q: usize = 2;
/// Floor on the residual variance inside the log of the AIC.
const SIGMA2_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonalOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub period: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub seasonal: Option<SeasonalOrder>,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        Self::with_seasonal(p, d, q, None)
    }

    pub fn with_seasonal(p: usize, d: usize, q: usize, seasonal: Option<SeasonalOrder>) -> Result<Self> {
        if p > MAX_P || d > MAX_D || q > MAX_Q {
            return Err(Error::Config(format!(
                "ARIMA order ({p},{d},{q}) outside p<={MAX_P}, d<={MAX_D}, q<={MAX_Q}"
            )));
        }
        if let Some(s) = seasonal {
            if s.period < 2 || s.p > 1 || s.d > 1 || s.q > 1 {
                return Err(Error::Config(format!(
                    "seasonal order ({},{},{},{}) needs period >= 2 and P, D, Q <= 1",
                    s.p, s.d, s.q, s.period
                )));
            }
        }
        Ok(Self { p, d, q, seasonal })
    }

    pub fn mean_model() -> Self {
        Self {
            p: 0,
            d: 0,
            q: 0,
            seasonal: None,
        }
    }

    pub fn ar_lags(&self) -> Vec<usize> {
        let mut lags: Vec<usize> = (1..=self.p).collect();
        if let Some(s) = self.seasonal {
            lags.extend((1..=s.p).map(|k| k * s.period));
        }
        lags
    }

    pub fn ma_lags(&self) -> Vec<usize> {
        let mut lags: Vec<usize> = (1..=self.q).collect();
        if let Some(s) = self.seasonal {
            lags.extend((1..=s.q).map(|k| k * s.period));
        }
        lags
    }

    /// Coefficients `a` of the differencing operator, `w_t = Σ a_k y_{t-k}`.
    pub fn difference_poly(&self) -> Vec<f64> {
        let mut poly = vec![1.0];
        let mut apply = |lag: usize| {
            let mut next = vec![0.0; poly.len() + lag];
            for (k, &a) in poly.iter().enumerate() {
                next[k] += a;
                next[k + lag] -= a;
            }
            poly = next;
        };
        if let Some(s) = self.seasonal {
            for _ in 0..s.d {
                apply(s.period);
            }
        }
        for _ in 0..self.d {
            apply(1);
        }
        poly
    }
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)?;
        if let Some(s) = self.seasonal {
            write!(f, "x({},{},{})_{}", s.p, s.d, s.q, s.period)?;
        }
        Ok(())
    }
}

/// Orders p ∈ 0..=3, d ∈ 0..=1, q ∈ 0..=2, crossed with seasonal
/// (P, D) ∈ {0,1}² at `period` when one is given.
pub fn default_grid(period: Option<usize>) -> Vec<ArimaOrder> {
    let seasonal: Vec<Option<SeasonalOrder>> = match period {
        None => vec![None],
        Some(s) => {
            let mut v = vec![None];
            for (p, d) in [(1, 0), (0, 1), (1, 1)] {
                v.push(Some(SeasonalOrder { p, d, q: 0, period: s }));
            }
            v
        }
    };
    let mut grid = Vec::new();
    for so in &seasonal {
        for d in 0..=MAX_D {
            for p in 0..=MAX_P {
                for q in 0..=MAX_Q {
                    grid.push(ArimaOrder {
                        p,
                        d,
                        q,
                        seasonal: *so,
                    });
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub order: ArimaOrder,
    /// One coefficient per entry of `order.ar_lags()`.
    pub phi: Vec<f64>,
    /// One coefficient per entry of `order.ma_lags()`.
    pub theta: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    /// `n·ln σ̂² + 2·(k+1)` with `n` the regression sample size and `k` the
    /// number of AR and MA coefficients.
    pub aic: f64,
    pub n_eff: usize,
    /// Set when the regression was singular and a mean model was used.
    pub fallback: bool,
}

impl ArimaFit {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

fn aic(n: usize, sigma2: f64, k: usize) -> f64 {
    n as f64 * sigma2.max(SIGMA2_FLOOR).ln() + 2.0 * (k + 1) as f64
}

/// Differenced series aligned with `y`; entries before the operator's reach
/// are `None`.
fn difference(y: &[f64], poly: &[f64]) -> Vec<Option<f64>> {
    let reach = poly.len() - 1;
    (0..y.len())
        .map(|t| (t >= reach).then(|| poly.iter().enumerate().map(|(k, a)| a * y[t - k]).sum()))
        .collect()
}

fn mean_fit(order: ArimaOrder, w: &[f64], fallback: bool) -> ArimaFit {
    let n = w.len();
    let m = w.iter().sum::<f64>() / n as f64;
    let s2 = w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    let order = ArimaOrder {
        p: 0,
        q: 0,
        seasonal: order.seasonal.map(|s| SeasonalOrder { p: 0, q: 0, ..s }),
        ..order
    };
    ArimaFit {
        order,
        phi: Vec::new(),
        theta: Vec::new(),
        intercept: m,
        sigma2: s2,
        aic: aic(n, s2, 0),
        n_eff: n,
        fallback,
    }
}

/// Least-squares regression of `target[t]` on an intercept and lagged
/// regressors for `t` in `rows`; `None` if singular.
fn lagged_regression(
    target: &[f64],
    regressors: &[(&[f64], &[usize])],
    rows: Range<usize>,
) -> Option<(DVector<f64>, Vec<f64>)> {
    let ncol = 1 + regressors.iter().map(|(_, l)| l.len()).sum::<usize>();
    let nrow = rows.len();
    if nrow <= ncol {
        return None;
    }
    let x = DMatrix::from_fn(nrow, ncol, |r, c| {
        let t = rows.start + r;
        if c == 0 {
            return 1.0;
        }
        let mut c = c - 1;
        for (series, lags) in regressors {
            if c < lags.len() {
                return series[t - lags[c]];
            }
            c -= lags.len();
        }
        unreachable!()
    });
    let y = DVector::from_fn(nrow, |r, _| target[rows.start + r]);
    let coef = linalg::ols(&x, &y)?;
    let resid = (&y - &x * &coef).iter().cloned().collect();
    Some((coef, resid))
}

/// Fits one order; `None` when the series is too short for it.
pub fn fit_order(series: &[f64], order: ArimaOrder) -> Option<ArimaFit> {
    let poly = order.difference_poly();
    let reach = poly.len() - 1;
    if series.len() <= reach + 2 {
        return None;
    }
    let w: Vec<f64> = difference(series, &poly).into_iter().flatten().collect();
    let n = w.len();
    let ar = order.ar_lags();
    let ma = order.ma_lags();
    let max_ar = ar.iter().copied().max().unwrap_or(0);
    let max_ma = ma.iter().copied().max().unwrap_or(0);
    if ar.is_empty() && ma.is_empty() {
        return Some(mean_fit(order, &w, false));
    }
    let (innov, start) = if ma.is_empty() {
        (vec![0.0; n], max_ar)
    } else {
        let m = ((10.0 * (n as f64).log10()).ceil() as usize).max(max_ar).max(max_ma);
        if 3 * m >= n {
            return None;
        }
        let long: Vec<usize> = (1..=m).collect();
        let Some((_, resid)) = lagged_regression(&w, &[(&w, &long)], m..n) else {
            return Some(mean_fit(order, &w, true));
        };
        let mut e = vec![0.0; n];
        e[m..].copy_from_slice(&resid);
        (e, (m + max_ma).max(max_ar))
    };
    if start + 2 >= n {
        return None;
    }
    let fit = lagged_regression(&w, &[(&w, &ar), (&innov, &ma)], start..n);
    let Some((coef, resid)) = fit else {
        return Some(mean_fit(order, &w, true));
    };
    let n_eff = resid.len();
    let s2 = resid.iter().map(|r| r * r).sum::<f64>() / n_eff as f64;
    Some(ArimaFit {
        order,
        intercept: coef[0],
        phi: coef.iter().skip(1).take(ar.len()).copied().collect(),
        theta: coef.iter().skip(1 + ar.len()).copied().collect(),
        sigma2: s2,
        aic: aic(n_eff, s2, ar.len() + ma.len()),
        n_eff,
        fallback: false,
    })
}

/// Best-AIC fit over `grid`; ties keep the earlier grid entry.
pub fn arima_fit(series: &[f64], grid: &[ArimaOrder]) -> Result<ArimaFit> {
    if grid.is_empty() {
        return Err(Error::Config("empty ARIMA order grid".into()));
    }
    if let Some(bad) = series.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { step: bad });
    }
    let max_p = grid.iter().map(|o| o.p).max().unwrap_or(0);
    let max_q = grid.iter().map(|o| o.q).max().unwrap_or(0);
    let need = 10 * (max_p + max_q + 1);
    if series.len() < need {
        return Err(Error::Shape(format!(
            "ARIMA needs at least {need} observations for this grid, got {}",
            series.len()
        )));
    }
    let mut best: Option<ArimaFit> = None;
    for &order in grid {
        if let Some(fit) = fit_order(series, order) {
            if best.as_ref().is_none_or(|b| fit.aic < b.aic) {
                best = Some(fit);
            }
        }
    }
    Ok(best.unwrap_or_else(|| mean_fit(ArimaOrder::mean_model(), series, true)))
}

/// Rolling one-step forecasts of `series` over `range` using the true past
/// values; coefficients stay fixed. The innovation recursion starts from
/// zero at the beginning of the series.
pub fn arima_forecast(fit: &ArimaFit, series: &[f64], range: Range<usize>) -> Result<ForecastSet> {
    let poly = fit.order.difference_poly();
    let reach = poly.len() - 1;
    if range.start < reach.max(1) || range.end > series.len() || range.is_empty() {
        return Err(Error::Coverage(format!(
            "ARIMA forecast range {range:?} needs start >= {} and end <= {}",
            reach.max(1),
            series.len()
        )));
    }
    let ar = fit.order.ar_lags();
    let ma = fit.order.ma_lags();
    let w = difference(&series[..range.end], &poly);
    let mut innov = vec![0.0; range.end];
    let mut out = Vec::with_capacity(range.len());
    for t in reach..range.end {
        let mut what = fit.intercept;
        let mut complete = true;
        for (l, phi) in ar.iter().zip(&fit.phi) {
            match t.checked_sub(*l).and_then(|s| w[s]) {
                Some(v) => what += phi * v,
                None => complete = false,
            }
        }
        for (l, theta) in ma.iter().zip(&fit.theta) {
            if let Some(s) = t.checked_sub(*l) {
                what += theta * innov[s];
            }
        }
        if t >= range.start {
            // undo the differencing with past values only
            let base: f64 = -poly.iter().enumerate().skip(1).map(|(k, a)| a * series[t - k]).sum::<f64>();
            out.push(what + base);
        }
        let wt = w[t].expect("within reach");
        innov[t] = if complete { wt - what } else { 0.0 };
    }
    let values = Array2::from_shape_vec((1, out.len()), out).expect("row");
    let hw = Array2::from_elem(values.dim(), Z_95 * fit.sigma());
    ForecastSet::new(range, values, Some(hw))
}

/// Fits every node on its training prefix and forecasts `eval`. Missing
/// values are filled forward first.
pub fn arima_forecast_panel(
    panel: &Panel,
    train: Range<usize>,
    eval: Range<usize>,
    grid: &[ArimaOrder],
) -> Result<(Vec<ArimaFit>, ForecastSet)> {
    let filled = panel.filled_values();
    let mut fits = Vec::with_capacity(panel.n_nodes());
    let mut rows = Vec::with_capacity(panel.n_nodes());
    for i in 0..panel.n_nodes() {
        let series: Vec<f64> = filled.row(i).to_vec();
        let fit = arima_fit(&series[train.clone()], grid)?;
        // the prefix before the training range only matters for warm-up
        let fc = arima_forecast(&fit, &series, eval.clone())?;
        fits.push(fit);
        rows.push(fc);
    }
    Ok((fits, ForecastSet::stack(&rows)?))
}
