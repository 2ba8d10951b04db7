use std::ops::Range;

use ndarray::Array2;

use crate::error::{Error, Result};

/// One-step-ahead predictions for every node over a time range, in the same
/// (normalized) units as the panel they were produced from.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    /// Time indices covered; column `k` of `values` is time `range.start + k`.
    pub range: Range<usize>,
    pub values: Array2<f64>,
    /// Optional prediction-interval half-widths, same shape as `values`.
    pub half_widths: Option<Array2<f64>>,
}

impl ForecastSet {
    pub fn new(range: Range<usize>, values: Array2<f64>, half_widths: Option<Array2<f64>>) -> Result<Self> {
        if values.ncols() != range.len() {
            return Err(Error::Shape(format!(
                "{} forecast columns for a range of length {}",
                values.ncols(),
                range.len()
            )));
        }
        if let Some(hw) = &half_widths {
            if hw.dim() != values.dim() {
                return Err(Error::Shape("half-widths and forecasts differ in shape".into()));
            }
        }
        Ok(Self {
            range,
            values,
            half_widths,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    /// Forecast for `node` at absolute time `t`.
    pub fn at(&self, node: usize, t: usize) -> f64 {
        self.values[[node, t - self.range.start]]
    }

    /// Stacks per-node forecast sets covering the same range.
    pub fn stack(rows: &[ForecastSet]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Shape("no forecasts to stack".into()))?;
        let len = first.range.len();
        let n: usize = rows.iter().map(|r| r.n_nodes()).sum();
        let mut values = Array2::zeros((n, len));
        let with_hw = rows.iter().all(|r| r.half_widths.is_some());
        let mut hw = Array2::zeros((n, len));
        let mut at = 0;
        for r in rows {
            if r.range != first.range {
                return Err(Error::Coverage("forecast ranges differ".into()));
            }
            for i in 0..r.n_nodes() {
                values.row_mut(at).assign(&r.values.row(i));
                if let Some(h) = &r.half_widths {
                    hw.row_mut(at).assign(&h.row(i));
                }
                at += 1;
            }
        }
        Self::new(first.range.clone(), values, with_hw.then_some(hw))
    }
}
