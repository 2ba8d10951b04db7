//! Node × time observation panels and train/validation/test splitting.

use std::collections::HashSet;
use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Aligned time series for a set of nodes sharing one timestamp axis.
///
/// Invariants (checked by [`Panel::new`]):
/// - `values`, `mask` and `labels` all have shape `[n_nodes, T]`;
/// - timestamps are strictly increasing;
/// - node ids are unique;
/// - every labeled anomaly is an observed position.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    node_ids: Vec<String>,
    timestamps: Vec<i64>,
    values: Array2<f64>,
    mask: Array2<bool>,
    labels: Option<Array2<bool>>,
}

impl Panel {
    pub fn new(
        node_ids: Vec<String>,
        timestamps: Vec<i64>,
        values: Array2<f64>,
        mask: Array2<bool>,
        labels: Option<Array2<bool>>,
    ) -> Result<Self> {
        let shape = (node_ids.len(), timestamps.len());
        if values.dim() != shape {
            return Err(Error::Panel(format!(
                "values have shape {:?}, expected {:?}",
                values.dim(),
                shape
            )));
        }
        if mask.dim() != shape {
            return Err(Error::Panel(format!(
                "mask has shape {:?}, expected {:?}",
                mask.dim(),
                shape
            )));
        }
        if let Some(l) = &labels {
            if l.dim() != shape {
                return Err(Error::Panel(format!(
                    "labels have shape {:?}, expected {:?}",
                    l.dim(),
                    shape
                )));
            }
            if let Some(((i, t), _)) = l
                .indexed_iter()
                .find(|(ix, &lab)| lab && !mask[*ix])
            {
                return Err(Error::Panel(format!(
                    "anomaly label at node {} time {} is not an observed position",
                    node_ids[i], t
                )));
            }
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Panel(format!(
                "timestamps not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let mut seen = HashSet::new();
        for id in &node_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Panel(format!("duplicate node id `{id}`")));
            }
        }
        Ok(Self {
            node_ids,
            timestamps,
            values,
            mask,
            labels,
        })
    }

    /// Fully observed, unlabeled panel with ordinal timestamps `0..T`.
    pub fn from_values(node_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let t = values.ncols();
        let mask = Array2::from_elem(values.dim(), true);
        Self::new(node_ids, (0..t as i64).collect(), values, mask, None)
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn series(&self, node: usize) -> ArrayView1<'_, f64> {
        self.values.row(node)
    }

    pub fn mask(&self) -> ArrayView2<'_, bool> {
        self.mask.view()
    }

    pub fn labels(&self) -> Option<ArrayView2<'_, bool>> {
        self.labels.as_ref().map(|l| l.view())
    }

    pub fn is_observed(&self, node: usize, t: usize) -> bool {
        self.mask[[node, t]]
    }

    pub fn is_anomaly(&self, node: usize, t: usize) -> bool {
        self.labels.as_ref().is_some_and(|l| l[[node, t]])
    }

    /// Labels, or an all-false matrix when the panel is unlabeled.
    pub fn labels_or_empty(&self) -> Array2<bool> {
        self.labels
            .clone()
            .unwrap_or_else(|| Array2::from_elem(self.values.dim(), false))
    }

    /// Values with missing entries filled by last observation carried forward.
    /// Leading gaps take the first observed value; a node with no observations
    /// is filled with zeros.
    pub fn filled_values(&self) -> Array2<f64> {
        let mut out = self.values.clone();
        for (mut row, mrow) in out.axis_iter_mut(Axis(0)).zip(self.mask.axis_iter(Axis(0))) {
            let first = mrow.iter().position(|&m| m);
            let mut last = first.map_or(0.0, |t| row[t]);
            for t in 0..row.len() {
                if mrow[t] {
                    last = row[t];
                } else {
                    row[t] = last;
                }
            }
        }
        out
    }

    /// Same panel with new values; shape must match.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        Self::new(
            self.node_ids.clone(),
            self.timestamps.clone(),
            values,
            self.mask.clone(),
            self.labels.clone(),
        )
    }

    /// Same panel with new labels; shape must match.
    pub fn with_labels(&self, labels: Option<Array2<bool>>) -> Result<Self> {
        Self::new(
            self.node_ids.clone(),
            self.timestamps.clone(),
            self.values.clone(),
            self.mask.clone(),
            labels,
        )
    }

    /// Sub-panel with the given nodes, in the given order.
    pub fn select_nodes(&self, nodes: &[usize]) -> Result<Self> {
        let ids = nodes.iter().map(|&i| self.node_ids[i].clone()).collect();
        Self::new(
            ids,
            self.timestamps.clone(),
            self.values.select(Axis(0), nodes),
            self.mask.select(Axis(0), nodes),
            self.labels.as_ref().map(|l| l.select(Axis(0), nodes)),
        )
    }

    /// First `len` time steps.
    pub fn truncate(&self, len: usize) -> Result<Self> {
        let len = len.min(self.len());
        Self::new(
            self.node_ids.clone(),
            self.timestamps[..len].to_vec(),
            self.values.slice(ndarray::s![.., ..len]).to_owned(),
            self.mask.slice(ndarray::s![.., ..len]).to_owned(),
            self.labels
                .as_ref()
                .map(|l| l.slice(ndarray::s![.., ..len]).to_owned()),
        )
    }

    /// Stacks single- or multi-node panels that share a timestamp axis.
    pub fn stack(panels: &[Panel]) -> Result<Self> {
        let first = panels
            .first()
            .ok_or_else(|| Error::Panel("nothing to stack".into()))?;
        let t = first.len();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut mrows = Vec::new();
        let mut lrows = Vec::new();
        let any_labels = panels.iter().any(|p| p.labels.is_some());
        for p in panels {
            if p.len() != t {
                return Err(Error::Shape(format!(
                    "cannot stack panels of lengths {} and {}",
                    t,
                    p.len()
                )));
            }
            ids.extend(p.node_ids.iter().cloned());
            rows.push(p.values.view());
            mrows.push(p.mask.view());
            if any_labels {
                lrows.push(p.labels_or_empty());
            }
        }
        let values = ndarray::concatenate(Axis(0), &rows).map_err(|e| Error::Shape(e.to_string()))?;
        let mask = ndarray::concatenate(Axis(0), &mrows).map_err(|e| Error::Shape(e.to_string()))?;
        let labels = if any_labels {
            let views: Vec<_> = lrows.iter().map(|l| l.view()).collect();
            Some(ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?)
        } else {
            None
        };
        Self::new(ids, first.timestamps.clone(), values, mask, labels)
    }
}

/// Contiguous, ordered train/validation/test ranges covering `[0, T)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Splits `[0, len)` by fractions. Boundaries are `floor(len * frac)`.
pub fn split_range(len: usize, train_frac: f64, val_frac: f64) -> Result<Split> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::Split(format!(
            "fractions must be positive with sum < 1 (got {train_frac}, {val_frac})"
        )));
    }
    let cut = |f: f64| ((len as f64) * f + 1e-9).floor() as usize;
    let train_end = cut(train_frac);
    let val_end = cut(train_frac + val_frac).max(train_end);
    let split = Split {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..len,
    };
    for (name, r) in [("train", &split.train), ("validation", &split.val), ("test", &split.test)] {
        if r.is_empty() {
            return Err(Error::Split(format!(
                "{name} range is empty for T={len}, fractions {train_frac}/{val_frac}"
            )));
        }
    }
    Ok(split)
}

pub fn split_panel(panel: &Panel, train_frac: f64, val_frac: f64) -> Result<Split> {
    split_range(panel.len(), train_frac, val_frac)
}
