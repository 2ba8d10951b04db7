//! Per-node z-scoring fitted on the training range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

/// Floor applied to zero (or vanishing) standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-node location and scale in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationParams {
    pub fn normalize(&self, node: usize, x: f64) -> f64 {
        (x - self.mean[node]) / self.std[node]
    }

    pub fn denormalize(&self, node: usize, z: f64) -> f64 {
        z * self.std[node] + self.mean[node]
    }
}

/// Z-scores each node using the population mean and standard deviation of its
/// observed entries in `[0, train_end)`. Mask and labels are untouched.
pub fn normalize_panel(panel: &Panel, train_end: usize) -> Result<(Panel, NormalizationParams)> {
    let train_end = train_end.min(panel.len());
    let values = panel.values();
    let mask = panel.mask();
    let mut mean = Vec::with_capacity(panel.n_nodes());
    let mut std = Vec::with_capacity(panel.n_nodes());
    for i in 0..panel.n_nodes() {
        let obs: Vec<f64> = (0..train_end)
            .filter(|&t| mask[[i, t]])
            .map(|t| values[[i, t]])
            .collect();
        if obs.len() < 2 {
            return Err(Error::DegenerateNode {
                node: panel.node_ids()[i].clone(),
            });
        }
        let n = obs.len() as f64;
        let m = obs.iter().sum::<f64>() / n;
        let var = obs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        let s = var.sqrt();
        mean.push(m);
        std.push(if s < STD_FLOOR { STD_FLOOR } else { s });
    }
    let params = NormalizationParams { mean, std };
    let mut out = panel.values().to_owned();
    for ((i, _), v) in out.indexed_iter_mut() {
        *v = params.normalize(i, *v);
    }
    Ok((panel.with_values(out)?, params))
}

/// Inverse of [`normalize_panel`].
pub fn denormalize_panel(panel: &Panel, params: &NormalizationParams) -> Result<Panel> {
    let mut out = panel.values().to_owned();
    for ((i, _), v) in out.indexed_iter_mut() {
        *v = params.denormalize(i, *v);
    }
    panel.with_values(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn single(v: Vec<f64>) -> Panel {
        let n = v.len();
        Panel::from_values(vec!["a".into()], Array2::from_shape_vec((1, n), v).unwrap()).unwrap()
    }

    #[test]
    fn constant_series_uses_floor() {
        let (p, params) = normalize_panel(&single(vec![5.0; 6]), 6).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
        assert_eq!(params.mean[0], 5.0);
        assert_eq!(params.std[0], STD_FLOOR);
    }

    #[test]
    fn standardized_series_is_unchanged() {
        let v = vec![1.0, -1.0, 1.0, -1.0];
        let (p, _) = normalize_panel(&single(v.clone()), 4).unwrap();
        for (a, b) in p.values().iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_moments() {
        // mean 2.5, population variance (2.25+0.25+0.25+2.25)/4 = 1.25
        let (p, params) = normalize_panel(&single(vec![1.0, 2.0, 3.0, 4.0]), 4).unwrap();
        assert!((params.mean[0] - 2.5).abs() < 1e-15);
        assert!((params.std[0] - 1.25f64.sqrt()).abs() < 1e-15);
        assert!((params.std[0] - 1.118034).abs() < 1e-6);
        assert!((p.values()[[0, 0]] + 1.341641).abs() < 1e-6);
    }

    #[test]
    fn uses_training_range_and_mask_only() {
        let v = array![[1.0, 100.0, 3.0, 1000.0]];
        let m = array![[true, false, true, true]];
        let p = Panel::new(vec!["a".into()], vec![0, 1, 2, 3], v, m, None).unwrap();
        let (_, params) = normalize_panel(&p, 3).unwrap();
        assert_eq!(params.mean[0], 2.0);
        assert_eq!(params.std[0], 1.0);
    }

    #[test]
    fn degenerate_node_is_named() {
        let v = array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]];
        let m = array![[true, true, true], [true, false, false]];
        let p = Panel::new(vec!["ok".into(), "bad".into()], vec![0, 1, 2], v, m, None).unwrap();
        match normalize_panel(&p, 3) {
            Err(Error::DegenerateNode { node }) => assert_eq!(node, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn round_trip(vals in proptest::collection::vec(-1e3f64..1e3, 12), scale in 1e-3f64..1e3) {
            let v = Array2::from_shape_vec((3, 4), vals.iter().map(|x| x * scale).collect()).unwrap();
            let p = Panel::from_values(vec!["a".into(), "b".into(), "c".into()], v.clone()).unwrap();
            let (z, params) = normalize_panel(&p, 4).unwrap();
            let back = denormalize_panel(&z, &params).unwrap();
            for (a, b) in back.values().iter().zip(v.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(params.std.iter().cloned().fold(1.0, f64::max)));
            }
        }
    }
}
