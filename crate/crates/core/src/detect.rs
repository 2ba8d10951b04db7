//! Residuals, per-node threshold sweeps and flagging.

use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::fmt_value;
use crate::error::{Error, Result};
use crate::forecast::ForecastSet;
use crate::metrics::{csv_err, max_match_count, Counts};
use crate::panel::Panel;

/// Smallest threshold ever returned.
pub const TAU_MIN: f64 = 1e-6;
/// Margin above the largest residual for the "no alarms" candidate.
pub const TAU_EPS: f64 = 1e-6;

/// Absolute one-step errors over a time range.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    pub range: Range<usize>,
    /// `[n_nodes, range.len()]`; zero where invalid.
    pub values: Array2<f64>,
    /// True where the observation exists.
    pub valid: Array2<bool>,
}

impl ResidualSet {
    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    /// Restriction to a sub-range of times.
    pub fn slice(&self, range: Range<usize>) -> Result<ResidualSet> {
        if range.start < self.range.start || range.end > self.range.end {
            return Err(Error::Coverage(format!("{range:?} not inside {:?}", self.range)));
        }
        let (a, b) = (range.start - self.range.start, range.end - self.range.start);
        Ok(ResidualSet {
            range,
            values: self.values.slice(ndarray::s![.., a..b]).to_owned(),
            valid: self.valid.slice(ndarray::s![.., a..b]).to_owned(),
        })
    }
}

/// `|y − ŷ|` at observed positions of `range`.
pub fn residuals(panel: &Panel, forecasts: &ForecastSet, range: Range<usize>) -> Result<ResidualSet> {
    if forecasts.range != range {
        return Err(Error::Coverage(format!(
            "forecasts cover {:?}, residuals requested for {range:?}",
            forecasts.range
        )));
    }
    if forecasts.n_nodes() != panel.n_nodes() || range.end > panel.len() {
        return Err(Error::Coverage("forecasts and panel disagree on nodes or length".into()));
    }
    let len = range.len();
    let valid = Array2::from_shape_fn((panel.n_nodes(), len), |(i, k)| panel.is_observed(i, range.start + k));
    let values = Array2::from_shape_fn((panel.n_nodes(), len), |(i, k)| {
        if valid[[i, k]] {
            (panel.values()[[i, range.start + k]] - forecasts.values[[i, k]]).abs()
        } else {
            0.0
        }
    });
    Ok(ResidualSet { range, values, valid })
}

/// Where a node's threshold came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdSource {
    /// Swept on the node's own validation residuals.
    Node,
    /// Pooled threshold used because the node had no validation anomalies.
    Global,
    /// No anomalies and no fallback: set above every residual.
    NoAlarms,
    /// Read from a thresholds file.
    Imported,
}

/// How nodes without validation anomalies get a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    #[default]
    Global,
    None,
}

/// Whether every node gets its own sweep or all share one pooled threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdScope {
    #[default]
    PerNode,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMap {
    pub node_ids: Vec<String>,
    pub tau: Vec<f64>,
    /// Best validation F1 reached by the sweep that produced each τ.
    pub val_f1: Vec<f64>,
    pub n_candidates: Vec<usize>,
    pub source: Vec<ThresholdSource>,
}

impl ThresholdMap {
    /// Export as `node_id,threshold,val_f1`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["node_id", "threshold", "val_f1"]).map_err(|e| csv_err(path, e))?;
        for ((id, t), f) in self.node_ids.iter().zip(&self.tau).zip(&self.val_f1) {
            w.write_record([id.clone(), fmt_value(*t), fmt_value(*f)])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a `node_id,threshold,val_f1` file and orders it like `node_ids`.
    pub fn read_csv(path: &Path, node_ids: &[String]) -> Result<Self> {
        let file = path.display().to_string();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["node_id", "threshold", "val_f1"] {
            return Err(Error::format(&file, "expected header node_id,threshold,val_f1"));
        }
        let mut found: Vec<Option<(f64, f64)>> = vec![None; node_ids.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let id = &rec[0];
            let i = node_ids
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::UnknownNode(id.to_string()))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(&file, format!("row {}: bad number `{s}`", line + 2)))
            };
            let tau = parse(&rec[1])?;
            if !(tau > 0.0) {
                return Err(Error::format(&file, format!("row {}: threshold must be positive", line + 2)));
            }
            found[i] = Some((tau, parse(&rec[2])?));
        }
        let mut tau = Vec::with_capacity(node_ids.len());
        let mut val_f1 = Vec::with_capacity(node_ids.len());
        for (id, f) in node_ids.iter().zip(found) {
            let (t, f) = f.ok_or_else(|| Error::format(&file, format!("no threshold for node `{id}`")))?;
            tau.push(t);
            val_f1.push(f);
        }
        Ok(Self {
            node_ids: node_ids.to_vec(),
            n_candidates: vec![0; tau.len()],
            source: vec![ThresholdSource::Imported; tau.len()],
            tau,
            val_f1,
        })
    }
}

/// Candidate thresholds for a bag of residuals: `TAU_MIN`, midpoints between
/// consecutive distinct values, and `max + ε`, ascending, floored at
/// `TAU_MIN`.
pub fn candidates(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mut c = vec![TAU_MIN];
    c.extend(v.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    if let Some(&m) = v.last() {
        c.push(m + TAU_EPS);
    }
    let mut c: Vec<f64> = c.into_iter().map(|x| x.max(TAU_MIN)).collect();
    c.dedup();
    c
}

fn node_events(res: &ResidualSet, labels: ArrayView2<'_, bool>, i: usize) -> (Vec<(usize, f64)>, Vec<usize>) {
    let obs: Vec<(usize, f64)> = (0..res.range.len())
        .filter(|&k| res.valid[[i, k]])
        .map(|k| (k, res.values[[i, k]]))
        .collect();
    let truth = (0..res.range.len()).filter(|&k| labels[[i, k]]).collect();
    (obs, truth)
}

fn counts_at(obs: &[(usize, f64)], truth: &[usize], tau: f64, w: usize) -> Counts {
    let pred: Vec<usize> = obs.iter().filter(|(_, e)| *e > tau).map(|(k, _)| *k).collect();
    let tp = max_match_count(&pred, truth, w);
    Counts {
        tp,
        fp: pred.len() - tp,
        fn_: truth.len() - tp,
    }
}

/// Best threshold over `cands` for the summed counts of several nodes;
/// ties go to the larger threshold.
fn sweep(nodes: &[(Vec<(usize, f64)>, Vec<usize>)], cands: &[f64], w: usize) -> (f64, f64) {
    let mut best = (cands[0], f64::NEG_INFINITY);
    for &tau in cands {
        let c = nodes
            .iter()
            .fold(Counts::default(), |acc, (obs, truth)| acc + counts_at(obs, truth, tau, w));
        let f = c.prf().f1;
        if f >= best.1 {
            best = (tau, f);
        }
    }
    best
}

/// Per-node F1-maximizing thresholds on validation residuals.
///
/// `labels` has the same shape as `res`. Nodes without any labeled anomaly
/// use the pooled threshold (tuned on all nodes together) or, with
/// `Fallback::None`, a threshold just above their largest residual.
pub fn sweep_thresholds(
    res: &ResidualSet,
    labels: ArrayView2<'_, bool>,
    node_ids: &[String],
    w: usize,
    fallback: Fallback,
    scope: ThresholdScope,
) -> Result<ThresholdMap> {
    if labels.dim() != res.values.dim() || node_ids.len() != res.n_nodes() {
        return Err(Error::Shape("labels, residuals and node ids disagree".into()));
    }
    let per_node: Vec<_> = (0..res.n_nodes()).map(|i| node_events(res, labels, i)).collect();
    for (i, (obs, _)) in per_node.iter().enumerate() {
        if obs.is_empty() {
            return Err(Error::EmptyValidation(node_ids[i].clone()));
        }
    }
    let pooled_cands = || candidates(per_node.iter().flat_map(|(o, _)| o.iter().map(|x| x.1)));
    let mut pooled: Option<(f64, f64, usize)> = None;
    let mut get_pooled = || {
        *pooled.get_or_insert_with(|| {
            let c = pooled_cands();
            let (t, f) = sweep(&per_node, &c, w);
            (t, f, c.len())
        })
    };
    let n = res.n_nodes();
    let mut map = ThresholdMap {
        node_ids: node_ids.to_vec(),
        tau: Vec::with_capacity(n),
        val_f1: Vec::with_capacity(n),
        n_candidates: Vec::with_capacity(n),
        source: Vec::with_capacity(n),
    };
    for (obs, truth) in &per_node {
        let (tau, f, nc, src) = if scope == ThresholdScope::Global {
            let (t, f, nc) = get_pooled();
            (t, f, nc, ThresholdSource::Global)
        } else if !truth.is_empty() {
            let c = candidates(obs.iter().map(|x| x.1));
            let (t, f) = sweep(&[(obs.clone(), truth.clone())], &c, w);
            (t, f, c.len(), ThresholdSource::Node)
        } else {
            match fallback {
                Fallback::Global => {
                    let (t, f, nc) = get_pooled();
                    (t, f, nc, ThresholdSource::Global)
                }
                Fallback::None => {
                    let m = obs.iter().map(|x| x.1).fold(0.0, f64::max);
                    ((m + TAU_EPS).max(TAU_MIN), 1.0, 1, ThresholdSource::NoAlarms)
                }
            }
        };
        map.tau.push(tau);
        map.val_f1.push(f);
        map.n_candidates.push(nc);
        map.source.push(src);
    }
    Ok(map)
}

/// `e > τ_i` at valid positions.
pub fn flag(res: &ResidualSet, thresholds: &ThresholdMap) -> Result<Array2<bool>> {
    if thresholds.tau.len() != res.n_nodes() {
        return Err(Error::Shape(format!(
            "{} thresholds for {} nodes",
            thresholds.tau.len(),
            res.n_nodes()
        )));
    }
    Ok(Array2::from_shape_fn(res.values.dim(), |(i, k)| {
        res.valid[[i, k]] && res.values[[i, k]] > thresholds.tau[i]
    }))
}

/// `|y − ŷ| > half-width` at observed positions.
pub fn interval_flag(panel: &Panel, forecasts: &ForecastSet) -> Result<Array2<bool>> {
    let hw = forecasts.half_widths.as_ref().ok_or(Error::MissingHalfWidths)?;
    let res = residuals(panel, forecasts, forecasts.range.clone())?;
    Ok(Array2::from_shape_fn(res.values.dim(), |(i, k)| {
        res.valid[[i, k]] && res.values[[i, k]] > hw[[i, k]]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::match_events;
    use crate::rng::SeededRng;
    use ndarray::{array, Array2};

    fn res_from(values: Array2<f64>) -> ResidualSet {
        let valid = Array2::from_elem(values.dim(), true);
        ResidualSet {
            range: 0..values.ncols(),
            values,
            valid,
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn f1_for(res: &[f64], labels: &[bool], tau: f64, w: usize) -> f64 {
        let pred: Vec<usize> = (0..res.len()).filter(|&k| res[k] > tau).collect();
        let truth: Vec<usize> = (0..res.len()).filter(|&k| labels[k]).collect();
        let m = match_events(&pred, &truth, w);
        m.counts().prf().f1
    }

    #[test]
    fn residual_examples() {
        let p = Panel::from_values(vec!["a".into()], array![[5.0, 1.0, 2.0]]).unwrap();
        let f = ForecastSet::new(1..3, array![[3.0, 2.0]], None).unwrap();
        let r = residuals(&p, &f, 1..3).unwrap();
        assert_eq!(r.values, array![[2.0, 0.0]]);
        let same = ForecastSet::new(0..3, array![[5.0, 1.0, 2.0]], None).unwrap();
        assert!(residuals(&p, &same, 0..3).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(matches!(residuals(&p, &f, 0..3), Err(Error::Coverage(_))));
        // swapping roles of y and ŷ
        let p2 = Panel::from_values(vec!["a".into()], array![[5.0, 3.0, 2.0]]).unwrap();
        let f2 = ForecastSet::new(1..3, array![[1.0, 2.0]], None).unwrap();
        assert_eq!(residuals(&p2, &f2, 1..3).unwrap().values, array![[2.0, 0.0]]);
    }

    #[test]
    fn missing_positions_are_invalid() {
        let m = array![[true, false, true]];
        let p = Panel::new(vec!["a".into()], vec![0, 1, 2], array![[1.0, 9.0, 1.0]], m, None).unwrap();
        let f = ForecastSet::new(0..3, array![[0.0, 0.0, 0.0]], None).unwrap();
        let r = residuals(&p, &f, 0..3).unwrap();
        assert!(!r.valid[[0, 1]]);
        let t = ThresholdMap {
            node_ids: ids(1),
            tau: vec![0.5],
            val_f1: vec![0.0],
            n_candidates: vec![0],
            source: vec![ThresholdSource::Node],
        };
        assert_eq!(flag(&r, &t).unwrap(), array![[true, false, true]]);
    }

    #[test]
    fn midpoint_example() {
        let r = res_from(array![[0.1, 0.9, 0.2, 0.8]]);
        let labels = array![[false, true, false, true]];
        let t = sweep_thresholds(&r, labels.view(), &ids(1), 0, Fallback::Global, ThresholdScope::PerNode).unwrap();
        assert!((t.tau[0] - 0.5).abs() < 1e-12);
        assert_eq!(t.val_f1[0], 1.0);
        assert_eq!(t.source[0], ThresholdSource::Node);
    }

    #[test]
    fn no_anomalies_without_fallback_raises_no_alarms() {
        let r = res_from(array![[0.1, 0.9, 0.2]]);
        let labels = Array2::from_elem((1, 3), false);
        let t = sweep_thresholds(&r, labels.view(), &ids(1), 0, Fallback::None, ThresholdScope::PerNode).unwrap();
        assert!((t.tau[0] - (0.9 + TAU_EPS)).abs() < 1e-15);
        assert!(!flag(&r, &t).unwrap().iter().any(|&b| b));
    }

    #[test]
    fn all_anomalous_flags_everything() {
        let r = res_from(array![[0.3, 0.5, 0.4]]);
        let labels = Array2::from_elem((1, 3), true);
        let t = sweep_thresholds(&r, labels.view(), &ids(1), 0, Fallback::None, ThresholdScope::PerNode).unwrap();
        assert_eq!(t.tau[0], TAU_MIN);
        assert_eq!(t.val_f1[0], 1.0);
        assert!(flag(&r, &t).unwrap().iter().all(|&b| b));
    }

    #[test]
    fn node_without_anomalies_uses_pooled_threshold() {
        let r = res_from(array![[0.1, 0.9, 0.2, 0.8], [0.1, 0.3, 0.2, 0.6]]);
        let labels = array![[false, true, false, true], [false, false, false, false]];
        let t = sweep_thresholds(&r, labels.view(), &ids(2), 0, Fallback::Global, ThresholdScope::PerNode).unwrap();
        assert_eq!(t.source[1], ThresholdSource::Global);
        // pooled sweep: τ between 0.6 and 0.8 is the only perfect choice
        assert!((t.tau[1] - 0.7).abs() < 1e-12);
        let g = sweep_thresholds(&r, labels.view(), &ids(2), 0, Fallback::Global, ThresholdScope::Global).unwrap();
        assert_eq!(g.tau[0], g.tau[1]);
    }

    #[test]
    fn empty_validation_is_an_error() {
        let r = ResidualSet {
            range: 0..2,
            values: Array2::zeros((1, 2)),
            valid: Array2::from_elem((1, 2), false),
        };
        let l = Array2::from_elem((1, 2), false);
        assert!(matches!(
            sweep_thresholds(&r, l.view(), &ids(1), 0, Fallback::Global, ThresholdScope::PerNode),
            Err(Error::EmptyValidation(_))
        ));
    }

    #[test]
    fn strict_boundary_and_zero_residuals() {
        let r = res_from(array![[0.5, 0.0, 0.7]]);
        let t = ThresholdMap {
            node_ids: ids(1),
            tau: vec![0.5],
            val_f1: vec![0.0],
            n_candidates: vec![0],
            source: vec![ThresholdSource::Node],
        };
        assert_eq!(flag(&r, &t).unwrap(), array![[false, false, true]]);
        assert!(!flag(&res_from(Array2::zeros((1, 4))), &t).unwrap().iter().any(|&b| b));
    }

    #[test]
    fn flags_match_elementwise_oracle_and_are_monotone() {
        let mut rng = SeededRng::new(21);
        for _ in 0..50 {
            let r = res_from(Array2::from_shape_fn((3, 30), |_| rng.uniform()));
            let tau: Vec<f64> = (0..3).map(|_| rng.uniform()).collect();
            let t = ThresholdMap {
                node_ids: ids(3),
                tau: tau.clone(),
                val_f1: vec![0.0; 3],
                n_candidates: vec![0; 3],
                source: vec![ThresholdSource::Node; 3],
            };
            let f = flag(&r, &t).unwrap();
            for i in 0..3 {
                for k in 0..30 {
                    assert_eq!(f[[i, k]], r.values[[i, k]] > tau[i]);
                }
            }
            let mut up = t.clone();
            up.tau[1] += 0.1;
            let g = flag(&r, &up).unwrap();
            let count = |m: &Array2<bool>| m.row(1).iter().filter(|&&b| b).count();
            assert!(count(&g) <= count(&f));
        }
    }

    #[test]
    fn sweep_is_optimal_over_candidates_and_all_thresholds() {
        let mut rng = SeededRng::new(33);
        for case in 0..200 {
            let n = 3 + rng.index(10);
            let w = rng.index(3);
            // coarse values force ties between residuals
            let res: Vec<f64> = (0..n).map(|_| (rng.uniform() * 8.0).floor() / 8.0 + 0.01).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.3).collect();
            labels[rng.index(n)] = true;
            let r = res_from(Array2::from_shape_vec((1, n), res.clone()).unwrap());
            let l = Array2::from_shape_vec((1, n), labels.clone()).unwrap();
            let t = sweep_thresholds(&r, l.view(), &ids(1), w, Fallback::None, ThresholdScope::PerNode).unwrap();
            let got = f1_for(&res, &labels, t.tau[0], w);
            assert!((got - t.val_f1[0]).abs() < 1e-12);
            for c in candidates(res.iter().copied()) {
                assert!(got >= f1_for(&res, &labels, c, w) - 1e-12, "case {case}");
            }
            // every distinct flag set is reached by some threshold in this grid
            for k in 0..=2000 {
                let tau = k as f64 / 2000.0 * 1.2;
                assert!(got >= f1_for(&res, &labels, tau, w) - 1e-12, "case {case} tau {tau}");
            }
            // ties resolve to the largest optimal candidate
            let best_larger = candidates(res.iter().copied())
                .into_iter()
                .filter(|&c| c > t.tau[0])
                .any(|c| (f1_for(&res, &labels, c, w) - got).abs() < 1e-12);
            assert!(!best_larger, "case {case}");
        }
    }

    #[test]
    fn interval_rule() {
        let p = Panel::from_values(vec!["a".into()], array![[1.0, 2.0, 0.0, 5.0]]).unwrap();
        let f = ForecastSet::new(0..4, array![[1.0, 1.0, 0.0, 0.0]], Some(array![[0.5, 1.0, 0.0, 4.0]])).unwrap();
        assert_eq!(interval_flag(&p, &f).unwrap(), array![[false, false, false, true]]);
        let bare = ForecastSet::new(0..4, array![[1.0, 1.0, 0.0, 0.0]], None).unwrap();
        assert!(matches!(interval_flag(&p, &bare), Err(Error::MissingHalfWidths)));
    }

    #[test]
    fn thresholds_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("thresholds.csv");
        let t = ThresholdMap {
            node_ids: ids(2),
            tau: vec![0.5, 1.25],
            val_f1: vec![1.0, 0.5],
            n_candidates: vec![3, 4],
            source: vec![ThresholdSource::Node, ThresholdSource::Global],
        };
        t.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("node_id,threshold,val_f1\nn0,0.5,1\n"));
        let back = ThresholdMap::read_csv(&path, &ids(2)).unwrap();
        assert_eq!(back.tau, t.tau);
        assert_eq!(back.val_f1, t.val_f1);
        assert!(ThresholdMap::read_csv(&path, &ids(3)).is_err());
    }
}
