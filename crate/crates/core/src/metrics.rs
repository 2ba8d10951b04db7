//! Tolerance-window matching, precision/recall/F1 and per-node comparisons.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::data::fmt_value;
use crate::error::{Error, Result};

/// Matching outcome for one node. Times are column indices of the flag
/// matrices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMatch {
    /// `(pred_t, true_t)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl NodeMatch {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.pairs.len(),
            fp: self.false_positives.len(),
            fn_: self.false_negatives.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tolerance: usize,
    pub nodes: Vec<NodeMatch>,
}

/// Size of a maximum one-to-one matching between sorted `pred` and `truth`
/// times under tolerance `w`. Taking, for each truth in time order, the
/// earliest still-unmatched prediction in its window is optimal in one
/// dimension.
pub fn max_match_count(pred: &[usize], truth: &[usize], w: usize) -> usize {
    let mut j = 0;
    let mut tp = 0;
    for &t in truth {
        while j < pred.len() && pred[j] + w < t {
            j += 1;
        }
        if j < pred.len() && pred[j] <= t + w {
            tp += 1;
            j += 1;
        }
    }
    tp
}

/// Matches predicted and true event times (each sorted, no duplicates).
///
/// Truths are visited in increasing time; each takes the nearest unmatched
/// prediction within `±w`, the earlier one on a distance tie. A nearest pick
/// that would lower the number of achievable matches is passed over for the
/// next-nearest candidate, so the result is always a maximum matching.
pub fn match_events(pred: &[usize], truth: &[usize], w: usize) -> NodeMatch {
    let greedy = nearest_greedy(pred, truth, w, None);
    let best = max_match_count(pred, truth, w);
    if greedy.pairs.len() == best {
        return greedy;
    }
    nearest_greedy(pred, truth, w, Some(best))
}

fn nearest_greedy(pred: &[usize], truth: &[usize], w: usize, target: Option<usize>) -> NodeMatch {
    let mut used = vec![false; pred.len()];
    let mut pairs = Vec::new();
    let mut false_negatives = Vec::new();
    for (k, &t) in truth.iter().enumerate() {
        let lo = pred.partition_point(|&p| p + w < t);
        let hi = pred.partition_point(|&p| p <= t + w);
        let mut cands: Vec<usize> = (lo..hi).filter(|&j| !used[j]).collect();
        cands.sort_by_key(|&j| (pred[j].abs_diff(t), pred[j]));
        let pick = match target {
            None => cands.first().copied(),
            Some(goal) => {
                let remaining = goal - pairs.len();
                let rest_pred = |skip: Option<usize>| -> Vec<usize> {
                    (0..pred.len())
                        .filter(|&j| !used[j] && Some(j) != skip)
                        .map(|j| pred[j])
                        .collect()
                };
                let feasible = |j: usize| 1 + max_match_count(&rest_pred(Some(j)), &truth[k + 1..], w) == remaining;
                match cands.iter().copied().find(|&j| feasible(j)) {
                    Some(j) => Some(j),
                    None => {
                        debug_assert_eq!(max_match_count(&rest_pred(None), &truth[k + 1..], w), remaining);
                        None
                    }
                }
            }
        };
        match pick {
            Some(j) => {
                used[j] = true;
                pairs.push((pred[j], t));
            }
            None => false_negatives.push(t),
        }
    }
    let false_positives = (0..pred.len()).filter(|&j| !used[j]).map(|j| pred[j]).collect();
    NodeMatch {
        pairs,
        false_positives,
        false_negatives,
    }
}

fn events(row: ndarray::ArrayView1<'_, bool>) -> Vec<usize> {
    row.iter().enumerate().filter(|(_, &b)| b).map(|(t, _)| t).collect()
}

/// Matches flag matrices node by node.
pub fn match_flags(pred: ArrayView2<'_, bool>, truth: ArrayView2<'_, bool>, w: usize) -> Result<MatchResult> {
    if pred.dim() != truth.dim() {
        return Err(Error::Shape(format!(
            "prediction flags {:?} and labels {:?} differ in shape",
            pred.dim(),
            truth.dim()
        )));
    }
    let nodes = pred
        .rows()
        .into_iter()
        .zip(truth.rows())
        .map(|(p, t)| match_events(&events(p), &events(t), w))
        .collect();
    Ok(MatchResult { tolerance: w, nodes })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Counts {
    /// Precision, recall and F1. With no predictions and no truths all three
    /// are 1; otherwise an empty denominator gives 0.
    pub fn prf(&self) -> Prf {
        let vacuous = self.tp + self.fp == 0 && self.tp + self.fn_ == 0;
        if vacuous {
            return Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        // 2TP / (2TP + FP + FN) equals the harmonic mean and is exact for equal ratios
        let f1 = ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_);
        Prf { precision, recall, f1 }
    }
}

/// Harmonic mean with `0/0 → 0`.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub node_id: String,
    pub counts: Counts,
    pub prf: Prf,
}

/// Per-node and micro-aggregated scores of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub model: String,
    pub tolerance: usize,
    pub nodes: Vec<NodeScore>,
    pub micro_counts: Counts,
    pub micro: Prf,
}

impl ScoreTable {
    pub fn f1_by_node(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.prf.f1).collect()
    }

    /// Per-node CSV: `node_id,tp,fp,fn,precision,recall,f1`, with a final
    /// `__micro__` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["node_id", "tp", "fp", "fn", "precision", "recall", "f1"])
            .map_err(|e| csv_err(path, e))?;
        let micro = NodeScore {
            node_id: "__micro__".into(),
            counts: self.micro_counts,
            prf: self.micro,
        };
        for n in self.nodes.iter().chain(std::iter::once(&micro)) {
            w.write_record([
                n.node_id.clone(),
                n.counts.tp.to_string(),
                n.counts.fp.to_string(),
                n.counts.fn_.to_string(),
                fmt_value(n.prf.precision),
                fmt_value(n.prf.recall),
                fmt_value(n.prf.f1),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path.display().to_string(), e.to_string())
}

/// Scores a match result. Nodes with neither predictions nor truths score 1
/// individually and add nothing to the micro counts.
pub fn score(model: &str, node_ids: &[String], matches: &MatchResult) -> Result<ScoreTable> {
    if node_ids.len() != matches.nodes.len() {
        return Err(Error::Shape(format!(
            "{} node ids for {} matched nodes",
            node_ids.len(),
            matches.nodes.len()
        )));
    }
    let nodes: Vec<NodeScore> = node_ids
        .iter()
        .zip(&matches.nodes)
        .map(|(id, m)| {
            let counts = m.counts();
            NodeScore {
                node_id: id.clone(),
                counts,
                prf: counts.prf(),
            }
        })
        .collect();
    let micro_counts = nodes.iter().fold(Counts::default(), |a, n| a + n.counts);
    Ok(ScoreTable {
        model: model.to_string(),
        tolerance: matches.tolerance,
        micro: micro_counts.prf(),
        micro_counts,
        nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRecord {
    pub node_id: String,
    pub degree: usize,
    pub delta_f1: f64,
}

/// `F1_a − F1_b` per node, paired with node degree.
pub fn degree_improvement(a: &ScoreTable, b: &ScoreTable, degrees: &[usize]) -> Result<Vec<DegreeRecord>> {
    if a.nodes.len() != b.nodes.len() || a.nodes.len() != degrees.len() {
        return Err(Error::Shape("score tables and degrees cover different node sets".into()));
    }
    a.nodes
        .iter()
        .zip(&b.nodes)
        .zip(degrees)
        .map(|((x, y), &degree)| {
            if x.node_id != y.node_id {
                return Err(Error::UnknownNode(y.node_id.clone()));
            }
            Ok(DegreeRecord {
                node_id: x.node_id.clone(),
                degree,
                delta_f1: x.prf.f1 - y.prf.f1,
            })
        })
        .collect()
}

/// Share of records with `ΔF1 ≥ 0`.
pub fn fraction_improved(records: &[DegreeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.delta_f1 >= 0.0).count() as f64 / records.len() as f64
}

pub fn write_degree_csv(path: &Path, records: &[DegreeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["node_id", "degree", "delta_f1"]).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([r.node_id.clone(), r.degree.to_string(), fmt_value(r.delta_f1)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One table row: a model and its micro scores on each dataset column.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub scores: Vec<Prf>,
}

/// Plain-text results table: one row per model, a Precision/Recall/F1 group
/// per dataset, two decimals, and the best value of each column marked `*`.
pub fn format_table(datasets: &[String], rows: &[TableRow]) -> String {
    let name_w = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let cell = 10;
    let mut best = vec![f64::NEG_INFINITY; 3 * datasets.len()];
    for r in rows {
        for (d, s) in r.scores.iter().enumerate() {
            for (k, v) in [s.precision, s.recall, s.f1].into_iter().enumerate() {
                let v = round2(v);
                if v > best[3 * d + k] {
                    best[3 * d + k] = v;
                }
            }
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:name_w$}", "");
    for d in datasets {
        let _ = write!(out, " | {:^w$}", d, w = 3 * cell + 2);
    }
    out.push('\n');
    let _ = write!(out, "{:name_w$}", "Model");
    for _ in datasets {
        let _ = write!(out, " | {:>cell$} {:>cell$} {:>cell$}", "Precision", "Recall", "F1");
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_w + datasets.len() * (3 * cell + 5)));
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:name_w$}", r.model);
        for (d, s) in r.scores.iter().enumerate() {
            out.push_str(" |");
            for (k, v) in [s.precision, s.recall, s.f1].into_iter().enumerate() {
                let mark = if round2(v) == best[3 * d + k] && rows.len() > 1 { "*" } else { " " };
                let _ = write!(out, " {:>w$}{mark}", format!("{v:.2}"), w = cell - 1);
            }
        }
        out.push('\n');
    }
    out
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use ndarray::Array2;

    /// Exhaustive maximum matching by recursion over truths.
    fn brute_force_max(pred: &[usize], truth: &[usize], w: usize) -> usize {
        fn go(k: usize, used: &mut Vec<bool>, pred: &[usize], truth: &[usize], w: usize) -> usize {
            if k == truth.len() {
                return 0;
            }
            let mut best = go(k + 1, used, pred, truth, w);
            for j in 0..pred.len() {
                if !used[j] && pred[j].abs_diff(truth[k]) <= w {
                    used[j] = true;
                    best = best.max(1 + go(k + 1, used, pred, truth, w));
                    used[j] = false;
                }
            }
            best
        }
        go(0, &mut vec![false; pred.len()], pred, truth, w)
    }

    fn random_events(rng: &mut SeededRng, horizon: usize, max: usize) -> Vec<usize> {
        let k = rng.index(max + 1);
        let mut v = rng.sample_indices(horizon, k.min(horizon));
        v.sort_unstable();
        v
    }

    #[test]
    fn spec_examples() {
        let m = match_events(&[5], &[5], 0);
        assert_eq!(m.counts(), Counts { tp: 1, fp: 0, fn_: 0 });
        assert_eq!(match_events(&[4], &[5], 1).counts().tp, 1);
        let m = match_events(&[4, 6], &[5], 1);
        assert_eq!(m.pairs, vec![(4, 5)]);
        assert_eq!(m.false_positives, vec![6]);
    }

    #[test]
    fn nearest_pick_is_repaired_when_it_costs_a_match() {
        // nearest for truth 5 is 6, which would strand truth 7
        let m = match_events(&[3, 6], &[5, 7], 2);
        assert_eq!(m.pairs, vec![(3, 5), (6, 7)]);
        // nearest is kept whenever it is harmless
        let m = match_events(&[3, 6], &[5], 2);
        assert_eq!(m.pairs, vec![(6, 5)]);
    }

    #[test]
    fn greedy_equals_brute_force_maximum() {
        let mut rng = SeededRng::new(17);
        for _ in 0..1000 {
            let w = rng.index(4);
            let pred = random_events(&mut rng, 30, 10);
            let truth = random_events(&mut rng, 30, 10);
            let m = match_events(&pred, &truth, w);
            let expect = brute_force_max(&pred, &truth, w);
            assert_eq!(m.pairs.len(), expect, "pred {pred:?} truth {truth:?} w {w}");
            assert_eq!(max_match_count(&pred, &truth, w), expect);
            assert!(m.pairs.iter().all(|(p, t)| p.abs_diff(*t) <= w));
            let mut ps: Vec<usize> = m.pairs.iter().map(|p| p.0).collect();
            ps.dedup();
            assert_eq!(ps.len(), m.pairs.len());
            assert!(m.pairs.len() <= pred.len().min(truth.len()));
            assert_eq!(m.pairs.len() + m.false_positives.len(), pred.len());
            assert_eq!(m.pairs.len() + m.false_negatives.len(), truth.len());
        }
    }

    #[test]
    fn score_arithmetic() {
        let c = Counts { tp: 8, fp: 2, fn_: 2 };
        let s = c.prf();
        assert!((s.precision - 0.8).abs() < 1e-15 && (s.recall - 0.8).abs() < 1e-15 && (s.f1 - 0.8).abs() < 1e-15);
        let s = Counts { tp: 0, fp: 0, fn_: 3 }.prf();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = Counts::default().prf();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn reported_table_rows_are_consistent() {
        // (P, R, printed F1) for every row of the published results table
        let rows = [
            (0.85, 0.80, 0.82),
            (0.88, 0.82, 0.85),
            (0.80, 0.75, 0.77),
            (0.83, 0.78, 0.80),
            (0.60, 0.50, 0.55),
            (0.65, 0.50, 0.57),
            (0.55, 0.62, 0.58),
            (0.60, 0.55, 0.57),
        ];
        for (p, r, printed) in rows {
            assert_eq!(format!("{:.2}", f1(p, r)), format!("{printed:.2}"), "P={p} R={r}");
        }
        // counts engineered to P = 0.85, R = 0.80
        let s = Counts { tp: 68, fp: 12, fn_: 17 }.prf();
        assert!((s.precision - 0.85).abs() < 1e-12 && (s.recall - 0.80).abs() < 1e-12);
        assert!((s.f1 - 0.824242).abs() < 1e-6);
        assert_eq!(format!("{:.2}", s.f1), "0.82");
    }

    #[test]
    fn micro_counts_sum_and_symmetry() {
        let mut rng = SeededRng::new(5);
        let pred = Array2::from_shape_fn((4, 40), |_| rng.uniform() < 0.15);
        let truth = Array2::from_shape_fn((4, 40), |_| rng.uniform() < 0.1);
        let ids: Vec<String> = (0..4).map(|i| format!("n{i}")).collect();
        let a = score("m", &ids, &match_flags(pred.view(), truth.view(), 2).unwrap()).unwrap();
        let b = score("m", &ids, &match_flags(truth.view(), pred.view(), 2).unwrap()).unwrap();
        let sum = a.nodes.iter().fold(Counts::default(), |s, n| s + n.counts);
        assert_eq!(sum, a.micro_counts);
        assert_eq!(a.micro.precision, b.micro.recall);
        assert_eq!(a.micro.recall, b.micro.precision);
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            assert_eq!(x.prf.precision, y.prf.recall);
        }
    }

    #[test]
    fn vacuous_node_adds_nothing_to_micro() {
        let pred = ndarray::array![[true, false], [false, false]];
        let truth = ndarray::array![[true, false], [false, false]];
        let ids = vec!["a".to_string(), "b".to_string()];
        let t = score("m", &ids, &match_flags(pred.view(), truth.view(), 0).unwrap()).unwrap();
        assert_eq!(t.nodes[1].prf.f1, 1.0);
        assert_eq!(t.micro_counts, Counts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn degree_records() {
        let pred = Array2::from_elem((3, 5), false);
        let ids: Vec<String> = (0..3).map(|i| format!("n{i}")).collect();
        let t = score("m", &ids, &match_flags(pred.view(), pred.view(), 0).unwrap()).unwrap();
        let rec = degree_improvement(&t, &t, &[0, 2, 1]).unwrap();
        assert_eq!(rec.len(), 3);
        assert!(rec.iter().all(|r| r.delta_f1 == 0.0));
        assert_eq!(rec[0].degree, 0);
        assert_eq!(fraction_improved(&rec), 1.0);
        assert!(degree_improvement(&t, &t, &[0]).is_err());
    }

    #[test]
    fn text_table_layout() {
        let rows = vec![
            TableRow {
                model: "Graph-LSTM".into(),
                scores: vec![Prf { precision: 0.85, recall: 0.8, f1: f1(0.85, 0.8) }],
            },
            TableRow {
                model: "ARIMA".into(),
                scores: vec![Prf { precision: 0.6, recall: 0.5, f1: f1(0.6, 0.5) }],
            },
        ];
        let s = format_table(&["synthetic".into()], &rows);
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[1].contains("Precision") && lines[1].contains("Recall") && lines[1].contains("F1"));
        assert!(lines[3].starts_with("Graph-LSTM") && lines[3].contains("0.82*"));
        assert!(lines[4].contains("0.55 "));
    }
}
