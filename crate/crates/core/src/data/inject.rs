use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::rng::SeededRng;

/// How an injected event changes a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DropMode {
    /// `y ← f·y` with `f ∈ [0, 1)`.
    Multiply { factor: f64 },
    /// `y ← y − k·std(node)`, the node's standard deviation over all its
    /// observed values before injection.
    Subtract { k: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InjectionSpec {
    /// Number of nodes hit; `None` means `ceil(affected_fraction · n_nodes)`.
    pub n_affected_nodes: Option<usize>,
    pub affected_fraction: f64,
    pub events_per_node: usize,
    pub drop: DropMode,
    /// Steps per event.
    pub duration: usize,
    /// Minimum distance between event starts on one node.
    pub min_separation: usize,
    pub seed: u64,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        Self {
            n_affected_nodes: None,
            affected_fraction: 0.2,
            events_per_node: 2,
            drop: DropMode::Multiply { factor: 0.2 },
            duration: 1,
            min_separation: 50,
            seed: 0,
        }
    }
}

impl InjectionSpec {
    pub fn affected_nodes(&self, n_nodes: usize) -> usize {
        self.n_affected_nodes
            .unwrap_or_else(|| (self.affected_fraction * n_nodes as f64 - 1e-9).ceil().max(0.0) as usize)
            .min(n_nodes)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.affected_fraction) {
            return Err(Error::Config("affected_fraction must lie in [0, 1]".into()));
        }
        if self.duration == 0 {
            return Err(Error::Config("event duration must be at least 1".into()));
        }
        if self.min_separation < self.duration {
            return Err(Error::Config("min_separation must be at least the event duration".into()));
        }
        match self.drop {
            DropMode::Multiply { factor } if !(0.0..1.0).contains(&factor) => {
                Err(Error::Config(format!("multiply factor {factor} outside [0, 1)")))
            }
            DropMode::Subtract { k } if !(k.is_finite() && k > 0.0) => {
                Err(Error::Config(format!("subtract multiplier {k} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

fn population_std(panel: &Panel, node: usize) -> f64 {
    let obs: Vec<f64> = (0..panel.len())
        .filter(|&t| panel.is_observed(node, t))
        .map(|t| panel.values()[[node, t]])
        .collect();
    if obs.is_empty() {
        return 0.0;
    }
    let n = obs.len() as f64;
    let m = obs.iter().sum::<f64>() / n;
    (obs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

/// Uniform draw of `e` sorted event starts in `[0, len − duration]` with
/// consecutive starts at least `sep` apart.
fn draw_starts(rng: &mut SeededRng, len: usize, e: usize, duration: usize, sep: usize) -> Vec<usize> {
    // gaps beyond the mandatory spacing are a uniform multiset
    let slack = len - duration - (e - 1) * sep;
    let mut picks = rng.sample_indices(slack + e, e);
    picks.sort_unstable();
    picks.iter().enumerate().map(|(k, &p)| p - k + k * sep).collect()
}

/// Injects drop events into `range`. Affected nodes and event starts are
/// seeded draws; every event cell is transformed and labeled. Cells that are
/// unobserved stay untouched and unlabeled.
pub fn inject_anomalies(panel: &Panel, spec: &InjectionSpec, range: Range<usize>) -> Result<Panel> {
    spec.validate()?;
    if range.end > panel.len() {
        return Err(Error::Infeasible(format!("range {range:?} beyond panel length {}", panel.len())));
    }
    let e = spec.events_per_node;
    let n_aff = spec.affected_nodes(panel.n_nodes());
    if e == 0 || n_aff == 0 {
        return Ok(panel.clone());
    }
    let need = (e - 1) * spec.min_separation + spec.duration;
    if range.len() < need {
        return Err(Error::Infeasible(format!(
            "{e} events of length {} with separation {} need {need} steps, range has {}",
            spec.duration,
            spec.min_separation,
            range.len()
        )));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut nodes = rng.sample_indices(panel.n_nodes(), n_aff);
    nodes.sort_unstable();
    let mut values = panel.values().to_owned();
    let mut labels = panel.labels_or_empty();
    for &i in &nodes {
        let std = population_std(panel, i);
        for s in draw_starts(&mut rng, range.len(), e, spec.duration, spec.min_separation) {
            for t in range.start + s..range.start + s + spec.duration {
                if !panel.is_observed(i, t) {
                    continue;
                }
                let v = &mut values[[i, t]];
                *v = match spec.drop {
                    DropMode::Multiply { factor } => factor * *v,
                    DropMode::Subtract { k } => *v - k * std,
                };
                labels[[i, t]] = true;
            }
        }
    }
    panel.with_values(values)?.with_labels(Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn panel(n: usize, t: usize, seed: u64) -> Panel {
        let mut rng = SeededRng::new(seed);
        let ids = (0..n).map(|i| format!("n{i}")).collect();
        Panel::from_values(ids, Array2::from_shape_fn((n, t), |_| 10.0 + rng.normal())).unwrap()
    }

    fn changed(a: &Panel, b: &Panel) -> usize {
        a.values().iter().zip(b.values().iter()).filter(|(x, y)| x != y).count()
    }

    #[test]
    fn zero_factor_zeroes_values() {
        let p = panel(5, 300, 1);
        let spec = InjectionSpec {
            drop: DropMode::Multiply { factor: 0.0 },
            n_affected_nodes: Some(2),
            ..InjectionSpec::default()
        };
        let q = inject_anomalies(&p, &spec, 100..300).unwrap();
        let labels = q.labels().unwrap();
        for ((ix, &l), &v) in labels.indexed_iter().zip(q.values().iter()) {
            if l {
                assert_eq!(v, 0.0, "{ix:?}");
                assert!(ix.1 >= 100);
            }
        }
    }

    #[test]
    fn subtract_uses_node_std() {
        // ±1 alternating: population std exactly 1
        let v = Array2::from_shape_fn((1, 200), |(_, t)| if t % 2 == 0 { 1.0 } else { -1.0 });
        let p = Panel::from_values(vec!["a".into()], v).unwrap();
        let spec = InjectionSpec {
            drop: DropMode::Subtract { k: 4.0 },
            n_affected_nodes: Some(1),
            events_per_node: 3,
            min_separation: 20,
            ..InjectionSpec::default()
        };
        let q = inject_anomalies(&p, &spec, 50..200).unwrap();
        let mut hits = 0;
        for t in 0..200 {
            if q.is_anomaly(0, t) {
                hits += 1;
                assert!((p.values()[[0, t]] - q.values()[[0, t]] - 4.0).abs() < 1e-9);
            }
        }
        assert_eq!(hits, 3);
    }

    #[test]
    fn zero_events_is_identity() {
        let p = panel(3, 100, 2);
        let spec = InjectionSpec {
            events_per_node: 0,
            ..InjectionSpec::default()
        };
        assert_eq!(inject_anomalies(&p, &spec, 0..100).unwrap(), p);
    }

    #[test]
    fn exact_cell_count_and_spacing() {
        for seed in 0..20 {
            let p = panel(10, 600, seed);
            let spec = InjectionSpec {
                n_affected_nodes: Some(4),
                events_per_node: 3,
                duration: 2,
                min_separation: 30,
                drop: DropMode::Subtract { k: 3.0 },
                seed,
                ..InjectionSpec::default()
            };
            let q = inject_anomalies(&p, &spec, 400..600).unwrap();
            assert_eq!(changed(&p, &q), 4 * 3 * 2);
            let labels = q.labels().unwrap();
            assert_eq!(labels.iter().filter(|&&l| l).count(), 4 * 3 * 2);
            for i in 0..10 {
                let starts: Vec<usize> = (400..600)
                    .filter(|&t| labels[[i, t]] && (t == 400 || !labels[[i, t - 1]]))
                    .collect();
                for w in starts.windows(2) {
                    assert!(w[1] - w[0] >= 30, "seed {seed} node {i}: {starts:?}");
                }
            }
            assert!(labels.indexed_iter().all(|((_, t), &l)| !l || t >= 400));
        }
    }

    #[test]
    fn tight_range_is_feasible_and_too_tight_is_not() {
        let p = panel(1, 200, 3);
        let spec = InjectionSpec {
            n_affected_nodes: Some(1),
            events_per_node: 3,
            min_separation: 50,
            ..InjectionSpec::default()
        };
        // exactly (3-1)*50 + 1 steps: starts forced to 0, 50, 100
        let q = inject_anomalies(&p, &spec, 10..111).unwrap();
        let hits: Vec<usize> = (0..200).filter(|&t| q.is_anomaly(0, t)).collect();
        assert_eq!(hits, vec![10, 60, 110]);
        assert!(matches!(inject_anomalies(&p, &spec, 10..110), Err(Error::Infeasible(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = panel(6, 400, 4);
        let spec = InjectionSpec {
            seed: 9,
            ..InjectionSpec::default()
        };
        assert_eq!(
            inject_anomalies(&p, &spec, 200..400).unwrap(),
            inject_anomalies(&p, &spec, 200..400).unwrap()
        );
        assert_eq!(spec.affected_nodes(6), 2);
        assert_eq!(spec.affected_nodes(10), 2);
    }
}
