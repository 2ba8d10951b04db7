//! Config-driven experiments: model comparison, per-node analysis and the
//! real-versus-random graph ablation, with deterministic report files.

mod config;
mod plot;
mod report;

use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array2};

pub use config::{
    AblationConfig, DataConfig, DetectConfig, ExperimentConfig, ModelKind, ModelsConfig, OutputConfig, SplitConfig,
    SyntheticData, OUT_ENV,
};
pub use plot::{emit_plots, Svg};
pub use report::{write_report, AblationRow, AblationTable, AnomalyCount, ForecastTrace, RunReport};

use crate::arima::{arima_forecast_panel, default_grid};
use crate::data::{
    assemble_panels, generate_synthetic, inject_anomalies, load_wide_csv, load_yahoo_csv, read_labels_csv,
};
use crate::decomp::decomp_forecast_panel;
use crate::detect::{flag, interval_flag, residuals, sweep_thresholds, ThresholdMap};
use crate::error::{Error, Result};
use crate::forecast::ForecastSet;
use crate::graph::{correlation_knn_graph, degree_preserving_rewire, Graph};
use crate::metrics::{degree_improvement, match_flags, score, ScoreTable};
use crate::model::GraphLstmModel;
use crate::norm::{normalize_panel, NormalizationParams};
use crate::panel::{split_panel, Panel, Split};
use crate::rng::{child_seed, SeededRng};
use crate::train::{fit_graph_lstm, TrainReport};
use config::seeds;

/// Data ready for modeling: labels attached, normalized on the training range.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: String,
    /// Panel in raw units, after injection.
    pub raw: Panel,
    pub panel: Panel,
    pub normalization: NormalizationParams,
    pub graph: Graph,
    pub split: Split,
}

impl Prepared {
    /// Forecast horizon: validation and test together.
    pub fn eval_range(&self) -> Range<usize> {
        self.split.val.start..self.split.test.end
    }
}

fn load_data(cfg: &ExperimentConfig, base: &Path) -> Result<(Panel, Graph)> {
    match &cfg.data {
        DataConfig::Synthetic(s) => generate_synthetic(&s.to_spec(cfg.component_seed(seeds::DATA))),
        DataConfig::Yahoo { dir, knn } => {
            let panel = assemble_panels(&load_yahoo_csv(&base.join(dir))?)?;
            let split = split_panel(&panel, cfg.split.train, cfg.split.val)?;
            let graph = correlation_knn_graph(&panel, split.train, *knn)?;
            Ok((panel, graph))
        }
        DataConfig::WideCsv {
            panel,
            edges,
            labels,
            missing_sentinel,
            directed,
        } => {
            let sentinel = (!missing_sentinel.is_nan()).then_some(*missing_sentinel);
            let (p, g) = load_wide_csv(&base.join(panel), &base.join(edges), sentinel, *directed)?;
            let p = match labels {
                Some(l) => read_labels_csv(&base.join(l), &p)?,
                None => p,
            };
            Ok((p, g))
        }
    }
}

/// Loads or generates the data, injects events into the validation and test
/// ranges, and normalizes with training statistics.
pub fn prepare(cfg: &ExperimentConfig, base: &Path) -> Result<Prepared> {
    let (mut raw, graph) = load_data(cfg, base)?;
    let split = split_panel(&raw, cfg.split.train, cfg.split.val)?;
    if let Some(spec) = &cfg.injection {
        raw = inject_anomalies(&raw, spec, split.val.clone())?;
        let test_spec = crate::data::InjectionSpec {
            seed: child_seed(spec.seed, 1),
            ..spec.clone()
        };
        raw = inject_anomalies(&raw, &test_spec, split.test.clone())?;
    }
    if raw.labels().is_none() {
        raw = raw.with_labels(Some(raw.labels_or_empty()))?;
    }
    let (panel, normalization) = normalize_panel(&raw, split.train.end)?;
    Ok(Prepared {
        dataset: cfg.dataset_name(),
        raw,
        panel,
        normalization,
        graph,
        split,
    })
}

/// Output of one fitted model on the shared evaluation protocol.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub model: String,
    /// One-step forecasts over validation and test, normalized units.
    pub forecasts: ForecastSet,
    pub thresholds: ThresholdMap,
    /// Flags over the test range.
    pub flags: Array2<bool>,
    pub scores: ScoreTable,
    pub train_report: Option<TrainReport>,
    pub trained: Option<GraphLstmModel>,
}

/// Trains a graph-augmented (or plain) LSTM bank on the training range with
/// validation early stopping.
pub fn train_neural(
    prep: &Prepared,
    graph: &Graph,
    augment: bool,
    cfg: &ExperimentConfig,
) -> Result<(GraphLstmModel, TrainReport)> {
    fit_graph_lstm(
        &prep.panel,
        graph.neighbor_table(),
        augment,
        prep.split.train.clone(),
        Some(prep.split.val.clone()),
        &cfg.train,
    )
}

/// Forecasts over [`Prepared::eval_range`] with one model kind.
pub fn forecast_model(
    kind: ModelKind,
    prep: &Prepared,
    cfg: &ExperimentConfig,
) -> Result<(ForecastSet, Option<(GraphLstmModel, TrainReport)>)> {
    let eval = prep.eval_range();
    let train = prep.split.train.clone();
    let out = match kind {
        ModelKind::GraphLstm | ModelKind::LstmOnly => {
            let (model, report) = train_neural(prep, &prep.graph, kind == ModelKind::GraphLstm, cfg)?;
            let fc = model.forecast_one_step(&prep.panel, eval)?;
            (fc, Some((model, report)))
        }
        ModelKind::Arima => {
            let grid = default_grid(cfg.models.arima_period);
            (arima_forecast_panel(&prep.panel, train, eval, &grid)?.1, None)
        }
        ModelKind::Decomp => {
            let m = &cfg.models;
            (decomp_forecast_panel(&prep.panel, train, eval, &m.decomp_periods, m.fourier_order)?.1, None)
        }
    };
    Ok(out)
}

/// Sweeps thresholds on validation, flags the test range and scores it.
pub fn detect_and_score(
    name: &str,
    prep: &Prepared,
    forecasts: &ForecastSet,
    interval_rule: bool,
    cfg: &DetectConfig,
) -> Result<(ThresholdMap, Array2<bool>, ScoreTable)> {
    let Split { val, test, .. } = prep.split.clone();
    let res = residuals(&prep.panel, forecasts, prep.eval_range())?;
    let labels = prep.panel.labels_or_empty();
    let ids = prep.panel.node_ids();
    let thresholds = sweep_thresholds(
        &res.slice(val.clone())?,
        labels.slice(s![.., val]),
        ids,
        cfg.tolerance,
        cfg.fallback,
        cfg.scope,
    )?;
    let flags = if interval_rule {
        let all = interval_flag(&prep.panel, forecasts)?;
        let off = test.start - forecasts.range.start;
        all.slice(s![.., off..off + test.len()]).to_owned()
    } else {
        flag(&res.slice(test.clone())?, &thresholds)?
    };
    let matches = match_flags(flags.view(), labels.slice(s![.., test]), cfg.tolerance)?;
    let scores = score(name, ids, &matches)?;
    Ok((thresholds, flags, scores))
}

/// Fits, detects and scores one model.
pub fn run_model(kind: ModelKind, prep: &Prepared, cfg: &ExperimentConfig) -> Result<ModelRun> {
    let wrap = |e: Error| e.in_model(kind.name());
    let (forecasts, trained) = forecast_model(kind, prep, cfg).map_err(wrap)?;
    let interval = cfg.detect.interval_models.contains(&kind);
    let (thresholds, flags, scores) =
        detect_and_score(kind.name(), prep, &forecasts, interval, &cfg.detect).map_err(wrap)?;
    let (trained, train_report) = trained.map_or((None, None), |(m, r)| (Some(m), Some(r)));
    Ok(ModelRun {
        model: kind.name().into(),
        forecasts,
        thresholds,
        flags,
        scores,
        train_report,
        trained,
    })
}

/// Every configured model, in configured order, on one prepared dataset.
pub fn run_comparison_on(prep: &Prepared, cfg: &ExperimentConfig) -> Result<Vec<ModelRun>> {
    cfg.models.run.iter().map(|&k| run_model(k, prep, cfg)).collect()
}

/// Rewired graphs used by the ablation, one per random seed.
pub fn ablation_graphs(graph: &Graph, cfg: &ExperimentConfig) -> Result<Vec<(u64, Graph)>> {
    let root = cfg.component_seed(seeds::REWIRE);
    (1..=cfg.ablation.n_random_seeds as u64)
        .map(|k| {
            let seed = child_seed(root, k);
            let g = degree_preserving_rewire(graph, &mut SeededRng::new(seed), cfg.ablation.swap_factor)?;
            Ok((seed, g))
        })
        .collect()
}

/// Retrains the graph-augmented model on rewired graphs, starting from the
/// same initialization seed as the real-graph model. `real` is the
/// real-graph run, reused for the first row.
pub fn run_ablation_on(prep: &Prepared, cfg: &ExperimentConfig, real: &ModelRun) -> Result<AblationTable> {
    if prep.graph.is_directed() {
        return Err(Error::UnsupportedAblation);
    }
    let mut rows = vec![AblationRow {
        label: "real".into(),
        rewire_seed: None,
        edges_changed: 0,
        counts: real.scores.micro_counts,
        prf: real.scores.micro,
    }];
    let name = ModelKind::GraphLstm.name();
    for (k, (seed, g)) in ablation_graphs(&prep.graph, cfg)?.into_iter().enumerate() {
        let wrap = |e: Error| e.in_model(&format!("{name} (random graph {})", k + 1));
        let (model, _) = train_neural(prep, &g, true, cfg).map_err(wrap)?;
        let fc = model.forecast_one_step(&prep.panel, prep.eval_range()).map_err(wrap)?;
        let (_, _, scores) = detect_and_score(name, prep, &fc, false, &cfg.detect).map_err(wrap)?;
        let real_edges: std::collections::BTreeSet<_> = prep.graph.edges().iter().collect();
        rows.push(AblationRow {
            label: format!("random-{}", k + 1),
            rewire_seed: Some(seed),
            edges_changed: g.edges().iter().filter(|e| !real_edges.contains(e)).count(),
            counts: scores.micro_counts,
            prf: scores.micro,
        });
    }
    Ok(AblationTable {
        swap_factor: cfg.ablation.swap_factor,
        rows,
    })
}

/// Runs every configured model and scores it on the test range.
pub fn run_comparison(cfg: &ExperimentConfig, base: &Path) -> Result<RunReport> {
    let prep = prepare(cfg, base)?;
    let runs = run_comparison_on(&prep, cfg)?;
    RunReport::assemble(cfg, &prep, runs, None)
}

/// Real graph versus `n_random_seeds` degree-preserving rewirings, for the
/// graph-augmented model only.
pub fn run_ablation(cfg: &ExperimentConfig, base: &Path) -> Result<AblationTable> {
    let prep = prepare(cfg, base)?;
    let real = run_model(ModelKind::GraphLstm, &prep, cfg)?;
    run_ablation_on(&prep, cfg, &real)
}

/// Comparison plus, when enabled, the ablation (reusing the real-graph run).
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path) -> Result<RunReport> {
    let prep = prepare(cfg, base)?;
    let runs = run_comparison_on(&prep, cfg)?;
    let ablation = if cfg.ablation.enabled {
        let real = runs
            .iter()
            .find(|r| r.model == ModelKind::GraphLstm.name())
            .ok_or_else(|| Error::Config("ablation needs graph-lstm in models.run".into()))?;
        Some(run_ablation_on(&prep, cfg, real)?)
    } else {
        None
    };
    RunReport::assemble(cfg, &prep, runs, ablation)
}

/// `ΔF1 = F1(graph-lstm) − F1(lstm-only)` per node, when both ran.
pub fn degree_records(prep: &Prepared, runs: &[ModelRun]) -> Result<Option<Vec<crate::metrics::DegreeRecord>>> {
    let find = |k: ModelKind| runs.iter().find(|r| r.model == k.name());
    match (find(ModelKind::GraphLstm), find(ModelKind::LstmOnly)) {
        (Some(g), Some(l)) => Ok(Some(degree_improvement(&g.scores, &l.scores, &prep.graph.degrees())?)),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
seed = 4
[data]
source = "synthetic"
n_nodes = 5
len = 600
[train]
hidden = 4
window = 32
epochs = 3
[injection]
n_affected_nodes = 2
events_per_node = 1
drop = { mode = "subtract", k = 5.0 }
"#,
        )
        .unwrap()
    }

    #[test]
    fn lstm_only_row_equals_graph_run_without_augmentation() {
        let cfg = small_cfg();
        let prep = prepare(&cfg, Path::new(".")).unwrap();
        let lstm = run_model(ModelKind::LstmOnly, &prep, &cfg).unwrap();
        // isolated nodes add an exact zero, so this is the augmented code path
        let plain = train_neural(&prep, &Graph::empty(5), true, &cfg).unwrap().0;
        let fc_plain = plain.forecast_one_step(&prep.panel, prep.eval_range()).unwrap();
        assert_eq!(fc_plain.values, lstm.forecasts.values);
    }

    #[test]
    fn injection_lands_in_val_and_test_only() {
        let cfg = small_cfg();
        let prep = prepare(&cfg, Path::new(".")).unwrap();
        let labels = prep.panel.labels().unwrap();
        let per = |r: Range<usize>| labels.slice(s![.., r]).iter().filter(|&&l| l).count();
        assert_eq!(per(prep.split.train.clone()), 0);
        assert_eq!(per(prep.split.val.clone()), 2);
        assert_eq!(per(prep.split.test.clone()), 2);
    }

    #[test]
    fn zero_swap_ablation_reproduces_real_row() {
        let mut cfg = small_cfg();
        cfg.models.run = vec![ModelKind::GraphLstm];
        cfg.ablation.enabled = true;
        cfg.ablation.swap_factor = 0.0;
        cfg.ablation.n_random_seeds = 2;
        let report = run_experiment(&cfg, Path::new(".")).unwrap();
        let table = report.ablation.unwrap();
        assert_eq!(table.rows.len(), 3);
        for r in &table.rows[1..] {
            assert_eq!(r.counts, table.rows[0].counts);
            assert_eq!(r.edges_changed, 0);
        }
    }

    #[test]
    fn triangle_rewires_to_itself() {
        let cfg = small_cfg();
        let k3 = Graph::new(3, vec![(0, 1), (0, 2), (1, 2)], false).unwrap();
        for (_, g) in ablation_graphs(&k3, &cfg).unwrap() {
            assert_eq!(g, k3);
        }
    }

    #[test]
    fn constant_panel_pipeline_is_degenerate() {
        let mut cfg = small_cfg();
        cfg.models.run = vec![ModelKind::LstmOnly];
        cfg.injection = None;
        let mut prep = prepare(&cfg, Path::new(".")).unwrap();
        let constant = Array2::from_elem((5, 600), 3.0);
        prep.raw = prep.raw.with_values(constant).unwrap();
        let (p, n) = normalize_panel(&prep.raw, prep.split.train.end).unwrap();
        prep.panel = p;
        prep.normalization = n;
        let runs = run_comparison_on(&prep, &cfg).unwrap();
        let r = &runs[0];
        assert!(r.flags.iter().all(|&f| !f));
        assert_eq!(r.scores.micro_counts, Default::default());
        assert!(r.scores.nodes.iter().all(|n| n.prf.f1 == 1.0));
    }
}
