use std::path::Path;

use serde::Serialize;

use super::{degree_records, ExperimentConfig, ModelRun, Prepared};
use crate::data::fmt_value;
use crate::error::{Error, Result};
use crate::metrics::{format_table, Counts, DegreeRecord, Prf, ScoreTable, TableRow};
use crate::panel::Split;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyCount {
    pub node_id: String,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastPoint {
    pub t: usize,
    /// Raw units; `None` where unobserved.
    pub actual: Option<f64>,
    pub forecast: f64,
    pub flagged: bool,
    pub label: bool,
}

/// Test-range forecasts of one node, in raw units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastTrace {
    pub model: String,
    pub node_id: String,
    pub points: Vec<ForecastPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    /// `real` or `random-k`.
    pub label: String,
    pub rewire_seed: Option<u64>,
    /// Edges of the rewired graph absent from the real one.
    pub edges_changed: usize,
    pub counts: Counts,
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub swap_factor: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn real_f1(&self) -> f64 {
        self.rows[0].prf.f1
    }

    /// Mean micro-F1 over the random-graph rows.
    pub fn mean_random_f1(&self) -> Option<f64> {
        let r = &self.rows[1..];
        (!r.is_empty()).then(|| r.iter().map(|x| x.prf.f1).sum::<f64>() / r.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("graph,rewire_seed,edges_changed,tp,fp,fn,precision,recall,f1\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.label,
                r.rewire_seed.map(|s| s.to_string()).unwrap_or_default(),
                r.edges_changed,
                r.counts.tp,
                r.counts.fp,
                r.counts.fn_,
                fmt_value(r.prf.precision),
                fmt_value(r.prf.recall),
                fmt_value(r.prf.f1)
            ));
        }
        out
    }
}

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub dataset: String,
    pub node_ids: Vec<String>,
    pub degrees: Vec<usize>,
    pub split: Split,
    pub runs: Vec<ModelRun>,
    pub degree: Option<Vec<DegreeRecord>>,
    pub anomaly_counts: Vec<AnomalyCount>,
    pub forecast: Option<ForecastTrace>,
    pub ablation: Option<AblationTable>,
}

impl RunReport {
    pub fn assemble(
        cfg: &ExperimentConfig,
        prep: &Prepared,
        runs: Vec<ModelRun>,
        ablation: Option<AblationTable>,
    ) -> Result<Self> {
        let labels = prep.panel.labels_or_empty();
        let count = |i: usize, r: &std::ops::Range<usize>| r.clone().filter(|&t| labels[[i, t]]).count();
        let anomaly_counts: Vec<AnomalyCount> = prep
            .panel
            .node_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| AnomalyCount {
                node_id: id.clone(),
                train: count(i, &prep.split.train),
                val: count(i, &prep.split.val),
                test: count(i, &prep.split.test),
            })
            .collect();
        let forecast = match runs.first() {
            Some(run) => Some(trace(cfg, prep, run, &anomaly_counts)?),
            None => None,
        };
        Ok(Self {
            config: cfg.clone(),
            dataset: prep.dataset.clone(),
            node_ids: prep.panel.node_ids().to_vec(),
            degrees: prep.graph.degrees(),
            split: prep.split.clone(),
            degree: degree_records(prep, &runs)?,
            runs,
            anomaly_counts,
            forecast,
            ablation,
        })
    }

    pub fn scores(&self, model: &str) -> Option<&ScoreTable> {
        self.runs.iter().find(|r| r.model == model).map(|r| &r.scores)
    }

    pub fn micro_f1(&self, model: &str) -> Option<f64> {
        self.scores(model).map(|s| s.micro.f1)
    }

    /// The results table as plain text, one row per model.
    pub fn table_text(&self) -> String {
        let rows: Vec<TableRow> = self
            .runs
            .iter()
            .map(|r| TableRow {
                model: r.model.clone(),
                scores: vec![r.scores.micro],
            })
            .collect();
        format_table(std::slice::from_ref(&self.dataset), &rows)
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("model,dataset,tp,fp,fn,precision,recall,f1\n");
        for r in &self.runs {
            let (c, m) = (r.scores.micro_counts, r.scores.micro);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.model,
                self.dataset,
                c.tp,
                c.fp,
                c.fn_,
                fmt_value(m.precision),
                fmt_value(m.recall),
                fmt_value(m.f1)
            ));
        }
        out
    }
}

fn trace(cfg: &ExperimentConfig, prep: &Prepared, run: &ModelRun, counts: &[AnomalyCount]) -> Result<ForecastTrace> {
    let node = match &cfg.output.forecast_node {
        Some(id) => prep.panel.node_index(id).ok_or_else(|| Error::UnknownNode(id.clone()))?,
        // most test anomalies, lowest index on ties
        None => (0..counts.len()).rev().max_by_key(|&i| counts[i].test).unwrap_or(0),
    };
    let test = prep.split.test.clone();
    let norm = &prep.normalization;
    let points = test
        .clone()
        .enumerate()
        .map(|(k, t)| ForecastPoint {
            t,
            actual: prep.raw.is_observed(node, t).then(|| prep.raw.values()[[node, t]]),
            forecast: norm.denormalize(node, run.forecasts.at(node, t)),
            flagged: run.flags[[node, k]],
            label: prep.raw.is_anomaly(node, t),
        })
        .collect();
    Ok(ForecastTrace {
        model: run.model.clone(),
        node_id: prep.panel.node_ids()[node].clone(),
        points,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn anomaly_counts_csv(counts: &[AnomalyCount]) -> String {
    let mut out = String::from("node_id,train,val,test\n");
    for c in counts {
        out.push_str(&format!("{},{},{},{}\n", c.node_id, c.train, c.val, c.test));
    }
    out
}

fn forecast_csv(tr: &ForecastTrace) -> String {
    let mut out = String::from("t,actual,forecast,flagged,label\n");
    for p in &tr.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.t,
            p.actual.map(fmt_value).unwrap_or_default(),
            fmt_value(p.forecast),
            u8::from(p.flagged),
            u8::from(p.label)
        ));
    }
    out
}

fn loss_csv(r: &crate::train::TrainReport) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for (e, l) in r.train_loss.iter().enumerate() {
        let v = r.val_loss.get(e).map(|&v| fmt_value(v)).unwrap_or_default();
        out.push_str(&format!("{e},{},{v}\n", fmt_value(*l)));
    }
    out
}

#[derive(Serialize)]
struct Fingerprint<'a> {
    package: &'a str,
    version: &'a str,
    master_seed: u64,
    dataset: &'a str,
    models: Vec<&'a str>,
    n_nodes: usize,
    split: [[usize; 2]; 3],
}

/// Writes the report tree:
///
/// ```text
/// config.toml          resolved config
/// fingerprint.json     package version, master seed, data shape
/// table.csv table.txt  micro scores per model
/// thresholds.csv       first model's per-node thresholds
/// anomaly_counts.csv   labels per node and range
/// forecast.csv         one node's test forecasts (first model)
/// degree.csv           ΔF1 vs degree, when both LSTM variants ran
/// ablation.csv         real vs random graphs, when enabled
/// models/<model>/      thresholds.csv, scores.csv, loss.csv (neural only)
/// plots/*.svg          drawn from the CSVs above
/// ```
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    mkdir(dir)?;
    write(&dir.join("config.toml"), &report.config.to_toml()?)?;
    let fp = Fingerprint {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        master_seed: report.config.seed,
        dataset: &report.dataset,
        models: report.runs.iter().map(|r| r.model.as_str()).collect(),
        n_nodes: report.node_ids.len(),
        split: [&report.split.train, &report.split.val, &report.split.test].map(|r| [r.start, r.end]),
    };
    let fp = serde_json::to_string_pretty(&fp).map_err(|e| Error::Config(e.to_string()))?;
    write(&dir.join("fingerprint.json"), &(fp + "\n"))?;
    write(&dir.join("table.csv"), &report.table_csv())?;
    write(&dir.join("table.txt"), &report.table_text())?;
    if let Some(first) = report.runs.first() {
        first.thresholds.write_csv(&dir.join("thresholds.csv"))?;
    }
    write(&dir.join("anomaly_counts.csv"), &anomaly_counts_csv(&report.anomaly_counts))?;
    if let Some(tr) = &report.forecast {
        write(&dir.join("forecast.csv"), &forecast_csv(tr))?;
    }
    if let Some(d) = &report.degree {
        crate::metrics::write_degree_csv(&dir.join("degree.csv"), d)?;
    }
    if let Some(a) = &report.ablation {
        write(&dir.join("ablation.csv"), &a.to_csv())?;
    }
    for run in &report.runs {
        let md = dir.join("models").join(&run.model);
        mkdir(&md)?;
        run.thresholds.write_csv(&md.join("thresholds.csv"))?;
        run.scores.write_csv(&md.join("scores.csv"))?;
        if let Some(r) = &run.train_report {
            write(&md.join("loss.csv"), &loss_csv(r))?;
        }
    }
    if report.config.output.plots {
        super::emit_plots(dir)?;
    }
    Ok(())
}
