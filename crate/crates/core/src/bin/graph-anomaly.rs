use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graph_anomaly::checkpoint::Checkpoint;
use graph_anomaly::data::{
    generate_synthetic, inject_anomalies, read_wide_csv, write_labels_csv, write_wide_csv, InjectionSpec,
};
use graph_anomaly::detect::ThresholdMap;
use graph_anomaly::experiment::{
    detect_and_score, forecast_model, prepare, run_ablation, run_experiment, train_neural, write_report,
    ExperimentConfig, ModelKind, SyntheticData, OUT_ENV,
};
use graph_anomaly::graph::write_edge_list;
use graph_anomaly::metrics::{match_flags, score};
use graph_anomaly::{Error, Result};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "graph-anomaly", version, about = "Graph-augmented forecasting anomaly detection")]
struct Cli {
    /// Master seed, overriding the one in the config or spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print only the final output path.
    #[arg(long, global = true)]
    quiet: bool,
    /// Output directory (also settable through GRAPH_ANOMALY_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare all configured models and write a report directory.
    Run {
        #[arg(value_parser = existing)]
        config: PathBuf,
    },
    /// Train the configured LSTM models and save checkpoints.
    Train {
        #[arg(value_parser = existing)]
        config: PathBuf,
    },
    /// Detect and score with one model, reusing a checkpoint when present.
    Detect {
        #[arg(value_parser = existing)]
        config: PathBuf,
        #[arg(long)]
        model: ModelKind,
        /// Use these thresholds instead of sweeping.
        #[arg(long, value_parser = existing)]
        thresholds: Option<PathBuf>,
    },
    /// Real versus degree-preserving random graphs.
    Ablate {
        #[arg(value_parser = existing)]
        config: PathBuf,
    },
    /// Generate a synthetic panel and graph.
    GenSynth {
        #[arg(value_parser = existing)]
        spec: PathBuf,
    },
    /// Inject drop anomalies into a wide panel.
    Inject {
        #[arg(value_parser = existing)]
        panel: PathBuf,
        #[arg(value_parser = existing)]
        spec: PathBuf,
        /// First time index eligible for events.
        #[arg(long)]
        from: Option<usize>,
        /// End (exclusive) of the eligible range.
        #[arg(long)]
        to: Option<usize>,
    },
    /// Score predicted flags against true labels (both wide 0/1 CSVs).
    Score {
        #[arg(value_parser = existing)]
        pred: PathBuf,
        #[arg(value_parser = existing)]
        truth: PathBuf,
        #[arg(long)]
        tolerance: usize,
    },
    /// Redraw the SVG plots of a report directory.
    Plot {
        #[arg(value_parser = existing)]
        report_dir: PathBuf,
    },
}

fn existing(s: &str) -> std::result::Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.exists() {
        Ok(p)
    } else {
        Err(format!("no such file or directory: {s}"))
    }
}

struct Out {
    quiet: bool,
}

impl Out {
    fn info(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn result(&self, path: &Path) {
        println!("{}", path.display());
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenSpec {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    data: SyntheticData,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<(ExperimentConfig, PathBuf)> {
    let (cfg, base) = ExperimentConfig::load(path)?;
    Ok((seed.map_or(cfg.clone(), |s| cfg.with_seed(s)), base))
}

fn plain_out(cli_out: Option<&Path>) -> Result<PathBuf> {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .ok_or_else(|| Error::Config(format!("an output directory is required (--out or {OUT_ENV})")))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn checkpoint_path(dir: &Path, model: ModelKind) -> PathBuf {
    dir.join(format!("{model}.ckpt.json"))
}

fn grid_to_bools(path: &Path) -> Result<graph_anomaly::panel::Panel> {
    read_wide_csv(path, None)
}

fn execute(cli: Cli) -> Result<()> {
    let out = Out { quiet: cli.quiet };
    let cli_out = cli.out.as_deref();
    match cli.command {
        Command::Run { config } => {
            let (cfg, base) = load_config(&config, cli.seed)?;
            out.info(format!("seed: {}", cfg.seed));
            let dir = cfg.output_dir(&base, cli_out);
            let report = run_experiment(&cfg, &base)?;
            write_report(&report, &dir)?;
            out.info(report.table_text().trim_end());
            if let Some(a) = &report.ablation {
                out.info(a.to_csv().trim_end());
            }
            out.result(&dir);
        }
        Command::Train { config } => {
            let (cfg, base) = load_config(&config, cli.seed)?;
            out.info(format!("seed: {}", cfg.seed));
            let dir = cfg.output_dir(&base, cli_out);
            let neural: Vec<ModelKind> = cfg.models.run.iter().copied().filter(|m| m.is_neural()).collect();
            if neural.is_empty() {
                return Err(Error::Config("models.run has no LSTM model to train".into()));
            }
            let prep = prepare(&cfg, &base)?;
            mkdir(&dir)?;
            for m in neural {
                let (model, report) =
                    train_neural(&prep, &prep.graph, m == ModelKind::GraphLstm, &cfg).map_err(|e| e.in_model(m.name()))?;
                let path = checkpoint_path(&dir, m);
                Checkpoint {
                    model,
                    graph: prep.graph.clone(),
                    node_ids: prep.panel.node_ids().to_vec(),
                    normalization: Some(prep.normalization.clone()),
                    train: cfg.train.clone(),
                }
                .save(&path)?;
                out.info(format!(
                    "{m}: best epoch {} of {}, saved {}",
                    report.best_epoch,
                    report.train_loss.len(),
                    path.display()
                ));
            }
            out.result(&dir);
        }
        Command::Detect {
            config,
            model,
            thresholds,
        } => {
            let (cfg, base) = load_config(&config, cli.seed)?;
            out.info(format!("seed: {}", cfg.seed));
            let dir = cfg.output_dir(&base, cli_out);
            let prep = prepare(&cfg, &base)?;
            let ckpt = checkpoint_path(&dir, model);
            let forecasts = if model.is_neural() && ckpt.exists() {
                let c = Checkpoint::load(&ckpt)?;
                if c.node_ids != prep.panel.node_ids() {
                    return Err(Error::Checkpoint(format!("{} was trained on other nodes", ckpt.display())));
                }
                out.info(format!("using checkpoint {}", ckpt.display()));
                c.model.forecast_one_step(&prep.panel, prep.eval_range())?
            } else {
                forecast_model(model, &prep, &cfg).map_err(|e| e.in_model(model.name()))?.0
            };
            let interval = cfg.detect.interval_models.contains(&model);
            let (mut tmap, mut flags, mut scores) =
                detect_and_score(model.name(), &prep, &forecasts, interval, &cfg.detect)?;
            if let Some(t) = thresholds {
                tmap = ThresholdMap::read_csv(&t, prep.panel.node_ids())?;
                let res = graph_anomaly::detect::residuals(&prep.panel, &forecasts, prep.eval_range())?
                    .slice(prep.split.test.clone())?;
                flags = graph_anomaly::detect::flag(&res, &tmap)?;
                let labels = prep.panel.labels_or_empty();
                let truth = labels.slice(ndarray::s![.., prep.split.test.clone()]);
                let m = match_flags(flags.view(), truth, cfg.detect.tolerance)?;
                scores = score(model.name(), prep.panel.node_ids(), &m)?;
            }
            let sub = dir.join(format!("detect-{model}"));
            mkdir(&sub)?;
            tmap.write_csv(&sub.join("thresholds.csv"))?;
            scores.write_csv(&sub.join("scores.csv"))?;
            let test = prep.split.test.clone();
            let flagged = prep
                .panel
                .truncate(test.end)?
                .with_labels(None)?;
            let mut grid = ndarray::Array2::from_elem((prep.panel.n_nodes(), test.end), false);
            grid.slice_mut(ndarray::s![.., test.clone()]).assign(&flags);
            write_labels_csv(&sub.join("flags.csv"), &flagged.with_labels(Some(grid))?)?;
            let m = scores.micro;
            out.info(format!(
                "{model}: micro P={:.4} R={:.4} F1={:.4} (tp {} fp {} fn {})",
                m.precision, m.recall, m.f1, scores.micro_counts.tp, scores.micro_counts.fp, scores.micro_counts.fn_
            ));
            out.result(&sub);
        }
        Command::Ablate { config } => {
            let (mut cfg, base) = load_config(&config, cli.seed)?;
            cfg.ablation.enabled = true;
            out.info(format!("seed: {}", cfg.seed));
            let dir = cfg.output_dir(&base, cli_out);
            let table = run_ablation(&cfg, &base)?;
            mkdir(&dir)?;
            let path = dir.join("ablation.csv");
            let csv = table.to_csv();
            std::fs::write(&path, &csv).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            out.info(csv.trim_end());
            out.result(&path);
        }
        Command::GenSynth { spec } => {
            let file: GenSpec = read_toml(&spec)?;
            let seed = cli.seed.unwrap_or(file.seed);
            out.info(format!("seed: {seed}"));
            let dir = plain_out(cli_out)?;
            let (panel, graph) = generate_synthetic(&file.data.to_spec(seed))?;
            mkdir(&dir)?;
            write_wide_csv(&dir.join("panel.csv"), &panel)?;
            write_edge_list(&dir.join("edges.csv"), &graph, panel.node_ids())?;
            out.info(format!("{} nodes × {} steps, {} edges", panel.n_nodes(), panel.len(), graph.n_edges()));
            out.result(&dir);
        }
        Command::Inject { panel, spec, from, to } => {
            let mut inj: InjectionSpec = read_toml(&spec)?;
            if let Some(s) = cli.seed {
                inj.seed = s;
            }
            out.info(format!("seed: {}", inj.seed));
            let dir = plain_out(cli_out)?;
            let p = read_wide_csv(&panel, None)?;
            let range = from.unwrap_or(0)..to.unwrap_or(p.len());
            let injected = inject_anomalies(&p, &inj, range)?;
            mkdir(&dir)?;
            write_wide_csv(&dir.join("panel.csv"), &injected)?;
            write_labels_csv(&dir.join("labels.csv"), &injected)?;
            let n = injected.labels().map_or(0, |l| l.iter().filter(|&&x| x).count());
            out.info(format!("{n} cells labeled"));
            out.result(&dir);
        }
        Command::Score { pred, truth, tolerance } => {
            out.info(format!("seed: {}", cli.seed.unwrap_or(0)));
            let p = grid_to_bools(&pred)?;
            let t = grid_to_bools(&truth)?;
            if p.node_ids() != t.node_ids() || p.timestamps() != t.timestamps() {
                return Err(Error::Shape("prediction and truth files cover different nodes or timestamps".into()));
            }
            let as_bool = |x: &graph_anomaly::panel::Panel| x.values().mapv(|v| v != 0.0 && !v.is_nan());
            let m = match_flags(as_bool(&p).view(), as_bool(&t).view(), tolerance)?;
            let table = score("pred", p.node_ids(), &m)?;
            for n in &table.nodes {
                out.info(format!(
                    "{}: tp={} fp={} fn={} P={:.4} R={:.4} F1={:.4}",
                    n.node_id, n.counts.tp, n.counts.fp, n.counts.fn_, n.prf.precision, n.prf.recall, n.prf.f1
                ));
            }
            let mi = table.micro;
            out.info(format!("micro P={:.4} R={:.4} F1={:.4}", mi.precision, mi.recall, mi.f1));
            if let Some(dir) = cli_out {
                mkdir(dir)?;
                let path = dir.join("scores.csv");
                table.write_csv(&path)?;
                out.result(&path);
            }
        }
        Command::Plot { report_dir } => {
            out.info(format!("seed: {}", cli.seed.unwrap_or(0)));
            graph_anomaly::experiment::emit_plots(&report_dir)?;
            out.result(&report_dir.join("plots"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
