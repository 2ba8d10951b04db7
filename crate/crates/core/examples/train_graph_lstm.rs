//! Train a graph-augmented LSTM, forecast one step ahead, and save and
//! reload a checkpoint.

use graph_anomaly::checkpoint::Checkpoint;
use graph_anomaly::data::{generate_synthetic, SynthSpec};
use graph_anomaly::norm::normalize_panel;
use graph_anomaly::panel::split_panel;
use graph_anomaly::train::{evaluate_mse, fit_graph_lstm, TrainConfig};
use graph_anomaly::Result;

fn main() -> Result<()> {
    let (raw, graph) = generate_synthetic(&SynthSpec {
        n_nodes: 8,
        len: 1200,
        seed: 5,
        ..SynthSpec::default()
    })?;
    let split = split_panel(&raw, 0.6, 0.2)?;
    let (panel, norm) = normalize_panel(&raw, split.train.end)?;
    let cfg = TrainConfig {
        hidden: 12,
        window: 32,
        epochs: 15,
        seed: 1,
        ..TrainConfig::default()
    };
    for augment in [false, true] {
        let (model, report) = fit_graph_lstm(
            &panel,
            graph.neighbor_table(),
            augment,
            split.train.clone(),
            Some(split.val.clone()),
            &cfg,
        )?;
        let mse = evaluate_mse(&model, &panel, split.test.clone())?;
        println!(
            "augment={augment}: best epoch {}, test one-step MSE {mse:.4}",
            report.best_epoch
        );
        if augment {
            let ck = Checkpoint {
                model: model.clone(),
                graph: graph.clone(),
                node_ids: panel.node_ids().to_vec(),
                normalization: Some(norm.clone()),
                train: cfg.clone(),
            };
            let path = std::env::temp_dir().join("graph-lstm-example.ckpt.json");
            ck.save(&path)?;
            let back = Checkpoint::load(&path)?;
            let a = model.forecast_one_step(&panel, split.test.clone())?;
            let b = back.model.forecast_one_step(&panel, split.test.clone())?;
            println!("checkpoint {} reproduces forecasts: {}", path.display(), a == b);
        }
    }
    Ok(())
}
