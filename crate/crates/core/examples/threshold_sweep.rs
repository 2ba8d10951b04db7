//! Residuals, per-node threshold sweep on validation, and flagging.

use graph_anomaly::detect::{flag, residuals, sweep_thresholds, Fallback, ThresholdScope};
use graph_anomaly::forecast::ForecastSet;
use graph_anomaly::panel::Panel;
use graph_anomaly::Result;
use ndarray::{s, Array2};

fn main() -> Result<()> {
    // two nodes, forecasts always 0, a few large values labeled anomalous
    let mut values = Array2::from_shape_fn((2, 40), |(i, t)| 0.1 * ((t * (i + 3)) % 7) as f64);
    let mut labels = Array2::from_elem((2, 40), false);
    for &(i, t) in &[(0, 5), (0, 15), (1, 12), (0, 30), (1, 33)] {
        values[[i, t]] = 2.0;
        labels[[i, t]] = true;
    }
    let panel = Panel::from_values(vec!["x".into(), "y".into()], values)?.with_labels(Some(labels.clone()))?;
    let fc = ForecastSet::new(0..40, Array2::zeros((2, 40)), None)?;
    let res = residuals(&panel, &fc, 0..40)?;
    let tmap = sweep_thresholds(
        &res.slice(0..20)?,
        labels.slice(s![.., 0..20]),
        panel.node_ids(),
        0,
        Fallback::Global,
        ThresholdScope::PerNode,
    )?;
    for i in 0..2 {
        println!(
            "{}: tau {:.3} (val F1 {:.2}, {:?}, {} candidates)",
            tmap.node_ids[i], tmap.tau[i], tmap.val_f1[i], tmap.source[i], tmap.n_candidates[i]
        );
    }
    let flags = flag(&res.slice(20..40)?, &tmap)?;
    for ((i, k), &f) in flags.indexed_iter() {
        if f {
            println!("flag {} at t={}", tmap.node_ids[i], 20 + k);
        }
    }
    Ok(())
}
