//! Split a panel into train/validation/test ranges and normalize with
//! training statistics only.

use graph_anomaly::norm::{denormalize_panel, normalize_panel};
use graph_anomaly::panel::{split_panel, Panel};
use graph_anomaly::Result;
use ndarray::Array2;

fn main() -> Result<()> {
    let values = Array2::from_shape_fn((3, 100), |(i, t)| 10.0 * (i + 1) as f64 + (t as f64 * 0.3).sin());
    let panel = Panel::from_values(vec!["a".into(), "b".into(), "c".into()], values)?;
    let split = split_panel(&panel, 0.6, 0.2)?;
    println!("train {:?} val {:?} test {:?}", split.train, split.val, split.test);
    let (norm, params) = normalize_panel(&panel, split.train.end)?;
    for (i, id) in panel.node_ids().iter().enumerate() {
        println!("{id}: mean {:.4} std {:.4}", params.mean[i], params.std[i]);
    }
    let back = denormalize_panel(&norm, &params)?;
    let err = back
        .values()
        .iter()
        .zip(panel.values().iter())
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max);
    println!("max relative round-trip error {err:.2e}");
    Ok(())
}
