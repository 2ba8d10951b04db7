//! Inject sparse drop events into the last part of a panel.

use graph_anomaly::data::{generate_synthetic, inject_anomalies, DropMode, InjectionSpec, SynthSpec};
use graph_anomaly::Result;

fn main() -> Result<()> {
    let (panel, _) = generate_synthetic(&SynthSpec {
        n_nodes: 6,
        len: 500,
        seed: 3,
        ..SynthSpec::default()
    })?;
    let spec = InjectionSpec {
        n_affected_nodes: Some(2),
        events_per_node: 2,
        drop: DropMode::Subtract { k: 4.0 },
        min_separation: 50,
        seed: 11,
        ..InjectionSpec::default()
    };
    let injected = inject_anomalies(&panel, &spec, 300..500)?;
    for i in 0..panel.n_nodes() {
        for t in 0..panel.len() {
            if injected.is_anomaly(i, t) {
                println!(
                    "{} t={t}: {:.3} -> {:.3}",
                    panel.node_ids()[i],
                    panel.values()[[i, t]],
                    injected.values()[[i, t]]
                );
            }
        }
    }
    Ok(())
}
