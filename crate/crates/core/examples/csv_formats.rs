//! Write and read the wide panel, edge-list, label and per-series formats.

use graph_anomaly::data::{
    generate_synthetic, inject_anomalies, load_wide_csv, load_yahoo_csv, read_labels_csv, write_labels_csv,
    write_wide_csv, write_yahoo_csv, InjectionSpec, SynthSpec,
};
use graph_anomaly::graph::write_edge_list;
use graph_anomaly::Result;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("graph-anomaly-csv-example");
    std::fs::create_dir_all(dir.join("series")).map_err(|e| graph_anomaly::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let (panel, graph) = generate_synthetic(&SynthSpec {
        n_nodes: 4,
        len: 200,
        seed: 6,
        ..SynthSpec::default()
    })?;
    let panel = inject_anomalies(&panel, &InjectionSpec { n_affected_nodes: Some(2), ..InjectionSpec::default() }, 100..200)?;
    write_wide_csv(&dir.join("panel.csv"), &panel)?;
    write_labels_csv(&dir.join("labels.csv"), &panel)?;
    write_edge_list(&dir.join("edges.csv"), &graph, panel.node_ids())?;

    let (back, g) = load_wide_csv(&dir.join("panel.csv"), &dir.join("edges.csv"), None, false)?;
    let back = read_labels_csv(&dir.join("labels.csv"), &back)?;
    println!("wide round trip: {} nodes, {} edges, labels equal {}", back.n_nodes(), g.n_edges(), back.labels() == panel.labels());

    for i in 0..panel.n_nodes() {
        let one = panel.select_nodes(&[i])?;
        write_yahoo_csv(&dir.join("series").join(format!("{}.csv", panel.node_ids()[i])), &one)?;
    }
    let series = load_yahoo_csv(&dir.join("series"))?;
    println!("read {} single-series files from {}", series.len(), dir.display());
    Ok(())
}
