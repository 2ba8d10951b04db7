//! Neighbor tables, degree-preserving rewiring and correlation graphs.

use graph_anomaly::data::{generate_synthetic, SynthSpec};
use graph_anomaly::graph::{correlation_knn_graph, degree_preserving_rewire, neighbor_mean, DEFAULT_SWAP_FACTOR};
use graph_anomaly::rng::SeededRng;
use graph_anomaly::Result;
use ndarray::array;

fn main() -> Result<()> {
    let (panel, graph) = generate_synthetic(&SynthSpec {
        n_nodes: 10,
        len: 600,
        seed: 2,
        ..SynthSpec::default()
    })?;
    let table = graph.neighbor_table();
    for i in 0..3 {
        println!("node {i}: neighbors {:?}", table.neighbors(i));
    }

    let states = array![[1.0, 0.0], [3.0, 2.0], [5.0, 4.0]];
    let path = graph_anomaly::graph::Graph::new(3, vec![(0, 1), (1, 2)], false)?;
    println!("mean neighbor state of node 1: {:?}", neighbor_mean(states.view(), &path.neighbor_table(), 1));

    let rewired = degree_preserving_rewire(&graph, &mut SeededRng::new(9), DEFAULT_SWAP_FACTOR)?;
    let kept = rewired.edges().iter().filter(|e| graph.edges().contains(e)).count();
    println!(
        "rewired: degrees equal {}, {kept} of {} edges kept",
        rewired.degrees() == graph.degrees(),
        graph.n_edges()
    );

    let knn = correlation_knn_graph(&panel, 0..400, 2)?;
    let shared = knn.edges().iter().filter(|e| graph.edges().contains(e)).count();
    println!("2-NN correlation graph: {} edges, {shared} also in the true graph", knn.n_edges());
    Ok(())
}
