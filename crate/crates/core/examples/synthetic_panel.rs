//! Generate a graph-correlated synthetic panel and compare neighbor
//! correlation across diffusion strengths.

use graph_anomaly::data::{generate_synthetic, SynthSpec};
use graph_anomaly::Result;

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn main() -> Result<()> {
    for alpha in [0.0, 0.3, 0.6, 0.9] {
        let spec = SynthSpec {
            n_nodes: 12,
            len: 2000,
            alpha,
            seed: 1,
            ..SynthSpec::default()
        };
        let (panel, graph) = generate_synthetic(&spec)?;
        let v = panel.values();
        let mean: f64 = graph
            .edges()
            .iter()
            .map(|&(a, b)| corr(v.row(a).as_slice().unwrap(), v.row(b).as_slice().unwrap()))
            .sum::<f64>()
            / graph.n_edges() as f64;
        println!("alpha {alpha:.1}: {} edges, mean neighbor correlation {mean:.3}", graph.n_edges());
    }
    Ok(())
}
