//! Tolerance matching, per-node and micro scores, and the results table.

use graph_anomaly::metrics::{format_table, match_events, match_flags, score, TableRow};
use graph_anomaly::Result;
use ndarray::Array2;

fn main() -> Result<()> {
    let m = match_events(&[3, 6], &[5, 7], 2);
    println!("pairs {:?}, fp {:?}, fn {:?}", m.pairs, m.false_positives, m.false_negatives);

    let mut pred = Array2::from_elem((3, 30), false);
    let mut truth = Array2::from_elem((3, 30), false);
    for &(i, t) in &[(0, 4), (0, 20), (1, 9)] {
        truth[[i, t]] = true;
    }
    for &(i, t) in &[(0, 5), (1, 9), (1, 25), (2, 3)] {
        pred[[i, t]] = true;
    }
    let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let table = score("demo", &ids, &match_flags(pred.view(), truth.view(), 1)?)?;
    for n in &table.nodes {
        println!("{}: {:?} F1 {:.3}", n.node_id, n.counts, n.prf.f1);
    }
    println!("micro {:?}", table.micro);
    let rows = vec![
        TableRow {
            model: "demo".into(),
            scores: vec![table.micro],
        },
        TableRow {
            model: "perfect".into(),
            scores: vec![graph_anomaly::metrics::Counts { tp: 3, fp: 0, fn_: 0 }.prf()],
        },
    ];
    print!("{}", format_table(&["toy".into()], &rows));
    Ok(())
}
