//! Run the demo comparison config and write its report directory.
//!
//! `cargo run --example run_experiment [config.toml] [out-dir]`

use std::path::PathBuf;

use graph_anomaly::experiment::{run_experiment, write_report, ExperimentConfig};
use graph_anomaly::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/demo.toml"));
    let (cfg, base) = ExperimentConfig::load(&config)?;
    let out = cfg.output_dir(&base, args.next().map(PathBuf::from).as_deref());
    let report = run_experiment(&cfg, &base)?;
    write_report(&report, &out)?;
    print!("{}", report.table_text());
    if let Some(d) = &report.degree {
        let improved = graph_anomaly::metrics::fraction_improved(d);
        println!("nodes with F1(graph) >= F1(lstm-only): {:.0}%", 100.0 * improved);
    }
    println!("report written to {}", out.display());
    Ok(())
}
