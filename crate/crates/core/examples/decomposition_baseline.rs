//! Trend plus Fourier seasonality regression as a forecaster.

use graph_anomaly::decomp::{decomp_fit, decomp_forecast};
use graph_anomaly::rng::SeededRng;
use graph_anomaly::Result;

fn main() -> Result<()> {
    let mut rng = SeededRng::new(8);
    let y: Vec<f64> = (0..1000)
        .map(|t| {
            let t = t as f64;
            0.01 * t + 2.0 * (2.0 * std::f64::consts::PI * t / 50.0).sin() + 0.02 * rng.normal()
        })
        .collect();
    let fit = decomp_fit(&y, 0..800, &[50.0], 3)?;
    println!("changepoints {:?}, slopes {:?}", fit.changepoints, fit.slopes());
    let fc = decomp_forecast(&fit, 800..1000)?;
    let mae: f64 = (800..1000).map(|t| (fc.at(0, t) - y[t]).abs()).sum::<f64>() / 200.0;
    println!("test MAE {mae:.4} (amplitude 2), interval half-width {:.4}", fit.half_width());
    Ok(())
}
