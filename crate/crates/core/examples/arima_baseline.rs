//! Fit ARIMA by AIC over the default order grid and forecast one step ahead.

use graph_anomaly::arima::{arima_fit, arima_forecast, default_grid};
use graph_anomaly::rng::SeededRng;
use graph_anomaly::Result;

fn main() -> Result<()> {
    let mut rng = SeededRng::new(4);
    let mut y = vec![0.0; 1500];
    for t in 2..y.len() {
        y[t] = 0.6 * y[t - 1] - 0.3 * y[t - 2] + rng.normal();
    }
    let fit = arima_fit(&y[..1000], &default_grid(None))?;
    println!(
        "selected {} phi {:?} theta {:?} sigma {:.3} aic {:.1}",
        fit.order,
        fit.phi,
        fit.theta,
        fit.sigma(),
        fit.aic
    );
    let fc = arima_forecast(&fit, &y, 1000..1500)?;
    let mse: f64 = (1000..1500).map(|t| (fc.at(0, t) - y[t]).powi(2)).sum::<f64>() / 500.0;
    let hw = fc.half_widths.as_ref().unwrap()[[0, 0]];
    let covered = (1000..1500).filter(|&t| (fc.at(0, t) - y[t]).abs() <= hw).count();
    println!("test MSE {mse:.3}, 95% interval ±{hw:.3} covers {covered}/500");
    Ok(())
}
