//! Train, then forecast an unseen driving frequency with the implicit
//! trapezoid scheme and compare with the exact response.
//!
//! `cargo run --release --example forecast_time_response -- [epochs]`

use oscnet::forecast::{self, ForecastConfig, TrueField};
use oscnet::frc::time_metrics;
use oscnet::oscillator::{self, Forcing};
use oscnet::pipeline::Pipeline;

fn main() -> oscnet::Result<()> {
    let epochs = std::env::args().nth(1).map_or(Ok(100), |s| s.parse()).expect("epochs must be an integer");
    let mut p = Pipeline::ls1();
    p.training.epochs = epochs;
    let net = p.train()?.net;

    let forcing = Forcing::harmonic(1.0, p.time_response.omega);
    let ic = p.time_response_ic();
    let cfg = ForecastConfig::new(0.01, 10_000, forcing.clone());
    let truth = oscillator::analytic_trajectory(&p.system, &forcing, ic, cfg.dt, cfg.n_steps)?;

    for (name, result) in [
        ("exact field", forecast::forecast(&TrueField(p.system), ic, &cfg)?),
        ("network", forecast::forecast(&net, ic, &cfg)?),
    ] {
        let m = time_metrics(&result.trajectory, &truth, 0.3)?;
        let iters = result.newton_iters.iter().map(|&i| i as f64).sum::<f64>() / result.newton_iters.len() as f64;
        println!(
            "{name:<12} mse {:.2e}  amplitude {:+.3}%  frequency {:.4}%  mean Newton iterations {iters:.2}",
            m.mse, m.amp_error_pct, m.freq_error_pct
        );
    }
    Ok(())
}
