//! Stability diagnostics: equilibrium eigenvalues, phase-space divergence and
//! sampling limits.
//!
//! `cargo run --release --example stability_report -- [epochs]`

use oscnet::pipeline::Pipeline;
use oscnet::stability::{self, GridSpec};

fn main() -> oscnet::Result<()> {
    let epochs = std::env::args().nth(1).map_or(Ok(100), |s| s.parse()).expect("epochs must be an integer");
    let mut p = Pipeline::ls1();
    p.training.epochs = epochs;
    let net = p.train()?.net;

    let eq = stability::equilibrium_eigenvalues(&net);
    let [(re, im), _] = eq.eigenvalues.as_pairs();
    println!("equilibrium: {re:+.5} +/- {:.5}i -> {}", im.abs(), eq.stability);
    let div = stability::divergence_check(&net, &GridSpec::square(1.0, 41), stability::DEFAULT_DIVERGENCE_TOL);
    println!("divergence on [-1, 1]^2: max trace {:+.4} (passed: {})", div.max_trace, div.passed);

    let ny = stability::nyquist_limits(1.0, 10.0, 0.01)?;
    println!(
        "band top 10 at dt = 0.01: Nyquist rate {:.3}, dt_max {:.4}, R_s {:.2}, oversampling {:.2}",
        ny.nyquist_rate, ny.dt_max, ny.sampling_ratio, ny.oversampling
    );
    for rs in [10.0, 62.83] {
        println!("R_s = {rs:>6}: critical ratio {:.2}", stability::critical_frequency(1.0, rs));
    }
    Ok(())
}
