//! A reduced band-center sweep and a frequency-ratio sweep at R_s = 10.
//!
//! `cargo run --release --example sensitivity_sweep`

use oscnet::pipeline::Pipeline;
use oscnet::sweep::{self, SweepKind, SweepSpec};

fn main() -> oscnet::Result<()> {
    let base = Pipeline::ls1();

    let mut spec = SweepSpec::default_for(SweepKind::BandCenter);
    spec.grid = vec![1.1, 3.0, 6.0, 10.0];
    spec.fixed.epochs = 50;
    let result = sweep::run_sweep(&spec, &base, None)?;
    print!("{}", result.to_csv());
    let series = result.series(0.1, |r| result.metric(r));
    let (x, y): (Vec<f64>, Vec<f64>) = series.into_iter().unzip();
    println!("Spearman(peak error, band center) = {:.3}\n", sweep::spearman(&x, &y));

    let mut spec = SweepSpec::default_for(SweepKind::FrequencyRatio);
    spec.grid = vec![10.0, 30.0, 50.0];
    let result = sweep::run_sweep(&spec, &base, None)?;
    print!("{}", result.to_csv());
    for c in &result.error_curves {
        println!(
            "point {}: mean error r in [0.8, 1.2] {:.2}%, [2, 3] {:.2}%, [4.5, 5] {:.2}%",
            c.point_id,
            c.mean_in(0.8, 1.2),
            c.mean_in(2.0, 3.0),
            c.mean_in(4.5, 5.0)
        );
    }
    Ok(())
}
