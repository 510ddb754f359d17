//! Frequency response curve of a trained network against the exact curve,
//! written as CSV and SVG.
//!
//! `cargo run --release --example frc_curve -- [points] [out_dir]`

use std::path::PathBuf;

use oscnet::frc;
use oscnet::pipeline::Pipeline;

fn main() -> oscnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let points = args.next().map_or(Ok(100), |s| s.parse()).expect("points must be an integer");
    let out = args.next().map_or_else(std::env::temp_dir, PathBuf::from);

    let mut p = Pipeline::ls1();
    p.frc.n_points = points;
    let net = p.train()?.net;
    let eval = p.evaluate(&net, None)?;
    let r = &eval.report;
    println!(
        "shape error {:.3}%  peak error {:.3}%  resonance error {:.3}%  (peak at r = {:.4})",
        r.shape_error_pct, r.peak_error_pct, r.resonance_error_pct, r.peak_freq_estimate
    );

    let oracle = p.oracle_frc(None)?;
    let o = frc::frc_metrics(&oracle.curve, &eval.exact.curve)?;
    println!("envelope pipeline on exact trajectories: shape error {:.4}%", o.shape_error_pct);

    eval.predicted.curve.save_csv(out.join("frc_network.csv"))?;
    let svg = frc::frc_svg("LS-1 response", "amplitude", &[("exact", &eval.exact.curve), ("network", &eval.predicted.curve)]);
    std::fs::write(out.join("frc.svg"), svg).map_err(|e| oscnet::Error::Config(e.to_string()))?;
    println!("wrote {}", out.join("frc.svg").display());
    Ok(())
}
