//! Base excitation in relative coordinates: train on relative motion, then
//! recover the absolute transmissibility and its unit crossing at r = sqrt(2).
//!
//! `cargo run --release --example base_excitation -- [xi] [epochs]`

use oscnet::pipeline::Pipeline;

fn main() -> oscnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let xi: f64 = args.next().map_or(Ok(0.2), |s| s.parse()).expect("xi must be a number");
    let epochs = args.next().map_or(Ok(300), |s| s.parse()).expect("epochs must be an integer");

    let mut p = Pipeline::preset("ls1-base")?;
    p.system.xi = xi;
    p.training.epochs = epochs;
    p.frc.band = (0.5, 3.0);
    p.frc.n_points = 126;
    let net = p.train()?.net;
    let eval = p.evaluate(&net, None)?;
    println!("relative FRC: peak error {:.3}%, shape error {:.3}%", eval.report.peak_error_pct, eval.report.shape_error_pct);

    let (abs_pred, abs_exact) = (eval.predicted.absolute.unwrap(), eval.exact.absolute.unwrap());
    let i = abs_exact
        .freqs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 2f64.sqrt()).abs().total_cmp(&(b.1 - 2f64.sqrt()).abs()))
        .map(|(i, _)| i)
        .unwrap();
    println!(
        "|X/Y| at r = {:.4}: network {:.4}, exact {:.4}",
        abs_exact.freqs[i], abs_pred.amplitudes[i], abs_exact.amplitudes[i]
    );
    println!(
        "|X/Y| peak: network {:.4} at r = {:.4}, exact {:.4} at r = {:.4}",
        abs_pred.peak_amplitude, abs_pred.peak_freq, abs_exact.peak_amplitude, abs_exact.peak_freq
    );
    Ok(())
}
