//! Closed-form oscillator responses checked against RK4 integration.
//!
//! `cargo run --release --example oscillator_oracle`

use oscnet::oscillator::{self, Forcing, StateVec, SystemParams};

fn main() -> oscnet::Result<()> {
    let params = SystemParams::ls1();
    let forcing = Forcing::harmonic(1.0, 3.77);
    let ic = StateVec::new(0.2, 0.0);

    let exact = oscillator::analytic_trajectory(&params, &forcing, ic, 0.01, 10_000)?;
    let rk4 = oscillator::reference_integrate(&params, &forcing, ic, 0.01, 10_000)?;
    let max_err = exact.q.iter().zip(&rk4.q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("RK4 vs closed form over t in [0, 100]: max |dq| = {max_err:.2e}");

    println!("\nsteady amplitude (unit drive):");
    for r in [0.5, 0.9592, 1.0, 2.0, 3.77] {
        println!("  r = {r:<6}  X = {:.5}", oscillator::steady_amplitude(&params, 1.0, r));
    }

    println!("\nabsolute transmissibility |X/Y| at r = sqrt(2):");
    for xi in [0.1, 0.2, 0.5, 1.0] {
        let p = SystemParams::new(xi, 1.0)?;
        println!("  xi = {xi:<4} {:.6}", oscillator::absolute_transmissibility(&p, 2f64.sqrt()));
    }

    let wn = 11.3;
    println!("\nNyquist step bound for a band top of {wn} rad/s: {:.4} s", oscillator::nyquist_dt_max(wn));
    Ok(())
}
