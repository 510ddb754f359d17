//! Build the three operator layouts, evaluate them and check the analytic
//! Jacobian against central differences.
//!
//! `cargo run --release --example network_jacobian`

use oscnet::network::{ArchitectureConfig, Extras, OperatorNetwork, Variant};
use oscnet::oscillator::StateVec;

fn main() -> oscnet::Result<()> {
    let x = StateVec::new(0.3, -0.7);
    for variant in [Variant::BranchTrunk, Variant::StateOnly, Variant::AmplitudePhase] {
        let net = OperatorNetwork::init(&ArchitectureConfig::default_for(variant), 7)?;
        let extras = variant.takes_forcing().then_some(Extras { t: 1.5, u: 0.4 });
        let g = net.forward(x, extras)?;
        let jac = net.jacobian(x, extras)?;

        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for col in 0..2 {
            let (mut up, mut dn) = (x, x);
            if col == 0 {
                up.q += h;
                dn.q -= h;
            } else {
                up.qdot += h;
                dn.qdot -= h;
            }
            let (a, b) = (net.forward(up, extras)?, net.forward(dn, extras)?);
            let fd = [(a.q - b.q) / (2.0 * h), (a.qdot - b.qdot) / (2.0 * h)];
            for row in 0..2 {
                worst = worst.max((fd[row] - jac.0[row][col]).abs());
            }
        }
        let scale = jac.0.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let text = net.to_text();
        let back = OperatorNetwork::from_text(&text)?;
        println!(
            "{}: {:>5} parameters  G(x) = ({:+.3e}, {:+.3e})  |J - J_fd| / |J| = {:.1e}  text round-trip exact: {}",
            variant.tag(),
            net.parameter_count(),
            g.q,
            g.qdot,
            worst / scale,
            back.forward(x, extras)? == g
        );
    }
    Ok(())
}
