//! Generate a banded curriculum, train the amplitude-phase network and watch
//! its equilibrium eigenvalues converge.
//!
//! `cargo run --release --example train_curriculum -- [epochs]`

use oscnet::pipeline::Pipeline;
use oscnet::stability;

fn main() -> oscnet::Result<()> {
    let epochs = std::env::args().nth(1).map_or(Ok(100), |s| s.parse()).expect("epochs must be an integer");
    let mut p = Pipeline::ls1();
    p.training.epochs = epochs;
    p.reseed(1);

    let data = p.dataset()?;
    for d in data.iter().take(3) {
        println!("trajectory: omega = {:.4}, |ic| = {:.3}", d.forcing.omega().unwrap_or(0.0), d.ic_magnitude);
    }
    let samples = p.samples(&data)?;
    println!("{} trajectories, {} samples", data.len(), samples.len());

    let outcome = p.train_observed(|r| {
        if r.epoch % 10 == 0 || r.epoch == 1 {
            println!("epoch {:4}  loss {:.4e}  lr {:.1e}  lambda = {:+.5} {:+.5}i", r.epoch, r.loss, r.lr, r.eig_re, r.eig_im);
        }
    })?;
    let (re, im) = stability::equilibrium_eigenvalues(&outcome.net).eigenvalues.leading();
    let (tre, tim) = stability::true_eigenvalues(&p.system).leading();
    println!("learned {re:+.5} {im:+.5}i   exact {tre:+.5} {tim:+.5}i");
    Ok(())
}
