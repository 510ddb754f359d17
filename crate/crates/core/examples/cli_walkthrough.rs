//! Drive the command-line front end in-process: generate, train, FRC and
//! stability for a quick configuration.
//!
//! `cargo run --release --example cli_walkthrough -- [out_dir]`

use oscnet::cli;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("oscnet-walkthrough").display().to_string());
    let config = std::path::Path::new(&out).join("quick.toml");
    std::fs::create_dir_all(&out).expect("create output directory");
    std::fs::write(&config, "[training]\nepochs = 20\n[frc]\nn_points = 40\n").expect("write config");

    for cmd in ["generate", "train", "forecast", "frc", "stability"] {
        let args = ["oscnet", cmd, "--config", config.to_str().unwrap(), "--out", &out, "--workers", "1"];
        let code = cli::run_from(args);
        println!("{cmd}: exit {code}");
        if code != 0 {
            std::process::exit(code);
        }
    }
}
