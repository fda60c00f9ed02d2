//! Throughput and backlog against `V` for two tit-for-tat strengths.
//!
//! `cargo run --release --example v_sweep [slots]`

use peersched::experiment::{sweep, ExperimentConfig};

fn main() {
    let cfg = ExperimentConfig {
        slots: std::env::args().nth(1).map_or(20_000, |s| s.parse().expect("slots")),
        ..ExperimentConfig::default()
    };
    let vs = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
    for alpha in [0.5, 0.75] {
        println!("alpha = {alpha}");
        println!("{:>6} {:>10} {:>10} {:>8} {:>8} {:>8}", "V", "throughput", "utility", "mean Q", "max Q", "V+3");
        for r in sweep(&cfg.clone().with_alpha(alpha), &vs).expect("sweep") {
            println!(
                "{:>6} {:>10.4} {:>10.4} {:>8.3} {:>8.3} {:>8}",
                r.v,
                r.throughput,
                r.utility,
                r.mean_q,
                r.max_q,
                r.q_bound.unwrap_or(f64::NAN)
            );
        }
    }
}
