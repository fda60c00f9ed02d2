//! The three-phase scenario: throughput by source in each phase.
//!
//! `cargo run --release --example sample_path [slots]`

use peersched::experiment::{run, ExperimentConfig};

fn main() {
    let mut cfg = ExperimentConfig::default();
    if let Some(slots) = std::env::args().nth(1) {
        cfg.slots = slots.parse().expect("slots must be an integer");
    }
    let report = run(&cfg).expect("run").report;
    println!("phase  p      AP/user  peer/user  peer/AP  mean Q");
    for (i, ph) in report.phases.iter().enumerate() {
        println!(
            "{i:>5}  {:<5}  {:.4}   {:.4}     {:.2}     {:.3}",
            ph.probability,
            ph.ap_throughput,
            ph.p2p_throughput,
            ph.p2p_throughput / ph.ap_throughput,
            ph.mean_q
        );
    }
    println!("max Q = {} (bound {:?}), max H = {:.2}", report.max_q, report.q_bound, report.max_h);
}
