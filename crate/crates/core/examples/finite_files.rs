//! Finite files: users go idle after their download and come back with a
//! new request after a geometric idle time.

use peersched::experiment::{run, ExperimentConfig};

fn main() {
    let cfg = ExperimentConfig::parse(
        "users = 20\nslots = 20000\nmode = finite\nfile_size = 20-60\nreactivate_prob = 0.01\nphases = 0.2",
    )
    .expect("config");
    let report = run(&cfg).expect("run").report;
    println!(
        "throughput {:.4} (AP {:.4}, peer {:.4}), max Q {}",
        report.throughput, report.ap_throughput, report.p2p_throughput, report.max_q
    );
    for (k, u) in report.per_user.iter().enumerate().take(5) {
        println!("user {k}: x {:.4}  y {:.4}  gamma {:.4}", u.x_avg, u.y_avg, u.gamma_avg);
    }
}
