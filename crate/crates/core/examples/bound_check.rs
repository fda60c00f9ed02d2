//! Deterministic queue bounds and how far a run stays below them.

use peersched::experiment::{run, ExperimentConfig};

fn main() {
    let cfg = ExperimentConfig {
        slots: 20_000,
        ..ExperimentConfig::default()
    };
    let report = run(&cfg).expect("run").report;
    let c = report.constants.as_ref().expect("bounded utilities");
    println!("B = {:.3}  C0 = {:.4}  C1 = {:.2}  C2 = {:.2}", c.b, c.c0, c.c1, c.c2);
    let q = &report.bounds.queue_bound;
    let worst = q.max_q.iter().copied().fold(0.0, f64::max);
    println!("max Q = {worst}  bound = {:?}  pass = {}", q.bound[0], q.pass);
    if let Some(n) = &report.bounds.norm_bound {
        println!("max |Theta| = {:.3}  bound = {:.1}  pass = {}", n.max_norm, n.bound, n.pass);
    }
    for w in &report.bounds.windows {
        println!(
            "T = {:>6}: tit-for-tat residual {:+.5} (margin {:+.4}), gamma residual {:+.5} (margin {:+.5})",
            w.window, w.max_tft_residual, w.tft_margin, w.max_aux_residual, w.aux_margin
        );
    }
}
