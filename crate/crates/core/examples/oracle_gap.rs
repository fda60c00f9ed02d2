//! Utility achieved by the controller against the brute-force optimum on
//! a two-user instance.

use peersched::config::KvConfig;
use peersched::oracle::{gap_curve, optimal_utility, OracleSettings, TinyInstance};

fn main() {
    let text = include_str!("data/symmetric_pair.conf");
    let inst = TinyInstance::from_config(&KvConfig::parse(text).unwrap()).unwrap();
    let settings = OracleSettings::default();
    let best = optimal_utility(&inst, &settings).unwrap();
    println!("phi* = {:.6} at x = {:?}, y = {:?}", best.utility, best.x, best.y);
    println!("{:>6} {:>10} {:>10}", "V", "achieved", "gap");
    for p in gap_curve(&inst, &[1.0, 10.0, 100.0], 200_000, 3, &settings).unwrap() {
        println!("{:>6} {:>10.6} {:>10.6}", p.v, p.achieved, p.gap());
    }
}
