//! One slot of the controller next to an exhaustive search over every
//! feasible transmission matrix.

use peersched::files::FileState;
use peersched::oracle::{enumerate_feasible, DEFAULT_ENUMERATION_CAP};
use peersched::scheduler::{decide_transmissions, transmission_objective, UserConfig, UtilitySpec, VirtualQueueState};
use peersched::topology::TopologyState;

fn main() {
    // users 0..3, AP 3; users 0 and 1 share cell 0, user 2 is in cell 1
    let mut s = TopologyState::new(3, 1, 2);
    s.set_position(2, 1).unwrap();
    s.set_rate(0, 1, 1);
    s.set_rate(1, 0, 1);
    s.set_rate(3, 0, 2);
    s.set_rate(3, 2, 1);
    let files = FileState::from_holders(3, 4, vec![vec![1, 3], vec![0, 3], vec![3]]);
    let users = vec![UserConfig::new(0.5, 0.05, 3, UtilitySpec::LogOnePlus { nu: 1.0 }); 3];
    let queues = VirtualQueueState {
        q: vec![2.0, 5.0, 4.0],
        h: vec![1.0, 6.0, 0.0],
    };

    let mu = decide_transmissions(&s, &queues, &files, &users);
    println!("controller: {:?}", mu.iter().collect::<Vec<_>>());
    println!("objective:  {}", transmission_objective(&mu, &queues, &files, &users));

    let all = enumerate_feasible(&s, &[3, 3, 3], DEFAULT_ENUMERATION_CAP).unwrap();
    let best = all
        .iter()
        .map(|m| transmission_objective(m, &queues, &files, &users))
        .fold(f64::NEG_INFINITY, f64::max);
    println!("exhaustive: {best} over {} feasible matrices", all.len());
}
