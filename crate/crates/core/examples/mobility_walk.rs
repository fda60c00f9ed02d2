//! Cell occupancy of the random walk under both edge rules.

use peersched::rng::{streams, SimRng};
use peersched::topology::{advance_mobility, EdgeRule, GridSpec, TopologyState};

fn occupancy(rule: EdgeRule, steps: usize) -> Vec<f64> {
    let grid = GridSpec::new(4, 4, 0.5).unwrap().with_edge_rule(rule);
    let mut state = TopologyState::new(1, 0, grid.cells());
    let mut rng = SimRng::new(7, streams::MOBILITY);
    let mut counts = vec![0u64; grid.cells()];
    for _ in 0..steps {
        advance_mobility(&mut state, &grid, &mut rng);
        counts[state.position(0)] += 1;
    }
    counts.iter().map(|&c| c as f64 / steps as f64).collect()
}

fn main() {
    let steps = 200_000;
    for rule in [EdgeRule::Stay, EdgeRule::Redistribute] {
        println!("{rule:?} (uniform would be {:.4})", 1.0 / 16.0);
        for row in occupancy(rule, steps).chunks(4) {
            let cells: Vec<String> = row.iter().map(|p| format!("{p:.4}")).collect();
            println!("  {}", cells.join(" "));
        }
    }
}
