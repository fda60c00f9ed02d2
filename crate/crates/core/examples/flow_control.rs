//! The auxiliary rate `gamma` chosen for a range of `Q` values.

use peersched::scheduler::{choose_gamma, UtilitySpec};

fn main() {
    let v = 10.0;
    let x_max = 3;
    let utilities = [
        UtilitySpec::LogOnePlus { nu: 1.0 },
        UtilitySpec::PureLog,
        UtilitySpec::PiecewiseLinear { nu: 1.0, theta: 2.0 },
    ];
    print!("{:>6}", "Q");
    for u in &utilities {
        print!("{:>14}", u.to_string());
    }
    println!();
    for q in [0.0, 1.0, 2.5, 5.0, 9.0, 10.0, 11.0, 13.0] {
        print!("{q:>6}");
        for u in &utilities {
            print!("{:>14.4}", choose_gamma(u, q, v, x_max));
        }
        println!();
    }
}
