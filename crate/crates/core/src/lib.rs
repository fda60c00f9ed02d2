//! Peer-to-peer scheduling for mobile networks with tit-for-tat
//! reputation queues.
//!
//! Every slot the controller sees the current topology (who is in which
//! cell, channel rates) and chooses a transmission matrix and flow-control
//! variables by minimising a drift-plus-penalty expression over two sets of
//! virtual queues:
//!
//! * `Q_k` tracks the gap between the desired rate `gamma_k` and the
//!   delivered rate `x_k`;
//! * `H_k` tracks how far user `k`'s downloads exceed what it has earned by
//!   uploading (`alpha_k x_k <= beta_k + y_k` on average).
//!
//! Modules:
//!
//! * [`topology`]: grid mobility, channel states, feasible transmission
//!   matrices.
//! * [`files`]: file holders, phase schedules, finite-file bookkeeping.
//! * [`scheduler`]: the per-slot controller and the [`scheduler::Simulation`]
//!   loop.
//! * [`metrics`]: time averages and the deterministic queue bounds.
//! * [`oracle`]: brute-force optimum for tiny instances.
//! * [`experiment`]: configuration, runs, sweeps, CSV/JSON output.

pub mod config;
pub mod experiment;
pub mod files;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod scheduler;
pub mod topology;
