//! Drift-plus-penalty controller.
//!
//! Each slot the controller picks an auxiliary rate `gamma_k` per user, a
//! transmission matrix maximising `sum mu_nk * f_nk * W_nk` over the
//! feasible set, and then updates the two virtual queues per user:
//!
//! ```text
//! W_nk     = Q_k + 1{n is a user} * H_n - alpha_k * H_k
//! H_k(t+1) = max(H_k + alpha_k * x_k - beta_k - y_k, 0)
//! Q_k(t+1) = max(Q_k + gamma_k - x_k, 0)
//! ```
//!
//! In the cell-partitioned model access points and subcells do not
//! interact, so the matrix maximisation splits into one argmax per access
//! point and one per subcell.

mod sim;
mod utility;

pub use sim::{SlotMetrics, Simulation};
pub use utility::{choose_gamma, UtilitySpec};

use thiserror::Error;

use crate::files::{FileState, FilesError};
use crate::topology::{users_in_reach, TopologyState, TransmissionMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedError {
    #[error("invalid utility specification `{0}`")]
    Utility(String),
    #[error("user {user}: {reason}")]
    User { user: usize, reason: String },
    #[error("{what}: expected {expected} entries, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("slot {slot}: scheduled matrix is not feasible")]
    Infeasible { slot: u64 },
    #[error("slot {slot}: access point served user {user} above the reputation threshold")]
    ReputationThreshold { slot: u64, user: usize },
    #[error(transparent)]
    Files(#[from] FilesError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserConfig {
    pub alpha: f64,
    pub beta: f64,
    pub x_max: u32,
    pub utility: UtilitySpec,
}

impl UserConfig {
    pub fn new(alpha: f64, beta: f64, x_max: u32, utility: UtilitySpec) -> Self {
        Self {
            alpha,
            beta,
            x_max,
            utility,
        }
    }

    pub fn validate(&self, user: usize) -> Result<(), SchedError> {
        let fail = |reason: &str| {
            Err(SchedError::User {
                user,
                reason: reason.to_string(),
            })
        };
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be non-negative");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail("beta must be non-negative");
        }
        if self.x_max == 0 {
            return fail("x_max must be at least 1");
        }
        self.utility.validate(self.x_max)
    }

    /// Deterministic bound `V*nu + x_max` on `Q_k`, when the utility has
    /// bounded slope.
    pub fn queue_bound(&self, v: f64) -> Option<f64> {
        self.utility
            .max_slope()
            .map(|nu| v * nu + f64::from(self.x_max))
    }
}

/// `Theta(t)`: the data queues `Q` and reputation queues `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualQueueState {
    pub q: Vec<f64>,
    pub h: Vec<f64>,
}

impl VirtualQueueState {
    pub fn zeros(users: usize) -> Self {
        Self {
            q: vec![0.0; users],
            h: vec![0.0; users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.q.len()
    }
}

/// Everything decided on one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    pub gamma: Vec<f64>,
    pub mu: TransmissionMatrix,
    /// Packets received by each user.
    pub x: Vec<u32>,
    /// Packets uploaded by each user.
    pub y: Vec<u32>,
}

/// `W_nk(t)`.
pub fn weight(sender: usize, k: usize, queues: &VirtualQueueState, cfg: &UserConfig) -> f64 {
    let sender_rep = if sender < queues.num_users() {
        queues.h[sender]
    } else {
        0.0
    };
    queues.q[k] + sender_rep - cfg.alpha * queues.h[k]
}

/// Argmax of `f_ak * S_ak * (Q_k - alpha_k * H_k)` over users in reach of
/// `ap`. `None` when no term with positive rate is non-negative. Ties go to
/// the lowest user id.
pub fn schedule_access_point(
    ap: usize,
    state: &TopologyState,
    queues: &VirtualQueueState,
    files: &FileState,
    users: &[UserConfig],
) -> Option<(usize, u32)> {
    let mut best: Option<(usize, u32, f64)> = None;
    for k in users_in_reach(ap, state) {
        if !files.has_file(ap, k) {
            continue;
        }
        let s = state.rate(ap, k);
        let value = f64::from(s) * weight(ap, k, queues, &users[k]);
        if value < 0.0 {
            continue;
        }
        if best.is_none_or(|(_, _, b)| value > b) {
            best = Some((k, s, value));
        }
    }
    best.map(|(k, s, _)| (k, s))
}

/// Argmax of `f_ak * S_ak * (Q_k + H_a - alpha_k * H_k)` over ordered user
/// pairs in `cell`. `None` when no eligible pair is non-negative. Ties go
/// to the lexicographically smallest `(sender, receiver)`.
pub fn schedule_subcell(
    cell: usize,
    state: &TopologyState,
    queues: &VirtualQueueState,
    files: &FileState,
    users: &[UserConfig],
) -> Option<(usize, usize, u32)> {
    best_pair(&state.users_in_cell(cell), state, queues, files, users)
}

fn best_pair(
    members: &[usize],
    state: &TopologyState,
    queues: &VirtualQueueState,
    files: &FileState,
    users: &[UserConfig],
) -> Option<(usize, usize, u32)> {
    let mut best: Option<(usize, usize, u32, f64)> = None;
    for &a in members {
        for &k in members {
            if a == k || !files.has_file(a, k) {
                continue;
            }
            let s = state.rate(a, k);
            if s == 0 {
                continue;
            }
            let value = f64::from(s) * weight(a, k, queues, &users[k]);
            if value < 0.0 {
                continue;
            }
            if best.is_none_or(|(_, _, _, b)| value > b) {
                best = Some((a, k, s, value));
            }
        }
    }
    best.map(|(a, k, s, _)| (a, k, s))
}

/// Union of the per-access-point and per-subcell selections.
pub fn decide_transmissions(
    state: &TopologyState,
    queues: &VirtualQueueState,
    files: &FileState,
    users: &[UserConfig],
) -> TransmissionMatrix {
    let mut mu = TransmissionMatrix::new();
    for ap in state.access_points() {
        if let Some((k, s)) = schedule_access_point(ap, state, queues, files, users) {
            mu.set(ap, k, s);
        }
    }
    for members in state.cell_members() {
        if let Some((a, k, s)) = best_pair(&members, state, queues, files, users) {
            mu.set(a, k, s);
        }
    }
    mu
}

/// `x_k = sum_a mu_ak f_ak` and `y_k = sum_b mu_kb f_kb`.
pub fn derive_rates(mu: &TransmissionMatrix, files: &FileState, users: usize) -> (Vec<u32>, Vec<u32>) {
    let mut x = vec![0u32; users];
    let mut y = vec![0u32; users];
    for ((n, k), p) in mu.iter() {
        if !files.has_file(n, k) {
            continue;
        }
        x[k] += p;
        if n < users {
            y[n] += p;
        }
    }
    (x, y)
}

/// `sum_nk mu_nk * f_nk * W_nk`, the quantity the transmission decision
/// maximises.
pub fn transmission_objective(
    mu: &TransmissionMatrix,
    queues: &VirtualQueueState,
    files: &FileState,
    users: &[UserConfig],
) -> f64 {
    mu.iter()
        .filter(|&((n, k), _)| files.has_file(n, k))
        .map(|((n, k), p)| f64::from(p) * weight(n, k, queues, &users[k]))
        .sum()
}

pub fn update_queues(
    queues: &VirtualQueueState,
    decision: &SlotDecision,
    users: &[UserConfig],
) -> VirtualQueueState {
    let mut next = queues.clone();
    for (k, cfg) in users.iter().enumerate() {
        let x = f64::from(decision.x[k]);
        let y = f64::from(decision.y[k]);
        next.h[k] = (queues.h[k] + cfg.alpha * x - cfg.beta - y).max(0.0);
        next.q[k] = (queues.q[k] + decision.gamma[k] - x).max(0.0);
    }
    next
}
