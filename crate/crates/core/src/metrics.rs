//! Time averages, Lyapunov diagnostics and the deterministic queue bounds.
//!
//! With zero initial queues and utilities of bounded slope `nu_k`:
//!
//! ```text
//! Q_k(t)    <= V*nu_k + x_max_k
//! ||Theta|| <= C1 + C2*V
//! C0 = sum_k [phi_k(x_max_k) - phi_k(0)]
//! C1 = B/beta_min + x_max*sqrt(K) + max(1, alpha_max)*x_max*sqrt(2K)
//! C2 = C0/beta_min + nu_max*sqrt(K)
//! ```
//!
//! and over any window of `T` slots the average tit-for-tat excess
//! `alpha*x - beta - y` is at most `H_max/T`, the average `gamma - x` at most
//! `Q_max/T`.

use serde::Serialize;
use thiserror::Error;

use crate::scheduler::{SlotMetrics, UserConfig, UtilitySpec, VirtualQueueState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("user {0} has a utility with unbounded slope")]
    UnboundedSlope(usize),
    #[error("user {0} has a utility that is infinite at zero")]
    InfiniteAtZero(usize),
    #[error("smallest beta is {0}; the reputation bound needs beta > 0")]
    ZeroBeta(f64),
    #[error("y_max has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// `L = 1/2 * sum(Q^2 + H^2)`.
pub fn lyapunov(queues: &VirtualQueueState) -> f64 {
    0.5 * queues
        .q
        .iter()
        .chain(&queues.h)
        .map(|v| v * v)
        .sum::<f64>()
}

/// `||Theta|| = sqrt(sum H^2 + sum Q^2)`.
pub fn theta_norm(queues: &VirtualQueueState) -> f64 {
    (2.0 * lyapunov(queues)).sqrt()
}

/// Upper bound `B` on the per-slot drift constant:
/// `1/2 sum max(alpha x_max, beta + y_max)^2 + 1/2 sum x_max^2`.
pub fn drift_bound_b(users: &[UserConfig], y_max: &[u32]) -> Result<f64, MetricsError> {
    if y_max.len() != users.len() {
        return Err(MetricsError::Dimension {
            expected: users.len(),
            got: y_max.len(),
        });
    }
    Ok(users
        .iter()
        .zip(y_max)
        .map(|(u, &ym)| {
            let xm = f64::from(u.x_max);
            let tft = (u.alpha * xm).max(u.beta + f64::from(ym));
            // gamma and x both live in [0, x_max]
            0.5 * tft * tft + 0.5 * xm * xm
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstants {
    pub b: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub g: f64,
    pub v: f64,
    pub q_max: Vec<f64>,
    pub h_max: Vec<f64>,
}

impl BoundConstants {
    pub fn theta_bound(&self) -> f64 {
        self.c1 + self.c2 * self.v
    }
}

/// Constants of the reputation-queue bound. Requires bounded slopes, finite
/// `phi(0)` and `beta_k > 0` for every user.
///
/// `g` (largest one-slot growth of `||Theta||`) is scaled by
/// `max(1, alpha_max)` so that the bound stays valid for `alpha_k > 1`.
pub fn bound_constants(users: &[UserConfig], b: f64, v: f64) -> Result<BoundConstants, MetricsError> {
    let mut c0 = 0.0;
    let mut nu_max: f64 = 0.0;
    for (k, u) in users.iter().enumerate() {
        let nu = u.utility.max_slope().ok_or(MetricsError::UnboundedSlope(k))?;
        if matches!(u.utility, UtilitySpec::PureLog) {
            return Err(MetricsError::InfiniteAtZero(k));
        }
        c0 += u.utility.value(f64::from(u.x_max)) - u.utility.value(0.0);
        nu_max = nu_max.max(nu);
    }
    let beta_min = users.iter().map(|u| u.beta).fold(f64::INFINITY, f64::min);
    let beta_min = if users.is_empty() { 1.0 } else { beta_min };
    if beta_min <= 0.0 {
        return Err(MetricsError::ZeroBeta(beta_min));
    }
    let x_max = users.iter().map(|u| f64::from(u.x_max)).fold(0.0, f64::max);
    let alpha_max = users.iter().map(|u| u.alpha).fold(0.0, f64::max);
    let k = users.len() as f64;
    let g = alpha_max.max(1.0) * x_max * (2.0 * k).sqrt();
    let c1 = b / beta_min + x_max * k.sqrt() + g;
    let c2 = c0 / beta_min + nu_max * k.sqrt();
    Ok(BoundConstants {
        b,
        c0,
        c1,
        c2,
        g,
        v,
        q_max: users
            .iter()
            .map(|u| u.queue_bound(v).unwrap_or(f64::INFINITY))
            .collect(),
        h_max: vec![c1 + c2 * v; users.len()],
    })
}

/// Running sums over a run (or part of one).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceAccumulator {
    pub slots: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub gamma: Vec<f64>,
    pub ap_x: Vec<f64>,
    pub peer_x: Vec<f64>,
    /// Sum over slots of the mean `Q` across users.
    pub mean_q_sum: f64,
    pub max_q: f64,
    pub max_h: f64,
    pub max_norm: f64,
}

impl TraceAccumulator {
    pub fn new(users: usize) -> Self {
        Self {
            x: vec![0.0; users],
            y: vec![0.0; users],
            gamma: vec![0.0; users],
            ap_x: vec![0.0; users],
            peer_x: vec![0.0; users],
            ..Self::default()
        }
    }

    pub fn record(&mut self, m: &SlotMetrics) {
        self.slots += 1;
        for k in 0..self.x.len() {
            self.x[k] += f64::from(m.x[k]);
            self.y[k] += f64::from(m.y[k]);
            self.gamma[k] += m.gamma[k];
            self.ap_x[k] += f64::from(m.ap_x[k]);
            self.peer_x[k] += f64::from(m.x[k] - m.ap_x[k]);
        }
        let q = &m.queues.q;
        if !q.is_empty() {
            self.mean_q_sum += q.iter().sum::<f64>() / q.len() as f64;
        }
        self.max_q = q.iter().copied().fold(self.max_q, f64::max);
        self.max_h = m.queues.h.iter().copied().fold(self.max_h, f64::max);
        self.max_norm = self.max_norm.max(theta_norm(&m.queues));
    }

    fn avg(&self, v: &[f64]) -> Vec<f64> {
        let n = self.slots.max(1) as f64;
        v.iter().map(|s| s / n).collect()
    }

    pub fn x_avg(&self) -> Vec<f64> {
        self.avg(&self.x)
    }

    pub fn y_avg(&self) -> Vec<f64> {
        self.avg(&self.y)
    }

    pub fn gamma_avg(&self) -> Vec<f64> {
        self.avg(&self.gamma)
    }

    /// Mean per-user download rate, averaged over users.
    pub fn throughput(&self) -> f64 {
        mean(&self.x_avg())
    }

    pub fn ap_throughput(&self) -> f64 {
        mean(&self.avg(&self.ap_x))
    }

    pub fn peer_throughput(&self) -> f64 {
        mean(&self.avg(&self.peer_x))
    }

    pub fn mean_q(&self) -> f64 {
        self.mean_q_sum / self.slots.max(1) as f64
    }

    /// `sum_k phi_k(xbar_k)`.
    pub fn utility(&self, users: &[UserConfig]) -> f64 {
        total_utility(users, &self.x_avg())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn total_utility(users: &[UserConfig], rates: &[f64]) -> f64 {
    users
        .iter()
        .zip(rates)
        .map(|(u, &x)| u.utility.value(x))
        .sum()
}

/// A full record of a run, starting from `initial`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub initial: VirtualQueueState,
    pub slots: Vec<SlotMetrics>,
    pub users: Vec<UserConfig>,
}

impl Trace {
    pub fn new(users: Vec<UserConfig>) -> Self {
        Self {
            initial: VirtualQueueState::zeros(users.len()),
            slots: Vec::new(),
            users,
        }
    }

    /// `Theta(t)` for `t` in `0..=len`.
    pub fn queues_at(&self, t: usize) -> &VirtualQueueState {
        if t == 0 {
            &self.initial
        } else {
            &self.slots[t - 1].queues
        }
    }

    /// Drift `L(t+1) - L(t)`.
    pub fn drift(&self, t: usize) -> f64 {
        lyapunov(self.queues_at(t + 1)) - lyapunov(self.queues_at(t))
    }
}

/// Window averages of `alpha x - beta - y` and `gamma - x` for each user over
/// slots `t..t + window`.
pub fn residuals(trace: &Trace, t: usize, window: usize) -> Vec<(f64, f64)> {
    let slots = &trace.slots[t..t + window];
    trace
        .users
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let (mut tft, mut aux) = (0.0, 0.0);
            for m in slots {
                let x = f64::from(m.x[k]);
                tft += u.alpha * x - u.beta - f64::from(m.y[k]);
                aux += m.gamma[k] - x;
            }
            (tft / window as f64, aux / window as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueBoundCheck {
    pub max_q: Vec<f64>,
    pub bound: Vec<Option<f64>>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormBoundCheck {
    pub max_norm: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowCheck {
    pub window: usize,
    pub windows_checked: u64,
    /// Largest window average of `alpha x - beta - y` over users and starts.
    pub max_tft_residual: f64,
    /// Largest `residual - H_max/T` (non-positive when the bound holds).
    pub tft_margin: f64,
    pub max_aux_residual: f64,
    pub aux_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub queue_bound: QueueBoundCheck,
    pub norm_bound: Option<NormBoundCheck>,
    pub windows: Vec<WindowCheck>,
    pub pass: bool,
}

/// Streaming checker for the three deterministic bounds. Assumes the run
/// starts from empty queues.
///
/// Window residuals are checked for every start position by keeping a ring
/// of per-user prefix sums as long as the largest window.
#[derive(Debug, Clone)]
pub struct BoundMonitor {
    users: Vec<UserConfig>,
    q_bound: Vec<Option<f64>>,
    constants: Option<BoundConstants>,
    max_q: Vec<f64>,
    max_norm: f64,
    windows: Vec<usize>,
    ring: Vec<Vec<(f64, f64)>>,
    prefix: Vec<(f64, f64)>,
    seen: usize,
    window_stats: Vec<WindowCheck>,
}

impl BoundMonitor {
    pub fn new(users: &[UserConfig], v: f64, constants: Option<BoundConstants>, windows: &[usize]) -> Self {
        let windows: Vec<usize> = windows.iter().copied().filter(|&w| w > 0).collect();
        let span = windows.iter().copied().max().unwrap_or(0) + 1;
        Self {
            users: users.to_vec(),
            q_bound: users.iter().map(|u| u.queue_bound(v)).collect(),
            constants,
            max_q: vec![0.0; users.len()],
            max_norm: 0.0,
            ring: vec![vec![(0.0, 0.0); users.len()]; span],
            prefix: vec![(0.0, 0.0); users.len()],
            seen: 0,
            window_stats: windows
                .iter()
                .map(|&w| WindowCheck {
                    window: w,
                    windows_checked: 0,
                    max_tft_residual: f64::NEG_INFINITY,
                    tft_margin: f64::NEG_INFINITY,
                    max_aux_residual: f64::NEG_INFINITY,
                    aux_margin: f64::NEG_INFINITY,
                    pass: true,
                })
                .collect(),
            windows,
        }
    }

    pub fn observe(&mut self, m: &SlotMetrics) {
        for (k, &q) in m.queues.q.iter().enumerate() {
            self.max_q[k] = self.max_q[k].max(q);
        }
        self.max_norm = self.max_norm.max(theta_norm(&m.queues));
        if self.windows.is_empty() {
            return;
        }
        for (k, u) in self.users.iter().enumerate() {
            let x = f64::from(m.x[k]);
            self.prefix[k].0 += u.alpha * x - u.beta - f64::from(m.y[k]);
            self.prefix[k].1 += m.gamma[k] - x;
        }
        self.seen += 1;
        let span = self.ring.len();
        self.ring[self.seen % span].clone_from(&self.prefix);
        let Some(c) = &self.constants else {
            return;
        };
        for (stat, &w) in self.window_stats.iter_mut().zip(&self.windows) {
            if self.seen < w {
                continue;
            }
            let start = &self.ring[(self.seen - w) % span];
            stat.windows_checked += 1;
            for (k, (now, then)) in self.prefix.iter().zip(start).enumerate() {
                let tft = (now.0 - then.0) / w as f64;
                let aux = (now.1 - then.1) / w as f64;
                let tft_margin = tft - c.h_max[k] / w as f64;
                let aux_margin = aux - c.q_max[k] / w as f64;
                stat.max_tft_residual = stat.max_tft_residual.max(tft);
                stat.max_aux_residual = stat.max_aux_residual.max(aux);
                stat.tft_margin = stat.tft_margin.max(tft_margin);
                stat.aux_margin = stat.aux_margin.max(aux_margin);
                if tft_margin > 0.0 || aux_margin > 0.0 {
                    stat.pass = false;
                }
            }
        }
    }

    pub fn report(&self) -> BoundReport {
        let queue_bound = QueueBoundCheck {
            pass: self
                .max_q
                .iter()
                .zip(&self.q_bound)
                .all(|(&q, b)| b.is_none_or(|b| q <= b)),
            max_q: self.max_q.clone(),
            bound: self.q_bound.clone(),
        };
        let norm_bound = self.constants.as_ref().map(|c| NormBoundCheck {
            max_norm: self.max_norm,
            bound: c.theta_bound(),
            pass: self.max_norm <= c.theta_bound(),
        });
        let windows = if self.constants.is_some() {
            self.window_stats.clone()
        } else {
            Vec::new()
        };
        let pass = queue_bound.pass
            && norm_bound.as_ref().is_none_or(|n| n.pass)
            && windows.iter().all(|w| w.pass);
        BoundReport {
            queue_bound,
            norm_bound,
            windows,
            pass,
        }
    }
}

/// Checks a recorded trace against the bounds (zero initial queues assumed).
pub fn check_trace(trace: &Trace, v: f64, constants: Option<BoundConstants>, windows: &[usize]) -> BoundReport {
    let mut monitor = BoundMonitor::new(&trace.users, v, constants, windows);
    for m in &trace.slots {
        monitor.observe(m);
    }
    monitor.report()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_user() -> UserConfig {
        UserConfig::new(0.5, 0.05, 3, UtilitySpec::LogOnePlus { nu: 1.0 })
    }

    fn slot(q: f64, h: f64, x: u32, y: u32, gamma: f64) -> SlotMetrics {
        SlotMetrics {
            slot: 0,
            gamma: vec![gamma],
            x: vec![x],
            y: vec![y],
            ap_x: vec![x],
            queues: VirtualQueueState {
                q: vec![q],
                h: vec![h],
            },
        }
    }

    #[test]
    fn lyapunov_values() {
        assert_eq!(lyapunov(&VirtualQueueState::zeros(3)), 0.0);
        let th = VirtualQueueState {
            q: vec![2.0],
            h: vec![2.0],
        };
        assert_eq!(lyapunov(&th), 4.0);
        let th = VirtualQueueState {
            q: vec![3.0, 4.0],
            h: vec![0.0, 0.0],
        };
        assert_eq!(theta_norm(&th), 5.0);
    }

    #[test]
    fn drift_matches_norm_difference() {
        let mut tr = Trace::new(vec![log_user()]);
        tr.slots.push(slot(3.0, 1.0, 0, 0, 3.0));
        tr.slots.push(slot(1.0, 4.0, 0, 0, 0.0));
        let n1 = theta_norm(tr.queues_at(1));
        let n2 = theta_norm(tr.queues_at(2));
        assert!((tr.drift(1) - (0.5 * n2 * n2 - 0.5 * n1 * n1)).abs() < 1e-12);
    }

    #[test]
    fn b_single_user() {
        let b = drift_bound_b(&[log_user()], &[2]).unwrap();
        assert!((b - 6.60125).abs() < 1e-12, "{b}");
        assert_eq!(drift_bound_b(&[], &[]).unwrap(), 0.0);
        let two = drift_bound_b(&[log_user(), log_user()], &[2, 2]).unwrap();
        assert!((two - 2.0 * b).abs() < 1e-12);
        assert!(drift_bound_b(&[log_user()], &[]).is_err());
    }

    #[test]
    fn constants_single_user() {
        let c = bound_constants(&[log_user()], 6.60125, 10.0).unwrap();
        assert!((c.c0 - 4f64.ln()).abs() < 1e-12);
        assert!((c.c1 - (132.025 + 3.0 * (1.0 + 2f64.sqrt()))).abs() < 1e-9);
        assert!((c.c1 - 139.268).abs() < 1e-3);
        assert!((c.c2 - 28.726).abs() < 1e-3);
        assert_eq!(c.q_max, vec![13.0]);
        assert!((c.h_max[0] - (c.c1 + 10.0 * c.c2)).abs() < 1e-12);
    }

    #[test]
    fn larger_beta_shrinks_constants() {
        let mut u = log_user();
        let a = bound_constants(&[u], 6.0, 10.0).unwrap();
        u.beta = 0.5;
        let b = bound_constants(&[u], 6.0, 10.0).unwrap();
        assert!(b.c1 < a.c1 && b.c2 < a.c2);
    }

    #[test]
    fn constants_reject_unbounded_or_zero_beta() {
        let u = UserConfig::new(0.5, 0.05, 3, UtilitySpec::PureLog);
        assert_eq!(bound_constants(&[u], 1.0, 1.0), Err(MetricsError::UnboundedSlope(0)));
        let mut u = log_user();
        u.beta = 0.0;
        assert!(matches!(bound_constants(&[u], 1.0, 1.0), Err(MetricsError::ZeroBeta(_))));
    }

    #[test]
    fn corrupted_trace_fails_queue_bound() {
        let mut tr = Trace::new(vec![log_user()]);
        tr.slots.push(slot(5.0, 0.0, 1, 0, 1.0));
        let c = bound_constants(&[log_user()], 6.6, 10.0).unwrap();
        assert!(check_trace(&tr, 10.0, Some(c.clone()), &[1]).pass);
        tr.slots.push(slot(14.0, 0.0, 0, 0, 0.0));
        let r = check_trace(&tr, 10.0, Some(c), &[1]);
        assert!(!r.queue_bound.pass);
        assert!(!r.pass);
    }

    #[test]
    fn idle_window_residual() {
        let mut tr = Trace::new(vec![log_user()]);
        for _ in 0..10 {
            tr.slots.push(slot(0.0, 0.0, 0, 0, 0.0));
        }
        let r = residuals(&tr, 2, 5);
        assert!((r[0].0 + 0.05).abs() < 1e-15);
        assert_eq!(r[0].1, 0.0);
    }

    #[test]
    fn monitor_matches_direct_residuals() {
        let users = vec![log_user()];
        let mut tr = Trace::new(users.clone());
        let pattern = [(2u32, 0u32, 3.0), (0, 1, 0.5), (1, 0, 1.0), (3, 1, 2.0)];
        let mut q: f64 = 0.0;
        let mut h: f64 = 0.0;
        for i in 0..40 {
            let (x, y, g) = pattern[i % 4];
            q = (q + g - f64::from(x)).max(0.0);
            h = (h + 0.5 * f64::from(x) - 0.05 - f64::from(y)).max(0.0);
            tr.slots.push(slot(q, h, x, y, g));
        }
        let c = bound_constants(&users, 6.6, 10.0).unwrap();
        let report = check_trace(&tr, 10.0, Some(c), &[4, 7]);
        for w in &report.windows {
            let direct = (0..=40 - w.window)
                .map(|t| residuals(&tr, t, w.window)[0])
                .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |a, r| (a.0.max(r.0), a.1.max(r.1)));
            assert!((w.max_tft_residual - direct.0).abs() < 1e-12);
            assert!((w.max_aux_residual - direct.1).abs() < 1e-12);
            assert_eq!(w.windows_checked as usize, 41 - w.window);
        }
    }

    #[test]
    fn accumulator_split_conserves_packets() {
        let mut acc = TraceAccumulator::new(2);
        let m = SlotMetrics {
            slot: 0,
            gamma: vec![1.0, 1.0],
            x: vec![3, 1],
            y: vec![0, 1],
            ap_x: vec![2, 0],
            queues: VirtualQueueState::zeros(2),
        };
        acc.record(&m);
        acc.record(&m);
        let total: f64 = acc.x.iter().sum();
        let split: f64 = acc.ap_x.iter().sum::<f64>() + acc.peer_x.iter().sum::<f64>();
        assert_eq!(total, split);
        assert_eq!(acc.throughput(), 2.0);
        assert_eq!(acc.ap_throughput(), 1.0);
        assert_eq!(acc.peer_throughput(), 1.0);
    }
}
