use crate::files::{FileState, PhaseSchedule};
use crate::rng::{streams, SimRng};
use crate::topology::{validate_feasible, TopologyProcess};

use super::{
    choose_gamma, decide_transmissions, derive_rates, update_queues, SchedError, SlotDecision,
    UserConfig, VirtualQueueState,
};

/// Per-slot record produced by [`Simulation::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlotMetrics {
    pub slot: u64,
    pub gamma: Vec<f64>,
    pub x: Vec<u32>,
    pub y: Vec<u32>,
    /// Part of `x` that came from access points.
    pub ap_x: Vec<u32>,
    /// Queues after this slot's update, i.e. `Theta(slot + 1)`.
    pub queues: VirtualQueueState,
}

impl SlotMetrics {
    pub fn ap_packets(&self) -> u64 {
        self.ap_x.iter().map(|&p| u64::from(p)).sum()
    }

    pub fn peer_packets(&self) -> u64 {
        self.x.iter().map(|&p| u64::from(p)).sum::<u64>() - self.ap_packets()
    }
}

/// A running instance of the controller on some topology process.
///
/// The controller's only memory is the queue state; everything else is the
/// environment (topology, files).
#[derive(Debug, Clone)]
pub struct Simulation<P> {
    process: P,
    files: FileState,
    queues: VirtualQueueState,
    users: Vec<UserConfig>,
    x_max: Vec<u32>,
    v: f64,
    slot: u64,
    schedule: Option<PhaseSchedule>,
    files_rng: SimRng,
    reputation_check: bool,
}

impl<P: TopologyProcess> Simulation<P> {
    pub fn new(process: P, files: FileState, users: Vec<UserConfig>, v: f64) -> Result<Self, SchedError> {
        let k = process.current().num_users();
        if users.len() != k {
            return Err(SchedError::Dimension {
                what: "user configs",
                expected: k,
                got: users.len(),
            });
        }
        if files.num_users() != k {
            return Err(SchedError::Dimension {
                what: "file state",
                expected: k,
                got: files.num_users(),
            });
        }
        for (i, u) in users.iter().enumerate() {
            u.validate(i)?;
        }
        if !(v >= 0.0 && v.is_finite()) {
            return Err(SchedError::User {
                user: 0,
                reason: format!("V must be non-negative, got {v}"),
            });
        }
        Ok(Self {
            process,
            files,
            queues: VirtualQueueState::zeros(k),
            x_max: users.iter().map(|u| u.x_max).collect(),
            users,
            v,
            slot: 0,
            schedule: None,
            files_rng: SimRng::new(0, streams::FILES),
            reputation_check: true,
        })
    }

    /// Redraw requests at the schedule's phase boundaries using `rng`.
    pub fn with_phases(mut self, schedule: PhaseSchedule, rng: SimRng) -> Self {
        self.schedule = Some(schedule);
        self.files_rng = rng;
        self
    }

    /// Starts from a non-zero queue state.
    pub fn with_queues(mut self, queues: VirtualQueueState) -> Self {
        // the access point refusal threshold only holds from a state within
        // the data-queue bound
        self.reputation_check = self
            .users
            .iter()
            .zip(&queues.q)
            .all(|(u, &q)| u.queue_bound(self.v).is_none_or(|b| q <= b));
        self.queues = queues;
        self
    }

    pub fn queues(&self) -> &VirtualQueueState {
        &self.queues
    }

    pub fn files(&self) -> &FileState {
        &self.files
    }

    pub fn users(&self) -> &[UserConfig] {
        &self.users
    }

    pub fn process(&self) -> &P {
        &self.process
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// Runs one slot: topology, flow control, transmissions, queue update,
    /// file bookkeeping.
    pub fn step(&mut self) -> Result<SlotMetrics, SchedError> {
        let t = self.slot;
        if let Some(schedule) = &self.schedule {
            self.files.regenerate_requests(schedule, t, &mut self.files_rng);
        }
        let state = self.process.advance();
        let k_users = self.users.len();

        let gamma: Vec<f64> = self
            .users
            .iter()
            .zip(&self.queues.q)
            .map(|(u, &q)| choose_gamma(&u.utility, q, self.v, u.x_max))
            .collect();

        let mu = decide_transmissions(state, &self.queues, &self.files, &self.users);
        if !validate_feasible(&mu, state, &self.x_max) {
            return Err(SchedError::Infeasible { slot: t });
        }

        let mut ap_x = vec![0u32; k_users];
        for ((n, k), p) in mu.iter() {
            if n < k_users || !self.files.has_file(n, k) {
                continue;
            }
            ap_x[k] += p;
            if self.reputation_check {
                let u = &self.users[k];
                if let Some(bound) = u.queue_bound(self.v) {
                    if u.alpha > 0.0 && self.queues.h[k] > bound / u.alpha {
                        return Err(SchedError::ReputationThreshold { slot: t, user: k });
                    }
                }
            }
        }

        let (x, y) = derive_rates(&mu, &self.files, k_users);
        let decision = SlotDecision { gamma, mu, x, y };
        self.queues = update_queues(&self.queues, &decision, &self.users);

        for (k, &xk) in decision.x.iter().enumerate() {
            if xk > 0 {
                self.files.apply_delivery(k, u64::from(xk))?;
            }
        }
        let p = self.schedule.as_ref().map_or(0.0, |s| s.probability_at(t));
        self.files.reactivate_idle(p, &mut self.files_rng);

        self.slot += 1;
        Ok(SlotMetrics {
            slot: t,
            gamma: decision.gamma,
            x: decision.x,
            y: decision.y,
            ap_x,
            queues: self.queues.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::UtilitySpec;
    use crate::topology::TopologyState;

    /// Replays the same state every slot.
    struct Fixed(TopologyState);

    impl TopologyProcess for Fixed {
        fn advance(&mut self) -> &TopologyState {
            &self.0
        }
        fn current(&self) -> &TopologyState {
            &self.0
        }
    }

    fn one_user_one_ap() -> (Fixed, FileState) {
        let mut s = TopologyState::new(1, 1, 1);
        s.set_rate(1, 0, 1);
        (Fixed(s), FileState::from_holders(1, 2, vec![vec![1]]))
    }

    fn log_user(alpha: f64) -> UserConfig {
        UserConfig::new(alpha, 0.05, 3, UtilitySpec::LogOnePlus { nu: 1.0 })
    }

    #[test]
    fn single_slot_hand_trace() {
        let (p, fs) = one_user_one_ap();
        let mut sim = Simulation::new(p, fs, vec![log_user(0.0)], 10.0)
            .unwrap()
            .with_queues(VirtualQueueState {
                q: vec![5.0],
                h: vec![0.0],
            });
        let m = sim.step().unwrap();
        assert_eq!(m.x, vec![1]);
        assert_eq!(m.ap_x, vec![1]);
        assert_eq!(m.y, vec![0]);
        // gamma = 10/5 - 1 = 1, so Q' = 5 + 1 - 1
        assert_eq!(m.gamma, vec![1.0]);
        assert_eq!(m.queues.q, vec![5.0]);
        // H' = max(0 + 0 - 0.05 - 0, 0)
        assert_eq!(m.queues.h, vec![0.0]);
    }

    #[test]
    fn zero_v_gives_zero_gamma() {
        let (p, fs) = one_user_one_ap();
        let mut sim = Simulation::new(p, fs, vec![log_user(0.5)], 0.0).unwrap();
        for _ in 0..20 {
            let m = sim.step().unwrap();
            assert!(m.gamma.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn empty_network_is_noop() {
        let p = Fixed(TopologyState::new(0, 0, 1));
        let fs = FileState::from_holders(0, 0, vec![]);
        let mut sim = Simulation::new(p, fs, vec![], 10.0).unwrap();
        let m = sim.step().unwrap();
        assert!(m.x.is_empty() && m.gamma.is_empty());
        assert_eq!(m.ap_packets() + m.peer_packets(), 0);
        assert_eq!(sim.slot(), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (p, fs) = one_user_one_ap();
        assert!(matches!(
            Simulation::new(p, fs, vec![], 1.0),
            Err(SchedError::Dimension { .. })
        ));
    }

    #[test]
    fn oversized_union_is_flagged_infeasible() {
        // AP rate 2 plus a peer at rate 1 into a user with x_max 2
        let mut s = TopologyState::new(2, 1, 1);
        s.set_rate(2, 0, 2);
        s.set_rate(1, 0, 1);
        let fs = FileState::from_holders(2, 3, vec![vec![1, 2], vec![]]);
        let u = UserConfig::new(0.0, 0.05, 2, UtilitySpec::LogOnePlus { nu: 1.0 });
        let mut sim = Simulation::new(Fixed(s), fs, vec![u, u], 10.0).unwrap();
        assert_eq!(sim.step(), Err(SchedError::Infeasible { slot: 0 }));
    }
}
