//! Who holds which user's requested file, and the active/idle dynamics of
//! finite-size downloads.

use thiserror::Error;

use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilesError {
    #[error("delivered {packets} packets to idle user {user}")]
    DeliveryToIdle { user: usize, packets: u64 },
    #[error("request probability must lie in [0, 1] (got {0})")]
    Probability(f64),
    #[error("phase schedule needs at least one phase")]
    NoPhases,
    #[error("phase fraction {0} must be positive")]
    PhaseFraction(f64),
    #[error("phase fractions sum to {0}, expected 1")]
    PhaseSum(f64),
    #[error("schedule length must be at least one slot")]
    NoSlots,
    #[error("file size must be at least one packet")]
    FileSize,
    #[error("reactivation probability must lie in [0, 1] (got {0})")]
    Reactivation(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FileSize {
    Fixed(u64),
    /// Uniform over `min..=max` packets.
    Uniform { min: u64, max: u64 },
}

impl FileSize {
    fn validate(&self) -> Result<(), FilesError> {
        match *self {
            FileSize::Fixed(n) if n >= 1 => Ok(()),
            FileSize::Uniform { min, max } if min >= 1 && min <= max => Ok(()),
            _ => Err(FilesError::FileSize),
        }
    }

    fn draw(&self, rng: &mut SimRng) -> u64 {
        match *self {
            FileSize::Fixed(n) => n,
            FileSize::Uniform { min, max } => min + rng.below(max - min + 1),
        }
    }
}

/// How an idle user comes back with a new request between phase redraws.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum IdleLaw {
    #[default]
    StayIdle,
    /// Each idle slot ends with a new request with this probability.
    Geometric { reactivate_prob: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FileMode {
    /// Every user wants one file of unbounded length.
    #[default]
    Infinite,
    Finite { size: FileSize, idle: IdleLaw },
}

impl FileMode {
    pub fn finite() -> Self {
        FileMode::Finite {
            size: FileSize::Fixed(100),
            idle: IdleLaw::StayIdle,
        }
    }

    pub fn validate(&self) -> Result<(), FilesError> {
        match self {
            FileMode::Infinite => Ok(()),
            FileMode::Finite { size, idle } => {
                size.validate()?;
                if let IdleLaw::Geometric { reactivate_prob } = *idle {
                    if !(0.0..=1.0).contains(&reactivate_prob) {
                        return Err(FilesError::Reactivation(reactivate_prob));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, FileMode::Finite { .. })
    }
}

/// `F_k(t)`, `A_k(t)` and `D_k(t)` for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct FileState {
    users: usize,
    devices: usize,
    mode: FileMode,
    holders: Vec<Vec<bool>>,
    active: Vec<bool>,
    remaining: Vec<u64>,
}

impl FileState {
    /// Explicit holder sets, all users active. Finite mode draws no sizes
    /// here; use [`FileState::set_remaining`].
    pub fn from_holders(users: usize, devices: usize, holders: Vec<Vec<usize>>) -> Self {
        let mut sets = vec![vec![false; devices]; users];
        for (k, list) in holders.iter().enumerate().take(users) {
            for &a in list {
                if a != k && a < devices {
                    sets[k][a] = true;
                }
            }
        }
        Self {
            users,
            devices,
            mode: FileMode::Infinite,
            holders: sets,
            active: vec![true; users],
            remaining: vec![0; users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn mode(&self) -> FileMode {
        self.mode
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    pub fn remaining(&self, k: usize) -> u64 {
        self.remaining[k]
    }

    /// Switches to finite mode with the given outstanding demand per user.
    /// Users with zero demand become idle.
    pub fn set_remaining(&mut self, size: FileSize, remaining: Vec<u64>) {
        self.mode = FileMode::Finite {
            size,
            idle: IdleLaw::StayIdle,
        };
        for k in 0..self.users {
            self.remaining[k] = remaining.get(k).copied().unwrap_or(0);
            if self.remaining[k] == 0 {
                self.go_idle(k);
            }
        }
    }

    /// Devices in `F_k(t)`.
    pub fn holders(&self, k: usize) -> Vec<usize> {
        (0..self.devices).filter(|&a| self.holders[k][a]).collect()
    }

    /// `f_ab(t)`.
    pub fn has_file(&self, a: usize, b: usize) -> bool {
        b < self.users && a < self.devices && self.holders[b][a]
    }

    fn go_idle(&mut self, k: usize) {
        self.active[k] = false;
        self.remaining[k] = 0;
        self.holders[k].iter_mut().for_each(|h| *h = false);
    }

    fn draw_one(&mut self, k: usize, p: f64, rng: &mut SimRng) {
        for j in 0..self.devices {
            self.holders[k][j] = if j == k {
                false
            } else if j >= self.users {
                true
            } else {
                rng.bernoulli(p)
            };
        }
        self.active[k] = true;
        self.remaining[k] = match self.mode {
            FileMode::Infinite => 0,
            FileMode::Finite { size, .. } => size.draw(rng),
        };
    }

    /// Records `packets` delivered to user `k` this slot.
    pub fn apply_delivery(&mut self, k: usize, packets: u64) -> Result<(), FilesError> {
        if !self.mode.is_finite() {
            return Ok(());
        }
        if !self.active[k] {
            if packets == 0 {
                return Ok(());
            }
            return Err(FilesError::DeliveryToIdle { user: k, packets });
        }
        // excess packets in the final slot are discarded
        self.remaining[k] = self.remaining[k].saturating_sub(packets);
        if self.remaining[k] == 0 {
            self.go_idle(k);
        }
        Ok(())
    }

    /// Full redraw at a phase boundary. Returns whether a redraw happened.
    pub fn regenerate_requests(&mut self, schedule: &PhaseSchedule, t: u64, rng: &mut SimRng) -> bool {
        if !schedule.is_boundary(t) {
            return false;
        }
        let p = schedule.probability_at(t);
        for k in 0..self.users {
            self.draw_one(k, p, rng);
        }
        true
    }

    /// Gives idle users a fresh request under the geometric idle law.
    pub fn reactivate_idle(&mut self, p: f64, rng: &mut SimRng) {
        let FileMode::Finite {
            idle: IdleLaw::Geometric { reactivate_prob },
            ..
        } = self.mode
        else {
            return;
        };
        for k in 0..self.users {
            if !self.active[k] && rng.bernoulli(reactivate_prob) {
                self.draw_one(k, p, rng);
            }
        }
    }
}

/// Draws a fresh request for every user: each other user holds it with
/// probability `p`, every access point holds it.
pub fn draw_requests(
    users: usize,
    access_points: usize,
    p: f64,
    mode: FileMode,
    rng: &mut SimRng,
) -> Result<FileState, FilesError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FilesError::Probability(p));
    }
    mode.validate()?;
    let devices = users + access_points;
    let mut state = FileState {
        users,
        devices,
        mode,
        holders: vec![vec![false; devices]; users],
        active: vec![true; users],
        remaining: vec![0; users],
    };
    for k in 0..users {
        state.draw_one(k, p, rng);
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub fraction: f64,
    pub probability: f64,
}

/// Piecewise-constant request probability over a run of `slots` slots.
/// Phase `i > 0` starts at `floor((f_0 + ... + f_{i-1}) * slots)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    phases: Vec<Phase>,
    starts: Vec<u64>,
    slots: u64,
}

impl PhaseSchedule {
    pub fn new(phases: Vec<Phase>, slots: u64) -> Result<Self, FilesError> {
        if phases.is_empty() {
            return Err(FilesError::NoPhases);
        }
        if slots == 0 {
            return Err(FilesError::NoSlots);
        }
        for ph in &phases {
            if ph.fraction <= 0.0 || !ph.fraction.is_finite() {
                return Err(FilesError::PhaseFraction(ph.fraction));
            }
            if !(0.0..=1.0).contains(&ph.probability) {
                return Err(FilesError::Probability(ph.probability));
            }
        }
        let sum: f64 = phases.iter().map(|p| p.fraction).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(FilesError::PhaseSum(sum));
        }
        let mut starts = vec![0];
        let mut acc = 0.0;
        for ph in &phases[..phases.len() - 1] {
            acc += ph.fraction;
            starts.push((acc * slots as f64).floor() as u64);
        }
        Ok(Self {
            phases,
            starts,
            slots,
        })
    }

    /// Equal-length phases with the given probabilities.
    pub fn equal(probabilities: &[f64], slots: u64) -> Result<Self, FilesError> {
        let n = probabilities.len() as f64;
        Self::new(
            probabilities
                .iter()
                .map(|&p| Phase {
                    fraction: 1.0 / n,
                    probability: p,
                })
                .collect(),
            slots,
        )
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    /// First slot of each phase.
    pub fn starts(&self) -> &[u64] {
        &self.starts
    }

    /// Redraw slots (every phase start after the first).
    pub fn boundaries(&self) -> &[u64] {
        &self.starts[1..]
    }

    /// Slot range `[start, end)` of phase `i`.
    pub fn span(&self, i: usize) -> (u64, u64) {
        let end = self.starts.get(i + 1).copied().unwrap_or(self.slots);
        (self.starts[i], end)
    }

    pub fn is_boundary(&self, t: u64) -> bool {
        self.boundaries().contains(&t)
    }

    pub fn phase_index(&self, t: u64) -> usize {
        self.starts.iter().rposition(|&s| s <= t).unwrap_or(0)
    }

    pub fn probability_at(&self, t: u64) -> f64 {
        self.phases[self.phase_index(t)].probability
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_state(remaining: u64) -> FileState {
        let mut fs = FileState::from_holders(2, 3, vec![vec![1, 2], vec![0, 2]]);
        fs.set_remaining(FileSize::Fixed(100), vec![remaining, 10]);
        fs
    }

    #[test]
    fn has_file_basics() {
        let fs = FileState::from_holders(2, 3, vec![vec![1, 2], vec![2]]);
        assert!(fs.has_file(1, 0));
        assert!(!fs.has_file(0, 1));
        assert!(!fs.has_file(0, 0));
        // self-holding is dropped at construction
        let fs = FileState::from_holders(1, 2, vec![vec![0, 1]]);
        assert!(!fs.has_file(0, 0));
        assert!(fs.has_file(1, 0));
    }

    #[test]
    fn idle_user_has_no_holders() {
        let mut fs = finite_state(2);
        fs.apply_delivery(0, 2).unwrap();
        assert!(!fs.is_active(0));
        for a in 0..3 {
            assert!(!fs.has_file(a, 0));
        }
    }

    #[test]
    fn p_zero_gives_access_points_only() {
        let mut rng = SimRng::new(1, 0);
        let fs = draw_requests(5, 2, 0.0, FileMode::Infinite, &mut rng).unwrap();
        for k in 0..5 {
            assert_eq!(fs.holders(k), vec![5, 6]);
        }
    }

    #[test]
    fn p_one_gives_everyone_else() {
        let mut rng = SimRng::new(1, 0);
        let fs = draw_requests(4, 1, 1.0, FileMode::Infinite, &mut rng).unwrap();
        for k in 0..4 {
            let expected: Vec<usize> = (0..5).filter(|&a| a != k).collect();
            assert_eq!(fs.holders(k), expected);
        }
    }

    #[test]
    fn mean_peer_holder_count() {
        let mut rng = SimRng::new(17, 0);
        let draws = 400;
        let mut total = 0usize;
        for _ in 0..draws {
            let fs = draw_requests(50, 1, 0.05, FileMode::Infinite, &mut rng).unwrap();
            for k in 0..50 {
                total += fs.holders(k).iter().filter(|&&a| a < 50).count();
            }
        }
        let mean = total as f64 / (draws * 50) as f64;
        assert!((mean - 2.45).abs() < 0.1, "{mean}");
    }

    #[test]
    fn bad_probability_rejected() {
        let mut rng = SimRng::new(1, 0);
        assert!(draw_requests(2, 1, 1.5, FileMode::Infinite, &mut rng).is_err());
    }

    #[test]
    fn finite_draw_sets_sizes() {
        let mut rng = SimRng::new(1, 0);
        let fs = draw_requests(3, 1, 0.5, FileMode::finite(), &mut rng).unwrap();
        for k in 0..3 {
            assert!(fs.is_active(k));
            assert_eq!(fs.remaining(k), 100);
        }
    }

    #[test]
    fn partial_delivery() {
        let mut fs = finite_state(5);
        fs.apply_delivery(0, 2).unwrap();
        assert_eq!(fs.remaining(0), 3);
        assert!(fs.is_active(0));
    }

    #[test]
    fn exact_completion_goes_idle() {
        let mut fs = finite_state(2);
        fs.apply_delivery(0, 2).unwrap();
        assert_eq!(fs.remaining(0), 0);
        assert!(!fs.is_active(0));
        assert!(fs.holders(0).is_empty());
    }

    #[test]
    fn over_delivery_clamped() {
        let mut fs = finite_state(1);
        fs.apply_delivery(0, 3).unwrap();
        assert_eq!(fs.remaining(0), 0);
        assert!(!fs.is_active(0));
    }

    #[test]
    fn delivery_to_idle_rejected() {
        let mut fs = finite_state(1);
        fs.apply_delivery(0, 1).unwrap();
        assert_eq!(
            fs.apply_delivery(0, 1),
            Err(FilesError::DeliveryToIdle { user: 0, packets: 1 })
        );
        assert!(fs.apply_delivery(0, 0).is_ok());
    }

    #[test]
    fn infinite_delivery_is_noop() {
        let mut fs = FileState::from_holders(1, 2, vec![vec![1]]);
        let before = fs.clone();
        fs.apply_delivery(0, 1000).unwrap();
        assert_eq!(fs, before);
    }

    #[test]
    fn three_phase_boundaries() {
        let sched = PhaseSchedule::equal(&[0.05, 0.1, 0.07], 100_000).unwrap();
        assert_eq!(sched.boundaries(), &[33_333, 66_666]);
        assert_eq!(sched.probability_at(0), 0.05);
        assert_eq!(sched.probability_at(33_332), 0.05);
        assert_eq!(sched.probability_at(33_333), 0.1);
        assert_eq!(sched.probability_at(99_999), 0.07);
        assert_eq!(sched.span(2), (66_666, 100_000));
    }

    #[test]
    fn regenerate_at_boundary_only() {
        let sched = PhaseSchedule::new(
            vec![
                Phase { fraction: 1.0 / 3.0, probability: 0.0 },
                Phase { fraction: 2.0 / 3.0, probability: 1.0 },
            ],
            300,
        )
        .unwrap();
        let mut rng = SimRng::new(4, 0);
        let mut fs = draw_requests(3, 1, 0.0, FileMode::Infinite, &mut rng).unwrap();
        let before = fs.clone();
        assert!(!fs.regenerate_requests(&sched, 99, &mut rng));
        assert_eq!(fs, before);
        assert!(fs.regenerate_requests(&sched, 100, &mut rng));
        assert_eq!(fs.holders(0), vec![1, 2, 3]);
    }

    #[test]
    fn single_phase_never_redraws() {
        let sched = PhaseSchedule::equal(&[0.3], 1000).unwrap();
        let mut rng = SimRng::new(4, 0);
        let mut fs = draw_requests(3, 1, 0.3, FileMode::Infinite, &mut rng).unwrap();
        let before = fs.clone();
        for t in 0..1000 {
            assert!(!fs.regenerate_requests(&sched, t, &mut rng));
        }
        assert_eq!(fs, before);
    }

    #[test]
    fn schedule_validation() {
        assert!(PhaseSchedule::new(vec![], 10).is_err());
        assert!(PhaseSchedule::equal(&[0.1], 0).is_err());
        let bad_sum = vec![
            Phase { fraction: 0.5, probability: 0.1 },
            Phase { fraction: 0.4, probability: 0.1 },
        ];
        assert!(matches!(PhaseSchedule::new(bad_sum, 10), Err(FilesError::PhaseSum(_))));
    }

    #[test]
    fn geometric_reactivation() {
        let mode = FileMode::Finite {
            size: FileSize::Fixed(3),
            idle: IdleLaw::Geometric { reactivate_prob: 1.0 },
        };
        let mut rng = SimRng::new(4, 0);
        let mut fs = draw_requests(2, 1, 0.0, mode, &mut rng).unwrap();
        fs.apply_delivery(0, 3).unwrap();
        assert!(!fs.is_active(0));
        fs.reactivate_idle(0.0, &mut rng);
        assert!(fs.is_active(0));
        assert_eq!(fs.remaining(0), 3);
        assert_eq!(fs.holders(0), vec![2]);
    }
}
