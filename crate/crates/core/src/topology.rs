//! Cell-partitioned network topology: device positions, channel rates and
//! the feasible transmission set for a slot.
//!
//! Devices are indexed with users first: user ids are `0..K` and access
//! points occupy `K..N`. Channel rates are stored densely as an `N x K`
//! matrix `rate(sender, receiver)` in packets per slot.

use std::collections::BTreeMap;
use std::ops::Range;

use thiserror::Error;

use crate::rng::{streams, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("grid must have at least one row and one column (got {rows}x{cols})")]
    EmptyGrid { rows: usize, cols: usize },
    #[error("stay_probability must lie in [0, 1] (got {0})")]
    StayProbability(f64),
    #[error("cell {cell} out of range for {cells} cells")]
    CellOutOfRange { cell: usize, cells: usize },
    #[error("access point rate set must not be empty")]
    NoAccessPointRates,
    #[error("peer_enabled has {got} entries, expected {users}")]
    PeerMask { got: usize, users: usize },
}

/// What happens to the probability mass of a move that would leave the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeRule {
    /// The move is cancelled and the user stays put. Every transition row
    /// and column sums to one, so the stationary law is uniform.
    #[default]
    Stay,
    /// The move is replaced by a uniform choice among in-grid neighbours.
    /// The stationary law is then proportional to cell degree.
    Redistribute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    rows: usize,
    cols: usize,
    stay_probability: f64,
    edge_rule: EdgeRule,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, stay_probability: f64) -> Result<Self, TopologyError> {
        if rows == 0 || cols == 0 {
            return Err(TopologyError::EmptyGrid { rows, cols });
        }
        if !(0.0..=1.0).contains(&stay_probability) {
            return Err(TopologyError::StayProbability(stay_probability));
        }
        Ok(Self {
            rows,
            cols,
            stay_probability,
            edge_rule: EdgeRule::default(),
        })
    }

    pub fn with_edge_rule(mut self, rule: EdgeRule) -> Self {
        self.edge_rule = rule;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn stay_probability(&self) -> f64 {
        self.stay_probability
    }

    pub fn edge_rule(&self) -> EdgeRule {
        self.edge_rule
    }

    /// Up/down/left/right proposals in a fixed order; `None` marks a move
    /// that would leave the grid.
    pub fn proposals(&self, cell: usize) -> [Option<usize>; 4] {
        let (r, c) = (cell / self.cols, cell % self.cols);
        [
            (r > 0).then(|| cell - self.cols),
            (r + 1 < self.rows).then(|| cell + self.cols),
            (c > 0).then(|| cell - 1),
            (c + 1 < self.cols).then(|| cell + 1),
        ]
    }

    pub fn neighbors(&self, cell: usize) -> Vec<usize> {
        self.proposals(cell).into_iter().flatten().collect()
    }

    fn next_cell(&self, cell: usize, rng: &mut SimRng) -> usize {
        if rng.bernoulli(self.stay_probability) {
            return cell;
        }
        match self.edge_rule {
            EdgeRule::Stay => {
                let dir = rng.below(4) as usize;
                self.proposals(cell)[dir].unwrap_or(cell)
            }
            EdgeRule::Redistribute => {
                let nbrs = self.neighbors(cell);
                if nbrs.is_empty() {
                    cell
                } else {
                    *rng.choose(&nbrs)
                }
            }
        }
    }
}

/// One slot's topology: positions `c_n(t)` and channel rates `S_nk(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyState {
    users: usize,
    cells: usize,
    positions: Vec<usize>,
    channels: Vec<u32>,
}

impl TopologyState {
    /// All devices in cell 0, all channels zero.
    pub fn new(users: usize, access_points: usize, cells: usize) -> Self {
        let devices = users + access_points;
        Self {
            users,
            cells: cells.max(1),
            positions: vec![0; devices],
            channels: vec![0; devices * users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn num_devices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_access_points(&self) -> usize {
        self.positions.len() - self.users
    }

    pub fn num_cells(&self) -> usize {
        self.cells
    }

    pub fn is_user(&self, device: usize) -> bool {
        device < self.users
    }

    pub fn access_points(&self) -> Range<usize> {
        self.users..self.positions.len()
    }

    pub fn position(&self, device: usize) -> usize {
        self.positions[device]
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn set_position(&mut self, device: usize, cell: usize) -> Result<(), TopologyError> {
        if cell >= self.cells {
            return Err(TopologyError::CellOutOfRange {
                cell,
                cells: self.cells,
            });
        }
        self.positions[device] = cell;
        Ok(())
    }

    pub fn rate(&self, sender: usize, receiver: usize) -> u32 {
        self.channels[sender * self.users + receiver]
    }

    pub fn set_rate(&mut self, sender: usize, receiver: usize, rate: u32) {
        self.channels[sender * self.users + receiver] = rate;
    }

    pub fn clear_channels(&mut self) {
        self.channels.iter_mut().for_each(|s| *s = 0);
    }

    /// Users grouped by their current cell.
    pub fn cell_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.cells];
        for k in 0..self.users {
            members[self.positions[k]].push(k);
        }
        members
    }

    pub fn users_in_cell(&self, cell: usize) -> Vec<usize> {
        (0..self.users)
            .filter(|&k| self.positions[k] == cell)
            .collect()
    }
}

/// Channel process parameters for the cell-partitioned example network.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    /// Access point to user rates are drawn uniformly from this set.
    pub ap_rates: Vec<u32>,
    /// Rate between two co-located users.
    pub peer_rate: u32,
    /// Users with `false` here never transmit to peers.
    pub peer_enabled: Vec<bool>,
}

impl ChannelModel {
    pub fn new(users: usize, ap_rates: Vec<u32>, peer_rate: u32) -> Result<Self, TopologyError> {
        if ap_rates.is_empty() {
            return Err(TopologyError::NoAccessPointRates);
        }
        Ok(Self {
            ap_rates,
            peer_rate,
            peer_enabled: vec![true; users],
        })
    }

    pub fn with_peer_mask(mut self, mask: Vec<bool>) -> Result<Self, TopologyError> {
        if mask.len() != self.peer_enabled.len() {
            return Err(TopologyError::PeerMask {
                got: mask.len(),
                users: self.peer_enabled.len(),
            });
        }
        self.peer_enabled = mask;
        Ok(self)
    }

    pub fn max_ap_rate(&self) -> u32 {
        self.ap_rates.iter().copied().max().unwrap_or(0)
    }
}

/// Moves every user one step of the random walk. Access points stay put.
pub fn step_mobility(state: &TopologyState, grid: &GridSpec, rng: &mut SimRng) -> TopologyState {
    let mut next = state.clone();
    advance_mobility(&mut next, grid, rng);
    next
}

pub fn advance_mobility(state: &mut TopologyState, grid: &GridSpec, rng: &mut SimRng) {
    for k in 0..state.users {
        state.positions[k] = grid.next_cell(state.positions[k], rng);
    }
}

/// Draws fresh channel rates for the current positions.
pub fn sample_channels(state: &TopologyState, model: &ChannelModel, rng: &mut SimRng) -> TopologyState {
    let mut next = state.clone();
    resample_channels(&mut next, model, rng);
    next
}

pub fn resample_channels(state: &mut TopologyState, model: &ChannelModel, rng: &mut SimRng) {
    state.clear_channels();
    for ap in state.access_points() {
        for k in 0..state.users {
            let s = *rng.choose(&model.ap_rates);
            state.set_rate(ap, k, s);
        }
    }
    if model.peer_rate == 0 {
        return;
    }
    for members in state.cell_members() {
        for &a in &members {
            if !model.peer_enabled[a] {
                continue;
            }
            for &k in &members {
                if a != k {
                    state.set_rate(a, k, model.peer_rate);
                }
            }
        }
    }
}

/// `K_a(t)`: users with a positive channel from access point `ap`.
pub fn users_in_reach(ap: usize, state: &TopologyState) -> Vec<usize> {
    (0..state.users)
        .filter(|&k| state.rate(ap, k) > 0)
        .collect()
}

/// Sparse transmission action `mu_nk(t)`; zero entries are not stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransmissionMatrix {
    entries: BTreeMap<(usize, usize), u32>,
}

impl TransmissionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, sender: usize, receiver: usize, packets: u32) {
        if packets == 0 {
            self.entries.remove(&(sender, receiver));
        } else {
            self.entries.insert((sender, receiver), packets);
        }
    }

    pub fn get(&self, sender: usize, receiver: usize) -> u32 {
        self.entries.get(&(sender, receiver)).copied().unwrap_or(0)
    }

    /// Non-zero entries as `((sender, receiver), packets)` in sender-major order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), u32)> + '_ {
        self.entries.iter().map(|(&key, &p)| (key, p))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn received_by(&self, receiver: usize) -> u32 {
        self.iter()
            .filter(|((_, k), _)| *k == receiver)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Membership test for `R(omega)` in the cell-partitioned model.
///
/// Checks: entries equal the channel rate; peer links only inside a cell;
/// at most one peer link per cell; at most one receiver per access point;
/// and per-receiver totals within `x_max`.
pub fn validate_feasible(mu: &TransmissionMatrix, state: &TopologyState, x_max: &[u32]) -> bool {
    let users = state.num_users();
    let mut peer_links = vec![0u32; state.num_cells()];
    let mut ap_links = vec![0u32; state.num_access_points()];
    let mut received = vec![0u64; users];
    for ((n, k), p) in mu.iter() {
        if n >= state.num_devices() || k >= users || k >= x_max.len() {
            return false;
        }
        if p != state.rate(n, k) {
            return false;
        }
        if state.is_user(n) {
            let cell = state.position(n);
            if cell != state.position(k) {
                return false;
            }
            peer_links[cell] += 1;
            if peer_links[cell] > 1 {
                return false;
            }
        } else {
            let a = n - users;
            ap_links[a] += 1;
            if ap_links[a] > 1 {
                return false;
            }
        }
        received[k] += u64::from(p);
    }
    received
        .iter()
        .zip(x_max)
        .all(|(&r, &cap)| r <= u64::from(cap))
}

/// Source of the per-slot topology state `omega(t)`.
pub trait TopologyProcess {
    /// Moves to the next slot and returns its state.
    fn advance(&mut self) -> &TopologyState;

    fn current(&self) -> &TopologyState;
}

/// The cell-partitioned example network: users random-walk on a grid,
/// access points sit in fixed cells, channels are redrawn every slot.
#[derive(Debug, Clone)]
pub struct CellNetwork {
    grid: GridSpec,
    model: ChannelModel,
    state: TopologyState,
    mobility: SimRng,
    channels: SimRng,
}

impl CellNetwork {
    /// Users start uniformly over the cells; every access point sits in
    /// `ap_cell`.
    pub fn new(
        grid: GridSpec,
        model: ChannelModel,
        users: usize,
        access_points: usize,
        ap_cell: usize,
        seed: u64,
    ) -> Result<Self, TopologyError> {
        if model.peer_enabled.len() != users {
            return Err(TopologyError::PeerMask {
                got: model.peer_enabled.len(),
                users,
            });
        }
        let mut state = TopologyState::new(users, access_points, grid.cells());
        let mut placement = SimRng::new(seed, streams::PLACEMENT);
        for k in 0..users {
            state.set_position(k, placement.below(grid.cells() as u64) as usize)?;
        }
        for ap in state.access_points() {
            state.set_position(ap, ap_cell)?;
        }
        Ok(Self {
            grid,
            model,
            state,
            mobility: SimRng::new(seed, streams::MOBILITY),
            channels: SimRng::new(seed, streams::CHANNELS),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }
}

impl TopologyProcess for CellNetwork {
    fn advance(&mut self) -> &TopologyState {
        advance_mobility(&mut self.state, &self.grid, &mut self.mobility);
        resample_channels(&mut self.state, &self.model, &mut self.channels);
        &self.state
    }

    fn current(&self) -> &TopologyState {
        &self.state
    }
}
