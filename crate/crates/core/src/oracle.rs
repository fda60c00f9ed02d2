//! Brute-force optimum for tiny instances.
//!
//! A tiny instance lists its topology states with explicit probabilities.
//! The best achievable utility is the maximum of `sum_k phi_k(xbar_k)` over
//! stationary randomised policies (one distribution over `R(omega)` per
//! state) subject to `alpha_k xbar_k <= beta_k + ybar_k`. The objective is
//! concave in the per-state distributions and the constraints are linear, so
//! a coarse grid over the product of simplices followed by local grid
//! refinement around the incumbent converges to the optimum.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{parse_list, user_configs, ConfigError, KvConfig};
use crate::files::FileState;
use crate::metrics::{total_utility, TraceAccumulator};
use crate::rng::SimRng;
use crate::scheduler::{derive_rates, SchedError, Simulation, UserConfig, UtilitySpec};
use crate::topology::{validate_feasible, TopologyProcess, TopologyState, TransmissionMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration needs 2^{entries} candidates, above the cap of {cap}")]
    TooLarge { entries: u32, cap: u64 },
    #[error("grid search needs {points} points, above the cap of {cap}")]
    GridTooLarge { points: u128, cap: u128 },
    #[error("state probabilities sum to {0}, expected 1")]
    Probabilities(f64),
    #[error("instance has no states")]
    NoStates,
    #[error("state {0} does not match the instance dimensions")]
    StateShape(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sched(#[from] SchedError),
}

/// Largest number of candidate matrices [`enumerate_feasible`] will scan.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

/// All matrices in `R(omega)`: every subset of the positive-rate links
/// that passes [`validate_feasible`]. The zero matrix comes first.
pub fn enumerate_feasible(
    state: &TopologyState,
    x_max: &[u32],
    cap: u64,
) -> Result<Vec<TransmissionMatrix>, OracleError> {
    let mut links = Vec::new();
    for n in 0..state.num_devices() {
        for k in 0..state.num_users() {
            if n != k && state.rate(n, k) > 0 {
                links.push((n, k, state.rate(n, k)));
            }
        }
    }
    let entries = links.len() as u32;
    if entries >= 64 || (1u64 << entries) > cap {
        return Err(OracleError::TooLarge { entries, cap });
    }
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << entries) {
        let mut mu = TransmissionMatrix::new();
        for (i, &(n, k, s)) in links.iter().enumerate() {
            if mask >> i & 1 == 1 {
                mu.set(n, k, s);
            }
        }
        if validate_feasible(&mu, state, x_max) {
            out.push(mu);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    pub states: Vec<(f64, TopologyState)>,
    pub files: FileState,
    pub users: Vec<UserConfig>,
}

impl TinyInstance {
    pub fn new(states: Vec<(f64, TopologyState)>, files: FileState, users: Vec<UserConfig>) -> Result<Self, OracleError> {
        let inst = Self {
            states,
            files,
            users,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let Some((_, first)) = self.states.first() else {
            return Err(OracleError::NoStates);
        };
        let sum: f64 = self.states.iter().map(|(p, _)| p).sum();
        if (sum - 1.0).abs() > 1e-9 || self.states.iter().any(|(p, _)| *p < 0.0) {
            return Err(OracleError::Probabilities(sum));
        }
        for (i, (_, s)) in self.states.iter().enumerate() {
            if s.num_users() != first.num_users()
                || s.num_devices() != first.num_devices()
                || s.num_users() != self.users.len()
            {
                return Err(OracleError::StateShape(i));
            }
        }
        if self.files.num_users() != self.users.len() {
            return Err(OracleError::StateShape(0));
        }
        for (k, u) in self.users.iter().enumerate() {
            u.validate(k)?;
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Loads an instance from `key = value` text:
    ///
    /// ```text
    /// users = 2
    /// access_points = 0
    /// cells = 1
    /// x_max = 1
    /// alpha = 0.5
    /// beta = 0.05
    /// utility = log1p:1
    /// holders.0 = 1            # devices holding user 0's file
    /// holders.1 = 0
    /// states = 1
    /// state.0.prob = 1
    /// state.0.positions = 0,0  # one cell per device
    /// state.0.rates = 0>1:1, 1>0:1
    /// ```
    pub fn from_config(kv: &KvConfig) -> Result<Self, OracleError> {
        let users: usize = kv.require("users")?;
        let aps: usize = kv.get_or("access_points", 0)?;
        let cells: usize = kv.get_or("cells", 1)?;
        let n_states: usize = kv.require("states")?;
        let defaults = UserConfig::new(0.0, 0.0, 1, UtilitySpec::LogOnePlus { nu: 1.0 });
        let cfgs = user_configs(kv, users, defaults)?;
        let devices = users + aps;
        let holders = (0..users)
            .map(|k| {
                kv.get_list::<usize>(&format!("holders.{k}"))
                    .map(Option::unwrap_or_default)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let files = FileState::from_holders(users, devices, holders);
        let mut states = Vec::with_capacity(n_states);
        for i in 0..n_states {
            let prob: f64 = kv.require(&format!("state.{i}.prob"))?;
            let mut s = TopologyState::new(users, aps, cells);
            let key = format!("state.{i}.positions");
            if let Some(pos) = kv.get_list::<usize>(&key)? {
                if pos.len() != devices {
                    return Err(ConfigError::invalid(&key, pos.len(), format!("expected {devices} cells")).into());
                }
                for (n, &c) in pos.iter().enumerate() {
                    s.set_position(n, c)
                        .map_err(|e| ConfigError::invalid(&key, c, e))?;
                }
            }
            let key = format!("state.{i}.rates");
            if let Some(text) = kv.raw(&key) {
                let links: Vec<String> = parse_list(text).map_err(|e| ConfigError::invalid(&key, text, e))?;
                for link in links {
                    let (n, k, r) = parse_link(&link).ok_or_else(|| {
                        ConfigError::invalid(&key, &link, "expected `sender>receiver:rate`")
                    })?;
                    if n >= devices || k >= users {
                        return Err(ConfigError::invalid(&key, &link, "device out of range").into());
                    }
                    s.set_rate(n, k, r);
                }
            }
            states.push((prob, s));
        }
        Self::new(states, files, cfgs)
    }
}

fn parse_link(text: &str) -> Option<(usize, usize, u32)> {
    let (pair, rate) = text.split_once(':')?;
    let (n, k) = pair.split_once('>')?;
    Some((n.trim().parse().ok()?, k.trim().parse().ok()?, rate.trim().parse().ok()?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    /// Denominator of the first, global grid.
    pub coarse: u64,
    /// Number of local refinement passes.
    pub refinements: u32,
    /// Each refinement divides the grid step by this factor.
    pub factor: u64,
    pub max_points: u128,
    pub enumeration_cap: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            coarse: 20,
            refinements: 2,
            factor: 10,
            max_points: 20_000_000,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl OracleSettings {
    /// Final grid step.
    pub fn resolution(&self) -> f64 {
        1.0 / (self.coarse * self.factor.pow(self.refinements)) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub utility: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Distinct `(x, y)` rate vectors achievable in one state, zero first.
struct StateOptions {
    prob: f64,
    rates: Vec<Vec<f64>>,
}

struct Search<'a> {
    options: &'a [StateOptions],
    users: &'a [UserConfig],
}

impl Search<'_> {
    fn evaluate(&self, totals: &[f64]) -> Option<f64> {
        let k = self.users.len();
        let (x, y) = totals.split_at(k);
        for (i, u) in self.users.iter().enumerate() {
            if u.alpha * x[i] > u.beta + y[i] + 1e-12 {
                return None;
            }
        }
        Some(total_utility(self.users, x))
    }

    /// Exhaustive search over the product of per-state candidate lists.
    /// Weights are integers over `denom`.
    fn best(&self, candidates: &[Vec<Vec<u64>>], denom: u64) -> (f64, Vec<Vec<u64>>) {
        let dim = 2 * self.users.len();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut chosen: Vec<usize> = vec![0; candidates.len()];
        let mut totals = vec![vec![0.0; dim]; candidates.len() + 1];
        self.descend(0, candidates, denom, &mut chosen, &mut totals, &mut best);
        best
    }

    fn descend(
        &self,
        s: usize,
        candidates: &[Vec<Vec<u64>>],
        denom: u64,
        chosen: &mut Vec<usize>,
        totals: &mut Vec<Vec<f64>>,
        best: &mut (f64, Vec<Vec<u64>>),
    ) {
        if s == candidates.len() {
            if let Some(v) = self.evaluate(&totals[s]) {
                if v > best.0 || best.1.is_empty() {
                    *best = (
                        v,
                        chosen
                            .iter()
                            .enumerate()
                            .map(|(i, &c)| candidates[i][c].clone())
                            .collect(),
                    );
                }
            }
            return;
        }
        let opt = &self.options[s];
        for (ci, w) in candidates[s].iter().enumerate() {
            chosen[s] = ci;
            let (head, tail) = totals.split_at_mut(s + 1);
            let next = &mut tail[0];
            next.copy_from_slice(&head[s]);
            for (j, &wj) in w.iter().enumerate() {
                if wj == 0 {
                    continue;
                }
                let scale = opt.prob * wj as f64 / denom as f64;
                for (t, r) in next.iter_mut().zip(&opt.rates[j]) {
                    *t += scale * r;
                }
            }
            self.descend(s + 1, candidates, denom, chosen, totals, best);
        }
    }
}

/// All ways to write `total` as `parts` non-negative integers.
fn compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Grid points within one old step of `center` on a grid `factor` times finer.
fn neighbourhood(center: &[u64], factor: u64) -> Vec<Vec<u64>> {
    let m = center.len();
    let base: Vec<i64> = center.iter().map(|&c| (c * factor) as i64).collect();
    let total: i64 = base.iter().sum();
    let f = factor as i64;
    let mut out = Vec::new();
    let mut offs = vec![-f; m.saturating_sub(1)];
    loop {
        let mut w: Vec<i64> = base[..m - 1].iter().zip(&offs).map(|(b, o)| b + o).collect();
        let last = total - w.iter().sum::<i64>();
        if w.iter().all(|&v| v >= 0) && last >= 0 && (last - base[m - 1]).abs() <= f * (m as i64 - 1) {
            w.push(last);
            out.push(w.into_iter().map(|v| v as u64).collect());
        }
        // odometer over offsets
        let mut i = 0;
        loop {
            if i == offs.len() {
                return out;
            }
            offs[i] += 1;
            if offs[i] <= f {
                break;
            }
            offs[i] = -f;
            i += 1;
        }
    }
}

fn state_options(inst: &TinyInstance, cap: u64) -> Result<Vec<StateOptions>, OracleError> {
    let k = inst.num_users();
    let x_max: Vec<u32> = inst.users.iter().map(|u| u.x_max).collect();
    inst.states
        .iter()
        .map(|(prob, state)| {
            let mut rates: Vec<Vec<u32>> = Vec::new();
            for mu in enumerate_feasible(state, &x_max, cap)? {
                let (x, y) = derive_rates(&mu, &inst.files, k);
                let r: Vec<u32> = x.into_iter().chain(y).collect();
                if !rates.contains(&r) {
                    rates.push(r);
                }
            }
            Ok(StateOptions {
                prob: *prob,
                rates: rates
                    .into_iter()
                    .map(|r| r.into_iter().map(f64::from).collect())
                    .collect(),
            })
        })
        .collect()
}

/// `phi*` by grid search with local refinement.
pub fn optimal_utility(inst: &TinyInstance, settings: &OracleSettings) -> Result<OracleSolution, OracleError> {
    inst.validate()?;
    let options = state_options(inst, settings.enumeration_cap)?;
    let search = Search {
        options: &options,
        users: &inst.users,
    };
    let check = |cands: &[Vec<Vec<u64>>]| {
        let points: u128 = cands.iter().map(|c| c.len() as u128).product();
        if points > settings.max_points {
            Err(OracleError::GridTooLarge {
                points,
                cap: settings.max_points,
            })
        } else {
            Ok(())
        }
    };

    let mut denom = settings.coarse.max(1);
    let cands: Vec<Vec<Vec<u64>>> = options
        .iter()
        .map(|o| compositions(denom, o.rates.len()))
        .collect();
    check(&cands)?;
    let (mut value, mut weights) = search.best(&cands, denom);
    for _ in 0..settings.refinements {
        let cands: Vec<Vec<Vec<u64>>> = weights
            .iter()
            .map(|w| neighbourhood(w, settings.factor))
            .collect();
        check(&cands)?;
        denom *= settings.factor;
        let (v, w) = search.best(&cands, denom);
        if v >= value {
            value = v;
            weights = w;
        } else {
            weights = weights
                .iter()
                .map(|w| w.iter().map(|c| c * settings.factor).collect())
                .collect();
        }
    }

    let k = inst.num_users();
    let mut totals = vec![0.0; 2 * k];
    for (opt, w) in options.iter().zip(&weights) {
        for (j, &wj) in w.iter().enumerate() {
            let scale = opt.prob * wj as f64 / denom as f64;
            for (t, r) in totals.iter_mut().zip(&opt.rates[j]) {
                *t += scale * r;
            }
        }
    }
    let (x, y) = totals.split_at(k);
    Ok(OracleSolution {
        utility: value,
        x: x.to_vec(),
        y: y.to_vec(),
    })
}

/// Topology process that draws each slot's state i.i.d. from an explicit
/// list.
#[derive(Debug, Clone)]
pub struct ExplicitStates {
    states: Vec<TopologyState>,
    cumulative: Vec<f64>,
    current: usize,
    rng: SimRng,
}

impl ExplicitStates {
    pub fn new(states: &[(f64, TopologyState)], rng: SimRng) -> Self {
        let mut acc = 0.0;
        let cumulative = states
            .iter()
            .map(|(p, _)| {
                acc += p;
                acc
            })
            .collect();
        Self {
            states: states.iter().map(|(_, s)| s.clone()).collect(),
            cumulative,
            current: 0,
            rng,
        }
    }
}

impl TopologyProcess for ExplicitStates {
    fn advance(&mut self) -> &TopologyState {
        if self.states.len() > 1 {
            let u = self.rng.unit();
            self.current = self
                .cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(self.states.len() - 1);
        }
        &self.states[self.current]
    }

    fn current(&self) -> &TopologyState {
        &self.states[self.current]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapPoint {
    pub v: f64,
    pub achieved: f64,
    pub optimum: f64,
}

impl GapPoint {
    pub fn gap(&self) -> f64 {
        self.optimum - self.achieved
    }
}

/// Runs the controller on the instance for each `V` and compares the
/// achieved `sum phi(xbar)` with `phi*`.
pub fn gap_curve(
    inst: &TinyInstance,
    vs: &[f64],
    horizon: u64,
    seed: u64,
    settings: &OracleSettings,
) -> Result<Vec<GapPoint>, OracleError> {
    let optimum = optimal_utility(inst, settings)?.utility;
    vs.par_iter()
        .map(|&v| {
            let process = ExplicitStates::new(&inst.states, SimRng::new(seed, crate::rng::streams::CHANNELS));
            let mut sim = Simulation::new(process, inst.files.clone(), inst.users.clone(), v)?;
            let mut acc = TraceAccumulator::new(inst.num_users());
            for _ in 0..horizon {
                acc.record(&sim.step()?);
            }
            Ok(GapPoint {
                v,
                achieved: acc.utility(&inst.users),
                optimum,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_user(alpha: f64, beta: f64) -> UserConfig {
        UserConfig::new(alpha, beta, 1, UtilitySpec::LogOnePlus { nu: 1.0 })
    }

    fn single_ap(alpha: f64, beta: f64) -> TinyInstance {
        let mut s = TopologyState::new(1, 1, 1);
        s.set_rate(1, 0, 1);
        TinyInstance::new(
            vec![(1.0, s)],
            FileState::from_holders(1, 2, vec![vec![1]]),
            vec![log_user(alpha, beta)],
        )
        .unwrap()
    }

    pub(crate) fn symmetric_pair() -> TinyInstance {
        let mut s = TopologyState::new(2, 0, 1);
        s.set_rate(0, 1, 1);
        s.set_rate(1, 0, 1);
        TinyInstance::new(
            vec![(1.0, s)],
            FileState::from_holders(2, 2, vec![vec![1], vec![0]]),
            vec![log_user(0.5, 0.05); 2],
        )
        .unwrap()
    }

    #[test]
    fn enumerate_single_link() {
        let inst = single_ap(0.0, 0.0);
        let all = enumerate_feasible(&inst.states[0].1, &[1], DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 2);
        assert!(all[0].is_empty());
    }

    #[test]
    fn enumerate_pair_one_link_per_cell() {
        let inst = symmetric_pair();
        let all = enumerate_feasible(&inst.states[0].1, &[1, 1], DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn enumerate_zero_channels() {
        let s = TopologyState::new(3, 1, 2);
        let all = enumerate_feasible(&s, &[3, 3, 3], DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all, vec![TransmissionMatrix::new()]);
    }

    #[test]
    fn enumeration_cap() {
        let mut s = TopologyState::new(3, 1, 1);
        for n in 0..4 {
            for k in 0..3 {
                if n != k {
                    s.set_rate(n, k, 1);
                }
            }
        }
        assert!(matches!(
            enumerate_feasible(&s, &[3; 3], 16),
            Err(OracleError::TooLarge { entries: 9, .. })
        ));
    }

    #[test]
    fn saturating_single_user() {
        let sol = optimal_utility(&single_ap(0.0, 0.0), &OracleSettings::default()).unwrap();
        assert!((sol.utility - 2f64.ln()).abs() < 1e-12);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binding_tit_for_tat_gives_zero() {
        let sol = optimal_utility(&single_ap(1.0, 0.0), &OracleSettings::default()).unwrap();
        assert_eq!(sol.utility, 0.0);
        assert_eq!(sol.x[0], 0.0);
    }

    #[test]
    fn free_rate_caps_download() {
        // alpha x <= beta: x <= 0.5
        let sol = optimal_utility(&single_ap(1.0, 0.5), &OracleSettings::default()).unwrap();
        assert!((sol.utility - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_optimum() {
        let sol = optimal_utility(&symmetric_pair(), &OracleSettings::default()).unwrap();
        // x1 + x2 <= 1 and symmetry give x = (0.5, 0.5)
        assert!((sol.utility - 2.0 * 1.5f64.ln()).abs() < 1e-9);
        assert!((sol.x[0] - sol.x[1]).abs() < 1e-9);
    }

    #[test]
    fn two_state_mixture() {
        let mut a = TopologyState::new(1, 1, 1);
        a.set_rate(1, 0, 1);
        let mut b = TopologyState::new(1, 1, 1);
        b.set_rate(1, 0, 2);
        let u = UserConfig::new(0.0, 0.0, 2, UtilitySpec::LogOnePlus { nu: 1.0 });
        let inst = TinyInstance::new(
            vec![(0.5, a), (0.5, b)],
            FileState::from_holders(1, 2, vec![vec![1]]),
            vec![u],
        )
        .unwrap();
        let sol = optimal_utility(&inst, &OracleSettings::default()).unwrap();
        assert!((sol.utility - 2.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bad_probabilities() {
        let inst = single_ap(0.0, 0.0);
        let states = vec![(0.4, inst.states[0].1.clone())];
        assert!(matches!(
            TinyInstance::new(states, inst.files, inst.users),
            Err(OracleError::Probabilities(_))
        ));
    }

    #[test]
    fn neighbourhood_is_local_and_on_simplex() {
        let pts = neighbourhood(&[2, 1, 0], 10);
        assert!(pts.iter().all(|p| p.iter().sum::<u64>() == 30));
        assert!(pts.contains(&vec![20, 10, 0]));
        assert!(pts.iter().all(|p| p[0].abs_diff(20) <= 10 && p[1].abs_diff(10) <= 10));
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(20, 3).len(), 231);
        assert_eq!(compositions(5, 1), vec![vec![5]]);
    }

    #[test]
    fn loads_from_config() {
        let text = "users = 2\nx_max = 1\nalpha = 0.5\nbeta = 0.05\nutility = log1p:1\n\
                    holders.0 = 1\nholders.1 = 0\nstates = 1\nstate.0.prob = 1\n\
                    state.0.positions = 0,0\nstate.0.rates = 0>1:1, 1>0:1\n";
        let inst = TinyInstance::from_config(&KvConfig::parse(text).unwrap()).unwrap();
        assert_eq!(inst, symmetric_pair());
    }

    #[test]
    fn config_rejects_bad_links() {
        let text = "users = 1\nstates = 1\nstate.0.prob = 1\nstate.0.rates = 0-1\n";
        assert!(TinyInstance::from_config(&KvConfig::parse(text).unwrap()).is_err());
    }
}
