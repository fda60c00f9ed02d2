//! Experiment harness: configuration, single runs, V-sweeps and their
//! CSV/JSON output.
//!
//! # Trace CSV
//!
//! One row every `trace_interval` slots (and one for the final slot):
//!
//! | column | meaning |
//! |---|---|
//! | `slot` | last slot covered by the row |
//! | `mean_ap_throughput` | AP packets per user per slot since the previous row |
//! | `mean_p2p_throughput` | peer packets per user per slot since the previous row |
//! | `mean_Q` | average over those slots of the user-mean `Q` |
//! | `max_Q` | largest `Q_k` over those slots |
//! | `max_H` | largest `H_k` over those slots |
//! | `utility_of_running_avg` | `sum_k phi_k(xbar_k)` with `xbar` averaged from slot 0 |
//!
//! # Sweep CSV
//!
//! `V, throughput, ap_throughput, p2p_throughput, utility, mean_Q, max_Q,
//! max_H, Q_bound`, one row per `V` in the order given. `Q_bound` is the
//! largest `V*nu_k + x_max_k`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{user_configs, ConfigError, KvConfig};
use crate::files::{draw_requests, FileMode, FileSize, IdleLaw, Phase, PhaseSchedule};
use crate::metrics::{bound_constants, drift_bound_b, BoundConstants, BoundMonitor, BoundReport, TraceAccumulator};
use crate::rng::{streams, SimRng};
use crate::scheduler::{SchedError, Simulation, UserConfig, UtilitySpec};
use crate::topology::{CellNetwork, ChannelModel, EdgeRule, GridSpec};

pub const TRACE_HEADER: &str =
    "slot,mean_ap_throughput,mean_p2p_throughput,mean_Q,max_Q,max_H,utility_of_running_avg";
pub const SWEEP_HEADER: &str = "V,throughput,ap_throughput,p2p_throughput,utility,mean_Q,max_Q,max_H,Q_bound";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation: {0}")]
    Sched(#[from] SchedError),
    #[error("bound check failed: {0}")]
    Bound(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl ExperimentError {
    /// 1 for configuration errors, 2 for internal assertions, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Sched(_) | ExperimentError::Bound(_) => 2,
            ExperimentError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub users: usize,
    pub rows: usize,
    pub cols: usize,
    pub stay_probability: f64,
    pub edge_rule: EdgeRule,
    pub slots: u64,
    pub v: f64,
    pub user_configs: Vec<UserConfig>,
    pub peer_enabled: Vec<bool>,
    pub phases: Vec<Phase>,
    pub seed: u64,
    pub peer_rate: u32,
    pub ap_rates: Vec<u32>,
    pub access_points: usize,
    pub ap_cell: usize,
    pub mode: FileMode,
    pub trace_interval: u64,
    pub windows: Vec<usize>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    /// The three-phase scenario: 50 users, one AP, 4x4 grid, `V = 10`.
    fn default() -> Self {
        let users = 50;
        Self {
            users,
            rows: 4,
            cols: 4,
            stay_probability: 0.5,
            edge_rule: EdgeRule::Stay,
            slots: 100_000,
            v: 10.0,
            user_configs: vec![UserConfig::new(0.5, 0.05, 3, UtilitySpec::LogOnePlus { nu: 1.0 }); users],
            peer_enabled: vec![true; users],
            phases: [0.05, 0.1, 0.07]
                .iter()
                .map(|&p| Phase {
                    fraction: 1.0 / 3.0,
                    probability: p,
                })
                .collect(),
            seed: 1,
            peer_rate: 1,
            ap_rates: vec![0, 1, 2],
            access_points: 1,
            ap_cell: 0,
            mode: FileMode::Infinite,
            trace_interval: 100,
            windows: vec![100, 1000, 10_000],
            out: PathBuf::from("out"),
        }
    }
}

fn parse_edge_rule(s: &str) -> Result<EdgeRule, String> {
    match s {
        "stay" => Ok(EdgeRule::Stay),
        "redistribute" => Ok(EdgeRule::Redistribute),
        _ => Err("expected `stay` or `redistribute`".into()),
    }
}

fn parse_file_size(key: &str, s: &str) -> Result<FileSize, ConfigError> {
    let bad = |_| ConfigError::invalid(key, s, "expected `n` or `min-max`");
    match s.split_once('-') {
        Some((a, b)) => Ok(FileSize::Uniform {
            min: a.trim().parse().map_err(bad)?,
            max: b.trim().parse().map_err(bad)?,
        }),
        None => Ok(FileSize::Fixed(s.trim().parse().map_err(bad)?)),
    }
}

impl ExperimentConfig {
    /// Builds a config from `key = value` text on top of the defaults.
    ///
    /// Keys: `users rows cols stay edge_rule slots V alpha beta x_max
    /// utility phases phase_fractions seed peer_rate ap_rates access_points
    /// ap_cell mode file_size reactivate_prob trace_interval windows out`,
    /// plus `user.<k>.{alpha,beta,x_max,utility,peer}`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        const KNOWN: &[&str] = &[
            "users",
            "rows",
            "cols",
            "stay",
            "edge_rule",
            "slots",
            "V",
            "alpha",
            "beta",
            "x_max",
            "utility",
            "phases",
            "phase_fractions",
            "seed",
            "peer_rate",
            "ap_rates",
            "access_points",
            "ap_cell",
            "mode",
            "file_size",
            "reactivate_prob",
            "trace_interval",
            "windows",
            "out",
        ];
        for key in kv.keys() {
            if !KNOWN.contains(&key) && !key.starts_with("user.") {
                return Err(ConfigError::Unknown(key.to_string()));
            }
        }
        let d = Self::default();
        let users = kv.get_or("users", d.users)?;
        let user_configs = user_configs(kv, users, d.user_configs[0])?;
        let mut peer_enabled = vec![true; users];
        for (k, enabled) in peer_enabled.iter_mut().enumerate() {
            *enabled = kv.get_or(&format!("user.{k}.peer"), true)?;
        }

        let probs = kv
            .get_list::<f64>("phases")?
            .unwrap_or_else(|| d.phases.iter().map(|p| p.probability).collect());
        let fractions = kv
            .get_list::<f64>("phase_fractions")?
            .unwrap_or_else(|| vec![1.0 / probs.len().max(1) as f64; probs.len()]);
        if fractions.len() != probs.len() {
            return Err(ConfigError::invalid(
                "phase_fractions",
                kv.raw("phase_fractions").unwrap_or(""),
                format!("expected {} entries to match `phases`", probs.len()),
            ));
        }
        let phases = fractions
            .into_iter()
            .zip(probs)
            .map(|(fraction, probability)| Phase { fraction, probability })
            .collect();

        let mode = match kv.raw("mode").unwrap_or("infinite") {
            "infinite" => FileMode::Infinite,
            "finite" => {
                let size = match kv.raw("file_size") {
                    Some(s) => parse_file_size("file_size", s)?,
                    None => FileSize::Fixed(100),
                };
                let idle = match kv.get::<f64>("reactivate_prob")? {
                    Some(p) => IdleLaw::Geometric { reactivate_prob: p },
                    None => IdleLaw::StayIdle,
                };
                FileMode::Finite { size, idle }
            }
            other => return Err(ConfigError::invalid("mode", other, "expected `infinite` or `finite`")),
        };

        let edge_rule = match kv.raw("edge_rule") {
            Some(s) => parse_edge_rule(s).map_err(|e| ConfigError::invalid("edge_rule", s, e))?,
            None => d.edge_rule,
        };

        let cfg = Self {
            users,
            rows: kv.get_or("rows", d.rows)?,
            cols: kv.get_or("cols", d.cols)?,
            stay_probability: kv.get_or("stay", d.stay_probability)?,
            edge_rule,
            slots: kv.get_or("slots", d.slots)?,
            v: kv.get_or("V", d.v)?,
            user_configs,
            peer_enabled,
            phases,
            seed: kv.get_or("seed", d.seed)?,
            peer_rate: kv.get_or("peer_rate", d.peer_rate)?,
            ap_rates: kv.get_list("ap_rates")?.unwrap_or(d.ap_rates),
            access_points: kv.get_or("access_points", d.access_points)?,
            ap_cell: kv.get_or("ap_cell", d.ap_cell)?,
            mode,
            trace_interval: kv.get_or("trace_interval", d.trace_interval)?,
            windows: kv.get_list("windows")?.unwrap_or(d.windows),
            out: kv.get_or("out", d.out)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_kv(&KvConfig::parse(text)?)
    }

    /// Checks every field; errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.slots == 0 {
            return Err(ConfigError::invalid("slots", 0, "need at least one slot"));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(ConfigError::invalid("V", self.v, "must be finite and non-negative"));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(ConfigError::invalid(
                if self.rows == 0 { "rows" } else { "cols" },
                0,
                "grid must be non-empty",
            ));
        }
        if !(0.0..=1.0).contains(&self.stay_probability) {
            return Err(ConfigError::invalid("stay", self.stay_probability, "must be in [0, 1]"));
        }
        if self.user_configs.len() != self.users || self.peer_enabled.len() != self.users {
            return Err(ConfigError::invalid("users", self.users, "per-user settings have a different length"));
        }
        if self.ap_rates.is_empty() {
            return Err(ConfigError::invalid("ap_rates", "", "need at least one rate"));
        }
        if self.ap_cell >= self.rows * self.cols {
            return Err(ConfigError::invalid("ap_cell", self.ap_cell, "outside the grid"));
        }
        if self.trace_interval == 0 {
            return Err(ConfigError::invalid("trace_interval", 0, "must be positive"));
        }
        PhaseSchedule::new(self.phases.clone(), self.slots)
            .map_err(|e| ConfigError::invalid("phases", self.phase_text(), e))?;
        self.mode
            .validate()
            .map_err(|e| ConfigError::invalid("mode", "finite", e))?;
        // a user can receive from every AP and one peer in the same slot
        let max_in = self.access_points as u64 * u64::from(self.ap_rates.iter().copied().max().unwrap_or(0))
            + u64::from(self.peer_rate);
        for (k, u) in self.user_configs.iter().enumerate() {
            u.validate(k)
                .map_err(|e| ConfigError::invalid(&format!("user.{k}"), "", e))?;
            if u64::from(u.x_max) < max_in {
                return Err(ConfigError::invalid(
                    &format!("user.{k}.x_max"),
                    u.x_max,
                    format!("below the largest possible per-slot intake {max_in}"),
                ));
            }
        }
        Ok(())
    }

    fn phase_text(&self) -> String {
        self.phases
            .iter()
            .map(|p| format!("{}@{}", p.probability, p.fraction))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn schedule(&self) -> PhaseSchedule {
        PhaseSchedule::new(self.phases.clone(), self.slots).expect("validated")
    }

    /// Sets `alpha` for every user.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.user_configs.iter_mut().for_each(|u| u.alpha = alpha);
        self
    }

    /// Sets `beta` for every user.
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.user_configs.iter_mut().for_each(|u| u.beta = beta);
        self
    }

    /// Largest `V*nu_k + x_max_k`, if every utility has bounded slope.
    pub fn queue_bound(&self) -> Option<f64> {
        self.user_configs
            .iter()
            .map(|u| u.queue_bound(self.v))
            .try_fold(0.0, |m: f64, b| b.map(|b| m.max(b)))
    }

    fn constants(&self) -> Option<BoundConstants> {
        let y_max = vec![self.peer_rate; self.users];
        let b = drift_bound_b(&self.user_configs, &y_max).ok()?;
        bound_constants(&self.user_configs, b, self.v).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserReport {
    pub x_avg: f64,
    pub ap_x_avg: f64,
    pub y_avg: f64,
    pub gamma_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub start: u64,
    pub end: u64,
    pub probability: f64,
    pub ap_throughput: f64,
    pub p2p_throughput: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub slots: u64,
    pub v: f64,
    pub seed: u64,
    pub throughput: f64,
    pub ap_throughput: f64,
    pub p2p_throughput: f64,
    pub utility: f64,
    pub mean_q: f64,
    pub max_q: f64,
    pub max_h: f64,
    pub max_norm: f64,
    pub q_bound: Option<f64>,
    pub per_user: Vec<UserReport>,
    pub phases: Vec<PhaseReport>,
    pub constants: Option<BoundConstants>,
    pub bounds: BoundReport,
}

impl RunReport {
    pub fn sweep_row(&self) -> String {
        let bound = self.q_bound.map_or_else(String::new, |b| b.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.v,
            self.throughput,
            self.ap_throughput,
            self.p2p_throughput,
            self.utility,
            self.mean_q,
            self.max_q,
            self.max_h,
            bound
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace_csv: String,
    pub report: RunReport,
}

/// One row's worth of running sums.
#[derive(Default)]
struct Interval {
    slots: u64,
    ap: u64,
    peer: u64,
    mean_q: f64,
    max_q: f64,
    max_h: f64,
}

fn simulate(cfg: &ExperimentConfig, trace: bool) -> Result<RunOutput, ExperimentError> {
    cfg.validate()?;
    let grid = GridSpec::new(cfg.rows, cfg.cols, cfg.stay_probability)
        .map_err(|e| ConfigError::invalid("rows", cfg.rows, e))?
        .with_edge_rule(cfg.edge_rule);
    let model = ChannelModel::new(cfg.users, cfg.ap_rates.clone(), cfg.peer_rate)
        .and_then(|m| m.with_peer_mask(cfg.peer_enabled.clone()))
        .map_err(|e| ConfigError::invalid("ap_rates", "", e))?;
    let network = CellNetwork::new(grid, model, cfg.users, cfg.access_points, cfg.ap_cell, cfg.seed)
        .map_err(|e| ConfigError::invalid("ap_cell", cfg.ap_cell, e))?;
    let schedule = cfg.schedule();
    let mut files_rng = SimRng::new(cfg.seed, streams::FILES);
    let files = draw_requests(
        cfg.users,
        cfg.access_points,
        schedule.probability_at(0),
        cfg.mode,
        &mut files_rng,
    )
    .map_err(|e| ConfigError::invalid("phases", "", e))?;
    let mut sim = Simulation::new(network, files, cfg.user_configs.clone(), cfg.v)?
        .with_phases(schedule.clone(), files_rng);

    let constants = cfg.constants();
    let mut monitor = BoundMonitor::new(&cfg.user_configs, cfg.v, constants.clone(), &cfg.windows);
    let mut total = TraceAccumulator::new(cfg.users);
    let mut phases: Vec<TraceAccumulator> = schedule
        .phases()
        .iter()
        .map(|_| TraceAccumulator::new(cfg.users))
        .collect();
    let mut csv = String::new();
    if trace {
        csv.push_str(TRACE_HEADER);
        csv.push('\n');
    }
    let mut interval = Interval::default();
    let per_user = cfg.users.max(1) as f64;

    for t in 0..cfg.slots {
        let m = sim.step()?;
        monitor.observe(&m);
        total.record(&m);
        phases[schedule.phase_index(t)].record(&m);
        if !trace {
            continue;
        }
        interval.slots += 1;
        interval.ap += m.ap_packets();
        interval.peer += m.peer_packets();
        let q = &m.queues.q;
        if !q.is_empty() {
            interval.mean_q += q.iter().sum::<f64>() / q.len() as f64;
        }
        interval.max_q = q.iter().copied().fold(interval.max_q, f64::max);
        interval.max_h = m.queues.h.iter().copied().fold(interval.max_h, f64::max);
        if (t + 1) % cfg.trace_interval == 0 || t + 1 == cfg.slots {
            let n = interval.slots as f64;
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                t,
                interval.ap as f64 / n / per_user,
                interval.peer as f64 / n / per_user,
                interval.mean_q / n,
                interval.max_q,
                interval.max_h,
                total.utility(&cfg.user_configs)
            )
            .expect("write to string");
            interval = Interval::default();
        }
    }

    let x = total.x_avg();
    let y = total.y_avg();
    let g = total.gamma_avg();
    let n = total.slots.max(1) as f64;
    let report = RunReport {
        slots: cfg.slots,
        v: cfg.v,
        seed: cfg.seed,
        throughput: total.throughput(),
        ap_throughput: total.ap_throughput(),
        p2p_throughput: total.peer_throughput(),
        utility: total.utility(&cfg.user_configs),
        mean_q: total.mean_q(),
        max_q: total.max_q,
        max_h: total.max_h,
        max_norm: total.max_norm,
        q_bound: cfg.queue_bound(),
        per_user: (0..cfg.users)
            .map(|k| UserReport {
                x_avg: x[k],
                ap_x_avg: total.ap_x[k] / n,
                y_avg: y[k],
                gamma_avg: g[k],
            })
            .collect(),
        phases: phases
            .iter()
            .enumerate()
            .map(|(i, acc)| {
                let (start, end) = schedule.span(i);
                PhaseReport {
                    start,
                    end,
                    probability: schedule.phases()[i].probability,
                    ap_throughput: acc.ap_throughput(),
                    p2p_throughput: acc.peer_throughput(),
                    mean_q: acc.mean_q(),
                }
            })
            .collect(),
        constants,
        bounds: monitor.report(),
    };
    Ok(RunOutput {
        trace_csv: csv,
        report,
    })
}

/// Runs one experiment in memory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    simulate(cfg, true)
}

/// Runs the experiment once per `V`, in parallel. Reports come back in
/// the order of `vs`.
pub fn sweep(cfg: &ExperimentConfig, vs: &[f64]) -> Result<Vec<RunReport>, ExperimentError> {
    vs.par_iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.v = v;
            simulate(&c, false).map(|o| o.report)
        })
        .collect()
}

pub fn sweep_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.sweep_row());
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes `trace.csv` and `report.json` into `dir`.
pub fn write_run(output: &RunOutput, dir: &Path) -> Result<(), ExperimentError> {
    ensure_dir(dir)?;
    write_file(&dir.join("trace.csv"), &output.trace_csv)?;
    write_file(&dir.join("report.json"), &output.report.to_json())
}

/// Writes `sweep.csv` and one `report_V<v>.json` per run into `dir`.
pub fn write_sweep(reports: &[RunReport], dir: &Path) -> Result<(), ExperimentError> {
    ensure_dir(dir)?;
    write_file(&dir.join("sweep.csv"), &sweep_csv(reports))?;
    for r in reports {
        write_file(&dir.join(format!("report_V{}.json", r.v)), &r.to_json())?;
    }
    Ok(())
}

/// Turns a failed bound check into an error.
pub fn require_bounds(report: &RunReport) -> Result<(), ExperimentError> {
    if report.bounds.pass {
        return Ok(());
    }
    let b = &report.bounds;
    let mut what = Vec::new();
    if !b.queue_bound.pass {
        what.push("queue bound".to_string());
    }
    if b.norm_bound.as_ref().is_some_and(|n| !n.pass) {
        what.push("norm bound".to_string());
    }
    for w in b.windows.iter().filter(|w| !w.pass) {
        what.push(format!("window {}", w.window));
    }
    Err(ExperimentError::Bound(format!("V = {}: {}", report.v, what.join(", "))))
}
