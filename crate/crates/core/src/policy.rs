//! Switching regions and the value-driven controlled simulation.
//!
//! The owner flips protection exactly when the current value has reached the
//! switched value plus the switching cost; the hacker flips the attack level at
//! schedule times. Both read the same value source.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::attacks::AttackSchedule;
use crate::dgm::Network;
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::grid::{Grid, ValueField};
use crate::model::{switch_cost, ModelParams, Regime, State, SwitchCosts};
use crate::sde::{run_path, Decision, PathConfig, Trajectory};

/// Uniform value query over all four regimes.
pub trait ValueSource: Sync {
    fn value(&self, state: State, regime: Regime) -> f64;

    /// Typical magnitude of the values, used to scale tolerances.
    fn scale(&self) -> f64;

    /// Fingerprint of the model parameters the source was computed with.
    fn params_fingerprint(&self) -> u64;
}

/// Grid values with piecewise-linear interpolation.
#[derive(Debug, Clone)]
pub struct GridSource {
    grid: Grid,
    field: ValueField,
    scale: f64,
}

impl GridSource {
    pub fn new(field: ValueField) -> Self {
        let grid = field.grid();
        let scale = field.values.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        GridSource { grid, field, scale }
    }

    pub fn field(&self) -> &ValueField {
        &self.field
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

impl ValueSource for GridSource {
    fn value(&self, state: State, regime: Regime) -> f64 {
        self.grid.interpolate(self.field.regime(regime), state)
    }

    fn scale(&self) -> f64 {
        self.scale
    }

    fn params_fingerprint(&self) -> u64 {
        self.field.params_fingerprint
    }
}

/// One trained network per regime.
#[derive(Debug, Clone)]
pub struct NetworkSource {
    nets: Vec<Network>,
    fingerprint: u64,
}

impl NetworkSource {
    /// Needs exactly one network for each of the four regimes.
    pub fn new(nets: Vec<Network>, params_fingerprint: u64) -> Result<Self> {
        let mut ordered = Vec::with_capacity(4);
        for r in Regime::ALL {
            let mut found = nets.iter().filter(|n| n.regime() == r);
            match (found.next(), found.next()) {
                (Some(n), None) => ordered.push(n.clone()),
                _ => return Err(Error::Config(format!("value source needs exactly one network for regime {r}"))),
            }
        }
        Ok(NetworkSource { nets: ordered, fingerprint: params_fingerprint })
    }
}

impl ValueSource for NetworkSource {
    fn value(&self, state: State, regime: Regime) -> f64 {
        self.nets[regime.index()].value(state.s, state.i)
    }

    fn scale(&self) -> f64 {
        self.nets.iter().map(|n| n.output_scale().abs()).fold(0.0, f64::max)
    }

    fn params_fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

/// `v(x;a,p) - v(x;a,1-p) - g(x)`: nonnegative exactly in the switching
/// region from `p`.
pub fn obstacle_gap(src: &dyn ValueSource, costs: &SwitchCosts, state: State, regime: Regime) -> Result<f64> {
    let g = switch_cost(costs.leaving(regime.p), regime, |r| Some(src.value(state, r)))?;
    Ok(src.value(state, regime) - src.value(state, regime.flip_protection()) - g)
}

/// Nodes of one regime where switching protection is optimal.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub regime: Regime,
    pub n: usize,
    pub tol: f64,
    pub in_region: Vec<bool>,
}

impl RegionMask {
    pub fn count(&self) -> usize {
        self.in_region.iter().filter(|&&b| b).count()
    }
}

/// Marks nodes with `v(a,p) >= v(a,1-p) + g - tol`.
pub fn switching_region(src: &dyn ValueSource, costs: &SwitchCosts, regime: Regime, grid: &Grid, tol: f64) -> Result<RegionMask> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("region tolerance must be > 0, got {tol}")));
    }
    let in_region = grid
        .nodes()
        .map(|(j, k)| obstacle_gap(src, costs, grid.state(j, k), regime).map(|gap| gap >= -tol))
        .collect::<Result<_>>()?;
    Ok(RegionMask { regime, n: grid.n(), tol, in_region })
}

/// Writes `a,p,s,i,in_switching_region` (0/1) for every mask.
pub fn write_masks_csv(masks: &[RegionMask], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "a,p,s,i,in_switching_region")?;
    for m in masks {
        let grid = Grid::new(m.n)?;
        for ((j, k), &inside) in grid.nodes().zip(&m.in_region) {
            let st = grid.state(j, k);
            writeln!(w, "{},{},{},{},{}", m.regime.a, m.regime.p, fmt_sig(st.s), fmt_sig(st.i), u8::from(inside))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Gradient mismatch across the free boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFitReport {
    /// Boundary nodes and `|grad v(.;p) - grad v(.;1-p)|` there.
    pub nodes: Vec<(State, f64)>,
    pub max: f64,
    pub mean: f64,
}

/// Compares central-difference gradients of `v(.;a,p)` and `v(.;a,1-p)` at
/// region nodes that have a 4-neighbour outside the region. Nodes without a
/// full central stencil are skipped.
pub fn smooth_fit_diagnostic(field: &ValueField, mask: &RegionMask) -> Result<SmoothFitReport> {
    if field.n != mask.n {
        return Err(Error::Config(format!("mask is for n = {}, field has n = {}", mask.n, field.n)));
    }
    let grid = field.grid();
    let n = grid.n();
    let h = grid.spacing();
    let own = field.regime(mask.regime);
    let other = field.regime(mask.regime.flip_protection());
    let grad = |v: &[f64], j: usize, k: usize| {
        (
            (v[grid.index(j + 1, k)] - v[grid.index(j - 1, k)]) / (2.0 * h),
            (v[grid.index(j, k + 1)] - v[grid.index(j, k - 1)]) / (2.0 * h),
        )
    };
    let mut nodes = Vec::new();
    for (j, k) in grid.nodes() {
        if j == 0 || k == 0 || j + k + 1 > n || !mask.in_region[grid.index(j, k)] {
            continue;
        }
        let neighbours = [(j + 1, k), (j - 1, k), (j, k + 1), (j, k - 1)];
        if neighbours.iter().all(|&(x, y)| mask.in_region[grid.index(x, y)]) {
            continue;
        }
        let (a, b) = (grad(own, j, k), grad(other, j, k));
        nodes.push((grid.state(j, k), (a.0 - b.0).hypot(a.1 - b.1)));
    }
    let max = nodes.iter().map(|x| x.1).fold(0.0, f64::max);
    let mean = if nodes.is_empty() { 0.0 } else { nodes.iter().map(|x| x.1).sum::<f64>() / nodes.len() as f64 };
    Ok(SmoothFitReport { nodes, max, mean })
}

/// Tuning of the controlled simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOptions {
    /// Switch when the obstacle gap is above `-tol_rel * scale`.
    pub tol_rel: f64,
    /// Steps after an owner switch during which the owner may not switch.
    pub refractory_steps: usize,
}

impl Default for ControlOptions {
    fn default() -> Self {
        ControlOptions { tol_rel: 1e-9, refractory_steps: 1 }
    }
}

/// Who changed a regime component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    Owner,
    Attacker,
}

impl Actor {
    pub fn id(self) -> &'static str {
        match self {
            Actor::Owner => "owner",
            Actor::Attacker => "attacker",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchLogEntry {
    pub time: f64,
    pub actor: Actor,
    pub from: u8,
    pub to: u8,
    pub value_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    pub trajectory: Trajectory,
    /// Attack flips precede owner flips at equal times.
    pub log: Vec<SwitchLogEntry>,
    pub cost: f64,
}

impl ControlledPath {
    /// Times of owner switches.
    pub fn owner_times(&self) -> Vec<f64> {
        self.trajectory.protection_switches.iter().map(|e| e.time).collect()
    }

    /// Writes `time,actor,from,to,value_gap` (empty gap for attack flips).
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        write_switch_log(&self.log, path)
    }
}

pub fn write_switch_log(log: &[SwitchLogEntry], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "time,actor,from,to,value_gap")?;
    for e in log {
        let gap = e.value_gap.map(fmt_sig).unwrap_or_default();
        writeln!(w, "{},{},{},{},{gap}", fmt_sig(e.time), e.actor.id(), e.from, e.to)?;
    }
    w.flush()?;
    Ok(())
}

/// Merges attack and protection flips of a trajectory into one log.
pub fn switch_log(traj: &Trajectory) -> Vec<SwitchLogEntry> {
    let mut log: Vec<SwitchLogEntry> = traj
        .attack_switches
        .iter()
        .map(|e| SwitchLogEntry { time: e.time, actor: Actor::Attacker, from: e.from, to: e.to, value_gap: None })
        .chain(traj.protection_switches.iter().map(|e| SwitchLogEntry {
            time: e.time,
            actor: Actor::Owner,
            from: e.from,
            to: e.to,
            value_gap: e.value_gap,
        }))
        .collect();
    log.sort_by(|x, y| x.time.total_cmp(&y.time).then((x.actor == Actor::Owner).cmp(&(y.actor == Actor::Owner))));
    log
}

/// Simulates one path under the value-driven switching rule.
pub fn simulate_controlled(
    params: &ModelParams,
    src: &dyn ValueSource,
    costs: &SwitchCosts,
    schedule: &AttackSchedule,
    config: &PathConfig,
    options: &ControlOptions,
) -> Result<ControlledPath> {
    let tol = options.tol_rel * src.scale();
    let mut blocked_until = 0usize;
    let trajectory = run_path(params, schedule, config, |k, _, state, regime| {
        if k < blocked_until {
            return Ok(Decision { p: regime.p, cost: 0.0, value_gap: None });
        }
        let gap = obstacle_gap(src, costs, state, regime)?;
        if gap >= -tol {
            let cost = switch_cost(costs.leaving(regime.p), regime, |r| Some(src.value(state, r)))?;
            blocked_until = k + 1 + options.refractory_steps;
            Ok(Decision { p: 1 - regime.p, cost, value_gap: Some(gap) })
        } else {
            Ok(Decision { p: regime.p, cost: 0.0, value_gap: None })
        }
    })?;
    let cost = trajectory.discounted_cost(params);
    let log = switch_log(&trajectory);
    Ok(ControlledPath { trajectory, log, cost })
}
