//! Euler-Maruyama simulation of the controlled SIRS system.
//!
//! One standard normal draw per step drives both `S` and `I` with opposite
//! signs, so `S + I` carries no noise. After each step the state is projected
//! back onto `D`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::attacks::AttackSchedule;
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::model::{diffusion, drift, running_cost, ModelParams, Regime, State};
use crate::rng::{substream, StreamKind};

/// Time grid, seed and initial condition of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub t0: f64,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    /// Index of the path within its batch; selects the noise substream.
    pub path: u64,
    pub initial_state: State,
    pub initial_regime: Regime,
}

impl PathConfig {
    pub fn steps(&self) -> Result<usize> {
        if !(self.step > 0.0) || !(self.horizon > self.t0) {
            return Err(Error::Config("path config needs step > 0 and horizon > t0".into()));
        }
        let n = (self.horizon - self.t0) / self.step;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "(horizon - t0) / step = {n} is not an integer number of steps"
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn for_path(&self, path: u64) -> Self {
        PathConfig { path, ..self.clone() }
    }
}

/// One recorded regime change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub from: u8,
    pub to: u8,
    /// Undiscounted lump cost paid; zero for attack switches.
    pub cost: f64,
    /// `v(.;a,p) - v(.;a,1-p) - g` at the switch, when a value source decided it.
    pub value_gap: Option<f64>,
}

/// Time-indexed controlled path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub a: Vec<u8>,
    pub p: Vec<u8>,
    pub protection_switches: Vec<SwitchEvent>,
    pub attack_switches: Vec<SwitchEvent>,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Trajectory {
            times: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
            i: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            p: Vec::with_capacity(n),
            protection_switches: Vec::new(),
            attack_switches: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> State {
        State::new(self.s[k], self.i[k])
    }

    pub fn final_infected(&self) -> f64 {
        *self.i.last().expect("trajectory is never empty")
    }

    /// `int e^{-delta t} (c_I I + f(S, p)) dt` by the trapezoid rule on the
    /// recorded grid, plus `sum e^{-delta tau} g` over protection switches.
    pub fn discounted_cost(&self, params: &ModelParams) -> f64 {
        let y = |k: usize| {
            (-params.delta * self.times[k]).exp()
                * running_cost(self.state(k), Regime::new(self.a[k], self.p[k]), params)
        };
        let mut running = 0.0;
        for k in 1..self.len() {
            running += 0.5 * (self.times[k] - self.times[k - 1]) * (y(k - 1) + y(k));
        }
        let lumps: f64 = self
            .protection_switches
            .iter()
            .map(|e| (-params.delta * e.time).exp() * e.cost)
            .sum();
        running + lumps
    }

    /// Writes `t,s,i,r,a,p`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "t,s,i,r,a,p")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_sig(self.times[k]),
                fmt_sig(self.s[k]),
                fmt_sig(self.i[k]),
                fmt_sig(self.r[k]),
                self.a[k],
                self.p[k]
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `time,track,from,to` for both switch lists, ordered by time
    /// (attack first on ties).
    pub fn write_switch_csv(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<(f64, u8, &str, u8, u8)> = self
            .attack_switches
            .iter()
            .map(|e| (e.time, 0, "attack", e.from, e.to))
            .chain(self.protection_switches.iter().map(|e| (e.time, 1, "protection", e.from, e.to)))
            .collect();
        rows.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "time,track,from,to")?;
        for (t, _, track, from, to) in rows {
            writeln!(w, "{},{track},{from},{to}", fmt_sig(t))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Clamps to `[0, 1]^2` and rescales onto the hypotenuse when `s + i > 1`.
pub fn project_to_simplex(s: f64, i: f64) -> State {
    let s = s.clamp(0.0, 1.0);
    let i = i.clamp(0.0, 1.0);
    let total = s + i;
    if total > 1.0 {
        State::new(s / total, i / total)
    } else {
        State::new(s, i)
    }
}

/// Unprojected Euler-Maruyama update.
pub fn euler_increment(state: State, regime: Regime, params: &ModelParams, h: f64, dw: f64) -> (f64, f64) {
    let (bs, bi) = drift(state, regime, params);
    let g = diffusion(state, params);
    (state.s + bs * h - g * dw, state.i + bi * h + g * dw)
}

/// One projected Euler-Maruyama step with Brownian increment `dw`.
pub fn step_euler(state: State, regime: Regime, params: &ModelParams, h: f64, dw: f64) -> State {
    let (s, i) = euler_increment(state, regime, params, h, dw);
    project_to_simplex(s, i)
}

/// What a controller decided at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub p: u8,
    /// Undiscounted cost charged if `p` differs from the previous level.
    pub cost: f64,
    pub value_gap: Option<f64>,
}

/// Simulation loop shared by the plain and value-driven simulators.
///
/// At step `k`: read the attack level from the schedule (recording a flip),
/// ask the controller for the protection level given the pre-step state,
/// record the row, then integrate one step with that regime.
pub(crate) fn run_path<C>(
    params: &ModelParams,
    schedule: &AttackSchedule,
    config: &PathConfig,
    mut control: C,
) -> Result<Trajectory>
where
    C: FnMut(usize, f64, State, Regime) -> Result<Decision>,
{
    let n = config.steps()?;
    if !config.initial_state.is_valid() {
        return Err(Error::Config("initial state outside D".into()));
    }
    let mut rng = substream(config.seed, config.path, StreamKind::Noise);
    let sqrt_h = config.step.sqrt();
    let mut traj = Trajectory::with_capacity(n + 1);
    let mut state = config.initial_state;
    let mut a_prev = schedule.attack_level_at(config.t0);
    let mut p_prev = config.initial_regime.p;

    for k in 0..=n {
        let t = config.t0 + k as f64 * config.step;
        let a = schedule.attack_level_at(t);
        if k > 0 && a != a_prev {
            traj.attack_switches.push(SwitchEvent { time: t, from: a_prev, to: a, cost: 0.0, value_gap: None });
        }
        let decision = control(k, t, state, Regime::new(a, p_prev))?;
        if decision.p > 1 {
            return Err(Error::Policy { time: t, message: format!("protection level {} is not binary", decision.p) });
        }
        if decision.p != p_prev {
            traj.protection_switches.push(SwitchEvent {
                time: t,
                from: p_prev,
                to: decision.p,
                cost: decision.cost,
                value_gap: decision.value_gap,
            });
        }
        traj.times.push(t);
        traj.s.push(state.s);
        traj.i.push(state.i);
        traj.r.push(state.r());
        traj.a.push(a);
        traj.p.push(decision.p);

        let z: f64 = rng.sample(StandardNormal);
        if k < n {
            state = step_euler(state, Regime::new(a, decision.p), params, config.step, sqrt_h * z);
        }
        a_prev = a;
        p_prev = decision.p;
    }
    Ok(traj)
}

/// Simulates one path. `policy(t, state, regime)` returns the protection level
/// to hold over the next step, where `regime.p` is the level currently held.
/// Switches are recorded with zero cost.
pub fn simulate<P>(params: &ModelParams, schedule: &AttackSchedule, mut policy: P, config: &PathConfig) -> Result<Trajectory>
where
    P: FnMut(f64, State, Regime) -> std::result::Result<u8, String>,
{
    run_path(params, schedule, config, |_, t, st, reg| {
        let p = policy(t, st, reg).map_err(|message| Error::Policy { time: t, message })?;
        Ok(Decision { p, cost: 0.0, value_gap: None })
    })
}

/// Like [`simulate`] but charges `price(state, regime_left)` at each switch.
pub fn simulate_priced<P, G>(
    params: &ModelParams,
    schedule: &AttackSchedule,
    mut policy: P,
    mut price: G,
    config: &PathConfig,
) -> Result<Trajectory>
where
    P: FnMut(f64, State, Regime) -> std::result::Result<u8, String>,
    G: FnMut(State, Regime) -> Result<f64>,
{
    run_path(params, schedule, config, |_, t, st, reg| {
        let p = policy(t, st, reg).map_err(|message| Error::Policy { time: t, message })?;
        let cost = if p != reg.p { price(st, reg)? } else { 0.0 };
        Ok(Decision { p, cost, value_gap: None })
    })
}
