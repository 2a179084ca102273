//! The hacker's exogenous on/off attack process.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamKind};

/// How a schedule was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Constant,
    Poisson { lambda: f64, seed: u64 },
    Explicit,
}

/// Piecewise-constant attack level: starts at `a0` and flips at each switch
/// time. Right-continuous, so at a switch time the new level is in force.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSchedule {
    a0: u8,
    switch_times: Vec<f64>,
    provenance: Provenance,
}

impl AttackSchedule {
    pub fn a0(&self) -> u8 {
        self.a0
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Schedule with given switch times; they must be finite, non-negative and
    /// strictly increasing.
    pub fn explicit(a0: u8, switch_times: Vec<f64>) -> Result<Self> {
        if a0 > 1 {
            return Err(Error::Config(format!("initial attack level must be 0 or 1, got {a0}")));
        }
        if switch_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Config("attack switch times must be finite and >= 0".into()));
        }
        if switch_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("attack switch times must be strictly increasing".into()));
        }
        Ok(AttackSchedule { a0, switch_times, provenance: Provenance::Explicit })
    }

    /// Loads switch times from a one-column CSV with header `time`.
    pub fn from_csv(a0: u8, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "time" => {}
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: "line 1: expected header `time`".into(),
                })
            }
        }
        let mut times = Vec::new();
        for (ln, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            times.push(line.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: bad time `{line}`", ln + 1),
            })?);
        }
        Self::explicit(a0, times)
    }

    /// Attack level in force at time `t`: `a0` flipped once per switch time `<= t`.
    pub fn attack_level_at(&self, t: f64) -> u8 {
        let flips = self.switch_times.partition_point(|&x| x <= t);
        self.a0 ^ (flips % 2) as u8
    }
}

/// Attack that never changes.
pub fn constant_attack(a0: u8) -> AttackSchedule {
    assert!(a0 <= 1, "attack level must be 0 or 1");
    AttackSchedule { a0, switch_times: Vec::new(), provenance: Provenance::Constant }
}

/// Switch times of a homogeneous Poisson process of rate `lambda` on
/// `[0, horizon]`, from cumulative exponential gaps drawn on the
/// attack substream of `seed`.
///
/// Events closer than `min_gap` to the previous kept event are dropped, so two
/// flips never land in the same simulation step. Pass `0.0` to keep them all.
pub fn poisson_attack(lambda: f64, a0: u8, horizon: f64, seed: u64, min_gap: f64) -> Result<AttackSchedule> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("Poisson rate must be >= 0, got {lambda}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be > 0, got {horizon}")));
    }
    if a0 > 1 {
        return Err(Error::Config(format!("initial attack level must be 0 or 1, got {a0}")));
    }
    let mut times = Vec::new();
    if lambda > 0.0 {
        let mut rng = substream(seed, 0, StreamKind::Attack);
        let gaps = Exp::new(lambda).expect("rate checked above");
        let mut t = 0.0;
        loop {
            t += gaps.sample(&mut rng);
            if t > horizon {
                break;
            }
            if times.last().map_or(true, |&last: &f64| t - last >= min_gap) && t > 0.0 {
                times.push(t);
            }
        }
    }
    Ok(AttackSchedule { a0, switch_times: times, provenance: Provenance::Poisson { lambda, seed } })
}

/// Generator of attack schedules for repeated simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackModel {
    Constant(u8),
    /// A fresh Poisson schedule per path, drawn from that path's substream.
    Poisson { lambda: f64, a0: u8 },
    Explicit(AttackSchedule),
}

impl AttackModel {
    pub fn a0(&self) -> u8 {
        match self {
            AttackModel::Constant(a) => *a,
            AttackModel::Poisson { a0, .. } => *a0,
            AttackModel::Explicit(s) => s.a0(),
        }
    }

    /// Schedule for path `path` of a run with master seed `seed`.
    pub fn schedule_for_path(&self, seed: u64, path: u64, horizon: f64, min_gap: f64) -> Result<AttackSchedule> {
        match self {
            AttackModel::Constant(a) => Ok(constant_attack(*a)),
            AttackModel::Explicit(s) => Ok(s.clone()),
            AttackModel::Poisson { lambda, a0 } => {
                let mut rng = substream(seed, path, StreamKind::Attack);
                poisson_attack(*lambda, *a0, horizon, rng.gen(), min_gap)
            }
        }
    }
}
