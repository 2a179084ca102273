//! Monte Carlo evaluation of the discounted cost of a protection policy.
//!
//! Path `j` draws its noise and (for Poisson attacks) its schedule from
//! substreams keyed by `j`, so evaluating several policies with the same seed
//! uses common random numbers.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::attacks::AttackModel;
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::model::{switch_cost, ModelParams, Regime, State, SwitchCosts};
use crate::policy::{simulate_controlled, ControlOptions, ValueSource};
use crate::sde::{run_path, Decision, PathConfig, Trajectory};

/// Protection controller to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// Value-driven switching from a value source.
    Optimal,
    Never,
    /// Protect from time zero on.
    Always,
    /// Protect while `I >= level`, unprotect below.
    Threshold(f64),
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Optimal => f.write_str("optimal"),
            PolicyKind::Never => f.write_str("never"),
            PolicyKind::Always => f.write_str("always"),
            PolicyKind::Threshold(v) => write!(f, "threshold:{v}"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(PolicyKind::Optimal),
            "never" => Ok(PolicyKind::Never),
            "always" => Ok(PolicyKind::Always),
            _ => {
                let level = s
                    .strip_prefix("threshold:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Config(format!("unknown policy `{s}`")))?;
                Ok(PolicyKind::Threshold(level))
            }
        }
    }
}

/// Batch settings.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    pub initial_state: State,
    pub initial_regime: Regime,
    pub control: ControlOptions,
}

impl McConfig {
    /// Default truncation horizon.
    pub const HORIZON: f64 = 60.0;

    fn path(&self, j: usize) -> PathConfig {
        PathConfig {
            t0: 0.0,
            horizon: self.horizon,
            step: self.step,
            seed: self.seed,
            path: j as u64,
            initial_state: self.initial_state,
            initial_regime: self.initial_regime,
        }
    }
}

/// Estimates for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub policy: PolicyKind,
    pub mean: f64,
    pub se: f64,
    /// 95% confidence half-width.
    pub half_width: f64,
    /// Bound on the discounted cost beyond the horizon.
    pub tail_bound: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub mean_final_infected: f64,
    /// Per-path discounted costs, in path order.
    pub costs: Vec<f64>,
    pub final_infected: Vec<f64>,
    /// Number of owner switches on each path.
    pub owner_switches: Vec<usize>,
}

/// `(c_I + c_V kappa) e^{-delta T} / delta`.
pub fn tail_bound(params: &ModelParams, horizon: f64) -> f64 {
    params.max_running_cost() * (-params.delta * horizon).exp() / params.delta
}

fn fixed_rule_path(
    params: &ModelParams,
    costs: &SwitchCosts,
    rule: impl Fn(State, Regime) -> u8,
    src: Option<&dyn ValueSource>,
    schedule: &crate::attacks::AttackSchedule,
    cfg: &PathConfig,
) -> Result<Trajectory> {
    run_path(params, schedule, cfg, |_, _, state, regime| {
        let p = rule(state, regime);
        if p == regime.p {
            return Ok(Decision { p, cost: 0.0, value_gap: None });
        }
        let cost = switch_cost(costs.leaving(regime.p), regime, |r| src.map(|s| s.value(state, r)))?;
        Ok(Decision { p, cost, value_gap: None })
    })
}

/// Simulates path `j` under `policy`.
pub fn simulate_policy_path(
    params: &ModelParams,
    costs: &SwitchCosts,
    policy: PolicyKind,
    src: Option<&dyn ValueSource>,
    attack: &AttackModel,
    config: &McConfig,
    j: usize,
) -> Result<Trajectory> {
    let cfg = config.path(j);
    let schedule = attack.schedule_for_path(config.seed, j as u64, config.horizon, config.step)?;
    match policy {
        PolicyKind::Optimal => {
            let src = src.ok_or_else(|| Error::Config("the optimal policy needs a value source".into()))?;
            Ok(simulate_controlled(params, src, costs, &schedule, &cfg, &config.control)?.trajectory)
        }
        PolicyKind::Never => fixed_rule_path(params, costs, |_, _| 0, src, &schedule, &cfg),
        PolicyKind::Always => fixed_rule_path(params, costs, |_, _| 1, src, &schedule, &cfg),
        PolicyKind::Threshold(level) => {
            fixed_rule_path(params, costs, |st, _| u8::from(st.i >= level), src, &schedule, &cfg)
        }
    }
}

/// Runs `n_paths` paths in parallel and reduces them in path order.
pub fn evaluate(
    params: &ModelParams,
    costs: &SwitchCosts,
    policy: PolicyKind,
    src: Option<&dyn ValueSource>,
    attack: &AttackModel,
    config: &McConfig,
) -> Result<McSummary> {
    if config.n_paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    if !(config.horizon > 0.0) {
        return Err(Error::Config("horizon must be > 0".into()));
    }
    params.validate()?;
    let paths: Vec<(f64, f64, usize)> = (0..config.n_paths)
        .into_par_iter()
        .map(|j| {
            let traj = simulate_policy_path(params, costs, policy, src, attack, config, j)?;
            Ok((traj.discounted_cost(params), traj.final_infected(), traj.protection_switches.len()))
        })
        .collect::<Result<_>>()?;
    let n = paths.len() as f64;
    let costs_v: Vec<f64> = paths.iter().map(|x| x.0).collect();
    let final_i: Vec<f64> = paths.iter().map(|x| x.1).collect();
    let mean = costs_v.iter().sum::<f64>() / n;
    let var = if paths.len() > 1 { costs_v.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let se = (var / n).sqrt();
    Ok(McSummary {
        policy,
        mean,
        se,
        half_width: 1.96 * se,
        tail_bound: tail_bound(params, config.horizon),
        n_paths: config.n_paths,
        seed: config.seed,
        mean_final_infected: final_i.iter().sum::<f64>() / n,
        costs: costs_v,
        final_infected: final_i,
        owner_switches: paths.iter().map(|x| x.2).collect(),
    })
}

/// Paired difference `a - b` over common paths: `(mean, se)`.
pub fn paired_difference(a: &McSummary, b: &McSummary) -> Result<(f64, f64)> {
    if a.seed != b.seed || a.n_paths != b.n_paths {
        return Err(Error::Config("paired comparison needs the same seed and path count".into()));
    }
    let d: Vec<f64> = a.costs.iter().zip(&b.costs).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = if d.len() > 1 { d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok((mean, (var / n).sqrt()))
}

/// Writes `policy,mean,se,tail_bound,n_paths,seed`, one row per summary.
pub fn write_summary_csv(rows: &[McSummary], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "policy,mean,se,tail_bound,n_paths,seed")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.policy, fmt_sig(r.mean), fmt_sig(r.se), fmt_sig(r.tail_bound), r.n_paths, r.seed)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn config(n_paths: usize, state: State, regime: Regime) -> McConfig {
        McConfig {
            n_paths,
            horizon: McConfig::HORIZON,
            step: 0.125,
            seed: 17,
            initial_state: state,
            initial_regime: regime,
            control: ControlOptions::default(),
        }
    }

    #[test]
    fn costless_model_evaluates_to_zero() {
        let sc = Scenario::one();
        let p = ModelParams { c_i: 0.0, c_v: 0.0, ..sc.params };
        let s = evaluate(&p, &sc.costs, PolicyKind::Never, None, &AttackModel::Constant(1), &config(50, State::new(0.9, 0.1), Regime::new(1, 0))).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.se, 0.0);
    }

    #[test]
    fn infection_free_never_protect_is_zero() {
        let sc = Scenario::one();
        let s = evaluate(&sc.params, &sc.costs, PolicyKind::Never, None, &AttackModel::Constant(0), &config(20, State::new(1.0, 0.0), Regime::new(0, 0))).unwrap();
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let sc = Scenario::two();
        let cfg = config(64, State::new(0.9, 0.05), Regime::new(1, 0));
        let attack = AttackModel::Poisson { lambda: 0.1, a0: 1 };
        let costs = SwitchCosts::constant(0.001, 0.001);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| evaluate(&sc.params, &costs, PolicyKind::Threshold(0.1), None, &attack, &cfg).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn costs_are_nonnegative_and_bounded() {
        let sc = Scenario::one();
        let costs = SwitchCosts::constant(0.001, 0.001);
        let s = evaluate(&sc.params, &costs, PolicyKind::Always, None, &AttackModel::Constant(1), &config(40, State::new(0.9, 0.1), Regime::new(1, 0))).unwrap();
        let bound = sc.params.value_upper_bound() + 0.001;
        assert!(s.costs.iter().all(|&c| (0.0..=bound).contains(&c)));
        assert!(s.owner_switches.iter().all(|&k| k == 1));
    }

    #[test]
    fn proportional_costs_need_values_to_switch() {
        let sc = Scenario::one();
        let r = evaluate(&sc.params, &sc.costs, PolicyKind::Always, None, &AttackModel::Constant(1), &config(2, State::new(0.9, 0.1), Regime::new(1, 0)));
        assert!(r.is_err());
        // never switching needs no price
        assert!(evaluate(&sc.params, &sc.costs, PolicyKind::Never, None, &AttackModel::Constant(1), &config(2, State::new(0.9, 0.1), Regime::new(1, 0))).is_ok());
    }

    #[test]
    fn policy_names_parse() {
        assert_eq!("never".parse::<PolicyKind>().unwrap(), PolicyKind::Never);
        assert_eq!("threshold:0.2".parse::<PolicyKind>().unwrap(), PolicyKind::Threshold(0.2));
        assert!("sometimes".parse::<PolicyKind>().is_err());
        assert!("threshold:x".parse::<PolicyKind>().is_err());
        assert_eq!(PolicyKind::Threshold(0.25).to_string(), "threshold:0.25");
    }

    #[test]
    fn tail_bound_value() {
        let p = Scenario::one().params;
        let expected = (0.01 + 0.05 * 0.03) * (-12.0_f64).exp() / 0.2;
        assert!((tail_bound(&p, 60.0) - expected).abs() < 1e-18);
    }
}
