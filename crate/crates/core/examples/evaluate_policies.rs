//! Price the optimal rule and three fixed rules by Monte Carlo on common
//! random numbers, then report paired differences against the optimum.
//!
//! ```text
//! cargo run --release --example evaluate_policies -- [paths] [config]
//! ```

use std::path::PathBuf;

use sirs_control::grid::{solve_psor, Grid, SolveOptions};
use sirs_control::mc::{self, McConfig, PolicyKind};
use sirs_control::policy::{ControlOptions, GridSource};
use sirs_control::{Regime, Scenario};

fn main() -> sirs_control::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_paths = args.next().map_or(2000, |s| s.parse().expect("paths must be an integer"));
    let sc = match args.next() {
        Some(p) => Scenario::from_file(&PathBuf::from(p))?,
        None => Scenario::one(),
    };
    let src = GridSource::new(solve_psor(&Grid::new(64)?, &sc.params, &sc.costs, &SolveOptions::default())?);
    let config = McConfig {
        n_paths,
        horizon: McConfig::HORIZON,
        step: sc.step,
        seed: sc.seed,
        initial_state: sc.initial_state,
        initial_regime: Regime::new(sc.attack.a0(), sc.p0),
        control: ControlOptions::default(),
    };
    let policies = [PolicyKind::Optimal, PolicyKind::Never, PolicyKind::Always, PolicyKind::Threshold(0.1)];
    let rows = policies
        .iter()
        .map(|&p| mc::evaluate(&sc.params, &sc.costs, p, Some(&src), &sc.attack, &config))
        .collect::<sirs_control::Result<Vec<_>>>()?;

    println!("{:<16} {:>10} {:>10} {:>10}", "policy", "mean", "95% hw", "final I");
    for r in &rows {
        println!("{:<16} {:>10.5} {:>10.5} {:>10.4}", r.policy.to_string(), r.mean, r.half_width, r.mean_final_infected);
    }
    println!("costs beyond the horizon are below {:.1e}", rows[0].tail_bound);
    for r in &rows[1..] {
        let (d, se) = mc::paired_difference(r, &rows[0])?;
        println!("{} - optimal = {d:.5} +/- {:.5}", r.policy, 1.96 * se);
    }
    Ok(())
}
