//! Scenario 2 costs with attack on/off times read from a CSV file, solved with
//! the attack-coupled mesh operator.
//!
//! ```text
//! cargo run --release --example explicit_attacks
//! ```

use std::path::PathBuf;

use sirs_control::grid::{solve_psor, Grid, SolveOptions};
use sirs_control::policy::{simulate_controlled, ControlOptions, GridSource, ValueSource};
use sirs_control::sde::PathConfig;
use sirs_control::{Regime, Scenario};

fn main() -> sirs_control::Result<()> {
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/scenario2_explicit.cfg");
    let sc = Scenario::from_file(&cfg)?;
    let schedule = sc.attack.schedule_for_path(sc.seed, 0, sc.horizon, sc.step)?;
    println!("attack starts at a = {} and flips at {:?}", schedule.a0(), schedule.switch_times());

    // flip rate for the coupled operator: the Poisson rate of scenario 2
    let lambda = 0.1;
    for coupling in [None, Some(lambda)] {
        let opts = SolveOptions { coupling_lambda: coupling, ..Default::default() };
        let src = GridSource::new(solve_psor(&Grid::new(48)?, &sc.params, &sc.costs, &opts)?);
        let path = PathConfig {
            t0: 0.0,
            horizon: sc.horizon,
            step: sc.step,
            seed: sc.seed,
            path: 0,
            initial_state: sc.initial_state,
            initial_regime: Regime::new(schedule.a0(), sc.p0),
        };
        let run = simulate_controlled(&sc.params, &src, &sc.costs, &schedule, &path, &ControlOptions::default())?;
        println!(
            "coupling {:?}: v(x0; 1, 0) = {:.5}, path cost {:.5}, owner switches at {:?}",
            coupling,
            src.value(sc.initial_state, Regime::new(1, 0)),
            run.cost,
            run.owner_times()
        );
    }
    Ok(())
}
