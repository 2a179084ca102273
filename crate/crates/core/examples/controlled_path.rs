//! Simulate one path under the optimal switching rule next to the same path
//! without control, and draw both.
//!
//! Uses the cheap-protection configuration, where switching protection on pays.
//!
//! ```text
//! cargo run --release --example controlled_path -- [config] [out_dir]
//! ```

use std::path::PathBuf;

use sirs_control::grid::{solve_psor, Grid, SolveOptions};
use sirs_control::policy::{simulate_controlled, ControlOptions, GridSource};
use sirs_control::sde::{simulate, PathConfig};
use sirs_control::{svg, Regime, Scenario};

fn main() -> sirs_control::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/cheap_protection.cfg"), PathBuf::from);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("sirs_controlled_path"), PathBuf::from);
    let sc = Scenario::from_file(&config)?;

    let field = solve_psor(&Grid::new(64)?, &sc.params, &sc.costs, &SolveOptions::default())?;
    let src = GridSource::new(field);
    let schedule = sc.attack.schedule_for_path(sc.seed, 0, sc.horizon, sc.step)?;
    let path = PathConfig {
        t0: 0.0,
        horizon: sc.horizon,
        step: sc.step,
        seed: sc.seed,
        path: 0,
        initial_state: sc.initial_state,
        initial_regime: Regime::new(schedule.a0(), sc.p0),
    };
    let controlled = simulate_controlled(&sc.params, &src, &sc.costs, &schedule, &path, &ControlOptions::default())?;
    let free = simulate(&sc.params, &schedule, |_, _, r| Ok(r.p), &path)?;

    for e in &controlled.log {
        println!("t = {:>6.3}  {:?}  {} -> {}", e.time, e.actor, e.from, e.to);
    }
    println!("discounted cost: controlled {:.5}, uncontrolled {:.5}", controlled.cost, free.discounted_cost(&sc.params));
    println!("final I: controlled {:.4}, uncontrolled {:.4}", controlled.trajectory.final_infected(), free.final_infected());

    std::fs::create_dir_all(&out)?;
    controlled.trajectory.write_csv(&out.join("trajectory.csv"))?;
    svg::trajectory_chart("controlled vs uncontrolled", &controlled.trajectory, Some(&free)).write(&out.join("trajectory.svg"))?;
    println!("wrote {}", out.display());
    Ok(())
}
