//! Sweep the running cost of protection and report where switching protection
//! on first pays, together with the expected switching times.
//!
//! ```text
//! cargo run --release --example protection_cost_sweep
//! ```

use sirs_control::grid::{solve_psor, Grid, SolveOptions};
use sirs_control::mc::{self, McConfig, PolicyKind};
use sirs_control::policy::{switching_region, ControlOptions, GridSource};
use sirs_control::{ModelParams, Regime, Scenario};

fn main() -> sirs_control::Result<()> {
    let base = Scenario::one();
    let grid = Grid::new(48)?;
    println!("{:>6} {:>8} {:>10} {:>12} {:>12}", "c_V", "nodes", "optimal", "never", "first on");
    for c_v in [0.005, 0.01, 0.011, 0.012, 0.013, 0.02, 0.05] {
        let params = ModelParams { c_v, ..base.params };
        let src = GridSource::new(solve_psor(&grid, &params, &base.costs, &SolveOptions::default())?);
        let region = switching_region(&src, &base.costs, Regime::new(1, 0), &grid, 1e-12)?;
        let config = McConfig {
            n_paths: 200,
            horizon: McConfig::HORIZON,
            step: base.step,
            seed: base.seed,
            initial_state: base.initial_state,
            initial_regime: Regime::new(1, 0),
            control: ControlOptions::default(),
        };
        let opt = mc::evaluate(&params, &base.costs, PolicyKind::Optimal, Some(&src), &base.attack, &config)?;
        let never = mc::evaluate(&params, &base.costs, PolicyKind::Never, Some(&src), &base.attack, &config)?;
        let first = mc::simulate_policy_path(&params, &base.costs, PolicyKind::Optimal, Some(&src), &base.attack, &config, 0)?
            .protection_switches
            .first()
            .map_or_else(|| "-".to_string(), |e| format!("{:.2}", e.time));
        println!("{c_v:>6} {:>8} {:>10.5} {:>12.5} {first:>12}", region.count(), opt.mean, never.mean);
    }
    Ok(())
}
