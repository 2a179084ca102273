//! Solve the constant-attack scenario on a triangular mesh and report the
//! residuals and the value at the initial state in each regime.
//!
//! ```text
//! cargo run --release --example solve_grid -- [n] [out_dir]
//! ```

use std::path::PathBuf;

use sirs_control::grid::{residual_report, solve_psor, Grid, SolveOptions};
use sirs_control::policy::{GridSource, ValueSource};
use sirs_control::{Regime, Scenario};

fn main() -> sirs_control::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(64, |s| s.parse().expect("n must be an integer"));
    let sc = Scenario::one();
    let grid = Grid::new(n)?;
    let field = solve_psor(&grid, &sc.params, &sc.costs, &SolveOptions::default())?;
    let report = residual_report(&field, &grid, &sc.params, &sc.costs, None);
    println!("n = {n}: {} sweeps, final sweep change {:.2e}", field.sweeps, field.residual_max);
    println!("max |min(pde, gap)| = {:.2e}", report.max_abs_complementarity);

    let src = GridSource::new(field);
    for r in Regime::ALL {
        println!("v({:?}; a={}, p={}) = {:.6}", (sc.initial_state.s, sc.initial_state.i), r.a, r.p, src.value(sc.initial_state, r));
    }
    if let Some(dir) = args.next().map(PathBuf::from) {
        std::fs::create_dir_all(&dir)?;
        src.field().write_csv(&dir.join("value_field.csv"))?;
        report.write_csv(&grid, &dir.join("residuals.csv"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
