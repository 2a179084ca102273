//! Train the neural solver for the two constant-attack regimes and compare it
//! with the mesh solution.
//!
//! ```text
//! cargo run --release --example train_dgm -- [steps]
//! ```

use sirs_control::dgm::{self, DgmConfig};
use sirs_control::grid::{solve_psor, Grid, SolveOptions};
use sirs_control::{Regime, Scenario, State};

fn main() -> sirs_control::Result<()> {
    let steps = std::env::args().nth(1).map_or(3000, |s| s.parse().expect("steps must be an integer"));
    let sc = Scenario::one();
    let config = DgmConfig { steps, regimes: vec![Regime::new(1, 0), Regime::new(1, 1)], ..Default::default() };
    let out = dgm::train_with(&config, &sc.params, &sc.costs, |step, parts| {
        if step % 500 == 0 {
            println!("step {step:>6}  loss {:.3e}  pde {:.3e}  boundary {:.3e}", parts.total, parts.pde, parts.boundary);
        }
    })?;
    println!("stopped after {} steps (converged: {})", out.trace.len(), out.converged);

    let grid = Grid::new(64)?;
    let field = solve_psor(&grid, &sc.params, &sc.costs, &SolveOptions::default())?;
    let pts: Vec<State> = grid.nodes().map(|(j, k)| grid.state(j, k)).collect();
    for net in &out.nets {
        let reference = field.regime(net.regime());
        let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = net.values(&pts).iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        println!("a = {}, p = {}: sup |net - mesh| / sup |mesh| = {:.3}", net.regime().a, net.regime().p, err / scale);
    }
    Ok(())
}
