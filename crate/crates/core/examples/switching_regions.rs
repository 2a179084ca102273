//! Switching regions of the cheap-protection configuration at two mesh sizes,
//! with the smooth-fit gradient mismatch along their boundary.
//!
//! ```text
//! cargo run --release --example switching_regions -- [out_dir]
//! ```

use std::path::PathBuf;

use sirs_control::grid::{solve_psor, Grid, SolveOptions};
use sirs_control::policy::{smooth_fit_diagnostic, switching_region, GridSource};
use sirs_control::{svg, Regime, Scenario};

fn main() -> sirs_control::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("sirs_regions"), PathBuf::from);
    std::fs::create_dir_all(&out)?;
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/cheap_protection.cfg");
    let sc = Scenario::from_file(&cfg)?;
    for n in [32, 64] {
        let grid = Grid::new(n)?;
        let src = GridSource::new(solve_psor(&grid, &sc.params, &sc.costs, &SolveOptions::default())?);
        for r in Regime::ALL {
            let mask = switching_region(&src, &sc.costs, r, &grid, 1e-12)?;
            let fit = smooth_fit_diagnostic(src.field(), &mask)?;
            println!(
                "n = {n:>2}, a = {}, p = {}: {:>4} of {} nodes switch, boundary mismatch mean {:.2e} max {:.2e} ({} nodes)",
                r.a,
                r.p,
                mask.count(),
                grid.node_count(),
                fit.mean,
                fit.max,
                fit.nodes.len()
            );
            if n == 64 {
                let title = format!("switching region a={} p={}", r.a, r.p);
                std::fs::write(out.join(format!("region_a{}_p{}.svg", r.a, r.p)), svg::region_chart(&title, &mask)?)?;
            }
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
