use std::path::PathBuf;

use sirs_control::policy::RegionMask;
use sirs_control::sde::{SwitchEvent, Trajectory};
use sirs_control::svg;
use sirs_control::Regime;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check(name: &str, rendered: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, rendered).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(rendered, expected, "{} differs; rerun with UPDATE_GOLDEN=1 after review", path.display());
}

fn fixed_path() -> Trajectory {
    let times: Vec<f64> = (0..=10).map(|k| k as f64 * 3.0).collect();
    let s: Vec<f64> = times.iter().map(|t| 0.9 * (-t / 20.0).exp()).collect();
    let i: Vec<f64> = times.iter().map(|t| 0.1 + 0.5 * (1.0 - (-t / 10.0).exp())).collect();
    let r: Vec<f64> = s.iter().zip(&i).map(|(s, i)| 1.0 - s - i).collect();
    let event = |time, from, to| SwitchEvent { time, from, to, cost: 0.0, value_gap: None };
    Trajectory {
        a: times.iter().map(|&t| u8::from(t < 13.2)).collect(),
        p: times.iter().map(|&t| u8::from(t >= 9.0)).collect(),
        times,
        s,
        i,
        r,
        protection_switches: vec![event(9.0, 0, 1)],
        attack_switches: vec![event(13.2, 1, 0)],
    }
}

#[test]
fn trajectory_chart_matches_golden() {
    let path = fixed_path();
    let mut flat = path.clone();
    flat.i.iter_mut().for_each(|v| *v = 0.1);
    let chart = svg::trajectory_chart("golden path", &path, Some(&flat));
    check("trajectory.svg", &chart.render());
}

#[test]
fn region_chart_matches_golden() {
    let n = 4;
    let grid = sirs_control::grid::Grid::new(n).unwrap();
    let in_region = grid.nodes().map(|(j, k)| j + k >= n - 1 && k > 0).collect();
    let mask = RegionMask { regime: Regime::new(1, 0), n, tol: 0.0, in_region };
    check("region.svg", &svg::region_chart("golden region", &mask).unwrap());
}
