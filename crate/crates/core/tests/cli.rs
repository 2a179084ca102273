use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sirs-control"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn grid_solve_writes_every_node() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve");
    let cfg = config("scenario1.cfg");
    let o = run(&["solve", cfg.to_str().unwrap(), "--solver", "grid", "--n", "64", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&out.join("value_field.csv")), 4 * (65 * 66 / 2));
    assert_eq!(data_rows(&out.join("region_mask.csv")), 4 * (65 * 66 / 2));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    for key in ["params_hash", "scenario.beta", "scenario.seed", "tool", "wall_time_s", "sweeps"] {
        assert!(manifest.lines().any(|l| l.starts_with(&format!("{key} = "))), "manifest lacks {key}");
    }
}

#[test]
fn missing_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("scenario1.cfg")).unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, text.lines().filter(|l| !l.starts_with("delta")).collect::<Vec<_>>().join("\n")).unwrap();
    let o = run(&["solve", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta"));
}

#[test]
fn bad_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    let text = fs::read_to_string(config("scenario1.cfg")).unwrap().replace("sigma = 0.2", "sigma 0.2");
    fs::write(&cfg, text).unwrap();
    let o = run(&["solve", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 7"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn dgm_solve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let traces: Vec<String> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = run(&["solve", "--scenario", "1", "--solver", "dgm", "--steps", "150", "--n", "4", "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            assert!(out.join("networks.txt").exists());
            fs::read_to_string(out.join("loss_trace.csv")).unwrap()
        })
        .collect();
    assert_eq!(traces[0], traces[1]);
    assert!(traces[0].starts_with("step,loss,pde_term,boundary_term,penalty_term\n"));
    assert_eq!(traces[0].lines().count(), 151);
}

#[test]
fn simulate_many_paths_writes_aggregates_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--scenario", "2", "--paths", "1000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(!names.iter().any(|n| n.starts_with("path_0")), "{names:?}");
    assert_eq!(data_rows(&out.join("path_stats.csv")), 1000);
    assert_eq!(data_rows(&out.join("aggregate.csv")), 241);
}

#[test]
fn controlled_simulation_with_value_source() {
    let dir = tempfile::tempdir().unwrap();
    let solve = dir.path().join("solve");
    let cfg = config("cheap_protection.cfg");
    assert!(run(&["solve", cfg.to_str().unwrap(), "--n", "32", "--out", solve.to_str().unwrap()]).status.success());
    let sim = dir.path().join("sim");
    let field = solve.join("value_field.csv");
    let o = run(&["simulate", cfg.to_str().unwrap(), "--value-source", field.to_str().unwrap(), "--out", sim.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(sim.join("path_0000_switches.csv")).unwrap();
    assert!(log.starts_with("time,actor,from,to,value_gap\n"));
    assert!(log.lines().nth(1).unwrap().contains(",owner,0,1,"), "{log}");
    let svg = fs::read_to_string(sim.join("path_0000.svg")).unwrap();
    assert!(svg.contains("p 0→1"));
    assert!(sim.join("path_0000_uncontrolled.csv").exists());
}

#[test]
fn value_source_for_other_parameters_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let solve = dir.path().join("solve");
    assert!(run(&["solve", "--scenario", "1", "--n", "8", "--out", solve.to_str().unwrap()]).status.success());
    let field = solve.join("value_field.csv");
    let o = run(&["simulate", "--scenario", "2", "--value-source", field.to_str().unwrap(), "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parameter hash"));
}

#[test]
fn evaluate_never_without_infection_or_attack_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quiet.cfg");
    let text = fs::read_to_string(config("scenario1.cfg")).unwrap().replace("a0 = 1", "a0 = 0");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("eval");
    let o = run(&["evaluate", cfg.to_str().unwrap(), "--policy", "never", "--paths", "100", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "never");
    assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn paired_comparison_file() {
    let dir = tempfile::tempdir().unwrap();
    let solve = dir.path().join("solve");
    assert!(run(&["solve", "--scenario", "1", "--n", "16", "--out", solve.to_str().unwrap()]).status.success());
    let field = solve.join("value_field.csv");
    let out = dir.path().join("eval");
    let o = run(&[
        "evaluate", "--scenario", "1", "--policy", "optimal", "--compare", "never", "--value-source",
        field.to_str().unwrap(), "--paths", "200", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&out.join("summary.csv")), 2);
    let paired = fs::read_to_string(out.join("paired.csv")).unwrap();
    assert!(paired.starts_with("policy_a,policy_b,mean_difference,se_difference,n_paths,seed\noptimal,never,"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    assert_eq!(run(&["evaluate", "--scenario", "1", "--policy", "sometimes", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["evaluate", "--scenario", "1", "--policy", "optimal", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["solve"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn explicit_attack_file_is_followed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let cfg = config("scenario2_explicit.cfg");
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("path_0000_switches.csv")).unwrap();
    let times: Vec<&str> = log.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(times.len(), 2);
    assert!(log.contains(",attacker,1,0,") && log.contains(",attacker,0,1,"));
}
