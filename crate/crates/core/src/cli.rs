//! Command-line front end: `solve`, `simulate` and `evaluate`.
//!
//! Each command writes its artifacts plus `manifest.txt` (key = value) and
//! `scenario.cfg` into `--out`. Exit codes: 0 success, 1 runtime failure,
//! 2 usage or configuration error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::dgm::{self, DgmConfig};
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::grid::{residual_report, solve_psor, Grid, SolveOptions, ValueField};
use crate::mc::{self, McConfig, PolicyKind};
use crate::model::Regime;
use crate::policy::{
    simulate_controlled, switching_region, write_masks_csv, ControlOptions, GridSource, NetworkSource,
    ValueSource,
};
use crate::scenario::Scenario;
use crate::sde::{simulate, PathConfig, Trajectory};
use crate::svg;

/// Runs with per-path files at most this many paths; larger runs write
/// aggregates only.
pub const PER_PATH_LIMIT: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "sirs-control", version, about = "Optimal protection switching for a stochastic SIRS cluster model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Grid,
    Dgm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Custom,
}

#[derive(Debug, clap::Args)]
pub struct ScenarioArgs {
    /// Config file (`key = value` lines).
    pub config: Option<PathBuf>,
    /// Built-in preset; `custom` (the default when a config is given) reads
    /// the config file.
    #[arg(long)]
    pub scenario: Option<Preset>,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the four regime value functions.
    Solve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value = "grid")]
        solver: SolverKind,
        /// Grid intervals per axis (grid solver; also the DGM output grid).
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        coupling_lambda: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        /// DGM training steps.
        #[arg(long, default_value_t = 50_000)]
        steps: usize,
        /// DGM obstacle penalty weight.
        #[arg(long, default_value_t = 0.0)]
        penalty: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate paths, controlled by a value source or uncontrolled.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Value field CSV or network checkpoint from `solve`.
        #[arg(long)]
        value_source: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        paths: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo cost of a policy.
    Evaluate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// optimal | never | always | threshold:<i>
        #[arg(long)]
        policy: String,
        /// Second policy for a paired comparison on common random numbers.
        #[arg(long)]
        compare: Option<String>,
        #[arg(long)]
        value_source: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = McConfig::HORIZON)]
        horizon: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let argline = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>().join(" ");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, &argline) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 2 for bad configs or inputs, 1 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ConfigLine { .. } | Error::MissingKey(_) | Error::Config(_) | Error::Parse { .. } => 2,
        Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Policy { .. } | Error::Io(_) => 1,
    }
}

/// Runs a parsed command; `argline` is recorded in the manifest.
pub fn execute(cli: &Cli, argline: &str) -> Result<()> {
    match &cli.command {
        Command::Solve { scenario, solver, n, tol, coupling_lambda, omega, steps, penalty, out } => {
            let sc = load_scenario(scenario)?;
            let mut m = Manifest::start("solve", argline, &sc);
            m.push("solver", format!("{solver:?}").to_lowercase());
            m.push("n", n);
            prepare_out(out, &sc)?;
            match solver {
                SolverKind::Grid => {
                    m.push("tol", tol);
                    m.push("omega", omega);
                    m.push("coupling_lambda", coupling_lambda.map_or("none".into(), |l| l.to_string()));
                    solve_grid(&sc, *n, *tol, *omega, *coupling_lambda, out, &mut m)?;
                }
                SolverKind::Dgm => {
                    m.push("steps", steps);
                    m.push("penalty", penalty);
                    solve_dgm(&sc, *n, *steps, *penalty, out, &mut m)?;
                }
            }
            m.finish(out)
        }
        Command::Simulate { scenario, value_source, paths, out } => {
            let sc = load_scenario(scenario)?;
            let src = value_source.as_deref().map(|p| load_value_source(p, &sc)).transpose()?;
            let mut m = Manifest::start("simulate", argline, &sc);
            m.push("paths", paths);
            m.push("value_source", value_source.as_ref().map_or("none".into(), |p| p.display().to_string()));
            prepare_out(out, &sc)?;
            simulate_cmd(&sc, src.as_deref(), *paths, out, &mut m)?;
            m.finish(out)
        }
        Command::Evaluate { scenario, policy, compare, value_source, paths, horizon, out } => {
            let sc = load_scenario(scenario)?;
            let first: PolicyKind = policy.parse()?;
            let second: Option<PolicyKind> = compare.as_deref().map(str::parse).transpose()?;
            let src = value_source.as_deref().map(|p| load_value_source(p, &sc)).transpose()?;
            let mut m = Manifest::start("evaluate", argline, &sc);
            m.push("policy", first);
            m.push("compare", second.map_or("none".into(), |p| p.to_string()));
            m.push("paths", paths);
            m.push("horizon", horizon);
            m.push("value_source", value_source.as_ref().map_or("none".into(), |p| p.display().to_string()));
            prepare_out(out, &sc)?;
            evaluate_cmd(&sc, first, second, src.as_deref(), *paths, *horizon, out, &mut m)?;
            m.finish(out)
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let preset = args.scenario.unwrap_or(if args.config.is_some() { Preset::Custom } else { Preset::One });
    let mut sc = match (preset, &args.config) {
        (Preset::One, None) => Scenario::one(),
        (Preset::Two, None) => Scenario::two(),
        (Preset::Custom, Some(path)) => Scenario::from_file(path)?,
        (Preset::Custom, None) => return Err(Error::Config("--scenario custom needs a config file".into())),
        (_, Some(_)) => return Err(Error::Config("give either a config file or a preset, not both".into())),
    };
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    sc.validate()?;
    Ok(sc)
}

fn prepare_out(out: &Path, sc: &Scenario) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("scenario.cfg"), sc.to_config_string())?;
    Ok(())
}

/// Loads a value field CSV or a network checkpoint and checks it was computed
/// with the scenario's parameters.
pub fn load_value_source(path: &Path, sc: &Scenario) -> Result<Box<dyn ValueSource>> {
    let fingerprint = sc.params.fingerprint();
    let head = fs::read_to_string(path)?.lines().next().unwrap_or_default().to_string();
    let src: Box<dyn ValueSource> = if head.starts_with("sirs-dgm-checkpoint") {
        let (nets, fp) = dgm::read_checkpoint(path)?;
        if fp != fingerprint {
            return Err(mismatch(path, fp, fingerprint));
        }
        Box::new(NetworkSource::new(nets, fp)?)
    } else {
        let found = manifest_hash(path)?;
        if found != fingerprint {
            return Err(mismatch(path, found, fingerprint));
        }
        Box::new(GridSource::new(ValueField::read_csv(path, found)?))
    };
    Ok(src)
}

/// `params_hash` from the `manifest.txt` written next to a value field.
fn manifest_hash(field: &Path) -> Result<u64> {
    let manifest = field.with_file_name("manifest.txt");
    let text = fs::read_to_string(&manifest).map_err(|_| {
        Error::Config(format!("{} not found; cannot check which parameters {} belongs to", manifest.display(), field.display()))
    })?;
    text.lines()
        .find_map(|l| l.strip_prefix("params_hash = "))
        .and_then(|h| u64::from_str_radix(h.trim(), 16).ok())
        .ok_or_else(|| Error::Parse { path: manifest.clone(), message: "no valid params_hash entry".into() })
}

fn mismatch(path: &Path, found: u64, expected: u64) -> Error {
    Error::Config(format!(
        "{} was computed for parameter hash {found:016x}, but the scenario has {expected:016x}",
        path.display()
    ))
}

fn solve_grid(sc: &Scenario, n: usize, tol: f64, omega: f64, lambda: Option<f64>, out: &Path, m: &mut Manifest) -> Result<()> {
    let grid = Grid::new(n)?;
    let opts = SolveOptions { tol, omega, coupling_lambda: lambda, ..Default::default() };
    let field = solve_psor(&grid, &sc.params, &sc.costs, &opts)?;
    field.write_csv(&out.join("value_field.csv"))?;
    let report = residual_report(&field, &grid, &sc.params, &sc.costs, lambda);
    report.write_csv(&grid, &out.join("residuals.csv"))?;
    let src = GridSource::new(field.clone());
    let masks = Regime::ALL
        .iter()
        .map(|&r| switching_region(&src, &sc.costs, r, &grid, 1e-9 * src.scale().max(f64::MIN_POSITIVE)))
        .collect::<Result<Vec<_>>>()?;
    write_masks_csv(&masks, &out.join("region_mask.csv"))?;
    for mask in &masks {
        let title = format!("switching region from regime {}", mask.regime);
        fs::write(out.join(format!("region_a{}_p{}.svg", mask.regime.a, mask.regime.p)), svg::region_chart(&title, mask)?)?;
    }
    m.push("sweeps", field.sweeps);
    m.push("residual_max", format!("{:e}", field.residual_max));
    m.push("max_abs_complementarity", format!("{:e}", report.max_abs_complementarity));
    m.push("worst_obstacle_violation", format!("{:e}", report.worst_obstacle_violation));
    let x0 = sc.initial_state;
    let r0 = Regime::new(sc.attack.a0(), sc.p0);
    m.push("value_at_start", fmt_sig(src.value(x0, r0)));
    m.push("outputs", "value_field.csv residuals.csv region_mask.csv region_a*_p*.svg");
    Ok(())
}

fn solve_dgm(sc: &Scenario, n: usize, steps: usize, penalty: f64, out: &Path, m: &mut Manifest) -> Result<()> {
    let config = DgmConfig { steps, penalty_weight: penalty, seed: sc.seed, ..Default::default() };
    let result = dgm::train(&config, &sc.params, &sc.costs)?;
    dgm::write_checkpoint(&result.nets, sc.params.fingerprint(), &out.join("networks.txt"))?;
    dgm::write_trace_csv(&result.trace, &out.join("loss_trace.csv"))?;
    dgm::write_values_csv(&result.nets, n, &out.join("value_field.csv"))?;
    m.push("steps_run", result.trace.len());
    m.push("converged", result.converged);
    m.push("final_loss", format!("{:e}", result.trace.last().map_or(f64::NAN, |p| p.total)));
    m.push("outputs", "networks.txt loss_trace.csv value_field.csv");
    Ok(())
}

fn simulate_cmd(sc: &Scenario, src: Option<&dyn ValueSource>, paths: usize, out: &Path, m: &mut Manifest) -> Result<()> {
    if paths == 0 {
        return Err(Error::Config("--paths must be >= 1".into()));
    }
    let base = PathConfig {
        t0: 0.0,
        horizon: sc.horizon,
        step: sc.step,
        seed: sc.seed,
        path: 0,
        initial_state: sc.initial_state,
        initial_regime: Regime::new(sc.attack.a0(), sc.p0),
    };
    let run_one = |j: usize| -> Result<(Trajectory, Option<Trajectory>)> {
        let cfg = base.for_path(j as u64);
        let schedule = sc.attack.schedule_for_path(sc.seed, j as u64, sc.horizon, sc.step)?;
        let plain = simulate(&sc.params, &schedule, |_, _, r| Ok(r.p), &cfg)?;
        match src {
            Some(src) => {
                let ctl = simulate_controlled(&sc.params, src, &sc.costs, &schedule, &cfg, &ControlOptions::default())?;
                Ok((ctl.trajectory, Some(plain)))
            }
            None => Ok((plain, None)),
        }
    };
    let runs: Vec<(Trajectory, Option<Trajectory>)> = {
        use rayon::prelude::*;
        (0..paths).into_par_iter().map(run_one).collect::<Result<_>>()?
    };
    let mut outputs = Vec::new();
    if paths <= PER_PATH_LIMIT {
        for (j, (traj, baseline)) in runs.iter().enumerate() {
            let stem = format!("path_{j:04}");
            traj.write_csv(&out.join(format!("{stem}_trajectory.csv")))?;
            crate::policy::write_switch_log(&crate::policy::switch_log(traj), &out.join(format!("{stem}_switches.csv")))?;
            if let Some(b) = baseline {
                b.write_csv(&out.join(format!("{stem}_uncontrolled.csv")))?;
            }
            let title = if src.is_some() { "controlled (solid) vs uncontrolled (dashed)" } else { "uncontrolled" };
            svg::trajectory_chart(title, traj, baseline.as_ref()).write(&out.join(format!("{stem}.svg")))?;
            m.push(&format!("{stem}.cost"), fmt_sig(traj.discounted_cost(&sc.params)));
        }
        outputs.push("path_*_trajectory.csv path_*_switches.csv path_*.svg".to_string());
        if src.is_some() {
            outputs.push("path_*_uncontrolled.csv".into());
        }
    }
    write_aggregate(&runs, &out.join("aggregate.csv"))?;
    write_path_stats(&runs, &sc.params, &out.join("path_stats.csv"))?;
    outputs.push("aggregate.csv path_stats.csv".into());
    let mean_cost = runs.iter().map(|r| r.0.discounted_cost(&sc.params)).sum::<f64>() / paths as f64;
    m.push("mean_cost", fmt_sig(mean_cost));
    m.push("outputs", outputs.join(" "));
    Ok(())
}

/// Pathwise means over time: `t,mean_s,mean_i,mean_r,frac_protected,frac_attacked`.
fn write_aggregate(runs: &[(Trajectory, Option<Trajectory>)], path: &Path) -> Result<()> {
    let n = runs.len() as f64;
    let len = runs[0].0.len();
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,mean_s,mean_i,mean_r,frac_protected,frac_attacked")?;
    for k in 0..len {
        let sum = |f: &dyn Fn(&Trajectory) -> f64| runs.iter().map(|r| f(&r.0)).sum::<f64>() / n;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_sig(runs[0].0.times[k]),
            fmt_sig(sum(&|t| t.s[k])),
            fmt_sig(sum(&|t| t.i[k])),
            fmt_sig(sum(&|t| t.r[k])),
            fmt_sig(sum(&|t| f64::from(t.p[k]))),
            fmt_sig(sum(&|t| f64::from(t.a[k])))
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One row per path: `path,final_s,final_i,cost,owner_switches,attack_switches,first_owner_switch`.
fn write_path_stats(runs: &[(Trajectory, Option<Trajectory>)], params: &crate::model::ModelParams, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "path,final_s,final_i,cost,owner_switches,attack_switches,first_owner_switch")?;
    for (j, (t, _)) in runs.iter().enumerate() {
        let first = t.protection_switches.first().map(|e| fmt_sig(e.time)).unwrap_or_default();
        writeln!(
            w,
            "{j},{},{},{},{},{},{first}",
            fmt_sig(*t.s.last().expect("nonempty")),
            fmt_sig(t.final_infected()),
            fmt_sig(t.discounted_cost(params)),
            t.protection_switches.len(),
            t.attack_switches.len()
        )?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate_cmd(
    sc: &Scenario,
    first: PolicyKind,
    second: Option<PolicyKind>,
    src: Option<&dyn ValueSource>,
    paths: usize,
    horizon: f64,
    out: &Path,
    m: &mut Manifest,
) -> Result<()> {
    let needs_src = |p: PolicyKind| p == PolicyKind::Optimal;
    if src.is_none() && (needs_src(first) || second.is_some_and(needs_src)) {
        return Err(Error::Config("--policy optimal needs --value-source".into()));
    }
    let config = McConfig {
        n_paths: paths,
        horizon,
        step: sc.step,
        seed: sc.seed,
        initial_state: sc.initial_state,
        initial_regime: Regime::new(sc.attack.a0(), sc.p0),
        control: ControlOptions::default(),
    };
    let mut rows = vec![mc::evaluate(&sc.params, &sc.costs, first, src, &sc.attack, &config)?];
    if let Some(p) = second {
        rows.push(mc::evaluate(&sc.params, &sc.costs, p, src, &sc.attack, &config)?);
    }
    mc::write_summary_csv(&rows, &out.join("summary.csv"))?;
    m.push("mean", fmt_sig(rows[0].mean));
    m.push("se", fmt_sig(rows[0].se));
    m.push("half_width_95", fmt_sig(rows[0].half_width));
    m.push("tail_bound", fmt_sig(rows[0].tail_bound));
    if second.is_some() {
        let (d, se) = mc::paired_difference(&rows[0], &rows[1])?;
        let mut w = std::io::BufWriter::new(fs::File::create(out.join("paired.csv"))?);
        writeln!(w, "policy_a,policy_b,mean_difference,se_difference,n_paths,seed")?;
        writeln!(w, "{},{},{},{},{},{}", rows[0].policy, rows[1].policy, fmt_sig(d), fmt_sig(se), paths, sc.seed)?;
        w.flush()?;
        m.push("outputs", "summary.csv paired.csv");
    } else {
        m.push("outputs", "summary.csv");
    }
    Ok(())
}

/// Run record: parameters, seed, flags, version and wall time.
struct Manifest {
    lines: Vec<(String, String)>,
    started: Instant,
}

impl Manifest {
    fn start(command: &str, argline: &str, sc: &Scenario) -> Self {
        let mut m = Manifest { lines: Vec::new(), started: Instant::now() };
        m.push("tool", concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")));
        m.push("command", command);
        m.push("args", argline);
        m.push("params_hash", format!("{:016x}", sc.params.fingerprint()));
        for line in sc.to_config_string().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                m.push(&format!("scenario.{k}"), v);
            }
        }
        m
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn finish(mut self, out: &Path) -> Result<()> {
        let secs = self.started.elapsed().as_secs_f64();
        self.push("wall_time_s", format!("{secs:.3}"));
        let mut text = String::new();
        for (k, v) in &self.lines {
            text.push_str(&format!("{k} = {v}\n"));
        }
        fs::write(out.join("manifest.txt"), text)?;
        Ok(())
    }
}
