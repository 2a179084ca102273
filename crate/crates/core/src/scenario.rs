//! Run configuration: model rates, switching costs, initial condition and
//! attack model, with the two reference presets and a plain-text
//! `key = value` config grammar.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank lines
//! are ignored; keys are lower snake case and unknown keys are rejected.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `beta gamma rho nu kappa sigma delta c_i c_v` | model rates | required |
//! | `g01`, `g10` | switching cost or proportional factor | required |
//! | `g01_mode`, `g10_mode` | `constant`, `proportional` or `proportional:<p>` | `constant` |
//! | `s0`, `i0` | initial susceptible / infected fraction | `1`, `0` |
//! | `a0`, `p0` | initial attack / protection level | `1`, `0` |
//! | `horizon`, `step` | simulation horizon and step (days) | `30`, `0.125` |
//! | `seed` | master seed | `1` |
//! | `attack` | `constant`, `poisson` or `explicit` | `constant` |
//! | `lambda` | Poisson switching rate (1/day) | `0` |
//! | `attack_file` | CSV of switch times for `explicit` (relative to the config) | none |
//!
//! A proportional cost without a suffix scales the value of the regime being
//! left (`g01` reads `p = 0`, `g10` reads `p = 1`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::attacks::{AttackModel, AttackSchedule};
use crate::error::{Error, Result};
use crate::model::{ModelParams, State, SwitchCostSpec, SwitchCosts};

/// Everything needed to solve, simulate and evaluate one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ModelParams,
    pub costs: SwitchCosts,
    pub initial_state: State,
    pub p0: u8,
    pub attack: AttackModel,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    /// Source path of an explicit schedule, echoed back by [`Scenario::to_config_string`].
    pub attack_file: Option<PathBuf>,
}

const REQUIRED: [&str; 11] = ["beta", "gamma", "rho", "nu", "kappa", "sigma", "delta", "c_i", "c_v", "g01", "g10"];
const OPTIONAL: [&str; 12] = [
    "g01_mode", "g10_mode", "s0", "i0", "a0", "p0", "horizon", "step", "seed", "attack", "lambda", "attack_file",
];

impl Scenario {
    /// Constant attack, `a = 1` throughout.
    pub fn one() -> Self {
        Scenario {
            params: ModelParams {
                beta: 0.04,
                gamma: 0.02,
                rho: 0.002,
                nu: 0.05,
                kappa: 0.03,
                sigma: 0.2,
                delta: 0.2,
                c_i: 0.01,
                c_v: 0.05,
            },
            costs: SwitchCosts {
                from_unprotected: SwitchCostSpec::Proportional { factor: 0.001, reference: 0 },
                from_protected: SwitchCostSpec::Proportional { factor: 0.001, reference: 1 },
            },
            initial_state: State::new(1.0, 0.0),
            p0: 0,
            attack: AttackModel::Constant(1),
            horizon: 30.0,
            step: 0.125,
            seed: 1,
            attack_file: None,
        }
    }

    /// Attacks switching at the events of a rate-0.1 Poisson process, starting
    /// with `a = 1`.
    pub fn two() -> Self {
        let base = Scenario::one();
        Scenario {
            params: ModelParams { kappa: 0.02, c_v: 0.04, ..base.params },
            costs: SwitchCosts {
                from_unprotected: SwitchCostSpec::Proportional { factor: 0.01, reference: 0 },
                from_protected: SwitchCostSpec::Proportional { factor: 0.001, reference: 0 },
            },
            attack: AttackModel::Poisson { lambda: 0.1, a0: 1 },
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.costs.validate()?;
        if !self.initial_state.is_valid() {
            return Err(Error::Config("initial state must satisfy s, i >= 0 and s + i <= 1".into()));
        }
        if self.p0 > 1 {
            return Err(Error::Config("p0 must be 0 or 1".into()));
        }
        if !(self.step > 0.0 && self.horizon > 0.0) {
            return Err(Error::Config("horizon and step must be positive".into()));
        }
        let steps = self.horizon / self.step;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config("horizon must be an integer multiple of step".into()));
        }
        Ok(())
    }

    /// Parses a config file. Relative `attack_file` paths resolve against the
    /// config's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigLine {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
                return Err(Error::ConfigLine { line: line_no, message: format!("unknown key `{key}`") });
            }
            if value.is_empty() {
                return Err(Error::ConfigLine { line: line_no, message: format!("empty value for `{key}`") });
            }
            if kv.insert(key.to_string(), (line_no, value.to_string())).is_some() {
                return Err(Error::ConfigLine { line: line_no, message: format!("duplicate key `{key}`") });
            }
        }
        for key in REQUIRED {
            if !kv.contains_key(key) {
                return Err(Error::MissingKey(key.to_string()));
            }
        }

        let num = |key: &str| -> Result<Option<f64>> {
            match kv.get(key) {
                None => Ok(None),
                Some((line, v)) => v.parse::<f64>().map(Some).map_err(|_| Error::ConfigLine {
                    line: *line,
                    message: format!("`{key}` expects a number, got `{v}`"),
                }),
            }
        };
        let req = |key: &str| -> Result<f64> { num(key).map(|v| v.expect("required key present")) };
        let level = |key: &str, default: u8| -> Result<u8> {
            match kv.get(key) {
                None => Ok(default),
                Some((line, v)) => match v.as_str() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    _ => Err(Error::ConfigLine { line: *line, message: format!("`{key}` must be 0 or 1") }),
                },
            }
        };

        let params = ModelParams {
            beta: req("beta")?,
            gamma: req("gamma")?,
            rho: req("rho")?,
            nu: req("nu")?,
            kappa: req("kappa")?,
            sigma: req("sigma")?,
            delta: req("delta")?,
            c_i: req("c_i")?,
            c_v: req("c_v")?,
        };
        let cost = |key: &str, mode_key: &str, from: u8| -> Result<SwitchCostSpec> {
            let value = req(key)?;
            match kv.get(mode_key) {
                None => Ok(SwitchCostSpec::Constant(value)),
                Some((line, mode)) => parse_cost_mode(mode, value, from)
                    .ok_or_else(|| Error::ConfigLine { line: *line, message: format!("bad `{mode_key}` value `{mode}`") }),
            }
        };
        let costs = SwitchCosts {
            from_unprotected: cost("g01", "g01_mode", 0)?,
            from_protected: cost("g10", "g10_mode", 1)?,
        };

        let a0 = level("a0", 1)?;
        let horizon = num("horizon")?.unwrap_or(30.0);
        let attack_file = kv.get("attack_file").map(|(_, v)| base_dir.join(v));
        let attack = match kv.get("attack").map(|(l, v)| (*l, v.as_str())) {
            None | Some((_, "constant")) => AttackModel::Constant(a0),
            Some((_, "poisson")) => AttackModel::Poisson { lambda: num("lambda")?.unwrap_or(0.0), a0 },
            Some((line, "explicit")) => {
                let file = attack_file.as_ref().ok_or_else(|| Error::ConfigLine {
                    line,
                    message: "`attack = explicit` needs `attack_file`".into(),
                })?;
                AttackModel::Explicit(AttackSchedule::from_csv(a0, file)?)
            }
            Some((line, other)) => {
                return Err(Error::ConfigLine { line, message: format!("unknown attack model `{other}`") })
            }
        };
        let seed = match kv.get("seed") {
            None => 1,
            Some((line, v)) => v.parse().map_err(|_| Error::ConfigLine {
                line: *line,
                message: format!("`seed` expects an unsigned integer, got `{v}`"),
            })?,
        };

        let scenario = Scenario {
            params,
            costs,
            initial_state: State::new(num("s0")?.unwrap_or(1.0), num("i0")?.unwrap_or(0.0)),
            p0: level("p0", 0)?,
            attack,
            horizon,
            step: num("step")?.unwrap_or(0.125),
            seed,
            attack_file,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Renders the scenario in the config grammar; parsing the output gives
    /// back an equal scenario.
    pub fn to_config_string(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        for (k, v) in [
            ("beta", p.beta),
            ("gamma", p.gamma),
            ("rho", p.rho),
            ("nu", p.nu),
            ("kappa", p.kappa),
            ("sigma", p.sigma),
            ("delta", p.delta),
            ("c_i", p.c_i),
            ("c_v", p.c_v),
        ] {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (key, spec) in [("g01", self.costs.from_unprotected), ("g10", self.costs.from_protected)] {
            match spec {
                SwitchCostSpec::Constant(g) => {
                    out.push_str(&format!("{key} = {g}\n{key}_mode = constant\n"));
                }
                SwitchCostSpec::Proportional { factor, reference } => {
                    out.push_str(&format!("{key} = {factor}\n{key}_mode = proportional:{reference}\n"));
                }
            }
        }
        out.push_str(&format!(
            "s0 = {}\ni0 = {}\na0 = {}\np0 = {}\nhorizon = {}\nstep = {}\nseed = {}\n",
            self.initial_state.s,
            self.initial_state.i,
            self.attack.a0(),
            self.p0,
            self.horizon,
            self.step,
            self.seed
        ));
        match &self.attack {
            AttackModel::Constant(_) => out.push_str("attack = constant\n"),
            AttackModel::Poisson { lambda, .. } => out.push_str(&format!("attack = poisson\nlambda = {lambda}\n")),
            AttackModel::Explicit(_) => {
                out.push_str("attack = explicit\n");
                if let Some(f) = &self.attack_file {
                    out.push_str(&format!("attack_file = {}\n", f.display()));
                }
            }
        }
        out
    }
}

fn parse_cost_mode(mode: &str, value: f64, from: u8) -> Option<SwitchCostSpec> {
    match mode {
        "constant" => Some(SwitchCostSpec::Constant(value)),
        "proportional" => Some(SwitchCostSpec::Proportional { factor: value, reference: from }),
        "proportional:0" => Some(SwitchCostSpec::Proportional { factor: value, reference: 0 }),
        "proportional:1" => Some(SwitchCostSpec::Proportional { factor: value, reference: 1 }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENARIO1: &str = "\
# constant attack
beta = 0.04
gamma = 0.02
rho = 0.002
nu = 0.05
kappa = 0.03
sigma = 0.2
delta = 0.2
c_i = 0.01
c_v = 0.05
g01 = 0.001
g10 = 0.001
g01_mode = proportional
g10_mode = proportional
";

    #[test]
    fn preset_values() {
        let s1 = Scenario::one();
        let p = s1.params;
        assert_eq!(
            (p.beta, p.gamma, p.rho, p.nu, p.sigma, p.delta, p.kappa, p.c_v, p.c_i),
            (0.04, 0.02, 0.002, 0.05, 0.2, 0.2, 0.03, 0.05, 0.01)
        );
        assert_eq!((s1.horizon, s1.step), (30.0, 0.125));
        assert_eq!(s1.initial_state, State::new(1.0, 0.0));
        let s2 = Scenario::two();
        assert_eq!((s2.params.kappa, s2.params.c_v), (0.02, 0.04));
        assert_eq!(s2.attack, AttackModel::Poisson { lambda: 0.1, a0: 1 });
        assert_eq!(s2.costs.from_unprotected, SwitchCostSpec::Proportional { factor: 0.01, reference: 0 });
        assert_eq!(s2.costs.from_protected, SwitchCostSpec::Proportional { factor: 0.001, reference: 0 });
    }

    #[test]
    fn parses_scenario_one() {
        let s = Scenario::parse(SCENARIO1, Path::new(".")).unwrap();
        assert_eq!(s, Scenario::one());
    }

    #[test]
    fn round_trip_through_text() {
        for sc in [Scenario::one(), Scenario::two()] {
            let back = Scenario::parse(&sc.to_config_string(), Path::new(".")).unwrap();
            assert_eq!(back, sc);
        }
    }

    #[test]
    fn missing_key_is_named() {
        let text = SCENARIO1.replace("delta = 0.2\n", "");
        match Scenario::parse(&text, Path::new(".")) {
            Err(Error::MissingKey(k)) => assert_eq!(k, "delta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = format!("{SCENARIO1}detla = 0.3\n");
        match Scenario::parse(&text, Path::new(".")) {
            Err(Error::ConfigLine { line, message }) => {
                assert_eq!(line, 15);
                assert!(message.contains("detla"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_line() {
        let text = SCENARIO1.replace("nu = 0.05", "nu = fast");
        assert!(matches!(Scenario::parse(&text, Path::new(".")), Err(Error::ConfigLine { line: 5, .. })));
    }
}
