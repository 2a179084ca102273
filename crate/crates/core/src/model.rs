//! Controlled SIRS dynamics: parameters, regimes, running cost, the
//! infinitesimal generator and switching-cost specifications.
//!
//! The state lives on the triangle `D = {(s, i) : s, i >= 0, s + i <= 1}`;
//! the removed fraction is always derived as `1 - s - i`.

use std::fmt;

use crate::error::{Error, Result};

/// Epidemic, control and cost rates. Rates are per day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Contagion rate.
    pub beta: f64,
    /// Recovery rate.
    pub gamma: f64,
    /// Obsolescence rate of the removed class (R -> S).
    pub rho: f64,
    /// Attack intensity while the hacker is active.
    pub nu: f64,
    /// Protection intensity while the owner protects.
    pub kappa: f64,
    /// Transmission volatility.
    pub sigma: f64,
    /// Discount rate.
    pub delta: f64,
    /// Marginal infection cost.
    pub c_i: f64,
    /// Marginal protection cost.
    pub c_v: f64,
}

impl ModelParams {
    /// Checks the sign constraints: every rate non-negative and `delta > 0`.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("rho", self.rho),
            ("nu", self.nu),
            ("kappa", self.kappa),
            ("sigma", self.sigma),
            ("delta", self.delta),
            ("c_i", self.c_i),
            ("c_v", self.c_v),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("`{name}` must be finite and >= 0, got {v}")));
            }
        }
        if self.delta <= 0.0 {
            return Err(Error::Config("`delta` must be strictly positive".into()));
        }
        Ok(())
    }

    /// Largest running cost over `D`: `c_I + c_V * kappa`.
    pub fn max_running_cost(&self) -> f64 {
        self.c_i + self.c_v * self.kappa
    }

    /// Discounted cost of paying the largest running cost forever. Every
    /// never-switch value is bounded by this.
    pub fn value_upper_bound(&self) -> f64 {
        self.max_running_cost() / self.delta
    }

    /// FNV-1a hash of the parameter bit patterns. Used to tie value fields
    /// and checkpoints to the parameters they were computed with.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in [
            self.beta, self.gamma, self.rho, self.nu, self.kappa, self.sigma, self.delta, self.c_i,
            self.c_v,
        ] {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Attack level `a` and protection level `p`, both binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Regime {
    pub a: u8,
    pub p: u8,
}

impl Regime {
    /// The four regimes in the solver's cyclic order (0,0), (0,1), (1,0), (1,1).
    pub const ALL: [Regime; 4] = [
        Regime { a: 0, p: 0 },
        Regime { a: 0, p: 1 },
        Regime { a: 1, p: 0 },
        Regime { a: 1, p: 1 },
    ];

    pub fn new(a: u8, p: u8) -> Self {
        debug_assert!(a <= 1 && p <= 1);
        Regime { a, p }
    }

    /// Same attack level, complementary protection level.
    pub fn flip_protection(self) -> Self {
        Regime { a: self.a, p: 1 - self.p }
    }

    /// Same protection level, complementary attack level.
    pub fn flip_attack(self) -> Self {
        Regime { a: 1 - self.a, p: self.p }
    }

    /// Position in [`Regime::ALL`].
    pub fn index(self) -> usize {
        usize::from(self.a) * 2 + usize::from(self.p)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(a={}, p={})", self.a, self.p)
    }
}

/// A point of `D`. The removed fraction is not stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub s: f64,
    pub i: f64,
}

impl State {
    pub fn new(s: f64, i: f64) -> Self {
        State { s, i }
    }

    pub fn r(&self) -> f64 {
        1.0 - self.s - self.i
    }

    pub fn is_valid(&self) -> bool {
        self.s >= 0.0 && self.i >= 0.0 && self.s + self.i <= 1.0 + 1e-12
    }
}

/// Value and partial derivatives of a C² function at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Derivs {
    pub v: f64,
    pub v_s: f64,
    pub v_i: f64,
    pub v_ss: f64,
    pub v_ii: f64,
    pub v_si: f64,
}

/// Deterministic part of the dynamics `(ds/dt, di/dt)`.
pub fn drift(state: State, regime: Regime, params: &ModelParams) -> (f64, f64) {
    let State { s, i } = state;
    let a = f64::from(regime.a);
    let p = f64::from(regime.p);
    let ds = params.rho * (1.0 - s - i) - s * (p * params.kappa + a * params.nu + params.beta * i);
    let di = a * params.nu * s - params.gamma * i + params.beta * s * i;
    (ds, di)
}

/// Noise magnitude `sigma * s * i`. It enters `dS` with a minus sign and `dI`
/// with a plus sign, driven by the same Brownian increment.
pub fn diffusion(state: State, params: &ModelParams) -> f64 {
    params.sigma * state.s * state.i
}

/// Running cost rate `c_I i + c_V kappa s p`.
pub fn running_cost(state: State, regime: Regime, params: &ModelParams) -> f64 {
    params.c_i * state.i + params.c_v * params.kappa * state.s * f64::from(regime.p)
}

/// Coefficient `sigma^2 s^2 i^2 / 2` in front of `v_ss + v_ii - 2 v_si`.
pub fn diffusion_coefficient(state: State, params: &ModelParams) -> f64 {
    let g = diffusion(state, params);
    0.5 * g * g
}

/// Applies the generator `L^{a,p}` to a function given its derivatives at
/// `state`. The value `derivs.v` is not used; callers add `-delta v`.
pub fn generator_apply(derivs: &Derivs, state: State, regime: Regime, params: &ModelParams) -> f64 {
    let (bs, bi) = drift(state, regime, params);
    let d = diffusion_coefficient(state, params);
    bs * derivs.v_s + bi * derivs.v_i + d * (derivs.v_ss + derivs.v_ii - 2.0 * derivs.v_si)
}

/// Value on the `s = 0` edge, `c_I i / (delta + gamma)`. Exact when
/// `rho = 0`; used as a boundary datum regardless of `rho`.
pub fn boundary_value(i: f64, params: &ModelParams) -> f64 {
    params.c_i * i / (params.delta + params.gamma)
}

/// How the lump cost of one protection switch is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwitchCostSpec {
    /// Fixed cost `g > 0`.
    Constant(f64),
    /// `factor * v(s, i; a, reference)` where `a` is the current attack level.
    Proportional { factor: f64, reference: u8 },
}

impl SwitchCostSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SwitchCostSpec::Constant(g) if !(g > 0.0 && g.is_finite()) => {
                Err(Error::Config(format!("constant switching cost must be > 0, got {g}")))
            }
            SwitchCostSpec::Proportional { factor, .. } if !(0.0..1.0).contains(&factor) => Err(
                Error::Config(format!("proportional switching factor must be in [0, 1), got {factor}")),
            ),
            SwitchCostSpec::Proportional { reference, .. } if reference > 1 => {
                Err(Error::Config(format!("reference protection level must be 0 or 1, got {reference}")))
            }
            _ => Ok(()),
        }
    }

    /// Largest cost this spec can take when values are bounded by `value_bound`.
    pub fn max_cost(&self, value_bound: f64) -> f64 {
        match *self {
            SwitchCostSpec::Constant(g) => g,
            SwitchCostSpec::Proportional { factor, .. } => factor * value_bound,
        }
    }
}

/// Switching costs for both directions: `from_unprotected` is `g_{0,1}`,
/// `from_protected` is `g_{1,0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchCosts {
    pub from_unprotected: SwitchCostSpec,
    pub from_protected: SwitchCostSpec,
}

impl SwitchCosts {
    pub fn constant(g01: f64, g10: f64) -> Self {
        SwitchCosts {
            from_unprotected: SwitchCostSpec::Constant(g01),
            from_protected: SwitchCostSpec::Constant(g10),
        }
    }

    /// Spec for leaving protection level `p`.
    pub fn leaving(&self, p: u8) -> SwitchCostSpec {
        if p == 0 {
            self.from_unprotected
        } else {
            self.from_protected
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.from_unprotected.validate()?;
        self.from_protected.validate()
    }

    pub fn max_cost(&self, value_bound: f64) -> f64 {
        self.from_unprotected
            .max_cost(value_bound)
            .max(self.from_protected.max_cost(value_bound))
    }

    pub fn is_proportional(&self) -> bool {
        matches!(self.from_unprotected, SwitchCostSpec::Proportional { .. })
            || matches!(self.from_protected, SwitchCostSpec::Proportional { .. })
    }
}

/// Cost of switching out of `regime` under `spec`. `value_at` returns the
/// value of a regime at the current state, or `None` when unavailable.
pub fn switch_cost<F>(spec: SwitchCostSpec, regime: Regime, value_at: F) -> Result<f64>
where
    F: Fn(Regime) -> Option<f64>,
{
    match spec {
        SwitchCostSpec::Constant(g) => Ok(g),
        SwitchCostSpec::Proportional { factor, reference } => {
            let r = Regime::new(regime.a, reference);
            let v = value_at(r).ok_or_else(|| {
                Error::Config(format!("proportional switching cost needs the value of regime {r}"))
            })?;
            Ok(factor * v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scenario1() -> ModelParams {
        ModelParams {
            beta: 0.04,
            gamma: 0.02,
            rho: 0.002,
            nu: 0.05,
            kappa: 0.03,
            sigma: 0.2,
            delta: 0.2,
            c_i: 0.01,
            c_v: 0.05,
        }
    }

    #[test]
    fn drift_examples() {
        let p = scenario1();
        let (ds, di) = drift(State::new(1.0, 0.0), Regime::new(1, 0), &p);
        assert_abs_diff_eq!(ds, -0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(di, 0.05, epsilon = 1e-15);

        let (ds, di) = drift(State::new(0.5, 0.5), Regime::new(0, 0), &p);
        assert_abs_diff_eq!(ds, -0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(di, 0.0, epsilon = 1e-15);

        for r in Regime::ALL {
            let (ds, di) = drift(State::new(0.0, 0.3), r, &p);
            assert_abs_diff_eq!(ds, p.rho * 0.7, epsilon = 1e-15);
            assert_abs_diff_eq!(di, -p.gamma * 0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn diffusion_examples() {
        let p = scenario1();
        assert_eq!(diffusion(State::new(1.0, 0.0), &p), 0.0);
        assert_abs_diff_eq!(diffusion(State::new(0.5, 0.5), &p), 0.05, epsilon = 1e-15);
        let quiet = ModelParams { sigma: 0.0, ..p };
        assert_eq!(diffusion(State::new(0.3, 0.3), &quiet), 0.0);
    }

    #[test]
    fn running_cost_examples() {
        let p = scenario1();
        assert_abs_diff_eq!(running_cost(State::new(1.0, 0.0), Regime::new(1, 1), &p), 0.0015, epsilon = 1e-15);
        assert_eq!(running_cost(State::new(0.7, 0.0), Regime::new(1, 0), &p), 0.0);
        let p2 = ModelParams { kappa: 0.02, c_v: 0.04, ..p };
        assert_abs_diff_eq!(running_cost(State::new(0.3, 0.4), Regime::new(0, 1), &p2), 0.00424, epsilon = 1e-15);
    }

    #[test]
    fn generator_on_simple_functions() {
        let p = scenario1();
        let st = State::new(0.4, 0.3);
        let r = Regime::new(1, 1);
        assert_eq!(generator_apply(&Derivs::default(), st, r, &p), 0.0);

        let lin = Derivs { v_s: 1.0, ..Default::default() };
        assert_abs_diff_eq!(generator_apply(&lin, st, r, &p), drift(st, r, &p).0, epsilon = 1e-15);

        // v = s*i: v_s = i, v_i = s, v_si = 1. Expanded by hand at (0.4, 0.3), a = p = 1:
        // drift_s = 0.002*0.3 - 0.4*(0.03 + 0.05 + 0.012) = -0.0362
        // drift_i = 0.05*0.4 - 0.02*0.3 + 0.04*0.12   =  0.0188
        // L v = -0.0362*0.3 + 0.0188*0.4 + 0.000288*(-2) = -979/250000 (sympy)
        let si = Derivs { v: 0.12, v_s: 0.3, v_i: 0.4, v_si: 1.0, ..Default::default() };
        assert_abs_diff_eq!(generator_apply(&si, st, r, &p), -0.003916, epsilon = 1e-15);
        let (bs, bi) = drift(st, r, &p);
        let closed = bs * st.i + bi * st.s - 2.0 * diffusion_coefficient(st, &p);
        assert_abs_diff_eq!(generator_apply(&si, st, r, &p), closed, epsilon = 1e-16);
    }

    #[test]
    fn boundary_value_examples() {
        let p = scenario1();
        assert_eq!(boundary_value(0.0, &p), 0.0);
        assert_abs_diff_eq!(boundary_value(1.0, &p), 0.045454545454545456, epsilon = 1e-15);
        assert_abs_diff_eq!(boundary_value(0.5, &p), 0.022727272727272728, epsilon = 1e-15);
    }

    #[test]
    fn switch_cost_examples() {
        let r = Regime::new(1, 0);
        assert_eq!(switch_cost(SwitchCostSpec::Constant(0.002), r, |_| None).unwrap(), 0.002);
        let spec = SwitchCostSpec::Proportional { factor: 0.001, reference: 0 };
        let g = switch_cost(spec, r, |q| (q == Regime::new(1, 0)).then_some(0.03)).unwrap();
        assert_abs_diff_eq!(g, 0.00003, epsilon = 1e-18);
        let zero = SwitchCostSpec::Proportional { factor: 0.0, reference: 1 };
        assert_eq!(switch_cost(zero, r, |_| Some(5.0)).unwrap(), 0.0);
        assert!(switch_cost(spec, r, |_| None).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(SwitchCostSpec::Constant(0.0).validate().is_err());
        assert!(SwitchCostSpec::Proportional { factor: 1.0, reference: 0 }.validate().is_err());
        assert!(SwitchCostSpec::Proportional { factor: 0.5, reference: 1 }.validate().is_ok());
        let bad = ModelParams { delta: 0.0, ..scenario1() };
        assert!(bad.validate().is_err());
    }
}
