//! Shared helpers for the integration tests.
#![allow(dead_code)]

use sirs_control::model::{ModelParams, Regime, SwitchCostSpec, SwitchCosts};

/// Values of the switching problem from explicit dynamic programming on a
/// Markov chain over the lattice `{(j h, k h) : j + k <= n}`.
///
/// Each step of length `dt` moves to a lattice neighbour with probability
/// `|drift| dt / h` per axis (in the drift direction) and along the
/// `(1, -1)` diagonal with probability `D dt / h^2` each way, discounts by
/// `e^{-delta dt}`, charges `running cost * dt`, and then lets the owner
/// switch. Iterates until the values stop changing.
pub struct DpOracle {
    pub n: usize,
    pub dt: f64,
    /// `values[regime.index()][node]`, nodes ordered by `j` then `k`.
    pub values: [Vec<f64>; 4],
    pub steps: usize,
}

impl DpOracle {
    pub fn node(n: usize, j: usize, k: usize) -> usize {
        // rows j = 0..=n hold n - j + 1 nodes
        j * (n + 1) - j * (j.saturating_sub(1)) / 2 + k
    }

    pub fn value(&self, j: usize, k: usize, r: Regime) -> f64 {
        self.values[r.index()][Self::node(self.n, j, k)]
    }
}

fn coefficients(p: &ModelParams, s: f64, i: f64, a: f64, q: f64) -> (f64, f64, f64, f64) {
    let bs = p.rho * (1.0 - s - i) - s * (q * p.kappa + a * p.nu + p.beta * i);
    let bi = a * p.nu * s - p.gamma * i + p.beta * s * i;
    let d = 0.5 * p.sigma * p.sigma * s * s * i * i;
    let cost = p.c_i * i + p.c_v * p.kappa * s * q;
    (bs, bi, d, cost)
}

pub fn dp_oracle(p: &ModelParams, costs: &SwitchCosts, n: usize, dt: f64, tol: f64) -> DpOracle {
    let h = 1.0 / n as f64;
    let count = (n + 1) * (n + 2) / 2;
    let disc = (-p.delta * dt).exp();
    // transitions[r][node] = (running cost * dt, [(target, prob)], stay prob)
    let mut transitions: Vec<Vec<(f64, Vec<(usize, f64)>, f64)>> = vec![Vec::new(); 4];
    for r in Regime::ALL {
        for j in 0..=n {
            for k in 0..=(n - j) {
                let (s, i) = (j as f64 * h, k as f64 * h);
                let (bs, bi, d, c) = coefficients(p, s, i, f64::from(r.a), f64::from(r.p));
                let mut moves: Vec<((isize, isize), f64)> = Vec::new();
                let on_edge = j + k == n;
                let mut push = |dj: isize, dk: isize, q: f64| {
                    if q > 0.0 {
                        moves.push(((dj, dk), q));
                    }
                };
                // on the hypotenuse an outward i move slides along it, which
                // also moves s by -h, so the s move covers only bs + bi
                let slide = on_edge && bi > 0.0;
                let bs_rest = if slide { bs + bi } else { bs };
                if bs_rest > 0.0 {
                    push(1, 0, bs_rest * dt / h);
                } else {
                    push(-1, 0, -bs_rest * dt / h);
                }
                if slide {
                    push(-1, 1, bi * dt / h);
                } else if bi > 0.0 {
                    push(0, 1, bi * dt / h);
                } else {
                    push(0, -1, -bi * dt / h);
                }
                push(1, -1, d * dt / (h * h));
                push(-1, 1, d * dt / (h * h));
                let mut targets = Vec::new();
                let mut total = 0.0;
                for ((dj, dk), q) in moves {
                    let (tj, tk) = (j as isize + dj, k as isize + dk);
                    assert!(tj >= 0 && tk >= 0 && (tj + tk) as usize <= n, "move leaves the lattice at ({j},{k})");
                    targets.push((DpOracle::node(n, tj as usize, tk as usize), q));
                    total += q;
                }
                assert!(total <= 1.0, "dt too large: jump probability {total}");
                transitions[r.index()].push((c * dt, targets, 1.0 - total));
            }
        }
    }
    let mut v: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; count]);
    let mut steps = 0;
    loop {
        steps += 1;
        let mut next: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; count]);
        for r in Regime::ALL {
            for (x, (c, targets, stay)) in transitions[r.index()].iter().enumerate() {
                let cur = &v[r.index()];
                let expect: f64 = targets.iter().map(|&(y, q)| q * cur[y]).sum::<f64>() + stay * cur[x];
                next[r.index()][x] = c + disc * expect;
            }
        }
        // owner switch after the step, against the continuation values
        let cont = next.clone();
        for r in Regime::ALL {
            let other = r.flip_protection();
            for x in 0..count {
                let g = match costs.leaving(r.p) {
                    SwitchCostSpec::Constant(g) => g,
                    SwitchCostSpec::Proportional { factor, reference } => {
                        factor * cont[Regime::new(r.a, reference).index()][x]
                    }
                };
                next[r.index()][x] = cont[r.index()][x].min(cont[other.index()][x] + g);
            }
        }
        let change = (0..4)
            .flat_map(|ri| v[ri].iter().zip(&next[ri]).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        v = next;
        if change < tol || steps > 10_000_000 {
            break;
        }
    }
    DpOracle { n, dt, values: v, steps }
}
