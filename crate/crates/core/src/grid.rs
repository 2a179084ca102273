//! Finite-difference reference solver for the four-regime switching system.
//!
//! Each regime `(a, p)` carries a value array over the nodes of a uniform
//! triangular grid on `D`. The discrete operator is a monotone upwind scheme
//! for `delta v - L^{a,p} v`; the obstacle `v(.;a,p) <= v(.;a,1-p) + g` is
//! enforced by projected SOR sweeps, cycling through the regimes until the
//! complementarity residual drops below tolerance.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::model::{
    diffusion_coefficient, drift, running_cost, switch_cost, ModelParams, Regime, State, SwitchCosts,
};

/// Uniform triangular grid with `n` subdivisions per axis. Node `(j, k)`
/// sits at `(j / n, k / n)` with `j + k <= n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    n: usize,
    row_offset: Vec<usize>,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("grid needs at least 2 subdivisions, got {n}")));
        }
        let mut row_offset = Vec::with_capacity(n + 2);
        let mut acc = 0;
        for j in 0..=n {
            row_offset.push(acc);
            acc += n - j + 1;
        }
        row_offset.push(acc);
        Ok(Grid { n, row_offset })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `(n + 1)(n + 2) / 2`.
    pub fn node_count(&self) -> usize {
        self.row_offset[self.n + 1]
    }

    pub fn index(&self, j: usize, k: usize) -> usize {
        debug_assert!(j + k <= self.n);
        self.row_offset[j] + k
    }

    /// Nodes in lexicographic `(j, k)` order, which is also index order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.n).flat_map(move |j| (0..=self.n - j).map(move |k| (j, k)))
    }

    pub fn state(&self, j: usize, k: usize) -> State {
        let n = self.n as f64;
        State::new(j as f64 / n, k as f64 / n)
    }

    pub fn is_s_edge(&self, j: usize) -> bool {
        j == 0
    }

    pub fn is_i_edge(&self, k: usize) -> bool {
        k == 0
    }

    pub fn is_hypotenuse(&self, j: usize, k: usize) -> bool {
        j + k == self.n
    }

    /// Piecewise-linear interpolation on the grid triangulation. The point is
    /// clamped into `D` first.
    pub fn interpolate(&self, values: &[f64], state: State) -> f64 {
        let n = self.n as f64;
        let mut x = (state.s * n).clamp(0.0, n);
        let mut y = (state.i * n).clamp(0.0, n);
        if x + y > n {
            let scale = n / (x + y);
            x *= scale;
            y *= scale;
        }
        let j = (x.floor() as usize).min(self.n - 1);
        let k = (y.floor() as usize).min(self.n - 1 - j);
        let fx = x - j as f64;
        let fy = y - k as f64;
        let v00 = values[self.index(j, k)];
        let v10 = values[self.index(j + 1, k)];
        let v01 = values[self.index(j, k + 1)];
        if fx + fy <= 1.0 || j + k + 2 > self.n {
            v00 * (1.0 - fx - fy) + v10 * fx + v01 * fy
        } else {
            let v11 = values[self.index(j + 1, k + 1)];
            v11 * (fx + fy - 1.0) + v10 * (1.0 - fy) + v01 * (1.0 - fx)
        }
    }
}

/// Finite-difference row of `delta v - L_h v` at one node:
/// `center * v[node] + sum(weight * v[neighbor])`. Every neighbour weight is
/// `<= 0` and `center >= delta`, so the row is diagonally dominant.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub center: f64,
    pub neighbors: Vec<(usize, f64)>,
}

impl Stencil {
    fn push(&mut self, idx: usize, rate: f64) {
        // `rate >= 0` is the transition intensity towards `idx`.
        if rate == 0.0 {
            return;
        }
        self.center += rate;
        if let Some(slot) = self.neighbors.iter_mut().find(|(i, _)| *i == idx) {
            slot.1 -= rate;
        } else {
            self.neighbors.push((idx, -rate));
        }
    }

    /// `(delta v - L_h v)` at the node for a full value array.
    pub fn apply(&self, node: usize, values: &[f64]) -> f64 {
        self.center * values[node] + self.neighbors.iter().map(|&(i, w)| w * values[i]).sum::<f64>()
    }
}

/// Builds the stencil of `delta v - L^{a,p} v` at node `(j, k)`.
///
/// First-order terms are upwinded by drift sign. The second-order part
/// `D (v_ss + v_ii - 2 v_si)` uses centered `v_ss`, `v_ii` and the seven-point
/// cross difference for negatively correlated noise, which together reduce
/// to the second difference along the `(1, -1)` diagonal. On the hypotenuse
/// an outward `i`-drift is rewritten along the edge, which is possible since
/// the total drift there points inward.
pub fn build_stencil(grid: &Grid, j: usize, k: usize, regime: Regime, params: &ModelParams) -> Stencil {
    let h = grid.spacing();
    let state = grid.state(j, k);
    let (bs, bi) = drift(state, regime, params);
    let mut st = Stencil { center: params.delta, neighbors: Vec::with_capacity(6) };
    let on_hyp = grid.is_hypotenuse(j, k);

    if on_hyp && bi > 0.0 && j >= 1 {
        // b = bi * (-1, 1) + (bs + bi, 0) with bs + bi <= 0 on the hypotenuse.
        st.push(grid.index(j - 1, k + 1), bi / h);
        let rest = bs + bi;
        if rest < 0.0 {
            st.push(grid.index(j - 1, k), -rest / h);
        }
    } else {
        if bs > 0.0 && !on_hyp {
            st.push(grid.index(j + 1, k), bs / h);
        } else if bs < 0.0 && j >= 1 {
            st.push(grid.index(j - 1, k), -bs / h);
        }
        if bi > 0.0 && !on_hyp {
            st.push(grid.index(j, k + 1), bi / h);
        } else if bi < 0.0 && k >= 1 {
            st.push(grid.index(j, k - 1), -bi / h);
        }
    }

    let d = diffusion_coefficient(state, params);
    if d > 0.0 && j >= 1 && k >= 1 {
        let w = d / (h * h);
        st.push(grid.index(j + 1, k - 1), w);
        st.push(grid.index(j - 1, k + 1), w);
    }
    st
}

/// Discrete operator of one regime in compressed row form.
#[derive(Debug, Clone)]
struct Operator {
    center: Vec<f64>,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    source: Vec<f64>,
}

impl Operator {
    fn build(grid: &Grid, regime: Regime, params: &ModelParams) -> Self {
        let m = grid.node_count();
        let mut op = Operator {
            center: Vec::with_capacity(m),
            row_start: Vec::with_capacity(m + 1),
            cols: Vec::new(),
            weights: Vec::new(),
            source: Vec::with_capacity(m),
        };
        for (j, k) in grid.nodes() {
            let st = build_stencil(grid, j, k, regime, params);
            op.row_start.push(op.cols.len());
            op.center.push(st.center);
            for (c, w) in st.neighbors {
                op.cols.push(c);
                op.weights.push(w);
            }
            op.source.push(running_cost(grid.state(j, k), regime, params));
        }
        op.row_start.push(op.cols.len());
        op
    }

    /// `sum(weight * v[neighbor])` for row `node` (weights are `<= 0`).
    #[inline]
    fn off_diagonal(&self, node: usize, v: &[f64]) -> f64 {
        let (lo, hi) = (self.row_start[node], self.row_start[node + 1]);
        self.cols[lo..hi].iter().zip(&self.weights[lo..hi]).map(|(&c, &w)| w * v[c]).sum()
    }
}

/// Options for [`solve_psor`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Max-norm tolerance on the complementarity residual.
    pub tol: f64,
    pub max_sweeps: usize,
    /// SOR relaxation factor in `(0, 1.9]`.
    pub omega: f64,
    /// Rate of exogenous attack flips; adds `lambda (v(.;1-a,p) - v(.;a,p))`
    /// to each generator when set.
    pub coupling_lambda: Option<f64>,
    /// Residual is recomputed every this many sweeps.
    pub check_every: usize,
    pub warm_start: Option<ValueField>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_sweeps: 100_000,
            omega: 1.0,
            coupling_lambda: None,
            check_every: 10,
            warm_start: None,
        }
    }
}

/// Per-regime value arrays plus solve metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub n: usize,
    /// Indexed by [`Regime::index`].
    pub values: [Vec<f64>; 4],
    pub params_fingerprint: u64,
    pub sweeps: usize,
    pub residual_max: f64,
    pub residual_history: Vec<f64>,
}

impl ValueField {
    pub fn regime(&self, r: Regime) -> &[f64] {
        &self.values[r.index()]
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.n).expect("field grid is valid")
    }

    /// Writes `a,p,s,i,v` rows, regimes in cyclic order, nodes in index order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let grid = self.grid();
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "a,p,s,i,v")?;
        for r in Regime::ALL {
            let vals = self.regime(r);
            for (idx, (j, k)) in grid.nodes().enumerate() {
                let st = grid.state(j, k);
                writeln!(w, "{},{},{},{},{}", r.a, r.p, fmt_sig(st.s), fmt_sig(st.i), fmt_sig(vals[idx]))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field previously written by [`ValueField::write_csv`]. The grid
    /// size is recovered from the row count; metadata is reset.
    pub fn read_csv(path: &Path, params_fingerprint: u64) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "a,p,s,i,v" => {}
            _ => return Err(parse_err(1, "expected header `a,p,s,i,v`".into())),
        }
        let mut rows: [Vec<(f64, f64, f64)>; 4] = Default::default();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(parse_err(ln + 1, format!("expected 5 columns, got {}", cols.len())));
            }
            let a: u8 = cols[0].parse().map_err(|_| parse_err(ln + 1, "bad `a`".into()))?;
            let p: u8 = cols[1].parse().map_err(|_| parse_err(ln + 1, "bad `p`".into()))?;
            if a > 1 || p > 1 {
                return Err(parse_err(ln + 1, "regime levels must be 0 or 1".into()));
            }
            let mut nums = [0.0; 3];
            for (slot, c) in nums.iter_mut().zip(&cols[2..]) {
                *slot = c.parse().map_err(|_| parse_err(ln + 1, format!("bad number `{c}`")))?;
            }
            rows[Regime::new(a, p).index()].push((nums[0], nums[1], nums[2]));
        }
        let m = rows[0].len();
        let n = (1..=4096usize)
            .find(|n| (n + 1) * (n + 2) / 2 == m)
            .ok_or_else(|| parse_err(0, format!("{m} rows per regime is not a triangular grid")))?;
        if rows.iter().any(|r| r.len() != m) {
            return Err(parse_err(0, "regimes have different row counts".into()));
        }
        let grid = Grid::new(n)?;
        let mut values: [Vec<f64>; 4] = Default::default();
        for (slot, regime_rows) in values.iter_mut().zip(&rows) {
            let mut v = vec![0.0; m];
            for &(s, i, val) in regime_rows {
                let j = (s * n as f64).round() as usize;
                let k = (i * n as f64).round() as usize;
                if j + k > n {
                    return Err(parse_err(0, format!("node ({s}, {i}) outside the grid")));
                }
                v[grid.index(j, k)] = val;
            }
            *slot = v;
        }
        Ok(ValueField {
            n,
            values,
            params_fingerprint,
            sweeps: 0,
            residual_max: f64::NAN,
            residual_history: Vec::new(),
        })
    }
}

/// Obstacle `v(.;a,1-p) + g` at one node using the current iterate.
fn obstacle_at(values: &[Vec<f64>; 4], regime: Regime, costs: &SwitchCosts, node: usize) -> f64 {
    let other = regime.flip_protection();
    let g = switch_cost(costs.leaving(regime.p), regime, |r| Some(values[r.index()][node]))
        .expect("grid values cover every regime");
    values[other.index()][node] + g
}

/// Solves the switching system by projected SOR.
///
/// One sweep visits the regimes in the order `(0,0), (0,1), (1,0), (1,1)` and,
/// within each, the nodes in lexicographic order: a relaxed Gauss-Seidel
/// update of the linear equation followed by projection onto the obstacle.
/// Proportional switching costs read the current iterate.
pub fn solve_psor(
    grid: &Grid,
    params: &ModelParams,
    costs: &SwitchCosts,
    options: &SolveOptions,
) -> Result<ValueField> {
    params.validate()?;
    costs.validate()?;
    if !(options.omega > 0.0 && options.omega <= 1.9) {
        return Err(Error::Config(format!("relaxation omega must be in (0, 1.9], got {}", options.omega)));
    }
    if !(options.tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    if let Some(l) = options.coupling_lambda {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("coupling lambda must be >= 0, got {l}")));
        }
    }
    let m = grid.node_count();
    let ops: Vec<Operator> = Regime::ALL.iter().map(|&r| Operator::build(grid, r, params)).collect();
    let lambda = options.coupling_lambda.unwrap_or(0.0);

    let mut values: [Vec<f64>; 4] = match &options.warm_start {
        Some(f) if f.n == grid.n() => f.values.clone(),
        Some(f) => {
            return Err(Error::Config(format!(
                "warm start field has n = {}, grid has n = {}",
                f.n,
                grid.n()
            )))
        }
        None => Default::default(),
    };
    if options.warm_start.is_none() {
        values = decoupled_values(grid, &ops, options, lambda)?;
    }

    let check_every = options.check_every.max(1);
    let mut history = Vec::new();
    let mut sweeps = 0;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        for regime in Regime::ALL {
            let ri = regime.index();
            let op = &ops[ri];
            let attack_twin = regime.flip_attack().index();
            for node in 0..m {
                let off = op.off_diagonal(node, &values[ri]);
                let (center, coupled) = if lambda > 0.0 {
                    (op.center[node] + lambda, lambda * values[attack_twin][node])
                } else {
                    (op.center[node], 0.0)
                };
                let gs = (op.source[node] + coupled - off) / center;
                let old = values[ri][node];
                let relaxed = old + options.omega * (gs - old);
                let obstacle = obstacle_at(&values, regime, costs, node);
                values[ri][node] = relaxed.min(obstacle);
            }
        }
        if sweeps % check_every == 0 {
            let res = max_complementarity(grid, &ops, &values, costs, lambda);
            history.push(res);
            if !res.is_finite() {
                break;
            }
            if res <= options.tol {
                return Ok(ValueField {
                    n: grid.n(),
                    values,
                    params_fingerprint: params.fingerprint(),
                    sweeps,
                    residual_max: res,
                    residual_history: history,
                });
            }
        }
    }
    let last = history.last().copied().unwrap_or(f64::NAN);
    Err(Error::NonConvergence { sweeps, last_residual: last, residual_history: history })
}

/// Never-switch values: each regime's linear equation solved by Gauss-Seidel
/// without the obstacle. They bound the switching values from above, so the
/// projected iteration started here descends to the largest solution. Starting
/// from zero would stall on the spurious zero solution that proportional
/// costs admit.
fn decoupled_values(grid: &Grid, ops: &[Operator], options: &SolveOptions, lambda: f64) -> Result<[Vec<f64>; 4]> {
    let m = grid.node_count();
    let mut values: [Vec<f64>; 4] = Default::default();
    for v in values.iter_mut() {
        *v = vec![0.0; m];
    }
    let mut history = Vec::new();
    for sweep in 1..=options.max_sweeps {
        let mut change: f64 = 0.0;
        for ri in 0..4 {
            let op = &ops[ri];
            let twin = Regime::ALL[ri].flip_attack().index();
            for node in 0..m {
                let off = op.off_diagonal(node, &values[ri]);
                let gs = (op.source[node] + lambda * values[twin][node] - off) / (op.center[node] + lambda);
                change = change.max((gs - values[ri][node]).abs());
                values[ri][node] = gs;
            }
        }
        if sweep % options.check_every.max(1) == 0 {
            history.push(change);
        }
        if change <= options.tol * 1e-3 {
            return Ok(values);
        }
    }
    Err(Error::NonConvergence {
        sweeps: options.max_sweeps,
        last_residual: history.last().copied().unwrap_or(f64::NAN),
        residual_history: history,
    })
}

fn node_residuals(
    ops: &[Operator],
    values: &[Vec<f64>; 4],
    costs: &SwitchCosts,
    lambda: f64,
    regime: Regime,
    node: usize,
) -> (f64, f64) {
    let ri = regime.index();
    let op = &ops[ri];
    let v = &values[ri];
    let mut av = op.center[node] * v[node] + op.off_diagonal(node, v);
    if lambda > 0.0 {
        av += lambda * (v[node] - values[regime.flip_attack().index()][node]);
    }
    let pde = op.source[node] - av;
    let gap = obstacle_at(values, regime, costs, node) - v[node];
    (pde, gap)
}

fn max_complementarity(
    grid: &Grid,
    ops: &[Operator],
    values: &[Vec<f64>; 4],
    costs: &SwitchCosts,
    lambda: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for regime in Regime::ALL {
        for node in 0..grid.node_count() {
            let (pde, gap) = node_residuals(ops, values, costs, lambda, regime, node);
            let c = pde.min(gap).abs();
            if c.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(c);
        }
    }
    worst
}

/// Residuals of one regime at every node.
#[derive(Debug, Clone)]
pub struct RegimeResiduals {
    pub regime: Regime,
    /// `-delta v + L_h v + c_I i + f(s, p)`; non-negative at a solution.
    pub pde: Vec<f64>,
    /// `v(.;a,1-p) + g - v(.;a,p)`; non-negative at a solution.
    pub gap: Vec<f64>,
    /// `min(pde, gap)`; zero at a solution.
    pub complementarity: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub regimes: Vec<RegimeResiduals>,
    pub max_pde: f64,
    pub max_abs_complementarity: f64,
    pub l2_complementarity: f64,
    /// Most negative obstacle gap (0 when feasible).
    pub worst_obstacle_violation: f64,
}

/// Per-node PDE residual, obstacle gap and complementarity for a field.
pub fn residual_report(
    field: &ValueField,
    grid: &Grid,
    params: &ModelParams,
    costs: &SwitchCosts,
    coupling_lambda: Option<f64>,
) -> ResidualReport {
    let ops: Vec<Operator> = Regime::ALL.iter().map(|&r| Operator::build(grid, r, params)).collect();
    let lambda = coupling_lambda.unwrap_or(0.0);
    let m = grid.node_count();
    let mut regimes = Vec::with_capacity(4);
    let (mut max_pde, mut max_c, mut sum_sq, mut worst_gap) = (f64::NEG_INFINITY, 0.0f64, 0.0, 0.0f64);
    for regime in Regime::ALL {
        let mut rr = RegimeResiduals {
            regime,
            pde: Vec::with_capacity(m),
            gap: Vec::with_capacity(m),
            complementarity: Vec::with_capacity(m),
        };
        for node in 0..m {
            let (pde, gap) = node_residuals(&ops, &field.values, costs, lambda, regime, node);
            let c = pde.min(gap);
            max_pde = max_pde.max(pde);
            max_c = max_c.max(c.abs());
            sum_sq += c * c;
            worst_gap = worst_gap.min(gap);
            rr.pde.push(pde);
            rr.gap.push(gap);
            rr.complementarity.push(c);
        }
        regimes.push(rr);
    }
    ResidualReport {
        regimes,
        max_pde,
        max_abs_complementarity: max_c,
        l2_complementarity: (sum_sq / (4 * m) as f64).sqrt(),
        worst_obstacle_violation: -worst_gap,
    }
}

impl ResidualReport {
    /// Writes `a,p,s,i,pde,gap,complementarity` rows.
    pub fn write_csv(&self, grid: &Grid, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "a,p,s,i,pde,gap,complementarity")?;
        for rr in &self.regimes {
            for (idx, (j, k)) in grid.nodes().enumerate() {
                let st = grid.state(j, k);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    rr.regime.a,
                    rr.regime.p,
                    fmt_sig(st.s),
                    fmt_sig(st.i),
                    fmt_sig(rr.pde[idx]),
                    fmt_sig(rr.gap[idx]),
                    fmt_sig(rr.complementarity[idx])
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::boundary_value;
    use crate::scenario::Scenario;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_counts() {
        for n in [2, 5, 8, 64] {
            let g = Grid::new(n).unwrap();
            assert_eq!(g.node_count(), (n + 1) * (n + 2) / 2);
            assert_eq!(g.nodes().count(), g.node_count());
            assert_abs_diff_eq!(g.spacing() * n as f64, 1.0, epsilon = 1e-15);
            for (idx, (j, k)) in g.nodes().enumerate() {
                assert_eq!(g.index(j, k), idx);
            }
        }
    }

    #[test]
    fn interpolation_is_exact_for_affine_functions() {
        let g = Grid::new(7).unwrap();
        let f = |s: f64, i: f64| 0.3 + 2.0 * s - 1.5 * i;
        let vals: Vec<f64> = g.nodes().map(|(j, k)| {
            let st = g.state(j, k);
            f(st.s, st.i)
        }).collect();
        for &(s, i) in &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.31, 0.42), (0.5, 0.5), (0.07, 0.9)] {
            assert_abs_diff_eq!(g.interpolate(&vals, State::new(s, i)), f(s, i), epsilon = 1e-12);
        }
    }

    #[test]
    fn s_edge_stencil_has_no_second_order_terms() {
        let p = Scenario::one().params;
        let g = Grid::new(16).unwrap();
        for k in 0..=16 {
            let st = build_stencil(&g, 0, k, Regime::new(1, 1), &p);
            // only first-order neighbours: (1,k) and/or (0,k-1)
            for &(idx, _) in &st.neighbors {
                assert!(idx == g.index(1, k.min(15)) || (k > 0 && idx == g.index(0, k - 1)));
            }
        }
    }

    #[test]
    fn zero_volatility_stencil_is_pure_transport() {
        let p = crate::model::ModelParams { sigma: 0.0, ..Scenario::one().params };
        let g = Grid::new(8).unwrap();
        let (j, k) = (3, 2);
        let st = build_stencil(&g, j, k, Regime::new(1, 0), &p);
        let (bs, bi) = drift(g.state(j, k), Regime::new(1, 0), &p);
        let h = g.spacing();
        assert_abs_diff_eq!(st.center, p.delta + bs.abs() / h + bi.abs() / h, epsilon = 1e-12);
        assert_eq!(st.neighbors.len(), 2);
    }

    #[test]
    fn interior_stencil_matches_hand_values() {
        // (0.5, 0.25) on n = 8, scenario-1 rates, regime (1,1):
        // bs = 0.002*0.25 - 0.5*(0.03+0.05+0.01) = -0.0445  -> backward in s, weight 0.356
        // bi = 0.05*0.5 - 0.02*0.25 + 0.04*0.125 = 0.025    -> forward in i,  weight 0.2
        // D  = 0.5*(0.2*0.125)^2 = 3.125e-4                  -> diagonal pair, weight 0.02 each
        let p = Scenario::one().params;
        let g = Grid::new(8).unwrap();
        let st = build_stencil(&g, 4, 2, Regime::new(1, 1), &p);
        let mut nb = st.neighbors.clone();
        nb.sort_by_key(|x| x.0);
        let mut expect = vec![
            (g.index(3, 2), -0.356),
            (g.index(4, 3), -0.2),
            (g.index(5, 1), -0.02),
            (g.index(3, 3), -0.02),
        ];
        expect.sort_by_key(|x| x.0);
        assert_eq!(nb.len(), expect.len());
        for ((i1, w1), (i2, w2)) in nb.iter().zip(&expect) {
            assert_eq!(i1, i2);
            assert_abs_diff_eq!(w1, w2, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(st.center, 0.2 + 0.356 + 0.2 + 0.04, epsilon = 1e-12);
    }

    #[test]
    fn hypotenuse_stencil_stays_inside() {
        let p = Scenario::one().params;
        let g = Grid::new(10).unwrap();
        for j in 0..=10 {
            let k = 10 - j;
            for r in Regime::ALL {
                let st = build_stencil(&g, j, k, r, &p);
                assert!(st.center > 0.0);
                assert!(st.neighbors.iter().all(|&(_, w)| w <= 0.0));
            }
        }
    }

    #[test]
    fn zero_costs_give_zero_field() {
        let p = crate::model::ModelParams { c_i: 0.0, c_v: 0.0, ..Scenario::one().params };
        let g = Grid::new(8).unwrap();
        let f = solve_psor(&g, &p, &SwitchCosts::constant(0.002, 0.002), &SolveOptions::default()).unwrap();
        for v in &f.values {
            assert!(v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn sir_edge_matches_closed_form() {
        let p = crate::model::ModelParams { rho: 0.0, ..Scenario::one().params };
        let g = Grid::new(16).unwrap();
        let f = solve_psor(&g, &p, &SwitchCosts::constant(0.002, 0.002), &SolveOptions::default()).unwrap();
        for r in Regime::ALL {
            for k in 0..=16 {
                let st = g.state(0, k);
                assert_abs_diff_eq!(f.regime(r)[g.index(0, k)], boundary_value(st.i, &p), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn bad_omega_is_config_error() {
        let p = Scenario::one().params;
        let g = Grid::new(4).unwrap();
        let opts = SolveOptions { omega: 2.5, ..Default::default() };
        assert!(matches!(
            solve_psor(&g, &p, &SwitchCosts::constant(0.1, 0.1), &opts),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_convergence_carries_history() {
        let p = Scenario::one().params;
        let g = Grid::new(16).unwrap();
        let opts = SolveOptions { max_sweeps: 20, check_every: 5, ..Default::default() };
        match solve_psor(&g, &p, &SwitchCosts::constant(0.002, 0.002), &opts) {
            Err(Error::NonConvergence { residual_history, sweeps, .. }) => {
                assert_eq!(sweeps, 20);
                assert_eq!(residual_history.len(), 4);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn residual_report_zero_field() {
        let p = Scenario::one().params;
        let g = Grid::new(8).unwrap();
        let m = g.node_count();
        let field = ValueField {
            n: 8,
            values: [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]],
            params_fingerprint: 0,
            sweeps: 0,
            residual_max: 0.0,
            residual_history: vec![],
        };
        let rep = residual_report(&field, &g, &p, &SwitchCosts::constant(0.002, 0.002), None);
        let max_cost = g
            .nodes()
            .flat_map(|(j, k)| Regime::ALL.map(|r| running_cost(g.state(j, k), r, &p)))
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(rep.max_pde, max_cost, epsilon = 1e-15);
    }

    #[test]
    fn residual_is_linear_in_a_nodal_perturbation() {
        let p = Scenario::one().params;
        let g = Grid::new(16).unwrap();
        let costs = SwitchCosts::constant(0.002, 0.002);
        let mut f = solve_psor(&g, &p, &costs, &SolveOptions::default()).unwrap();
        let node = g.index(6, 5);
        let r = Regime::new(1, 0);
        let before = residual_report(&f, &g, &p, &costs, None);
        let eps = 1e-4;
        f.values[r.index()][node] += eps;
        let after = residual_report(&f, &g, &p, &costs, None);
        let center = build_stencil(&g, 6, 5, r, &p).center;
        let d = before.regimes[r.index()].pde[node] - after.regimes[r.index()].pde[node];
        assert_abs_diff_eq!(d, center * eps, epsilon = 1e-12);
        assert!(d >= p.delta * eps);
    }

    #[test]
    fn csv_round_trip() {
        let p = Scenario::one().params;
        let g = Grid::new(6).unwrap();
        let f = solve_psor(&g, &p, &SwitchCosts::constant(0.002, 0.002), &SolveOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        f.write_csv(&path).unwrap();
        let back = ValueField::read_csv(&path, f.params_fingerprint).unwrap();
        assert_eq!(back.n, 6);
        for r in Regime::ALL {
            for (a, b) in f.regime(r).iter().zip(back.regime(r)) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9 * a.abs().max(1e-12));
            }
        }
    }
}
