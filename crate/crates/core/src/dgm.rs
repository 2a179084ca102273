//! Mesh-free solver: one small tanh network per regime, trained by stochastic
//! gradient steps on the squared PDE residual at random interior points plus
//! the squared `s = 0` boundary mismatch.
//!
//! Input derivatives up to second order are propagated forward through the
//! network as 6-component jets `(v, v_s, v_i, v_ss, v_ii, v_si)`; the parameter
//! gradient of the loss is obtained by differentiating that propagation in
//! reverse. Batches are processed as matrices so every layer is one GEMM.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::model::{
    boundary_value, diffusion_coefficient, drift, running_cost, Derivs, ModelParams, Regime, State,
    SwitchCostSpec, SwitchCosts,
};
use crate::rng::{substream, StreamKind};

/// Jet components per point.
const JET: usize = 6;

/// Smooth hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn id(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    /// `(f, f', f'', f''')` at `z`.
    #[inline]
    fn eval(self, z: f64) -> (f64, f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1, -2.0 * d1 * (1.0 - 3.0 * t * t))
            }
            Activation::Sigmoid => {
                let y = 1.0 / (1.0 + (-z).exp());
                let d1 = y * (1.0 - y);
                (y, d1, d1 * (1.0 - 2.0 * y), d1 * (1.0 - 6.0 * d1))
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Fully connected network `R^2 -> R` with a linear output layer scaled by
/// `output_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    widths: Vec<usize>,
    activation: Activation,
    /// Per layer: weights (out x in, row major) then biases.
    params: Vec<f64>,
    output_scale: f64,
    regime: Regime,
}

impl Network {
    /// Uniform `±sqrt(3 / fan_in)` weights, zero biases.
    pub fn new(hidden: &[usize], activation: Activation, output_scale: f64, regime: Regime, rng: &mut impl Rng) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(2);
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut params = Vec::with_capacity(param_count(&widths));
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (3.0 / fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Network { widths, activation, params, output_scale, regime }
    }

    pub fn from_parts(
        widths: Vec<usize>,
        activation: Activation,
        params: Vec<f64>,
        output_scale: f64,
        regime: Regime,
    ) -> Result<Self> {
        if widths.len() < 2 || widths[0] != 2 || *widths.last().unwrap() != 1 || widths.contains(&0) {
            return Err(Error::Config(format!("network widths must run 2 -> ... -> 1, got {widths:?}")));
        }
        if params.len() != param_count(&widths) {
            return Err(Error::Config(format!(
                "widths {widths:?} need {} parameters, got {}",
                param_count(&widths),
                params.len()
            )));
        }
        Ok(Network { widths, activation, params, output_scale, regime })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn layer_offsets(&self, l: usize) -> (usize, usize, usize) {
        let mut off = 0;
        for w in self.widths.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        (off, off + n_in * n_out, off + n_in * n_out + n_out)
    }

    fn weights(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w0, b0, _) = self.layer_offsets(l);
        ArrayView2::from_shape((self.widths[l + 1], self.widths[l]), &self.params[w0..b0]).expect("layer shape")
    }

    fn biases(&self, l: usize) -> &[f64] {
        let (_, b0, b1) = self.layer_offsets(l);
        &self.params[b0..b1]
    }

    /// Value only, at a single point.
    pub fn value(&self, s: f64, i: f64) -> f64 {
        let fwd = self.forward(&[State::new(s, i)], false);
        fwd.output[[0, 0]]
    }

    /// Values at many points.
    pub fn values(&self, points: &[State]) -> Vec<f64> {
        let fwd = self.forward(points, false);
        fwd.output.row(0).to_vec()
    }

    /// Forward pass over `points`. With `jets`, each point carries six
    /// columns (value block first, then `d/ds, d/di, d2/ds2, d2/di2, d2/dsdi`).
    fn forward(&self, points: &[State], jets: bool) -> Forward {
        let b = points.len();
        let comps = if jets { JET } else { 1 };
        let mut a = Array2::<f64>::zeros((2, comps * b));
        for (k, p) in points.iter().enumerate() {
            a[[0, k]] = p.s;
            a[[1, k]] = p.i;
            if jets {
                a[[0, b + k]] = 1.0;
                a[[1, 2 * b + k]] = 1.0;
            }
        }
        let mut inputs = Vec::with_capacity(self.layers());
        let mut pre = Vec::with_capacity(self.layers());
        for l in 0..self.layers() {
            let mut z = self.weights(l).dot(&a);
            for (mut row, &bias) in z.axis_iter_mut(Axis(0)).zip(self.biases(l)) {
                row.slice_mut(s![..b]).mapv_inplace(|x| x + bias);
            }
            let last = l + 1 == self.layers();
            let next = if last { z.mapv(|x| x * self.output_scale) } else { activate(self.activation, &z, b, comps) };
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        Forward { inputs, pre, output: a, batch: b, comps }
    }

    /// Reverse pass: given the adjoint of the output jets, the gradient of the
    /// scalar with respect to every parameter, accumulated into `grad`.
    fn backward(&self, fwd: &Forward, out_bar: &Array2<f64>, grad: &mut [f64]) {
        let (b, comps) = (fwd.batch, fwd.comps);
        let mut z_bar = out_bar.mapv(|x| x * self.output_scale);
        for l in (0..self.layers()).rev() {
            let (w0, b0, b1) = self.layer_offsets(l);
            let gw = z_bar.dot(&fwd.inputs[l].t());
            for (g, x) in grad[w0..b0].iter_mut().zip(gw.iter()) {
                *g += x;
            }
            for (g, row) in grad[b0..b1].iter_mut().zip(z_bar.axis_iter(Axis(0))) {
                *g += row.slice(s![..b]).sum();
            }
            if l == 0 {
                break;
            }
            let a_bar = self.weights(l).t().dot(&z_bar);
            z_bar = activate_backward(self.activation, &fwd.pre[l - 1], &a_bar, b, comps);
        }
    }
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

struct Forward {
    /// Input of each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    /// Scaled output, shape `(1, comps * batch)`.
    output: Array2<f64>,
    batch: usize,
    comps: usize,
}

/// Second-order chain rule through an elementwise activation.
fn activate(act: Activation, z: &Array2<f64>, b: usize, comps: usize) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(z.raw_dim());
    for (zr, mut or) in z.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let zr = zr.as_slice().expect("row-major");
        let or = or.as_slice_mut().expect("row-major");
        for k in 0..b {
            let (f0, f1, f2, _) = act.eval(zr[k]);
            or[k] = f0;
            if comps == JET {
                let (zs, zi) = (zr[b + k], zr[2 * b + k]);
                or[b + k] = f1 * zs;
                or[2 * b + k] = f1 * zi;
                or[3 * b + k] = f2 * zs * zs + f1 * zr[3 * b + k];
                or[4 * b + k] = f2 * zi * zi + f1 * zr[4 * b + k];
                or[5 * b + k] = f2 * zs * zi + f1 * zr[5 * b + k];
            }
        }
    }
    out
}

/// Adjoint of [`activate`]: maps the adjoint of the activated jets to the
/// adjoint of the pre-activation jets.
fn activate_backward(act: Activation, z: &Array2<f64>, a_bar: &Array2<f64>, b: usize, comps: usize) -> Array2<f64> {
    let mut z_bar = Array2::<f64>::zeros(z.raw_dim());
    for ((zr, ar), mut out) in z.axis_iter(Axis(0)).zip(a_bar.axis_iter(Axis(0))).zip(z_bar.axis_iter_mut(Axis(0))) {
        let zr = zr.as_slice().expect("row-major");
        let ar = ar.as_slice().expect("row-major");
        let out = out.as_slice_mut().expect("row-major");
        for k in 0..b {
            let (_, f1, f2, f3) = act.eval(zr[k]);
            if comps == 1 {
                out[k] = ar[k] * f1;
                continue;
            }
            let (zs, zi, zss, zii, zsi) = (zr[b + k], zr[2 * b + k], zr[3 * b + k], zr[4 * b + k], zr[5 * b + k]);
            let (a0, a1, a2, a3, a4, a5) =
                (ar[k], ar[b + k], ar[2 * b + k], ar[3 * b + k], ar[4 * b + k], ar[5 * b + k]);
            out[k] = a0 * f1
                + f2 * (a1 * zs + a2 * zi + a3 * zss + a4 * zii + a5 * zsi)
                + f3 * (a3 * zs * zs + a4 * zi * zi + a5 * zs * zi);
            out[b + k] = a1 * f1 + f2 * (2.0 * a3 * zs + a5 * zi);
            out[2 * b + k] = a2 * f1 + f2 * (2.0 * a4 * zi + a5 * zs);
            out[3 * b + k] = a3 * f1;
            out[4 * b + k] = a4 * f1;
            out[5 * b + k] = a5 * f1;
        }
    }
    z_bar
}

/// Exact value and input derivatives up to second order at `(s, i)`.
pub fn eval_with_derivs(net: &Network, s: f64, i: f64) -> Derivs {
    let fwd = net.forward(&[State::new(s, i)], true);
    let o = &fwd.output;
    Derivs { v: o[[0, 0]], v_s: o[[0, 1]], v_i: o[[0, 2]], v_ss: o[[0, 3]], v_ii: o[[0, 4]], v_si: o[[0, 5]] }
}

/// `-delta v + L^{a,p} v + c_I i + f(s, p)` for the network.
pub fn pde_residual(net: &Network, point: State, regime: Regime, params: &ModelParams) -> f64 {
    let d = eval_with_derivs(net, point.s, point.i);
    -params.delta * d.v + crate::model::generator_apply(&d, point, regime, params) + running_cost(point, regime, params)
}

/// Step-size schedule `alpha_n = alpha0 / (1 + n / decay_steps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub alpha0: f64,
    pub decay_steps: f64,
}

impl StepSchedule {
    pub fn at(&self, n: usize) -> f64 {
        self.alpha0 / (1.0 + n as f64 / self.decay_steps)
    }
}

/// Update rule applied to the gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// `theta <- theta - alpha_n * grad`.
    Sgd,
    /// Adam moment estimates; the step is still scaled by `alpha_n`.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DgmConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub interior_batch: usize,
    pub boundary_batch: usize,
    pub schedule: StepSchedule,
    pub optimizer: Optimizer,
    pub steps: usize,
    /// Weight of the obstacle penalty; zero trains the decoupled PDEs.
    pub penalty_weight: f64,
    pub seed: u64,
    /// Regimes to train, each with its own network.
    pub regimes: Vec<Regime>,
    /// Stop once the mean loss over the trailing window is below this.
    pub stop_threshold: f64,
    pub stop_window: usize,
    /// Network output multiplier; `None` uses `(c_I + c_V kappa) / delta`.
    pub output_scale: Option<f64>,
}

impl Default for DgmConfig {
    fn default() -> Self {
        DgmConfig {
            hidden: vec![50, 50, 50],
            activation: Activation::Tanh,
            interior_batch: 256,
            boundary_batch: 64,
            schedule: StepSchedule { alpha0: 1e-3, decay_steps: 1e4 },
            optimizer: Optimizer::adam(),
            steps: 50_000,
            penalty_weight: 0.0,
            seed: 1,
            regimes: Regime::ALL.to_vec(),
            stop_threshold: 1e-6,
            stop_window: 1000,
            output_scale: None,
        }
    }
}

impl DgmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interior_batch == 0 || self.boundary_batch == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if !(self.schedule.alpha0 > 0.0 && self.schedule.decay_steps > 0.0) {
            return Err(Error::Config("step size schedule must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("need at least one non-empty hidden layer".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("no regimes to train".into()));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(Error::Config("penalty weight must be >= 0".into()));
        }
        if self.penalty_weight > 0.0 {
            for r in &self.regimes {
                if !self.regimes.contains(&r.flip_protection()) {
                    return Err(Error::Config(format!("obstacle penalty for {r} needs its protection twin trained too")));
                }
            }
        }
        Ok(())
    }
}

/// A sampled batch: interior points uniform on `D`, boundary ordinates
/// uniform on `[0, 1]` (the points are `(0, y)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub interior: Vec<State>,
    pub boundary: Vec<f64>,
}

/// Uniform interior points by folding the unit square onto the triangle,
/// and uniform boundary ordinates.
pub fn sample_batch(interior: usize, boundary: usize, rng: &mut ChaCha8Rng) -> Batch {
    let pts = (0..interior)
        .map(|_| {
            let (u, v): (f64, f64) = (rng.gen(), rng.gen());
            if u + v > 1.0 {
                State::new(1.0 - u, 1.0 - v)
            } else {
                State::new(u, v)
            }
        })
        .collect();
    let ys = (0..boundary).map(|_| rng.gen()).collect();
    Batch { interior: pts, boundary: ys }
}

/// Components of the training loss.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub pde: f64,
    pub boundary: f64,
    pub penalty: f64,
}

/// Loss over the trained regimes and its gradient with respect to every
/// network's parameters (one gradient vector per network, same order).
///
/// `total = sum_r [mean R_r^2 + mean (v_r(0, y) - c_I y / (delta + gamma))^2]
///          + w * sum_r mean max(v_r - v_{r'} - g, 0)^2` with `r'` the
/// protection twin of `r`.
pub fn loss(nets: &[Network], batch: &Batch, params: &ModelParams, costs: &SwitchCosts, penalty_weight: f64) -> (LossParts, Vec<Vec<f64>>) {
    let nb = batch.interior.len();
    let nbd = batch.boundary.len();
    let boundary_pts: Vec<State> = batch.boundary.iter().map(|&y| State::new(0.0, y)).collect();
    let mut parts = LossParts::default();
    let mut grads: Vec<Vec<f64>> = nets.iter().map(|n| vec![0.0; n.params.len()]).collect();

    let fwd_int: Vec<Forward> = nets.iter().map(|n| n.forward(&batch.interior, true)).collect();
    let mut seeds_int: Vec<Array2<f64>> = fwd_int.iter().map(|f| Array2::zeros(f.output.raw_dim())).collect();

    // per-point operator coefficients
    for (ni, net) in nets.iter().enumerate() {
        let r = net.regime;
        let out = &fwd_int[ni].output;
        let seed = &mut seeds_int[ni];
        let mut sum_sq = 0.0;
        for (k, &pt) in batch.interior.iter().enumerate() {
            let (bs, bi) = drift(pt, r, params);
            let dc = diffusion_coefficient(pt, params);
            let v = |c: usize| out[[0, c * nb + k]];
            let res = -params.delta * v(0) + bs * v(1) + bi * v(2) + dc * (v(3) + v(4) - 2.0 * v(5))
                + running_cost(pt, r, params);
            sum_sq += res * res;
            let g = 2.0 * res / nb as f64;
            seed[[0, k]] += -params.delta * g;
            seed[[0, nb + k]] += bs * g;
            seed[[0, 2 * nb + k]] += bi * g;
            seed[[0, 3 * nb + k]] += dc * g;
            seed[[0, 4 * nb + k]] += dc * g;
            seed[[0, 5 * nb + k]] += -2.0 * dc * g;
        }
        parts.pde += sum_sq / nb as f64;
    }

    if penalty_weight > 0.0 {
        for (ni, net) in nets.iter().enumerate() {
            let r = net.regime;
            let twin = nets.iter().position(|m| m.regime == r.flip_protection()).expect("validated pairing");
            let spec = costs.leaving(r.p);
            let mut sum_sq = 0.0;
            for k in 0..nb {
                let v_self = fwd_int[ni].output[[0, k]];
                let v_twin = fwd_int[twin].output[[0, k]];
                let (g, dg_self, dg_twin) = match spec {
                    SwitchCostSpec::Constant(g) => (g, 0.0, 0.0),
                    SwitchCostSpec::Proportional { factor, reference } => {
                        if reference == r.p {
                            (factor * v_self, factor, 0.0)
                        } else {
                            (factor * v_twin, 0.0, factor)
                        }
                    }
                };
                let excess = v_self - v_twin - g;
                if excess > 0.0 {
                    sum_sq += excess * excess;
                    let d = penalty_weight * 2.0 * excess / nb as f64;
                    seeds_int[ni][[0, k]] += d * (1.0 - dg_self);
                    seeds_int[twin][[0, k]] += d * (-1.0 - dg_twin);
                }
            }
            parts.penalty += penalty_weight * sum_sq / nb as f64;
        }
    }

    for (ni, net) in nets.iter().enumerate() {
        net.backward(&fwd_int[ni], &seeds_int[ni], &mut grads[ni]);
        let fwd = net.forward(&boundary_pts, false);
        let mut seed = Array2::<f64>::zeros(fwd.output.raw_dim());
        let mut sum_sq = 0.0;
        for (k, &y) in batch.boundary.iter().enumerate() {
            let e = fwd.output[[0, k]] - boundary_value(y, params);
            sum_sq += e * e;
            seed[[0, k]] = 2.0 * e / nbd as f64;
        }
        parts.boundary += sum_sq / nbd as f64;
        net.backward(&fwd, &seed, &mut grads[ni]);
    }
    parts.total = parts.pde + parts.boundary + parts.penalty;
    (parts, grads)
}

/// Trained networks with their loss history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub nets: Vec<Network>,
    pub trace: Vec<LossParts>,
    pub converged: bool,
}

/// Initializes one network per configured regime from the training substream.
pub fn init_networks(config: &DgmConfig, params: &ModelParams, rng: &mut ChaCha8Rng) -> Vec<Network> {
    let scale = config.output_scale.unwrap_or_else(|| params.value_upper_bound());
    config.regimes.iter().map(|&r| Network::new(&config.hidden, config.activation, scale, r, rng)).collect()
}

/// Stochastic descent on freshly sampled batches.
pub fn train(config: &DgmConfig, params: &ModelParams, costs: &SwitchCosts) -> Result<TrainOutcome> {
    train_with(config, params, costs, |_, _| {})
}

/// [`train`] with a progress callback `(step, loss)`.
pub fn train_with<F>(config: &DgmConfig, params: &ModelParams, costs: &SwitchCosts, mut progress: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &LossParts),
{
    config.validate()?;
    params.validate()?;
    let mut rng = substream(config.seed, 0, StreamKind::Training);
    let mut nets = init_networks(config, params, &mut rng);
    let mut moments: Vec<(Vec<f64>, Vec<f64>)> =
        nets.iter().map(|n| (vec![0.0; n.params.len()], vec![0.0; n.params.len()])).collect();
    let mut trace = Vec::with_capacity(config.steps);
    let mut window_sum = 0.0;
    for step in 0..config.steps {
        let batch = sample_batch(config.interior_batch, config.boundary_batch, &mut rng);
        let (parts, grads) = loss(&nets, &batch, params, costs, config.penalty_weight);
        if !parts.total.is_finite() {
            return Err(Error::Divergence {
                step,
                loss: parts.total,
                trace: trace.iter().map(|p: &LossParts| p.total).collect(),
            });
        }
        trace.push(parts);
        progress(step, &parts);
        window_sum += parts.total;
        if trace.len() > config.stop_window {
            window_sum -= trace[trace.len() - 1 - config.stop_window].total;
        }
        if trace.len() >= config.stop_window && window_sum / (config.stop_window as f64) < config.stop_threshold {
            return Ok(TrainOutcome { nets, trace, converged: true });
        }
        let alpha = config.schedule.at(step);
        for ((net, grad), (m, v)) in nets.iter_mut().zip(&grads).zip(moments.iter_mut()) {
            apply_update(config.optimizer, alpha, step, &mut net.params, grad, m, v);
        }
    }
    Ok(TrainOutcome { nets, trace, converged: false })
}

fn apply_update(opt: Optimizer, alpha: f64, step: usize, theta: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]) {
    match opt {
        Optimizer::Sgd => {
            for (t, g) in theta.iter_mut().zip(grad) {
                *t -= alpha * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let k = (step + 1) as i32;
            let c1 = 1.0 - beta1.powi(k);
            let c2 = 1.0 - beta2.powi(k);
            for i in 0..theta.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                theta[i] -= alpha * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Writes the loss trace as `step,loss,pde_term,boundary_term,penalty_term`.
pub fn write_trace_csv(trace: &[LossParts], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "step,loss,pde_term,boundary_term,penalty_term")?;
    for (k, p) in trace.iter().enumerate() {
        writeln!(w, "{k},{:e},{:e},{:e},{:e}", p.total, p.pde, p.boundary, p.penalty)?;
    }
    w.flush()?;
    Ok(())
}

const CHECKPOINT_MAGIC: &str = "sirs-dgm-checkpoint v1";

/// Writes networks as plain text: a header, then per network its regime,
/// activation, widths, output scale and parameters (layer order, weights row
/// major then biases, one per line in shortest round-trip form).
pub fn write_checkpoint(nets: &[Network], params_fingerprint: u64, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{CHECKPOINT_MAGIC}")?;
    writeln!(w, "params_fingerprint {params_fingerprint:016x}")?;
    writeln!(w, "networks {}", nets.len())?;
    for net in nets {
        writeln!(w, "regime {} {}", net.regime.a, net.regime.p)?;
        writeln!(w, "activation {}", net.activation)?;
        let widths: Vec<String> = net.widths.iter().map(ToString::to_string).collect();
        writeln!(w, "widths {}", widths.join(" "))?;
        writeln!(w, "output_scale {:?}", net.output_scale)?;
        writeln!(w, "params {}", net.params.len())?;
        for p in &net.params {
            writeln!(w, "{p:?}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`write_checkpoint`]; returns the networks
/// and the parameter fingerprint they were trained with.
pub fn read_checkpoint(path: &Path) -> Result<(Vec<Network>, u64)> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, message: &str| Error::Parse { path: path.to_path_buf(), message: format!("line {line}: {message}") };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("unexpected end of file, wanted {what}")));
    let (ln, magic) = next("header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(err(ln, "not a network checkpoint"));
    }
    let field = |(ln, line): (usize, &str), key: &str| -> Result<String> {
        line.strip_prefix(key)
            .map(|rest| rest.trim().to_string())
            .ok_or_else(|| err(ln, &format!("expected `{key}`")))
    };
    let fp_line = next("params_fingerprint")?;
    let fingerprint = u64::from_str_radix(&field(fp_line, "params_fingerprint")?, 16)
        .map_err(|_| err(fp_line.0, "bad fingerprint"))?;
    let count_line = next("networks")?;
    let count: usize = field(count_line, "networks")?.parse().map_err(|_| err(count_line.0, "bad count"))?;
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        let l = next("regime")?;
        let reg: Vec<u8> = field(l, "regime")?.split_whitespace().filter_map(|x| x.parse().ok()).collect();
        if reg.len() != 2 || reg.iter().any(|&x| x > 1) {
            return Err(err(l.0, "bad regime"));
        }
        let l = next("activation")?;
        let act = Activation::from_id(&field(l, "activation")?).ok_or_else(|| err(l.0, "unknown activation"))?;
        let l = next("widths")?;
        let widths: Vec<usize> = field(l, "widths")?
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| err(l.0, "bad width")))
            .collect::<Result<_>>()?;
        let l = next("output_scale")?;
        let scale: f64 = field(l, "output_scale")?.parse().map_err(|_| err(l.0, "bad output scale"))?;
        let l = next("params")?;
        let np: usize = field(l, "params")?.parse().map_err(|_| err(l.0, "bad parameter count"))?;
        let mut theta = Vec::with_capacity(np);
        for _ in 0..np {
            let (ln, v) = next("parameter")?;
            theta.push(v.parse().map_err(|_| err(ln, "bad parameter"))?);
        }
        nets.push(Network::from_parts(widths, act, theta, scale, Regime::new(reg[0], reg[1]))?);
    }
    Ok((nets, fingerprint))
}

/// `a,p,s,i,v` rows of the networks evaluated on grid nodes.
pub fn write_values_csv(nets: &[Network], n: usize, path: &Path) -> Result<()> {
    let grid = crate::grid::Grid::new(n)?;
    let pts: Vec<State> = grid.nodes().map(|(j, k)| grid.state(j, k)).collect();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "a,p,s,i,v")?;
    for net in nets {
        for (pt, v) in pts.iter().zip(net.values(&pts)) {
            writeln!(w, "{},{},{},{},{}", net.regime.a, net.regime.p, fmt_sig(pt.s), fmt_sig(pt.i), fmt_sig(v))?;
        }
    }
    w.flush()?;
    Ok(())
}
