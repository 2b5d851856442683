//! Residual multilayer perceptrons with second-order input jets.
//!
//! A forward pass carries, for every neuron, its value, its first derivative
//! along each input coordinate `(t, x_1, ..., x_d)` and its spatial Laplacian.
//! The Laplacian propagates without the full Hessian:
//!
//! ```text
//! z = W h + b          dz_j = W dh_j        Lap z = W Lap h
//! a = s(z)             da_j = s'(z) dz_j    Lap a = s''(z) sum_k (dz_k)^2 + s'(z) Lap z
//! ```
//!
//! where `k` ranges over the spatial coordinates only. The backward pass runs
//! reverse accumulation over exactly these recurrences, so parameter gradients
//! of losses built from derivatives of the network are exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::Activation;
use crate::error::{MfgError, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputTransform {
    Identity,
    Softplus,
}

impl OutputTransform {
    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Softplus => "softplus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Some(Self::Identity),
            "softplus" => Some(Self::Softplus),
            _ => None,
        }
    }
}

/// Architecture of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    /// `1 + d`: time followed by the spatial coordinates.
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    /// Weight `w` in `h_next = w h + act(W h + b)` between equal-width hidden layers.
    pub skip_weight: f64,
    pub output_transform: OutputTransform,
}

impl NetworkSpec {
    pub fn new(dim: usize, output_dim: usize, hidden_widths: Vec<usize>, activation: Activation) -> Self {
        Self {
            input_dim: dim + 1,
            output_dim,
            hidden_widths,
            activation,
            skip_weight: 0.5,
            output_transform: OutputTransform::Identity,
        }
    }

    pub fn with_skip(mut self, w: f64) -> Self {
        self.skip_weight = w;
        self
    }

    pub fn with_output(mut self, t: OutputTransform) -> Self {
        self.output_transform = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 2 || self.output_dim == 0 {
            return Err(MfgError::InvalidParameter("network needs a time input, a space input and an output".into()));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(MfgError::InvalidParameter("hidden widths must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.skip_weight) {
            return Err(MfgError::InvalidParameter(format!("skip weight {} not in [0, 1]", self.skip_weight)));
        }
        Ok(())
    }

    pub fn spatial_dim(&self) -> usize {
        self.input_dim - 1
    }

    fn layers(&self) -> Vec<Layer> {
        let mut layers = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut offset = 0;
        let mut fan_in = self.input_dim;
        let widths = self.hidden_widths.iter().copied().chain(std::iter::once(self.output_dim));
        for (l, fan_out) in widths.enumerate() {
            let hidden = l < self.hidden_widths.len();
            layers.push(Layer {
                fan_in,
                fan_out,
                w: offset,
                b: offset + fan_in * fan_out,
                hidden,
                skip: hidden && l > 0 && fan_in == fan_out && self.skip_weight != 0.0,
            });
            offset += fan_in * fan_out + fan_out;
            fan_in = fan_out;
        }
        layers
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.fan_in * l.fan_out + l.fan_out).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
    hidden: bool,
    skip: bool,
}

/// Network output with its time derivative, spatial gradient and spatial Laplacian.
///
/// `grad_x` is row-major: component `k` of output `o` is `grad_x[o * d + k]`.
/// The same layout doubles as the adjoint passed to the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub value: Vec<f64>,
    pub dt: Vec<f64>,
    pub grad_x: Vec<f64>,
    pub lap_x: Vec<f64>,
}

impl Jet2 {
    pub fn zeros(outputs: usize, dim: usize) -> Self {
        Self {
            value: vec![0.0; outputs],
            dt: vec![0.0; outputs],
            grad_x: vec![0.0; outputs * dim],
            lap_x: vec![0.0; outputs],
        }
    }

    pub fn dim(&self) -> usize {
        self.grad_x.len() / self.value.len()
    }

    /// Gradient of output `o`.
    pub fn grad(&self, o: usize) -> &[f64] {
        let d = self.dim();
        &self.grad_x[o * d..(o + 1) * d]
    }

    /// `sum_k d(out_k)/dx_k` for a network with `d` outputs.
    pub fn divergence(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|k| self.grad_x[k * d + k]).sum()
    }
}

/// One evaluation point `(t, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl SamplePoint {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }
}

/// Points per gradient accumulation chunk.
const GRAD_CHUNK: usize = 16;

/// Intermediate values of one forward pass, kept for the backward pass.
struct Tape {
    channels: usize,
    /// Input of each layer, channel-major (`channels * fan_in`).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer (`channels * fan_out`).
    pre: Vec<Vec<f64>>,
    /// `[s, s', s'', s''']` at each pre-activation value.
    derivs: Vec<Vec<[f64; 4]>>,
    output: Vec<f64>,
}

/// A network: its spec, layer layout and flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

impl Network {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization of every weight and bias.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layers();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(spec.num_params());
        for l in &layers {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for _ in 0..(l.fan_in * l.fan_out + l.fan_out) {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        Ok(Self { spec, layers, params })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.num_params() {
            return Err(MfgError::ShapeMismatch(format!(
                "spec needs {} parameters, got {}",
                spec.num_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(MfgError::NonFinite { context: "network parameters".into(), index: 0 });
        }
        let layers = spec.layers();
        Ok(Self { spec, layers, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Output bias of unit `o`; handy for building constant networks in tests.
    pub fn output_bias_index(&self, o: usize) -> usize {
        self.layers.last().expect("output layer").b + o
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.spatial_dim() {
            return Err(MfgError::ShapeMismatch(format!(
                "point has {} coordinates, network expects {}",
                x.len(),
                self.spec.spatial_dim()
            )));
        }
        Ok(())
    }

    fn run(&self, t: f64, x: &[f64], full: bool, keep: bool) -> Tape {
        let din = self.spec.input_dim;
        let channels = if full { din + 2 } else { 1 };
        let mut h = vec![0.0; channels * din];
        h[0] = t;
        h[1..din].copy_from_slice(x);
        if full {
            // seed d/d(input_j) = e_j
            for j in 0..din {
                h[(1 + j) * din + j] = 1.0;
            }
        }
        let last = self.layers.len() - 1;
        let mut tape = Tape { channels, inputs: Vec::new(), pre: Vec::new(), derivs: Vec::new(), output: Vec::new() };
        for (li, layer) in self.layers.iter().enumerate() {
            let (fi, fo) = (layer.fan_in, layer.fan_out);
            let w = &self.params[layer.w..layer.w + fi * fo];
            let b = &self.params[layer.b..layer.b + fo];
            let mut z = vec![0.0; channels * fo];
            for o in 0..fo {
                let row = &w[o * fi..(o + 1) * fi];
                for c in 0..channels {
                    let hc = &h[c * fi..(c + 1) * fi];
                    z[c * fo + o] = row.iter().zip(hc).map(|(a, b)| a * b).sum::<f64>();
                }
                z[o] += b[o];
            }
            let act = if layer.hidden {
                Some(self.spec.activation)
            } else {
                match self.spec.output_transform {
                    OutputTransform::Identity => None,
                    OutputTransform::Softplus => Some(Activation::Softplus),
                }
            };
            let (out, derivs) = match act {
                Some(act) => {
                    let mut a = vec![0.0; channels * fo];
                    let mut ds = Vec::with_capacity(fo);
                    for o in 0..fo {
                        let s = act.eval(z[o]);
                        a[o] = s[0];
                        if full {
                            let mut spatial_sq = 0.0;
                            for j in 0..din {
                                let zj = z[(1 + j) * fo + o];
                                a[(1 + j) * fo + o] = s[1] * zj;
                                if j > 0 {
                                    spatial_sq += zj * zj;
                                }
                            }
                            a[(din + 1) * fo + o] = s[2] * spatial_sq + s[1] * z[(din + 1) * fo + o];
                        }
                        ds.push(s);
                    }
                    (a, ds)
                }
                None => (z.clone(), Vec::new()),
            };
            let out = if layer.skip {
                let sw = self.spec.skip_weight;
                out.iter().zip(&h).map(|(a, hv)| a + sw * hv).collect()
            } else {
                out
            };
            if keep {
                tape.inputs.push(std::mem::replace(&mut h, out));
                tape.pre.push(z);
                tape.derivs.push(derivs);
            } else {
                h = out;
            }
            if li == last {
                tape.output = h.clone();
            }
        }
        tape
    }

    /// Network output at `(t, x)`.
    pub fn forward(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.run(t, x, false, false).output)
    }

    /// Value, time derivative, spatial gradient and spatial Laplacian at `(t, x)`.
    pub fn jet(&self, t: f64, x: &[f64]) -> Result<Jet2> {
        self.check_point(x)?;
        let tape = self.run(t, x, true, false);
        Ok(self.unpack(&tape.output))
    }

    fn unpack(&self, y: &[f64]) -> Jet2 {
        let (m, d) = (self.spec.output_dim, self.spec.spatial_dim());
        let mut jet = Jet2::zeros(m, d);
        for o in 0..m {
            jet.value[o] = y[o];
            jet.dt[o] = y[m + o];
            for k in 0..d {
                jet.grad_x[o * d + k] = y[(2 + k) * m + o];
            }
            jet.lap_x[o] = y[(d + 2) * m + o];
        }
        jet
    }

    fn pack(&self, adj: &Jet2, channels: usize) -> Vec<f64> {
        let (m, d) = (self.spec.output_dim, self.spec.spatial_dim());
        let mut y = vec![0.0; channels * m];
        for o in 0..m {
            y[o] = adj.value[o];
            if channels > 1 {
                y[m + o] = adj.dt[o];
                for k in 0..d {
                    y[(2 + k) * m + o] = adj.grad_x[o * d + k];
                }
                y[(d + 2) * m + o] = adj.lap_x[o];
            }
        }
        y
    }

    /// Accumulates `d(adjoint . jet)/d(params)` into `grad`.
    fn backward(&self, tape: &Tape, adjoint: Vec<f64>, grad: &mut [f64]) {
        let channels = tape.channels;
        let full = channels > 1;
        let din = self.spec.input_dim;
        let mut h_bar = adjoint;
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let (fi, fo) = (layer.fan_in, layer.fan_out);
            let input = &tape.inputs[li];
            let z = &tape.pre[li];
            let derivs = &tape.derivs[li];
            let mut carry = if layer.skip {
                let sw = self.spec.skip_weight;
                Some(h_bar.iter().map(|v| sw * v).collect::<Vec<_>>())
            } else {
                None
            };
            // adjoint of the pre-activation channels
            let z_bar = if derivs.is_empty() {
                h_bar
            } else {
                let a_bar = &h_bar;
                let mut zb = vec![0.0; channels * fo];
                for o in 0..fo {
                    let s = derivs[o];
                    let mut acc = a_bar[o] * s[1];
                    if full {
                        let lap_bar = a_bar[(din + 1) * fo + o];
                        let mut spatial_sq = 0.0;
                        for j in 0..din {
                            let zj = z[(1 + j) * fo + o];
                            let aj = a_bar[(1 + j) * fo + o];
                            acc += aj * s[2] * zj;
                            let mut zjb = aj * s[1];
                            if j > 0 {
                                spatial_sq += zj * zj;
                                zjb += lap_bar * 2.0 * s[2] * zj;
                            }
                            zb[(1 + j) * fo + o] = zjb;
                        }
                        acc += lap_bar * (s[3] * spatial_sq + s[2] * z[(din + 1) * fo + o]);
                        zb[(din + 1) * fo + o] = lap_bar * s[1];
                    }
                    zb[o] = acc;
                }
                zb
            };
            let w = &self.params[layer.w..layer.w + fi * fo];
            let mut in_bar = vec![0.0; channels * fi];
            for o in 0..fo {
                let row = &w[o * fi..(o + 1) * fi];
                let grow = &mut grad[layer.w + o * fi..layer.w + (o + 1) * fi];
                for c in 0..channels {
                    let zc = z_bar[c * fo + o];
                    if zc == 0.0 {
                        continue;
                    }
                    let hc = &input[c * fi..(c + 1) * fi];
                    let ib = &mut in_bar[c * fi..(c + 1) * fi];
                    for i in 0..fi {
                        grow[i] += zc * hc[i];
                        ib[i] += zc * row[i];
                    }
                }
                grad[layer.b + o] += z_bar[o];
            }
            if let Some(mut c) = carry.take() {
                c.iter_mut().zip(&in_bar).for_each(|(a, b)| *a += b);
                h_bar = c;
            } else {
                h_bar = in_bar;
            }
        }
    }

    /// Loss and exact parameter gradient for a loss that is a sum over points of
    /// a function of the network's jet.
    ///
    /// For each point, `per_point(index, jet)` returns the point's loss
    /// contribution and the partial derivatives of that contribution with
    /// respect to every jet component (same layout as the jet). With
    /// `full = false` only the value is computed and derivative adjoints are
    /// ignored. Points are processed in fixed-size chunks in parallel and the
    /// chunk sums are added in order, so the result does not depend on the
    /// thread count.
    pub fn loss_and_param_grad<F>(&self, points: &[SamplePoint], full: bool, per_point: F) -> Result<(f64, Vec<f64>)>
    where
        F: Fn(usize, &Jet2) -> Result<(f64, Jet2)> + Sync + Send,
    {
        let np = self.params.len();
        let chunks = points.len().div_ceil(GRAD_CHUNK);
        let parts = par::try_map_indexed(chunks, |c| {
            let mut loss = 0.0;
            let mut g = vec![0.0; np];
            for b in c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(points.len()) {
                let pt = &points[b];
                self.check_point(&pt.x)?;
                let tape = self.run(pt.t, &pt.x, full, true);
                let jet = if full { self.unpack(&tape.output) } else { self.unpack_value(&tape.output) };
                let (l, adj) = per_point(b, &jet)?;
                if !l.is_finite() {
                    return Err(MfgError::NonFinite { context: "loss".into(), index: b });
                }
                loss += l;
                self.backward(&tape, self.pack(&adj, tape.channels), &mut g);
            }
            Ok((loss, g))
        })?;
        let mut total = 0.0;
        let mut grad = vec![0.0; np];
        for (loss, g) in parts {
            total += loss;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((total, grad))
    }

    fn unpack_value(&self, y: &[f64]) -> Jet2 {
        let mut jet = Jet2::zeros(self.spec.output_dim, self.spec.spatial_dim());
        jet.value.copy_from_slice(&y[..self.spec.output_dim]);
        jet
    }

    /// Jets at many points, evaluated in parallel.
    pub fn jets(&self, points: &[SamplePoint]) -> Result<Vec<Jet2>> {
        par::try_map_indexed(points.len(), |b| self.jet(points[b].t, &points[b].x))
    }

    /// Outputs at many points, evaluated in parallel.
    pub fn forward_batch(&self, points: &[SamplePoint]) -> Result<Vec<Vec<f64>>> {
        par::try_map_indexed(points.len(), |b| self.forward(points[b].t, &points[b].x))
    }
}
