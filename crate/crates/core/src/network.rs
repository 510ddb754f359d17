//! Learnable gradient-field operators.
//!
//! Three layouts are supported:
//!
//! * [`Variant::BranchTrunk`] (V1): a branch over normalized `(q, qdot, u)` and
//!   a trunk over normalized time; outputs are the latent dot products
//!   `G_i = sum_l b_{i,l} t_l`.
//! * [`Variant::StateOnly`] (V2): one feedforward map `(q, qdot) -> G`.
//! * [`Variant::AmplitudePhase`] (V3): an amplitude branch `a(x) in R^p` and a
//!   phase branch `phi(x) in R^{p x 2}` combined as `G = sum_l a_l phi_l`.
//!
//! All hidden activations are `tanh`, so the map is smooth and its state
//! Jacobian is computed exactly by forward-mode accumulation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::StateVec;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "V1")]
    BranchTrunk,
    #[serde(rename = "V2")]
    StateOnly,
    #[serde(rename = "V3")]
    AmplitudePhase,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::BranchTrunk => "V1",
            Variant::StateOnly => "V2",
            Variant::AmplitudePhase => "V3",
        }
    }

    /// Whether the forcing is an input (V1) rather than added to the output.
    pub fn takes_forcing(self) -> bool {
        matches!(self, Variant::BranchTrunk)
    }

    fn branch_inputs(self) -> usize {
        if self.takes_forcing() {
            3
        } else {
            2
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "V1" | "v1" | "branch_trunk" => Ok(Variant::BranchTrunk),
            "V2" | "v2" | "state_only" => Ok(Variant::StateOnly),
            "V3" | "v3" | "amplitude_phase" => Ok(Variant::AmplitudePhase),
            other => Err(Error::parse("variant", format!("unknown variant `{other}`"))),
        }
    }
}

/// Layer widths and activation placement.
///
/// Hidden layer `i` (1-based) is `tanh`-activated iff `i % stride == 0`;
/// output layers are always linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub variant: Variant,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation_stride: usize,
    #[serde(default)]
    pub trunk_hidden: Vec<usize>,
    #[serde(default = "one")]
    pub trunk_activation_stride: usize,
}

fn one() -> usize {
    1
}

impl ArchitectureConfig {
    /// Defaults per variant: V1 branch `[64; 4]` activated after the fourth
    /// layer with a `[64; 2]` trunk activated after the second; V2/V3 use
    /// fully activated `[32, 32]` branches with latent width 16.
    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::BranchTrunk => ArchitectureConfig {
                variant,
                latent_dim: 32,
                hidden: vec![64; 4],
                activation_stride: 4,
                trunk_hidden: vec![64; 2],
                trunk_activation_stride: 2,
            },
            Variant::StateOnly | Variant::AmplitudePhase => ArchitectureConfig {
                variant,
                latent_dim: 16,
                hidden: vec![32, 32],
                activation_stride: 1,
                trunk_hidden: Vec::new(),
                trunk_activation_stride: 1,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Domain("latent dimension must be positive".into()));
        }
        if self.hidden.contains(&0) || self.trunk_hidden.contains(&0) {
            return Err(Error::Domain("layer widths must be positive".into()));
        }
        if self.activation_stride == 0 || self.trunk_activation_stride == 0 {
            return Err(Error::Domain("activation stride must be positive".into()));
        }
        if self.variant == Variant::BranchTrunk && self.trunk_hidden.is_empty() {
            return Err(Error::Domain("branch-trunk layout needs trunk layers".into()));
        }
        Ok(())
    }
}

/// Fully connected layer. Weights are stored input-major:
/// `weights[j * output + i]` couples input `j` to output `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activated: bool,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activated: bool) -> Self {
        Dense {
            input,
            output,
            weights: vec![0.0; input * output],
            bias: vec![0.0; output],
            activated,
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (j, &xj) in x.iter().enumerate() {
            let row = &self.weights[j * self.output..(j + 1) * self.output];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * xj;
            }
        }
    }

    #[inline]
    fn affine_tangent(&self, x: &[f64], dx: [&[f64]; 2], out: &mut Vec<f64>, dout: [&mut Vec<f64>; 2]) {
        let [d0, d1] = dout;
        out.clear();
        out.extend_from_slice(&self.bias);
        d0.clear();
        d0.resize(self.output, 0.0);
        d1.clear();
        d1.resize(self.output, 0.0);
        for j in 0..self.input {
            let (xj, a, b) = (x[j], dx[0][j], dx[1][j]);
            let row = &self.weights[j * self.output..(j + 1) * self.output];
            for i in 0..self.output {
                let w = row[i];
                out[i] += w * xj;
                d0[i] += w * a;
                d1[i] += w * b;
            }
        }
    }
}

/// Stack of [`Dense`] layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    fn build(input: usize, hidden: &[usize], stride: usize, output: usize) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for (i, &w) in hidden.iter().enumerate() {
            layers.push(Dense::zeros(fan_in, w, (i + 1) % stride == 0));
            fan_in = w;
        }
        layers.push(Dense::zeros(fan_in, output, false));
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            let bound = 1.0 / (layer.input as f64).sqrt();
            for w in layer.weights.iter_mut() {
                *w = rng.gen_range(-bound..bound);
            }
            for b in layer.bias.iter_mut() {
                *b = rng.gen_range(-bound..bound);
            }
            if idx == last {
                layer.weights.iter_mut().for_each(|w| *w *= 0.01);
                layer.bias.iter_mut().for_each(|b| *b = 0.0);
            }
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.affine(&cur, &mut next);
            if layer.activated {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Value plus directional derivatives along two input tangents.
    fn forward_tangent(&self, x: &[f64], dx: [&[f64]; 2]) -> (Vec<f64>, [Vec<f64>; 2]) {
        let mut cur = x.to_vec();
        let mut dc = [dx[0].to_vec(), dx[1].to_vec()];
        let (mut next, mut dn0, mut dn1) = (Vec::new(), Vec::new(), Vec::new());
        for layer in &self.layers {
            layer.affine_tangent(&cur, [&dc[0], &dc[1]], &mut next, [&mut dn0, &mut dn1]);
            if layer.activated {
                for i in 0..next.len() {
                    let a = next[i].tanh();
                    let g = 1.0 - a * a;
                    next[i] = a;
                    dn0[i] *= g;
                    dn1[i] *= g;
                }
            }
            std::mem::swap(&mut cur, &mut next);
            std::mem::swap(&mut dc[0], &mut dn0);
            std::mem::swap(&mut dc[1], &mut dn1);
        }
        (cur, dc)
    }

    /// Forward pass retaining every layer's output (index 0 is the input).
    fn forward_cached(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::new();
            layer.affine(acts.last().unwrap(), &mut out);
            if layer.activated {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    /// Accumulate parameter gradients given `dL/d(output)`; `grads` holds
    /// `(weights, bias)` per layer.
    fn backward(&self, acts: &[Vec<f64>], grad_out: &[f64], grads: &mut [Vec<f64>]) {
        let mut delta = grad_out.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let out = &acts[li + 1];
            if layer.activated {
                for (d, &a) in delta.iter_mut().zip(out) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &acts[li];
            let (gw, rest) = grads[2 * li..].split_at_mut(1);
            let gw = &mut gw[0];
            let gb = &mut rest[0];
            for (g, &d) in gb.iter_mut().zip(&delta) {
                *g += d;
            }
            let mut prev = if li > 0 { vec![0.0; layer.input] } else { Vec::new() };
            for j in 0..layer.input {
                let xj = input[j];
                let row = &layer.weights[j * layer.output..(j + 1) * layer.output];
                let grow = &mut gw[j * layer.output..(j + 1) * layer.output];
                let mut acc = 0.0;
                for i in 0..layer.output {
                    grow[i] += xj * delta[i];
                    acc += row[i] * delta[i];
                }
                if li > 0 {
                    prev[j] = acc;
                }
            }
            delta = prev;
        }
    }

    fn tensors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias])
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weights, &mut l.bias])
    }
}

/// Affine normalization frozen from training data: inputs are mapped by
/// `(x - shift) / scale`, the trunk time by `t / time_scale`, and raw
/// network outputs are multiplied by `output_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub time_scale: f64,
    pub output_scale: [f64; 2],
}

impl Normalization {
    pub fn identity(n_inputs: usize) -> Self {
        Normalization {
            input_shift: vec![0.0; n_inputs],
            input_scale: vec![1.0; n_inputs],
            time_scale: 1.0,
            output_scale: [1.0, 1.0],
        }
    }
}

/// Exact `dG_i / dx_j` of the state gradient with respect to `(q, qdot)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JacobianMatrix(pub [[f64; 2]; 2]);

impl JacobianMatrix {
    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Optional non-state inputs of the branch-trunk layout: raw time and forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extras {
    pub t: f64,
    pub u: f64,
}

/// A learned operator `G(x)` (or `G(x, t, u)` for the branch-trunk layout)
/// returning the state gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNetwork {
    pub variant: Variant,
    pub latent_dim: usize,
    /// V1: branch `B(x, u)`; V2: the whole map; V3: amplitude branch.
    pub branch: Mlp,
    /// V1: trunk `T(t)`; V3: phase branch; absent for V2.
    pub companion: Option<Mlp>,
    pub norm: Normalization,
}

/// Per-tensor gradients in [`OperatorNetwork::tensors_mut`] order.
pub type Gradients = Vec<Vec<f64>>;

impl OperatorNetwork {
    /// All-zero parameters with identity normalization; its output is zero everywhere.
    pub fn zeros(arch: &ArchitectureConfig) -> Result<Self> {
        arch.validate()?;
        let p = arch.latent_dim;
        let (branch, companion) = match arch.variant {
            Variant::BranchTrunk => (
                Mlp::build(3, &arch.hidden, arch.activation_stride, 2 * p),
                Some(Mlp::build(1, &arch.trunk_hidden, arch.trunk_activation_stride, p)),
            ),
            Variant::StateOnly => (Mlp::build(2, &arch.hidden, arch.activation_stride, 2), None),
            Variant::AmplitudePhase => (
                Mlp::build(2, &arch.hidden, arch.activation_stride, p),
                Some(Mlp::build(2, &arch.hidden, arch.activation_stride, 2 * p)),
            ),
        };
        Ok(OperatorNetwork {
            variant: arch.variant,
            latent_dim: p,
            branch,
            companion,
            norm: Normalization::identity(arch.variant.branch_inputs()),
        })
    }

    /// Seeded fan-in uniform initialization with the output layers shrunk by
    /// 0.01, which places the equilibrium eigenvalues near the origin.
    pub fn init(arch: &ArchitectureConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        net.branch.init(&mut rng);
        if let Some(c) = net.companion.as_mut() {
            c.init(&mut rng);
        }
        Ok(net)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().map(|t| t.len()).sum()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.branch.tensors().chain(self.companion.iter().flat_map(|c| c.tensors()))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.branch
            .tensors_mut()
            .chain(self.companion.iter_mut().flat_map(|c| c.tensors_mut()))
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.tensors().map(|t| vec![0.0; t.len()]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().flatten().all(|v| v.is_finite())
    }

    fn check_extras(&self, extras: Option<Extras>) -> Result<Option<Extras>> {
        match (self.variant.takes_forcing(), extras) {
            (true, None) => Err(Error::Domain(
                "branch-trunk operator needs (t, u) inputs".into(),
            )),
            (true, e) => Ok(e),
            (false, _) => Ok(None),
        }
    }

    fn branch_input(&self, state: StateVec, extras: Option<Extras>) -> Vec<f64> {
        let n = &self.norm;
        let mut x = vec![
            (state.q - n.input_shift[0]) / n.input_scale[0],
            (state.qdot - n.input_shift[1]) / n.input_scale[1],
        ];
        if let Some(e) = extras {
            x.push((e.u - n.input_shift[2]) / n.input_scale[2]);
        }
        x
    }

    fn trunk_input(&self, extras: Option<Extras>) -> [f64; 1] {
        [extras.map_or(0.0, |e| e.t) / self.norm.time_scale]
    }

    fn combine(&self, b: &[f64], c: Option<&[f64]>) -> [f64; 2] {
        let p = self.latent_dim;
        match self.variant {
            Variant::StateOnly => [b[0], b[1]],
            Variant::BranchTrunk => {
                let t = c.unwrap();
                let mut g = [0.0; 2];
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi = b[i * p..(i + 1) * p].iter().zip(t).map(|(x, y)| x * y).sum();
                }
                g
            }
            Variant::AmplitudePhase => {
                let phi = c.unwrap();
                let mut g = [0.0; 2];
                for l in 0..p {
                    g[0] += b[l] * phi[2 * l];
                    g[1] += b[l] * phi[2 * l + 1];
                }
                g
            }
        }
    }

    /// Raw (pre output-scale) outputs.
    fn raw(&self, state: StateVec, extras: Option<Extras>) -> [f64; 2] {
        let x = self.branch_input(state, extras);
        let b = self.branch.forward(&x);
        let c = self.companion.as_ref().map(|c| match self.variant {
            Variant::BranchTrunk => c.forward(&self.trunk_input(extras)),
            _ => c.forward(&x),
        });
        self.combine(&b, c.as_deref())
    }

    /// State-gradient estimate. `extras` is required for the branch-trunk
    /// layout and ignored otherwise.
    pub fn forward(&self, state: StateVec, extras: Option<Extras>) -> Result<StateVec> {
        let extras = self.check_extras(extras)?;
        Ok(self.eval(state, extras))
    }

    pub(crate) fn eval(&self, state: StateVec, extras: Option<Extras>) -> StateVec {
        let r = self.raw(state, extras);
        let s = self.norm.output_scale;
        StateVec::new(s[0] * r[0], s[1] * r[1])
    }

    /// Exact state Jacobian by forward-mode accumulation.
    pub fn jacobian(&self, state: StateVec, extras: Option<Extras>) -> Result<JacobianMatrix> {
        let extras = self.check_extras(extras)?;
        Ok(self.eval_with_jacobian(state, extras).1)
    }

    pub(crate) fn eval_with_jacobian(
        &self,
        state: StateVec,
        extras: Option<Extras>,
    ) -> (StateVec, JacobianMatrix) {
        let x = self.branch_input(state, extras);
        let n_in = x.len();
        let mut e0 = vec![0.0; n_in];
        let mut e1 = vec![0.0; n_in];
        e0[0] = 1.0 / self.norm.input_scale[0];
        e1[1] = 1.0 / self.norm.input_scale[1];
        let (b, db) = self.branch.forward_tangent(&x, [&e0, &e1]);
        let p = self.latent_dim;
        let mut g = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        match self.variant {
            Variant::StateOnly => {
                g = [b[0], b[1]];
                jac = [[db[0][0], db[1][0]], [db[0][1], db[1][1]]];
            }
            Variant::BranchTrunk => {
                let t = self.companion.as_ref().unwrap().forward(&self.trunk_input(extras));
                for i in 0..2 {
                    for l in 0..p {
                        let k = i * p + l;
                        g[i] += b[k] * t[l];
                        jac[i][0] += db[0][k] * t[l];
                        jac[i][1] += db[1][k] * t[l];
                    }
                }
            }
            Variant::AmplitudePhase => {
                let (phi, dphi) = self.companion.as_ref().unwrap().forward_tangent(&x, [&e0, &e1]);
                for l in 0..p {
                    for i in 0..2 {
                        let k = 2 * l + i;
                        g[i] += b[l] * phi[k];
                        for j in 0..2 {
                            jac[i][j] += db[j][l] * phi[k] + b[l] * dphi[j][k];
                        }
                    }
                }
            }
        }
        let s = self.norm.output_scale;
        for i in 0..2 {
            jac[i][0] *= s[i];
            jac[i][1] *= s[i];
        }
        (
            StateVec::new(s[0] * g[0], s[1] * g[1]),
            JacobianMatrix(jac),
        )
    }

    /// Accumulate gradients of `sum_i w_i * raw_i` into `grads`, where
    /// `weights = dL/d(raw output)`. Returns the raw output.
    pub(crate) fn backprop(
        &self,
        state: StateVec,
        extras: Option<Extras>,
        loss_grad: impl FnOnce([f64; 2]) -> [f64; 2],
        grads: &mut Gradients,
    ) -> [f64; 2] {
        let x = self.branch_input(state, extras);
        let b_acts = self.branch.forward_cached(&x);
        let n_branch = 2 * self.branch.layers.len();
        let p = self.latent_dim;
        match self.variant {
            Variant::StateOnly => {
                let out = b_acts.last().unwrap();
                let raw = [out[0], out[1]];
                let w = loss_grad(raw);
                self.branch.backward(&b_acts, &w, &mut grads[..n_branch]);
                raw
            }
            Variant::BranchTrunk | Variant::AmplitudePhase => {
                let comp = self.companion.as_ref().unwrap();
                let c_in: Vec<f64> = match self.variant {
                    Variant::BranchTrunk => self.trunk_input(extras).to_vec(),
                    _ => x.clone(),
                };
                let c_acts = comp.forward_cached(&c_in);
                let b = b_acts.last().unwrap();
                let c = c_acts.last().unwrap();
                let raw = self.combine(b, Some(c));
                let w = loss_grad(raw);
                let mut gb = vec![0.0; b.len()];
                let mut gc = vec![0.0; c.len()];
                if self.variant == Variant::BranchTrunk {
                    for i in 0..2 {
                        for l in 0..p {
                            gb[i * p + l] += w[i] * c[l];
                            gc[l] += w[i] * b[i * p + l];
                        }
                    }
                } else {
                    for l in 0..p {
                        for i in 0..2 {
                            gb[l] += w[i] * c[2 * l + i];
                            gc[2 * l + i] += w[i] * b[l];
                        }
                    }
                }
                let (gbr, gcr) = grads.split_at_mut(n_branch);
                self.branch.backward(&b_acts, &gb, gbr);
                comp.backward(&c_acts, &gc, gcr);
                raw
            }
        }
    }

    /// Write the text model file.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# oscnet operator network");
        let _ = writeln!(s, "format_version = {MODEL_FORMAT_VERSION}");
        let _ = writeln!(s, "variant = {}", self.variant.tag());
        let _ = writeln!(s, "latent_dim = {}", self.latent_dim);
        let _ = writeln!(s, "norm.input_shift = {}", vec_text(&self.norm.input_shift));
        let _ = writeln!(s, "norm.input_scale = {}", vec_text(&self.norm.input_scale));
        let _ = writeln!(s, "norm.time_scale = {:e}", self.norm.time_scale);
        let _ = writeln!(s, "norm.output_scale = {}", vec_text(&self.norm.output_scale));
        let mut write_mlp = |name: &str, mlp: &Mlp| {
            let _ = writeln!(s, "{name}.layers = {}", mlp.layers.len());
            for (i, l) in mlp.layers.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{name}.{i}.shape = {} {} {}",
                    l.input,
                    l.output,
                    u8::from(l.activated)
                );
                let _ = writeln!(s, "{name}.{i}.weights = {}", vec_text(&l.weights));
                let _ = writeln!(s, "{name}.{i}.bias = {}", vec_text(&l.bias));
            }
        };
        write_mlp("branch", &self.branch);
        if let Some(c) = &self.companion {
            write_mlp("companion", c);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("line {}", lineno + 1), "expected `key = value`"))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&str> {
            fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::parse(k, "missing field"))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse::<usize>().map_err(|e| Error::parse(k, e.to_string()))
        };
        let version: u32 = get("format_version")?
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::parse("format_version", e.to_string()))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let variant: Variant = get("variant")?.parse()?;
        let latent_dim = num("latent_dim")?;
        let input_shift = parse_vec("norm.input_shift", get("norm.input_shift")?)?;
        let input_scale = parse_vec("norm.input_scale", get("norm.input_scale")?)?;
        if input_shift.len() != variant.branch_inputs() || input_scale.len() != variant.branch_inputs() {
            return Err(Error::parse("norm.input_scale", "wrong number of input features"));
        }
        let time_scale = parse_f64("norm.time_scale", get("norm.time_scale")?)?;
        let out = parse_vec("norm.output_scale", get("norm.output_scale")?)?;
        if out.len() != 2 {
            return Err(Error::parse("norm.output_scale", "expected 2 values"));
        }
        let read_mlp = |name: &str| -> Result<Mlp> {
            let n = num(&format!("{name}.layers"))?;
            let mut layers = Vec::with_capacity(n);
            for i in 0..n {
                let key = format!("{name}.{i}.shape");
                let dims: Vec<usize> = get(&key)?
                    .split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| Error::parse(&key, e.to_string())))
                    .collect::<Result<_>>()?;
                if dims.len() != 3 {
                    return Err(Error::parse(&key, "expected `input output activated`"));
                }
                let wkey = format!("{name}.{i}.weights");
                let bkey = format!("{name}.{i}.bias");
                let weights = parse_vec(&wkey, get(&wkey)?)?;
                let bias = parse_vec(&bkey, get(&bkey)?)?;
                if weights.len() != dims[0] * dims[1] {
                    return Err(Error::parse(&wkey, "length does not match shape"));
                }
                if bias.len() != dims[1] {
                    return Err(Error::parse(&bkey, "length does not match shape"));
                }
                if let Some(prev) = layers.last() {
                    let prev: &Dense = prev;
                    if prev.output != dims[0] {
                        return Err(Error::parse(&key, "layer dimensions do not chain"));
                    }
                }
                layers.push(Dense {
                    input: dims[0],
                    output: dims[1],
                    weights,
                    bias,
                    activated: dims[2] != 0,
                });
            }
            if layers.is_empty() {
                return Err(Error::parse(format!("{name}.layers"), "no layers"));
            }
            Ok(Mlp { layers })
        };
        let branch = read_mlp("branch")?;
        let companion = match variant {
            Variant::StateOnly => None,
            _ => Some(read_mlp("companion")?),
        };
        let net = OperatorNetwork {
            variant,
            latent_dim,
            branch,
            companion,
            norm: Normalization {
                input_shift,
                input_scale,
                time_scale,
                output_scale: [out[0], out[1]],
            },
        };
        net.check_dimensions()?;
        Ok(net)
    }

    fn check_dimensions(&self) -> Result<()> {
        let p = self.latent_dim;
        let want_in = self.variant.branch_inputs();
        let bad = |what: &str| Err(Error::parse(what, "dimensions inconsistent with variant"));
        if self.branch.input_dim() != want_in {
            return bad("branch.0.shape");
        }
        let (b_out, c_in, c_out) = match self.variant {
            Variant::StateOnly => (2, 0, 0),
            Variant::BranchTrunk => (2 * p, 1, p),
            Variant::AmplitudePhase => (p, 2, 2 * p),
        };
        if self.branch.output_dim() != b_out {
            return bad("branch.layers");
        }
        if let Some(c) = &self.companion {
            if c.input_dim() != c_in || c.output_dim() != c_out {
                return bad("companion.layers");
            }
        }
        if !self.is_finite() {
            return Err(Error::parse("weights", "non-finite parameter"));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn vec_text(v: &[f64]) -> String {
    let mut s = format!("{} :", v.len());
    for x in v {
        let _ = write!(s, " {x:e}");
    }
    s
}

fn parse_f64(field: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::parse(field, e.to_string()))
}

fn parse_vec(field: &str, s: &str) -> Result<Vec<f64>> {
    let (n, rest) = s
        .split_once(':')
        .ok_or_else(|| Error::parse(field, "expected `count : values`"))?;
    let n: usize = n.trim().parse().map_err(|e: std::num::ParseIntError| Error::parse(field, e.to_string()))?;
    let v = rest
        .split_whitespace()
        .map(|t| parse_f64(field, t))
        .collect::<Result<Vec<_>>>()?;
    if v.len() != n {
        return Err(Error::parse(field, format!("expected {n} values, found {}", v.len())));
    }
    Ok(v)
}
