//! Network architectures.
//!
//! Every network here is built from one shared per-asset evaluator: the
//! same convolution-over-time trunk with residual blocks is applied to each
//! of the `m + 1` asset streams independently (cash is a stream of constant
//! ones), so the parameter count does not depend on `m` and permuting the
//! input assets permutes the outputs.
//!
//! Batches are laid out stream-major: a batch of `B` states becomes a
//! `[B·(m+1), F, W]` input where rows `b·(m+1) .. (b+1)·(m+1)` are the cash
//! stream followed by the `m` asset streams of state `b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::WeightVector;
use crate::error::{Error, Result};
use crate::market_data::StateTensor;
use crate::ndcore::{feed, Feed, Graph, NodeId, ParamStore, Tensor};

/// Lower bound added to the softplus standard deviation.
pub const MIN_STD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Convolution channels in the evaluator trunk.
    pub channels: usize,
    /// Temporal kernel width (odd, so residual convolutions keep length).
    pub kernel: usize,
    pub residual_blocks: usize,
    /// Hidden width of the critic head.
    pub critic_hidden: usize,
    /// Initial standard deviation of the Gaussian policy.
    pub init_std: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            kernel: 3,
            residual_blocks: 1,
            critic_hidden: 16,
            init_std: 0.5,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self, window: usize, problems: &mut Vec<String>) {
        if self.channels == 0 {
            problems.push("arch.channels must be positive".into());
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            problems.push(format!("arch.kernel must be odd, got {}", self.kernel));
        }
        if self.kernel > window {
            problems.push(format!("arch.kernel {} exceeds the window {window}", self.kernel));
        }
        if self.critic_hidden == 0 {
            problems.push("arch.critic_hidden must be positive".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            problems.push("arch.init_std must be positive".into());
        }
    }

    fn checked(&self, window: usize) -> Result<()> {
        let mut problems = Vec::new();
        self.validate(window, &mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Length of the time axis after the first (unpadded) convolution.
    fn trunk_len(&self, window: usize) -> usize {
        window + 1 - self.kernel
    }

    fn trunk_width(&self, window: usize) -> usize {
        self.channels * self.trunk_len(window)
    }
}

/// Input geometry shared by a network and the states fed to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputShape {
    pub features: usize,
    pub window: usize,
}

impl InputShape {
    fn check(&self, s: &StateTensor) -> Result<()> {
        if s.features().len() != self.features || s.window() != self.window {
            return Err(Error::Shape {
                node: "input `streams`".into(),
                detail: format!(
                    "state has {} features x {} lags, network expects {} x {}",
                    s.features().len(),
                    s.window(),
                    self.features,
                    self.window
                ),
            });
        }
        Ok(())
    }
}

/// Stacks states into the stream-major `[B·(m+1), F, W]` layout.
pub fn stream_tensor(states: &[&StateTensor], shape: InputShape) -> Result<(Tensor, usize)> {
    let first = states
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty state batch".into()))?;
    let m = first.num_assets();
    let block = shape.features * shape.window;
    let mut data = Vec::with_capacity(states.len() * (m + 1) * block);
    for s in states {
        shape.check(s)?;
        if s.num_assets() != m {
            return Err(Error::InvalidArgument("states in a batch differ in asset count".into()));
        }
        data.extend(std::iter::repeat_n(1.0, block));
        data.extend_from_slice(s.values());
    }
    let t = Tensor::new(vec![states.len() * (m + 1), shape.features, shape.window], data)?;
    Ok((t, m))
}

fn uniform_init<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

fn init_trunk<R: Rng + ?Sized>(params: &mut ParamStore, prefix: &str, arch: &ArchConfig, input: InputShape, rng: &mut R) {
    let (c, k) = (arch.channels, arch.kernel);
    params.insert(format!("{prefix}conv_in/w"), uniform_init(&[c, input.features, k], input.features * k, rng));
    params.insert(format!("{prefix}conv_in/b"), Tensor::zeros(&[c]));
    for j in 0..arch.residual_blocks {
        for half in ["a", "b"] {
            params.insert(format!("{prefix}res{j}{half}/w"), uniform_init(&[c, c, k], c * k, rng));
            params.insert(format!("{prefix}res{j}{half}/b"), Tensor::zeros(&[c]));
        }
    }
}

/// Conv → relu → residual blocks → flatten; returns `[N, C·L']`.
fn build_trunk(g: &mut Graph, prefix: &str, x: NodeId, arch: &ArchConfig, input: InputShape, n: usize) -> NodeId {
    let w = g.param(format!("{prefix}conv_in/w"));
    let b = g.param(format!("{prefix}conv_in/b"));
    let h = g.conv1d(x, w, b, 0);
    g.label(h, format!("{prefix}conv_in"));
    let mut h = g.relu(h);
    let pad = arch.kernel / 2;
    for j in 0..arch.residual_blocks {
        let wa = g.param(format!("{prefix}res{j}a/w"));
        let ba = g.param(format!("{prefix}res{j}a/b"));
        let wb = g.param(format!("{prefix}res{j}b/w"));
        let bb = g.param(format!("{prefix}res{j}b/b"));
        let inner = g.conv1d(h, wa, ba, pad);
        let inner = g.relu(inner);
        let inner = g.conv1d(inner, wb, bb, pad);
        let sum = g.add(h, inner);
        g.label(sum, format!("{prefix}res{j} shortcut"));
        h = g.relu(sum);
    }
    g.reshape(h, vec![n, arch.trunk_width(input.window)])
}

fn head(g: &mut Graph, name: &str, x: NodeId) -> NodeId {
    let w = g.param(format!("{name}/w"));
    let b = g.param(format!("{name}/b"));
    let y = g.dense(x, w, b);
    g.label(y, name.to_string())
}

/// Deterministic actor: shared evaluator scores, cash bias, softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct IIEActor {
    pub arch: ArchConfig,
    pub input: InputShape,
    pub params: ParamStore,
}

impl IIEActor {
    /// Random hidden layers, zero score layer: the untrained actor is uniform.
    pub fn new<R: Rng + ?Sized>(arch: ArchConfig, input: InputShape, rng: &mut R) -> Result<Self> {
        arch.checked(input.window)?;
        let mut params = ParamStore::new();
        init_trunk(&mut params, "", &arch, input, rng);
        params.insert("score/w", Tensor::zeros(&[1, arch.trunk_width(input.window)]));
        params.insert("score/b", Tensor::zeros(&[1]));
        params.insert("cash_bias", Tensor::zeros(&[1]));
        Ok(Self { arch, input, params })
    }

    /// Graph over a batch of `batch` states with `m` assets.
    ///
    /// Input `streams`; outputs `scores` and `weights`, both `[batch, m+1]`.
    pub fn graph(&self, batch: usize, m: usize) -> Graph {
        let mut g = Graph::new();
        let (scores, weights) = self.build(&mut g, batch, m);
        g.output("scores", scores);
        g.output("weights", weights);
        g
    }

    /// Appends the actor to `g`, returning `(scores, weights)`.
    pub fn build(&self, g: &mut Graph, batch: usize, m: usize) -> (NodeId, NodeId) {
        let n = batch * (m + 1);
        let x = g.input("streams");
        let h = build_trunk(g, "", x, &self.arch, self.input, n);
        let s = head(g, "score", h);
        let s = g.reshape(s, vec![batch, m + 1]);
        let bias = g.param("cash_bias");
        let scores = g.offset_column(s, bias, 0);
        let weights = g.softmax(scores);
        (scores, weights)
    }

    /// Pre-softmax scores and weights for a batch of states.
    pub fn forward_batch(&self, states: &[&StateTensor]) -> Result<(Vec<Vec<f64>>, Vec<WeightVector>)> {
        let (x, m) = stream_tensor(states, self.input)?;
        let mut g = self.graph(states.len(), m);
        let out = g.forward(&self.params, &feed([("streams", x)]))?;
        let scores = out["scores"].data().chunks(m + 1).map(<[f64]>::to_vec).collect();
        let weights = out["weights"]
            .data()
            .chunks(m + 1)
            .map(|w| WeightVector::new(w.to_vec()))
            .collect::<Result<_>>()?;
        Ok((scores, weights))
    }

    pub fn actor_weights(&self, s: &StateTensor) -> Result<WeightVector> {
        let (_, mut w) = self.forward_batch(&[s])?;
        Ok(w.remove(0))
    }
}

/// `Q(s, a)`: the shared trunk per stream gives features `φ_j`; the hidden
/// layer sees `[φ_j, a_j φ_j, a_j]`, so the marginal value of weight on a
/// stream depends on that stream's features. One value per stream, summed.
#[derive(Clone, Debug, PartialEq)]
pub struct QCritic {
    pub arch: ArchConfig,
    pub input: InputShape,
    pub params: ParamStore,
}

impl QCritic {
    pub fn new<R: Rng + ?Sized>(arch: ArchConfig, input: InputShape, rng: &mut R) -> Result<Self> {
        arch.checked(input.window)?;
        let mut params = ParamStore::new();
        init_trunk(&mut params, "", &arch, input, rng);
        let width = 2 * arch.trunk_width(input.window) + 1;
        params.insert("hidden/w", uniform_init(&[arch.critic_hidden, width], width, rng));
        params.insert("hidden/b", Tensor::zeros(&[arch.critic_hidden]));
        params.insert("q/w", Tensor::zeros(&[1, arch.critic_hidden]));
        params.insert("q/b", Tensor::zeros(&[1]));
        Ok(Self { arch, input, params })
    }

    /// Inputs `streams` and `actions` (`[batch, m+1]`) plus the constant
    /// broadcast inputs from [`feed`](Self::feed); output `q` (`[batch]`).
    pub fn graph(&self, batch: usize, m: usize) -> Graph {
        let mut g = Graph::new();
        let q = self.build(&mut g, batch, m);
        g.output("q", q);
        g
    }

    pub fn build(&self, g: &mut Graph, batch: usize, m: usize) -> NodeId {
        let n = batch * (m + 1);
        let x = g.input("streams");
        let a = g.input("actions");
        let h = build_trunk(g, "", x, &self.arch, self.input, n);
        let a_col = g.reshape(a, vec![n, 1]);
        let ones = g.input("ones");
        let zeros = g.input("zeros");
        let a_wide = g.dense(a_col, ones, zeros);
        let scaled = g.mul(h, a_wide);
        let joined = g.concat(h, scaled);
        let joined = g.concat(joined, a_col);
        let hidden = head(g, "hidden", joined);
        let hidden = g.relu(hidden);
        let q = head(g, "q", hidden);
        let q = g.reshape(q, vec![batch, m + 1]);
        g.sum_last(q)
    }

    pub fn feed(&self, states: &[&StateTensor], actions: &[&WeightVector]) -> Result<(Feed, usize)> {
        let (x, m) = stream_tensor(states, self.input)?;
        if actions.len() != states.len() || actions.iter().any(|a| a.num_assets() != m) {
            return Err(Error::Shape {
                node: "input `actions`".into(),
                detail: format!("{} actions for {} states with {m} assets", actions.len(), states.len()),
            });
        }
        let a: Vec<f64> = actions.iter().flat_map(|a| a.as_slice().iter().copied()).collect();
        let a = Tensor::new(vec![states.len(), m + 1], a)?;
        Ok((self.feed_tensors(x, a), m))
    }

    /// Feed from an already stacked `streams` tensor and `[batch, m+1]` actions.
    pub fn feed_tensors(&self, streams: Tensor, actions: Tensor) -> Feed {
        let width = self.arch.trunk_width(self.input.window);
        feed([
            ("streams", streams),
            ("actions", actions),
            ("ones", Tensor::full(&[width, 1], 1.0)),
            ("zeros", Tensor::zeros(&[width])),
        ])
    }

    pub fn q_batch(&self, states: &[&StateTensor], actions: &[&WeightVector]) -> Result<Vec<f64>> {
        let (f, m) = self.feed(states, actions)?;
        let mut g = self.graph(states.len(), m);
        Ok(g.forward(&self.params, &f)?["q"].data().to_vec())
    }

    pub fn q_value(&self, s: &StateTensor, a: &WeightVector) -> Result<f64> {
        Ok(self.q_batch(&[s], &[a])?[0])
    }

    /// `∂Q/∂a` at `(s, a)`.
    pub fn action_gradient(&self, s: &StateTensor, a: &WeightVector) -> Result<Vec<f64>> {
        let (f, m) = self.feed(&[s], &[a])?;
        let mut g = self.graph(1, m);
        g.forward(&self.params, &f)?;
        let grads = g.backward("q", &Tensor::scalar(1.0))?;
        Ok(grads.inputs["actions"].data().to_vec())
    }
}

/// Node ids of the Gaussian policy heads inside a graph.
#[derive(Clone, Copy, Debug)]
pub struct GaussianHeads {
    /// `[batch, m+1]`
    pub mean: NodeId,
    /// `[batch, m+1]`, strictly positive
    pub std: NodeId,
    /// `[batch]`
    pub value: NodeId,
}

/// Diagonal Gaussian actor with a separate state-value critic.
///
/// Actor parameters are prefixed `actor/`, critic parameters `critic/`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub arch: ArchConfig,
    pub input: InputShape,
    pub params: ParamStore,
}

pub const ACTOR_PREFIX: &str = "actor/";
pub const CRITIC_PREFIX: &str = "critic/";

impl GaussianPolicy {
    /// Zero mean and value heads; the std head starts at `arch.init_std`.
    pub fn new<R: Rng + ?Sized>(arch: ArchConfig, input: InputShape, rng: &mut R) -> Result<Self> {
        arch.checked(input.window)?;
        let mut params = ParamStore::new();
        let width = arch.trunk_width(input.window);
        init_trunk(&mut params, ACTOR_PREFIX, &arch, input, rng);
        params.insert("actor/mean/w", Tensor::zeros(&[1, width]));
        params.insert("actor/mean/b", Tensor::zeros(&[1]));
        params.insert("actor/std/w", Tensor::zeros(&[1, width]));
        // inverse softplus of the initial std
        let s = arch.init_std - MIN_STD;
        params.insert("actor/std/b", Tensor::scalar(s + (-(-s).exp_m1()).ln()));
        init_trunk(&mut params, CRITIC_PREFIX, &arch, input, rng);
        params.insert("critic/value/w", Tensor::zeros(&[1, width]));
        params.insert("critic/value/b", Tensor::zeros(&[1]));
        Ok(Self { arch, input, params })
    }

    pub fn build(&self, g: &mut Graph, batch: usize, m: usize) -> GaussianHeads {
        let n = batch * (m + 1);
        let x = g.input("streams");
        let h = build_trunk(g, ACTOR_PREFIX, x, &self.arch, self.input, n);
        let mean = head(g, "actor/mean", h);
        let mean = g.reshape(mean, vec![batch, m + 1]);
        let raw = head(g, "actor/std", h);
        let std = g.softplus(raw);
        let std = g.shift(std, MIN_STD);
        let std = g.reshape(std, vec![batch, m + 1]);
        let hv = build_trunk(g, CRITIC_PREFIX, x, &self.arch, self.input, n);
        let v = head(g, "critic/value", hv);
        let v = g.reshape(v, vec![batch, m + 1]);
        let value = g.sum_last(v);
        GaussianHeads { mean, std, value }
    }

    /// Means, standard deviations, and values for a batch of states.
    pub fn evaluate(&self, states: &[&StateTensor]) -> Result<GaussianOutput> {
        let (x, m) = stream_tensor(states, self.input)?;
        let mut g = Graph::new();
        let heads = self.build(&mut g, states.len(), m);
        g.output("mean", heads.mean);
        g.output("std", heads.std);
        g.output("value", heads.value);
        let out = g.forward(&self.params, &feed([("streams", x)]))?;
        let rows = |t: &Tensor| t.data().chunks(m + 1).map(<[f64]>::to_vec).collect();
        Ok(GaussianOutput {
            mean: rows(&out["mean"]),
            std: rows(&out["std"]),
            value: out["value"].data().to_vec(),
        })
    }

    /// Samples a raw action from `N(μ(s), diag σ(s)²)` with its log-density.
    /// The portfolio actually executed is `softmax(action)`.
    pub fn gaussian_act<R: Rng + ?Sized>(&self, s: &StateTensor, rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let out = self.evaluate(&[s])?;
        let (mean, std) = (&out.mean[0], &out.std[0]);
        let action: Vec<f64> = mean
            .iter()
            .zip(std)
            .map(|(mu, sd)| {
                let xi: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                mu + sd * xi
            })
            .collect();
        let lp = gaussian_log_prob(&action, mean, std);
        Ok((action, lp))
    }

    /// Deterministic portfolio: softmax of the mean action.
    pub fn mean_weights(&self, s: &StateTensor) -> Result<WeightVector> {
        let out = self.evaluate(&[s])?;
        WeightVector::softmax(&out.mean[0])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianOutput {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub value: Vec<f64>,
}

/// `Σ_i [−(a_i − μ_i)²/(2σ_i²) − ln σ_i − ½ ln 2π]`.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    action
        .iter()
        .zip(mean)
        .zip(std)
        .map(|((a, mu), sd)| {
            let z = (a - mu) / sd;
            -0.5 * z * z - sd.ln() - half_ln_2pi
        })
        .sum()
}
