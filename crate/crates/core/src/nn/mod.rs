//! Recurrent actor-critic kernel: LSTM cell, linear policy/value heads,
//! exact backpropagation through time and RMSProp.
//!
//! All parameters live in one flat vector; [`Layout`] gives the offsets.
//! Matrices are row-major. Gate blocks are ordered input, forget, cell,
//! output.

mod lstm;
mod optim;
mod tape;

pub use lstm::{lstm_backward, lstm_step, LstmCache};
pub use optim::{clip_global_norm, global_norm, RmsProp};
pub use tape::{
    a2c_loss, a2c_loss_fixed, backward, discounted_returns, forward_rollout, replay, LossConfig, LossTerms, Tape,
    TapeStep,
};

use crate::error::{Error, Result};
use crate::rng::Rng;
use num_traits::Float;
use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, Range};

pub const DEFAULT_HIDDEN: usize = 192;
pub const FORGET_BIAS: f64 = 1.0;

/// Floating-point type the kernel runs in.
pub trait Real:
    Float + AddAssign + Sum + Debug + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_actions: usize,
}

impl Layout {
    pub fn new(input_dim: usize, hidden_dim: usize, n_actions: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || n_actions < 2 {
            return Err(Error::invalid(format!(
                "bad network shape: input {input_dim}, hidden {hidden_dim}, actions {n_actions}"
            )));
        }
        Ok(Layout { input_dim, hidden_dim, n_actions })
    }

    pub fn gates(&self) -> usize {
        4 * self.hidden_dim
    }

    pub fn wx(&self) -> Range<usize> {
        0..self.gates() * self.input_dim
    }

    pub fn wh(&self) -> Range<usize> {
        let s = self.wx().end;
        s..s + self.gates() * self.hidden_dim
    }

    pub fn b(&self) -> Range<usize> {
        let s = self.wh().end;
        s..s + self.gates()
    }

    pub fn w_pi(&self) -> Range<usize> {
        let s = self.b().end;
        s..s + self.n_actions * self.hidden_dim
    }

    pub fn b_pi(&self) -> Range<usize> {
        let s = self.w_pi().end;
        s..s + self.n_actions
    }

    pub fn w_v(&self) -> Range<usize> {
        let s = self.b_pi().end;
        s..s + self.hidden_dim
    }

    pub fn b_v(&self) -> usize {
        self.w_v().end
    }

    pub fn len(&self) -> usize {
        self.b_v() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Params<F: Real> {
    pub layout: Layout,
    pub data: Vec<F>,
}

impl<F: Real> Params<F> {
    pub fn zeros(layout: Layout) -> Self {
        Params { layout, data: vec![F::zero(); layout.len()] }
    }

    /// Uniform in `±1/sqrt(fan_in)` for every matrix (the gate fan-in is
    /// `I + H`), zero biases except the forget gate.
    pub fn init(layout: Layout, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(layout);
        let gate_bound = 1.0 / ((layout.input_dim + layout.hidden_dim) as f64).sqrt();
        let head_bound = 1.0 / (layout.hidden_dim as f64).sqrt();
        let mut fill = |range: Range<usize>, bound: f64, data: &mut [F]| {
            for v in &mut data[range] {
                *v = F::of(rng.random_range(-bound..bound));
            }
        };
        fill(layout.wx(), gate_bound, &mut p.data);
        fill(layout.wh(), gate_bound, &mut p.data);
        fill(layout.w_pi(), head_bound, &mut p.data);
        fill(layout.w_v(), head_bound, &mut p.data);
        p.set_forget_bias(F::of(FORGET_BIAS));
        p
    }

    pub fn set_forget_bias(&mut self, value: F) {
        let h = self.layout.hidden_dim;
        let b = self.layout.b().start;
        for v in &mut self.data[b + h..b + 2 * h] {
            *v = value;
        }
    }

    pub fn cast<G: Real>(&self) -> Params<G> {
        Params { layout: self.layout, data: self.data.iter().map(|v| G::of(v.f64())).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn slice(&self, r: Range<usize>) -> &[F] {
        &self.data[r]
    }
}

/// Log-probabilities and value estimate read off a hidden state.
pub fn policy_heads<F: Real>(p: &Params<F>, h: &[F]) -> Result<(Vec<F>, F)> {
    let l = p.layout;
    let hd = l.hidden_dim;
    let w_pi = p.slice(l.w_pi());
    let b_pi = p.slice(l.b_pi());
    let logits: Vec<F> = (0..l.n_actions).map(|a| b_pi[a] + dot(&w_pi[a * hd..(a + 1) * hd], h)).collect();
    let value = p.data[l.b_v()] + dot(p.slice(l.w_v()), h);
    if !value.is_finite() || logits.iter().any(|z| z.is_nan()) {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok((log_softmax(&logits), value))
}

/// Numerically stable log-softmax.
pub fn log_softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<F>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Samples an index from `probs` (summing to one) with one uniform draw.
pub fn sample_categorical<F: Real>(probs: &[F], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in probs.iter().enumerate() {
        let p = p.f64();
        if p > 0.0 {
            last = k;
        }
        acc += p;
        if u < acc {
            return k;
        }
    }
    last
}

pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |s, (&x, &y)| s + x * y)
}
