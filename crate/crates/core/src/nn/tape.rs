use super::lstm::{lstm_backward, lstm_step, LstmCache};
use super::{policy_heads, sample_categorical, Layout, Params, Real};
use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct TapeStep<F: Real> {
    pub cache: LstmCache<F>,
    pub log_probs: Vec<F>,
    pub value: F,
    pub action: usize,
    pub reward: f64,
}

impl<F: Real> TapeStep<F> {
    pub fn probs(&self) -> Vec<F> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    /// Entropy of the policy at this step.
    pub fn entropy(&self) -> F {
        -self.log_probs.iter().fold(F::zero(), |s, &l| s + l.exp() * l)
    }
}

/// Everything needed for exact BPTT over one episode. The recurrent state
/// starts at zero and is carried from step to step.
#[derive(Clone, Debug, PartialEq)]
pub struct Tape<F: Real> {
    pub layout: Layout,
    pub steps: Vec<TapeStep<F>>,
}

impl<F: Real> Tape<F> {
    pub fn new(layout: Layout) -> Self {
        Tape { layout, steps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Runs one step on input `x`; the action and reward are filled in later.
    pub fn push(&mut self, p: &Params<F>, x: &[F]) -> Result<&TapeStep<F>> {
        let hd = self.layout.hidden_dim;
        let cache = match self.steps.last() {
            Some(s) => lstm_step(p, x, &s.cache.h, &s.cache.c)?,
            None => lstm_step(p, x, &vec![F::zero(); hd], &vec![F::zero(); hd])?,
        };
        let (log_probs, value) = policy_heads(p, &cache.h)?;
        self.steps.push(TapeStep { cache, log_probs, value, action: 0, reward: 0.0 });
        Ok(self.steps.last().expect("just pushed"))
    }

    pub fn set_action(&mut self, action: usize) {
        self.steps.last_mut().expect("set_action before push").action = action;
    }

    pub fn set_reward(&mut self, reward: f64) {
        self.steps.last_mut().expect("set_reward before push").reward = reward;
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.value.f64()).collect()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Hidden state after the last step.
    pub fn hidden(&self) -> Vec<F> {
        self.steps.last().map(|s| s.cache.h.clone()).unwrap_or_else(|| vec![F::zero(); self.layout.hidden_dim])
    }
}

/// Runs the network over fixed inputs, sampling each action from the policy.
pub fn forward_rollout<F: Real>(p: &Params<F>, inputs: &[Vec<F>], rng: &mut Rng) -> Result<Tape<F>> {
    let mut tape = Tape::new(p.layout);
    for x in inputs {
        let a = sample_categorical(&tape.push(p, x)?.probs(), rng);
        tape.set_action(a);
    }
    Ok(tape)
}

/// Re-runs an episode with the given actions and rewards.
pub fn replay<F: Real>(p: &Params<F>, inputs: &[Vec<F>], actions: &[usize], rewards: &[f64]) -> Result<Tape<F>> {
    if inputs.len() != actions.len() || inputs.len() != rewards.len() {
        return Err(Error::invalid("replay needs one action and reward per input"));
    }
    let mut tape = Tape::new(p.layout);
    for ((x, &a), &r) in inputs.iter().zip(actions).zip(rewards) {
        tape.push(p, x)?;
        tape.set_action(a);
        tape.set_reward(r);
    }
    Ok(tape)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub entropy_weight: f64,
    pub baseline_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { gamma: 0.93, entropy_weight: 0.0, baseline_weight: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    /// `-sum log pi(a_t) * A_t`.
    pub policy: f64,
    /// `baseline_weight * sum (R_t - V_t)^2`.
    pub baseline: f64,
    /// `sum H(pi_t)`, before weighting.
    pub entropy: f64,
}

impl std::ops::AddAssign for LossTerms {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.policy += o.policy;
        self.baseline += o.baseline;
        self.entropy += o.entropy;
    }
}

impl LossTerms {
    pub fn scaled(self, s: f64) -> Self {
        LossTerms {
            total: self.total * s,
            policy: self.policy * s,
            baseline: self.baseline * s,
            entropy: self.entropy * s,
        }
    }
}

/// `R_t = sum_{k>=t} gamma^(k-t) r_k`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

fn advantages<F: Real>(tape: &Tape<F>, returns: &[f64]) -> Vec<f64> {
    returns.iter().zip(&tape.steps).map(|(r, s)| r - s.value.f64()).collect()
}

/// Episode loss with advantages `R_t - V_t` taken from the tape.
pub fn a2c_loss<F: Real>(tape: &Tape<F>, cfg: LossConfig) -> LossTerms {
    let returns = discounted_returns(&tape.rewards(), cfg.gamma);
    a2c_loss_fixed(tape, cfg, &advantages(tape, &returns))
}

/// Episode loss with externally fixed advantages (the policy term's
/// stop-gradient made explicit).
pub fn a2c_loss_fixed<F: Real>(tape: &Tape<F>, cfg: LossConfig, adv: &[f64]) -> LossTerms {
    let returns = discounted_returns(&tape.rewards(), cfg.gamma);
    let mut t = LossTerms::default();
    for (k, s) in tape.steps.iter().enumerate() {
        t.policy -= s.log_probs[s.action].f64() * adv[k];
        let err = returns[k] - s.value.f64();
        t.baseline += cfg.baseline_weight * err * err;
        t.entropy += s.entropy().f64();
    }
    t.total = t.policy + t.baseline - cfg.entropy_weight * t.entropy;
    t
}

/// Adds `scale * d(loss)/d(theta)` to `grads` and returns the loss terms.
/// `adv` overrides the tape's own advantages when given.
pub fn backward<F: Real>(
    p: &Params<F>,
    tape: &Tape<F>,
    cfg: LossConfig,
    adv: Option<&[f64]>,
    scale: f64,
    grads: &mut [F],
) -> LossTerms {
    let l = p.layout;
    let hd = l.hidden_dim;
    let returns = discounted_returns(&tape.rewards(), cfg.gamma);
    let own;
    let adv = match adv {
        Some(a) => a,
        None => {
            own = advantages(tape, &returns);
            &own
        }
    };
    let beta = F::of(cfg.entropy_weight);
    let w_pi = p.slice(l.w_pi());
    let w_v = p.slice(l.w_v());
    let mut dh_next = vec![F::zero(); hd];
    let mut dc_next = vec![F::zero(); hd];
    for (t, s) in tape.steps.iter().enumerate().rev() {
        let probs = s.probs();
        let ent = s.entropy();
        let a_hat = F::of(adv[t]);
        let sc = F::of(scale);
        let dlogits: Vec<F> = (0..l.n_actions)
            .map(|k| {
                let onehot = if k == s.action { F::one() } else { F::zero() };
                sc * (a_hat * (probs[k] - onehot) + beta * probs[k] * (s.log_probs[k] + ent))
            })
            .collect();
        let dv = F::of(-2.0 * cfg.baseline_weight * (returns[t] - s.value.f64()) * scale);
        let h = &s.cache.h;
        let mut dh = dh_next.clone();
        for a in 0..l.n_actions {
            let d = dlogits[a];
            grads[l.b_pi().start + a] += d;
            let row = l.w_pi().start + a * hd;
            for k in 0..hd {
                grads[row + k] += d * h[k];
                dh[k] += d * w_pi[a * hd + k];
            }
        }
        grads[l.b_v()] += dv;
        for k in 0..hd {
            grads[l.w_v().start + k] += dv * h[k];
            dh[k] += dv * w_v[k];
        }
        let (dhp, dcp) = lstm_backward(p, &s.cache, &dh, &dc_next, grads);
        dh_next = dhp;
        dc_next = dcp;
    }
    a2c_loss_fixed(tape, cfg, adv)
}
