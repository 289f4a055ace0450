//! Memoryless value-based baselines.

use crate::cbn::GraphPool;
use crate::env::{agent_input, EpisodeState, Phase, TaskConfig};
use crate::error::{Error, Result};
use crate::nn::{discounted_returns, RmsProp};
use crate::rng::{self, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QConfig {
    pub episodes: usize,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub gamma: f64,
    pub hidden: usize,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig { episodes: 100_000, lr: 1e-4, epsilon_start: 1.0, epsilon_end: 0.05, gamma: 0.93, hidden: 64 }
    }
}

impl QConfig {
    fn epsilon(&self, episode: usize) -> f64 {
        let frac = episode as f64 / self.episodes.max(1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac.min(1.0)
    }

    fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.hidden == 0 || !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("bad Q-learning config"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QTrainStats {
    pub episodes: usize,
    /// Mean quiz reward over the final 1000 training episodes.
    pub final_mean_reward: f64,
}

fn argmax_random_ties(xs: &[f64], rng: &mut Rng) -> usize {
    let best = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..xs.len()).filter(|&k| xs[k] == best).collect();
    ties[rng.random_range(0..ties.len())]
}

/// One value per action, shared by every step of every episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTotal {
    pub q: Vec<f64>,
    pub counts: Vec<u64>,
}

impl QTotal {
    pub fn new(n_actions: usize) -> Self {
        QTotal { q: vec![0.0; n_actions], counts: vec![0; n_actions] }
    }

    pub fn greedy(&self, rng: &mut Rng) -> usize {
        argmax_random_ties(&self.q, rng)
    }

    /// Running average of the discounted returns that followed `action`.
    pub fn record(&mut self, action: usize, ret: f64) {
        self.counts[action] += 1;
        self.q[action] += (ret - self.q[action]) / self.counts[action] as f64;
    }
}

pub fn train_q_total(cfg: &QConfig, task: TaskConfig, pool: &GraphPool, seed: u64) -> Result<(QTotal, QTrainStats)> {
    cfg.validate()?;
    let mut env_rng = rng::stream(seed, rng::names::ENV, 0);
    let mut agent_rng = rng::stream(seed, rng::names::AGENT, 0);
    let mut q = QTotal::new(task.n_actions());
    let mut tail = Vec::new();
    for ep in 0..cfg.episodes {
        let eps = cfg.epsilon(ep);
        let (mut st, _) = EpisodeState::reset(pool.sample(&mut env_rng), task, &mut env_rng)?;
        let (mut actions, mut rewards) = (Vec::new(), Vec::new());
        while st.phase() != Phase::Done {
            let a = if agent_rng.random::<f64>() < eps {
                agent_rng.random_range(0..task.n_actions())
            } else {
                q.greedy(&mut agent_rng)
            };
            let r = st.step(a, &mut env_rng)?;
            actions.push(a);
            rewards.push(r.reward);
        }
        for (a, g) in actions.iter().zip(discounted_returns(&rewards, cfg.gamma)) {
            q.record(*a, g);
        }
        if ep + 1000 >= cfg.episodes {
            tail.push(*rewards.last().expect("non-empty episode"));
        }
    }
    let stats = QTrainStats { episodes: cfg.episodes, final_mean_reward: tail.iter().sum::<f64>() / tail.len() as f64 };
    Ok((q, stats))
}

/// Feedforward Q-network over the single-step agent input: one ReLU hidden
/// layer, no memory across steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QEpisode {
    pub input_dim: usize,
    pub hidden: usize,
    pub n_actions: usize,
    /// `[W1 (hidden x input), b1, W2 (actions x hidden), b2]`.
    pub params: Vec<f64>,
}

impl QEpisode {
    pub fn init(input_dim: usize, hidden: usize, n_actions: usize, rng: &mut Rng) -> Self {
        let mut params = Vec::with_capacity(hidden * (input_dim + 1) + n_actions * (hidden + 1));
        let b1 = 1.0 / (input_dim as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        params.extend((0..hidden * input_dim).map(|_| rng.random_range(-b1..b1)));
        params.extend(std::iter::repeat_n(0.0, hidden));
        params.extend((0..n_actions * hidden).map(|_| rng.random_range(-b2..b2)));
        params.extend(std::iter::repeat_n(0.0, n_actions));
        QEpisode { input_dim, hidden, n_actions, params }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input_dim;
        let w2 = b1 + self.hidden;
        (b1, w2, w2 + self.n_actions * self.hidden)
    }

    fn hidden_layer(&self, x: &[f64]) -> Vec<f64> {
        let (b1, _, _) = self.offsets();
        (0..self.hidden)
            .map(|j| {
                let row = &self.params[j * self.input_dim..(j + 1) * self.input_dim];
                let z = self.params[b1 + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                z.max(0.0)
            })
            .collect()
    }

    pub fn q_values(&self, x: &[f64]) -> Vec<f64> {
        self.head(&self.hidden_layer(x))
    }

    fn head(&self, h: &[f64]) -> Vec<f64> {
        let (_, w2, b2) = self.offsets();
        (0..self.n_actions)
            .map(|a| {
                let row = &self.params[w2 + a * self.hidden..w2 + (a + 1) * self.hidden];
                self.params[b2 + a] + row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn greedy(&self, x: &[f64], rng: &mut Rng) -> usize {
        argmax_random_ties(&self.q_values(x), rng)
    }

    /// Gradient of `0.5 * (Q(x, a) - target)^2`.
    fn grad(&self, x: &[f64], a: usize, target: f64, grads: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let h = self.hidden_layer(x);
        let err = self.head(&h)[a] - target;
        grads[b2 + a] += err;
        for j in 0..self.hidden {
            grads[w2 + a * self.hidden + j] += err * h[j];
            if h[j] > 0.0 {
                let dz = err * self.params[w2 + a * self.hidden + j];
                grads[b1 + j] += dz;
                for (g, v) in grads[j * self.input_dim..(j + 1) * self.input_dim].iter_mut().zip(x) {
                    *g += dz * v;
                }
            }
        }
    }
}

/// One-step Q-learning, one update per episode over its transitions.
pub fn train_q_episode(
    cfg: &QConfig,
    task: TaskConfig,
    pool: &GraphPool,
    seed: u64,
) -> Result<(QEpisode, QTrainStats)> {
    cfg.validate()?;
    let mut env_rng = rng::stream(seed, rng::names::ENV, 0);
    let mut agent_rng = rng::stream(seed, rng::names::AGENT, 0);
    let mut init_rng = rng::stream(seed, rng::names::INIT, 0);
    let mut net = QEpisode::init(task.input_dim(), cfg.hidden, task.n_actions(), &mut init_rng);
    let mut opt = RmsProp::<f64>::new(net.params.len());
    let mut tail = Vec::new();
    for ep in 0..cfg.episodes {
        let eps = cfg.epsilon(ep);
        let (mut st, obs) = EpisodeState::reset(pool.sample(&mut env_rng), task, &mut env_rng)?;
        let mut x = agent_input(&task, &obs, None);
        let mut transitions = Vec::new();
        let mut last_reward = 0.0;
        while st.phase() != Phase::Done {
            let a = if agent_rng.random::<f64>() < eps {
                agent_rng.random_range(0..task.n_actions())
            } else {
                net.greedy(&x, &mut agent_rng)
            };
            let r = st.step(a, &mut env_rng)?;
            let next = agent_input(&task, &r.observation, Some((a, r.reward)));
            transitions.push((x, a, r.reward, next.clone(), r.done));
            x = next;
            last_reward = r.reward;
        }
        let mut grads = vec![0.0; net.params.len()];
        for (x, a, r, next, done) in &transitions {
            let target = if *done {
                *r
            } else {
                r + cfg.gamma * net.q_values(next).into_iter().fold(f64::NEG_INFINITY, f64::max)
            };
            net.grad(x, *a, target, &mut grads);
        }
        opt.update(&mut net.params, &grads, cfg.lr)?;
        if ep + 1000 >= cfg.episodes {
            tail.push(last_reward);
        }
    }
    let stats = QTrainStats { episodes: cfg.episodes, final_mean_reward: tail.iter().sum::<f64>() / tail.len() as f64 };
    Ok((net, stats))
}
