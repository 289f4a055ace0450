use crate::agents::{ActMode, LearnedAgent};
use crate::cbn::GraphPool;
use crate::env::{agent_input, EpisodeState, TaskConfig};
use crate::error::{Error, Result};
use crate::nn::{backward, clip_global_norm, sample_categorical, Layout, LossConfig, LossTerms, Params, RmsProp, Tape};
use crate::par::{self, Exec};
use crate::rng::{self, names};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Episodes whose gradients are summed sequentially before the fixed-order
/// reduction across chunks.
const CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    /// Linear from `lr_start` to zero over the run.
    Linear,
    /// `lr_start * rate^(step / every_steps)`.
    Exponential { rate: f64, every_steps: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TaskConfig,
    pub seed: u64,
    pub batch_size: usize,
    /// Budget in environment steps; every episode is exactly `T` steps.
    pub total_env_steps: u64,
    pub hidden: usize,
    pub lr_start: f64,
    pub lr_schedule: LrSchedule,
    pub entropy_start: f64,
    pub baseline_weight: f64,
    pub gamma: f64,
    pub grad_clip: f64,
    /// Training-curve row interval, in episodes.
    pub log_every: u64,
}

impl TrainConfig {
    pub fn desk(task: TaskConfig, seed: u64) -> Self {
        TrainConfig {
            task,
            seed,
            batch_size: 128,
            total_env_steps: 200_000,
            hidden: crate::nn::DEFAULT_HIDDEN,
            lr_start: 3e-4,
            lr_schedule: LrSchedule::Linear,
            entropy_start: 0.25,
            baseline_weight: 0.05,
            gamma: 0.93,
            grad_clip: 50.0,
            log_every: 1000,
        }
    }

    pub fn paper(task: TaskConfig, seed: u64) -> Self {
        TrainConfig { batch_size: 1024, total_env_steps: 10_000_000, lr_start: 9e-6, ..Self::desk(task, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.episodes() == 0 {
            return bad("total_env_steps is shorter than one episode");
        }
        if self.hidden == 0 || self.log_every == 0 {
            return bad("hidden and log_every must be positive");
        }
        if !(self.lr_start >= 0.0) || !(self.entropy_start >= 0.0) || !(self.baseline_weight >= 0.0) {
            return bad("learning rate and loss weights must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        if let LrSchedule::Exponential { rate, every_steps } = self.lr_schedule {
            if !(rate > 0.0 && rate <= 1.0) || every_steps == 0 {
                return bad("exponential schedule needs rate in (0, 1] and every_steps > 0");
            }
        }
        Ok(())
    }

    pub fn episodes(&self) -> u64 {
        self.total_env_steps / self.task.episode_len as u64
    }

    pub fn updates(&self) -> u64 {
        self.episodes().div_ceil(self.batch_size as u64)
    }

    fn progress(&self, step: u64) -> f64 {
        (step as f64 / self.total_env_steps as f64).min(1.0)
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        match self.lr_schedule {
            LrSchedule::Linear => self.lr_start * (1.0 - self.progress(step)),
            LrSchedule::Exponential { rate, every_steps } => {
                self.lr_start * rate.powf(step as f64 / every_steps as f64)
            }
        }
    }

    pub fn entropy_at(&self, step: u64) -> f64 {
        self.entropy_start * (1.0 - self.progress(step))
    }

    pub fn layout(&self) -> Result<Layout> {
        Layout::new(self.task.input_dim(), self.hidden, self.task.n_actions())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub episodes: u64,
    pub updates: u64,
    /// Mean undiscounted episode reward, penalties included.
    pub mean_reward: f64,
    pub mean_quiz_reward: f64,
    pub entropy_weight: f64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_policy: f64,
    pub loss_baseline: f64,
    pub entropy: f64,
}

pub const CURVE_HEADER: &str =
    "step,episodes,updates,mean_reward,mean_quiz_reward,entropy_weight,lr,loss_total,loss_policy,loss_baseline,entropy";

impl CurveRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.episodes,
            self.updates,
            self.mean_reward,
            self.mean_quiz_reward,
            self.entropy_weight,
            self.lr,
            self.loss_total,
            self.loss_policy,
            self.loss_baseline,
            self.entropy
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Window {
    episodes: u64,
    updates: u64,
    reward: f64,
    quiz_reward: f64,
    loss: LossTerms,
}

/// Serialized trainer state. Episode `k` draws from streams keyed by
/// `(seed, k)`, so the seed and the episode counter pin the random state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub params: Params<f32>,
    pub optimizer: RmsProp<f32>,
    pub rng: rng::RngState,
    pub episodes_done: u64,
    pub updates_done: u64,
    window: Window,
    pub curve: Vec<CurveRow>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoints serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Parse { offset: 0, message: format!("checkpoint: {e}") })?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint version {}", c.version)));
        }
        if c.params.data.len() != c.params.layout.len() || c.optimizer.ms.len() != c.params.data.len() {
            return Err(Error::invalid("checkpoint tensors do not match their layout"));
        }
        Ok(c)
    }

    pub fn agent(&self, mode: ActMode) -> LearnedAgent {
        LearnedAgent::new(self.params.clone(), mode)
    }
}

pub struct EpisodeSummary {
    pub reward: f64,
    pub quiz_reward: f64,
}

/// Plays training episode `index` with actions sampled from the policy.
pub fn train_episode(
    params: &Params<f32>,
    task: TaskConfig,
    pool: &GraphPool,
    seed: u64,
    index: u64,
) -> Result<(Tape<f32>, EpisodeSummary)> {
    let mut env_rng = rng::stream(seed, names::ENV, index);
    let mut agent_rng = rng::stream(seed, names::AGENT, index);
    let graph = pool.sample(&mut env_rng);
    let (mut st, mut obs) = EpisodeState::reset(graph, task, &mut env_rng)?;
    let mut tape = Tape::new(params.layout);
    let mut prev = None;
    let mut total = 0.0;
    loop {
        let x: Vec<f32> = agent_input(&task, &obs, prev).iter().map(|&v| v as f32).collect();
        let a = sample_categorical(&tape.push(params, &x)?.probs(), &mut agent_rng);
        tape.set_action(a);
        let r = st.step(a, &mut env_rng)?;
        tape.set_reward(r.reward);
        total += r.reward;
        prev = Some((a, r.reward));
        obs = r.observation;
        if r.done {
            return Ok((tape, EpisodeSummary { reward: total, quiz_reward: r.reward }));
        }
    }
}

/// Synchronous batched advantage actor-critic.
pub struct Trainer {
    state: Checkpoint,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.layout()?;
        let mut init = rng::stream(config.seed, names::INIT, 0);
        let params = Params::init(layout, &mut init);
        Ok(Trainer {
            state: Checkpoint {
                version: CHECKPOINT_VERSION,
                config,
                optimizer: RmsProp::new(layout.len()),
                params,
                rng: rng::RngState::capture(&init),
                episodes_done: 0,
                updates_done: 0,
                window: Window::default(),
                curve: Vec::new(),
            },
        })
    }

    pub fn resume(checkpoint: Checkpoint) -> Result<Self> {
        checkpoint.config.validate()?;
        if checkpoint.config.layout()? != checkpoint.params.layout {
            return Err(Error::invalid("checkpoint layout does not match its task"));
        }
        Ok(Trainer { state: checkpoint })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.state.config
    }

    pub fn params(&self) -> &Params<f32> {
        &self.state.params
    }

    pub fn curve(&self) -> &[CurveRow] {
        &self.state.curve
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.state
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        self.state
    }

    pub fn env_steps(&self) -> u64 {
        self.state.episodes_done * self.state.config.task.episode_len as u64
    }

    pub fn is_done(&self) -> bool {
        self.state.episodes_done >= self.state.config.episodes()
    }

    /// Runs updates until the budget is spent.
    pub fn run(&mut self, pool: &GraphPool, exec: Exec) -> Result<()> {
        while !self.is_done() {
            self.update(pool, exec)?;
        }
        Ok(())
    }

    /// One gradient update on a batch of complete episodes.
    pub fn update(&mut self, pool: &GraphPool, exec: Exec) -> Result<()> {
        let cfg = self.state.config;
        if pool.n_nodes() != cfg.task.n_nodes {
            return Err(Error::invalid("graph pool and task disagree on node count"));
        }
        let start = self.state.episodes_done;
        let batch = (cfg.episodes() - start).min(cfg.batch_size as u64) as usize;
        if batch == 0 {
            return Ok(());
        }
        let step = self.env_steps();
        let loss_cfg =
            LossConfig { gamma: cfg.gamma, entropy_weight: cfg.entropy_at(step), baseline_weight: cfg.baseline_weight };
        let params = &self.state.params;
        let n = params.data.len();
        let scale = 1.0 / batch as f64;
        let chunks = par::map_range(exec, batch.div_ceil(CHUNK), |c| -> Result<_> {
            let mut grads = vec![0.0f32; n];
            let mut terms = LossTerms::default();
            let (mut reward, mut quiz) = (0.0, 0.0);
            for e in c * CHUNK..((c + 1) * CHUNK).min(batch) {
                let (tape, s) = train_episode(params, cfg.task, pool, cfg.seed, start + e as u64)?;
                terms += backward(params, &tape, loss_cfg, None, scale, &mut grads).scaled(scale);
                reward += s.reward;
                quiz += s.quiz_reward;
            }
            Ok((grads, terms, reward, quiz))
        });
        let mut grads = vec![0.0f32; n];
        let mut terms = LossTerms::default();
        let (mut reward, mut quiz) = (0.0, 0.0);
        for chunk in chunks {
            let (g, t, r, q) = chunk?;
            for (a, b) in grads.iter_mut().zip(&g) {
                *a += *b;
            }
            terms += t;
            reward += r;
            quiz += q;
        }
        if !terms.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss at update {} (episode {start}): total {}, policy {}, baseline {}, entropy {}",
                self.state.updates_done, terms.total, terms.policy, terms.baseline, terms.entropy
            )));
        }
        clip_global_norm(&mut grads, cfg.grad_clip);
        self.state.optimizer.update(&mut self.state.params.data, &grads, cfg.lr_at(step))?;
        self.state.episodes_done += batch as u64;
        self.state.updates_done += 1;
        let w = &mut self.state.window;
        w.episodes += batch as u64;
        w.updates += 1;
        w.reward += reward;
        w.quiz_reward += quiz;
        w.loss += terms;
        let crossed = self.state.episodes_done / cfg.log_every > start / cfg.log_every;
        if crossed || self.is_done() {
            self.flush_row();
        }
        Ok(())
    }

    fn flush_row(&mut self) {
        let cfg = self.state.config;
        let step = self.env_steps();
        let w = std::mem::take(&mut self.state.window);
        if w.episodes == 0 {
            return;
        }
        let (e, u) = (w.episodes as f64, w.updates as f64);
        self.state.curve.push(CurveRow {
            step,
            episodes: self.state.episodes_done,
            updates: self.state.updates_done,
            mean_reward: w.reward / e,
            mean_quiz_reward: w.quiz_reward / e,
            entropy_weight: cfg.entropy_at(step),
            lr: cfg.lr_at(step),
            loss_total: w.loss.total / u,
            loss_policy: w.loss.policy / u,
            loss_baseline: w.loss.baseline / u,
            entropy: w.loss.entropy / u,
        });
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        for row in &self.state.curve {
            let _ = writeln!(out, "{}", row.csv_line());
        }
        out
    }

    pub fn agent(&self, mode: ActMode) -> LearnedAgent {
        self.state.agent(mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbn::Mechanism;
    use crate::env::{Condition, Setting};

    fn small(seed: u64) -> TrainConfig {
        let task = TaskConfig::new(Setting::Interventional, Condition::Active, 3);
        TrainConfig {
            batch_size: 16,
            total_env_steps: 3 * 100,
            hidden: 8,
            log_every: 32,
            ..TrainConfig::desk(task, seed)
        }
    }

    fn pool() -> GraphPool {
        GraphPool::All { n_nodes: 3, mechanism: Mechanism::Linear }
    }

    #[test]
    fn schedules_hit_their_endpoints() {
        let c = small(0);
        assert_eq!(c.entropy_at(0), 0.25);
        assert_eq!(c.entropy_at(c.total_env_steps), 0.0);
        assert_eq!(c.lr_at(0), 3e-4);
        assert_eq!(c.lr_at(c.total_env_steps), 0.0);
        let e = TrainConfig { lr_schedule: LrSchedule::Exponential { rate: 0.93, every_steps: 100 }, ..c };
        assert!((e.lr_at(200) - 3e-4 * 0.93 * 0.93).abs() < 1e-18);
        assert_eq!((c.episodes(), c.updates()), (100, 7));
        assert_eq!(TrainConfig::paper(c.task, 0).batch_size, 1024);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(TrainConfig { gamma: 0.0, ..small(0) }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..small(0) }.validate().is_err());
        assert!(TrainConfig { total_env_steps: 2, ..small(0) }.validate().is_err());
    }

    #[test]
    fn training_is_deterministic_across_exec_modes() {
        let mut a = Trainer::new(small(4)).unwrap();
        a.run(&pool(), Exec::Sequential).unwrap();
        let mut b = Trainer::new(small(4)).unwrap();
        b.run(&pool(), Exec::Parallel).unwrap();
        assert_eq!(a.curve_csv(), b.curve_csv());
        assert_eq!(a.params(), b.params());
        let last = a.curve().last().unwrap();
        assert_eq!((last.episodes, last.entropy_weight), (100, 0.0));
        assert_eq!(a.curve().first().unwrap().episodes, 32);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let mut full = Trainer::new(small(5)).unwrap();
        full.run(&pool(), Exec::Sequential).unwrap();
        let mut part = Trainer::new(small(5)).unwrap();
        for _ in 0..3 {
            part.update(&pool(), Exec::Sequential).unwrap();
        }
        let json = part.checkpoint().to_json();
        let restored = Checkpoint::from_json(&json).unwrap();
        assert_eq!(&restored, part.checkpoint());
        let mut resumed = Trainer::resume(restored).unwrap();
        resumed.run(&pool(), Exec::Sequential).unwrap();
        assert_eq!(resumed.checkpoint(), full.checkpoint());
    }
}
