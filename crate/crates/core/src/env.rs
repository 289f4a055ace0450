//! The two-phase intervention/quiz task.
//!
//! An episode on an `N`-node graph lasts `T` steps (0-indexed). Steps
//! `0..T-1` form the information phase; step `T-1` is the quiz. There are
//! `2(N-1)` actions: `k < N-1` acts on observable node `k+1` during the
//! information phase, `N-1+k` picks node `k+1` as the answer in the quiz.
//!
//! The observation emitted by step `T-2` carries the one-hot marker `m` of the
//! node the environment will clamp to the quiz value. The quiz reward is the
//! value of the chosen node in the clamped world. In the counterfactual
//! setting that world replays the noise of the step-`T-2` sample.
//!
//! Every sampling step draws exactly `N` normals before anything else, so two
//! episodes driven by identically seeded streams see the same noise at the
//! same step regardless of setting.

use crate::cbn::CausalGraph;
use crate::error::{Error, Result};
use crate::gaussian::{self, counterfactual_values, Intervention, NoiseVector};
use crate::rng::{normal, Rng};
use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Observational,
    LongObservational,
    Conditional,
    Interventional,
    Counterfactual,
}

impl Setting {
    pub const ALL: [Setting; 5] = [
        Setting::Observational,
        Setting::LongObservational,
        Setting::Conditional,
        Setting::Interventional,
        Setting::Counterfactual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Observational => "observational",
            Setting::LongObservational => "long-observational",
            Setting::Conditional => "conditional",
            Setting::Interventional => "interventional",
            Setting::Counterfactual => "counterfactual",
        }
    }

    /// Information actions are ignored and never penalized.
    pub fn ignores_actions(self) -> bool {
        matches!(self, Setting::Observational | Setting::LongObservational)
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::invalid(format!("unknown setting {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    #[default]
    Active,
    /// Information actions act on a uniformly random observable instead.
    Random,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Active => "active",
            Condition::Random => "random",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(Condition::Active),
            "random" => Ok(Condition::Random),
            _ => Err(Error::invalid(format!("unknown condition {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub setting: Setting,
    pub condition: Condition,
    pub n_nodes: usize,
    pub episode_len: usize,
    pub info_value: f64,
    pub quiz_value: f64,
    pub penalty: f64,
}

impl TaskConfig {
    /// Defaults: `T = N` (`4N` for long-observational), info value +5, quiz
    /// value -5, penalty -10.
    pub fn new(setting: Setting, condition: Condition, n_nodes: usize) -> Self {
        let episode_len = if setting == Setting::LongObservational { 4 * n_nodes } else { n_nodes };
        TaskConfig { setting, condition, n_nodes, episode_len, info_value: 5.0, quiz_value: -5.0, penalty: -10.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::invalid(format!("task needs at least 2 nodes, got {}", self.n_nodes)));
        }
        if self.episode_len < 2 {
            return Err(Error::invalid(format!("episode length must be at least 2, got {}", self.episode_len)));
        }
        if self.info_value == self.quiz_value {
            return Err(Error::invalid("info and quiz values must differ"));
        }
        if ![self.info_value, self.quiz_value, self.penalty].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("task values must be finite"));
        }
        Ok(())
    }

    pub fn observables(&self) -> usize {
        self.n_nodes - 1
    }

    pub fn n_actions(&self) -> usize {
        2 * self.observables()
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.observables()
    }

    /// Length of the agent input `[v, m, onehot(a_prev), r_prev]`.
    pub fn input_dim(&self) -> usize {
        self.obs_dim() + self.n_actions() + 1
    }

    pub fn is_quiz_action(&self, action: usize) -> bool {
        action >= self.observables()
    }

    /// Node selected by a quiz action.
    pub fn quiz_node(&self, action: usize) -> usize {
        action - self.observables() + 1
    }

    pub fn quiz_action(&self, node: usize) -> usize {
        node - 1 + self.observables()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Info,
    Quiz,
    Done,
}

/// `o_t = [v_t, m_t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub v: Vec<f64>,
    pub m: Vec<f64>,
}

impl Observation {
    fn zeros(k: usize) -> Self {
        Observation { v: vec![0.0; k], m: vec![0.0; k] }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.v.iter().chain(&self.m).copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Debug)]
pub struct EpisodeState {
    graph: CausalGraph,
    config: TaskConfig,
    t: usize,
    phase: Phase,
    quiz_target: usize,
    values: Vec<f64>,
    noise: NoiseVector,
    intervention: Option<Intervention>,
    observation: Observation,
    graph_id: u64,
}

fn draw_noise(rng: &mut Rng, n: usize, sigma: f64) -> NoiseVector {
    NoiseVector { eps: (0..n).map(|_| normal(rng, sigma)).collect(), clamped: None }
}

impl EpisodeState {
    /// Starts an episode with a uniformly drawn quiz target.
    pub fn reset(graph: CausalGraph, config: TaskConfig, rng: &mut Rng) -> Result<(Self, Observation)> {
        Self::check(&graph, &config)?;
        let target = rng.random_range(1..config.n_nodes);
        Self::start(graph, config, target, rng)
    }

    /// Starts an episode with a fixed quiz target (exhaustive evaluation).
    pub fn reset_with_target(
        graph: CausalGraph,
        config: TaskConfig,
        quiz_target: usize,
        rng: &mut Rng,
    ) -> Result<(Self, Observation)> {
        Self::check(&graph, &config)?;
        if !(1..config.n_nodes).contains(&quiz_target) {
            return Err(Error::invalid(format!("quiz target {quiz_target} is not an observable node")));
        }
        // Keep the stream aligned with `reset`.
        let _ = rng.random_range(1..config.n_nodes);
        Self::start(graph, config, quiz_target, rng)
    }

    fn check(graph: &CausalGraph, config: &TaskConfig) -> Result<()> {
        config.validate()?;
        if graph.n_nodes() != config.n_nodes {
            return Err(Error::invalid(format!(
                "graph has {} nodes but the task expects {}",
                graph.n_nodes(),
                config.n_nodes
            )));
        }
        if config.setting == Setting::Conditional {
            gaussian::joint(graph)?;
        }
        Ok(())
    }

    fn start(graph: CausalGraph, config: TaskConfig, quiz_target: usize, rng: &mut Rng) -> Result<(Self, Observation)> {
        let noise = draw_noise(rng, config.n_nodes, graph.sigma());
        let values = counterfactual_values(&graph, &noise, None)?;
        let k = config.observables();
        let graph_id = graph.code();
        let mut state = EpisodeState {
            graph,
            config,
            t: 0,
            phase: Phase::Info,
            quiz_target,
            values,
            noise,
            intervention: None,
            observation: Observation::zeros(k),
            graph_id,
        };
        state.observation.v = state.values[1..].to_vec();
        let obs = state.observation.clone();
        Ok((state, obs))
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn quiz_target(&self) -> usize {
        self.quiz_target
    }

    pub fn graph_id(&self) -> u64 {
        self.graph_id
    }

    /// The observation the agent currently sees.
    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    /// Values of the observable nodes in the latest sample.
    pub fn last_values(&self) -> &[f64] {
        &self.values[1..]
    }

    /// All node values of the latest sample, hidden node included.
    pub fn full_values(&self) -> &[f64] {
        &self.values
    }

    /// Noise of the latest sample. A clamped node keeps its discarded draw.
    pub fn last_noise(&self) -> &NoiseVector {
        &self.noise
    }

    /// Intervention that produced the latest sample, if any.
    pub fn last_intervention(&self) -> Option<Intervention> {
        self.intervention
    }

    /// The step whose noise determines the quiz-phase world: `T-2` in the
    /// counterfactual setting, `T-1` otherwise. Drivers that want common
    /// random numbers across settings feed this step from a dedicated stream.
    pub fn quiz_noise_step(&self) -> usize {
        if self.config.setting == Setting::Counterfactual {
            self.config.episode_len - 2
        } else {
            self.config.episode_len - 1
        }
    }

    pub fn quiz_intervention(&self) -> Intervention {
        Intervention::new(self.quiz_target, self.config.quiz_value)
    }

    pub fn step(&mut self, action: usize, rng: &mut Rng) -> Result<StepResult> {
        if self.phase == Phase::Done {
            return Err(Error::Protocol("step called after the episode finished".into()));
        }
        if action >= self.config.n_actions() {
            return Err(Error::invalid(format!("action {action} out of range (0..{})", self.config.n_actions())));
        }
        match self.phase {
            Phase::Info => self.info_step(action, rng),
            Phase::Quiz => self.quiz_step(action, rng),
            Phase::Done => unreachable!(),
        }
    }

    fn info_step(&mut self, action: usize, rng: &mut Rng) -> Result<StepResult> {
        let cfg = self.config;
        let n = cfg.n_nodes;
        let noise = draw_noise(rng, n, self.graph.sigma());
        let mut reward = 0.0;
        let mut iv = None;
        if cfg.setting.ignores_actions() {
            self.sample_with(&noise, None)?;
        } else if cfg.is_quiz_action(action) {
            reward = cfg.penalty;
            self.sample_with(&noise, None)?;
        } else {
            let node = match cfg.condition {
                Condition::Active => action + 1,
                Condition::Random => rng.random_range(1..n),
            };
            let clamp = Intervention::new(node, cfg.info_value);
            if cfg.setting == Setting::Conditional {
                self.sample_conditional(&noise, clamp)?;
            } else {
                self.sample_with(&noise, Some(clamp))?;
                iv = Some(clamp);
            }
        }
        self.intervention = iv;
        self.t += 1;
        self.observation.v = self.values[1..].to_vec();
        if self.t == cfg.episode_len - 1 {
            self.phase = Phase::Quiz;
            self.observation.m = vec![0.0; cfg.observables()];
            self.observation.m[self.quiz_target - 1] = 1.0;
        }
        Ok(StepResult { observation: self.observation.clone(), reward, done: false })
    }

    fn quiz_step(&mut self, action: usize, rng: &mut Rng) -> Result<StepResult> {
        let cfg = self.config;
        self.t += 1;
        self.phase = Phase::Done;
        if !cfg.is_quiz_action(action) {
            self.observation = Observation::zeros(cfg.observables());
            return Ok(StepResult { observation: self.observation.clone(), reward: cfg.penalty, done: true });
        }
        let quiz = self.quiz_intervention();
        if cfg.setting == Setting::Counterfactual {
            self.values = counterfactual_values(&self.graph, &self.noise, Some(quiz))?;
        } else {
            let noise = draw_noise(rng, cfg.n_nodes, self.graph.sigma());
            self.sample_with(&noise, Some(quiz))?;
        }
        self.intervention = Some(quiz);
        self.observation.v = self.values[1..].to_vec();
        let reward = self.values[cfg.quiz_node(action)];
        Ok(StepResult { observation: self.observation.clone(), reward, done: true })
    }

    /// Keeps the full draw, including the discarded entry of a clamped node,
    /// so a counterfactual replay that releases the clamp sees the real noise.
    fn sample_with(&mut self, noise: &NoiseVector, iv: Option<Intervention>) -> Result<()> {
        self.values = counterfactual_values(&self.graph, noise, iv)?;
        self.noise = NoiseVector { eps: noise.eps.clone(), clamped: iv.map(|c| c.node) };
        Ok(())
    }

    /// Exact draw from `p(X_rest | X_k = value)`, using the first `N-1`
    /// entries of `noise` (scaled back to standard normals).
    fn sample_conditional(&mut self, noise: &NoiseVector, clamp: Intervention) -> Result<()> {
        let dist = gaussian::condition(&gaussian::joint(&self.graph)?, clamp.node, clamp.value)?;
        let chol =
            dist.cov.clone().cholesky().ok_or(Error::DegenerateConditioning { node: clamp.node, variance: 0.0 })?;
        let sigma = self.graph.sigma();
        let z = DVector::from_iterator(dist.len(), noise.eps.iter().take(dist.len()).map(|e| e / sigma));
        let draw = &dist.mean + chol.l() * z;
        let mut values = vec![0.0; self.config.n_nodes];
        values[clamp.node] = clamp.value;
        for (k, &node) in dist.node_ids.iter().enumerate() {
            values[node] = draw[k];
        }
        self.noise = gaussian::abduct(&self.graph, &values, None)?;
        self.values = values;
        Ok(())
    }
}

/// Agent input `[v_t, m_t, onehot(a_{t-1}), r_{t-1}]`; the action and reward
/// parts are zero on the first step.
pub fn agent_input(config: &TaskConfig, obs: &Observation, prev: Option<(usize, f64)>) -> Vec<f64> {
    let mut x = Vec::with_capacity(config.input_dim());
    x.extend_from_slice(&obs.v);
    x.extend_from_slice(&obs.m);
    let mut onehot = vec![0.0; config.n_actions()];
    let mut r = 0.0;
    if let Some((a, reward)) = prev {
        onehot[a] = 1.0;
        r = reward;
    }
    x.extend(onehot);
    x.push(r);
    x
}

/// One line of an episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub phase: Phase,
    pub action: usize,
    pub reward: f64,
    pub obs: Vec<f64>,
    pub m: Vec<f64>,
    pub quiz_target: usize,
    pub setting: Setting,
    pub condition: Condition,
    pub graph_id: u64,
}

impl TraceRecord {
    /// Record for the step that took `action` in `phase` and produced `result`.
    pub fn new(state: &EpisodeState, phase: Phase, t: usize, action: usize, result: &StepResult) -> Self {
        TraceRecord {
            t,
            phase,
            action,
            reward: result.reward,
            obs: result.observation.v.clone(),
            m: result.observation.m.clone(),
            quiz_target: state.quiz_target,
            setting: state.config.setting,
            condition: state.config.condition,
            graph_id: state.graph_id,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }
}
