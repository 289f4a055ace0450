//! The learned recurrent agent and the baselines it is compared against.
//!
//! Oracle baselines see the true graph. During the information phase they
//! act uniformly at random; in the quiz they pick the observable (other than
//! the quiz target) with the largest predicted value, ties to the lowest
//! index.

mod expected;
mod qlearn;

pub use expected::{counterfactual_gain, expected_quiz_reward, quiz_means};
pub use qlearn::{train_q_episode, train_q_total, QConfig, QEpisode, QTotal, QTrainStats};

use crate::cbn::CausalGraph;
use crate::env::{EpisodeState, Phase, Setting};
use crate::error::{Error, Result};
use crate::gaussian::{self, counterfactual_values, posterior_noise, Intervention};
use crate::nn::{lstm_step, policy_heads, sample_categorical, Params};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Learned,
    OptimalAssociative,
    OptimalCauseEffect,
    OptimalCounterfactual,
    Random,
    QTotal,
    QEpisode,
}

impl AgentKind {
    pub const ALL: [AgentKind; 7] = [
        AgentKind::Learned,
        AgentKind::OptimalAssociative,
        AgentKind::OptimalCauseEffect,
        AgentKind::OptimalCounterfactual,
        AgentKind::Random,
        AgentKind::QTotal,
        AgentKind::QEpisode,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Learned => "learned",
            AgentKind::OptimalAssociative => "optimal-associative",
            AgentKind::OptimalCauseEffect => "optimal-cause-effect",
            AgentKind::OptimalCounterfactual => "optimal-counterfactual",
            AgentKind::Random => "random",
            AgentKind::QTotal => "q-total",
            AgentKind::QEpisode => "q-episode",
        }
    }

    pub fn is_oracle(self) -> bool {
        matches!(self, AgentKind::OptimalAssociative | AgentKind::OptimalCauseEffect | AgentKind::OptimalCounterfactual)
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::invalid(format!("unknown agent {s:?}")))
    }
}

/// How the learned agent turns its policy into an action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    #[default]
    Sample,
    /// Argmax, exact ties broken uniformly at random.
    Greedy,
}

/// Recurrent state threaded through an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCarry {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub log_probs: Vec<f32>,
    pub value: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnedAgent {
    pub params: Params<f32>,
    pub mode: ActMode,
}

impl LearnedAgent {
    pub fn new(params: Params<f32>, mode: ActMode) -> Self {
        LearnedAgent { params, mode }
    }

    pub fn carry(&self) -> LstmCarry {
        let h = self.params.layout.hidden_dim;
        LstmCarry { h: vec![0.0; h], c: vec![0.0; h] }
    }

    pub fn act(&self, carry: &mut LstmCarry, input: &[f32], rng: &mut Rng) -> Result<Decision> {
        let cache = lstm_step(&self.params, input, &carry.h, &carry.c)?;
        let (log_probs, value) = policy_heads(&self.params, &cache.h)?;
        carry.h = cache.h;
        carry.c = cache.c;
        let action = match self.mode {
            ActMode::Sample => {
                let probs: Vec<f32> = log_probs.iter().map(|l| l.exp()).collect();
                sample_categorical(&probs, rng)
            }
            ActMode::Greedy => argmax_random_ties(&log_probs, rng),
        };
        Ok(Decision { action, log_probs, value })
    }
}

fn argmax_random_ties(xs: &[f32], rng: &mut Rng) -> usize {
    let best = xs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let ties: Vec<usize> = (0..xs.len()).filter(|&k| xs[k] == best).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// Largest of `values[i]` over observables `i != target`, lowest index on
/// ties. `values` is indexed by node.
pub fn argmax_excluding(values: &[f64], target: usize) -> usize {
    let mut best = None;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if i == target {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.expect("at least two observables").0
}

/// Argmax of `E[X_i | X_target = value]` under the unsurgered joint.
pub fn associative_choice(g: &CausalGraph, target: usize, value: f64) -> Result<usize> {
    let post = gaussian::condition(&gaussian::joint(g)?, target, value)?;
    let mut means = vec![f64::NEG_INFINITY; g.n_nodes()];
    for (k, &node) in post.node_ids.iter().enumerate() {
        means[node] = post.mean[k];
    }
    Ok(argmax_excluding(&means, target))
}

/// Argmax of the interventional mean under `do(X_target = value)`.
pub fn cause_effect_choice(g: &CausalGraph, target: usize, value: f64) -> Result<usize> {
    Ok(argmax_excluding(&gaussian::interventional_means(g, Intervention::new(target, value))?, target))
}

/// Abducts the noise from the penultimate observation and picks the argmax of
/// the expected counterfactual values under `do(X_target = value)`.
pub fn counterfactual_choice(
    g: &CausalGraph,
    target: usize,
    value: f64,
    observed: &[f64],
    factual: Option<Intervention>,
) -> Result<usize> {
    let post = posterior_noise(g, observed, factual)?;
    let mut eps = post.mean;
    eps.clamped = None;
    let cf = counterfactual_values(g, &eps, Some(Intervention::new(target, value)))?;
    Ok(argmax_excluding(&cf, target))
}

#[derive(Clone, Debug)]
pub enum Agent {
    Learned(LearnedAgent),
    OptimalAssociative,
    OptimalCauseEffect,
    OptimalCounterfactual,
    Random,
    QTotal(QTotal),
    QEpisode(QEpisode),
}

/// Per-episode agent state.
#[derive(Clone, Debug, PartialEq)]
pub enum Carry {
    Stateless,
    Lstm(LstmCarry),
}

impl Agent {
    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Learned(_) => AgentKind::Learned,
            Agent::OptimalAssociative => AgentKind::OptimalAssociative,
            Agent::OptimalCauseEffect => AgentKind::OptimalCauseEffect,
            Agent::OptimalCounterfactual => AgentKind::OptimalCounterfactual,
            Agent::Random => AgentKind::Random,
            Agent::QTotal(_) => AgentKind::QTotal,
            Agent::QEpisode(_) => AgentKind::QEpisode,
        }
    }

    /// Parameter-free agents by kind; trained agents must be built directly.
    pub fn baseline(kind: AgentKind) -> Result<Self> {
        Ok(match kind {
            AgentKind::OptimalAssociative => Agent::OptimalAssociative,
            AgentKind::OptimalCauseEffect => Agent::OptimalCauseEffect,
            AgentKind::OptimalCounterfactual => Agent::OptimalCounterfactual,
            AgentKind::Random => Agent::Random,
            k => return Err(Error::invalid(format!("agent {} needs trained parameters", k.name()))),
        })
    }

    pub fn carry(&self) -> Carry {
        match self {
            Agent::Learned(a) => Carry::Lstm(a.carry()),
            _ => Carry::Stateless,
        }
    }

    /// Chooses the next action. `input` is the agent input vector
    /// `[v, m, onehot(a_prev), r_prev]`.
    pub fn act(&self, carry: &mut Carry, state: &EpisodeState, input: &[f64], rng: &mut Rng) -> Result<usize> {
        let cfg = state.config();
        let k = cfg.observables();
        let quiz = state.phase() == Phase::Quiz;
        match self {
            Agent::Learned(a) => {
                let Carry::Lstm(c) = carry else {
                    return Err(Error::Protocol("learned agent needs an LSTM carry".into()));
                };
                let x: Vec<f32> = input.iter().map(|&v| v as f32).collect();
                Ok(a.act(c, &x, rng)?.action)
            }
            Agent::Random => Ok(rng.random_range(0..k) + if quiz { k } else { 0 }),
            Agent::QTotal(q) => Ok(q.greedy(rng)),
            Agent::QEpisode(q) => Ok(q.greedy(input, rng)),
            _ if !quiz => Ok(rng.random_range(0..k)),
            Agent::OptimalAssociative => {
                Ok(cfg.quiz_action(associative_choice(state.graph(), state.quiz_target(), cfg.quiz_value)?))
            }
            Agent::OptimalCauseEffect => {
                Ok(cfg.quiz_action(cause_effect_choice(state.graph(), state.quiz_target(), cfg.quiz_value)?))
            }
            Agent::OptimalCounterfactual => {
                if cfg.setting != Setting::Counterfactual {
                    return Err(Error::invalid("the counterfactual oracle needs the counterfactual setting"));
                }
                let node = counterfactual_choice(
                    state.graph(),
                    state.quiz_target(),
                    cfg.quiz_value,
                    state.last_values(),
                    state.last_intervention(),
                )?;
                Ok(cfg.quiz_action(node))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbn::{sample_graph, Mechanism};
    use crate::env::{agent_input, Condition, TaskConfig};
    use crate::gaussian::sample;
    use crate::nn::Layout;
    use crate::rng::stream;

    fn g(n: usize, edges: &[(usize, usize, i8)]) -> CausalGraph {
        CausalGraph::from_edges(n, edges, Mechanism::Linear).unwrap()
    }

    #[test]
    fn kinds_round_trip() {
        for k in AgentKind::ALL {
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), k);
        }
        assert!(Agent::baseline(AgentKind::Learned).is_err());
    }

    #[test]
    fn associative_uses_backward_inference() {
        // Observable chain 1 -> 2 -> 3, quiz clamps 3 to -5: conditioning drags
        // both ancestors down, intervening leaves them at zero.
        let chain = g(4, &[(1, 2, 1), (2, 3, 1)]);
        let post = gaussian::condition(&gaussian::joint(&chain).unwrap(), 3, -5.0).unwrap();
        assert!(post.mean_of(1).unwrap() < -1.0 && post.mean_of(2).unwrap() < -1.0);
        // Quiz on the child of 1 with an unrelated node 3: the associative
        // agent expects the parent depressed and picks 3, the causal agent
        // sees a tie at 0 and keeps the lowest index.
        let parent = g(4, &[(1, 2, 1)]);
        assert_eq!(associative_choice(&parent, 2, -5.0).unwrap(), 3);
        assert_eq!(cause_effect_choice(&parent, 2, -5.0).unwrap(), 1);
        // With a negative weight backward inference lifts the parent instead.
        let neg = g(4, &[(1, 2, -1), (2, 3, 1)]);
        let post = gaussian::condition(&gaussian::joint(&neg).unwrap(), 2, -5.0).unwrap();
        assert!((post.mean_of(1).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(associative_choice(&neg, 2, -5.0).unwrap(), 1);
    }

    #[test]
    fn cause_effect_on_a_chain() {
        let chain = g(4, &[(1, 2, 1), (2, 3, 1)]);
        let m = gaussian::interventional_means(&chain, Intervention::new(2, -5.0)).unwrap();
        assert_eq!((m[1], m[3]), (0.0, -5.0));
        assert_eq!(cause_effect_choice(&chain, 2, -5.0).unwrap(), 1);
    }

    #[test]
    fn empty_graph_picks_lowest_index() {
        let e = CausalGraph::empty(5).unwrap();
        assert_eq!(associative_choice(&e, 1, -5.0).unwrap(), 2);
        assert_eq!(cause_effect_choice(&e, 3, -5.0).unwrap(), 1);
    }

    #[test]
    fn root_target_makes_association_causal() {
        let mut rng = stream(1, "graphgen", 0);
        for _ in 0..200 {
            let gr = sample_graph(&mut rng, 5, Mechanism::Linear).unwrap();
            for t in 1..5 {
                if gr.parent_count(t) == 0 {
                    assert_eq!(associative_choice(&gr, t, -5.0).unwrap(), cause_effect_choice(&gr, t, -5.0).unwrap());
                }
            }
        }
    }

    #[test]
    fn scaling_values_keeps_choices() {
        let mut rng = stream(2, "graphgen", 0);
        for _ in 0..100 {
            let gr = sample_graph(&mut rng, 5, Mechanism::Linear).unwrap();
            for t in 1..5 {
                assert_eq!(associative_choice(&gr, t, -5.0).unwrap(), associative_choice(&gr, t, -50.0).unwrap());
                assert_eq!(cause_effect_choice(&gr, t, -5.0).unwrap(), cause_effect_choice(&gr, t, -0.5).unwrap());
            }
        }
    }

    #[test]
    fn counterfactual_with_zero_noise_is_cause_effect() {
        let mut rng = stream(3, "graphgen", 0);
        for _ in 0..100 {
            let gr = sample_graph(&mut rng, 5, Mechanism::Linear).unwrap();
            let factual = Intervention::new(2, 5.0);
            let zero = crate::gaussian::NoiseVector::zeros(5);
            let (vals, _) = sample(&gr, &mut rng, Some(factual), Some(&zero)).unwrap();
            for t in 1..5 {
                assert_eq!(
                    counterfactual_choice(&gr, t, -5.0, &vals[1..], Some(factual)).unwrap(),
                    cause_effect_choice(&gr, t, -5.0).unwrap()
                );
            }
        }
    }

    #[test]
    fn counterfactual_breaks_degenerate_ties() {
        // Two children of node 1 with equal interventional means +5.
        let gr = g(4, &[(1, 2, -1), (1, 3, -1)]);
        assert_eq!(cause_effect_choice(&gr, 1, -5.0).unwrap(), 2);
        let factual = Intervention::new(1, 5.0);
        let noise = crate::gaussian::NoiseVector { eps: vec![0.0, 0.0, -0.05, 0.08], clamped: None };
        let (vals, _) = sample(&gr, &mut stream(0, "env", 0), Some(factual), Some(&noise)).unwrap();
        assert_eq!(counterfactual_choice(&gr, 1, -5.0, &vals[1..], Some(factual)).unwrap(), 3);
    }

    #[test]
    fn random_actions_are_legal_and_uniform() {
        let cfg = TaskConfig::new(Setting::Observational, Condition::Active, 5);
        let mut rng = stream(4, "env", 0);
        let (mut st, _) = EpisodeState::reset(CausalGraph::empty(5).unwrap(), cfg, &mut rng).unwrap();
        let mut counts = [0usize; 8];
        for _ in 0..8000 {
            counts[Agent::Random.act(&mut Carry::Stateless, &st, &[], &mut rng).unwrap()] += 1;
        }
        assert!(counts[4..].iter().all(|&c| c == 0));
        assert!(counts[..4].iter().all(|&c| (1800..2200).contains(&c)));
        for _ in 0..4 {
            st.step(0, &mut rng).unwrap();
        }
        let a = Agent::Random.act(&mut Carry::Stateless, &st, &[], &mut rng).unwrap();
        assert!(cfg.is_quiz_action(a));
    }

    #[test]
    fn learned_agent_is_deterministic_and_resets() {
        let layout = Layout::new(17, 16, 8).unwrap();
        let agent = LearnedAgent::new(Params::init(layout, &mut stream(5, "init", 0)), ActMode::Sample);
        let x = vec![0.3f32; 17];
        let run = |seed| {
            let mut rng = stream(seed, "agent", 0);
            let mut c = agent.carry();
            (0..5).map(|_| agent.act(&mut c, &x, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        let (a, b) = (run(9), run(9));
        assert_eq!(a, b);
        assert!(a.iter().all(|d| d.action < 8));
        assert_eq!(a[0].log_probs, run(10)[0].log_probs);
        assert_ne!(a[0].log_probs, a[1].log_probs);
    }

    #[test]
    fn learned_agent_matches_the_tape() {
        let layout = Layout::new(17, 16, 8).unwrap();
        let params: Params<f32> = Params::init(layout, &mut stream(6, "init", 0));
        let agent = LearnedAgent::new(params.clone(), ActMode::Greedy);
        let cfg = TaskConfig::new(Setting::Interventional, Condition::Active, 5);
        let obs = crate::env::Observation { v: vec![0.1, -0.2, 5.0, 0.0], m: vec![0.0; 4] };
        let x: Vec<f32> = agent_input(&cfg, &obs, Some((2, 0.0))).iter().map(|&v| v as f32).collect();
        let mut c = agent.carry();
        let d = agent.act(&mut c, &x, &mut stream(0, "agent", 0)).unwrap();
        let mut tape = crate::nn::Tape::new(layout);
        let s = tape.push(&params, &x).unwrap();
        assert_eq!(s.log_probs, d.log_probs);
        assert_eq!(s.value, d.value);
    }
}
