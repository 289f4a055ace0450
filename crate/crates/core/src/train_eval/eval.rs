use crate::agents::Agent;
use crate::cbn::{CausalGraph, GraphPool, Mechanism};
use crate::env::{agent_input, Condition, EpisodeState, Phase, Setting, TaskConfig, TraceRecord};
use crate::error::{Error, Result};
use crate::gaussian::{interventional_means, Intervention};
use crate::par::{self, Exec};
use crate::rng::{self, names, Rng};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// The three streams an episode draws from. The quiz stream feeds the step
/// whose noise fixes the quiz world, so agents and settings evaluated with
/// the same seed face the same quiz noise.
pub struct EpisodeRngs {
    pub env: Rng,
    pub quiz: Rng,
    pub agent: Rng,
}

impl EpisodeRngs {
    pub fn new(seed: u64, index: u64) -> Self {
        EpisodeRngs {
            env: rng::stream(seed, names::EVAL, index),
            quiz: rng::stream(seed, names::QUIZ, index),
            agent: rng::stream(seed, names::AGENT, index),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub quiz_reward: f64,
    pub total_reward: f64,
    pub quiz_target: usize,
    pub quiz_action: usize,
}

/// Plays one episode with frozen parameters. With `target` unset the quiz
/// target is drawn from the environment stream.
pub fn run_episode(
    agent: &Agent,
    graph: CausalGraph,
    task: TaskConfig,
    target: Option<usize>,
    rngs: &mut EpisodeRngs,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<EpisodeResult> {
    let (mut st, mut obs) = match target {
        Some(t) => EpisodeState::reset_with_target(graph, task, t, &mut rngs.env)?,
        None => EpisodeState::reset(graph, task, &mut rngs.env)?,
    };
    let mut carry = agent.carry();
    let mut prev = None;
    let mut total = 0.0;
    loop {
        let input = agent_input(&task, &obs, prev);
        let a = agent.act(&mut carry, &st, &input, &mut rngs.agent)?;
        let (t, phase) = (st.t(), st.phase());
        let rng = if t == st.quiz_noise_step() { &mut rngs.quiz } else { &mut rngs.env };
        let r = st.step(a, rng)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TraceRecord::new(&st, phase, t, a, &r));
        }
        total += r.reward;
        prev = Some((a, r.reward));
        obs = r.observation;
        if r.done {
            debug_assert_eq!(st.phase(), Phase::Done);
            return Ok(EpisodeResult {
                quiz_reward: r.reward,
                total_reward: total,
                quiz_target: st.quiz_target(),
                quiz_action: a,
            });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitLabel {
    Parent,
    Orphan,
    Confounded,
    Unconfounded,
    Degenerate,
    Distinct,
}

impl SplitLabel {
    pub const ALL: [SplitLabel; 6] = [
        SplitLabel::Parent,
        SplitLabel::Orphan,
        SplitLabel::Confounded,
        SplitLabel::Unconfounded,
        SplitLabel::Degenerate,
        SplitLabel::Distinct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SplitLabel::Parent => "parent",
            SplitLabel::Orphan => "orphan",
            SplitLabel::Confounded => "confounded",
            SplitLabel::Unconfounded => "unconfounded",
            SplitLabel::Degenerate => "degenerate",
            SplitLabel::Distinct => "distinct",
        }
    }
}

/// Parent iff the quiz target has at least one parent, hidden included.
pub fn split_parent_orphan(g: &CausalGraph, target: usize) -> SplitLabel {
    if g.parent_count(target) > 0 {
        SplitLabel::Parent
    } else {
        SplitLabel::Orphan
    }
}

/// Confounded iff the hidden node is a parent of the target and of at least
/// one other observable.
pub fn split_confounded(g: &CausalGraph, target: usize) -> SplitLabel {
    let h = g.hidden();
    let other = g.observables().any(|i| i != target && g.weight(h, i) != 0);
    if g.weight(h, target) != 0 && other {
        SplitLabel::Confounded
    } else {
        SplitLabel::Unconfounded
    }
}

/// Degenerate iff two or more observables other than the target share the
/// largest interventional mean (within 1e-9). Computed on the linear version
/// of the graph.
pub fn split_degenerate(g: &CausalGraph, target: usize, quiz_value: f64) -> Result<SplitLabel> {
    let lin = g.clone().with_mechanism(Mechanism::Linear);
    let mu = interventional_means(&lin, Intervention::new(target, quiz_value))?;
    let vals: Vec<f64> = g.observables().filter(|&i| i != target).map(|i| mu[i]).collect();
    let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = vals.iter().filter(|&&v| (v - best).abs() <= 1e-9).count();
    Ok(if ties >= 2 { SplitLabel::Degenerate } else { SplitLabel::Distinct })
}

/// Which episodes to play.
pub enum EvalPlan<'a> {
    /// Every graph with every quiz target: `|graphs| * (N-1)` episodes.
    Exhaustive(&'a [CausalGraph]),
    /// `episodes` graphs drawn from `pool`, quiz targets drawn by the env.
    Sampled { pool: &'a GraphPool, episodes: usize },
}

impl EvalPlan<'_> {
    fn len(&self, n_nodes: usize) -> usize {
        match self {
            EvalPlan::Exhaustive(gs) => gs.len() * (n_nodes - 1),
            EvalPlan::Sampled { episodes, .. } => *episodes,
        }
    }

    /// Graph and fixed quiz target (if any) of episode `e`.
    fn episode(&self, n: usize, e: usize, rngs: &mut EpisodeRngs) -> Result<(CausalGraph, Option<usize>)> {
        let (graph, target) = match self {
            EvalPlan::Exhaustive(gs) => (gs[e / (n - 1)].clone(), Some(e % (n - 1) + 1)),
            EvalPlan::Sampled { pool, .. } => (pool.sample(&mut rngs.env), None),
        };
        if graph.n_nodes() != n {
            return Err(Error::invalid(format!("graph has {} nodes, task expects {n}", graph.n_nodes())));
        }
        Ok((graph, target))
    }
}

/// Mean, spread and 95% confidence half-width of a set of episode rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub ci95: Option<f64>,
}

fn t_quantile(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64).expect("positive dof").inverse_cdf(0.975)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

impl Summary {
    /// The CI is Student-t over replica means when there are at least two
    /// non-empty replicas, and over episodes otherwise.
    fn from_replicas(groups: &[Vec<f64>]) -> Summary {
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        if all.is_empty() {
            return Summary { count: 0, mean: None, sd: None, ci95: None };
        }
        let (mean, sd) = mean_sd(&all);
        let means: Vec<f64> = groups.iter().filter(|g| !g.is_empty()).map(|g| mean_sd(g).0).collect();
        let ci95 = if means.len() >= 2 {
            let (_, s) = mean_sd(&means);
            Some(t_quantile(means.len() - 1) * s / (means.len() as f64).sqrt())
        } else if all.len() >= 2 {
            Some(t_quantile(all.len() - 1) * sd / (all.len() as f64).sqrt())
        } else {
            None
        };
        Summary { count: all.len(), mean: Some(mean), sd: Some(sd), ci95 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: SplitLabel,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: String,
    pub setting: Setting,
    pub condition: Condition,
    pub n_nodes: usize,
    pub replicas: usize,
    pub episodes_per_replica: usize,
    pub replica_means: Vec<f64>,
    /// Over quiz rewards of all episodes of all replicas.
    pub overall: Summary,
    pub splits: Vec<SplitSummary>,
}

/// Evaluates one agent per replica (trained copies, or the same baseline
/// repeated) on the plan. Replica `r` uses seed `mix(seed, r)`.
pub fn evaluate(
    agents: &[Agent],
    label: &str,
    plan: &EvalPlan<'_>,
    task: TaskConfig,
    seed: u64,
    exec: Exec,
) -> Result<EvalReport> {
    task.validate()?;
    if agents.is_empty() {
        return Err(Error::invalid("evaluation needs at least one agent"));
    }
    let n = task.n_nodes;
    let total = plan.len(n);
    let mut per_replica = Vec::with_capacity(agents.len());
    for (r, agent) in agents.iter().enumerate() {
        let rseed = rng::mix(&[seed, r as u64]);
        let results = par::map_range(exec, total, |e| -> Result<(f64, [SplitLabel; 3])> {
            let mut rngs = EpisodeRngs::new(rseed, e as u64);
            let (graph, target) = plan.episode(n, e, &mut rngs)?;
            let res = run_episode(agent, graph.clone(), task, target, &mut rngs, None)?;
            let t = res.quiz_target;
            let labels = [
                split_parent_orphan(&graph, t),
                split_confounded(&graph, t),
                split_degenerate(&graph, t, task.quiz_value)?,
            ];
            Ok((res.quiz_reward, labels))
        });
        per_replica.push(results.into_iter().collect::<Result<Vec<_>>>()?);
    }
    let rewards: Vec<Vec<f64>> = per_replica.iter().map(|rs| rs.iter().map(|r| r.0).collect()).collect();
    let splits = SplitLabel::ALL
        .iter()
        .map(|&label| {
            let groups: Vec<Vec<f64>> = per_replica
                .iter()
                .map(|rs| rs.iter().filter(|r| r.1.contains(&label)).map(|r| r.0).collect())
                .collect();
            SplitSummary { split: label, summary: Summary::from_replicas(&groups) }
        })
        .collect();
    Ok(EvalReport {
        agent: label.to_string(),
        setting: task.setting,
        condition: task.condition,
        n_nodes: n,
        replicas: agents.len(),
        episodes_per_replica: total,
        replica_means: rewards.iter().map(|g| if g.is_empty() { 0.0 } else { mean_sd(g).0 }).collect(),
        overall: Summary::from_replicas(&rewards),
        splits,
    })
}

/// Step records of the first `count` episodes of replica 0, replaying
/// exactly the episodes `evaluate` plays with the same seed.
pub fn trace_episodes(
    agent: &Agent,
    plan: &EvalPlan<'_>,
    task: TaskConfig,
    seed: u64,
    count: usize,
) -> Result<Vec<TraceRecord>> {
    task.validate()?;
    let n = task.n_nodes;
    let rseed = rng::mix(&[seed, 0]);
    let mut out = Vec::new();
    for e in 0..count.min(plan.len(n)) {
        let mut rngs = EpisodeRngs::new(rseed, e as u64);
        let (graph, target) = plan.episode(n, e, &mut rngs)?;
        run_episode(agent, graph, task, target, &mut rngs, Some(&mut out))?;
    }
    Ok(out)
}
