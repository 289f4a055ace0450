use crate::config::KeyValues;
use crate::manifest::Manifest;
use crate::{Cli, Command, EvalArgs, GenArgs, OracleArgs, Query, ReportArgs, TrainArgs, UsageError};
use anyhow::{bail, Context, Result};
use clap::CommandFactory;
use metacausal::agents::{train_q_episode, train_q_total, Agent, AgentKind, QConfig};
use metacausal::cbn::{
    build_test_split, parse_graph, read_graph_set, write_graph_set, CausalGraph, GraphPool, GraphSet, Mechanism,
    PermutationGroup, MAX_ENUMERABLE_NODES,
};
use metacausal::env::{Condition, Setting, TaskConfig};
use metacausal::gaussian::{
    abduct, condition_many, counterfactual_values, d_separated, interventional, joint, posterior_noise, Intervention,
};
use metacausal::par::Exec;
use metacausal::rng::{self, names};
use metacausal::train_eval::{
    evaluate, render_csv, render_json, render_svg, trace_episodes, Checkpoint, EvalPlan, EvalReport, LrSchedule,
    TrainConfig, Trainer,
};
use serde_json::json;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub fn run(cli: Cli) -> Result<()> {
    let exec = configure_threads(cli.threads)?;
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Oracle(a) => oracle(a),
        Command::Train(a) => train(a, exec),
        Command::Eval(a) => eval(a, exec),
        Command::Report(a) => report(a),
    }
}

fn configure_threads(threads: Option<usize>) -> Result<Exec> {
    match threads {
        Some(0) => Err(UsageError("--threads must be at least 1".into()).into()),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
            let _ = n;
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::Parallel),
    }
}

/// Invalid-argument errors from the library become usage errors.
fn usage<T>(r: metacausal::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        metacausal::Error::InvalidArgument(m) => UsageError(m).into(),
        e => e.into(),
    })
}

/// Config-file keys a subcommand accepts: its long flags minus `config`.
fn known_keys(sub: &str) -> Vec<String> {
    let cmd = Cli::command();
    let sc = cmd.find_subcommand(sub).expect("subcommand exists");
    sc.get_arguments()
        .filter_map(|a| a.get_long())
        .filter(|l| !matches!(*l, "config" | "help" | "out" | "threads"))
        .map(str::to_string)
        .collect()
}

fn load_config(path: Option<&Path>, sub: &str) -> Result<KeyValues> {
    let kv = KeyValues::load(path)?;
    let keys = known_keys(sub);
    kv.check_known(&keys.iter().map(String::as_str).collect::<Vec<_>>())?;
    Ok(kv)
}

fn check_nodes(n: usize) -> Result<()> {
    if !(3..=MAX_ENUMERABLE_NODES).contains(&n) {
        bail!(UsageError(format!("--n must be between 3 and {MAX_ENUMERABLE_NODES}, got {n}")));
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn generate_split(
    n: usize,
    seed: u64,
    seeds_per_class: usize,
    group: PermutationGroup,
) -> Result<(GraphSet, GraphSet)> {
    let mut rng = rng::stream(seed, names::GRAPHGEN, 0);
    usage(build_test_split(&mut rng, seed, n, seeds_per_class, group))
}

fn read_set(path: &Path, default_n: usize) -> Result<GraphSet> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_graph_set(BufReader::new(f), default_n).with_context(|| format!("reading {}", path.display()))
}

/// Reads `test.jsonl` and `train.jsonl` from a `gen` output directory.
fn load_split(dir: &Path) -> Result<(GraphSet, GraphSet)> {
    let test = read_set(&dir.join("test.jsonl"), 0)?;
    let train = read_set(&dir.join("train.jsonl"), test.n_nodes)?;
    if train.n_nodes != test.n_nodes {
        bail!("{}: train and test splits disagree on node count", dir.display());
    }
    Ok((train, test))
}

fn gen(a: GenArgs) -> Result<()> {
    let kv = load_config(a.config.as_deref(), "gen")?;
    let n = kv.pick(a.n, "n", 5)?;
    let seed = kv.pick(a.seed, "seed", 0)?;
    let spc = kv.pick(a.seeds_per_class, "seeds-per-class", 12)?;
    let group: PermutationGroup = kv.pick(a.group, "group", crate::GroupArg::AllNodes)?.into();
    check_nodes(n)?;
    let config = json!({ "n": n, "seeds_per_class": spc, "group": group });
    let manifest = Manifest::start(&a.out, "gen", seed, config)?;
    let (train, test) = generate_split(n, seed, spc, group)?;
    let mut outputs = Vec::new();
    for (set, name) in [(&train, "train.jsonl"), (&test, "test.jsonl")] {
        let path = a.out.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        write_graph_set(&mut w, set)?;
        w.flush()?;
        outputs.push(path);
    }
    let train_desc = if train.complement { "complement".to_string() } else { train.len().to_string() };
    eprintln!("test graphs: {}, train graphs: {train_desc}", test.len());
    manifest.finish(outputs)
}

fn oracle(a: OracleArgs) -> Result<()> {
    let bytes = std::fs::read(&a.graph).with_context(|| format!("reading {}", a.graph.display()))?;
    let g = parse_graph(&bytes).with_context(|| format!("parsing {}", a.graph.display()))?;
    let n = g.n_nodes();
    let config = json!({
        "graph": a.graph, "query": format!("{:?}", a.query).to_lowercase(), "node": a.node, "value": a.value,
        "observed": a.observed, "factual_node": a.factual_node, "factual_value": a.factual_value,
        "x": a.x, "y": a.y, "z": a.z,
    });
    let manifest = a.out.as_deref().map(|d| Manifest::start(d, "oracle", 0, config)).transpose()?;
    let value = a.value.unwrap_or(5.0);
    let need_node = || a.node.ok_or_else(|| UsageError(format!("--query {:?} needs --node", a.query).to_lowercase()));
    let out = match a.query {
        Query::Joint => joint(&g)?.to_json(),
        Query::Cond => {
            let node = need_node()?;
            usage(condition_many(&joint(&g)?, &[node], &[value]))?.to_json()
        }
        Query::Do => usage(interventional(&g, Intervention::new(need_node()?, value)))?.to_json(),
        Query::Cf => {
            let iv = Intervention::new(need_node()?, value);
            let factual = match (a.factual_node, a.factual_value) {
                (Some(k), v) => Some(Intervention::new(k, v.unwrap_or(5.0))),
                (None, Some(_)) => bail!(UsageError("--factual-value needs --factual-node".into())),
                (None, None) => None,
            };
            let eps = if a.observed.len() == n {
                usage(abduct(&g, &a.observed, factual))?
            } else if a.observed.len() + 1 == n {
                usage(posterior_noise(&g, &a.observed, factual))?.mean
            } else {
                bail!(UsageError(format!("--observed needs {} or {n} values, got {}", n - 1, a.observed.len())));
            };
            let values = usage(counterfactual_values(&g, &eps, Some(iv)))?;
            serde_json::to_string(&json!({ "noise": eps.eps, "values": values }))?
        }
        Query::Dsep => {
            if a.x.is_empty() || a.y.is_empty() {
                bail!(UsageError("--query dsep needs --x and --y".into()));
            }
            serde_json::to_string(&json!({ "d_separated": usage(d_separated(&g, &a.x, &a.y, &a.z))? }))?
        }
    };
    println!("{out}");
    if let (Some(m), Some(dir)) = (manifest, a.out.as_deref()) {
        let path = dir.join("result.json");
        write_file(&path, &(out + "\n"))?;
        m.finish(vec![path])?;
    }
    Ok(())
}

fn train_config(a: &TrainArgs, kv: &KeyValues) -> Result<TrainConfig> {
    let setting = kv.pick(a.setting, "setting", Setting::Observational)?;
    let condition = kv.pick(a.condition, "condition", Condition::Active)?;
    let n = kv.pick(a.n, "n", 5)?;
    check_nodes(n)?;
    let seed = kv.pick(a.seed, "seed", 0)?;
    let task = TaskConfig::new(setting, condition, n);
    let paper = a.paper_scale || kv.get("paper-scale")?.unwrap_or(false);
    let base = if paper { TrainConfig::paper(task, seed) } else { TrainConfig::desk(task, seed) };
    let rate: Option<f64> = match a.lr_decay_rate {
        Some(r) => Some(r),
        None => kv.get("lr-decay-rate")?,
    };
    let lr_schedule = match rate {
        Some(rate) => LrSchedule::Exponential { rate, every_steps: kv.pick(a.lr_decay_every, "lr-decay-every", 1000)? },
        None => base.lr_schedule,
    };
    let cfg = TrainConfig {
        batch_size: kv.pick(a.batch_size, "batch-size", base.batch_size)?,
        total_env_steps: kv.pick(a.total_env_steps, "total-env-steps", base.total_env_steps)?,
        hidden: kv.pick(a.hidden, "hidden", base.hidden)?,
        lr_start: kv.pick(a.lr, "lr", base.lr_start)?,
        lr_schedule,
        entropy_start: kv.pick(a.entropy_start, "entropy-start", base.entropy_start)?,
        baseline_weight: kv.pick(a.baseline_weight, "baseline-weight", base.baseline_weight)?,
        gamma: kv.pick(a.gamma, "gamma", base.gamma)?,
        grad_clip: kv.pick(a.grad_clip, "grad-clip", base.grad_clip)?,
        log_every: kv.pick(a.log_every, "log-every", base.log_every)?,
        ..base
    };
    usage(cfg.validate())?;
    Ok(cfg)
}

fn train(a: TrainArgs, exec: Exec) -> Result<()> {
    let kv = load_config(a.config.as_deref(), "train")?;
    let resume: Option<PathBuf> = match &a.resume {
        Some(p) => Some(p.clone()),
        None => kv.get("resume")?,
    };
    let mut trainer = match &resume {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Trainer::resume(Checkpoint::from_json(&text).with_context(|| format!("loading {}", p.display()))?)?
        }
        None => Trainer::new(train_config(&a, &kv)?)?,
    };
    let cfg = *trainer.config();
    let n = cfg.task.n_nodes;
    let mechanism: Mechanism = kv.pick(a.mechanism, "mechanism", crate::MechanismArg::Linear)?.into();
    let graphs: Option<PathBuf> = match &a.graphs {
        Some(p) => Some(p.clone()),
        None => kv.get("graphs")?,
    };
    let split_seed = kv.pick(a.split_seed, "split-seed", cfg.seed)?;
    let spc = kv.pick(a.seeds_per_class, "seeds-per-class", 12)?;
    let group: PermutationGroup = kv.pick(a.group, "group", crate::GroupArg::AllNodes)?.into();
    let config = json!({
        "train": cfg, "mechanism": mechanism, "graphs": graphs, "split_seed": split_seed,
        "seeds_per_class": spc, "group": group, "resume": resume, "threads_parallel": exec.is_parallel(),
    });
    let manifest = Manifest::start(&a.out, "train", cfg.seed, config)?;
    let (train_set, test_set) = match &graphs {
        Some(dir) => load_split(dir)?,
        None => generate_split(n, split_seed, spc, group)?,
    };
    if train_set.n_nodes != n {
        bail!(UsageError(format!("graph split has {} nodes, task has {n}", train_set.n_nodes)));
    }
    let pool = GraphPool::training(&train_set, &test_set, mechanism)?;
    let mut logged = trainer.curve().len();
    while !trainer.is_done() {
        trainer.update(&pool, exec)?;
        for row in &trainer.curve()[logged..] {
            eprintln!(
                "step {:>10}  episodes {:>8}  mean reward {:>8.4}  quiz {:>8.4}",
                row.step, row.episodes, row.mean_reward, row.mean_quiz_reward
            );
        }
        logged = trainer.curve().len();
    }
    let ckpt = a.out.join("checkpoint.json");
    let curve = a.out.join("curve.csv");
    write_file(&curve, &trainer.curve_csv())?;
    write_file(&ckpt, &trainer.into_checkpoint().to_json())?;
    manifest.finish(vec![ckpt, curve])
}

fn eval(a: EvalArgs, exec: Exec) -> Result<()> {
    let kv = load_config(a.config.as_deref(), "eval")?;
    let checkpoints: Vec<PathBuf> = if a.checkpoint.is_empty() {
        kv.get::<String>("checkpoint")?
            .map(|s| s.split(',').map(|p| PathBuf::from(p.trim())).collect())
            .unwrap_or_default()
    } else {
        a.checkpoint.clone()
    };
    let default_kind = if checkpoints.is_empty() { AgentKind::Random } else { AgentKind::Learned };
    let kind = kv.pick(a.agent, "agent", default_kind)?;
    if (kind == AgentKind::Learned) != !checkpoints.is_empty() {
        bail!(UsageError("--checkpoint is required for, and only accepted with, --agent learned".into()));
    }
    let loaded: Vec<Checkpoint> = checkpoints
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Checkpoint::from_json(&text).with_context(|| format!("loading {}", p.display()))
        })
        .collect::<Result<_>>()?;
    let ck_task = loaded.first().map(|c| c.config.task);
    if loaded.iter().any(|c| Some(c.config.task) != ck_task) {
        bail!(UsageError("checkpoints were trained on different tasks".into()));
    }
    let graphs: Option<PathBuf> = match &a.graphs {
        Some(p) => Some(p.clone()),
        None => kv.get("graphs")?,
    };
    let split = graphs.as_deref().map(load_split).transpose()?;
    let setting = kv.pick(a.setting, "setting", ck_task.map_or(Setting::Observational, |t| t.setting))?;
    let condition = kv.pick(a.condition, "condition", ck_task.map_or(Condition::Active, |t| t.condition))?;
    let default_n = split.as_ref().map(|s| s.1.n_nodes).or(ck_task.map(|t| t.n_nodes)).unwrap_or(5);
    let n = kv.pick(a.n, "n", default_n)?;
    check_nodes(n)?;
    let task = TaskConfig::new(setting, condition, n);
    if let Some(t) = ck_task {
        if t.n_nodes != n || t.episode_len != task.episode_len {
            bail!(UsageError("checkpoint was trained on a task with a different input or episode shape".into()));
        }
    }
    if let Some((_, test)) = &split {
        if test.n_nodes != n {
            bail!(UsageError(format!("graph split has {} nodes, task has {n}", test.n_nodes)));
        }
    }
    let mechanism: Mechanism = kv.pick(a.mechanism, "mechanism", crate::MechanismArg::Linear)?.into();
    let seed = kv.pick(a.seed, "seed", 0)?;
    let replicas = kv.pick(a.replicas, "replicas", 1)?;
    let episodes = kv.pick(a.episodes, "episodes", 10_000)?;
    let act_mode: metacausal::agents::ActMode = kv.pick(a.act_mode, "act-mode", crate::ActModeArg::Sample)?.into();
    let q_episodes = kv.pick(a.q_episodes, "q-episodes", QConfig::default().episodes)?;
    let trace: Option<PathBuf> = match &a.trace {
        Some(p) => Some(p.clone()),
        None => kv.get("trace")?,
    };
    let trace_count = kv.pick(a.trace_episodes, "trace-episodes", 10)?;
    if replicas == 0 || episodes == 0 {
        bail!(UsageError("--replicas and --episodes must be positive".into()));
    }
    let config = json!({
        "agent": kind.name(), "checkpoints": checkpoints, "graphs": graphs, "task": task, "mechanism": mechanism,
        "replicas": replicas, "episodes": episodes, "act_mode": act_mode, "q_episodes": q_episodes,
        "trace": trace, "trace_episodes": trace_count, "threads_parallel": exec.is_parallel(),
    });
    let manifest = Manifest::start(&a.out, "eval", seed, config)?;

    let test_graphs: Vec<CausalGraph> = split
        .as_ref()
        .map(|(_, test)| test.graphs.iter().map(|g| g.clone().with_mechanism(mechanism)).collect())
        .unwrap_or_default();
    let all_pool = GraphPool::All { n_nodes: n, mechanism };
    let train_pool = match &split {
        Some((train, test)) => GraphPool::training(train, test, mechanism)?,
        None => all_pool.clone(),
    };
    let agents: Vec<Agent> = match kind {
        AgentKind::Learned => loaded.iter().map(|c| Agent::Learned(c.agent(act_mode))).collect(),
        AgentKind::QTotal | AgentKind::QEpisode => {
            let qcfg = QConfig { episodes: q_episodes, ..QConfig::default() };
            (0..replicas)
                .map(|r| {
                    let qseed = rng::mix(&[seed, r as u64, 1]);
                    let agent = if kind == AgentKind::QTotal {
                        let (q, stats) = train_q_total(&qcfg, task, &train_pool, qseed)?;
                        eprintln!("q-total replica {r}: final training reward {:.4}", stats.final_mean_reward);
                        Agent::QTotal(q)
                    } else {
                        let (q, stats) = train_q_episode(&qcfg, task, &train_pool, qseed)?;
                        eprintln!("q-episode replica {r}: final training reward {:.4}", stats.final_mean_reward);
                        Agent::QEpisode(q)
                    };
                    Ok(agent)
                })
                .collect::<Result<_>>()?
        }
        k => vec![usage(Agent::baseline(k))?; replicas],
    };
    let plan = match &split {
        Some(_) => EvalPlan::Exhaustive(&test_graphs),
        None => EvalPlan::Sampled { pool: &all_pool, episodes },
    };
    let report = usage(evaluate(&agents, kind.name(), &plan, task, seed, exec))?;
    let mut outputs = Vec::new();
    let json_path = a.out.join("eval.json");
    write_file(&json_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    outputs.push(json_path);
    let csv_path = a.out.join("eval.csv");
    write_file(&csv_path, &render_csv(std::slice::from_ref(&report)))?;
    outputs.push(csv_path);
    if let Some(path) = trace {
        let records = trace_episodes(&agents[0], &plan, task, seed, trace_count)?;
        let mut text = String::new();
        for r in &records {
            text.push_str(&r.to_json_line());
            text.push('\n');
        }
        write_file(&path, &text)?;
        outputs.push(path);
    }
    if let (Some(mean), Some(ci)) = (report.overall.mean, report.overall.ci95) {
        eprintln!("{} {} {}: mean quiz reward {mean:.4} +/- {ci:.4}", kind.name(), setting.name(), condition.name());
    }
    manifest.finish(outputs)
}

fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let reports =
        if value.is_array() { serde_json::from_value(value) } else { serde_json::from_value(value).map(|r| vec![r]) };
    reports.with_context(|| format!("{} is not an evaluation report", path.display()))
}

fn report(a: ReportArgs) -> Result<()> {
    let config = json!({ "eval": a.eval });
    let manifest = Manifest::start(&a.out, "report", 0, config)?;
    let mut reports = Vec::new();
    for p in &a.eval {
        reports.extend(read_reports(p)?);
    }
    let outputs = vec![a.out.join("report.csv"), a.out.join("report.json"), a.out.join("report.svg")];
    write_file(&outputs[0], &render_csv(&reports))?;
    write_file(&outputs[1], &render_json(&reports))?;
    write_file(&outputs[2], &render_svg(&reports))?;
    manifest.finish(outputs)
}
