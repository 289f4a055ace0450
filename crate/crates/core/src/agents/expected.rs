//! Exact expected quiz rewards of the baselines on a single (graph, target)
//! episode.

use super::{associative_choice, AgentKind};
use crate::cbn::CausalGraph;
use crate::env::TaskConfig;
use crate::error::{Error, Result};
use crate::gaussian::{counterfactual_values, interventional_means, posterior_noise, Intervention, NoiseVector};
use nalgebra::DMatrix;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Node means in the quiz world `do(X_target = quiz_value)`.
pub fn quiz_means(g: &CausalGraph, target: usize, quiz_value: f64) -> Result<Vec<f64>> {
    interventional_means(g, Intervention::new(target, quiz_value))
}

/// Expected quiz reward of a baseline that plays the quiz optimally for its
/// kind (and uniformly at random for [`AgentKind::Random`]).
pub fn expected_quiz_reward(kind: AgentKind, g: &CausalGraph, cfg: &TaskConfig, target: usize) -> Result<f64> {
    let mu = quiz_means(g, target, cfg.quiz_value)?;
    let best = |i: usize| mu[i];
    let ce = super::argmax_excluding(&mu, target);
    match kind {
        AgentKind::Random => Ok(mu[1..].iter().sum::<f64>() / cfg.observables() as f64),
        AgentKind::OptimalAssociative => Ok(best(associative_choice(g, target, cfg.quiz_value)?)),
        AgentKind::OptimalCauseEffect => Ok(best(ce)),
        AgentKind::OptimalCounterfactual => Ok(best(ce) + counterfactual_gain(g, cfg, target)?),
        k => Err(Error::invalid(format!("no closed-form reward for agent {}", k.name()))),
    }
}

/// `E[max_i m_i] - max_i E[m_i]` for the counterfactual oracle, where `m` is
/// the posterior-mean counterfactual value vector. The penultimate step is an
/// intervention on a uniformly random observable, as produced by the oracle's
/// random information actions.
///
/// Exact for at most two candidate nodes (`N <= 4`).
pub fn counterfactual_gain(g: &CausalGraph, cfg: &TaskConfig, target: usize) -> Result<f64> {
    let n = g.n_nodes();
    let cands: Vec<usize> = (1..n).filter(|&i| i != target).collect();
    if cands.len() > 2 {
        return Err(Error::invalid(format!(
            "closed-form counterfactual reward needs at most two candidates, got {}",
            cands.len()
        )));
    }
    if cands.len() < 2 {
        return Ok(0.0);
    }
    let quiz = Some(Intervention::new(target, cfg.quiz_value));
    let base = counterfactual_values(g, &NoiseVector::zeros(n), quiz)?;
    // The counterfactual values are affine in the noise: columns of `jac`.
    let jac = DMatrix::from_fn(n, n, |r, c| {
        let mut e = NoiseVector::zeros(n);
        e.eps[c] = 1.0;
        counterfactual_values(g, &e, quiz).expect("validated above")[r] - base[r]
    });
    let var = g.sigma() * g.sigma();
    let (a, b) = (cands[0], cands[1]);
    let mu_d = base[a] - base[b];
    let mut total = 0.0;
    for k in 1..n {
        let post = posterior_noise(g, &vec![0.0; n - 1], Some(Intervention::new(k, cfg.info_value)))?;
        // Covariance of the posterior mean: prior minus posterior covariance.
        let cov_hat = DMatrix::identity(n, n) * var - post.cov;
        let diff = jac.row(a) - jac.row(b);
        let v = (&diff * &cov_hat * diff.transpose())[(0, 0)].max(0.0);
        total += positive_part_mean(mu_d, v.sqrt()) - mu_d.max(0.0);
    }
    Ok(total / (n - 1) as f64)
}

/// `E[max(D, 0)]` for `D ~ N(mu, s^2)`.
fn positive_part_mean(mu: f64, s: f64) -> f64 {
    if s < 1e-12 {
        return mu.max(0.0);
    }
    let z = mu / s;
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    mu * std.cdf(z) + s * std.pdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{cause_effect_choice, counterfactual_choice};
    use crate::cbn::Mechanism;
    use crate::env::{Condition, Setting};
    use crate::gaussian::sample;
    use crate::rng::stream;
    use rand::Rng as _;

    #[test]
    fn positive_part_matches_quadrature() {
        for (mu, s) in [(0.0f64, 1.0f64), (1.5, 0.3), (-0.4, 2.0)] {
            let h = 1e-4 * s;
            let mut acc = 0.0;
            let mut x = h / 2.0;
            while x < mu.abs() + 12.0 * s {
                let z = (x - mu) / s;
                acc += x * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()) * h;
                x += h;
            }
            assert!((positive_part_mean(mu, s) - acc).abs() < 1e-8);
        }
        assert_eq!(positive_part_mean(-2.0, 0.0), 0.0);
    }

    #[test]
    fn random_reward_of_empty_graph() {
        let cfg = TaskConfig::new(Setting::Interventional, Condition::Active, 5);
        let r = expected_quiz_reward(AgentKind::Random, &CausalGraph::empty(5).unwrap(), &cfg, 2).unwrap();
        assert_eq!(r, -1.25);
    }

    #[test]
    fn counterfactual_gain_matches_simulation() {
        // Two children of node 1 with equal interventional means: a degenerate
        // maximum that only the realized noise can break.
        let g = CausalGraph::from_edges(4, &[(0, 2, 1), (1, 2, -1), (1, 3, -1)], Mechanism::Linear).unwrap();
        let cfg = TaskConfig::new(Setting::Counterfactual, Condition::Active, 4);
        let want = expected_quiz_reward(AgentKind::OptimalCounterfactual, &g, &cfg, 1).unwrap();
        let ce = expected_quiz_reward(AgentKind::OptimalCauseEffect, &g, &cfg, 1).unwrap();
        assert!(want > ce + 0.01);
        let mut rng = stream(11, "eval", 0);
        let n = 200_000;
        let mut acc = 0.0;
        let mut sq = 0.0;
        let quiz = Intervention::new(1, -5.0);
        for _ in 0..n {
            let k = rng.random_range(1..4);
            let factual = Intervention::new(k, 5.0);
            let (vals, _) = sample(&g, &mut rng, Some(factual), None).unwrap();
            // The env keeps the clamped node's discarded draw for the replay.
            let eps = crate::gaussian::abduct(&g, &vals, Some(factual)).unwrap();
            let mut full = eps.eps.clone();
            full[k] = crate::rng::normal(&mut rng, 0.1);
            let world = counterfactual_values(&g, &NoiseVector { eps: full, clamped: None }, Some(quiz)).unwrap();
            let pick = counterfactual_choice(&g, 1, -5.0, &vals[1..], Some(factual)).unwrap();
            acc += world[pick];
            sq += world[pick] * world[pick];
        }
        let mean = acc / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - want).abs() < 5.0 * se, "simulated {mean} vs exact {want} (se {se})");
        assert_eq!(cause_effect_choice(&g, 1, -5.0).unwrap(), 2);
    }
}
