#![allow(dead_code)]

use std::sync::Arc;

use rlfa_core::engine::{AuditSession, SessionConfig};
use rlfa_core::population::Population;
use rlfa_core::sampling::Strategy;

pub const EXAMPLE_PI: [f64; 3] = [0.5, 0.3, 0.2];
pub const EXAMPLE_F: [f64; 3] = [0.2, 0.4, 0.0];
pub const EXAMPLE_S: [f64; 3] = [0.25, 0.35, 0.05];

pub fn example_population(with_scores: bool) -> Arc<Population<f64>> {
    let scores = with_scores.then(|| EXAMPLE_S.to_vec());
    Arc::new(
        Population::from_values(vec![50.0, 30.0, 20.0], scores, Some(EXAMPLE_F.to_vec())).unwrap(),
    )
}

/// Sampling masses written out independently of the library.
pub fn masses(strategy: Strategy, pop: &Population<f64>, remaining: &[usize]) -> Vec<f64> {
    let total: f64 = pop.reported().iter().sum();
    remaining
        .iter()
        .map(|&i| {
            let pi = pop.reported()[i] / total;
            match strategy {
                Strategy::Uniform => 1.0,
                Strategy::PropM => pi,
                Strategy::PropMS => pi * pop.scores().unwrap()[i],
                Strategy::Oracle => pi * pop.truth().unwrap()[i],
            }
        })
        .collect()
}

/// Every ordered draw of `size` items from `remaining` with its probability
/// under sequential renormalized sampling.
pub fn ordered_draws(
    strategy: Strategy,
    pop: &Population<f64>,
    remaining: &[usize],
    size: usize,
) -> Vec<(Vec<usize>, f64)> {
    if size == 0 {
        return vec![(Vec::new(), 1.0)];
    }
    let m = masses(strategy, pop, remaining);
    let total: f64 = m.iter().sum();
    let mut out = Vec::new();
    for (k, &i) in remaining.iter().enumerate() {
        if m[k] == 0.0 {
            continue;
        }
        let p = m[k] / total;
        let rest: Vec<usize> = remaining.iter().copied().filter(|&j| j != i).collect();
        for (mut tail, q) in ordered_draws(strategy, pop, &rest, size - 1) {
            tail.insert(0, i);
            out.push((tail, p * q));
        }
    }
    out
}

/// Exact `E[W_t(m*)]` for every round `t`, by enumerating all sample paths.
pub fn expected_wealth(pop: Arc<Population<f64>>, config: SessionConfig<f64>) -> Vec<f64> {
    let strategy = config.strategy;
    let batch = config.batch_size;
    let m_star = pop.m_star().unwrap();
    let rounds = pop.len().div_ceil(batch);
    let mut acc = vec![0.0; rounds];
    let session = AuditSession::create("enum", pop, config).unwrap();
    walk(&session, 1.0, strategy, batch, m_star, &mut acc);
    acc
}

fn walk(
    session: &AuditSession<f64>,
    prob: f64,
    strategy: Strategy,
    batch: usize,
    m: f64,
    acc: &mut [f64],
) {
    let remaining = session.history().remaining();
    if remaining.is_empty() {
        return;
    }
    let pop = Arc::clone(session.population());
    let truth = pop.truth().unwrap();
    let size = batch.min(remaining.len());
    for (draw, p) in ordered_draws(strategy, &pop, &remaining, size) {
        let mut next = session.clone();
        let obs: Vec<(usize, f64)> = draw.iter().map(|&i| (i, truth[i])).collect();
        next.record_external(&obs).unwrap();
        let w = next.log_wealth_at(m).unwrap().unwrap().exp();
        acc[next.t() - 1] += prob * p * w;
        walk(&next, prob * p, strategy, batch, m, acc);
    }
}

/// Runs a session to exhaustion answering from the truth.
pub fn run_full(session: &mut AuditSession<f64>) {
    let truth = session.population().truth().unwrap().to_vec();
    while !session.history().remaining().is_empty() {
        let d = session.next_draw().unwrap();
        let obs: Vec<(usize, f64)> = d.iter().map(|&i| (i, truth[i])).collect();
        session.record_observation(&obs).unwrap();
    }
}
