use serde::Serialize;

use super::OracleCaps;
use crate::error::Result;
use crate::instance::GeneralInstance;
use crate::lp::EdgeValues;

const SKIP: u8 = u8::MAX;

/// The best online policy: its value and the decision for every
/// `(ball, realization, occupied set)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OnlinePolicy {
    pub value: f64,
    num_bins: usize,
    /// `[ball][realization][occupied mask]`, bin index or `SKIP`.
    decisions: Vec<Vec<Vec<u8>>>,
}

impl OnlinePolicy {
    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    /// Bin chosen for realization `realization` of ball `ball` when the bins
    /// in `occupied` are taken, or `None` to leave the ball unmatched.
    pub fn decision(&self, ball: usize, realization: usize, occupied: u32) -> Option<usize> {
        match self.decisions[ball][realization][occupied as usize] {
            SKIP => None,
            i => Some(i as usize),
        }
    }
}

/// Backward DP over occupied sets:
///
/// ```text
/// V_t(S) = Σ_j p_{t,j} max(V_{t+1}(S), max_{i∉S} w_{i,t,j} + V_{t+1}(S ∪ {i}))
///          + (1 - Σ_j p_{t,j}) V_{t+1}(S)
/// ```
///
/// A ball is matched only if that is strictly better than skipping it;
/// among equally good bins the lowest index wins.
pub fn opt_online(instance: &GeneralInstance, caps: OracleCaps) -> Result<OnlinePolicy> {
    instance.ensure_valid()?;
    let m = instance.num_bins;
    caps.check_bins(m)?;
    let size = 1usize << m;
    let n = instance.num_balls();
    let mut v_next = vec![0.0; size];
    let mut v = vec![0.0; size];
    let mut decisions: Vec<Vec<Vec<u8>>> = vec![Vec::new(); n];
    for t in (0..n).rev() {
        let ball = &instance.balls[t];
        let absent = 1.0 - ball.arrival_mass();
        let mut table = vec![vec![SKIP; size]; ball.realizations.len()];
        for s in 0..size {
            let stay = v_next[s];
            let mut total = absent.max(0.0) * stay;
            for (j, r) in ball.realizations.iter().enumerate() {
                let mut best = stay;
                let mut choice = SKIP;
                for i in 0..m {
                    if s & (1 << i) != 0 {
                        continue;
                    }
                    let cand = r.weights[i] + v_next[s | 1 << i];
                    if cand > best {
                        best = cand;
                        choice = i as u8;
                    }
                }
                table[j][s] = choice;
                total += r.prob * best;
            }
            v[s] = total;
        }
        decisions[t] = table;
        std::mem::swap(&mut v, &mut v_next);
    }
    Ok(OnlinePolicy {
        value: v_next[0],
        num_bins: m,
        decisions,
    })
}

/// Match probabilities of the best online policy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OnlineMarginals {
    pub value: f64,
    /// `x*[i,t,j] = Pr[the policy matches bin i to ball t in realization j]`.
    pub values: EdgeValues,
    /// Occupied sets reachable with positive probability when ball `t`
    /// arrives, in increasing order.
    pub reachable: Vec<Vec<u32>>,
}

/// Forward pass of the decision table of [`opt_online`].
pub fn opt_online_marginals(instance: &GeneralInstance, caps: OracleCaps) -> Result<OnlineMarginals> {
    let policy = opt_online(instance, caps)?;
    Ok(forward(&policy, instance))
}

fn forward(policy: &OnlinePolicy, instance: &GeneralInstance) -> OnlineMarginals {
    let m = instance.num_bins;
    let size = 1usize << m;
    let mut dist = vec![0.0; size];
    dist[0] = 1.0;
    let mut next = vec![0.0; size];
    let mut values = EdgeValues::zeros_for(instance);
    let mut reachable = Vec::with_capacity(instance.num_balls());
    for (t, ball) in instance.balls.iter().enumerate() {
        reachable.push((0..size).filter(|&s| dist[s] > 0.0).map(|s| s as u32).collect());
        next.fill(0.0);
        for (s, &mu) in dist.iter().enumerate() {
            if mu == 0.0 {
                continue;
            }
            let mut moved = 0.0;
            for (j, r) in ball.realizations.iter().enumerate() {
                if let Some(i) = policy.decision(t, j, s as u32) {
                    let a = mu * r.prob;
                    values.add(i, t, j, a);
                    next[s | 1 << i] += a;
                    moved += a;
                }
            }
            next[s] += mu - moved;
        }
        std::mem::swap(&mut dist, &mut next);
    }
    let value = values.weighted_sum(instance);
    OnlineMarginals {
        value,
        values,
        reachable,
    }
}
