use serde::Serialize;

use super::OracleCaps;
use crate::error::Result;
use crate::instance::GeneralInstance;
use crate::lp::EdgeValues;
use crate::policy::PreparedPolicy;

/// Exact statistics of the rounding policy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    /// Expected total weight.
    pub value: f64,
    /// `Pr[(i,t,j) matched by the first pick]`.
    pub first_pick: EdgeValues,
    /// `Pr[(i,t,j) matched by the second pick]`.
    pub second_pick: EdgeValues,
    /// `vacancy[t][i] = Pr[bin i is free when ball t arrives]`.
    pub vacancy: Vec<Vec<f64>>,
    /// `covariance[t][i][j] = Cov(V_{i,t}, V_{j,t})`.
    pub covariance: Vec<Vec<Vec<f64>>>,
    /// Total state mass at the start of each step and after the last one.
    pub mass: Vec<f64>,
}

impl OracleResult {
    pub fn marginal(&self, bin: usize, ball: usize, realization: usize) -> f64 {
        self.first_pick.get(bin, ball, realization) + self.second_pick.get(bin, ball, realization)
    }

    /// `Pr[(i,t) ∈ M]` summed over realizations.
    pub fn edge_marginal(&self, bin: usize, ball: usize) -> f64 {
        self.first_pick.edge_total(bin, ball) + self.second_pick.edge_total(bin, ball)
    }
}

/// Distribution over occupied-bin masks when a ball arrives.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateDistribution {
    /// `(occupied mask, probability)` for every mask with positive mass,
    /// in increasing mask order.
    pub masses: Vec<(u32, f64)>,
}

impl StateDistribution {
    pub fn total(&self) -> f64 {
        self.masses.iter().map(|&(_, m)| m).sum()
    }
}

/// Exact first/second-pick marginals, vacancies and vacancy covariances of
/// the prepared policy, by forward DP over occupied sets. Dummy bins share
/// one always-vacant pseudo-bin: a dummy is only reachable from its own
/// ball, so its occupancy never affects later steps.
pub fn exact_policy_marginals(
    prepared: &PreparedPolicy,
    instance: &GeneralInstance,
    caps: OracleCaps,
) -> Result<OracleResult> {
    let m = instance.num_bins;
    let n = instance.num_balls();
    let mut first = EdgeValues::zeros_for(instance);
    let mut second = EdgeValues::zeros_for(instance);
    let mut vacancy = Vec::with_capacity(n);
    let mut covariance = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n + 1);
    let last = run(prepared, instance, caps, |t, dist, step| {
        let (vac, cov) = vacancy_moments(dist, m);
        vacancy.push(vac);
        covariance.push(cov);
        mass.push(dist.iter().sum());
        for j in 0..step.first.len() {
            for i in 0..m {
                first.set(i, t, j, step.first[j][i]);
                second.set(i, t, j, step.second[j][i]);
            }
        }
    })?;
    mass.push(last.iter().sum());
    let value = first.weighted_sum(instance) + second.weighted_sum(instance);
    Ok(OracleResult {
        value,
        first_pick: first,
        second_pick: second,
        vacancy,
        covariance,
        mass,
    })
}

/// The occupied-set distribution seen by each ball, plus the final one.
pub fn policy_state_distributions(
    prepared: &PreparedPolicy,
    instance: &GeneralInstance,
    caps: OracleCaps,
) -> Result<Vec<StateDistribution>> {
    let mut out = Vec::new();
    let sparse = |dist: &[f64]| StateDistribution {
        masses: dist
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m > 0.0)
            .map(|(s, &m)| (s as u32, m))
            .collect(),
    };
    let last = run(prepared, instance, caps, |_, dist, _| out.push(sparse(dist)))?;
    out.push(sparse(&last));
    Ok(out)
}

struct StepMarginals {
    /// `[realization][bin]`
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

fn vacancy_moments(dist: &[f64], m: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut vac = vec![0.0; m];
    let mut joint = vec![vec![0.0; m]; m];
    let full = (1usize << m) - 1;
    for (s, &mu) in dist.iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        let free = !s & full;
        let mut a = free;
        while a != 0 {
            let i = a.trailing_zeros() as usize;
            a &= a - 1;
            vac[i] += mu;
            let mut b = a;
            while b != 0 {
                let j = b.trailing_zeros() as usize;
                b &= b - 1;
                joint[i][j] += mu;
            }
        }
    }
    let mut cov = vec![vec![0.0; m]; m];
    for i in 0..m {
        cov[i][i] = vac[i] * (1.0 - vac[i]);
        for j in i + 1..m {
            let c = joint[i][j] - vac[i] * vac[j];
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    (vac, cov)
}

/// Drives the DP, calling `observe(t, dist_before_t, marginals_of_t)` per
/// ball and returning the final distribution.
fn run(
    prepared: &PreparedPolicy,
    instance: &GeneralInstance,
    caps: OracleCaps,
    mut observe: impl FnMut(usize, &[f64], &StepMarginals),
) -> Result<Vec<f64>> {
    let m = instance.num_bins;
    caps.check_bins(m)?;
    assert_eq!(prepared.num_bins(), m, "policy prepared for another instance");
    assert_eq!(prepared.num_balls(), instance.num_balls(), "policy prepared for another instance");

    let size = 1usize << m;
    let mut dist = vec![0.0; size];
    dist[0] = 1.0;
    let mut next = vec![0.0; size];
    let qd = prepared.dummy_q();

    for t in 0..instance.num_balls() {
        let k = prepared.num_realizations(t);
        let mut step = StepMarginals {
            first: vec![vec![0.0; m]; k],
            second: vec![vec![0.0; m]; k],
        };
        next.fill(0.0);
        let q: Vec<f64> = (0..m).map(|i| prepared.q(i, t)).collect();
        let late: Vec<bool> = (0..m).map(|i| prepared.is_late(i, t)).collect();
        let xs: Vec<Vec<f64>> = (0..k).map(|j| (0..m).map(|i| prepared.x(i, t, j)).collect()).collect();
        for (s, &mu) in dist.iter().enumerate() {
            if mu == 0.0 {
                continue;
            }
            let mut moved = 0.0;
            for j in 0..k {
                let p = prepared.realization_prob(t, j);
                if p <= 0.0 {
                    continue;
                }
                let x = &xs[j];
                let d = prepared.dummy(t, j);
                // Probability (times p) that the first pick leaves the
                // ball unmatched.
                let mut unmatched = d * (1.0 - qd);
                for i in 0..m {
                    if x[i] == 0.0 {
                        continue;
                    }
                    if s & (1 << i) == 0 {
                        let a = mu * x[i] * q[i];
                        step.first[j][i] += a;
                        next[s | 1 << i] += a;
                        moved += a;
                        unmatched += x[i] * (1.0 - q[i]);
                    } else {
                        unmatched += x[i];
                    }
                }
                for i in 0..m {
                    if x[i] == 0.0 || !late[i] || s & (1 << i) != 0 {
                        continue;
                    }
                    let a = mu * unmatched * x[i] / p;
                    step.second[j][i] += a;
                    next[s | 1 << i] += a;
                    moved += a;
                }
            }
            next[s] += mu - moved;
        }
        observe(t, &dist, &step);
        std::mem::swap(&mut dist, &mut next);
    }
    Ok(dist)
}
