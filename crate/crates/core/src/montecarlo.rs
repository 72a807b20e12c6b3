//! Seeded episode harness for the rounding policy.
//!
//! Episode `k` draws from [`episode_rng`]`(master_seed, k)`: ChaCha8 seeded
//! with `seed_from_u64(master_seed)` and switched to stream `k`. Episodes
//! are grouped into fixed chunks of [`CHUNK_SIZE`]; floating-point sums are
//! accumulated within a chunk in episode order and then across chunks in
//! chunk order, so a report is bit-identical for any thread count.

use std::fmt::Write as _;

use serde::Serialize;

use crate::assignment::max_weight_matching;
use crate::error::{Error, Result};
use crate::instance::GeneralInstance;
use crate::par::Execution;
use crate::policy::{episode_rng, BinRef, MatchEvent, Pick, PreparedPolicy};

pub const CHUNK_SIZE: u64 = 1 << 14;

/// Failure probability of the reported Hoeffding interval.
pub const HOEFFDING_DELTA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedManifest {
    pub master_seed: u64,
    pub generator: &'static str,
    pub stream_rule: &'static str,
    pub chunk_size: u64,
}

/// Estimated statistics of one edge `(bin, ball, realization)`; numbering
/// is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeRecord {
    pub ball: usize,
    pub bin: usize,
    pub realization: usize,
    pub frequency: f64,
    pub std_error: f64,
    pub first_pick: f64,
    pub first_pick_se: f64,
    pub second_pick: f64,
    pub second_pick_se: f64,
}

/// `Pr[bin free when ball arrives]`, 1-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VacancyRecord {
    pub ball: usize,
    pub bin: usize,
    pub frequency: f64,
    pub std_error: f64,
}

/// Plug-in covariance of two vacancy indicators at one ball, 1-based,
/// `bin_a < bin_b`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceRecord {
    pub ball: usize,
    pub bin_a: usize,
    pub bin_b: usize,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub num_episodes: u64,
    pub mean: f64,
    pub std_error: f64,
    /// Upper bound `P` on any episode's value: the max-weight matching of
    /// the heaviest realization of every edge.
    pub hoeffding_bound: f64,
    /// `P * sqrt(ln(2/δ) / (2T))` with `δ = 0.05`.
    pub hoeffding_halfwidth: f64,
    pub edges: Vec<EdgeRecord>,
    pub vacancy: Vec<VacancyRecord>,
    pub covariances: Vec<CovarianceRecord>,
    pub seeds: SeedManifest,
}

impl SimReport {
    /// One row per edge.
    pub fn edges_csv(&self) -> String {
        let mut out = String::from(
            "ball,bin,realization,frequency,std_error,first_pick,first_pick_se,second_pick,second_pick_se\n",
        );
        for e in &self.edges {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.ball,
                e.bin,
                e.realization,
                e.frequency,
                e.std_error,
                e.first_pick,
                e.first_pick_se,
                e.second_pick,
                e.second_pick_se
            );
        }
        out
    }
}

/// Per-chunk counts.
struct Tally {
    sum: f64,
    sum_sq: f64,
    /// `[ball][realization][bin]`
    first: Vec<Vec<Vec<u64>>>,
    second: Vec<Vec<Vec<u64>>>,
    /// `matched_at[bin][t]`: episodes where the bin was taken by ball `t`;
    /// index `n` counts bins never taken.
    matched_at: Vec<Vec<u64>>,
    /// `pair_min[a][b][t]` for `a < b`: episodes where the earlier of the
    /// two bins' match times is `t`.
    pair_min: Vec<Vec<Vec<u64>>>,
}

impl Tally {
    fn new(instance: &GeneralInstance) -> Self {
        let m = instance.num_bins;
        let n = instance.num_balls();
        let shape = |_: ()| -> Vec<Vec<Vec<u64>>> {
            instance
                .balls
                .iter()
                .map(|b| vec![vec![0; m]; b.realizations.len()])
                .collect()
        };
        Tally {
            sum: 0.0,
            sum_sq: 0.0,
            first: shape(()),
            second: shape(()),
            matched_at: vec![vec![0; n + 1]; m],
            pair_min: (0..m).map(|a| vec![vec![0; n + 1]; m - a]).collect(),
        }
    }

    fn record(&mut self, value: f64, events: &[MatchEvent], matched_at: &[usize], n: usize) {
        self.sum += value;
        self.sum_sq += value * value;
        for e in events {
            if let BinRef::Real(i) = e.bin {
                let table = match e.pick {
                    Pick::First => &mut self.first,
                    Pick::Second => &mut self.second,
                };
                table[e.ball][e.realization][i] += 1;
            }
        }
        let time = |i: usize| matched_at[i].min(n);
        for a in 0..matched_at.len() {
            let ta = time(a);
            self.matched_at[a][ta] += 1;
            for b in a + 1..matched_at.len() {
                self.pair_min[a][b - a][ta.min(time(b))] += 1;
            }
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        let add3 = |a: &mut Vec<Vec<Vec<u64>>>, b: &Vec<Vec<Vec<u64>>>| {
            for (x, y) in a.iter_mut().flatten().zip(b.iter().flatten()) {
                for (u, v) in x.iter_mut().zip(y) {
                    *u += v;
                }
            }
        };
        add3(&mut self.first, &other.first);
        add3(&mut self.second, &other.second);
        add3(&mut self.pair_min, &other.pair_min);
        for (x, y) in self.matched_at.iter_mut().zip(&other.matched_at) {
            for (u, v) in x.iter_mut().zip(y) {
                *u += v;
            }
        }
    }
}

/// Standard error of a Bernoulli sample mean from its success count.
fn bernoulli_se(count: u64, total: u64) -> f64 {
    if total < 2 {
        return 0.0;
    }
    let t = total as f64;
    let p = count as f64 / t;
    (p * (1.0 - p) * t / (t - 1.0)).sqrt() / t.sqrt()
}

/// Upper bound on the value of any episode.
pub fn hoeffding_bound(instance: &GeneralInstance) -> f64 {
    let rows: Vec<Vec<f64>> = instance
        .balls
        .iter()
        .map(|b| {
            (0..instance.num_bins)
                .map(|i| b.realizations.iter().map(|r| r.weights[i]).fold(0.0, f64::max))
                .collect()
        })
        .collect();
    max_weight_matching(&rows).value
}

/// Runs `episodes` episodes with the default execution mode.
pub fn simulate(
    prepared: &PreparedPolicy,
    instance: &GeneralInstance,
    episodes: u64,
    master_seed: u64,
) -> Result<SimReport> {
    simulate_with(prepared, instance, episodes, master_seed, Execution::default())
}

pub fn simulate_with(
    prepared: &PreparedPolicy,
    instance: &GeneralInstance,
    episodes: u64,
    master_seed: u64,
    execution: Execution,
) -> Result<SimReport> {
    if episodes == 0 {
        return Err(Error::Config("need at least one episode".into()));
    }
    if prepared.num_bins() != instance.num_bins || prepared.num_balls() != instance.num_balls() {
        return Err(Error::Config("policy was prepared for a different instance".into()));
    }
    let m = instance.num_bins;
    let n = instance.num_balls();

    let tallies = execution.map_chunks(episodes, CHUNK_SIZE, |range| {
        let mut tally = Tally::new(instance);
        let mut matched_at = vec![usize::MAX; m];
        let mut events = Vec::new();
        for k in range {
            let mut rng = episode_rng(master_seed, k);
            let v = prepared.run_into(instance, &mut rng, &mut matched_at, Some(&mut events), None);
            tally.record(v, &events, &matched_at, n);
        }
        tally
    });
    let mut total = Tally::new(instance);
    for t in &tallies {
        total.merge(t);
    }

    let tt = episodes as f64;
    let mean = total.sum / tt;
    let std_error = if episodes > 1 {
        ((total.sum_sq - tt * mean * mean) / (tt - 1.0)).max(0.0).sqrt() / tt.sqrt()
    } else {
        0.0
    };

    let mut edges = Vec::new();
    for (t, ball) in instance.balls.iter().enumerate() {
        for j in 0..ball.realizations.len() {
            for i in 0..m {
                let f = total.first[t][j][i];
                let s = total.second[t][j][i];
                edges.push(EdgeRecord {
                    ball: t + 1,
                    bin: i + 1,
                    realization: j + 1,
                    frequency: (f + s) as f64 / tt,
                    std_error: bernoulli_se(f + s, episodes),
                    first_pick: f as f64 / tt,
                    first_pick_se: bernoulli_se(f, episodes),
                    second_pick: s as f64 / tt,
                    second_pick_se: bernoulli_se(s, episodes),
                });
            }
        }
    }

    // Bin i is free when ball t arrives iff its match time is >= t.
    let suffix = |hist: &[u64]| -> Vec<u64> {
        let mut out = vec![0; hist.len()];
        let mut acc = 0;
        for k in (0..hist.len()).rev() {
            acc += hist[k];
            out[k] = acc;
        }
        out
    };
    let free: Vec<Vec<u64>> = total.matched_at.iter().map(|h| suffix(h)).collect();
    let mut vacancy = Vec::new();
    for t in 0..n {
        for i in 0..m {
            vacancy.push(VacancyRecord {
                ball: t + 1,
                bin: i + 1,
                frequency: free[i][t] as f64 / tt,
                std_error: bernoulli_se(free[i][t], episodes),
            });
        }
    }

    let mut covariances = Vec::new();
    for t in 0..n {
        for a in 0..m {
            for b in a + 1..m {
                let both = suffix(&total.pair_min[a][b - a])[t];
                let (est, se) = covariance_from_counts(free[a][t], free[b][t], both, episodes);
                covariances.push(CovarianceRecord {
                    ball: t + 1,
                    bin_a: a + 1,
                    bin_b: b + 1,
                    estimate: est,
                    std_error: se,
                });
            }
        }
    }

    let bound = hoeffding_bound(instance);
    Ok(SimReport {
        num_episodes: episodes,
        mean,
        std_error,
        hoeffding_bound: bound,
        hoeffding_halfwidth: bound * ((2.0 / HOEFFDING_DELTA).ln() / (2.0 * tt)).sqrt(),
        edges,
        vacancy,
        covariances,
        seeds: SeedManifest {
            master_seed,
            generator: "ChaCha8",
            stream_rule: "seed_from_u64(master_seed), set_stream(episode index)",
            chunk_size: CHUNK_SIZE,
        },
    })
}

/// Plug-in covariance of two indicators and its standard error, from the
/// counts of `A`, `B` and `A ∧ B`. The error is the sample deviation of
/// `(A - Ā)(B - B̄)` over `√T`.
fn covariance_from_counts(a: u64, b: u64, both: u64, total: u64) -> (f64, f64) {
    let t = total as f64;
    let (va, vb) = (a as f64 / t, b as f64 / t);
    let cells = [
        (1.0, 1.0, both),
        (1.0, 0.0, a - both),
        (0.0, 1.0, b - both),
        (0.0, 0.0, total + both - a - b),
    ];
    let mut mean = 0.0;
    for &(x, y, c) in &cells {
        mean += (x - va) * (y - vb) * c as f64;
    }
    mean /= t;
    if total < 2 {
        return (mean, 0.0);
    }
    let mut ss = 0.0;
    for &(x, y, c) in &cells {
        let d = (x - va) * (y - vb) - mean;
        ss += d * d * c as f64;
    }
    (mean, (ss / (t - 1.0)).sqrt() / t.sqrt())
}

/// Covariance estimates for every bin pair at ball `ball` (0-based).
pub fn estimate_covariances(
    prepared: &PreparedPolicy,
    instance: &GeneralInstance,
    episodes: u64,
    seed: u64,
    ball: usize,
) -> Result<Vec<CovarianceRecord>> {
    if ball >= instance.num_balls() {
        return Err(Error::Config(format!(
            "ball {} is outside the horizon of {} balls",
            ball + 1,
            instance.num_balls()
        )));
    }
    let report = simulate(prepared, instance, episodes, seed)?;
    Ok(report
        .covariances
        .into_iter()
        .filter(|c| c.ball == ball + 1)
        .collect())
}
