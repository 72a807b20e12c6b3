//! Online rounding of an LP solution with two picks per ball.
//!
//! When ball `t` arrives showing realization `j`, it picks bin `i` with
//! probability `y[i,t,j] / p[t,j]`. A vacant first pick accepts with
//! probability
//!
//! ```text
//! q[i,t] = min(1, (1/2 + c) / (1 - s[i,t] (1/2 + c))),   s[i,t] = Σ_{t'<t} Σ_j y[i,t',j]
//! ```
//!
//! If the ball is still unmatched it picks again from the same
//! distribution, and the second pick is taken only if the bin is vacant and
//! the edge is *late*, meaning `s[i,t] > (1/2 - c)/(1/2 + c)`.
//!
//! Each `(t, j)` row gets a zero-weight dummy bin carrying the mass the LP
//! left unassigned, so that a pick always lands somewhere. A dummy is only
//! adjacent to its own ball: it is always vacant, has `s = 0` and is never
//! late.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{GeneralInstance, Instance};
use crate::lp::{check_online_feasible, EdgeValues, LpSolution};

/// Dummy mass below this is dropped.
pub const DUMMY_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyConfig {
    /// Slack constant; must lie in `[0, 1/2)`.
    pub c: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { c: 0.01, seed: 0 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..0.5).contains(&self.c) {
            Ok(())
        } else {
            Err(Error::Config(format!("c = {} is outside [0, 1/2)", self.c)))
        }
    }

    /// `(1/2 - c) / (1/2 + c)`; prefix mass above this makes an edge late.
    pub fn late_threshold(&self) -> f64 {
        (0.5 - self.c) / (0.5 + self.c)
    }

    pub fn acceptance(&self, prefix: f64) -> f64 {
        let h = 0.5 + self.c;
        let denom = 1.0 - prefix * h;
        if denom <= h {
            1.0
        } else {
            (h / denom).min(1.0)
        }
    }
}

#[derive(Clone, Debug)]
struct PreparedRealization {
    prob: f64,
    /// Running sums of the pick weights over real bins then the dummy;
    /// the last entry equals `prob`.
    cumulative: Vec<f64>,
}

#[derive(Clone, Debug)]
struct PreparedBall {
    realizations: Vec<PreparedRealization>,
    /// Per real bin.
    prefix: Vec<f64>,
    accept: Vec<f64>,
    late: Vec<bool>,
}

/// Everything the rounding needs at run time, derived once from an LP
/// solution. Immutable and shareable across threads.
#[derive(Clone, Debug)]
pub struct PreparedPolicy {
    config: PolicyConfig,
    num_bins: usize,
    values: EdgeValues,
    dummy: Vec<Vec<f64>>,
    balls: Vec<PreparedBall>,
}

/// Which bin a pick or match refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BinRef {
    Real(usize),
    Dummy,
}

impl BinRef {
    pub fn real(self) -> Option<usize> {
        match self {
            BinRef::Real(i) => Some(i),
            BinRef::Dummy => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pick {
    First,
    Second,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchEvent {
    pub ball: usize,
    pub bin: BinRef,
    pub pick: Pick,
    pub late: bool,
    pub realization: usize,
    /// Zero for dummy matches.
    pub weight: f64,
}

/// One simulated episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MatchTrace {
    pub events: Vec<MatchEvent>,
    pub total_weight: f64,
    /// Realization drawn by each ball, `None` if it did not arrive.
    pub arrivals: Vec<Option<usize>>,
}

impl MatchTrace {
    /// One JSON object per event with 1-based ball, bin and realization
    /// numbers.
    pub fn to_json_lines(&self) -> String {
        #[derive(Serialize)]
        struct Line {
            ball: usize,
            bin: Option<usize>,
            dummy: bool,
            pick: u8,
            late: bool,
            realization: usize,
            weight: f64,
        }
        let mut out = String::new();
        for e in &self.events {
            let line = Line {
                ball: e.ball + 1,
                bin: e.bin.real().map(|i| i + 1),
                dummy: e.bin == BinRef::Dummy,
                pick: match e.pick {
                    Pick::First => 1,
                    Pick::Second => 2,
                },
                late: e.late,
                realization: e.realization + 1,
                weight: e.weight,
            };
            out.push_str(&serde_json::to_string(&line).expect("trace lines serialize"));
            out.push('\n');
        }
        out
    }
}

impl PreparedPolicy {
    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_balls(&self) -> usize {
        self.balls.len()
    }

    /// Cleaned LP value of a real edge.
    pub fn x(&self, bin: usize, ball: usize, realization: usize) -> f64 {
        self.values.get(bin, ball, realization)
    }

    pub fn values(&self) -> &EdgeValues {
        &self.values
    }

    pub fn dummy(&self, ball: usize, realization: usize) -> f64 {
        self.dummy[ball][realization]
    }

    pub fn realization_prob(&self, ball: usize, realization: usize) -> f64 {
        self.balls[ball].realizations[realization].prob
    }

    pub fn num_realizations(&self, ball: usize) -> usize {
        self.balls[ball].realizations.len()
    }

    /// `Σ_{t'<ball} Σ_j x[bin, t', j]`.
    pub fn prefix(&self, bin: usize, ball: usize) -> f64 {
        self.balls[ball].prefix[bin]
    }

    pub fn q(&self, bin: usize, ball: usize) -> f64 {
        self.balls[ball].accept[bin]
    }

    /// Acceptance probability of a dummy bin (its prefix mass is zero).
    pub fn dummy_q(&self) -> f64 {
        self.config.acceptance(0.0)
    }

    pub fn is_late(&self, bin: usize, ball: usize) -> bool {
        self.balls[ball].late[bin]
    }

    fn sample_pick<R: Rng + ?Sized>(&self, ball: usize, realization: usize, rng: &mut R) -> BinRef {
        let r = &self.balls[ball].realizations[realization];
        let target = rng.gen::<f64>() * r.prob;
        let m = self.num_bins;
        match r.cumulative.iter().position(|&c| target < c) {
            Some(k) if k < m => BinRef::Real(k),
            Some(_) => BinRef::Dummy,
            // Rounding pushed the target past the end: take the last slot
            // with positive width.
            None => {
                let mut k = m;
                while k > 0 {
                    let lo = if k == 0 { 0.0 } else { r.cumulative[k - 1] };
                    if r.cumulative[k] > lo {
                        break;
                    }
                    k -= 1;
                }
                if k < m {
                    BinRef::Real(k)
                } else {
                    BinRef::Dummy
                }
            }
        }
    }

    fn sample_realization<R: Rng + ?Sized>(&self, ball: usize, rng: &mut R) -> Option<usize> {
        let u = rng.gen::<f64>();
        let mut acc = 0.0;
        for (j, r) in self.balls[ball].realizations.iter().enumerate() {
            acc += r.prob;
            if u < acc {
                return Some(j);
            }
        }
        None
    }

    /// Runs one episode, writing events into `events` (cleared first) and
    /// `matched_at[i]` = ball that took bin `i`, or `usize::MAX`. Returns
    /// the total weight.
    pub(crate) fn run_into<R: Rng + ?Sized>(
        &self,
        instance: &GeneralInstance,
        rng: &mut R,
        matched_at: &mut [usize],
        mut events: Option<&mut Vec<MatchEvent>>,
        mut arrivals: Option<&mut Vec<Option<usize>>>,
    ) -> f64 {
        matched_at.fill(usize::MAX);
        if let Some(ev) = events.as_deref_mut() {
            ev.clear();
        }
        if let Some(a) = arrivals.as_deref_mut() {
            a.clear();
        }
        let mut total = 0.0;
        for (t, ball) in self.balls.iter().enumerate() {
            let arrival = self.sample_realization(t, rng);
            if let Some(a) = arrivals.as_deref_mut() {
                a.push(arrival);
            }
            let Some(j) = arrival else { continue };
            if ball.realizations[j].prob <= 0.0 {
                continue;
            }
            let mut matched: Option<(BinRef, Pick)> = None;
            match self.sample_pick(t, j, rng) {
                BinRef::Real(i) => {
                    if matched_at[i] == usize::MAX && rng.gen::<f64>() < ball.accept[i] {
                        matched = Some((BinRef::Real(i), Pick::First));
                    }
                }
                BinRef::Dummy => {
                    if rng.gen::<f64>() < self.dummy_q() {
                        matched = Some((BinRef::Dummy, Pick::First));
                    }
                }
            }
            if matched.is_none() {
                if let BinRef::Real(i) = self.sample_pick(t, j, rng) {
                    if matched_at[i] == usize::MAX && ball.late[i] {
                        matched = Some((BinRef::Real(i), Pick::Second));
                    }
                }
            }
            if let Some((bin, pick)) = matched {
                let (weight, late) = match bin {
                    BinRef::Real(i) => {
                        matched_at[i] = t;
                        (instance.balls[t].realizations[j].weights[i], ball.late[i])
                    }
                    BinRef::Dummy => (0.0, false),
                };
                total += weight;
                if let Some(ev) = events.as_deref_mut() {
                    ev.push(MatchEvent {
                        ball: t,
                        bin,
                        pick,
                        late,
                        realization: j,
                        weight,
                    });
                }
            }
        }
        total
    }

    fn check_shape(&self, instance: &GeneralInstance) {
        assert_eq!(self.num_bins, instance.num_bins, "policy prepared for another instance");
        assert_eq!(self.balls.len(), instance.balls.len(), "policy prepared for another instance");
    }
}

/// Cleans the LP values, adds the dummy bins and precomputes `q`, prefix
/// sums and early/late flags.
pub fn prepare(solution: &LpSolution, instance: &GeneralInstance, config: PolicyConfig) -> Result<PreparedPolicy> {
    config.validate()?;
    instance.ensure_valid()?;
    let report = check_online_feasible(&solution.values, instance);
    if !report.is_feasible() {
        return Err(Error::Infeasible(report));
    }
    let m = instance.num_bins;
    let mut values = solution.values.clone();
    let mut dummy = Vec::with_capacity(instance.num_balls());
    for (t, ball) in instance.balls.iter().enumerate() {
        let mut row_dummy = Vec::with_capacity(ball.realizations.len());
        for (j, r) in ball.realizations.iter().enumerate() {
            let row = values.row_mut(t, j);
            for v in row.iter_mut() {
                *v = v.max(0.0);
            }
            let total: f64 = row.iter().sum();
            if total > r.prob {
                let scale = if total > 0.0 { r.prob / total } else { 0.0 };
                for v in row.iter_mut() {
                    *v *= scale;
                }
            }
            let total: f64 = row.iter().sum();
            let d = r.prob - total;
            row_dummy.push(if d < DUMMY_CUTOFF { 0.0 } else { d });
        }
        dummy.push(row_dummy);
    }

    let mut prefix = vec![0.0; m];
    let mut balls = Vec::with_capacity(instance.num_balls());
    for (t, ball) in instance.balls.iter().enumerate() {
        let realizations = ball
            .realizations
            .iter()
            .enumerate()
            .map(|(j, _)| {
                let mut cumulative = Vec::with_capacity(m + 1);
                let mut acc = 0.0;
                for &v in values.row(t, j) {
                    acc += v;
                    cumulative.push(acc);
                }
                acc += dummy[t][j];
                cumulative.push(acc);
                PreparedRealization {
                    prob: acc,
                    cumulative,
                }
            })
            .collect();
        let threshold = config.late_threshold();
        balls.push(PreparedBall {
            realizations,
            accept: prefix.iter().map(|&s| config.acceptance(s)).collect(),
            late: prefix.iter().map(|&s| s > threshold).collect(),
            prefix: prefix.clone(),
        });
        for (i, s) in prefix.iter_mut().enumerate() {
            *s += values.edge_total(i, t);
        }
    }

    Ok(PreparedPolicy {
        config,
        num_bins: m,
        values,
        dummy,
        balls,
    })
}

/// One episode on a basic instance. Draws the same random stream as
/// [`run_general_once`] on the lifted instance.
pub fn run_once<R: Rng + ?Sized>(prepared: &PreparedPolicy, instance: &Instance, rng: &mut R) -> MatchTrace {
    let lifted = crate::instance::lift_to_general(instance).expect("prepared instances are valid");
    run_general_once(prepared, &lifted, rng)
}

/// One episode on a general instance.
pub fn run_general_once<R: Rng + ?Sized>(
    prepared: &PreparedPolicy,
    instance: &GeneralInstance,
    rng: &mut R,
) -> MatchTrace {
    prepared.check_shape(instance);
    let mut matched_at = vec![usize::MAX; prepared.num_bins];
    let mut events = Vec::new();
    let mut arrivals = Vec::new();
    let total_weight = prepared.run_into(instance, rng, &mut matched_at, Some(&mut events), Some(&mut arrivals));
    MatchTrace {
        events,
        total_weight,
        arrivals,
    }
}

/// Random stream for episode `episode` under `master_seed`: ChaCha8 seeded
/// with `seed_from_u64(master_seed)`, stream number `episode`.
pub fn episode_rng(master_seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(episode);
    rng
}

/// Lossless online rounding for a single bin: realization `j` of ball `t`
/// is accepted with probability `y[t,j] / (p[t,j] (1 - Σ_{t'<t} y[t'])))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingleBinPolicy {
    /// `[ball][realization]` acceptance probabilities.
    pub accept: Vec<Vec<f64>>,
    /// Exact expected weight, from the forward recursion on the probability
    /// that the bin is still free.
    pub value: f64,
    /// Exact `Pr[matched to (t, j)]`.
    pub match_probs: Vec<Vec<f64>>,
}

pub fn single_bin_policy(solution: &LpSolution, instance: &GeneralInstance) -> Result<SingleBinPolicy> {
    if instance.num_bins != 1 {
        return Err(Error::Config(format!(
            "single-bin policy needs exactly one bin, got {}",
            instance.num_bins
        )));
    }
    instance.ensure_valid()?;
    let report = check_online_feasible(&solution.values, instance);
    if !report.is_feasible() {
        return Err(Error::Infeasible(report));
    }
    let mut prefix = 0.0;
    let mut free = 1.0;
    let mut value = 0.0;
    let mut accept = Vec::new();
    let mut match_probs = Vec::new();
    for (t, ball) in instance.balls.iter().enumerate() {
        let mut ball_accept = Vec::new();
        let mut ball_probs = Vec::new();
        let mut taken = 0.0;
        for (j, r) in ball.realizations.iter().enumerate() {
            let y = solution.values.get(0, t, j).max(0.0);
            let denom = r.prob * (1.0 - prefix);
            let a = if denom > 0.0 { (y / denom).clamp(0.0, 1.0) } else { 0.0 };
            let p = r.prob * a * free;
            value += p * r.weights[0];
            taken += p;
            ball_accept.push(a);
            ball_probs.push(p);
        }
        free -= taken;
        prefix += solution.values.edge_total(0, t).max(0.0);
        accept.push(ball_accept);
        match_probs.push(ball_probs);
    }
    Ok(SingleBinPolicy {
        accept,
        value,
        match_probs,
    })
}

impl SingleBinPolicy {
    /// One episode; returns the weight collected.
    pub fn run_once<R: Rng + ?Sized>(&self, instance: &GeneralInstance, rng: &mut R) -> f64 {
        for (t, ball) in instance.balls.iter().enumerate() {
            let u = rng.gen::<f64>();
            let mut acc = 0.0;
            let Some(j) = ball.realizations.iter().position(|r| {
                acc += r.prob;
                u < acc
            }) else {
                continue;
            };
            if rng.gen::<f64>() < self.accept[t][j] {
                return ball.realizations[j].weights[0];
            }
        }
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gap_instance, lift_to_general, random_instance, Ball};
    use crate::lp::solve_instance;

    fn unit() -> GeneralInstance {
        lift_to_general(&Instance {
            num_bins: 1,
            balls: vec![Ball {
                arrival_prob: 1.0,
                weights: vec![1.0],
            }],
        })
        .unwrap()
    }

    #[test]
    fn acceptance_formula() {
        let cfg = PolicyConfig::default();
        assert!((cfg.acceptance(0.0) - 0.51).abs() < 1e-15);
        assert_eq!(cfg.acceptance(1.0), 1.0);
        assert!((cfg.late_threshold() - 0.49 / 0.51).abs() < 1e-15);
        // Exactly as written: 0.51 / (1 - 0.5 * 0.51)
        assert_eq!(cfg.acceptance(0.5), (0.51f64 / (1.0 - 0.5 * 0.51)).min(1.0));
    }

    #[test]
    fn early_late_flags() {
        // One bin, prefix mass 0.97 before the last ball.
        let g = lift_to_general(&Instance {
            num_bins: 1,
            balls: vec![
                Ball {
                    arrival_prob: 0.97,
                    weights: vec![1.0],
                },
                Ball {
                    arrival_prob: 1.0,
                    weights: vec![1.0],
                },
            ],
        })
        .unwrap();
        let sol = LpSolution {
            values: EdgeValues::from_basic(1, &[vec![0.97], vec![0.03]]),
            objective: 1.0,
        };
        let p = prepare(&sol, &g, PolicyConfig::default()).unwrap();
        assert!(!p.is_late(0, 0));
        assert!(p.is_late(0, 1));
        assert_eq!(p.q(0, 1), 1.0);
        assert!((p.q(0, 0) - 0.51).abs() < 1e-15);
        assert!((p.dummy(1, 0) - 0.97).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config_and_infeasible_values() {
        let g = unit();
        let sol = solve_instance(&g).unwrap();
        assert!(prepare(&sol, &g, PolicyConfig { c: 0.5, seed: 0 }).is_err());
        let bad = LpSolution {
            values: EdgeValues::from_basic(1, &[vec![1.2]]),
            objective: 1.2,
        };
        assert!(matches!(prepare(&bad, &g, PolicyConfig::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn dummy_absorbs_unassigned_mass() {
        for seed in 0..5 {
            let g = lift_to_general(&random_instance(3, 4, seed, 1.0)).unwrap();
            let sol = solve_instance(&g).unwrap();
            let p = prepare(&sol, &g, PolicyConfig::default()).unwrap();
            for t in 0..4 {
                let total: f64 = (0..3).map(|i| p.x(i, t, 0)).sum::<f64>() + p.dummy(t, 0);
                assert!((total - g.balls[t].realizations[0].prob).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_arrival_gives_empty_trace() {
        let g = lift_to_general(&Instance {
            num_bins: 2,
            balls: vec![
                Ball {
                    arrival_prob: 0.0,
                    weights: vec![1.0, 2.0],
                };
                3
            ],
        })
        .unwrap();
        let sol = solve_instance(&g).unwrap();
        let p = prepare(&sol, &g, PolicyConfig::default()).unwrap();
        let mut rng = episode_rng(1, 0);
        for _ in 0..100 {
            let trace = run_general_once(&p, &g, &mut rng);
            assert!(trace.events.is_empty());
            assert_eq!(trace.total_weight, 0.0);
        }
    }

    #[test]
    fn trace_is_a_matching_and_deterministic() {
        let g = gap_instance();
        let sol = solve_instance(&g).unwrap();
        let p = prepare(&sol, &g, PolicyConfig::default()).unwrap();
        for e in 0..200 {
            let a = run_general_once(&p, &g, &mut episode_rng(9, e));
            let b = run_general_once(&p, &g, &mut episode_rng(9, e));
            assert_eq!(a, b);
            let mut bins = std::collections::HashSet::new();
            let mut balls = std::collections::HashSet::new();
            for ev in &a.events {
                assert!(balls.insert(ev.ball));
                if let BinRef::Real(i) = ev.bin {
                    assert!(bins.insert(i));
                } else {
                    assert_eq!(ev.weight, 0.0);
                }
                if ev.pick == Pick::Second {
                    assert!(ev.late);
                }
            }
        }
    }

    #[test]
    fn basic_and_lifted_runs_coincide() {
        let inst = random_instance(3, 5, 4, 1.0);
        let g = lift_to_general(&inst).unwrap();
        let sol = solve_instance(&g).unwrap();
        let p = prepare(&sol, &g, PolicyConfig::default()).unwrap();
        for e in 0..100 {
            assert_eq!(
                run_once(&p, &inst, &mut episode_rng(3, e)),
                run_general_once(&p, &g, &mut episode_rng(3, e))
            );
        }
    }

    #[test]
    fn single_bin_policy_basic_cases() {
        let g = unit();
        let sol = solve_instance(&g).unwrap();
        let policy = single_bin_policy(&sol, &g).unwrap();
        assert!((policy.accept[0][0] - 1.0).abs() < 1e-12);
        assert!((policy.value - 1.0).abs() < 1e-12);

        let two = lift_to_general(&Instance {
            num_bins: 1,
            balls: vec![
                Ball {
                    arrival_prob: 1.0,
                    weights: vec![1.0],
                },
                Ball {
                    arrival_prob: 0.5,
                    weights: vec![2.0],
                },
            ],
        })
        .unwrap();
        let sol = solve_instance(&two).unwrap();
        let policy = single_bin_policy(&sol, &two).unwrap();
        assert!((policy.value - 1.0).abs() < 1e-9);
        assert!((policy.value - sol.objective).abs() < 1e-9);
        assert!(policy.accept.iter().flatten().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn single_bin_policy_rejects_multiple_bins() {
        let g = gap_instance();
        let sol = solve_instance(&g).unwrap();
        assert!(matches!(single_bin_policy(&sol, &g), Err(Error::Config(_))));
    }

    #[test]
    fn trace_json_lines_are_one_based() {
        let g = unit();
        let sol = solve_instance(&g).unwrap();
        let p = prepare(&sol, &g, PolicyConfig::default()).unwrap();
        let trace = (0..)
            .map(|e| run_general_once(&p, &g, &mut episode_rng(0, e)))
            .find(|t| !t.events.is_empty())
            .unwrap();
        let line = trace.to_json_lines();
        assert!(line.starts_with("{\"ball\":1,\"bin\":1,\"dummy\":false,\"pick\":1"));
    }
}
