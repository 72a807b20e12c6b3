use rand::Rng;
use serde::Serialize;

use super::OracleCaps;
use crate::assignment::max_weight_matching;
use crate::error::{Error, Result};
use crate::instance::GeneralInstance;
use crate::par::Execution;
use crate::policy::episode_rng;

/// Leftover arrival mass below this is treated as zero.
const NONE_CUTOFF: f64 = 1e-15;
const PROFILE_CHUNK: u64 = 1 << 12;

/// The prophet benchmark, exact or estimated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OfflineValue {
    pub value: f64,
    pub exact: bool,
    /// Number of profiles enumerated, or samples drawn.
    pub count: u64,
    /// 95% normal-approximation half-width; zero when exact.
    pub ci_halfwidth: f64,
}

/// `(realization index or None, probability)` for every outcome of each
/// ball with positive probability.
fn outcomes(instance: &GeneralInstance) -> Vec<Vec<(Option<usize>, f64)>> {
    instance
        .balls
        .iter()
        .map(|b| {
            let mut o: Vec<(Option<usize>, f64)> = b
                .realizations
                .iter()
                .enumerate()
                .filter(|(_, r)| r.prob > 0.0)
                .map(|(j, r)| (Some(j), r.prob))
                .collect();
            let rest = 1.0 - b.arrival_mass();
            if rest > NONE_CUTOFF {
                o.push((None, rest));
            }
            if o.is_empty() {
                o.push((None, 1.0));
            }
            o
        })
        .collect()
}

fn profile_value(instance: &GeneralInstance, profile: &[Option<usize>]) -> f64 {
    let rows: Vec<Vec<f64>> = profile
        .iter()
        .enumerate()
        .filter_map(|(t, j)| j.map(|j| instance.balls[t].realizations[j].weights.clone()))
        .filter(|w| w.iter().any(|&x| x > 0.0))
        .collect();
    max_weight_matching(&rows).value
}

/// Exact expected max-weight matching over every arrival profile.
pub fn opt_offline(instance: &GeneralInstance, caps: OracleCaps, execution: Execution) -> Result<f64> {
    instance.ensure_valid()?;
    caps.check_bins(instance.num_bins)?;
    let outcomes = outcomes(instance);
    let total = outcomes
        .iter()
        .try_fold(1u64, |acc, o| acc.checked_mul(o.len() as u64))
        .unwrap_or(u64::MAX);
    if total > caps.max_profiles {
        return Err(Error::CapExceeded {
            what: "number of arrival profiles",
            limit: caps.max_profiles,
            actual: total,
        });
    }
    let partial = execution.map_chunks(total, PROFILE_CHUNK, |range| {
        let mut profile = vec![None; outcomes.len()];
        let mut sum = 0.0;
        for k in range {
            // Mixed-radix digits, first ball least significant.
            let mut rest = k;
            let mut prob = 1.0;
            for (t, o) in outcomes.iter().enumerate() {
                let d = (rest % o.len() as u64) as usize;
                rest /= o.len() as u64;
                profile[t] = o[d].0;
                prob *= o[d].1;
            }
            if prob > 0.0 {
                sum += prob * profile_value(instance, &profile);
            }
        }
        sum
    });
    Ok(partial.iter().sum())
}

/// Sample-average estimate of the offline optimum from `samples` profiles
/// drawn with [`episode_rng`] streams.
pub fn opt_offline_estimate(
    instance: &GeneralInstance,
    samples: u64,
    seed: u64,
    execution: Execution,
) -> Result<OfflineValue> {
    instance.ensure_valid()?;
    if samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let partial = execution.map_chunks(samples, PROFILE_CHUNK, |range| {
        let mut profile = vec![None; instance.num_balls()];
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in range {
            let mut rng = episode_rng(seed, k);
            for (t, b) in instance.balls.iter().enumerate() {
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                profile[t] = b.realizations.iter().position(|r| {
                    acc += r.prob;
                    u < acc
                });
            }
            let v = profile_value(instance, &profile);
            s1 += v;
            s2 += v * v;
        }
        (s1, s2)
    });
    let (s1, s2) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = s1 / n;
    let var = if samples > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(OfflineValue {
        value: mean,
        exact: false,
        count: samples,
        ci_halfwidth: 1.96 * (var / n).sqrt(),
    })
}

/// Exact value when the profile count is within the cap, otherwise a
/// sampled estimate.
pub fn opt_offline_or_estimate(
    instance: &GeneralInstance,
    caps: OracleCaps,
    samples: u64,
    seed: u64,
    execution: Execution,
) -> Result<OfflineValue> {
    match opt_offline(instance, caps, execution) {
        Ok(value) => Ok(OfflineValue {
            value,
            exact: true,
            count: outcomes(instance).iter().map(|o| o.len() as u64).product(),
            ci_halfwidth: 0.0,
        }),
        Err(Error::CapExceeded {
            what: "number of arrival profiles",
            ..
        }) => opt_offline_estimate(instance, samples, seed, execution),
        Err(e) => Err(e),
    }
}
