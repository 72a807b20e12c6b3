//! Problem data for both arrival models, validation, generators and the
//! JSON document format.
//!
//! Two models are supported:
//!
//! * **basic** — ball `t` arrives with probability `p_t` and, when it does,
//!   offers weight `w[i]` to bin `i`.
//! * **general** — ball `t` draws one of an explicit list of weight vectors
//!   `(p_{t,j}, v_{t,j})`; leftover probability mass is the all-zero vector.
//!
//! Every algorithm in the crate runs on [`GeneralInstance`]; a basic
//! instance is embedded with [`lift_to_general`], which gives each ball a
//! single realization.
//!
//! Balls and bins are indexed from 0 in the API. Validation messages number
//! them from 1.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Slack allowed on the sum of a general ball's realization probabilities.
pub const PROB_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub arrival_prob: f64,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub num_bins: usize,
    pub balls: Vec<Ball>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub prob: f64,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralBall {
    pub realizations: Vec<Realization>,
}

impl GeneralBall {
    /// Total probability that the ball shows up with one of its listed
    /// weight vectors.
    pub fn arrival_mass(&self) -> f64 {
        self.realizations.iter().map(|r| r.prob).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralInstance {
    pub num_bins: usize,
    pub balls: Vec<GeneralBall>,
}

impl GeneralInstance {
    pub fn num_balls(&self) -> usize {
        self.balls.len()
    }

    pub fn max_weight(&self) -> f64 {
        self.balls
            .iter()
            .flat_map(|b| b.realizations.iter())
            .flat_map(|r| r.weights.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.num_bins == 0 {
            report.push("num_bins", "must be at least 1");
        }
        for (t, ball) in self.balls.iter().enumerate() {
            let mut sum = 0.0;
            for (j, r) in ball.realizations.iter().enumerate() {
                let at = format!("ball[{}].realization[{}]", t + 1, j + 1);
                check_prob(&mut report, &format!("{at}.p"), r.prob);
                check_weights(&mut report, &at, &r.weights, self.num_bins);
                sum += r.prob;
            }
            if sum > 1.0 + PROB_SUM_TOLERANCE {
                report.push(
                    format!("ball[{}].realizations", t + 1),
                    format!("probabilities sum to {sum}, above 1"),
                );
            }
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().into_result()
    }
}

impl Instance {
    pub fn num_balls(&self) -> usize {
        self.balls.len()
    }

    pub fn max_weight(&self) -> f64 {
        self.balls
            .iter()
            .flat_map(|b| b.weights.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.num_bins == 0 {
            report.push("num_bins", "must be at least 1");
        }
        for (t, ball) in self.balls.iter().enumerate() {
            let at = format!("ball[{}]", t + 1);
            check_prob(&mut report, &format!("{at}.arrival_prob"), ball.arrival_prob);
            check_weights(&mut report, &at, &ball.weights, self.num_bins);
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().into_result()
    }
}

fn check_prob(report: &mut ValidationReport, path: &str, p: f64) {
    if !(0.0..=1.0).contains(&p) {
        report.push(path, format!("probability {p} outside [0, 1]"));
    }
}

fn check_weights(report: &mut ValidationReport, at: &str, weights: &[f64], num_bins: usize) {
    if weights.len() != num_bins {
        report.push(
            format!("{at}.weights"),
            format!("length {} does not match num_bins {num_bins}", weights.len()),
        );
    }
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            report.push(
                format!("{at}.weights[{}]", i + 1),
                format!("weight {w} must be finite and non-negative"),
            );
        }
    }
}

/// Either arrival model, as read from an instance document.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyInstance {
    Basic(Instance),
    General(GeneralInstance),
}

impl AnyInstance {
    pub fn validate(&self) -> ValidationReport {
        match self {
            AnyInstance::Basic(i) => i.validate(),
            AnyInstance::General(g) => g.validate(),
        }
    }

    pub fn num_bins(&self) -> usize {
        match self {
            AnyInstance::Basic(i) => i.num_bins,
            AnyInstance::General(g) => g.num_bins,
        }
    }

    pub fn num_balls(&self) -> usize {
        match self {
            AnyInstance::Basic(i) => i.num_balls(),
            AnyInstance::General(g) => g.num_balls(),
        }
    }

    pub fn max_weight(&self) -> f64 {
        match self {
            AnyInstance::Basic(i) => i.max_weight(),
            AnyInstance::General(g) => g.max_weight(),
        }
    }

    /// The general-model view every algorithm runs on.
    pub fn to_general(&self) -> Result<GeneralInstance> {
        match self {
            AnyInstance::Basic(i) => lift_to_general(i),
            AnyInstance::General(g) => {
                g.ensure_valid()?;
                Ok(g.clone())
            }
        }
    }
}

impl From<Instance> for AnyInstance {
    fn from(i: Instance) -> Self {
        AnyInstance::Basic(i)
    }
}

impl From<GeneralInstance> for AnyInstance {
    fn from(g: GeneralInstance) -> Self {
        AnyInstance::General(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// All invariant violations found in an instance; empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no violations");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

/// Embeds a basic instance in the general model: each ball becomes the
/// single realization `(p_t, w_t)`, the complementary mass being the
/// all-zero vector.
pub fn lift_to_general(instance: &Instance) -> Result<GeneralInstance> {
    instance.ensure_valid()?;
    Ok(GeneralInstance {
        num_bins: instance.num_bins,
        balls: instance
            .balls
            .iter()
            .map(|b| GeneralBall {
                realizations: vec![Realization {
                    prob: b.arrival_prob,
                    weights: b.weights.clone(),
                }],
            })
            .collect(),
    })
}

/// Two bins, three balls. Ball `k` (k = 1, 2) offers weight 1 to bin `k`
/// alone with probability 1/2; the last ball offers weight 1 to both bins
/// and always arrives. The LP bound is 2 while the best online policy earns
/// 7/4.
pub fn gap_instance() -> GeneralInstance {
    let single = |prob: f64, weights: Vec<f64>| GeneralBall {
        realizations: vec![Realization { prob, weights }],
    };
    GeneralInstance {
        num_bins: 2,
        balls: vec![
            single(0.5, vec![1.0, 0.0]),
            single(0.5, vec![0.0, 1.0]),
            single(1.0, vec![1.0, 1.0]),
        ],
    }
}

/// Uniform random basic instance: arrival probabilities in (0, 1], weights
/// in [0, weight_scale]. Deterministic in `seed`.
pub fn random_instance(num_bins: usize, num_balls: usize, seed: u64, weight_scale: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let balls = (0..num_balls)
        .map(|_| {
            let arrival_prob = 1.0 - rng.gen::<f64>();
            let weights = (0..num_bins).map(|_| rng.gen::<f64>() * weight_scale).collect();
            Ball {
                arrival_prob,
                weights,
            }
        })
        .collect();
    Instance { num_bins, balls }
}

/// Random general instance with between 1 and `max_realizations` weight
/// vectors per ball. The total arrival mass of each ball is uniform in
/// (0, 1] and split between its realizations by random positive shares.
pub fn random_general_instance(
    num_bins: usize,
    num_balls: usize,
    max_realizations: usize,
    seed: u64,
    weight_scale: f64,
) -> GeneralInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_realizations = max_realizations.max(1);
    let balls = (0..num_balls)
        .map(|_| {
            let k = rng.gen_range(1..=max_realizations);
            let mass = 1.0 - rng.gen::<f64>();
            let shares: Vec<f64> = (0..k).map(|_| 1.0 - rng.gen::<f64>()).collect();
            let total: f64 = shares.iter().sum();
            let realizations = shares
                .iter()
                .map(|s| Realization {
                    prob: mass * s / total,
                    weights: (0..num_bins).map(|_| rng.gen::<f64>() * weight_scale).collect(),
                })
                .collect();
            GeneralBall { realizations }
        })
        .collect();
    GeneralInstance { num_bins, balls }
}

// ---------------------------------------------------------------------------
// JSON document format
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DocOut<'a> {
    model: &'static str,
    num_bins: usize,
    balls: Vec<BallOut<'a>>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum BallOut<'a> {
    Basic { p: f64, w: &'a [f64] },
    General { realizations: Vec<RealizationOut<'a>> },
}

#[derive(Serialize)]
struct RealizationOut<'a> {
    p: f64,
    w: &'a [f64],
}

/// Serializes an instance as a pretty-printed JSON document.
pub fn write_instance(instance: &AnyInstance) -> Vec<u8> {
    let doc = match instance {
        AnyInstance::Basic(i) => DocOut {
            model: "basic",
            num_bins: i.num_bins,
            balls: i
                .balls
                .iter()
                .map(|b| BallOut::Basic {
                    p: b.arrival_prob,
                    w: &b.weights,
                })
                .collect(),
        },
        AnyInstance::General(g) => DocOut {
            model: "general",
            num_bins: g.num_bins,
            balls: g
                .balls
                .iter()
                .map(|b| BallOut::General {
                    realizations: b
                        .realizations
                        .iter()
                        .map(|r| RealizationOut {
                            p: r.prob,
                            w: &r.weights,
                        })
                        .collect(),
                })
                .collect(),
        },
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("instance documents always serialize");
    out.push(b'\n');
    out
}

/// Parses and validates an instance document. Numbers may be JSON numbers
/// or strings holding a decimal or an exact ratio `"a/b"`.
pub fn read_instance(bytes: &[u8]) -> Result<AnyInstance> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        path: "/".into(),
        message: e.to_string(),
    })?;
    let obj = root.as_object().ok_or_else(|| parse_err("", "expected an object"))?;
    let model = field(obj, "", "model")?
        .as_str()
        .ok_or_else(|| parse_err("/model", "expected a string"))?;
    let num_bins = field(obj, "", "num_bins")?
        .as_u64()
        .ok_or_else(|| parse_err("/num_bins", "expected a non-negative integer"))? as usize;
    let balls = field(obj, "", "balls")?
        .as_array()
        .ok_or_else(|| parse_err("/balls", "expected an array"))?;

    let instance = match model {
        "basic" => {
            let balls = balls
                .iter()
                .enumerate()
                .map(|(t, b)| {
                    let at = format!("/balls/{t}");
                    let o = b.as_object().ok_or_else(|| parse_err(&at, "expected an object"))?;
                    Ok(Ball {
                        arrival_prob: number(field(o, &at, "p")?, &format!("{at}/p"))?,
                        weights: numbers(field(o, &at, "w")?, &format!("{at}/w"))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            AnyInstance::Basic(Instance { num_bins, balls })
        }
        "general" => {
            let balls = balls
                .iter()
                .enumerate()
                .map(|(t, b)| {
                    let at = format!("/balls/{t}");
                    let o = b.as_object().ok_or_else(|| parse_err(&at, "expected an object"))?;
                    let rs_at = format!("{at}/realizations");
                    let rs = field(o, &at, "realizations")?
                        .as_array()
                        .ok_or_else(|| parse_err(&rs_at, "expected an array"))?;
                    let realizations = rs
                        .iter()
                        .enumerate()
                        .map(|(j, r)| {
                            let at = format!("{rs_at}/{j}");
                            let o = r.as_object().ok_or_else(|| parse_err(&at, "expected an object"))?;
                            Ok(Realization {
                                prob: number(field(o, &at, "p")?, &format!("{at}/p"))?,
                                weights: numbers(field(o, &at, "w")?, &format!("{at}/w"))?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(GeneralBall { realizations })
                })
                .collect::<Result<Vec<_>>>()?;
            AnyInstance::General(GeneralInstance { num_bins, balls })
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    instance.validate().into_result()?;
    Ok(instance)
}

fn parse_err(path: &str, message: &str) -> Error {
    Error::Parse {
        path: if path.is_empty() { "/".into() } else { path.into() },
        message: message.into(),
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, at: &str, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| parse_err(&format!("{at}/{name}"), "missing field"))
}

fn numbers(v: &Value, path: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| parse_err(path, "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{path}/{i}")))
        .collect()
}

fn number(v: &Value, path: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| parse_err(path, "number out of range")),
        Value::String(s) => parse_rational(s).ok_or_else(|| parse_err(path, "expected a number or \"a/b\"")),
        _ => Err(parse_err(path, "expected a number")),
    }
}

/// Parses `"a/b"` (integers or decimals on both sides) or a plain decimal.
pub fn parse_rational(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().ok()?;
            let den: f64 = den.trim().parse().ok()?;
            (den != 0.0).then(|| num / den)
        }
        None => s.parse().ok(),
    }
}
