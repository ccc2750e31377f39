//! Synthetic workloads behind the `regret-bench` and `unify-check` commands.

use rand::Rng;
use serde::Serialize;

use crate::aggregator::{baseline_coefficients, eg_unified_step, unified_form, AggregatorMethod, FtrlState, OnsState};
use crate::decision::{decision_grad, dr_response, linearized_grad, lipschitz_constants};
use crate::error::{Error, Result};
use crate::fedsim::{sample_clients, stream_rng};
use crate::metrics::cumulative_regret;
use crate::response::{ResponseBounds, ResponseVector};
use crate::simplex::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResponsePattern {
    /// Independent uniform responses.
    Iid,
    /// One strong client at a time, rotating every 50 rounds.
    Switching,
    /// Smooth phase-shifted sinusoids.
    Drifting,
    /// Rewards whichever client the learner currently weights least.
    Adversarial,
}

impl ResponsePattern {
    pub const ALL: [ResponsePattern; 4] = [
        ResponsePattern::Iid,
        ResponsePattern::Switching,
        ResponsePattern::Drifting,
        ResponsePattern::Adversarial,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OnlineLearner {
    Ons,
    Ftrl,
    /// FTRL fed doubly robust, linearized gradients from a `sampling` fraction
    /// of clients per round.
    FtrlPartial { sampling: f64 },
}

impl OnlineLearner {
    pub fn name(&self) -> String {
        match self {
            OnlineLearner::Ons => "AAggFF-S".into(),
            OnlineLearner::Ftrl => "AAggFF-D".into(),
            OnlineLearner::FtrlPartial { sampling } => format!("AAggFF-D(C={sampling})"),
        }
    }
}

const SWITCH_EVERY: usize = 50;
const DRIFT_PERIOD: f64 = 200.0;

/// Response vector of round `t`; `current` is consulted only by the adaptive
/// pattern. Oblivious patterns are prefix-consistent across horizons.
pub fn pattern_response(
    pattern: ResponsePattern,
    k: usize,
    t: usize,
    bounds: ResponseBounds,
    seed: u64,
    current: &Decision,
) -> Vec<f64> {
    let (c1, w) = (bounds.c1(), bounds.width());
    let mut rng = stream_rng(seed, t as u64, 1);
    match pattern {
        ResponsePattern::Iid => (0..k).map(|_| c1 + w * rng.random::<f64>()).collect(),
        ResponsePattern::Switching => {
            let best = (t / SWITCH_EVERY) % k;
            (0..k)
                .map(|i| if i == best { c1 + w } else { c1 + 0.5 * w * rng.random::<f64>() })
                .collect()
        }
        ResponsePattern::Drifting => (0..k)
            .map(|i| {
                let phase = std::f64::consts::TAU * (t as f64 / DRIFT_PERIOD + i as f64 / k as f64);
                c1 + w * (0.5 + 0.5 * phase.sin())
            })
            .collect(),
        ResponsePattern::Adversarial => {
            let p = current.as_slice();
            let target = (0..k).min_by(|a, b| p[*a].total_cmp(&p[*b])).unwrap_or(0);
            (0..k).map(|i| if i == target { c1 + w } else { c1 }).collect()
        }
    }
}

/// Theoretical regret bound for `learner` at horizon `t`.
pub fn regret_bound(learner: OnlineLearner, bounds: ResponseBounds, k: usize, t: usize) -> Result<f64> {
    let (k_f, t_f) = (k as f64, t as f64);
    Ok(match learner {
        OnlineLearner::Ons => {
            let l = lipschitz_constants(bounds, 1.0)?.l_inf;
            2.0 * l * k_f * (1.0 + (1.0 + t_f / (16.0 * k_f)).ln())
        }
        OnlineLearner::Ftrl => {
            let l = lipschitz_constants(bounds, 1.0)?.l_inf;
            2.0 * l * (t_f * k_f.ln()).sqrt()
        }
        OnlineLearner::FtrlPartial { sampling } => {
            let l = lipschitz_constants(bounds, sampling)?.l_inf_dr;
            2.0 * l * (t_f * k_f.ln()).sqrt()
        }
    })
}

#[derive(Debug, Clone)]
pub struct RegretRun {
    pub regret: f64,
    pub bound: f64,
    pub decisions: Vec<Decision>,
    pub responses: Vec<Vec<f64>>,
}

enum Learner {
    Ons(OnsState),
    Ftrl(FtrlState),
}

/// Plays `learner` for `t` rounds against `pattern` and measures regret
/// against the best fixed decision on the full response sequence.
pub fn run_regret(
    learner: OnlineLearner,
    pattern: ResponsePattern,
    k: usize,
    t: usize,
    bounds: ResponseBounds,
    seed: u64,
) -> Result<RegretRun> {
    if t == 0 {
        return Err(Error::InvalidDimension("horizon must be positive".into()));
    }
    let (sampling, lip) = match learner {
        OnlineLearner::Ons | OnlineLearner::Ftrl => (1.0, lipschitz_constants(bounds, 1.0)?.l_inf),
        OnlineLearner::FtrlPartial { sampling } => (sampling, lipschitz_constants(bounds, sampling)?.l_inf_dr),
    };
    let mut state = match learner {
        OnlineLearner::Ons => Learner::Ons(OnsState::new(k, lip)?),
        _ => Learner::Ftrl(FtrlState::new(k, lip)?),
    };
    let mut current = Decision::uniform(k)?;
    let mut decisions = Vec::with_capacity(t);
    let mut responses = Vec::with_capacity(t);
    for round in 0..t {
        let r = pattern_response(pattern, k, round, bounds, seed, &current);
        let next = match &mut state {
            Learner::Ons(s) => s.step(&decision_grad(&current, &r)?)?,
            Learner::Ftrl(s) if sampling >= 1.0 => s.step(&decision_grad(&current, &r)?)?,
            Learner::Ftrl(s) => {
                let mut rng = stream_rng(seed ^ 0x5eed, round as u64, 0);
                let ids = sample_clients(k, sampling, &mut rng);
                let seen: Vec<f64> = ids.iter().map(|&i| r[i]).collect();
                let raw = ResponseVector::from_partial(k, &ids, &seen)?;
                let reference = raw.observed_mean().unwrap_or(bounds.c1());
                let r_hat = dr_response(&raw, sampling)?;
                s.step(&linearized_grad(&r_hat, &current, reference)?)?
            }
        };
        decisions.push(std::mem::replace(&mut current, next));
        responses.push(r);
    }
    let report = cumulative_regret(&decisions, &responses)?;
    Ok(RegretRun {
        regret: report.regret,
        bound: regret_bound(learner, bounds, k, t)?,
        decisions,
        responses,
    })
}

/// Large exponent standing in for the AFL limit of the QFedAvg form.
pub const AFL_LIMIT_Q: f64 = 2000.0;

#[derive(Debug, Clone, Serialize)]
pub struct UnifyReport {
    pub method: &'static str,
    pub instances: usize,
    pub max_err: f64,
}

fn random_method(name: &str, losses: &[f64], rng: &mut impl Rng) -> AggregatorMethod {
    match name {
        "Static" => AggregatorMethod::Static,
        "QFedAvg" => AggregatorMethod::QFedAvg {
            q: rng.random_range(0.0..5.0),
        },
        "TERM" => AggregatorMethod::Term {
            lambda: rng.random_range(0.01..10.0),
        },
        "PropFair" => {
            let max = losses.iter().copied().fold(0.0, f64::max);
            AggregatorMethod::PropFair {
                m: max + rng.random_range(0.1..3.0),
            }
        }
        _ => AggregatorMethod::Afl,
    }
}

/// Compares one exponentiated-gradient step in unified form against the
/// closed-form coefficients of every baseline on random instances.
pub fn unify_check(instances: usize, seed: u64) -> Result<Vec<UnifyReport>> {
    let names = ["Static", "QFedAvg", "TERM", "PropFair", "AFL"];
    let mut out = Vec::new();
    for (mi, name) in names.iter().enumerate() {
        let mut max_err: f64 = 0.0;
        for inst in 0..instances {
            let mut rng = stream_rng(seed, inst as u64, mi as u64 + 1);
            let k = rng.random_range(2..=20);
            let n: Vec<u64> = (0..k).map(|_| rng.random_range(1..=1000)).collect();
            let mut f: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..3.0)).collect();
            if *name == "AFL" {
                // keep a clear winner so the large-q limit is reached
                let top = rng.random_range(0..k);
                let others = f.iter().enumerate().filter(|(i, _)| *i != top).map(|(_, v)| *v);
                f[top] = 1.05 * others.fold(0.0, f64::max).max(f[top]);
            }
            let method = random_method(name, &f, &mut rng);
            let closed = baseline_coefficients(method, &n, &f)?;
            let unified = match unified_form(method, &n, &f)? {
                Some((prior, r, step)) => eg_unified_step(&prior, &r, step)?,
                None => {
                    let (prior, r, step) = unified_form(AggregatorMethod::QFedAvg { q: AFL_LIMIT_Q }, &n, &f)?
                        .expect("QFedAvg has a unified form");
                    eg_unified_step(&prior, &r, step)?
                }
            };
            let err = closed
                .as_slice()
                .iter()
                .zip(unified.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            max_err = max_err.max(err);
        }
        out.push(UnifyReport {
            method: name,
            instances,
            max_err,
        });
    }
    Ok(out)
}
