//! Client-level fairness summaries and regret against the hindsight decision.

use crate::decision::decision_loss;
use crate::error::{check_len, Error, Result};
use crate::simplex::{minimize_over_simplex, Decision, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceSummary {
    pub average: f64,
    pub worst10: f64,
    pub best10: f64,
    pub gini_x100: f64,
    pub acc_parity_gap: f64,
}

/// Population Gini coefficient times 100; zero when the mean is zero.
pub fn gini_x100(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if mean == 0.0 {
        return 0.0;
    }
    // sum_i sum_j |v_i - v_j| from sorted order in O(K log K)
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let abs_diff: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * i as f64 - (k - 1.0)) * v)
        .sum::<f64>()
        * 2.0;
    100.0 * abs_diff / (2.0 * k * k * mean)
}

pub fn performance_summary(values: &[f64]) -> Result<PerformanceSummary> {
    if values.is_empty() {
        return Err(Error::InvalidDimension("performance summary of zero clients".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("performance value {v} is not finite and nonnegative")));
    }
    let k = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = k.div_ceil(10);
    let mean_of = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(PerformanceSummary {
        average: mean_of(&sorted),
        worst10: mean_of(&sorted[..tail]),
        best10: mean_of(&sorted[k - tail..]),
        gini_x100: gini_x100(&sorted),
        acc_parity_gap: sorted[k - 1] - sorted[0],
    })
}

#[derive(Debug, Clone)]
pub struct RegretReport {
    pub regret: f64,
    pub hindsight: Decision,
    pub learner_loss: f64,
    pub hindsight_loss: f64,
}

/// Cumulative decision loss of `decisions` minus that of the best fixed
/// decision in hindsight.
pub fn cumulative_regret(decisions: &[Decision], responses: &[Vec<f64>]) -> Result<RegretReport> {
    cumulative_regret_with(decisions, responses, SolverOptions::default())
}

pub fn cumulative_regret_with(
    decisions: &[Decision],
    responses: &[Vec<f64>],
    opts: SolverOptions,
) -> Result<RegretReport> {
    check_len(decisions.len(), responses.len())?;
    let Some(first) = responses.first() else {
        return Err(Error::InvalidDimension("regret of an empty sequence".into()));
    };
    let k = first.len();
    for r in responses {
        check_len(k, r.len())?;
    }
    let learner_loss = decisions
        .iter()
        .zip(responses)
        .map(|(p, r)| decision_loss(p, r))
        .sum::<Result<f64>>()?;

    let objective = |p: &[f64]| -> f64 {
        responses
            .iter()
            .map(|r| -(1.0 + crate::simplex::dot(p, r)).ln())
            .sum()
    };
    let gradient = |p: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; k];
        for r in responses {
            let growth = 1.0 + crate::simplex::dot(p, r);
            for (gi, ri) in g.iter_mut().zip(r) {
                *gi -= ri / growth;
            }
        }
        g
    };
    let hindsight = minimize_over_simplex(objective, gradient, k, opts)?;
    let hindsight_loss = objective(hindsight.as_slice());
    Ok(RegretReport {
        regret: learner_loss - hindsight_loss,
        hindsight,
        learner_loss,
        hindsight_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::uniform_decision;

    #[test]
    fn summary_examples() {
        let s = performance_summary(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.average, s.gini_x100, s.acc_parity_gap), (1.0, 0.0, 0.0));

        let s = performance_summary(&[0.0, 1.0]).unwrap();
        assert!((s.gini_x100 - 50.0).abs() < 1e-12);
        assert_eq!(s.acc_parity_gap, 1.0);

        let s = performance_summary(&[0.9, 0.5, 0.7]).unwrap();
        assert!((s.acc_parity_gap - 0.4).abs() < 1e-12);
        assert_eq!((s.worst10, s.best10), (0.5, 0.9));
    }

    #[test]
    fn tail_uses_ceiling() {
        let v: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let s = performance_summary(&v).unwrap();
        assert_eq!(s.worst10, 0.5);
        assert_eq!(s.best10, 9.5);
    }

    #[test]
    fn gini_matches_double_sum() {
        let v = [0.3, 0.9, 0.1, 0.55, 0.0];
        let mean = v.iter().sum::<f64>() / 5.0;
        let double: f64 = v.iter().flat_map(|a| v.iter().map(move |b| (a - b).abs())).sum();
        assert!((gini_x100(&v) - 100.0 * double / (2.0 * 25.0 * mean)).abs() < 1e-12);
        assert_eq!(gini_x100(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn summary_rejects_bad_input() {
        assert!(performance_summary(&[]).is_err());
        assert!(matches!(performance_summary(&[0.5, -0.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_responses_zero_regret() {
        let d = vec![uniform_decision(3).unwrap(); 4];
        let r = vec![vec![0.0; 3]; 4];
        let rep = cumulative_regret(&d, &r).unwrap();
        assert!(rep.regret.abs() < 1e-12);
    }

    #[test]
    fn constant_response_regret() {
        let t = 7;
        let d = vec![uniform_decision(2).unwrap(); t];
        let r = vec![vec![1.0, 0.0]; t];
        let rep = cumulative_regret(&d, &r).unwrap();
        assert!((rep.regret - t as f64 * (4.0f64 / 3.0).ln()).abs() < 1e-9);
        assert!((rep.hindsight.as_slice()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_sequence_is_error() {
        assert!(cumulative_regret(&[], &[]).is_err());
    }
}
