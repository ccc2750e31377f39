//! Decision loss `-log(1 + <p, r>)`, its gradient, the doubly-robust response
//! estimate for partially observed rounds, and the gradient linearized in the
//! response around the observed mean.

use crate::error::{check_len, Error, Result};
use crate::response::{ResponseBounds, ResponseVector};
use crate::simplex::{dot, Decision};

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionLossRecord {
    pub round: usize,
    pub loss: f64,
    pub gradient: Vec<f64>,
}

impl DecisionLossRecord {
    pub fn compute(round: usize, p: &Decision, r: &[f64]) -> Result<Self> {
        Ok(DecisionLossRecord {
            round,
            loss: decision_loss(p, r)?,
            gradient: decision_grad(p, r)?,
        })
    }
}

fn growth(p: &Decision, r: &[f64]) -> Result<f64> {
    check_len(p.len(), r.len())?;
    let g = 1.0 + p.dot(r);
    if !(g > 0.0) {
        return Err(Error::Domain(format!("1 + <p, r> = {g} is not positive")));
    }
    Ok(g)
}

pub fn decision_loss(p: &Decision, r: &[f64]) -> Result<f64> {
    Ok(-growth(p, r)?.ln())
}

pub fn decision_grad(p: &Decision, r: &[f64]) -> Result<Vec<f64>> {
    let g = growth(p, r)?;
    Ok(r.iter().map(|ri| -ri / g).collect())
}

/// Doubly-robust fill-in of a partially observed response vector.
///
/// Observed entries are reweighted by `1/sampling`, unobserved ones are imputed
/// with the observed mean.
pub fn dr_response(raw: &ResponseVector, sampling: f64) -> Result<Vec<f64>> {
    if !(sampling > 0.0 && sampling <= 1.0) {
        return Err(Error::Domain(format!("sampling probability must be in (0, 1], got {sampling}")));
    }
    let mean = raw
        .observed_mean()
        .ok_or_else(|| Error::DegenerateInput("no observed responses".into()))?;
    let inv = 1.0 / sampling;
    Ok(raw
        .values()
        .iter()
        .zip(raw.observed())
        .map(|(&r, &seen)| if seen { (1.0 - inv) * mean + inv * r } else { mean })
        .collect())
}

/// Gradient of the decision loss linearized in the response around the
/// reference `reference * 1_K`.
pub fn linearized_grad(r_hat: &[f64], p: &Decision, reference: f64) -> Result<Vec<f64>> {
    check_len(p.len(), r_hat.len())?;
    let denom = 1.0 + reference * p.as_slice().iter().sum::<f64>();
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("1 + <p, r0> = {denom} is not positive")));
    }
    // p^T (r_hat - r0)
    let shift = dot(p.as_slice(), r_hat) - reference * p.as_slice().iter().sum::<f64>();
    let correction = reference * shift / (denom * denom);
    Ok(r_hat.iter().map(|r| -r / denom + correction).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    /// Bound on the sup-norm of the exact decision-loss gradient.
    pub l_inf: f64,
    /// Bound on the sup-norm of the linearized gradient built from DR responses.
    pub l_inf_dr: f64,
    pub sampling_c: f64,
}

pub fn lipschitz_constants(bounds: ResponseBounds, sampling: f64) -> Result<LipschitzConstants> {
    if !(sampling > 0.0 && sampling <= 1.0) {
        return Err(Error::Domain(format!("sampling probability must be in (0, 1], got {sampling}")));
    }
    let (c1, c2) = (bounds.c1(), bounds.c2());
    let l_inf = c2 / (1.0 + c1);
    Ok(LipschitzConstants {
        l_inf,
        l_inf_dr: l_inf + 2.0 * (c2 - c1) / (sampling * (1.0 + c1)),
        sampling_c: sampling,
    })
}
