//! Mixing-coefficient rules.
//!
//! The five reweighting baselines are one exponentiated-gradient step from the
//! sample-size prior; AAggFF-S runs online Newton step over the decision loss and
//! AAggFF-D runs entropic FTRL with a closed-form update on (possibly
//! doubly-robust) linearized gradients. [`Aggregator`] puts all of them behind a
//! single round-by-round interface for the simulator.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::decision::{decision_grad, decision_loss, dr_response, linearized_grad};
use crate::error::{check_len, Error, Result};
use crate::response::{ResponseBounds, ResponseVector};
use crate::simplex::{dot, project_generalized, Decision, PsdMatrix, SolverOptions};

/// Rounds between full re-inversions of the ONS matrix.
pub const ONS_REFACTOR_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AggregatorMethod {
    Static,
    Afl,
    QFedAvg { q: f64 },
    Term { lambda: f64 },
    PropFair { m: f64 },
    AaggffS,
    AaggffD,
}

impl AggregatorMethod {
    pub fn is_baseline(&self) -> bool {
        !matches!(self, AggregatorMethod::AaggffS | AggregatorMethod::AaggffD)
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregatorMethod::Static => "Static",
            AggregatorMethod::Afl => "AFL",
            AggregatorMethod::QFedAvg { .. } => "QFedAvg",
            AggregatorMethod::Term { .. } => "TERM",
            AggregatorMethod::PropFair { .. } => "PropFair",
            AggregatorMethod::AaggffS => "AAggFFS",
            AggregatorMethod::AaggffD => "AAggFFD",
        }
    }
}

fn static_weights(sample_sizes: &[u64]) -> Result<Decision> {
    if sample_sizes.contains(&0) {
        return Err(Error::Domain("sample sizes must be positive".into()));
    }
    Decision::from_unnormalized(sample_sizes.iter().map(|n| *n as f64).collect())
}

fn from_log_weights(log_w: &[f64], sample_sizes: &[u64], method: &str) -> Result<Decision> {
    if log_w.iter().all(|w| *w == f64::NEG_INFINITY) {
        warn!("{method}: all mixing weights are zero, falling back to sample-size weights");
        return static_weights(sample_sizes);
    }
    Decision::softmax(log_w)
}

/// Closed-form mixing coefficients of a baseline method.
pub fn baseline_coefficients(
    method: AggregatorMethod,
    sample_sizes: &[u64],
    losses: &[f64],
) -> Result<Decision> {
    check_len(sample_sizes.len(), losses.len())?;
    if sample_sizes.is_empty() {
        return Err(Error::InvalidDimension("no clients".into()));
    }
    if let Some(f) = losses.iter().find(|f| !(**f >= 0.0) || !f.is_finite()) {
        return Err(Error::Domain(format!("loss {f} is not finite and nonnegative")));
    }
    let prior = static_weights(sample_sizes)?;
    let log_n: Vec<f64> = sample_sizes.iter().map(|n| (*n as f64).ln()).collect();
    match method {
        AggregatorMethod::Static => Ok(prior),
        AggregatorMethod::QFedAvg { q } => {
            if !(q >= 0.0) {
                return Err(Error::Domain(format!("q must be nonnegative, got {q}")));
            }
            if q == 0.0 {
                return Ok(prior);
            }
            let log_w: Vec<f64> = log_n.iter().zip(losses).map(|(ln, f)| ln + q * f.ln()).collect();
            from_log_weights(&log_w, sample_sizes, "QFedAvg")
        }
        AggregatorMethod::Term { lambda } => {
            let log_w: Vec<f64> = log_n.iter().zip(losses).map(|(ln, f)| ln + lambda * f).collect();
            from_log_weights(&log_w, sample_sizes, "TERM")
        }
        AggregatorMethod::PropFair { m } => {
            let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(m > max) {
                return Err(Error::Domain(format!("PropFair needs M > max loss, got M={m}, max={max}")));
            }
            Decision::from_unnormalized(
                sample_sizes.iter().zip(losses).map(|(n, f)| *n as f64 / (m - f)).collect(),
            )
        }
        AggregatorMethod::Afl => {
            // limit of n_i * F_i^q as q grows: sample-size weights on the argmax set
            let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tie = 1e-12 * max.abs().max(f64::MIN_POSITIVE);
            let w: Vec<f64> = sample_sizes
                .iter()
                .zip(losses)
                .map(|(n, f)| if max - f <= tie { *n as f64 } else { 0.0 })
                .collect();
            Decision::from_unnormalized(w)
        }
        AggregatorMethod::AaggffS | AggregatorMethod::AaggffD => Err(Error::Domain(format!(
            "{} is stateful and has no closed-form baseline",
            method.name()
        ))),
    }
}

/// One multiplicative-weights step `p_i' ∝ prev_i * exp(response_i / step)`.
pub fn eg_unified_step(prev: &Decision, response: &[f64], step: f64) -> Result<Decision> {
    check_len(prev.len(), response.len())?;
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {step}")));
    }
    let logits: Vec<f64> = prev
        .as_slice()
        .iter()
        .zip(response)
        .map(|(p, r)| p.ln() + r / step)
        .collect();
    Decision::softmax(&logits)
}

/// The (last decision, response, step size) triple that expresses a baseline as
/// one [`eg_unified_step`]. AFL has no finite triple; it is the large-`q` limit
/// of QFedAvg.
pub fn unified_form(
    method: AggregatorMethod,
    sample_sizes: &[u64],
    losses: &[f64],
) -> Result<Option<(Decision, Vec<f64>, f64)>> {
    check_len(sample_sizes.len(), losses.len())?;
    let prior = static_weights(sample_sizes)?;
    let k = losses.len();
    let form = match method {
        AggregatorMethod::Static => Some((vec![0.0; k], 1.0)),
        AggregatorMethod::QFedAvg { q } => {
            Some((losses.iter().map(|f| if q == 0.0 { 0.0 } else { q * f.ln() }).collect(), 1.0))
        }
        AggregatorMethod::Term { lambda } => {
            if lambda > 0.0 {
                Some((losses.to_vec(), 1.0 / lambda))
            } else {
                // non-positive tilts flip the sign of the response instead of the step
                Some((losses.iter().map(|f| lambda * f).collect(), 1.0))
            }
        }
        AggregatorMethod::PropFair { m } => Some((losses.iter().map(|f| -(m - f).ln()).collect(), 1.0)),
        _ => None,
    };
    Ok(form.map(|(r, s)| (prior, r, s)))
}

/// Online Newton step state for the cross-silo rule.
#[derive(Debug, Clone)]
pub struct OnsState {
    pub round: usize,
    pub grad_sum: Vec<f64>,
    pub mat: PsdMatrix,
    pub rhs: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub last_decision: Decision,
    inverse: Vec<f64>,
    since_refactor: usize,
    solver: SolverOptions,
}

impl OnsState {
    /// `alpha = 4 K l_inf`, `beta = 1 / (4 l_inf)`.
    pub fn new(k: usize, l_inf: f64) -> Result<Self> {
        if !(l_inf > 0.0 && l_inf.is_finite()) {
            return Err(Error::Domain(format!("l_inf must be positive, got {l_inf}")));
        }
        let alpha = 4.0 * k as f64 * l_inf;
        let beta = 1.0 / (4.0 * l_inf);
        let mat = PsdMatrix::scaled_identity(k, alpha)?;
        let inverse = PsdMatrix::scaled_identity(k, 1.0 / alpha)?.entries().to_vec();
        Ok(OnsState {
            round: 0,
            grad_sum: vec![0.0; k],
            mat,
            rhs: vec![0.0; k],
            alpha,
            beta,
            last_decision: Decision::uniform(k)?,
            inverse,
            since_refactor: 0,
            solver: SolverOptions::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.grad_sum.len()
    }

    /// Absorbs the gradient of the loss suffered at `last_decision` and emits the
    /// next decision.
    pub fn step(&mut self, gradient: &[f64]) -> Result<Decision> {
        let k = self.dim();
        check_len(k, gradient.len())?;
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite ONS gradient".into()));
        }
        self.round += 1;
        if k == 1 {
            return Ok(self.last_decision.clone());
        }
        let c = dot(gradient, self.last_decision.as_slice());
        for i in 0..k {
            self.grad_sum[i] += gradient[i];
            self.rhs[i] += self.beta * c * gradient[i];
        }
        self.mat.add_rank_one(self.beta, gradient)?;

        self.since_refactor += 1;
        if self.since_refactor >= ONS_REFACTOR_EVERY {
            self.inverse = self
                .mat
                .inverse()
                .map_err(|e| Error::Invariant(format!("ONS matrix lost definiteness: {e}")))?;
            self.since_refactor = 0;
        } else {
            self.sherman_morrison(gradient)?;
        }

        let target: Vec<f64> = self.rhs.iter().zip(&self.grad_sum).map(|(r, g)| r - g).collect();
        let unconstrained: Vec<f64> = self
            .inverse
            .chunks_exact(k)
            .map(|row| dot(row, &target))
            .collect();
        let next = project_generalized(&unconstrained, &self.mat, self.solver)?;
        self.last_decision = next.clone();
        Ok(next)
    }

    fn sherman_morrison(&mut self, g: &[f64]) -> Result<()> {
        let k = self.dim();
        let u: Vec<f64> = self.inverse.chunks_exact(k).map(|row| dot(row, g)).collect();
        let denom = 1.0 + self.beta * dot(g, &u);
        if !(denom > 0.0) {
            return Err(Error::Invariant("ONS inverse update lost definiteness".into()));
        }
        let scale = self.beta / denom;
        for i in 0..k {
            for j in 0..k {
                self.inverse[i * k + j] -= scale * u[i] * u[j];
            }
        }
        Ok(())
    }
}

/// Entropic FTRL state for the cross-device rule.
#[derive(Debug, Clone)]
pub struct FtrlState {
    pub round: usize,
    pub cum_grad: Vec<f64>,
    /// Sup-norm bound of the gradients fed to [`FtrlState::step`].
    pub lipschitz: f64,
    pub k: usize,
    last_decision: Decision,
}

impl FtrlState {
    pub fn new(k: usize, lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::Domain(format!("Lipschitz constant must be positive, got {lipschitz}")));
        }
        Ok(FtrlState {
            round: 0,
            cum_grad: vec![0.0; k],
            lipschitz,
            k,
            last_decision: Decision::uniform(k)?,
        })
    }

    pub fn last_decision(&self) -> &Decision {
        &self.last_decision
    }

    /// Regularization weight used for the decision after `t` gradients:
    /// `lipschitz * sqrt(t + 1) / sqrt(log K)`.
    pub fn step_size(&self, t: usize) -> f64 {
        self.lipschitz * ((t + 1) as f64).sqrt() / (self.k as f64).ln().sqrt()
    }

    pub fn step(&mut self, gradient: &[f64]) -> Result<Decision> {
        check_len(self.k, gradient.len())?;
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite FTRL gradient".into()));
        }
        self.round += 1;
        if self.k == 1 {
            return Ok(self.last_decision.clone());
        }
        for (c, g) in self.cum_grad.iter_mut().zip(gradient) {
            *c += g;
        }
        let zeta = self.step_size(self.round);
        let logits: Vec<f64> = self.cum_grad.iter().map(|c| -c / zeta).collect();
        self.last_decision = Decision::softmax(&logits)?;
        Ok(self.last_decision.clone())
    }
}

/// Mixing weights restricted to the clients that reported this round.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedWeights {
    pub ids: Vec<usize>,
    pub weights: Vec<f64>,
}

impl SelectedWeights {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Renormalizes `p` over the selected clients. `selected` must be sorted and
/// unique.
pub fn normalize_selected(p: &Decision, selected: &[usize]) -> Result<SelectedWeights> {
    if selected.is_empty() {
        return Err(Error::DegenerateInput("no selected clients".into()));
    }
    if selected.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("selected ids must be strictly increasing".into()));
    }
    if let Some(&i) = selected.iter().find(|&&i| i >= p.len()) {
        return Err(Error::InvalidDimension(format!("client {i} out of range for K={}", p.len())));
    }
    let mass: f64 = selected.iter().map(|&i| p.as_slice()[i]).sum();
    let weights = if mass > 0.0 {
        selected.iter().map(|&i| p.as_slice()[i] / mass).collect()
    } else {
        warn!("selected clients carry zero mass, mixing them uniformly");
        vec![1.0 / selected.len() as f64; selected.len()]
    };
    Ok(SelectedWeights {
        ids: selected.to_vec(),
        weights,
    })
}

/// What the server learned in one round, restricted to the reporting clients.
#[derive(Debug, Clone)]
pub struct RoundFeedback<'a> {
    /// Reporting clients, strictly increasing.
    pub ids: &'a [usize],
    pub sample_sizes: &'a [u64],
    /// Raw local losses of the reporting clients.
    pub losses: &'a [f64],
    /// Bounded responses of the reporting clients.
    pub responses: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct AggregationOutcome {
    /// Full-length decision for the next round.
    pub decision: Decision,
    /// Loss suffered by the previous decision on this round's responses.
    pub decision_loss: f64,
    pub mixing: SelectedWeights,
}

#[derive(Debug, Clone)]
enum RuleState {
    Baseline,
    Ons(Box<OnsState>),
    Ftrl(FtrlState),
}

/// A mixing rule plus whatever state it carries between rounds.
#[derive(Debug, Clone)]
pub struct Aggregator {
    method: AggregatorMethod,
    k: usize,
    sampling: f64,
    state: RuleState,
    previous: Decision,
}

impl Aggregator {
    pub fn new(method: AggregatorMethod, k: usize, sampling: f64, bounds: ResponseBounds) -> Result<Self> {
        let lip = crate::decision::lipschitz_constants(bounds, sampling)?;
        let state = match method {
            AggregatorMethod::AaggffS => RuleState::Ons(Box::new(OnsState::new(k, lip.l_inf)?)),
            AggregatorMethod::AaggffD => {
                // exact gradients under full participation, DR-linearized otherwise
                let l = if sampling < 1.0 { lip.l_inf_dr } else { lip.l_inf };
                RuleState::Ftrl(FtrlState::new(k, l)?)
            }
            _ => RuleState::Baseline,
        };
        Ok(Aggregator {
            method,
            k,
            sampling,
            state,
            previous: Decision::uniform(k)?,
        })
    }

    pub fn method(&self) -> AggregatorMethod {
        self.method
    }

    pub fn current_decision(&self) -> &Decision {
        &self.previous
    }

    pub fn update(&mut self, fb: &RoundFeedback<'_>) -> Result<AggregationOutcome> {
        check_len(fb.ids.len(), fb.sample_sizes.len())?;
        check_len(fb.ids.len(), fb.losses.len())?;
        check_len(fb.ids.len(), fb.responses.len())?;
        let raw = ResponseVector::from_partial(self.k, fb.ids, fb.responses)?;
        let partial = self.sampling < 1.0;
        // under full participation only failed clients are missing; they are
        // imputed with the observed mean
        let full_response = dr_response(&raw, if partial { self.sampling } else { 1.0 })?;
        let suffered = decision_loss(&self.previous, &full_response).unwrap_or(f64::NAN);

        let decision = match &mut self.state {
            RuleState::Baseline => {
                let local = baseline_coefficients(self.method, fb.sample_sizes, fb.losses)?;
                let mut full = vec![0.0; self.k];
                for (&i, &w) in fb.ids.iter().zip(local.as_slice()) {
                    full[i] = w;
                }
                Decision::new(full)?
            }
            RuleState::Ons(ons) => {
                let g = decision_grad(&ons.last_decision, &full_response)?;
                ons.step(&g)?
            }
            RuleState::Ftrl(ftrl) => {
                let g = if partial {
                    let mean = raw.observed_mean().expect("dr_response checked observations");
                    linearized_grad(&full_response, ftrl.last_decision(), mean)?
                } else {
                    decision_grad(ftrl.last_decision(), &full_response)?
                };
                ftrl.step(&g)?
            }
        };
        let mixing = normalize_selected(&decision, fb.ids)?;
        self.previous = decision.clone();
        Ok(AggregationOutcome {
            decision,
            decision_loss: suffered,
            mixing,
        })
    }
}
