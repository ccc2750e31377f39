//! Federated simulation loop: sampling, local training, feedback collection,
//! adaptive mixing and the server-side model update.
//!
//! Randomness is derived from the master seed through per-(round, slot) ChaCha
//! streams, so results do not depend on how client work is scheduled.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregator::{Aggregator, AggregatorMethod, RoundFeedback, SelectedWeights};
use crate::error::{check_len, Error, Result};
use crate::metrics::{performance_summary, PerformanceSummary};
use crate::modeldata::{Dataset, ModelSpec};
use crate::response::{transform_losses, CdfKind, ResponseBounds};

/// Fraction of each client's samples held out for evaluation.
pub const TEST_FRACTION: f64 = 0.2;

const SLOT_SERVER: u64 = 0;
const ROUND_INIT: u64 = u32::MAX as u64;

/// Independent generator for `(round, slot)`; slot 0 is the server, slot
/// `i + 1` is client `i`.
pub fn stream_rng(seed: u64, round: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((round << 32) | (slot & 0xffff_ffff));
    rng
}

/// Uniform sample without replacement of `max(1, floor(C K))` clients, sorted.
pub fn sample_clients(k: usize, sampling: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = ((sampling * k as f64).floor() as usize).clamp(1, k.max(1));
    if m >= k {
        return (0..k).collect();
    }
    let mut ids = rand::seq::index::sample(rng, k, m).into_vec();
    ids.sort_unstable();
    ids
}

#[derive(Debug, Clone)]
pub struct ClientData {
    pub train: Dataset,
    pub test: Dataset,
}

impl ClientData {
    /// Shuffled train/test split; the test part is empty for tiny shards and
    /// evaluation then falls back to the training rows.
    pub fn split(data: Dataset, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset("client shard has no samples".into()));
        }
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (data.len() as f64 * TEST_FRACTION).floor() as usize;
        let (test_idx, train_idx) = idx.split_at(n_test);
        Ok(ClientData {
            train: data.subset(train_idx),
            test: data.subset(test_idx),
        })
    }

    pub fn eval_set(&self) -> &Dataset {
        if self.test.is_empty() {
            &self.train
        } else {
            &self.test
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub prox_mu: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdateResult {
    pub client_id: usize,
    /// Mean training loss of the received model, measured before any local step.
    pub feedback_loss: f64,
    /// `received - final` local parameters.
    pub delta: Vec<f64>,
    pub sample_count: u64,
}

/// Local training (plain SGD, or FedProx when `prox_mu > 0`).
pub fn client_update(
    spec: &ModelSpec,
    received: &[f64],
    client_id: usize,
    round: usize,
    data: &Dataset,
    opts: &LocalTraining,
    rng: &mut ChaCha8Rng,
) -> Result<ClientUpdateResult> {
    if data.is_empty() {
        return Err(Error::EmptyDataset(format!("client {client_id} has no training data")));
    }
    let diverged = |reason: String| Error::Divergence {
        client: client_id,
        round,
        reason,
    };
    let (feedback_loss, _) = spec.loss_and_grad(received, data)?;
    if !feedback_loss.is_finite() {
        return Err(diverged("non-finite feedback loss".into()));
    }

    let mut params = received.to_vec();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = opts.batch_size.max(1);
    for _ in 0..opts.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let (loss, grad) = spec
                .loss_and_grad_rows(&params, data, chunk)
                .map_err(|e| diverged(e.to_string()))?;
            if !loss.is_finite() {
                return Err(diverged("non-finite training loss".into()));
            }
            for ((p, g), anchor) in params.iter_mut().zip(&grad).zip(received) {
                let step = g + opts.prox_mu * (*p - anchor) + opts.weight_decay * *p;
                *p -= opts.lr * step;
            }
        }
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(diverged("non-finite parameters".into()));
    }
    Ok(ClientUpdateResult {
        client_id,
        feedback_loss,
        delta: received.iter().zip(&params).map(|(a, b)| a - b).collect(),
        sample_count: data.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServerOptimizerKind {
    Sgd,
    Adam,
    Yogi,
    Adagrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerOptimizerConfig {
    pub kind: ServerOptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
}

impl Default for ServerOptimizerConfig {
    fn default() -> Self {
        ServerOptimizerConfig {
            kind: ServerOptimizerKind::Sgd,
            lr: 1.0,
            beta1: 0.9,
            beta2: 0.99,
            tau: 1e-3,
        }
    }
}

/// Server update treating the mixed client delta as a pseudo-gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerOptimizer {
    pub config: ServerOptimizerConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl ServerOptimizer {
    pub fn new(config: ServerOptimizerConfig, dim: usize) -> Result<Self> {
        let ServerOptimizerConfig {
            lr,
            beta1,
            beta2,
            tau,
            ..
        } = config;
        if !(lr > 0.0 && tau > 0.0) {
            return Err(Error::Domain("server lr and tau must be positive".into()));
        }
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
            return Err(Error::Domain("server betas must lie in [0, 1)".into()));
        }
        Ok(ServerOptimizer {
            config,
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
        })
    }

    /// Returns the updated model.
    pub fn apply(&mut self, model: &[f64], mixed_delta: &[f64]) -> Result<Vec<f64>> {
        check_len(model.len(), mixed_delta.len())?;
        check_len(model.len(), self.first_moment.len())?;
        let c = self.config;
        if c.kind == ServerOptimizerKind::Sgd {
            return Ok(model.iter().zip(mixed_delta).map(|(t, d)| t - c.lr * d).collect());
        }
        let mut out = Vec::with_capacity(model.len());
        for i in 0..model.len() {
            let d = mixed_delta[i];
            let m = &mut self.first_moment[i];
            *m = c.beta1 * *m + (1.0 - c.beta1) * d;
            let v = &mut self.second_moment[i];
            let d2 = d * d;
            *v = match c.kind {
                ServerOptimizerKind::Adam => c.beta2 * *v + (1.0 - c.beta2) * d2,
                ServerOptimizerKind::Yogi => *v - (1.0 - c.beta2) * d2 * (*v - d2).signum(),
                ServerOptimizerKind::Adagrad => *v + d2,
                ServerOptimizerKind::Sgd => unreachable!(),
            };
            out.push(model[i] - c.lr * *m / (v.max(0.0).sqrt() + c.tau));
        }
        Ok(out)
    }
}

/// Everything the simulation needs besides the client data.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub k: usize,
    pub sampling: f64,
    pub local: LocalTraining,
    /// Multiplicative learning-rate decay applied every `decay_step` rounds.
    pub lr_decay: f64,
    pub decay_step: usize,
    pub method: AggregatorMethod,
    pub cdf: CdfKind,
    pub bounds: ResponseBounds,
    pub model: ModelSpec,
    pub server: ServerOptimizerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    /// Clients whose updates were aggregated (failed clients excluded).
    pub sampled_ids: Vec<usize>,
    pub mean_feedback: f64,
    pub decision_loss: f64,
    pub decision: Vec<f64>,
    pub mixing: SelectedWeights,
    pub eval: PerformanceSummary,
    pub client_accuracy: Vec<f64>,
}

pub struct Simulation {
    settings: SimulationSettings,
    clients: Vec<ClientData>,
    seed: u64,
    params: Vec<f64>,
    aggregator: Aggregator,
    server: ServerOptimizer,
    round: usize,
}

impl Simulation {
    pub fn new(settings: SimulationSettings, clients: Vec<ClientData>, seed: u64) -> Result<Self> {
        check_len(settings.k, clients.len())?;
        if !(settings.sampling > 0.0 && settings.sampling <= 1.0) {
            return Err(Error::Domain(format!("sampling must be in (0, 1], got {}", settings.sampling)));
        }
        if let Some(i) = clients.iter().position(|c| c.train.is_empty()) {
            return Err(Error::EmptyDataset(format!("client {i} has no training data")));
        }
        let init_seed: u64 = stream_rng(seed, ROUND_INIT, SLOT_SERVER).random();
        let params = settings.model.init_params(init_seed);
        let aggregator = Aggregator::new(settings.method, settings.k, settings.sampling, settings.bounds)?;
        let server = ServerOptimizer::new(settings.server, params.len())?;
        Ok(Simulation {
            settings,
            clients,
            seed,
            params,
            aggregator,
            server,
            round: 0,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn clients(&self) -> &[ClientData] {
        &self.clients
    }

    pub fn learning_rate(&self, round: usize) -> f64 {
        let s = &self.settings;
        let decays = round.checked_div(s.decay_step).unwrap_or(0);
        s.local.lr * s.lr_decay.powi(decays as i32)
    }

    pub fn client_accuracies(&self) -> Vec<f64> {
        self.clients
            .iter()
            .map(|c| self.settings.model.accuracy(&self.params, c.eval_set()))
            .collect()
    }

    pub fn run_round(&mut self) -> Result<RoundReport> {
        let t = self.round;
        let s = self.settings.clone();
        let mut server_rng = stream_rng(self.seed, t as u64, SLOT_SERVER);
        let sampled = sample_clients(s.k, s.sampling, &mut server_rng);
        let local = LocalTraining {
            lr: self.learning_rate(t),
            ..s.local
        };

        let params = &self.params;
        let clients = &self.clients;
        let seed = self.seed;
        let outcomes: Vec<Result<ClientUpdateResult>> = sampled
            .par_iter()
            .map(|&i| {
                let mut rng = stream_rng(seed, t as u64, i as u64 + 1);
                client_update(&s.model, params, i, t, &clients[i].train, &local, &mut rng)
            })
            .collect();

        let mut updates = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            match outcome {
                Ok(u) => updates.push(u),
                Err(e) => warn!("round {t}: dropping client: {e}"),
            }
        }
        if updates.is_empty() {
            return Err(Error::Divergence {
                client: sampled[0],
                round: t,
                reason: "every sampled client failed".into(),
            });
        }

        let ids: Vec<usize> = updates.iter().map(|u| u.client_id).collect();
        let sizes: Vec<u64> = updates.iter().map(|u| u.sample_count).collect();
        let losses: Vec<f64> = updates.iter().map(|u| u.feedback_loss).collect();
        let mean_feedback = losses.iter().sum::<f64>() / losses.len() as f64;
        let responses = match transform_losses(&losses, s.cdf, s.bounds) {
            Ok(r) => r,
            Err(Error::DegenerateInput(_)) => {
                // every reporting client has zero loss: nothing to reweight
                vec![s.bounds.c1(); losses.len()]
            }
            Err(e) => return Err(e),
        };

        let outcome = self.aggregator.update(&RoundFeedback {
            ids: &ids,
            sample_sizes: &sizes,
            losses: &losses,
            responses: &responses,
        })?;

        // ascending client order for a reproducible reduction
        let mut mixed = vec![0.0; self.params.len()];
        for (u, w) in updates.iter().zip(&outcome.mixing.weights) {
            for (m, d) in mixed.iter_mut().zip(&u.delta) {
                *m += w * d;
            }
        }
        self.params = self.server.apply(&self.params, &mixed)?;
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                client: usize::MAX,
                round: t,
                reason: "global model became non-finite".into(),
            });
        }

        let client_accuracy = self.client_accuracies();
        let eval = performance_summary(&client_accuracy)?;
        self.round += 1;
        Ok(RoundReport {
            round: t,
            sampled_ids: ids,
            mean_feedback,
            decision_loss: outcome.decision_loss,
            decision: outcome.decision.into_vec(),
            mixing: outcome.mixing,
            eval,
            client_accuracy,
        })
    }

    pub fn run(&mut self, rounds: usize) -> Result<Vec<RoundReport>> {
        (0..rounds).map(|_| self.run_round()).collect()
    }
}
