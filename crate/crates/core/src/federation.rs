//! Federated training strategies over the window-based detectors.
//!
//! A training run is a sequence of rounds. Each round snapshots the global
//! model, lets every client train it locally for a fixed number of epochs,
//! and combines the results by sample-count-weighted averaging. Four
//! federated strategies share that skeleton:
//!
//! * **FedAvg** — plain weighted averaging.
//! * **FedProx** — adds the proximal penalty `(μ/2)·‖w − w_g‖²` to every
//!   local optimizer step.
//! * **SCAFFOLD** — maintains server and client control variates; every
//!   local gradient is shifted by `c_server − c_client`, and after each
//!   round a client's variate moves by `(w_g − w_local)/(K·lr)` (option II).
//! * **MOON** — adds a model-contrastive term that pulls the current local
//!   representation toward the global model's and away from the previous
//!   local model's.
//!
//! Two baselines reuse the same epoch loop: **Central** trains one model on
//! the pooled data (bit-identical to one-client FedAvg), and **Isolated**
//! trains each client independently with no communication.
//!
//! Clients run in parallel within a round; all randomness is derived from
//! `(seed, round, client, epoch)` so results do not depend on scheduling.
//! Round durations cover local training plus aggregation, never evaluation.

use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::WindowSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{
    self, detector, register_params, ModelConfig, OptState, PenaltyHook, TrainConfig,
};
use crate::params::ParameterSet;
use crate::rng;
use crate::tape::{Tape, Var};

/// Training strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Central,
    Isolated,
    FedAvg,
    FedProx,
    Scaffold,
    Moon,
}

impl Strategy {
    /// All strategies, in reporting order.
    pub fn all() -> [Strategy; 6] {
        [
            Strategy::Central,
            Strategy::Isolated,
            Strategy::FedAvg,
            Strategy::FedProx,
            Strategy::Scaffold,
            Strategy::Moon,
        ]
    }

    /// Canonical lowercase name (CLI and report label).
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Central => "central",
            Strategy::Isolated => "isolated",
            Strategy::FedAvg => "fedavg",
            Strategy::FedProx => "fedprox",
            Strategy::Scaffold => "scaffold",
            Strategy::Moon => "moon",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "central" | "centralized" => Ok(Strategy::Central),
            "isolated" => Ok(Strategy::Isolated),
            "fedavg" => Ok(Strategy::FedAvg),
            "fedprox" => Ok(Strategy::FedProx),
            "scaffold" => Ok(Strategy::Scaffold),
            "moon" => Ok(Strategy::Moon),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Federation-level settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub strategy: Strategy,
    /// Communication rounds (or pseudo-rounds for the baselines).
    pub global_epochs: usize,
    /// Local epochs per round.
    pub local_epochs: usize,
    /// Proximal coefficient μ.
    pub mu: f64,
    /// Contrastive temperature τ.
    pub tau: f64,
    /// Weight of the contrastive term.
    pub contrastive_weight: f64,
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
}

impl FederationConfig {
    /// Defaults for a strategy: 10 local epochs, μ = 0.01, τ = 0.5,
    /// contrastive weight 1.
    pub fn new(strategy: Strategy, global_epochs: usize, seed: u64) -> Self {
        Self {
            strategy,
            global_epochs,
            local_epochs: 10,
            mu: 0.01,
            tau: 0.5,
            contrastive_weight: 1.0,
            seed,
        }
    }

    /// Validate field ranges.
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be positive".into()));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Config(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.contrastive_weight.is_finite() && self.contrastive_weight >= 0.0) {
            return Err(Error::Config(format!(
                "contrastive_weight must be >= 0, got {}",
                self.contrastive_weight
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Aggregation and strategy primitives
// ---------------------------------------------------------------------------

/// Weighted average of parameter sets: `Σᵢ wᵢ·θᵢ / Σᵢ wᵢ`.
///
/// Weights are normalized before combining, so a single set with any
/// positive weight comes back unchanged. Weights must be finite and
/// non-negative with a positive total.
pub fn aggregate_weighted(sets: &[ParameterSet], weights: &[f64]) -> Result<ParameterSet> {
    if sets.is_empty() {
        return Err(Error::EmptyInput("nothing to aggregate".into()));
    }
    if sets.len() != weights.len() {
        return Err(Error::Format(format!(
            "{} parameter sets but {} weights",
            sets.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Aggregation {
            entry: "<weights>".into(),
            reason: "weights must be finite and non-negative".into(),
        });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Aggregation {
            entry: "<weights>".into(),
            reason: "total weight must be positive".into(),
        });
    }
    for set in &sets[1..] {
        sets[0].check_compatible(set)?;
    }
    let mut acc = sets[0].zeros_like();
    for (set, &w) in sets.iter().zip(weights) {
        acc.axpy(w / total, set)?;
    }
    if !acc.all_finite() {
        return Err(Error::Aggregation {
            entry: "<result>".into(),
            reason: "aggregate has non-finite entries".into(),
        });
    }
    Ok(acc)
}

/// Proximal penalty `(μ/2)·‖w − w_g‖²` over trainable entries and its
/// gradient `μ·(w − w_g)` per entry.
pub fn fedprox_penalty(
    local: &ParameterSet,
    global: &ParameterSet,
    mu: f64,
) -> Result<(f64, ParameterSet)> {
    local.check_compatible(global)?;
    let value = 0.5 * mu * local.l2_distance_sq(global)?;
    let mut grads = ParameterSet::new();
    for (name, w) in local.trainable() {
        let g = global.get(name).expect("checked compatible");
        grads.insert(name, w.sub(g).scale(mu));
    }
    Ok((value, grads))
}

/// Per-row cosine similarities between two equal-shaped matrices.
/// A row with norm below 1e-12 in either matrix is degenerate.
fn row_cosines(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    assert_eq!(a.shape(), b.shape(), "cosine shape mismatch");
    (0..a.rows())
        .map(|r| {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in a.row(r).iter().zip(b.row(r)) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            let (na, nb) = (na.sqrt(), nb.sqrt());
            if na < 1e-12 || nb < 1e-12 {
                return Err(Error::DegenerateRepresentation { row: r });
            }
            Ok(dot / (na * nb))
        })
        .collect()
}

/// Model-contrastive loss over representation rows:
/// `mean_r −log( exp(cos(z,z_g)/τ) / (exp(cos(z,z_g)/τ) + exp(cos(z,z_p)/τ)) )`.
pub fn moon_contrastive_loss(
    z: &Matrix,
    z_global: &Matrix,
    z_prev: &Matrix,
    tau: f64,
) -> Result<f64> {
    if z.shape() != z_global.shape() || z.shape() != z_prev.shape() {
        return Err(Error::Format(format!(
            "representation shapes differ: {:?} vs {:?} vs {:?}",
            z.shape(),
            z_global.shape(),
            z_prev.shape()
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("tau must be > 0, got {tau}")));
    }
    let cos_g = row_cosines(z, z_global)?;
    let cos_p = row_cosines(z, z_prev)?;
    let sum: f64 = cos_g
        .iter()
        .zip(&cos_p)
        .map(|(g, p)| {
            let (a, b) = (g / tau, p / tau);
            // −log(eᵃ/(eᵃ+eᵇ)) = ln(eᵃ+eᵇ) − a, stable for |a|,|b| ≤ 1/τ.
            (a.exp() + b.exp()).ln() - a
        })
        .sum();
    Ok(sum / z.rows() as f64)
}

/// SCAFFOLD's per-step gradient shift `c_server − c_client`.
pub fn scaffold_gradient_shift(
    server_variate: &ParameterSet,
    client_variate: &ParameterSet,
) -> Result<ParameterSet> {
    server_variate.check_compatible(client_variate)?;
    server_variate.sub(client_variate)
}

/// SCAFFOLD option-II client variate update after a round:
/// `c⁺ = c − c_server + (w_global − w_local)/(K·lr)` with `K` the number of
/// optimizer steps taken this round.
pub fn scaffold_update_variate(
    client_variate: &ParameterSet,
    server_variate: &ParameterSet,
    global_before: &ParameterSet,
    local_after: &ParameterSet,
    steps: usize,
    lr: f64,
) -> Result<ParameterSet> {
    if steps == 0 {
        return Err(Error::Protocol(
            "variate update needs at least one optimizer step".into(),
        ));
    }
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::Protocol(format!(
            "variate update needs a positive learning rate, got {lr}"
        )));
    }
    let mut out = client_variate.sub(server_variate)?;
    let drift = global_before.sub(local_after)?;
    out.axpy(1.0 / (steps as f64 * lr), &drift)?;
    Ok(out)
}

/// Proximal penalty hook.
pub struct ProxPenalty<'a> {
    pub global: &'a ParameterSet,
    pub mu: f64,
}

impl PenaltyHook for ProxPenalty<'_> {
    fn eval(
        &self,
        params: &ParameterSet,
        _cfg: &ModelConfig,
        _batch: &[&Matrix],
    ) -> Result<(f64, ParameterSet)> {
        fedprox_penalty(params, self.global, self.mu)
    }
}

/// Model-contrastive penalty hook. Without a previous local model (the
/// first round) or with weight zero the term is exactly zero.
pub struct MoonPenalty<'a> {
    pub global: &'a ParameterSet,
    pub previous: Option<&'a ParameterSet>,
    pub tau: f64,
    pub weight: f64,
}

fn trainable_zeros(params: &ParameterSet) -> ParameterSet {
    let mut out = ParameterSet::new();
    for (name, m) in params.trainable() {
        out.insert(name, Matrix::zeros(m.rows(), m.cols()));
    }
    out
}

impl PenaltyHook for MoonPenalty<'_> {
    fn eval(
        &self,
        params: &ParameterSet,
        cfg: &ModelConfig,
        batch: &[&Matrix],
    ) -> Result<(f64, ParameterSet)> {
        let Some(previous) = self.previous else {
            return Ok((0.0, trainable_zeros(params)));
        };
        if self.weight == 0.0 {
            return Ok((0.0, trainable_zeros(params)));
        }
        let z_global = models::extract_representation(self.global, cfg, batch)?;
        let z_prev = models::extract_representation(previous, cfg, batch)?;

        let mut tape = Tape::new();
        let vars = register_params(&mut tape, params);
        let z = detector(cfg.kind).build_representation(&mut tape, &vars, cfg, batch);
        let loss = contrastive_on_tape(&mut tape, z, &z_global, &z_prev, self.tau)?;
        let scaled = tape.scale(loss, self.weight);
        let value = tape.value(scaled).get(0, 0);
        let mut grads = tape.backward(scaled);
        let mut out = ParameterSet::new();
        for (name, m) in params.trainable() {
            let g = grads
                .take(vars[name])
                .unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()));
            out.insert(name, g);
        }
        Ok((value, out))
    }
}

/// Build the contrastive loss on the tape so it differentiates through the
/// live representation `z`; the global and previous representations enter
/// as constants.
fn contrastive_on_tape(
    tape: &mut Tape,
    z: Var,
    z_global: &Matrix,
    z_prev: &Matrix,
    tau: f64,
) -> Result<Var> {
    let rows = z_global.rows();
    // Guard degenerate rows using current values before growing the tape.
    let z_val = tape.value(z);
    if z_val.shape() != z_global.shape() || z_val.shape() != z_prev.shape() {
        return Err(Error::Format(format!(
            "representation shapes differ: {:?} vs {:?} vs {:?}",
            z_val.shape(),
            z_global.shape(),
            z_prev.shape()
        )));
    }
    let norms = |m: &Matrix| -> Result<Matrix> {
        let mut out = Matrix::zeros(rows, 1);
        for r in 0..rows {
            let n = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if n < 1e-12 {
                return Err(Error::DegenerateRepresentation { row: r });
            }
            out.set(r, 0, n);
        }
        Ok(out)
    };
    norms(z_val)?; // live rows must be non-degenerate too
    let ng = norms(z_global)?;
    let np = norms(z_prev)?;

    let zg = tape.constant(z_global.clone());
    let zp = tape.constant(z_prev.clone());
    let ng = tape.constant(ng);
    let np = tape.constant(np);

    let z_sq = tape.square(z);
    let z_sumsq = tape.row_sum(z_sq);
    let nz = tape.sqrt(z_sumsq); // [rows x 1]

    let cos_scaled = |other: Var, other_norm: Var, tape: &mut Tape| {
        let prod = tape.mul(z, other);
        let dot = tape.row_sum(prod);
        let denom = tape.mul(nz, other_norm);
        let cos = tape.div(dot, denom);
        tape.scale(cos, 1.0 / tau)
    };
    let a = cos_scaled(zg, ng, tape);
    let b = cos_scaled(zp, np, tape);

    let ea = tape.exp(a);
    let eb = tape.exp(b);
    let sum = tape.add(ea, eb);
    let lse = tape.ln(sum);
    let row_loss = tape.sub(lse, a);
    Ok(tape.mean_all(row_loss))
}

// ---------------------------------------------------------------------------
// Round and training drivers
// ---------------------------------------------------------------------------

/// One client's persistent state across rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub windows: WindowSet,
    pub opt: OptState,
    /// SCAFFOLD control variate `c_i`.
    pub variate: ParameterSet,
    /// Previous-round local model (MOON's negative anchor).
    pub prev_params: Option<ParameterSet>,
}

/// Server + client state of a federated run.
#[derive(Debug, Clone)]
pub struct FederatedState {
    pub global: ParameterSet,
    /// SCAFFOLD server variate `c`.
    pub server_variate: ParameterSet,
    pub clients: Vec<ClientState>,
    /// Completed rounds.
    pub round: usize,
}

/// Per-round summary. Durations include local training and aggregation,
/// not evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    /// Unweighted mean over active clients of their mean epoch losses.
    pub mean_loss: f64,
    pub duration: Duration,
    /// Optimizer steps each client took this round.
    pub client_steps: Vec<usize>,
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    /// Parameters right after initialization.
    pub initial: ParameterSet,
    /// Final shared model (for the isolated baseline: the initial model).
    pub global: ParameterSet,
    /// Per-client models; only the isolated baseline fills this.
    pub per_client: Option<Vec<ParameterSet>>,
    pub rounds: Vec<RoundStats>,
}

/// Pool client window sets into one (client order preserved).
pub fn pooled_windows(client_windows: &[WindowSet]) -> WindowSet {
    let mut windows = Vec::new();
    let mut anchors = Vec::new();
    for ws in client_windows {
        windows.extend(ws.windows.iter().cloned());
        anchors.extend(ws.anchors.iter().copied());
    }
    WindowSet { windows, anchors }
}

/// Initialize federated state: the global model comes from the pooled
/// training windows, variates start at zero, optimizers fresh.
pub fn init_state(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    fed_cfg: &FederationConfig,
    client_windows: &[WindowSet],
) -> Result<FederatedState> {
    fed_cfg.validate()?;
    if client_windows.is_empty() {
        return Err(Error::EmptyInput("no clients".into()));
    }
    let pooled = pooled_windows(client_windows);
    let global = models::init_model(model_cfg, fed_cfg.seed, &pooled)?;
    let clients = client_windows
        .iter()
        .map(|ws| ClientState {
            windows: ws.clone(),
            opt: OptState::new(train_cfg.optimizer),
            variate: global.zeros_like(),
            prev_params: None,
        })
        .collect();
    Ok(FederatedState {
        server_variate: global.zeros_like(),
        global,
        clients,
        round: 0,
    })
}

struct ClientOutcome {
    params: ParameterSet,
    opt: OptState,
    steps: usize,
    loss_sum: f64,
    epochs: usize,
    variate: Option<ParameterSet>,
    variate_delta: Option<ParameterSet>,
}

/// Run one communication round of a federated strategy (not the central or
/// isolated baselines). Clients train in parallel from the same global
/// snapshot; the new global model is the sample-count-weighted average of
/// the local results.
pub fn run_round(
    state: &mut FederatedState,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    fed_cfg: &FederationConfig,
) -> Result<RoundStats> {
    fed_cfg.validate()?;
    let strategy = fed_cfg.strategy;
    if matches!(strategy, Strategy::Central | Strategy::Isolated) {
        return Err(Error::Unsupported(format!(
            "{strategy} is a baseline, not a round-based strategy"
        )));
    }
    let started = Instant::now();
    let round = state.round;
    let global_before = state.global.clone();
    let server_variate = state.server_variate.clone();
    let e = fed_cfg.local_epochs;

    let outcomes: Vec<Result<ClientOutcome>> = state
        .clients
        .par_iter()
        .enumerate()
        .map(|(client, cs)| {
            let mut local = global_before.clone();
            let mut opt = cs.opt.clone();
            let grad_shift = match strategy {
                Strategy::Scaffold => {
                    Some(scaffold_gradient_shift(&server_variate, &cs.variate)?)
                }
                _ => None,
            };
            let mut steps = 0usize;
            let mut loss_sum = 0.0;
            for le in 0..e {
                let epoch_number = round * e + le + 1;
                let mut shuffle =
                    rng::derive(fed_cfg.seed, "shuffle", &[round as u64, client as u64, le as u64]);
                let prox;
                let moon;
                let penalty: Option<&dyn PenaltyHook> = match strategy {
                    Strategy::FedProx => {
                        prox = ProxPenalty {
                            global: &global_before,
                            mu: fed_cfg.mu,
                        };
                        Some(&prox)
                    }
                    Strategy::Moon => {
                        moon = MoonPenalty {
                            global: &global_before,
                            previous: cs.prev_params.as_ref(),
                            tau: fed_cfg.tau,
                            weight: fed_cfg.contrastive_weight,
                        };
                        Some(&moon)
                    }
                    _ => None,
                };
                let stats = models::local_train_epoch(
                    &mut local,
                    &mut opt,
                    model_cfg,
                    train_cfg,
                    &cs.windows,
                    epoch_number,
                    &mut shuffle,
                    penalty,
                    grad_shift.as_ref(),
                )?;
                steps += stats.steps;
                loss_sum += stats.mean_loss;
            }

            let (variate, variate_delta) = if strategy == Strategy::Scaffold {
                if steps > 0 {
                    let next = scaffold_update_variate(
                        &cs.variate,
                        &server_variate,
                        &global_before,
                        &local,
                        steps,
                        train_cfg.lr,
                    )?;
                    let delta = next.sub(&cs.variate)?;
                    (Some(next), Some(delta))
                } else {
                    (None, Some(cs.variate.zeros_like()))
                }
            } else {
                (None, None)
            };

            Ok(ClientOutcome {
                params: local,
                opt,
                steps,
                loss_sum,
                epochs: e,
                variate,
                variate_delta,
            })
        })
        .collect();

    // Surface the lowest-indexed failure deterministically.
    let mut unpacked = Vec::with_capacity(outcomes.len());
    for (client, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => unpacked.push(o),
            Err(source) => {
                return Err(Error::ClientFailure {
                    client,
                    source: Box::new(source),
                })
            }
        }
    }

    let weights: Vec<f64> = state
        .clients
        .iter()
        .map(|c| c.windows.len() as f64)
        .collect();
    let locals: Vec<ParameterSet> = unpacked.iter().map(|o| o.params.clone()).collect();
    let new_global = aggregate_weighted(&locals, &weights)?;

    if strategy == Strategy::Scaffold {
        let deltas: Vec<&ParameterSet> = unpacked
            .iter()
            .map(|o| o.variate_delta.as_ref().expect("scaffold delta"))
            .collect();
        let scale = 1.0 / deltas.len() as f64;
        for delta in deltas {
            state.server_variate.axpy(scale, delta)?;
        }
    }

    let mut active = 0usize;
    let mut loss_total = 0.0;
    let mut client_steps = Vec::with_capacity(unpacked.len());
    for (cs, outcome) in state.clients.iter_mut().zip(unpacked) {
        client_steps.push(outcome.steps);
        if outcome.steps > 0 {
            active += 1;
            loss_total += outcome.loss_sum / outcome.epochs as f64;
        }
        cs.opt = outcome.opt;
        if let Some(v) = outcome.variate {
            cs.variate = v;
        }
        if strategy == Strategy::Moon {
            cs.prev_params = Some(outcome.params);
        }
    }

    state.global = new_global;
    state.round += 1;

    Ok(RoundStats {
        round,
        mean_loss: if active > 0 {
            loss_total / active as f64
        } else {
            0.0
        },
        duration: started.elapsed(),
        client_steps,
    })
}

/// Run a full training job for any strategy, including the central and
/// isolated baselines. `global_epochs == 0` returns the initial model.
pub fn run_training(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    fed_cfg: &FederationConfig,
    client_windows: &[WindowSet],
) -> Result<TrainingOutcome> {
    fed_cfg.validate()?;
    model_cfg.validate()?;
    match fed_cfg.strategy {
        Strategy::Central => run_central(model_cfg, train_cfg, fed_cfg, client_windows),
        Strategy::Isolated => run_isolated(model_cfg, train_cfg, fed_cfg, client_windows),
        _ => {
            let mut state = init_state(model_cfg, train_cfg, fed_cfg, client_windows)?;
            let initial = state.global.clone();
            let mut rounds = Vec::with_capacity(fed_cfg.global_epochs);
            for _ in 0..fed_cfg.global_epochs {
                rounds.push(run_round(&mut state, model_cfg, train_cfg, fed_cfg)?);
            }
            Ok(TrainingOutcome {
                initial,
                global: state.global,
                per_client: None,
                rounds,
            })
        }
    }
}

/// Central baseline: one model over the pooled windows. The loop mirrors
/// the federated seed derivation with client index 0 so a one-client
/// FedAvg run reproduces it bit for bit.
fn run_central(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    fed_cfg: &FederationConfig,
    client_windows: &[WindowSet],
) -> Result<TrainingOutcome> {
    if client_windows.is_empty() {
        return Err(Error::EmptyInput("no clients".into()));
    }
    let pooled = pooled_windows(client_windows);
    let initial = models::init_model(model_cfg, fed_cfg.seed, &pooled)?;
    let mut params = initial.clone();
    let mut opt = OptState::new(train_cfg.optimizer);
    let e = fed_cfg.local_epochs;
    let mut rounds = Vec::with_capacity(fed_cfg.global_epochs);
    for g in 0..fed_cfg.global_epochs {
        let started = Instant::now();
        let mut steps = 0usize;
        let mut loss_sum = 0.0;
        for le in 0..e {
            let epoch_number = g * e + le + 1;
            let mut shuffle = rng::derive(fed_cfg.seed, "shuffle", &[g as u64, 0, le as u64]);
            let stats = models::local_train_epoch(
                &mut params,
                &mut opt,
                model_cfg,
                train_cfg,
                &pooled,
                epoch_number,
                &mut shuffle,
                None,
                None,
            )?;
            steps += stats.steps;
            loss_sum += stats.mean_loss;
        }
        rounds.push(RoundStats {
            round: g,
            mean_loss: loss_sum / e as f64,
            duration: started.elapsed(),
            client_steps: vec![steps],
        });
    }
    Ok(TrainingOutcome {
        initial,
        global: params,
        per_client: None,
        rounds,
    })
}

/// Isolated baseline: every client trains its own model from the shared
/// seeded initialization (its center and calibration see only its data),
/// with no aggregation. One client reproduces the central baseline.
fn run_isolated(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    fed_cfg: &FederationConfig,
    client_windows: &[WindowSet],
) -> Result<TrainingOutcome> {
    if client_windows.is_empty() {
        return Err(Error::EmptyInput("no clients".into()));
    }
    let pooled = pooled_windows(client_windows);
    let initial = models::init_model(model_cfg, fed_cfg.seed, &pooled)?;
    let mut per_client: Vec<(ParameterSet, OptState)> = client_windows
        .iter()
        .map(|ws| -> Result<(ParameterSet, OptState)> {
            Ok((
                models::init_model(model_cfg, fed_cfg.seed, ws)?,
                OptState::new(train_cfg.optimizer),
            ))
        })
        .collect::<Result<_>>()?;

    let e = fed_cfg.local_epochs;
    let mut rounds = Vec::with_capacity(fed_cfg.global_epochs);
    for g in 0..fed_cfg.global_epochs {
        let started = Instant::now();
        let stats: Vec<Result<(usize, f64)>> = per_client
            .par_iter_mut()
            .enumerate()
            .map(|(client, (params, opt))| {
                let mut steps = 0usize;
                let mut loss_sum = 0.0;
                for le in 0..e {
                    let epoch_number = g * e + le + 1;
                    let mut shuffle = rng::derive(
                        fed_cfg.seed,
                        "shuffle",
                        &[g as u64, client as u64, le as u64],
                    );
                    let s = models::local_train_epoch(
                        params,
                        opt,
                        model_cfg,
                        train_cfg,
                        &client_windows[client],
                        epoch_number,
                        &mut shuffle,
                        None,
                        None,
                    )?;
                    steps += s.steps;
                    loss_sum += s.mean_loss;
                }
                Ok((steps, loss_sum / e as f64))
            })
            .collect();

        let mut client_steps = Vec::with_capacity(stats.len());
        let mut active = 0usize;
        let mut loss_total = 0.0;
        for (client, s) in stats.into_iter().enumerate() {
            match s {
                Ok((steps, loss)) => {
                    client_steps.push(steps);
                    if steps > 0 {
                        active += 1;
                        loss_total += loss;
                    }
                }
                Err(source) => {
                    return Err(Error::ClientFailure {
                        client,
                        source: Box::new(source),
                    })
                }
            }
        }
        rounds.push(RoundStats {
            round: g,
            mean_loss: if active > 0 {
                loss_total / active as f64
            } else {
                0.0
            },
            duration: started.elapsed(),
            client_steps,
        });
    }
    Ok(TrainingOutcome {
        initial: initial.clone(),
        global: initial,
        per_client: Some(per_client.into_iter().map(|(p, _)| p).collect()),
        rounds,
    })
}
