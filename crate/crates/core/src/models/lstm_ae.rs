//! Recurrent autoencoder detector.
//!
//! An encoder LSTM consumes the window and its final hidden state seeds a
//! decoder LSTM that re-emits the window step by step (feeding each
//! prediction back as the next input, first input all-zeros). The loss is
//! the mean squared reconstruction error over the whole window; the
//! anomaly score of a window is the mean squared error of its last
//! timestep — the step the window is anchored to.
//!
//! The recurrent width equals `latent_size` so the representation (the
//! encoder's final hidden state) has the shared latent width;
//! `hidden_size` is not used by this kind.

use rand_chacha::ChaCha8Rng;

use super::layers::{init_linear, init_lstm, linear, lstm_step};
use super::{register_constants, timestep_batch, Detector, ModelConfig, ParamVars};
use crate::dataset::WindowSet;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::params::ParameterSet;
use crate::tape::{Tape, Var};

const CHUNK: usize = 256;

pub(crate) struct LstmAe;

/// Run the encoder; returns the final (h, c).
fn encode(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    batch: &[&Matrix],
) -> (Var, Var) {
    let b = batch.len();
    let mut h = tape.constant(Matrix::zeros(b, cfg.latent_size));
    let mut c = tape.constant(Matrix::zeros(b, cfg.latent_size));
    for t in 0..cfg.window_len {
        let x_t = tape.constant(timestep_batch(batch, t));
        let (h2, c2) = lstm_step(tape, x_t, h, c, vars, "enc", cfg.latent_size);
        h = h2;
        c = c2;
    }
    (h, c)
}

/// Decode a window from the encoder state; returns each step's
/// reconstruction `[B x n]`.
fn decode(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    state: (Var, Var),
    batch_len: usize,
) -> Vec<Var> {
    let (mut h, mut c) = state;
    let mut input = tape.constant(Matrix::zeros(batch_len, cfg.input_dims));
    let mut outputs = Vec::with_capacity(cfg.window_len);
    for _ in 0..cfg.window_len {
        let (h2, c2) = lstm_step(tape, input, h, c, vars, "dec", cfg.latent_size);
        h = h2;
        c = c2;
        let x_hat = linear(tape, h, vars, "out.w", Some("out.b"));
        outputs.push(x_hat);
        input = x_hat;
    }
    outputs
}

impl Detector for LstmAe {
    fn init_params(&self, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParameterSet {
        let mut params = ParameterSet::new();
        init_lstm(&mut params, rng, "enc", cfg.input_dims, cfg.latent_size);
        init_lstm(&mut params, rng, "dec", cfg.input_dims, cfg.latent_size);
        init_linear(
            &mut params,
            rng,
            "out.w",
            Some("out.b"),
            cfg.latent_size,
            cfg.input_dims,
        );
        params
    }

    fn build_loss(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        cfg: &ModelConfig,
        batch: &[&Matrix],
        _epoch: usize,
        _phase: usize,
    ) -> Var {
        let state = encode(tape, vars, cfg, batch);
        let outputs = decode(tape, vars, cfg, state, batch.len());
        let mut total: Option<Var> = None;
        for (t, &x_hat) in outputs.iter().enumerate() {
            let x_t = tape.constant(timestep_batch(batch, t));
            let diff = tape.sub(x_hat, x_t);
            let sq = tape.square(diff);
            let s = tape.sum_all(sq);
            total = Some(match total {
                None => s,
                Some(acc) => tape.add(acc, s),
            });
        }
        let scale = 1.0 / (batch.len() * cfg.window_len * cfg.input_dims) as f64;
        tape.scale(total.expect("window_len >= 2"), scale)
    }

    fn build_representation(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        cfg: &ModelConfig,
        batch: &[&Matrix],
    ) -> Var {
        encode(tape, vars, cfg, batch).0
    }

    fn window_scores(
        &self,
        params: &ParameterSet,
        cfg: &ModelConfig,
        windows: &WindowSet,
    ) -> Result<Vec<f64>> {
        let mut scores = Vec::with_capacity(windows.len());
        for chunk in windows.windows.chunks(CHUNK) {
            let batch: Vec<&Matrix> = chunk.iter().collect();
            let mut tape = Tape::new();
            let vars = register_constants(&mut tape, params);
            let state = encode(&mut tape, &vars, cfg, &batch);
            let outputs = decode(&mut tape, &vars, cfg, state, batch.len());
            let last = *outputs.last().expect("window_len >= 2");
            let x_last = tape.constant(timestep_batch(&batch, cfg.window_len - 1));
            let diff = tape.sub(last, x_last);
            let sq = tape.square(diff);
            let per_row = tape.row_sum(sq);
            let per_row = tape.value(per_row);
            scores.extend(
                (0..per_row.rows()).map(|b| per_row.get(b, 0) / cfg.input_dims as f64),
            );
        }
        Ok(scores)
    }
}
