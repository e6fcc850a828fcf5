//! Adversarially trained dual-decoder autoencoder.
//!
//! One shared encoder feeds two decoders. Each batch takes two optimizer
//! steps. Phase one trains autoencoder AE1 = D1∘E to reconstruct the
//! window while also fooling AE2:
//! `L1 = (1/e)·MSE(W, AE1(W)) + (1 − 1/e)·MSE(W, AE2(AE1(W)))`.
//! Phase two trains AE2 = D2∘E to reconstruct real windows but reject
//! AE1's reconstructions:
//! `L2 = (1/e)·MSE(W, AE2(W)) − (1 − 1/e)·MSE(W, AE2(AE1(W)))`,
//! where `e` is the 1-based cumulative epoch, shifting weight from plain
//! reconstruction to the adversarial game as training progresses. The
//! anomaly score mixes the two reconstruction errors:
//! `α·MSE(W, AE1(W)) + β·MSE(W, AE2(AE1(W)))` per window.
//!
//! Decoders end in a sigmoid because inputs are min-max scaled to [0, 1].

use rand_chacha::ChaCha8Rng;

use super::layers::{init_linear, linear};
use super::{flatten_batch, register_constants, Detector, ModelConfig, ParamVars};
use crate::dataset::WindowSet;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::params::ParameterSet;
use crate::tape::{Tape, Var};

const CHUNK: usize = 512;

pub(crate) struct Usad;

fn encode(tape: &mut Tape, vars: &ParamVars, x: Var) -> Var {
    let h_pre = linear(tape, x, vars, "e.w1", Some("e.b1"));
    let h = tape.tanh(h_pre);
    let z_pre = linear(tape, h, vars, "e.w2", Some("e.b2"));
    tape.tanh(z_pre)
}

fn decode(tape: &mut Tape, vars: &ParamVars, which: &str, z: Var) -> Var {
    let h_pre = linear(tape, z, vars, &format!("{which}.w1"), Some(&format!("{which}.b1")));
    let h = tape.tanh(h_pre);
    let out_pre = linear(tape, h, vars, &format!("{which}.w2"), Some(&format!("{which}.b2")));
    tape.sigmoid(out_pre)
}

/// Per-window mean squared error between two `[B x wn]` variables: `[B x 1]`.
fn row_mse(tape: &mut Tape, a: Var, b: Var, wn: usize) -> Var {
    let diff = tape.sub(a, b);
    let sq = tape.square(diff);
    let sums = tape.row_sum(sq);
    tape.scale(sums, 1.0 / wn as f64)
}

impl Detector for Usad {
    fn init_params(&self, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParameterSet {
        let flat = cfg.window_len * cfg.input_dims;
        let mut params = ParameterSet::new();
        init_linear(&mut params, rng, "e.w1", Some("e.b1"), flat, cfg.hidden_size);
        init_linear(&mut params, rng, "e.w2", Some("e.b2"), cfg.hidden_size, cfg.latent_size);
        for which in ["d1", "d2"] {
            init_linear(
                &mut params,
                rng,
                &format!("{which}.w1"),
                Some(&format!("{which}.b1")),
                cfg.latent_size,
                cfg.hidden_size,
            );
            init_linear(
                &mut params,
                rng,
                &format!("{which}.w2"),
                Some(&format!("{which}.b2")),
                cfg.hidden_size,
                flat,
            );
        }
        params
    }

    fn phases(&self) -> usize {
        2
    }

    fn updates_in_phase(&self, phase: usize, entry: &str) -> bool {
        let own_decoder = if phase == 0 { "d1." } else { "d2." };
        entry.starts_with("e.") || entry.starts_with(own_decoder)
    }

    fn build_loss(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        _cfg: &ModelConfig,
        batch: &[&Matrix],
        epoch: usize,
        phase: usize,
    ) -> Var {
        let inv_e = 1.0 / epoch as f64;
        let x = tape.constant(flatten_batch(batch));
        let z = encode(tape, vars, x);
        let ae1 = decode(tape, vars, "d1", z);
        let z_chain = encode(tape, vars, ae1);
        let ae2_chain = decode(tape, vars, "d2", z_chain);
        let adv = tape.mse(ae2_chain, x);
        let (rec, adv_weight) = if phase == 0 {
            (tape.mse(ae1, x), 1.0 - inv_e)
        } else {
            let ae2 = decode(tape, vars, "d2", z);
            (tape.mse(ae2, x), -(1.0 - inv_e))
        };
        let a = tape.scale(rec, inv_e);
        let b = tape.scale(adv, adv_weight);
        tape.add(a, b)
    }

    fn build_representation(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        _cfg: &ModelConfig,
        batch: &[&Matrix],
    ) -> Var {
        let x = tape.constant(flatten_batch(batch));
        encode(tape, vars, x)
    }

    fn window_scores(
        &self,
        params: &ParameterSet,
        cfg: &ModelConfig,
        windows: &WindowSet,
    ) -> Result<Vec<f64>> {
        let wn = cfg.window_len * cfg.input_dims;
        let mut scores = Vec::with_capacity(windows.len());
        for chunk in windows.windows.chunks(CHUNK) {
            let batch: Vec<&Matrix> = chunk.iter().collect();
            let mut tape = Tape::new();
            let vars = register_constants(&mut tape, params);
            let x = tape.constant(flatten_batch(&batch));
            let z = encode(&mut tape, &vars, x);
            let ae1 = decode(&mut tape, &vars, "d1", z);
            let z_chain = encode(&mut tape, &vars, ae1);
            let ae2_chain = decode(&mut tape, &vars, "d2", z_chain);
            let e1 = row_mse(&mut tape, ae1, x, wn);
            let e2 = row_mse(&mut tape, ae2_chain, x, wn);
            let e1 = tape.value(e1).clone();
            let e2 = tape.value(e2);
            scores.extend((0..e1.rows()).map(|b| {
                cfg.usad_alpha * e1.get(b, 0) + cfg.usad_beta_score * e2.get(b, 0)
            }));
        }
        Ok(scores)
    }
}
