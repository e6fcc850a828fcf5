//! One-class hypersphere detector.
//!
//! A two-layer encoder maps each flattened window to a latent point; the
//! loss is the mean squared distance to a fixed center computed once from
//! the initial training data (mean of the initial latent codes). Training
//! contracts the sphere around normal windows; the anomaly score is the
//! latent distance to the center. The output layer carries no bias so the
//! encoder cannot translate everything onto the center for free.

use rand_chacha::ChaCha8Rng;

use super::layers::{init_linear, linear};
use super::{flatten_batch, register_constants, Detector, ModelConfig, ParamVars};
use crate::dataset::WindowSet;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::params::ParameterSet;
use crate::tape::{Tape, Var};

/// Auxiliary entry holding the hypersphere center `[1 x latent]`.
const CENTER: &str = "_center";

/// Scoring forward passes run in bounded chunks.
const CHUNK: usize = 512;

pub(crate) struct DeepSvdd;

fn encode(tape: &mut Tape, vars: &ParamVars, x: Var) -> Var {
    let pre = linear(tape, x, vars, "enc.w1", Some("enc.b1"));
    let h = tape.tanh(pre);
    linear(tape, h, vars, "enc.w2", None)
}

/// Squared distance of each latent row to the center: `[B x 1]`.
fn sq_distances(tape: &mut Tape, vars: &ParamVars, batch: &[&Matrix]) -> Var {
    let x = tape.constant(flatten_batch(batch));
    let z = encode(tape, vars, x);
    let center = tape.broadcast_row(vars[CENTER], batch.len());
    let diff = tape.sub(z, center);
    let sq = tape.square(diff);
    tape.row_sum(sq)
}

impl Detector for DeepSvdd {
    fn init_params(&self, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParameterSet {
        let flat = cfg.window_len * cfg.input_dims;
        let mut params = ParameterSet::new();
        init_linear(&mut params, rng, "enc.w1", Some("enc.b1"), flat, cfg.hidden_size);
        init_linear(&mut params, rng, "enc.w2", None, cfg.hidden_size, cfg.latent_size);
        params.insert(CENTER, Matrix::zeros(1, cfg.latent_size));
        params
    }

    fn finalize_init(
        &self,
        params: &mut ParameterSet,
        cfg: &ModelConfig,
        init_windows: &WindowSet,
    ) -> Result<()> {
        if init_windows.is_empty() {
            return Ok(()); // keep the zero center
        }
        let mut sums = vec![0.0; cfg.latent_size];
        for chunk in init_windows.windows.chunks(CHUNK) {
            let batch: Vec<&Matrix> = chunk.iter().collect();
            let mut tape = Tape::new();
            let vars = register_constants(&mut tape, params);
            let x = tape.constant(flatten_batch(&batch));
            let z = encode(&mut tape, &vars, x);
            let z = tape.value(z);
            for b in 0..z.rows() {
                for (j, s) in sums.iter_mut().enumerate() {
                    *s += z.get(b, j);
                }
            }
        }
        let count = init_windows.len() as f64;
        let center = Matrix::from_vec(1, cfg.latent_size, sums.iter().map(|s| s / count).collect());
        params.insert(CENTER, center);
        Ok(())
    }

    fn build_loss(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        _cfg: &ModelConfig,
        batch: &[&Matrix],
        _epoch: usize,
        _phase: usize,
    ) -> Var {
        let dist = sq_distances(tape, vars, batch);
        tape.mean_all(dist)
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
        _cfg: &ModelConfig,
        windows: &WindowSet,
    ) -> Result<Vec<f64>> {
        let mut scores = Vec::with_capacity(windows.len());
        for chunk in windows.windows.chunks(CHUNK) {
            let batch: Vec<&Matrix> = chunk.iter().collect();
            let mut tape = Tape::new();
            let vars = register_constants(&mut tape, params);
            let dist = sq_distances(&mut tape, &vars, &batch);
            let dist = tape.value(dist);
            scores.extend((0..dist.rows()).map(|b| dist.get(b, 0).max(0.0).sqrt()));
        }
        Ok(scores)
    }
}
