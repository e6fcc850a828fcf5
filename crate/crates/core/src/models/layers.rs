//! Shared building blocks for the detectors: seeded layer initialization,
//! linear and LSTM forward steps on the tape, and positional encodings.

use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::params::ParameterSet;
use crate::tape::{Tape, Var};

use super::ParamVars;

/// Uniform init in ±1/√fan_in, the convention used by all layers here.
pub fn init_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Matrix::random_uniform(rows, cols, -bound, bound, rng)
}

/// Register a weight (and optional bias) for a linear map `rows -> cols`.
pub fn init_linear(
    params: &mut ParameterSet,
    rng: &mut ChaCha8Rng,
    w_name: &str,
    b_name: Option<&str>,
    rows: usize,
    cols: usize,
) {
    params.insert(w_name, init_matrix(rng, rows, cols, rows));
    if let Some(b) = b_name {
        params.insert(b, init_matrix(rng, 1, cols, rows));
    }
}

/// `x · W (+ b)` on the tape.
pub fn linear(tape: &mut Tape, x: Var, vars: &ParamVars, w_name: &str, b_name: Option<&str>) -> Var {
    let y = tape.matmul(x, vars[w_name]);
    match b_name {
        Some(b) => tape.add_row(y, vars[b]),
        None => y,
    }
}

/// Register one LSTM cell's parameters under `prefix`:
/// `<prefix>.w_ih` [input x 4h], `<prefix>.w_hh` [h x 4h], `<prefix>.b` [1 x 4h].
pub fn init_lstm(
    params: &mut ParameterSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    input: usize,
    hidden: usize,
) {
    params.insert(
        format!("{prefix}.w_ih"),
        init_matrix(rng, input, 4 * hidden, hidden),
    );
    params.insert(
        format!("{prefix}.w_hh"),
        init_matrix(rng, hidden, 4 * hidden, hidden),
    );
    params.insert(format!("{prefix}.b"), init_matrix(rng, 1, 4 * hidden, hidden));
}

/// One LSTM step over a batch: gate order (input, forget, candidate, output).
///
/// `x_t` is [B x input], `h`/`c` are [B x hidden]; returns the new (h, c).
pub fn lstm_step(
    tape: &mut Tape,
    x_t: Var,
    h: Var,
    c: Var,
    vars: &ParamVars,
    prefix: &str,
    hidden: usize,
) -> (Var, Var) {
    let xw = tape.matmul(x_t, vars[&format!("{prefix}.w_ih")]);
    let hw = tape.matmul(h, vars[&format!("{prefix}.w_hh")]);
    let pre = tape.add(xw, hw);
    let gates = tape.add_row(pre, vars[&format!("{prefix}.b")]);

    let i_pre = tape.slice_cols(gates, 0, hidden);
    let f_pre = tape.slice_cols(gates, hidden, 2 * hidden);
    let g_pre = tape.slice_cols(gates, 2 * hidden, 3 * hidden);
    let o_pre = tape.slice_cols(gates, 3 * hidden, 4 * hidden);

    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);

    let keep = tape.mul(f, c);
    let write = tape.mul(i, g);
    let c_new = tape.add(keep, write);
    let c_act = tape.tanh(c_new);
    let h_new = tape.mul(o, c_act);
    (h_new, c_new)
}

/// Fixed sinusoidal positional encoding of shape [len x dim].
pub fn sinusoidal_pe(len: usize, dim: usize) -> Matrix {
    let mut pe = Matrix::zeros(len, dim);
    for pos in 0..len {
        for i in 0..dim {
            let rate = 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            pe.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}
