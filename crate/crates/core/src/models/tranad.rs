//! Transformer detector with adversarial self-conditioning.
//!
//! Each window runs through a single-layer transformer encoder whose input
//! is the window concatenated with a focus matrix: all-zeros on the first
//! pass, the elementwise squared error of the first reconstruction on the
//! second. Two decoder branches (one attention layer plus a sigmoid output
//! projection each) produce reconstructions `O1 = D1(Enc(W, 0))`,
//! `O2 = D2(Enc(W, 0))` and the focus-conditioned `Ô2 = D2(Enc(W, focus))`.
//! Training follows the two-phase adversarial schedule with 1/e weights:
//! phase one `L1 = (1/e)·MSE(W, O1) + (1 − 1/e)·MSE(W, Ô2)` updates the
//! encoder and D1, phase two `L2 = (1/e)·MSE(W, O2) − (1 − 1/e)·MSE(W, Ô2)`
//! updates the encoder and D2. The score is the mean of the two anchor-row
//! squared errors (from O1 and Ô2).
//!
//! `latent_size` is the model width (two attention heads, so it must be
//! even); `hidden_size` is the feed-forward width. Residual connections
//! are kept but layer normalization is omitted; gradients stay exact and
//! well-scaled at these model sizes without it, and the focus term keeps
//! its gradient path (it is not detached).

use rand_chacha::ChaCha8Rng;

use super::layers::{init_linear, init_matrix, linear, sinusoidal_pe};
use super::{register_constants, Detector, ModelConfig, ParamVars};
use crate::dataset::WindowSet;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::params::ParameterSet;
use crate::tape::{Tape, Var};

const HEADS: usize = 2;

pub(crate) struct TranAd;

/// One attention + feed-forward block with residuals: `[w x d] -> [w x d]`.
fn attention_layer(tape: &mut Tape, vars: &ParamVars, prefix: &str, x: Var, d: usize) -> Var {
    let dh = d / HEADS;
    let q = tape.matmul(x, vars[&format!("{prefix}.wq")]);
    let k = tape.matmul(x, vars[&format!("{prefix}.wk")]);
    let v = tape.matmul(x, vars[&format!("{prefix}.wv")]);
    let mut heads = Vec::with_capacity(HEADS);
    for h in 0..HEADS {
        let qs = tape.slice_cols(q, h * dh, (h + 1) * dh);
        let ks = tape.slice_cols(k, h * dh, (h + 1) * dh);
        let vs = tape.slice_cols(v, h * dh, (h + 1) * dh);
        let kt = tape.transpose(ks);
        let scores = tape.matmul(qs, kt);
        let scaled = tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let attn = tape.softmax_rows(scaled);
        heads.push(tape.matmul(attn, vs));
    }
    let mut cat = heads[0];
    for &h in &heads[1..] {
        cat = tape.concat_cols(cat, h);
    }
    let proj = tape.matmul(cat, vars[&format!("{prefix}.wo")]);
    let res1 = tape.add(x, proj);
    let f_pre = linear(
        tape,
        res1,
        vars,
        &format!("{prefix}.ffn.w1"),
        Some(&format!("{prefix}.ffn.b1")),
    );
    let f_act = tape.tanh(f_pre);
    let f_out = linear(
        tape,
        f_act,
        vars,
        &format!("{prefix}.ffn.w2"),
        Some(&format!("{prefix}.ffn.b2")),
    );
    tape.add(res1, f_out)
}

/// Encode `[window ‖ focus]` with positional encoding: `[w x d]`.
fn encode(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    window: Var,
    focus: Var,
) -> Var {
    let inp = tape.concat_cols(window, focus);
    let proj = linear(tape, inp, vars, "in.w", Some("in.b"));
    let pe = tape.constant(sinusoidal_pe(cfg.window_len, cfg.latent_size));
    let with_pe = tape.add(proj, pe);
    attention_layer(tape, vars, "enc", with_pe, cfg.latent_size)
}

/// Decode branch `which`: attention block then sigmoid projection `[w x n]`.
fn decode(tape: &mut Tape, vars: &ParamVars, cfg: &ModelConfig, which: &str, enc_out: Var) -> Var {
    let y = attention_layer(tape, vars, which, enc_out, cfg.latent_size);
    let proj = linear(
        tape,
        y,
        vars,
        &format!("{which}.proj.w"),
        Some(&format!("{which}.proj.b")),
    );
    tape.sigmoid(proj)
}

/// Forward both passes for one window: (O1, Ô2, encoder output on zero focus).
fn forward_window(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    window: &Matrix,
) -> (Var, Var, Var) {
    let w_const = tape.constant(window.clone());
    let zero = tape.constant(Matrix::zeros(cfg.window_len, cfg.input_dims));
    let enc0 = encode(tape, vars, cfg, w_const, zero);
    let o1 = decode(tape, vars, cfg, "d1", enc0);
    let diff = tape.sub(o1, w_const);
    let focus = tape.square(diff);
    let enc_f = encode(tape, vars, cfg, w_const, focus);
    let o2_hat = decode(tape, vars, cfg, "d2", enc_f);
    (o1, o2_hat, enc0)
}

impl Detector for TranAd {
    fn init_params(&self, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParameterSet {
        let d = cfg.latent_size;
        let n = cfg.input_dims;
        let mut params = ParameterSet::new();
        init_linear(&mut params, rng, "in.w", Some("in.b"), 2 * n, d);
        for prefix in ["enc", "d1", "d2"] {
            for gate in ["wq", "wk", "wv", "wo"] {
                params.insert(format!("{prefix}.{gate}"), init_matrix(rng, d, d, d));
            }
            init_linear(
                &mut params,
                rng,
                &format!("{prefix}.ffn.w1"),
                Some(&format!("{prefix}.ffn.b1")),
                d,
                cfg.hidden_size,
            );
            init_linear(
                &mut params,
                rng,
                &format!("{prefix}.ffn.w2"),
                Some(&format!("{prefix}.ffn.b2")),
                cfg.hidden_size,
                d,
            );
        }
        for which in ["d1", "d2"] {
            init_linear(
                &mut params,
                rng,
                &format!("{which}.proj.w"),
                Some(&format!("{which}.proj.b")),
                d,
                n,
            );
        }
        params
    }

    fn phases(&self) -> usize {
        2
    }

    fn updates_in_phase(&self, phase: usize, entry: &str) -> bool {
        let own_decoder = if phase == 0 { "d1." } else { "d2." };
        entry.starts_with("in.") || entry.starts_with("enc.") || entry.starts_with(own_decoder)
    }

    fn build_loss(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        cfg: &ModelConfig,
        batch: &[&Matrix],
        epoch: usize,
        phase: usize,
    ) -> Var {
        let inv_e = 1.0 / epoch as f64;
        let mut total: Option<Var> = None;
        for window in batch {
            let (o1, o2_hat, enc0) = forward_window(tape, vars, cfg, window);
            let w_const = tape.constant((*window).clone());
            let adv = tape.mse(o2_hat, w_const);
            let (rec, adv_weight) = if phase == 0 {
                (tape.mse(o1, w_const), 1.0 - inv_e)
            } else {
                let o2 = decode(tape, vars, cfg, "d2", enc0);
                (tape.mse(o2, w_const), -(1.0 - inv_e))
            };
            let a = tape.scale(rec, inv_e);
            let b = tape.scale(adv, adv_weight);
            let loss_w = tape.add(a, b);
            total = Some(match total {
                None => loss_w,
                Some(acc) => tape.add(acc, loss_w),
            });
        }
        tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64)
    }

    fn build_representation(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        cfg: &ModelConfig,
        batch: &[&Matrix],
    ) -> Var {
        let mut rows = Vec::with_capacity(batch.len());
        for window in batch {
            let w_const = tape.constant((*window).clone());
            let zero = tape.constant(Matrix::zeros(cfg.window_len, cfg.input_dims));
            let enc0 = encode(tape, vars, cfg, w_const, zero);
            rows.push(tape.slice_rows(enc0, cfg.window_len - 1, cfg.window_len));
        }
        let mut rep = rows[0];
        for &row in &rows[1..] {
            rep = tape.concat_rows(rep, row);
        }
        rep
    }

    fn window_scores(
        &self,
        params: &ParameterSet,
        cfg: &ModelConfig,
        windows: &WindowSet,
    ) -> Result<Vec<f64>> {
        let anchor = cfg.window_len - 1;
        let n = cfg.input_dims as f64;
        let mut scores = Vec::with_capacity(windows.len());
        for window in &windows.windows {
            let mut tape = Tape::new();
            let vars = register_constants(&mut tape, params);
            let (o1, o2_hat, _) = forward_window(&mut tape, &vars, cfg, window);
            let o1 = tape.value(o1).clone();
            let o2_hat = tape.value(o2_hat);
            let target = window.row(anchor);
            let mut e1 = 0.0;
            let mut e2 = 0.0;
            for (d, t) in target.iter().enumerate() {
                e1 += (o1.get(anchor, d) - t).powi(2);
                e2 += (o2_hat.get(anchor, d) - t).powi(2);
            }
            scores.push(0.5 * (e1 / n + e2 / n));
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_windows;
    use crate::models::{extract_representation, init_model, loss_value, ModelKind};
    use crate::rng;

    fn cfg() -> ModelConfig {
        ModelConfig {
            kind: ModelKind::TranAd,
            input_dims: 2,
            window_len: 3,
            hidden_size: 4,
            latent_size: 4,
            usad_alpha: 0.1,
            usad_beta_score: 0.9,
            gdn_top_k: 1,
        }
    }

    fn windows(rows: usize, seed: u64) -> WindowSet {
        let mut r = rng::derive(seed, "tranad-test", &[]);
        let m = Matrix::random_uniform(rows, 2, 0.0, 1.0, &mut r);
        make_windows(&m, 3, 1).unwrap()
    }

    // --- Plain-matrix oracle of the whole forward pass -------------------

    fn add_bias(x: &Matrix, b: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                out.set(r, c, out.get(r, c) + b.get(0, c));
            }
        }
        out
    }

    fn softmax_rows(x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let mx = x.row(r).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = x.row(r).iter().map(|v| (v - mx).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for (c, e) in exps.iter().enumerate() {
                out.set(r, c, e / sum);
            }
        }
        out
    }

    fn oracle_layer(params: &ParameterSet, prefix: &str, x: &Matrix, d: usize) -> Matrix {
        let dh = d / HEADS;
        let q = x.matmul(params.get(&format!("{prefix}.wq")).unwrap());
        let k = x.matmul(params.get(&format!("{prefix}.wk")).unwrap());
        let v = x.matmul(params.get(&format!("{prefix}.wv")).unwrap());
        let mut cat = Matrix::zeros(x.rows(), 0);
        for h in 0..HEADS {
            let qs = q.slice_cols(h * dh, (h + 1) * dh);
            let ks = k.slice_cols(h * dh, (h + 1) * dh);
            let vs = v.slice_cols(h * dh, (h + 1) * dh);
            let scores = qs.matmul(&ks.transpose()).scale(1.0 / (dh as f64).sqrt());
            let head = softmax_rows(&scores).matmul(&vs);
            cat = if cat.cols() == 0 { head } else { cat.hstack(&head) };
        }
        let res1 = x.add(&cat.matmul(params.get(&format!("{prefix}.wo")).unwrap()));
        let f1 = add_bias(
            &res1.matmul(params.get(&format!("{prefix}.ffn.w1")).unwrap()),
            params.get(&format!("{prefix}.ffn.b1")).unwrap(),
        )
        .map(f64::tanh);
        let f2 = add_bias(
            &f1.matmul(params.get(&format!("{prefix}.ffn.w2")).unwrap()),
            params.get(&format!("{prefix}.ffn.b2")).unwrap(),
        );
        res1.add(&f2)
    }

    fn oracle_encode(params: &ParameterSet, cfg: &ModelConfig, w: &Matrix, focus: &Matrix) -> Matrix {
        let inp = w.hstack(focus);
        let proj = add_bias(
            &inp.matmul(params.get("in.w").unwrap()),
            params.get("in.b").unwrap(),
        );
        let with_pe = proj.add(&sinusoidal_pe(cfg.window_len, cfg.latent_size));
        oracle_layer(params, "enc", &with_pe, cfg.latent_size)
    }

    fn oracle_decode(params: &ParameterSet, cfg: &ModelConfig, which: &str, enc: &Matrix) -> Matrix {
        let y = oracle_layer(params, which, enc, cfg.latent_size);
        add_bias(
            &y.matmul(params.get(&format!("{which}.proj.w")).unwrap()),
            params.get(&format!("{which}.proj.b")).unwrap(),
        )
        .map(|v| 1.0 / (1.0 + (-v).exp()))
    }

    fn oracle_mse(a: &Matrix, b: &Matrix) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            let d = a.as_slice()[i] - b.as_slice()[i];
            s += d * d;
        }
        s / a.len() as f64
    }

    #[test]
    fn losses_match_plain_matrix_oracle() {
        let cfg = cfg();
        let ws = windows(7, 1);
        let params = init_model(&cfg, 3, &ws).unwrap();
        let batch: Vec<&Matrix> = ws.windows.iter().take(3).collect();

        let per_window: Vec<(f64, f64, f64)> = batch
            .iter()
            .map(|w| {
                let zero = Matrix::zeros(cfg.window_len, cfg.input_dims);
                let enc0 = oracle_encode(&params, &cfg, w, &zero);
                let o1 = oracle_decode(&params, &cfg, "d1", &enc0);
                let o2 = oracle_decode(&params, &cfg, "d2", &enc0);
                let focus = o1.sub(w).map(|v| v * v);
                let enc_f = oracle_encode(&params, &cfg, w, &focus);
                let o2_hat = oracle_decode(&params, &cfg, "d2", &enc_f);
                (oracle_mse(&o1, w), oracle_mse(&o2, w), oracle_mse(&o2_hat, w))
            })
            .collect();

        for epoch in [1usize, 5] {
            let inv_e = 1.0 / epoch as f64;
            let expect1: f64 = per_window
                .iter()
                .map(|(r1, _, adv)| inv_e * r1 + (1.0 - inv_e) * adv)
                .sum::<f64>()
                / batch.len() as f64;
            let l1 = loss_value(&params, &cfg, &batch, epoch, 0).unwrap();
            assert!((l1 - expect1).abs() < 1e-12, "phase 0 epoch {epoch}");

            let expect2: f64 = per_window
                .iter()
                .map(|(_, r2, adv)| inv_e * r2 - (1.0 - inv_e) * adv)
                .sum::<f64>()
                / batch.len() as f64;
            let l2 = loss_value(&params, &cfg, &batch, epoch, 1).unwrap();
            assert!((l2 - expect2).abs() < 1e-12, "phase 1 epoch {epoch}");
        }
    }

    #[test]
    fn score_and_representation_match_oracle() {
        let cfg = cfg();
        let ws = windows(8, 2);
        let params = init_model(&cfg, 4, &ws).unwrap();
        let scores = TranAd.window_scores(&params, &cfg, &ws).unwrap();
        let batch: Vec<&Matrix> = ws.windows.iter().collect();
        let rep = extract_representation(&params, &cfg, &batch).unwrap();
        let anchor = cfg.window_len - 1;
        for (i, w) in ws.windows.iter().enumerate() {
            let zero = Matrix::zeros(cfg.window_len, cfg.input_dims);
            let enc0 = oracle_encode(&params, &cfg, w, &zero);
            let o1 = oracle_decode(&params, &cfg, "d1", &enc0);
            let focus = o1.sub(w).map(|v| v * v);
            let enc_f = oracle_encode(&params, &cfg, w, &focus);
            let o2_hat = oracle_decode(&params, &cfg, "d2", &enc_f);
            let mut e1 = 0.0;
            let mut e2 = 0.0;
            for d in 0..cfg.input_dims {
                e1 += (o1.get(anchor, d) - w.get(anchor, d)).powi(2);
                e2 += (o2_hat.get(anchor, d) - w.get(anchor, d)).powi(2);
            }
            let expect = 0.5 * (e1 + e2) / cfg.input_dims as f64;
            assert!((scores[i] - expect).abs() < 1e-12);
            for d in 0..cfg.latent_size {
                assert!((rep.get(i, d) - enc0.get(anchor, d)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phase_masks_cover_encoder_and_own_decoder() {
        assert!(TranAd.updates_in_phase(0, "in.w"));
        assert!(TranAd.updates_in_phase(0, "enc.wq"));
        assert!(TranAd.updates_in_phase(0, "d1.proj.w"));
        assert!(!TranAd.updates_in_phase(0, "d2.wo"));
        assert!(TranAd.updates_in_phase(1, "enc.ffn.b2"));
        assert!(TranAd.updates_in_phase(1, "d2.proj.b"));
        assert!(!TranAd.updates_in_phase(1, "d1.ffn.w1"));
    }

    #[test]
    fn gradients_match_finite_differences_in_both_phases() {
        let cfg = cfg();
        let ws = windows(5, 3);
        let params = init_model(&cfg, 5, &ws).unwrap();
        let batch: Vec<&Matrix> = ws.windows.iter().take(2).collect();
        let h = 1e-5;
        for phase in 0..2 {
            let (_, grads) = crate::models::loss_gradient(&params, &cfg, &batch, 2, phase).unwrap();
            for (name, m) in params.trainable() {
                for idx in (0..m.len()).step_by(5) {
                    let mut plus = params.clone();
                    plus.get_mut(name).unwrap().as_mut_slice()[idx] += h;
                    let mut minus = params.clone();
                    minus.get_mut(name).unwrap().as_mut_slice()[idx] -= h;
                    let fd = (loss_value(&plus, &cfg, &batch, 2, phase).unwrap()
                        - loss_value(&minus, &cfg, &batch, 2, phase).unwrap())
                        / (2.0 * h);
                    let a = grads.get(name).unwrap().as_slice()[idx];
                    let denom = a.abs().max(fd.abs()).max(1.0);
                    assert!(
                        (a - fd).abs() / denom < 1e-5,
                        "phase {phase} {name}[{idx}]: {a} vs {fd}"
                    );
                }
            }
        }
    }
}
