//! Graph-attention forecasting detector.
//!
//! Each input dimension is a node with a learned embedding. A directed
//! graph links every node to its top-k most cosine-similar embeddings
//! (self always included, graph recomputed from current embedding values
//! at every forward pass). Per window, each node's history — its w−1 past
//! values — is projected to a feature vector; graph attention à la GAT
//! (`e_ij = LeakyReLU(a_lᵀg_i + a_rᵀg_j)` over `g = [embedding ‖ feature]`)
//! aggregates neighbor features, and a small head predicts the anchor-row
//! value of every node. The loss is the mean squared forecast error.
//!
//! Scores are deviations normalized per dimension by robust statistics
//! (median / IQR of absolute training errors, fit by `calibrate`); a
//! window's score is its worst normalized dimension. Before calibration
//! the statistics default to median 0 / IQR 1, making the score simply
//! the largest absolute error.

use rand_chacha::ChaCha8Rng;

use super::layers::{init_linear, init_matrix, linear};
use super::{register_constants, Detector, ModelConfig, ParamVars};
use crate::dataset::WindowSet;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::params::ParameterSet;
use crate::tape::{Tape, Var};

const MEDIAN: &str = "_score_median";
const IQR: &str = "_score_iqr";
/// Share of the training windows (the most recent ones) used to fit the
/// scoring statistics.
const CALIBRATION_TAIL: f64 = 0.1;
const LEAKY_SLOPE: f64 = 0.2;

pub(crate) struct Gdn;

/// Top-k cosine neighbors per node from current embedding values;
/// entry 0 of each list is the node itself. Ties prefer lower indices.
fn neighbor_lists(embed: &Matrix, top_k: usize) -> Vec<Vec<usize>> {
    let n = embed.rows();
    let k = top_k.min(n.saturating_sub(1));
    let norms: Vec<f64> = (0..n)
        .map(|i| embed.row(i).iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12))
        .collect();
    let mut lists = Vec::with_capacity(n);
    for i in 0..n {
        let sims: Vec<f64> = (0..n)
            .map(|j| {
                let dot: f64 = embed
                    .row(i)
                    .iter()
                    .zip(embed.row(j))
                    .map(|(a, b)| a * b)
                    .sum();
                dot / (norms[i] * norms[j])
            })
            .collect();
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
        let mut nbrs = Vec::with_capacity(k + 1);
        nbrs.push(i);
        nbrs.extend(order.into_iter().take(k));
        lists.push(nbrs);
    }
    lists
}

/// One window's graph forward pass: returns the per-node prediction
/// `[n x 1]` for the anchor row and the aggregated node features
/// `[n x latent]`.
fn forward_window(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    window: &Matrix,
    neighbors: &[Vec<usize>],
) -> (Var, Var) {
    let n = cfg.input_dims;
    let w = cfg.window_len;
    let past = tape.constant(window.slice_rows(0, w - 1)); // [(w-1) x n]
    let past_t = tape.transpose(past); // [n x (w-1)]
    let feats = tape.matmul(past_t, vars["w_x"]); // [n x latent]
    let g = tape.concat_cols(vars["embed"], feats); // [n x 2*latent]
    let s = tape.matmul(g, vars["a_l"]); // [n x 1]
    let r = tape.matmul(g, vars["a_r"]); // [n x 1]

    let mut agg_rows = Vec::with_capacity(n);
    for (i, nbrs) in neighbors.iter().enumerate() {
        let r_nbrs = tape.gather_rows(r, nbrs); // [(k+1) x 1]
        let s_i = tape.slice_rows(s, i, i + 1); // [1 x 1]
        let s_b = tape.broadcast_row(s_i, nbrs.len());
        let pre = tape.add(s_b, r_nbrs);
        let logits = tape.leaky_relu(pre, LEAKY_SLOPE);
        let logits_row = tape.transpose(logits); // [1 x (k+1)]
        let alpha = tape.softmax_rows(logits_row);
        let f_nbrs = tape.gather_rows(feats, nbrs); // [(k+1) x latent]
        agg_rows.push(tape.matmul(alpha, f_nbrs)); // [1 x latent]
    }
    let mut h = agg_rows[0];
    for &row in &agg_rows[1..] {
        h = tape.concat_rows(h, row);
    }
    let h_act = tape.tanh(h); // [n x latent]

    let z = tape.mul(vars["embed"], h_act); // embedding-gated features
    let pre = linear(tape, z, vars, "out.w1", Some("out.b1"));
    let hid = tape.tanh(pre);
    let pred = linear(tape, hid, vars, "out.w2", Some("out.b2")); // [n x 1]
    (pred, h_act)
}

/// Absolute forecast errors per window: one `Vec<f64>` of length n each.
fn abs_errors(
    params: &ParameterSet,
    cfg: &ModelConfig,
    windows: &[Matrix],
) -> Vec<Vec<f64>> {
    let neighbors = neighbor_lists(params.get("embed").unwrap(), cfg.gdn_top_k);
    let mut out = Vec::with_capacity(windows.len());
    for window in windows {
        let mut tape = Tape::new();
        let vars = register_constants(&mut tape, params);
        let (pred, _) = forward_window(&mut tape, &vars, cfg, window, &neighbors);
        let pred = tape.value(pred);
        let target = window.row(cfg.window_len - 1);
        out.push(
            (0..cfg.input_dims)
                .map(|d| (pred.get(d, 0) - target[d]).abs())
                .collect(),
        );
    }
    out
}

/// Linear-interpolation percentile of a sorted slice, p in [0, 1].
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

impl Detector for Gdn {
    fn init_params(&self, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParameterSet {
        let n = cfg.input_dims;
        let latent = cfg.latent_size;
        let mut params = ParameterSet::new();
        params.insert("embed", init_matrix(rng, n, latent, latent));
        params.insert("w_x", init_matrix(rng, cfg.window_len - 1, latent, cfg.window_len - 1));
        params.insert("a_l", init_matrix(rng, 2 * latent, 1, 2 * latent));
        params.insert("a_r", init_matrix(rng, 2 * latent, 1, 2 * latent));
        init_linear(&mut params, rng, "out.w1", Some("out.b1"), latent, cfg.hidden_size);
        init_linear(&mut params, rng, "out.w2", Some("out.b2"), cfg.hidden_size, 1);
        params.insert(MEDIAN, Matrix::zeros(1, n));
        params.insert(IQR, Matrix::filled(1, n, 1.0));
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
        let neighbors = neighbor_lists(tape.value(vars["embed"]), cfg.gdn_top_k);
        let mut total: Option<Var> = None;
        for window in batch {
            let (pred, _) = forward_window(tape, vars, cfg, window, &neighbors);
            let target_col = Matrix::from_vec(
                cfg.input_dims,
                1,
                window.row(cfg.window_len - 1).to_vec(),
            );
            let target = tape.constant(target_col);
            let diff = tape.sub(pred, target);
            let sq = tape.square(diff);
            let s = tape.sum_all(sq);
            total = Some(match total {
                None => s,
                Some(acc) => tape.add(acc, s),
            });
        }
        let scale = 1.0 / (batch.len() * cfg.input_dims) as f64;
        tape.scale(total.expect("non-empty batch"), scale)
    }

    fn build_representation(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        cfg: &ModelConfig,
        batch: &[&Matrix],
    ) -> Var {
        let neighbors = neighbor_lists(tape.value(vars["embed"]), cfg.gdn_top_k);
        let mean_weights = tape.constant(Matrix::filled(1, cfg.input_dims, 1.0 / cfg.input_dims as f64));
        let mut rows = Vec::with_capacity(batch.len());
        for window in batch {
            let (_, h_act) = forward_window(tape, vars, cfg, window, &neighbors);
            rows.push(tape.matmul(mean_weights, h_act)); // mean node feature
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
        let median = params.get(MEDIAN).unwrap();
        let iqr = params.get(IQR).unwrap();
        Ok(abs_errors(params, cfg, &windows.windows)
            .into_iter()
            .map(|errs| {
                errs.iter()
                    .enumerate()
                    .map(|(d, e)| (e - median.get(0, d)) / iqr.get(0, d).max(1e-6))
                    .fold(f64::NEG_INFINITY, f64::max)
                    .max(0.0)
            })
            .collect())
    }

    fn calibrate(
        &self,
        params: &mut ParameterSet,
        cfg: &ModelConfig,
        train_windows: &WindowSet,
    ) -> Result<()> {
        if train_windows.is_empty() {
            return Ok(()); // keep the neutral defaults
        }
        let total = train_windows.len();
        let tail = ((total as f64 * CALIBRATION_TAIL).ceil() as usize).clamp(1, total);
        let errors = abs_errors(params, cfg, &train_windows.windows[total - tail..]);
        let mut median = Matrix::zeros(1, cfg.input_dims);
        let mut iqr = Matrix::zeros(1, cfg.input_dims);
        for d in 0..cfg.input_dims {
            let mut vals: Vec<f64> = errors.iter().map(|e| e[d]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            median.set(0, d, percentile(&vals, 0.5));
            iqr.set(0, d, percentile(&vals, 0.75) - percentile(&vals, 0.25));
        }
        params.insert(MEDIAN, median);
        params.insert(IQR, iqr);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_windows;
    use crate::models::{calibrate_scoring, init_model, loss_value, ModelKind};
    use crate::rng;

    fn cfg() -> ModelConfig {
        ModelConfig {
            kind: ModelKind::Gdn,
            input_dims: 3,
            window_len: 4,
            hidden_size: 5,
            latent_size: 4,
            usad_alpha: 0.1,
            usad_beta_score: 0.9,
            gdn_top_k: 2,
        }
    }

    fn windows(rows: usize, seed: u64) -> WindowSet {
        let mut r = rng::derive(seed, "gdn-test", &[]);
        let m = Matrix::random_uniform(rows, 3, 0.0, 1.0, &mut r);
        make_windows(&m, 4, 1).unwrap()
    }

    #[test]
    fn neighbor_lists_pick_most_similar_and_include_self() {
        // Rows 0 and 1 point the same way, row 2 is orthogonal,
        // row 3 is opposite to 0/1.
        let embed = Matrix::from_rows(&[
            &[1.0, 0.0],
            &[2.0, 0.0],
            &[0.0, 1.0],
            &[-1.0, 0.0],
        ]);
        let lists = neighbor_lists(&embed, 1);
        assert_eq!(lists[0], vec![0, 1]);
        assert_eq!(lists[1], vec![1, 0]);
        // Node 2 is equidistant from everyone (cos 0 to 0/1/3 is 0, 0, 0);
        // the tie breaks to the lowest index.
        assert_eq!(lists[2], vec![2, 0]);
        assert_eq!(lists[3], vec![3, 2]); // cos(3,2)=0 beats cos(3,0)=-1
        // k larger than n-1 saturates.
        let lists = neighbor_lists(&embed, 10);
        assert_eq!(lists[0].len(), 4);
    }

    #[test]
    fn loss_is_mean_squared_forecast_error() {
        let cfg = cfg();
        let ws = windows(10, 1);
        let params = init_model(&cfg, 3, &ws).unwrap();
        let batch: Vec<&Matrix> = ws.windows.iter().take(4).collect();
        let loss = loss_value(&params, &cfg, &batch, 1, 0).unwrap();
        // Recompute from per-window absolute errors.
        let windows_owned: Vec<Matrix> = batch.iter().map(|w| (*w).clone()).collect();
        let errs = abs_errors(&params, &cfg, &windows_owned);
        let expect: f64 = errs
            .iter()
            .flat_map(|e| e.iter().map(|v| v * v))
            .sum::<f64>()
            / (batch.len() * cfg.input_dims) as f64;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn uncalibrated_score_is_max_absolute_error() {
        let cfg = cfg();
        let ws = windows(9, 2);
        let params = init_model(&cfg, 4, &ws).unwrap();
        let scores = Gdn.window_scores(&params, &cfg, &ws).unwrap();
        let errs = abs_errors(&params, &cfg, &ws.windows);
        for (s, e) in scores.iter().zip(&errs) {
            let max_err = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((s - max_err).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_normalizes_per_dimension() {
        let cfg = cfg();
        let ws = windows(30, 3);
        let mut params = init_model(&cfg, 5, &ws).unwrap();
        calibrate_scoring(&mut params, &cfg, &ws).unwrap();
        let median = params.get(MEDIAN).unwrap().clone();
        let iqr = params.get(IQR).unwrap().clone();
        assert!((0..cfg.input_dims).any(|d| median.get(0, d) > 0.0));

        let scores = Gdn.window_scores(&params, &cfg, &ws).unwrap();
        let errs = abs_errors(&params, &cfg, &ws.windows);
        for (s, e) in scores.iter().zip(&errs) {
            let expect = e
                .iter()
                .enumerate()
                .map(|(d, v)| (v - median.get(0, d)) / iqr.get(0, d).max(1e-6))
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0);
            assert!((s - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_tail_statistics_match_an_independent_computation() {
        let cfg = cfg();
        let ws = windows(40, 6);
        let mut params = init_model(&cfg, 9, &ws).unwrap();
        let errs_before = abs_errors(&params, &cfg, &ws.windows);
        calibrate_scoring(&mut params, &cfg, &ws).unwrap();
        // Tail = ceil(0.1 * 37) = 4 most recent windows.
        let tail = 4;
        let median = params.get(MEDIAN).unwrap();
        for d in 0..cfg.input_dims {
            let mut vals: Vec<f64> = errs_before[ws.len() - tail..]
                .iter()
                .map(|e| e[d])
                .collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Even count: median interpolates the two central values.
            let expect = (vals[1] + vals[2]) / 2.0;
            assert!((median.get(0, d) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = cfg();
        let ws = windows(7, 4);
        let params = init_model(&cfg, 7, &ws).unwrap();
        let batch: Vec<&Matrix> = ws.windows.iter().take(2).collect();
        let (_, grads) = crate::models::loss_gradient(&params, &cfg, &batch, 1, 0).unwrap();
        let h = 1e-5;
        for (name, m) in params.trainable() {
            for idx in (0..m.len()).step_by(3) {
                let mut plus = params.clone();
                plus.get_mut(name).unwrap().as_mut_slice()[idx] += h;
                let mut minus = params.clone();
                minus.get_mut(name).unwrap().as_mut_slice()[idx] -= h;
                let fd = (loss_value(&plus, &cfg, &batch, 1, 0).unwrap()
                    - loss_value(&minus, &cfg, &batch, 1, 0).unwrap())
                    / (2.0 * h);
                let a = grads.get(name).unwrap().as_slice()[idx];
                let denom = a.abs().max(fd.abs()).max(1.0);
                assert!((a - fd).abs() / denom < 1e-5, "{name}[{idx}]: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert!((percentile(&v, 0.0) - 1.0).abs() < 1e-15);
        assert!((percentile(&v, 1.0) - 4.0).abs() < 1e-15);
        assert!((percentile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((percentile(&v, 0.25) - 1.75).abs() < 1e-15);
    }
}
