//! Graph-augmented recurrent forecaster.
//!
//! Every node runs an LSTM over its own series, fed the previous observation
//! `y[i, t-1]` at step `t`. Before the read-out, the node's hidden state is
//! augmented with the mean of its neighbors' hidden states from the previous
//! step:
//!
//! ```text
//! h_aug[i,t] = h[i,t] + mean_{j ∈ N(i)} h[j,t-1]
//! ŷ[i,t]     = v · h_aug[i,t] + c_out
//! ```
//!
//! The state carried to `t+1` is the raw `h[i,t]`, so information moves one
//! hop per step. A node without neighbors gets a zero augmentation, and with
//! augmentation disabled the model is a bank of independent LSTMs.

use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ForecastSet;
use crate::graph::NeighborTable;
use crate::lstm::{activate, Gates, LstmParams, LstmState};
use crate::panel::Panel;
use crate::rng::SeededRng;

/// Whether nodes share one parameter block or each own one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSharing {
    #[default]
    Shared,
    PerNode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphLstmModel {
    params: Vec<LstmParams>,
    table: NeighborTable,
    augment: bool,
    hidden: usize,
}

/// Cached activations of one unrolled window.
pub(crate) struct Trace {
    len: usize,
    gates: Vec<Gates>,
    /// `(len + 1) * n * H`; slot 0 holds the initial state.
    h: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h_aug: Vec<f64>,
}

/// Gradients with the same layout as the model parameters.
pub type Gradients = Vec<Vec<f64>>;

impl GraphLstmModel {
    /// Freshly initialized model for `n_nodes` univariate series.
    pub fn new(
        n_nodes: usize,
        hidden: usize,
        table: NeighborTable,
        augment: bool,
        sharing: ParamSharing,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let blocks = match sharing {
            ParamSharing::Shared => 1,
            ParamSharing::PerNode => n_nodes,
        };
        let params = (0..blocks).map(|_| LstmParams::xavier(hidden, 1, rng)).collect();
        Self::from_params(params, table, augment, n_nodes)
    }

    pub fn from_params(params: Vec<LstmParams>, table: NeighborTable, augment: bool, n_nodes: usize) -> Result<Self> {
        let hidden = params
            .first()
            .ok_or_else(|| Error::Shape("model needs at least one parameter block".into()))?
            .hidden();
        if params.len() != 1 && params.len() != n_nodes {
            return Err(Error::Shape(format!(
                "{} parameter blocks for {n_nodes} nodes",
                params.len()
            )));
        }
        if params.iter().any(|p| p.hidden() != hidden || p.input() != 1) {
            return Err(Error::Shape("parameter blocks disagree on shape".into()));
        }
        if table.n_nodes() != n_nodes {
            return Err(Error::Shape(format!(
                "neighbor table has {} nodes, model has {n_nodes}",
                table.n_nodes()
            )));
        }
        Ok(Self {
            params,
            table,
            augment,
            hidden,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.table.n_nodes()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn augmented(&self) -> bool {
        self.augment
    }

    pub fn sharing(&self) -> ParamSharing {
        if self.params.len() == 1 {
            ParamSharing::Shared
        } else {
            ParamSharing::PerNode
        }
    }

    pub fn params(&self) -> &[LstmParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LstmParams] {
        &mut self.params
    }

    pub fn table(&self) -> &NeighborTable {
        &self.table
    }

    /// Same parameters over a different topology.
    pub fn with_table(&self, table: NeighborTable) -> Result<Self> {
        Self::from_params(self.params.clone(), table, self.augment, self.n_nodes())
    }

    pub fn with_augmentation(&self, augment: bool) -> Self {
        Self {
            augment,
            ..self.clone()
        }
    }

    #[inline]
    fn block(&self, node: usize) -> &LstmParams {
        if self.params.len() == 1 {
            &self.params[0]
        } else {
            &self.params[node]
        }
    }

    #[inline]
    fn block_index(&self, node: usize) -> usize {
        if self.params.len() == 1 {
            0
        } else {
            node
        }
    }

    pub fn zero_states(&self) -> Vec<LstmState> {
        vec![LstmState::zeros(self.hidden); self.n_nodes()]
    }

    /// Unrolls the model over `inputs` (`[n_nodes, L]`), where column `k`
    /// holds the observations fed at step `k`. Returns the forecasts
    /// (`forecasts[[i, k]]` predicts the observation after `inputs[[i, k]]`)
    /// and the final raw states.
    pub fn forward(&self, inputs: ArrayView2<'_, f64>, init: Option<&[LstmState]>) -> Result<(Array2<f64>, Vec<LstmState>)> {
        let (yhat, last, _) = self.run(inputs, init, false, 0)?;
        Ok((yhat, last))
    }

    pub(crate) fn run(
        &self,
        inputs: ArrayView2<'_, f64>,
        init: Option<&[LstmState]>,
        keep_trace: bool,
        step_offset: usize,
    ) -> Result<(Array2<f64>, Vec<LstmState>, Option<Trace>)> {
        let n = self.n_nodes();
        let hd = self.hidden;
        if inputs.nrows() != n {
            return Err(Error::Shape(format!(
                "input window has {} rows, model has {n} nodes",
                inputs.nrows()
            )));
        }
        let len = inputs.ncols();
        let nh = n * hd;
        let mut h_prev = vec![0.0; nh];
        let mut c_prev = vec![0.0; nh];
        if let Some(states) = init {
            if states.len() != n || states.iter().any(|s| s.h.len() != hd || s.c.len() != hd) {
                return Err(Error::Shape("initial states do not match the model".into()));
            }
            for (i, s) in states.iter().enumerate() {
                h_prev[i * hd..(i + 1) * hd].copy_from_slice(&s.h);
                c_prev[i * hd..(i + 1) * hd].copy_from_slice(&s.c);
            }
        }
        let mut trace = keep_trace.then(|| {
            let mut t = Trace {
                len,
                gates: vec![Gates::default(); len * nh],
                h: vec![0.0; (len + 1) * nh],
                c: vec![0.0; (len + 1) * nh],
                tanh_c: vec![0.0; len * nh],
                h_aug: vec![0.0; len * nh],
            };
            t.h[..nh].copy_from_slice(&h_prev);
            t.c[..nh].copy_from_slice(&c_prev);
            t
        });
        let mut yhat = Array2::zeros((n, len));
        let mut h_next = vec![0.0; nh];
        let mut c_next = vec![0.0; nh];
        let mut pre = vec![0.0; 4 * hd];
        let mut aug = vec![0.0; hd];
        for t in 0..len {
            for i in 0..n {
                let x = inputs[[i, t]];
                if !x.is_finite() {
                    return Err(Error::NonFinite { step: step_offset + t });
                }
                let p = self.block(i);
                let hp = &h_prev[i * hd..(i + 1) * hd];
                let cp = &c_prev[i * hd..(i + 1) * hd];
                p.preactivations(&[x], hp, &mut pre);
                for k in 0..hd {
                    let g = activate(&pre, hd, k);
                    let c = g.f * cp[k] + g.i * g.g;
                    let tc = c.tanh();
                    c_next[i * hd + k] = c;
                    h_next[i * hd + k] = g.o * tc;
                    if let Some(tr) = trace.as_mut() {
                        tr.gates[t * nh + i * hd + k] = g;
                        tr.tanh_c[t * nh + i * hd + k] = tc;
                    }
                }
                aug.copy_from_slice(&h_next[i * hd..(i + 1) * hd]);
                let nb = self.table.neighbors(i);
                if self.augment && !nb.is_empty() {
                    let inv = 1.0 / nb.len() as f64;
                    for &j in nb {
                        for k in 0..hd {
                            aug[k] += inv * h_prev[j * hd + k];
                        }
                    }
                }
                yhat[[i, t]] = p.readout(&aug);
                if let Some(tr) = trace.as_mut() {
                    tr.h_aug[t * nh + i * hd..t * nh + (i + 1) * hd].copy_from_slice(&aug);
                }
            }
            std::mem::swap(&mut h_prev, &mut h_next);
            std::mem::swap(&mut c_prev, &mut c_next);
            if let Some(tr) = trace.as_mut() {
                tr.h[(t + 1) * nh..(t + 2) * nh].copy_from_slice(&h_prev);
                tr.c[(t + 1) * nh..(t + 2) * nh].copy_from_slice(&c_prev);
            }
        }
        let last = (0..n)
            .map(|i| LstmState {
                h: h_prev[i * hd..(i + 1) * hd].to_vec(),
                c: c_prev[i * hd..(i + 1) * hd].to_vec(),
            })
            .collect();
        Ok((yhat, last, trace))
    }

    /// Backpropagation through the unrolled window given `d loss / d ŷ`.
    /// Initial states are treated as constants.
    pub(crate) fn backward(&self, inputs: ArrayView2<'_, f64>, trace: &Trace, dyhat: ArrayView2<'_, f64>) -> Gradients {
        let n = self.n_nodes();
        let hd = self.hidden;
        let nh = n * hd;
        let mut grads: Gradients = self.params.iter().map(|p| vec![0.0; p.as_flat().len()]).collect();
        let (ow, ou, ob, ov) = (0, 4 * hd, 4 * hd + 4 * hd * hd, 8 * hd + 4 * hd * hd);
        let oc = ov + hd;
        // gradient w.r.t. raw h and c at the current step, accumulated from later steps
        let mut dh = vec![0.0; nh];
        let mut dc = vec![0.0; nh];
        let mut dh_prev = vec![0.0; nh];
        let mut dc_prev = vec![0.0; nh];
        let mut da = vec![0.0; 4 * hd];
        for t in (0..trace.len).rev() {
            dh_prev.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..n {
                let dy = dyhat[[i, t]];
                let b = self.block_index(i);
                let p = &self.params[b];
                let v = p.v();
                let g = &mut grads[b];
                let base = t * nh + i * hd;
                if dy != 0.0 {
                    for k in 0..hd {
                        g[ov + k] += dy * trace.h_aug[base + k];
                        dh[i * hd + k] += dy * v[k];
                    }
                    g[oc] += dy;
                    let nb = self.table.neighbors(i);
                    if self.augment && !nb.is_empty() {
                        let inv = dy / nb.len() as f64;
                        for &j in nb {
                            for k in 0..hd {
                                dh_prev[j * hd + k] += inv * v[k];
                            }
                        }
                    }
                }
                let x = inputs[[i, t]];
                let hp = &trace.h[t * nh + i * hd..t * nh + (i + 1) * hd];
                let cp = &trace.c[t * nh + i * hd..t * nh + (i + 1) * hd];
                let mut any = false;
                for k in 0..hd {
                    let gt = trace.gates[base + k];
                    let tc = trace.tanh_c[base + k];
                    let dhk = dh[i * hd + k];
                    let dck = dc[i * hd + k] + dhk * gt.o * (1.0 - tc * tc);
                    let d_o = dhk * tc;
                    let d_i = dck * gt.g;
                    let d_g = dck * gt.i;
                    let d_f = dck * cp[k];
                    da[k] = d_i * gt.i * (1.0 - gt.i);
                    da[hd + k] = d_f * gt.f * (1.0 - gt.f);
                    da[2 * hd + k] = d_g * (1.0 - gt.g * gt.g);
                    da[3 * hd + k] = d_o * gt.o * (1.0 - gt.o);
                    dc_prev[i * hd + k] = dck * gt.f;
                    any |= dhk != 0.0 || dck != 0.0;
                }
                if !any {
                    continue;
                }
                let u = p.u();
                for r in 0..4 * hd {
                    let a = da[r];
                    if a == 0.0 {
                        continue;
                    }
                    g[ow + r] += a * x;
                    g[ob + r] += a;
                    let ur = &u[r * hd..(r + 1) * hd];
                    let gu = &mut g[ou + r * hd..ou + (r + 1) * hd];
                    let dhp = &mut dh_prev[i * hd..(i + 1) * hd];
                    for k in 0..hd {
                        gu[k] += a * hp[k];
                        dhp[k] += a * ur[k];
                    }
                }
            }
            std::mem::swap(&mut dh, &mut dh_prev);
            std::mem::swap(&mut dc, &mut dc_prev);
        }
        grads
    }

    /// Weighted mean squared error of a window and its gradient. `weights`
    /// marks which forecasts count (1) or are ignored (0).
    pub fn loss_and_grad(
        &self,
        inputs: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
        weights: ArrayView2<'_, f64>,
        init: Option<&[LstmState]>,
    ) -> Result<(f64, Gradients, Vec<LstmState>)> {
        if targets.dim() != inputs.dim() || weights.dim() != inputs.dim() {
            return Err(Error::Shape("inputs, targets and weights must share a shape".into()));
        }
        let (yhat, last, trace) = self.run(inputs, init, true, 0)?;
        let trace = trace.expect("trace requested");
        let total: f64 = weights.sum();
        if total <= 0.0 {
            let zero = self.params.iter().map(|p| vec![0.0; p.as_flat().len()]).collect();
            return Ok((0.0, zero, last));
        }
        let mut loss = 0.0;
        let mut dyhat = Array2::zeros(yhat.dim());
        for ((ix, &y), &w) in yhat.indexed_iter().zip(weights.iter()) {
            if w == 0.0 {
                continue;
            }
            let e = y - targets[ix];
            loss += w * e * e;
            dyhat[ix] = 2.0 * w * e / total;
        }
        let grads = self.backward(inputs, &trace, dyhat.view());
        Ok((loss / total, grads, last))
    }

    /// Weighted MSE without gradients.
    pub fn loss(
        &self,
        inputs: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
        weights: ArrayView2<'_, f64>,
        init: Option<&[LstmState]>,
    ) -> Result<f64> {
        let (yhat, _) = self.forward(inputs, init)?;
        let total: f64 = weights.sum();
        if total <= 0.0 {
            return Ok(0.0);
        }
        let mut loss = 0.0;
        for ((ix, &y), &w) in yhat.indexed_iter().zip(weights.iter()) {
            if w == 0.0 {
                continue;
            }
            let e = y - targets[ix];
            loss += w * e * e;
        }
        Ok(loss / total)
    }

    /// One-step-ahead forecasts over `range`, warming the states up on all
    /// history before it. Missing observations are filled forward. Every
    /// forecast at `t` uses only data at times `< t`.
    pub fn forecast_one_step(&self, panel: &Panel, range: Range<usize>) -> Result<ForecastSet> {
        if panel.n_nodes() != self.n_nodes() {
            return Err(Error::Shape(format!(
                "panel has {} nodes, model has {}",
                panel.n_nodes(),
                self.n_nodes()
            )));
        }
        if range.start < 1 {
            return Err(Error::Coverage(
                "forecast range must start at t >= 1 (no history before t = 0)".into(),
            ));
        }
        if range.end > panel.len() || range.is_empty() {
            return Err(Error::Coverage(format!(
                "forecast range {range:?} outside panel of length {}",
                panel.len()
            )));
        }
        let filled = panel.filled_values();
        let inputs = filled.slice(ndarray::s![.., ..range.end - 1]);
        let (yhat, _, _) = self.run(inputs, None, false, 0)?;
        let values = yhat.slice(ndarray::s![.., range.start - 1..range.end - 1]).to_owned();
        ForecastSet::new(range, values, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::lstm::lstm_cell_forward;
    use ndarray::Array2;

    fn pair_table() -> NeighborTable {
        Graph::new(2, vec![(0, 1)], false).unwrap().neighbor_table()
    }

    fn random_inputs(n: usize, len: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed);
        Array2::from_shape_fn((n, len), |_| rng.normal())
    }

    #[test]
    fn isolated_node_matches_plain_lstm() {
        let g = Graph::new(3, vec![(0, 1)], false).unwrap();
        let mut rng = SeededRng::new(3);
        let model = GraphLstmModel::new(3, 4, g.neighbor_table(), true, ParamSharing::Shared, &mut rng).unwrap();
        let x = random_inputs(3, 12, 4);
        let (aug, _) = model.forward(x.view(), None).unwrap();
        let (plain, _) = model.with_augmentation(false).forward(x.view(), None).unwrap();
        assert_eq!(aug.row(2), plain.row(2));
        assert_ne!(aug.row(0), plain.row(0));
    }

    #[test]
    fn first_step_ignores_neighbors_from_zero_state() {
        let mut rng = SeededRng::new(5);
        let model = GraphLstmModel::new(2, 3, pair_table(), true, ParamSharing::Shared, &mut rng).unwrap();
        let x = random_inputs(2, 4, 6);
        let (a, _) = model.forward(x.view(), None).unwrap();
        let (b, _) = model.with_augmentation(false).forward(x.view(), None).unwrap();
        assert_eq!(a[[0, 0]], b[[0, 0]]);
        assert_eq!(a[[1, 0]], b[[1, 0]]);
    }

    /// Scalar-by-scalar reference for a 2-node, H=1 mutually connected model.
    #[test]
    fn hand_rolled_two_node_reference() {
        let mut p = LstmParams::zeros(1, 1);
        p.w_mut().copy_from_slice(&[0.5, -0.3, 0.8, 0.2]);
        p.u_mut().copy_from_slice(&[0.1, 0.4, -0.6, 0.7]);
        p.b_mut().copy_from_slice(&[0.05, 1.0, -0.1, 0.0]);
        p.v_mut()[0] = 1.5;
        p.set_c_out(0.25);
        let model = GraphLstmModel::from_params(vec![p], pair_table(), true, 2).unwrap();
        let x = [[0.3, -1.2, 0.7], [1.1, 0.4, -0.2]];
        let inputs = Array2::from_shape_fn((2, 3), |(i, t)| x[i][t]);
        let (yhat, _) = model.forward(inputs.view(), None).unwrap();

        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let (w, u, b) = ([0.5, -0.3, 0.8, 0.2], [0.1, 0.4, -0.6, 0.7], [0.05, 1.0, -0.1, 0.0]);
        let mut h = [0.0f64; 2];
        let mut c = [0.0f64; 2];
        for t in 0..3 {
            let mut nh = [0.0; 2];
            let mut nc = [0.0; 2];
            for i in 0..2 {
                let ig = sig(w[0] * x[i][t] + u[0] * h[i] + b[0]);
                let fg = sig(w[1] * x[i][t] + u[1] * h[i] + b[1]);
                let gg = (w[2] * x[i][t] + u[2] * h[i] + b[2]).tanh();
                let og = sig(w[3] * x[i][t] + u[3] * h[i] + b[3]);
                nc[i] = fg * c[i] + ig * gg;
                nh[i] = og * nc[i].tanh();
            }
            for i in 0..2 {
                let other = 1 - i;
                let expect = 1.5 * (nh[i] + h[other]) + 0.25;
                assert!((yhat[[i, t]] - expect).abs() < 1e-14, "t={t} i={i}");
            }
            h = nh;
            c = nc;
        }
    }

    #[test]
    fn forward_matches_cell_api() {
        let mut rng = SeededRng::new(8);
        let model = GraphLstmModel::new(1, 5, NeighborTable::isolated(1), false, ParamSharing::Shared, &mut rng).unwrap();
        let x = random_inputs(1, 6, 9);
        let (yhat, last) = model.forward(x.view(), None).unwrap();
        let mut s = LstmState::zeros(5);
        for t in 0..6 {
            s = lstm_cell_forward(&model.params()[0], &[x[[0, t]]], &s, t).unwrap();
            assert!((yhat[[0, t]] - model.params()[0].readout(&s.h)).abs() < 1e-15);
        }
        assert_eq!(last[0], s);
    }

    #[test]
    fn shape_errors() {
        let mut rng = SeededRng::new(1);
        let model = GraphLstmModel::new(2, 3, pair_table(), true, ParamSharing::Shared, &mut rng).unwrap();
        assert!(model.forward(Array2::zeros((3, 4)).view(), None).is_err());
        let panel = Panel::from_values(vec!["a".into()], Array2::zeros((1, 5))).unwrap();
        assert!(model.forecast_one_step(&panel, 1..5).is_err());
    }
}
