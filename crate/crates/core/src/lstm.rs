//! LSTM cell parameters and the single-step cell update.
//!
//! Gate rows are stacked in the order `[input, forget, candidate, output]`,
//! each block `H` rows tall:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)   o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```
//!
//! The parameter block also carries the linear read-out `ŷ = v·h + c_out`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Gate ordering tag written into checkpoints.
pub const GATE_ORDER: &str = "ifgo";

/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// All trainable weights of one LSTM cell plus its output layer, stored in a
/// single flat buffer: `W (4H×D) | U (4H×H) | b (4H) | v (H) | c_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    hidden: usize,
    input: usize,
    data: Vec<f64>,
}

impl LstmParams {
    pub fn n_params(hidden: usize, input: usize) -> usize {
        4 * hidden * input + 4 * hidden * hidden + 4 * hidden + hidden + 1
    }

    /// All-zero parameters.
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            hidden,
            input,
            data: vec![0.0; Self::n_params(hidden, input)],
        }
    }

    pub fn from_flat(hidden: usize, input: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != Self::n_params(hidden, input) {
            return Err(Error::Shape(format!(
                "{} parameters given for H={hidden}, D={input}",
                data.len()
            )));
        }
        Ok(Self { hidden, input, data })
    }

    /// Xavier-uniform weights, zero biases except the forget gate (+1), zero
    /// output bias.
    pub fn xavier(hidden: usize, input: usize, rng: &mut SeededRng) -> Self {
        let mut p = Self::zeros(hidden, input);
        let lw = (6.0 / (input + hidden) as f64).sqrt();
        let lu = (6.0 / (2 * hidden) as f64).sqrt();
        let lv = (6.0 / (hidden + 1) as f64).sqrt();
        p.w_mut().iter_mut().for_each(|x| *x = rng.uniform_range(-lw, lw));
        p.u_mut().iter_mut().for_each(|x| *x = rng.uniform_range(-lu, lu));
        p.v_mut().iter_mut().for_each(|x| *x = rng.uniform_range(-lv, lv));
        p.b_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = FORGET_BIAS);
        p
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offsets(&self) -> [usize; 5] {
        let (h, d) = (self.hidden, self.input);
        let w = 0;
        let u = w + 4 * h * d;
        let b = u + 4 * h * h;
        let v = b + 4 * h;
        let c = v + h;
        [w, u, b, v, c]
    }

    pub fn w(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[0]..o[1]]
    }
    pub fn u(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[1]..o[2]]
    }
    pub fn b(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[2]..o[3]]
    }
    pub fn v(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[3]..o[4]]
    }
    pub fn c_out(&self) -> f64 {
        self.data[self.offsets()[4]]
    }
    pub fn w_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[0]..o[1]]
    }
    pub fn u_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[1]..o[2]]
    }
    pub fn b_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[2]..o[3]]
    }
    pub fn v_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[3]..o[4]]
    }
    pub fn set_c_out(&mut self, c: f64) {
        let o = self.offsets()[4];
        self.data[o] = c;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Linear read-out of a hidden vector.
    pub fn readout(&self, h: &[f64]) -> f64 {
        self.v().iter().zip(h).map(|(a, b)| a * b).sum::<f64>() + self.c_out()
    }

    /// Gate pre-activations `W x + U h + b` into `out` (length 4H).
    #[inline]
    pub(crate) fn preactivations(&self, x: &[f64], h: &[f64], out: &mut [f64]) {
        let (hd, d) = (self.hidden, self.input);
        let o = self.offsets();
        let w = &self.data[o[0]..o[1]];
        let u = &self.data[o[1]..o[2]];
        let b = &self.data[o[2]..o[3]];
        for r in 0..4 * hd {
            let mut acc = b[r];
            let wr = &w[r * d..(r + 1) * d];
            for k in 0..d {
                acc += wr[k] * x[k];
            }
            let ur = &u[r * hd..(r + 1) * hd];
            for k in 0..hd {
                acc += ur[k] * h[k];
            }
            out[r] = acc;
        }
    }
}

/// Hidden and cell state of one LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activated gates of one step, kept for the backward pass.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Gates {
    pub i: f64,
    pub f: f64,
    pub g: f64,
    pub o: f64,
}

/// Activates pre-activations for unit `k` of a layer with `hidden` units.
#[inline]
pub(crate) fn activate(pre: &[f64], hidden: usize, k: usize) -> Gates {
    Gates {
        i: sigmoid(pre[k]),
        f: sigmoid(pre[hidden + k]),
        g: pre[2 * hidden + k].tanh(),
        o: sigmoid(pre[3 * hidden + k]),
    }
}

/// One LSTM step. `step` only labels the error for non-finite inputs.
pub fn lstm_cell_forward(params: &LstmParams, x: &[f64], prev: &LstmState, step: usize) -> Result<LstmState> {
    let hd = params.hidden();
    if x.len() != params.input() || prev.h.len() != hd || prev.c.len() != hd {
        return Err(Error::Shape(format!(
            "cell expects x[{}], h[{hd}], c[{hd}]; got x[{}], h[{}], c[{}]",
            params.input(),
            x.len(),
            prev.h.len(),
            prev.c.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    let mut pre = vec![0.0; 4 * hd];
    params.preactivations(x, &prev.h, &mut pre);
    let mut next = LstmState::zeros(hd);
    for k in 0..hd {
        let g = activate(&pre, hd, k);
        let c = g.f * prev.c[k] + g.i * g.g;
        next.c[k] = c;
        next.h[k] = g.o * c.tanh();
    }
    Ok(next)
}
