//! Truncated-BPTT training with Adam and early stopping.

use std::ops::Range;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::LstmState;
use crate::model::{GraphLstmModel, Gradients, ParamSharing};
use crate::panel::Panel;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Hidden units per LSTM.
    pub hidden: usize,
    /// Truncated-BPTT window length.
    pub window: usize,
    pub learning_rate: f64,
    /// Upper bound on epochs.
    pub epochs: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub sharing: ParamSharing,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            window: 64,
            learning_rate: 1e-3,
            epochs: 50,
            clip_norm: 5.0,
            patience: 5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            sharing: ParamSharing::Shared,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train.{what} must be positive")));
        if self.hidden == 0 {
            return bad("hidden");
        }
        if self.window == 0 {
            return bad("window");
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if self.patience == 0 {
            return bad("patience");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm");
        }
        if !(self.eps > 0.0) {
            return bad("eps");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("train.beta1 and train.beta2 must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Loss history of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training MSE seen during each epoch.
    pub train_loss: Vec<f64>,
    /// Validation MSE after each epoch (empty without a validation range).
    pub val_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, model: &GraphLstmModel) -> Self {
        let zeros: Gradients = model.params().iter().map(|p| vec![0.0; p.as_flat().len()]).collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, model: &mut GraphLstmModel, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (b, p) in model.params_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[b], &mut self.v[b], &grads[b]);
            for (k, w) in p.as_flat_mut().iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                *w -= self.lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + self.eps);
            }
        }
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
    norm
}

/// Loss weights for forecasting the value at each time: 1 where observed and
/// not labeled anomalous.
pub fn target_weights(panel: &Panel) -> Array2<f64> {
    let labels = panel.labels();
    Array2::from_shape_fn((panel.n_nodes(), panel.len()), |(i, t)| {
        let anomalous = labels.map(|l| l[[i, t]]).unwrap_or(false);
        if panel.is_observed(i, t) && !anomalous {
            1.0
        } else {
            0.0
        }
    })
}

/// One-step MSE of `model` on targets in `range`, warming up on all prior
/// history.
pub fn evaluate_mse(model: &GraphLstmModel, panel: &Panel, range: Range<usize>) -> Result<f64> {
    let fc = model.forecast_one_step(panel, range.clone())?;
    let w = target_weights(panel);
    let (mut sse, mut n) = (0.0, 0.0);
    for i in 0..panel.n_nodes() {
        for t in range.clone() {
            let wt = w[[i, t]];
            if wt > 0.0 {
                let e = fc.at(i, t) - panel.values()[[i, t]];
                sse += wt * e * e;
                n += wt;
            }
        }
    }
    Ok(if n > 0.0 { sse / n } else { 0.0 })
}

/// Fits `model` by one-step MSE on `panel[.., train]`, optionally early
/// stopping on validation MSE over `val`. Returns the best parameters seen.
pub fn train(
    mut model: GraphLstmModel,
    panel: &Panel,
    train: Range<usize>,
    val: Option<Range<usize>>,
    cfg: &TrainConfig,
) -> Result<(GraphLstmModel, TrainReport)> {
    cfg.validate()?;
    if panel.n_nodes() != model.n_nodes() {
        return Err(Error::Shape(format!(
            "panel has {} nodes, model has {}",
            panel.n_nodes(),
            model.n_nodes()
        )));
    }
    if train.len() < cfg.window + 1 || train.end > panel.len() {
        return Err(Error::Split(format!(
            "training range {train:?} must hold at least window + 1 = {} steps",
            cfg.window + 1
        )));
    }
    let filled = panel.filled_values();
    let weights = target_weights(panel);
    let values = panel.values();
    // step k feeds y[train.start + k] and predicts y[train.start + k + 1]
    let steps = train.len() - 1;
    let mut adam = Adam::new(cfg, &model);
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, GraphLstmModel)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        let mut state: Option<Vec<LstmState>> = None;
        let (mut sse, mut count) = (0.0, 0.0);
        let mut start = 0;
        while start < steps {
            let end = (start + cfg.window).min(steps);
            let (a, b) = (train.start + start, train.start + end);
            let inputs = filled.slice(s![.., a..b]);
            let targets = values.slice(s![.., a + 1..b + 1]);
            let w = weights.slice(s![.., a + 1..b + 1]);
            // missing targets carry placeholder values; keep them out of the arithmetic
            let targets = Array2::from_shape_fn(targets.dim(), |ix| if w[ix] > 0.0 { targets[ix] } else { 0.0 });
            let (loss, mut grads, last) = model.loss_and_grad(inputs, targets.view(), w, state.as_deref())?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            let n = w.sum();
            sse += loss * n;
            count += n;
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam.update(&mut model, &grads);
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence { epoch, loss: f64::NAN });
            }
            state = Some(last);
            start = end;
        }
        let train_mse = if count > 0.0 { sse / count } else { 0.0 };
        report.train_loss.push(train_mse);
        let score = match &val {
            Some(r) => {
                let v = evaluate_mse(&model, panel, r.clone())?;
                if !v.is_finite() {
                    return Err(Error::Divergence { epoch, loss: v });
                }
                report.val_loss.push(v);
                v
            }
            None => train_mse,
        };
        match &best {
            Some((b, _)) if score >= *b => {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((score, model.clone()));
                report.best_epoch = epoch;
                since_best = 0;
            }
        }
    }
    let (_, model) = best.expect("at least one epoch runs");
    Ok((model, report))
}

/// Convenience: a fresh model with `cfg`'s shape and seed, then [`train`].
pub fn fit_graph_lstm(
    panel: &Panel,
    table: crate::graph::NeighborTable,
    augment: bool,
    train_range: Range<usize>,
    val: Option<Range<usize>>,
    cfg: &TrainConfig,
) -> Result<(GraphLstmModel, TrainReport)> {
    cfg.validate()?;
    let mut rng = crate::rng::SeededRng::new(cfg.seed);
    let model = GraphLstmModel::new(panel.n_nodes(), cfg.hidden, table, augment, cfg.sharing, &mut rng)?;
    train(model, panel, train_range, val, cfg)
}
