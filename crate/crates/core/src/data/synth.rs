//! Graph-correlated synthetic panels.
//!
//! Latent innovations `η[k,t] ~ N(0,1)`, `k < K`, drive node `i` through
//! factor `i mod K`. With `diffusion_lag = 0` the latents are AR(1) series
//! `z[k,t] = φ z[k,t-1] + η[k,t]` and every step gets one diffusion pass:
//!
//! ```text
//! s[i,t] = (1 − α) z[i mod K, t] + α · mean_{j ∈ N(i)} z[j mod K, t]
//! ```
//!
//! With `diffusion_lag = ℓ ≥ 1` node states diffuse through time instead:
//!
//! ```text
//! s[i,t] = φ · ((1 − α) s[i,t-1] + α · mean_{j ∈ N(i)} s[j,t-ℓ]) + η[i mod K, t]
//! ```
//!
//! Isolated nodes skip the neighbor term. The observed series is
//! `y[i,t] = s[i,t] + A sin(2π t / P) + σ ε[i,t]`, after discarding a burn-in.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Graph, NeighborTable};
use crate::panel::Panel;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    /// Random connected undirected graph with roughly this mean degree.
    Random { mean_degree: f64 },
    Given(Graph),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_nodes: usize,
    pub len: usize,
    pub graph: GraphSpec,
    /// Number of latent factors `K`.
    pub n_latent: usize,
    /// Diffusion strength `α ∈ [0, 1)`.
    pub alpha: f64,
    /// Autoregressive coefficient `φ`.
    pub ar_coef: f64,
    /// 0 for the instantaneous pass, otherwise the neighbor lag.
    pub diffusion_lag: usize,
    pub noise_std: f64,
    pub seasonal_period: Option<f64>,
    pub seasonal_amplitude: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_nodes: 20,
            len: 1800,
            graph: GraphSpec::Random { mean_degree: 2.2 },
            n_latent: 20,
            alpha: 0.5,
            ar_coef: 0.9,
            diffusion_lag: 2,
            noise_std: 0.25,
            seasonal_period: None,
            seasonal_amplitude: 0.0,
            burn_in: 200,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Generation(m));
        if self.n_nodes == 0 || self.len == 0 {
            return bad("n_nodes and len must be positive".into());
        }
        if self.n_latent == 0 {
            return bad("need at least one latent factor".into());
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1)", self.alpha));
        }
        if !(self.ar_coef.abs() < 1.0) {
            return bad(format!("AR coefficient {} must satisfy |φ| < 1", self.ar_coef));
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be non-negative".into());
        }
        if let Some(p) = self.seasonal_period {
            if !(p > 0.0) {
                return bad(format!("seasonal period {p} must be positive"));
            }
        }
        if let GraphSpec::Given(g) = &self.graph {
            if g.n_nodes() != self.n_nodes {
                return bad(format!("graph has {} nodes, spec asks for {}", g.n_nodes(), self.n_nodes));
            }
        }
        if let GraphSpec::Random { mean_degree } = self.graph {
            if !(mean_degree >= 0.0) {
                return bad("mean_degree must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// Random recursive spanning tree plus uniformly drawn extra edges up to
/// `round(mean_degree · n / 2)` edges in total.
pub fn random_connected_graph(n: usize, mean_degree: f64, rng: &mut SeededRng) -> Result<Graph> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut edges = BTreeSet::new();
    for k in 1..n {
        let (a, b) = (order[k], order[rng.index(k)]);
        edges.insert((a.min(b), a.max(b)));
    }
    let max_edges = n * n.saturating_sub(1) / 2;
    let target = ((mean_degree * n as f64 / 2.0).round() as usize).clamp(n.saturating_sub(1), max_edges);
    while edges.len() < target {
        let a = rng.index(n);
        let b = rng.index(n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    Graph::new(n, edges.into_iter().collect(), false)
}

fn simulate(spec: &SynthSpec, table: &NeighborTable, rng: &mut SeededRng) -> Array2<f64> {
    let (n, k) = (spec.n_nodes, spec.n_latent);
    let total = spec.burn_in + spec.len;
    let phi = spec.ar_coef;
    let alpha = spec.alpha;
    let mean_of = |row: &[f64], i: usize| -> Option<f64> {
        let nb = table.neighbors(i);
        (!nb.is_empty()).then(|| nb.iter().map(|&j| row[j]).sum::<f64>() / nb.len() as f64)
    };
    let mut out = Array2::zeros((n, spec.len));
    if spec.diffusion_lag == 0 {
        let mut z = vec![0.0; k];
        for t in 0..total {
            for zk in z.iter_mut() {
                *zk = phi * *zk + rng.normal();
            }
            if t >= spec.burn_in {
                let base: Vec<f64> = (0..n).map(|i| z[i % k]).collect();
                for i in 0..n {
                    out[[i, t - spec.burn_in]] = match mean_of(&base, i) {
                        Some(m) => (1.0 - alpha) * base[i] + alpha * m,
                        None => base[i],
                    };
                }
            }
        }
    } else {
        let lag = spec.diffusion_lag;
        // ring buffer of the last `lag` states
        let mut hist = vec![vec![0.0; n]; lag];
        for t in 0..total {
            let eta: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
            let prev = &hist[(t + lag - 1) % lag];
            let lagged = &hist[t % lag];
            let next: Vec<f64> = (0..n)
                .map(|i| {
                    let drift = match mean_of(lagged, i) {
                        Some(m) => (1.0 - alpha) * prev[i] + alpha * m,
                        None => prev[i],
                    };
                    phi * drift + eta[i % k]
                })
                .collect();
            hist[t % lag] = next;
            if t >= spec.burn_in {
                for i in 0..n {
                    out[[i, t - spec.burn_in]] = hist[t % lag][i];
                }
            }
        }
    }
    out
}

/// Generates a panel and its graph; deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Panel, Graph)> {
    spec.validate()?;
    let rng = SeededRng::new(spec.seed);
    let graph = match &spec.graph {
        GraphSpec::Given(g) => g.clone(),
        GraphSpec::Random { mean_degree } => {
            let mut tries = 0;
            loop {
                let g = random_connected_graph(spec.n_nodes, *mean_degree, &mut rng.child(tries))?;
                if g.is_connected() {
                    break g;
                }
                tries += 1;
                if tries >= 10 {
                    return Err(Error::Generation("no connected graph after 10 attempts".into()));
                }
            }
        }
    };
    let table = graph.neighbor_table();
    let mut dyn_rng = rng.child(100);
    let mut values = simulate(spec, &table, &mut dyn_rng);
    let mut noise_rng = rng.child(101);
    for ((_, t), v) in values.indexed_iter_mut() {
        if let Some(p) = spec.seasonal_period {
            *v += spec.seasonal_amplitude * (2.0 * std::f64::consts::PI * t as f64 / p).sin();
        }
        if spec.noise_std > 0.0 {
            *v += spec.noise_std * noise_rng.normal();
        }
    }
    let width = (spec.n_nodes.max(2) - 1).to_string().len().max(3);
    let ids = (0..spec.n_nodes).map(|i| format!("s{i:0width$}")).collect();
    Ok((Panel::from_values(ids, values)?, graph))
}
