//! Graph topology: neighbor queries, degree-preserving rewiring, and
//! correlation-based graph construction for panels without a native graph.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::rng::SeededRng;

/// Default number of attempted double-edge swaps per edge.
pub const DEFAULT_SWAP_FACTOR: f64 = 10.0;

/// Node adjacency without self-loops or duplicate edges.
///
/// Undirected edges are stored canonically with `src < dst`. For a directed
/// edge `src -> dst`, `src` is a neighbor of `dst` (information flows along
/// the edge).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
    directed: bool,
}

impl Graph {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize)>, directed: bool) -> Result<Self> {
        Self::with_weights(n_nodes, edges, None, directed)
    }

    /// Builds a graph carrying per-edge weights. Weights are stored but the
    /// models average neighbors uniformly.
    pub fn with_weights(
        n_nodes: usize,
        edges: Vec<(usize, usize)>,
        weights: Option<Vec<f64>>,
        directed: bool,
    ) -> Result<Self> {
        if let Some(w) = &weights {
            if w.len() != edges.len() {
                return Err(Error::Graph(format!(
                    "{} weights for {} edges",
                    w.len(),
                    edges.len()
                )));
            }
        }
        let mut keyed: Vec<((usize, usize), Option<f64>)> = Vec::with_capacity(edges.len());
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::Graph(format!(
                    "edge ({a}, {b}) out of range for {n_nodes} nodes"
                )));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop on node {a}")));
            }
            let e = if directed || a < b { (a, b) } else { (b, a) };
            keyed.push((e, weights.as_ref().map(|w| w[k])));
        }
        keyed.sort_by(|x, y| x.0.cmp(&y.0));
        if let Some(w) = keyed.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Graph(format!("duplicate edge {:?}", w[0].0)));
        }
        let weights = weights.map(|_| keyed.iter().map(|(_, w)| w.unwrap_or(1.0)).collect());
        Ok(Self {
            n_nodes,
            edges: keyed.into_iter().map(|(e, _)| e).collect(),
            weights,
            directed,
        })
    }

    /// Graph with no edges.
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            edges: Vec::new(),
            weights: None,
            directed: false,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbor_table(&self) -> NeighborTable {
        build_neighbor_table(self)
    }

    /// Per-node neighbor counts (in-degree for directed graphs).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(a, b) in &self.edges {
            deg[b] += 1;
            if !self.directed {
                deg[a] += 1;
            }
        }
        deg
    }

    /// Applies a node relabeling: node `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_nodes {
            return Err(Error::Graph("permutation length mismatch".into()));
        }
        let edges = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Self::with_weights(self.n_nodes, edges, self.weights.clone(), self.directed)
    }

    /// Whether every node can reach every other ignoring edge direction.
    pub fn is_connected(&self) -> bool {
        if self.n_nodes <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.n_nodes];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n_nodes
    }
}

/// Sorted neighbor lists per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTable {
    neighbors: Vec<Vec<usize>>,
}

impl NeighborTable {
    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Table in which every node is isolated.
    pub fn isolated(n_nodes: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n_nodes],
        }
    }
}

pub fn build_neighbor_table(graph: &Graph) -> NeighborTable {
    let mut neighbors = vec![Vec::new(); graph.n_nodes];
    for &(a, b) in &graph.edges {
        neighbors[b].push(a);
        if !graph.directed {
            neighbors[a].push(b);
        }
    }
    for n in &mut neighbors {
        n.sort_unstable();
    }
    NeighborTable { neighbors }
}

/// Mean of the neighbor rows of `states` (`[n_nodes, H]`); the zero vector for
/// a node without neighbors.
pub fn neighbor_mean(states: ArrayView2<'_, f64>, table: &NeighborTable, node: usize) -> Vec<f64> {
    let h = states.ncols();
    let mut out = vec![0.0; h];
    let nb = table.neighbors(node);
    if nb.is_empty() {
        return out;
    }
    for &j in nb {
        for (o, s) in out.iter_mut().zip(states.row(j)) {
            *o += s;
        }
    }
    let inv = 1.0 / nb.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    out
}

/// Randomizes an undirected graph with double-edge swaps, keeping every node's
/// degree. `ceil(swap_factor * |E|)` swaps are attempted; a swap that would
/// create a self-loop or a duplicate edge is rejected and still counts as an
/// attempt. Edge weights are dropped.
pub fn degree_preserving_rewire(graph: &Graph, rng: &mut SeededRng, swap_factor: f64) -> Result<Graph> {
    if graph.directed {
        return Err(Error::UnsupportedAblation);
    }
    if graph.n_edges() < 2 {
        return Err(Error::Graph(format!(
            "rewiring needs at least 2 edges, graph has {}",
            graph.n_edges()
        )));
    }
    if !(swap_factor >= 0.0) {
        return Err(Error::Graph(format!("swap factor must be non-negative, got {swap_factor}")));
    }
    let canon = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    let mut edges = graph.edges.clone();
    let mut present: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    let attempts = (swap_factor * edges.len() as f64).ceil() as usize;
    for _ in 0..attempts {
        let i = rng.index(edges.len());
        let mut j = rng.index(edges.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = edges[i];
        let (mut c, mut d) = edges[j];
        if rng.uniform() < 0.5 {
            std::mem::swap(&mut c, &mut d);
        }
        // (a,b),(c,d) -> (a,d),(c,b)
        if a == d || c == b {
            continue;
        }
        let e1 = canon(a, d);
        let e2 = canon(c, b);
        if e1 == e2 || present.contains(&e1) || present.contains(&e2) {
            continue;
        }
        present.remove(&edges[i]);
        present.remove(&edges[j]);
        present.insert(e1);
        present.insert(e2);
        edges[i] = e1;
        edges[j] = e2;
    }
    Graph::new(graph.n_nodes, edges, false)
}

/// Pearson correlation over positions observed in both series; 0 when either
/// series is constant there.
pub(crate) fn pearson(a: &[f64], b: &[f64], ma: &[bool], mb: &[bool]) -> f64 {
    let idx: Vec<usize> = (0..a.len()).filter(|&t| ma[t] && mb[t]).collect();
    if idx.len() < 2 {
        return 0.0;
    }
    let n = idx.len() as f64;
    let mean_a = idx.iter().map(|&t| a[t]).sum::<f64>() / n;
    let mean_b = idx.iter().map(|&t| b[t]).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &t in &idx {
        let da = a[t] - mean_a;
        let db = b[t] - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= f64::EPSILON * n || sbb <= f64::EPSILON * n {
        return 0.0;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Connects each node to its `k` peers with the largest absolute Pearson
/// correlation over `range`, then symmetrizes by union. Ties go to the lower
/// node index.
pub fn correlation_knn_graph(panel: &Panel, range: Range<usize>, k: usize) -> Result<Graph> {
    let n = panel.n_nodes();
    if n < 2 {
        return Err(Error::Graph("correlation graph needs at least 2 nodes".into()));
    }
    if k == 0 || k >= n {
        return Err(Error::Graph(format!("k must be in [1, {n}), got {k}")));
    }
    let range = range.start.min(panel.len())..range.end.min(panel.len());
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| panel.series(i).slice(ndarray::s![range.clone()]).to_vec())
        .collect();
    let masks: Vec<Vec<bool>> = (0..n)
        .map(|i| panel.mask().row(i).slice(ndarray::s![range.clone()]).to_vec())
        .collect();
    let mut corr = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = pearson(&rows[i], &rows[j], &masks[i], &masks[j]).abs();
            corr[i][j] = c;
            corr[j][i] = c;
        }
    }
    let mut edges = BTreeSet::new();
    for (i, row) in corr.iter().enumerate() {
        let mut peers: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        peers.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
        for &j in peers.iter().take(k) {
            edges.insert(if i < j { (i, j) } else { (j, i) });
        }
    }
    Graph::new(n, edges.into_iter().collect(), false)
}

/// Reads an edge list with header `src,dst[,weight]`. Node ids are resolved
/// against `node_ids`. Self-loops are dropped and repeated edges (including
/// reversed pairs in an undirected graph) are kept once.
pub fn read_edge_list(path: &Path, node_ids: &[String], directed: bool) -> Result<Graph> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::format(&file, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(&file, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let src_col = col("src").ok_or_else(|| Error::format(&file, "missing column `src`"))?;
    let dst_col = col("dst").ok_or_else(|| Error::format(&file, "missing column `dst`"))?;
    let weight_col = col("weight");
    let index: HashMap<&str, usize> = node_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let resolve = |id: &str| {
        index
            .get(id.trim())
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.trim().to_string()))
    };
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(&file, e.to_string()))?;
        let a = resolve(rec.get(src_col).unwrap_or(""))?;
        let b = resolve(rec.get(dst_col).unwrap_or(""))?;
        if a == b {
            continue;
        }
        let key = if directed || a < b { (a, b) } else { (b, a) };
        if !seen.insert(key) {
            continue;
        }
        edges.push((a, b));
        if let Some(wc) = weight_col {
            let cell = rec.get(wc).unwrap_or("").trim();
            let w = if cell.is_empty() {
                1.0
            } else {
                cell.parse::<f64>().map_err(|_| {
                    Error::format(&file, format!("row {}: non-numeric weight `{cell}`", row + 2))
                })?
            };
            weights.push(w);
        }
    }
    let weights = weight_col.map(|_| weights);
    Graph::with_weights(node_ids.len(), edges, weights, directed)
}

/// Writes an edge list with header `src,dst` (plus `weight` when present).
pub fn write_edge_list(path: &Path, graph: &Graph, node_ids: &[String]) -> Result<()> {
    let mut out = String::from(if graph.weights.is_some() { "src,dst,weight\n" } else { "src,dst\n" });
    for (k, &(a, b)) in graph.edges.iter().enumerate() {
        out.push_str(&node_ids[a]);
        out.push(',');
        out.push_str(&node_ids[b]);
        if let Some(w) = &graph.weights {
            out.push_str(&format!(",{}", crate::data::fmt_value(w[k])));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
