//! Weighted directed graphs over panel nodes.
//!
//! A [`Network`] holds the directed edge set with raw nonnegative weights,
//! the row-normalized connection weights `ω[i,q]` (each node's out-weights
//! sum to one), and the cached r-stage neighbourhood sets: stage r of node i
//! is the set of nodes first reachable from i in exactly r directed hops,
//! excluding i and every lower stage.
//!
//! Weight convention across stages: stage-1 weights are the normalized edge
//! weights; members of stage r >= 2 share equal weights `1/|stage set|`, since
//! the edge set carries no weight information for non-adjacent pairs. Each
//! stage's weights sum to one whenever the stage is nonempty.
//!
//! Networks are immutable after construction and safe to share across
//! threads.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<String>,
    /// Out-adjacency with raw weights, sorted by target index.
    out_edges: Vec<Vec<(usize, f64)>>,
    /// Row-normalized stage-1 weights; a row is all-zero when the node has no
    /// out-edges or zero total out-weight.
    norm: DMatrix<f64>,
    /// `stages[i][r-1]` is the sorted r-th stage neighbourhood set of node i.
    stages: Vec<Vec<Vec<usize>>>,
}

impl Network {
    /// Build a network from an explicit directed edge list with raw weights.
    pub fn from_edges(nodes: Vec<String>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Dimension("network needs at least one node".into()));
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(src, dst, w) in edges {
            if src >= n || dst >= n {
                return Err(Error::Dimension(format!("edge ({src},{dst}) out of range")));
            }
            if src == dst {
                return Err(Error::Validation(format!(
                    "self-loop on node '{}' not allowed",
                    nodes[src]
                )));
            }
            if w < 0.0 || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "negative or non-finite weight {w} on edge {}->{}",
                    nodes[src], nodes[dst]
                )));
            }
            if adj[src].iter().any(|&(t, _)| t == dst) {
                return Err(Error::Format(format!(
                    "duplicate edge {}->{}",
                    nodes[src], nodes[dst]
                )));
            }
            adj[src].push((dst, w));
        }
        for row in adj.iter_mut() {
            row.sort_by_key(|&(t, _)| t);
        }
        let norm = normalized_weight_matrix(n, &adj);
        let stages = bfs_stages(n, &adj);
        Ok(Network { nodes, out_edges: adj, norm, stages })
    }

    /// Fully-connected network: every ordered pair carries an edge weighted by
    /// the export quantity, then row-normalized. All cross-node dependence is
    /// first-stage: stage 2 and above are empty.
    pub fn fully_connected(nodes: Vec<String>, exports: &DMatrix<f64>) -> Result<Self> {
        validate_export_matrix(&nodes, exports)?;
        let n = nodes.len();
        let mut edges = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    edges.push((i, j, exports[(i, j)]));
                }
            }
        }
        Network::from_edges(nodes, &edges)
    }

    /// Nearest-neighbour network: each node gets a single out-edge to its
    /// largest export partner, weight 1. A tied maximum is an error unless
    /// `tie_break_lowest` is set, in which case the lowest node index wins.
    pub fn nearest_neighbour(
        nodes: Vec<String>,
        exports: &DMatrix<f64>,
        tie_break_lowest: bool,
    ) -> Result<Self> {
        validate_export_matrix(&nodes, exports)?;
        let n = nodes.len();
        let mut edges = Vec::with_capacity(n);
        for i in 0..n {
            let mut best = None::<(usize, f64)>;
            let mut tied = false;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = exports[(i, j)];
                match best {
                    None => best = Some((j, w)),
                    Some((_, bw)) if w > bw => {
                        best = Some((j, w));
                        tied = false;
                    }
                    Some((_, bw)) if w == bw => tied = true,
                    _ => {}
                }
            }
            let (j, w) = best.expect("n >= 2 checked by validate_export_matrix");
            if w <= 0.0 {
                return Err(Error::Validation(format!(
                    "node '{}' has no positive export; cannot pick a nearest neighbour",
                    nodes[i]
                )));
            }
            if tied && !tie_break_lowest {
                return Err(Error::Validation(format!(
                    "node '{}' has a tied maximum export; pass the tie-break flag to resolve",
                    nodes[i]
                )));
            }
            edges.push((i, j, 1.0));
        }
        Network::from_edges(nodes, &edges)
    }

    /// Re-normalize the current raw weights. Networks built through the
    /// constructors are already normalized; this re-derives `ω` after any
    /// edge-set change and returns the result as a fresh network.
    pub fn normalize_weights(&self) -> Network {
        let mut out = self.clone();
        out.norm = normalized_weight_matrix(self.n_nodes(), &self.out_edges);
        out
    }

    /// Drop edges pointing at unobserved nodes and rescale each surviving row
    /// to sum to one. A row whose neighbours are all unobserved is left empty,
    /// so its network regressor contributes zero.
    pub fn renormalize_for_missing(&self, observed_now: &[bool]) -> Result<Network> {
        if observed_now.len() != self.n_nodes() {
            return Err(Error::Dimension("observed mask length != node count".into()));
        }
        let adj: Vec<Vec<(usize, f64)>> = self
            .out_edges
            .iter()
            .map(|row| row.iter().copied().filter(|&(t, _)| observed_now[t]).collect())
            .collect();
        let norm = normalized_weight_matrix(self.n_nodes(), &adj);
        let stages = bfs_stages(self.n_nodes(), &adj);
        Ok(Network { nodes: self.nodes.clone(), out_edges: adj, norm, stages })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    /// Normalized stage-1 connection weights as an `N×N` matrix; entry `(i,q)`
    /// is `ω[i,q]`.
    pub fn norm_weights(&self) -> &DMatrix<f64> {
        &self.norm
    }

    /// The r-th stage neighbourhood set of `node` (sorted), `r >= 1`. Stages
    /// beyond the reachable depth are empty.
    pub fn neighbourhood(&self, node: usize, r: usize) -> Result<&[usize]> {
        if node >= self.n_nodes() {
            return Err(Error::UnknownNode(format!("#{node}")));
        }
        if r == 0 {
            return Err(Error::Validation("neighbourhood stage must be >= 1".into()));
        }
        Ok(self.stages[node].get(r - 1).map(|v| v.as_slice()).unwrap_or(&[]))
    }

    /// Largest stage with a nonempty neighbourhood set for any node.
    pub fn max_stage(&self) -> usize {
        self.stages.iter().map(|s| s.len()).max().unwrap_or(0)
    }

    /// Stage-r weights `(q, ω)` for node i over the full node set.
    pub fn stage_weights(&self, node: usize, r: usize) -> Result<Vec<(usize, f64)>> {
        let set = self.neighbourhood(node, r)?;
        if set.is_empty() {
            return Ok(Vec::new());
        }
        if r == 1 {
            Ok(set.iter().map(|&q| (q, self.norm[(node, q)])).collect())
        } else {
            let w = 1.0 / set.len() as f64;
            Ok(set.iter().map(|&q| (q, w)).collect())
        }
    }

    /// Stage-r weights restricted to currently observed members and rescaled
    /// to sum to one; empty when no member is observed (or all surviving
    /// weights are zero). Relative proportions among survivors are preserved.
    pub fn masked_stage_weights(
        &self,
        node: usize,
        r: usize,
        observed: &[bool],
    ) -> Result<Vec<(usize, f64)>> {
        let full = self.stage_weights(node, r)?;
        let kept: Vec<(usize, f64)> =
            full.into_iter().filter(|&(q, _)| observed[q]).collect();
        let total: f64 = kept.iter().map(|&(_, w)| w).sum();
        if total <= 0.0 {
            return Ok(Vec::new());
        }
        Ok(kept.into_iter().map(|(q, w)| (q, w / total)).collect())
    }

    /// The stage-r weight matrix `W_r` with `[W_r](l,m) = ω[l,m]·1{m ∈ N_r(l)}`.
    pub fn weight_matrix(&self, r: usize) -> Result<DMatrix<f64>> {
        let n = self.n_nodes();
        let mut w = DMatrix::zeros(n, n);
        for l in 0..n {
            for (m, omega) in self.stage_weights(l, r)? {
                w[(l, m)] = omega;
            }
        }
        Ok(w)
    }

    /// Fixed five-node network used by the simulation-study command and the
    /// crate's own simulation tests. Undirected (each edge in both
    /// directions), unit raw weights:
    /// 1-2, 1-3, 2-3, 3-5, 4-5.
    pub fn demo_five() -> Network {
        let nodes: Vec<String> = (1..=5).map(|i| format!("n{i}")).collect();
        let undirected = [(0usize, 1usize), (0, 2), (1, 2), (2, 4), (3, 4)];
        let mut edges = Vec::new();
        for &(a, b) in &undirected {
            edges.push((a, b, 1.0));
            edges.push((b, a, 1.0));
        }
        Network::from_edges(nodes, &edges).expect("demo network is valid")
    }
}

fn validate_export_matrix(nodes: &[String], exports: &DMatrix<f64>) -> Result<()> {
    let n = nodes.len();
    if n < 2 {
        return Err(Error::Dimension("trade network needs at least two nodes".into()));
    }
    if exports.nrows() != n || exports.ncols() != n {
        return Err(Error::Dimension(format!(
            "export matrix is {}x{}, expected {}x{}",
            exports.nrows(),
            exports.ncols(),
            n,
            n
        )));
    }
    for i in 0..n {
        if exports[(i, i)] != 0.0 {
            return Err(Error::Validation(format!(
                "export matrix diagonal must be zero (node '{}')",
                nodes[i]
            )));
        }
        for j in 0..n {
            let w = exports[(i, j)];
            if w < 0.0 || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "negative or non-finite export {w} from '{}' to '{}'",
                    nodes[i], nodes[j]
                )));
            }
        }
    }
    Ok(())
}

fn normalized_weight_matrix(n: usize, adj: &[Vec<(usize, f64)>]) -> DMatrix<f64> {
    let mut norm = DMatrix::zeros(n, n);
    for (i, row) in adj.iter().enumerate() {
        let total: f64 = row.iter().map(|&(_, w)| w).sum();
        if total > 0.0 {
            for &(j, w) in row {
                norm[(i, j)] = w / total;
            }
        }
    }
    norm
}

/// Directed BFS layering: `stages[i][r-1]` collects nodes first reached from i
/// at exactly r hops, excluding i itself.
fn bfs_stages(n: usize, adj: &[Vec<(usize, f64)>]) -> Vec<Vec<Vec<usize>>> {
    let mut all = Vec::with_capacity(n);
    for start in 0..n {
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut frontier: BTreeSet<usize> = adj[start].iter().map(|&(t, _)| t).collect();
        frontier.remove(&start);
        let mut stages: Vec<Vec<usize>> = Vec::new();
        while !frontier.is_empty() {
            let layer: Vec<usize> = frontier.iter().copied().filter(|&q| !seen[q]).collect();
            if layer.is_empty() {
                break;
            }
            for &q in &layer {
                seen[q] = true;
            }
            let mut next = BTreeSet::new();
            for &q in &layer {
                for &(t, _) in &adj[q] {
                    if !seen[t] {
                        next.insert(t);
                    }
                }
            }
            stages.push(layer);
            frontier = next;
        }
        all.push(stages);
    }
    all
}

/// Load an edge-list CSV `source,target,weight` with node names matching the
/// panel header. `nodes` fixes the node order.
pub fn load_edge_list_csv(path: &Path, nodes: &[String]) -> Result<Network> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut edges = Vec::new();
    let index = |name: &str| -> Result<usize> {
        nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    };
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("row {}: {e}", row_idx + 2)))?;
        if record.len() < 3 {
            return Err(Error::Format(format!("row {}: expected source,target,weight", row_idx + 2)));
        }
        let src = index(record.get(0).unwrap())?;
        let dst = index(record.get(1).unwrap())?;
        let w: f64 = record.get(2).unwrap().parse().map_err(|_| Error::Parse {
            location: format!("row {} column 'weight'", row_idx + 2),
            message: format!("non-numeric weight '{}'", record.get(2).unwrap()),
        })?;
        edges.push((src, dst, w));
    }
    Network::from_edges(nodes.to_vec(), &edges)
}

/// Load an `N×N` export matrix CSV whose header row and first column carry
/// node names. Returns the node order and the matrix.
pub fn load_export_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    let nodes: Vec<String> = headers.iter().skip(1).map(|h| h.to_string()).collect();
    let n = nodes.len();
    if n == 0 {
        return Err(Error::Format("export matrix has no node columns".into()));
    }
    let mut values = DMatrix::zeros(n, n);
    let mut row_count = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("row {}: {e}", row_idx + 2)))?;
        if row_idx >= n {
            return Err(Error::Format(format!("export matrix has more than {n} rows")));
        }
        let row_name = record.get(0).unwrap_or("");
        if row_name != nodes[row_idx] {
            return Err(Error::Format(format!(
                "export matrix row {} is '{}', expected '{}' (row order must match header)",
                row_idx + 2,
                row_name,
                nodes[row_idx]
            )));
        }
        for j in 0..n {
            let cell = record.get(j + 1).unwrap_or("");
            values[(row_idx, j)] = cell.parse().map_err(|_| Error::Parse {
                location: format!("row {} column '{}'", row_idx + 2, nodes[j]),
                message: format!("non-numeric cell '{cell}'"),
            })?;
        }
        row_count += 1;
    }
    if row_count != n {
        return Err(Error::Format(format!("export matrix has {row_count} rows, expected {n}")));
    }
    Ok((nodes, values))
}
