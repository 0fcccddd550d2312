//! Undirected graphs, the normalized propagation operator, and random
//! structural attacks.

use std::collections::HashSet;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::numkit::{spmm, DenseMatrix, Rng, SparseMatrix};

/// Simple undirected graph. Edges are stored once as `(u, v)` with `u < v`,
/// sorted; the adjacency holds both orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: SparseMatrix,
}

impl Graph {
    pub fn new(n: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        if let Some(&(u, v)) = edge_list.iter().find(|&&(u, v)| u >= n || v >= n) {
            return Err(Error::invalid(format!(
                "edge ({u}, {v}) references a node outside 0..{n}"
            )));
        }
        let mut edges: Vec<(usize, usize)> = edge_list
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_canonical(n, edges))
    }

    fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let adjacency = SparseMatrix::from_triplets(
            n,
            n,
            edges
                .iter()
                .flat_map(|&(u, v)| [(u, v, 1.0), (v, u, 1.0)]),
        )
        .expect("canonical edges are in range");
        Self {
            n,
            edges,
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| self.adjacency.row(i).0.len())
            .collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let (a, b) = (u.min(v), u.max(v));
        self.edges.binary_search(&(a, b)).is_ok()
    }

    /// Fraction of edges whose endpoints share a label.
    pub fn edge_homophily(&self, labels: &[usize]) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        let same = self
            .edges
            .iter()
            .filter(|&&(u, v)| labels[u] == labels[v])
            .count();
        same as f64 / self.edges.len() as f64
    }
}

/// Builds a graph from a raw edge list, dropping self-loops and duplicates.
pub fn build_graph(n: usize, edge_list: &[(usize, usize)]) -> Result<Graph> {
    Graph::new(n, edge_list)
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalized_operator(g: &Graph) -> SparseMatrix {
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / ((d + 1) as f64).sqrt())
        .collect();
    let mut indptr = Vec::with_capacity(g.n + 1);
    let mut indices = Vec::with_capacity(g.adjacency.nnz() + g.n);
    let mut values = Vec::with_capacity(g.adjacency.nnz() + g.n);
    indptr.push(0);
    for i in 0..g.n {
        let (cols, _) = g.adjacency.row(i);
        let mut placed_diag = false;
        for &j in cols {
            if !placed_diag && j > i {
                indices.push(i);
                values.push(inv_sqrt[i] * inv_sqrt[i]);
                placed_diag = true;
            }
            indices.push(j);
            // Same operand order for (i, j) and (j, i) keeps S bitwise symmetric.
            let (a, b) = (i.min(j), i.max(j));
            values.push(inv_sqrt[a] * inv_sqrt[b]);
        }
        if !placed_diag {
            indices.push(i);
            values.push(inv_sqrt[i] * inv_sqrt[i]);
        }
        indptr.push(indices.len());
    }
    SparseMatrix::new(g.n, g.n, indptr, indices, values).expect("normalized operator is valid CSR")
}

/// `(Sᵀ)^k · x` by `k` successive sparse products.
pub fn apply_operator_power(s: &SparseMatrix, x: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    if s.rows() != x.rows() || s.cols() != s.rows() {
        return Err(Error::shape("apply_operator_power", s.shape(), x.shape()));
    }
    let mut out = x.clone();
    for _ in 0..k {
        out = spmm(s, &out, true)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attack {
    Add,
    Remove,
    Flip,
}

impl Attack {
    pub const ALL: [Attack; 3] = [Attack::Add, Attack::Remove, Attack::Flip];

    pub fn name(self) -> &'static str {
        match self {
            Attack::Add => "add",
            Attack::Remove => "remove",
            Attack::Flip => "flip",
        }
    }
}

impl std::str::FromStr for Attack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(Attack::Add),
            "remove" => Ok(Attack::Remove),
            "flip" => Ok(Attack::Flip),
            other => Err(Error::invalid(format!("unknown attack kind {other:?}"))),
        }
    }
}

/// Index of unordered pair `(u, v)`, `u < v`, in row-major upper-triangle order.
fn pair_from_index(n: usize, mut idx: usize) -> (usize, usize) {
    let mut u = 0;
    loop {
        let row_len = n - u - 1;
        if idx < row_len {
            return (u, u + 1 + idx);
        }
        idx -= row_len;
        u += 1;
    }
}

fn random_pair(n: usize, rng: &mut Rng) -> (usize, usize) {
    loop {
        let u = rng.below(n);
        let v = rng.below(n);
        if u != v {
            return (u.min(v), u.max(v));
        }
    }
}

/// Random structural perturbation touching `⌊rate·m⌋` node pairs.
///
/// `Add` samples new edges uniformly from non-edges, `Remove` deletes existing
/// edges uniformly, and `Flip` toggles uniformly chosen distinct pairs. All
/// sampling is without replacement.
pub fn perturb(g: &Graph, kind: Attack, rate: f64, rng: &mut Rng) -> Result<Graph> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("perturbation rate must be >= 0, got {rate}")));
    }
    let m = g.edge_count();
    let count = (rate * m as f64).floor() as usize;
    if count == 0 {
        return Ok(g.clone());
    }
    let n = g.n;
    let total_pairs = n * n.saturating_sub(1) / 2;
    match kind {
        Attack::Remove => {
            if count > m {
                return Err(Error::invalid(format!(
                    "cannot remove {count} edges from a graph with {m}"
                )));
            }
            let mut drop = vec![false; m];
            for i in index::sample(rng, m, count) {
                drop[i] = true;
            }
            let edges = g
                .edges
                .iter()
                .zip(&drop)
                .filter(|(_, &d)| !d)
                .map(|(&e, _)| e)
                .collect();
            Ok(Graph::from_canonical(n, edges))
        }
        Attack::Add => {
            let available = total_pairs - m;
            if count > available {
                return Err(Error::invalid(format!(
                    "cannot add {count} edges: only {available} non-edges exist"
                )));
            }
            let mut added: Vec<(usize, usize)> = if 2 * count > available {
                let non_edges: Vec<(usize, usize)> = (0..total_pairs)
                    .map(|i| pair_from_index(n, i))
                    .filter(|&(u, v)| !g.has_edge(u, v))
                    .collect();
                index::sample(rng, non_edges.len(), count)
                    .into_iter()
                    .map(|i| non_edges[i])
                    .collect()
            } else {
                let mut chosen = HashSet::with_capacity(count);
                let mut order = Vec::with_capacity(count);
                while order.len() < count {
                    let p = random_pair(n, rng);
                    if !g.has_edge(p.0, p.1) && chosen.insert(p) {
                        order.push(p);
                    }
                }
                order
            };
            added.extend_from_slice(&g.edges);
            added.sort_unstable();
            Ok(Graph::from_canonical(n, added))
        }
        Attack::Flip => {
            if count > total_pairs {
                return Err(Error::invalid(format!(
                    "cannot flip {count} pairs: graph has only {total_pairs}"
                )));
            }
            let toggles: HashSet<(usize, usize)> = index::sample(rng, total_pairs, count)
                .into_iter()
                .map(|i| pair_from_index(n, i))
                .collect();
            let mut edges: Vec<(usize, usize)> = g
                .edges
                .iter()
                .copied()
                .filter(|e| !toggles.contains(e))
                .collect();
            edges.extend(toggles.iter().copied().filter(|&(u, v)| !g.has_edge(u, v)));
            edges.sort_unstable();
            Ok(Graph::from_canonical(n, edges))
        }
    }
}
