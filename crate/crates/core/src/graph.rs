//! Cell graphs and their GCN encoding.
//!
//! A cell is a DAG whose nodes carry operation labels. Encoding appends a
//! global node that every original node points at, adds self-loops and
//! applies symmetric degree normalization. Node features are one-hot
//! operation indicators, with one extra column reserved for the global node.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Ordered operation names. The global node uses index `len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpVocabulary {
    ops: Vec<String>,
}

impl OpVocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let ops: Vec<String> = names.into_iter().map(Into::into).collect();
        if ops.is_empty() {
            return Err(Error::InvalidVocabulary("no operations".into()));
        }
        for (i, name) in ops.iter().enumerate() {
            if ops[..i].contains(name) {
                return Err(Error::InvalidVocabulary(format!("duplicate operation {name:?}")));
            }
        }
        Ok(Self { ops })
    }

    pub fn names(&self) -> &[String] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Feature column of the global node.
    pub fn global_index(&self) -> usize {
        self.ops.len()
    }

    /// Width of the one-hot feature rows, global slot included.
    pub fn feature_width(&self) -> usize {
        self.ops.len() + 1
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.ops.iter().position(|op| op == name).ok_or_else(|| Error::UnknownOperation(name.to_string()))
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.ops.get(index).map(String::as_str)
    }
}

/// A directed acyclic cell. `adjacency[i][j] == 1` is a data-flow edge `i -> j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct ArchGraph {
    node_count: usize,
    adjacency: Vec<u8>,
    ops: Vec<usize>,
    id: String,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    adjacency: Vec<Vec<u8>>,
    ops: Vec<usize>,
}

impl TryFrom<RawGraph> for ArchGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        ArchGraph::new(raw.adjacency, raw.ops)
    }
}

impl From<ArchGraph> for RawGraph {
    fn from(g: ArchGraph) -> Self {
        RawGraph { adjacency: g.adjacency_rows(), ops: g.ops }
    }
}

impl ArchGraph {
    pub fn new(adjacency: Vec<Vec<u8>>, ops: Vec<usize>) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if ops.len() != n {
            return Err(Error::InvalidGraph(format!("{} operation labels for {n} nodes", ops.len())));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGraph(format!("adjacency row {i} has length {}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::InvalidGraph(format!("entry ({i},{j}) is not binary")));
                }
                if i == j && v != 0 {
                    return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
                }
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(n, flat, ops)
    }

    fn from_flat(node_count: usize, adjacency: Vec<u8>, ops: Vec<usize>) -> Result<Self> {
        if topological_order(node_count, &adjacency).is_none() {
            return Err(Error::InvalidGraph("adjacency contains a cycle".into()));
        }
        let id = content_id(node_count, &adjacency, &ops);
        Ok(Self { node_count, adjacency, ops, id })
    }

    /// Builds a graph from operation names.
    pub fn from_names(adjacency: Vec<Vec<u8>>, names: &[impl AsRef<str>], vocab: &OpVocabulary) -> Result<Self> {
        let ops = names.iter().map(|n| vocab.index_of(n.as_ref())).collect::<Result<Vec<_>>>()?;
        Self::new(adjacency, ops)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn ops(&self) -> &[usize] {
        &self.ops
    }

    /// Stable content hash (hex SHA-256 of node count, adjacency and labels).
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from * self.node_count + to] == 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|&v| v as usize).sum()
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        self.adjacency.chunks(self.node_count).map(<[u8]>::to_vec).collect()
    }

    pub fn op_names<'v>(&self, vocab: &'v OpVocabulary) -> Result<Vec<&'v str>> {
        self.validate(vocab)?;
        Ok(self.ops.iter().map(|&o| vocab.name(o).unwrap_or_default()).collect())
    }

    /// Checks every label against `vocab`.
    pub fn validate(&self, vocab: &OpVocabulary) -> Result<()> {
        for (node, &label) in self.ops.iter().enumerate() {
            if label >= vocab.len() {
                return Err(Error::LabelOutOfVocabulary { node, label, size: vocab.len() });
            }
        }
        Ok(())
    }

    /// Number of edges on the longest directed path.
    pub fn longest_path(&self) -> usize {
        let n = self.node_count;
        let order = topological_order(n, &self.adjacency).expect("validated acyclic");
        let mut depth = vec![0usize; n];
        for &u in &order {
            for v in 0..n {
                if self.has_edge(u, v) {
                    depth[v] = depth[v].max(depth[u] + 1);
                }
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// Copy with operation `node` relabelled.
    pub fn with_op(&self, node: usize, op: usize) -> Self {
        let mut ops = self.ops.clone();
        ops[node] = op;
        let id = content_id(self.node_count, &self.adjacency, &ops);
        Self { node_count: self.node_count, adjacency: self.adjacency.clone(), ops, id }
    }

    /// Copy with edge `from -> to` toggled, or `None` when that creates a
    /// self-loop or a cycle.
    pub fn with_edge_toggled(&self, from: usize, to: usize) -> Option<Self> {
        if from == to {
            return None;
        }
        let mut adjacency = self.adjacency.clone();
        adjacency[from * self.node_count + to] ^= 1;
        Self::from_flat(self.node_count, adjacency, self.ops.clone()).ok()
    }

    /// All graphs one edit away: a single relabel among `vocab_size`
    /// operations or a single edge toggle that keeps the graph acyclic.
    pub fn single_edit_neighbors(&self, vocab_size: usize) -> Vec<Self> {
        let n = self.node_count;
        let mut out = Vec::new();
        for node in 0..n {
            for op in 0..vocab_size {
                if op != self.ops[node] {
                    out.push(self.with_op(node, op));
                }
            }
        }
        for from in 0..n {
            for to in 0..n {
                if let Some(g) = self.with_edge_toggled(from, to) {
                    out.push(g);
                }
            }
        }
        out
    }
}

fn content_id(n: usize, adjacency: &[u8], ops: &[usize]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((n as u32).to_le_bytes());
    hasher.update(adjacency);
    for &op in ops {
        hasher.update((op as u32).to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Kahn's algorithm; `None` if the graph has a cycle.
fn topological_order(n: usize, adjacency: &[u8]) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            indegree[j] += adjacency[i * n + j] as usize;
        }
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = ready.pop() {
        order.push(u);
        for v in (0..n).rev() {
            if adjacency[u * n + v] == 1 {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.push(v);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// One-hot node features with a trailing global-node row.
pub fn one_hot_features(g: &ArchGraph, vocab: &OpVocabulary) -> Result<Vec<Vec<f64>>> {
    g.validate(vocab)?;
    let width = vocab.feature_width();
    let mut rows = Vec::with_capacity(g.node_count + 1);
    for &op in g.ops.iter().chain(std::iter::once(&vocab.global_index())) {
        let mut row = vec![0.0; width];
        row[op] = 1.0;
        rows.push(row);
    }
    Ok(rows)
}

/// Adjacency with the global node appended: every original node gets an
/// edge into it and it has no outgoing edges.
pub fn augment_with_global(g: &ArchGraph) -> Vec<Vec<u8>> {
    let n = g.node_count;
    let mut out = vec![vec![0u8; n + 1]; n + 1];
    for (i, row) in out.iter_mut().enumerate().take(n) {
        for (j, cell) in row.iter_mut().enumerate().take(n) {
            *cell = g.adjacency[i * n + j];
        }
        row[n] = 1;
    }
    out
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D_ii` the row sums of `A + I`.
pub fn normalize_adjacency(adjacency: &[Vec<u8>]) -> Result<Vec<Vec<f64>>> {
    let n = adjacency.len();
    if adjacency.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("adjacency is not square".into()));
    }
    let tilde = |i: usize, j: usize| -> f64 {
        if i == j {
            1.0
        } else {
            adjacency[i][j] as f64
        }
    };
    let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / (0..n).map(|j| tilde(i, j)).sum::<f64>().sqrt()).collect();
    Ok((0..n).map(|i| (0..n).map(|j| inv_sqrt_deg[i] * tilde(i, j) * inv_sqrt_deg[j]).collect()).collect())
}

/// GCN input for one graph. Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedGraph {
    pub(crate) size: usize,
    pub(crate) feature_width: usize,
    pub(crate) aug_adjacency: Vec<f64>,
    /// Column of the single 1 in each feature row; `None` for padding rows.
    pub(crate) active: Vec<Option<usize>>,
    pub(crate) global_row: usize,
}

impl EncodedGraph {
    /// Number of rows, global node and padding included.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn global_row(&self) -> usize {
        self.global_row
    }

    /// Normalized augmented adjacency, row-major `size x size`.
    pub fn aug_adjacency(&self) -> &[f64] {
        &self.aug_adjacency
    }

    pub fn adjacency_entry(&self, i: usize, j: usize) -> f64 {
        self.aug_adjacency[i * self.size + j]
    }

    /// One-hot column of row `i`, `None` for padding.
    pub fn active_feature(&self, i: usize) -> Option<usize> {
        self.active[i]
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.active
            .iter()
            .map(|a| {
                let mut row = vec![0.0; self.feature_width];
                if let Some(c) = a {
                    row[*c] = 1.0;
                }
                row
            })
            .collect()
    }

    /// Copy extended to `total` rows with zero adjacency and zero features.
    pub fn padded(&self, total: usize) -> Result<Self> {
        if total < self.size {
            return Err(Error::DimensionMismatch(format!("cannot pad {} rows down to {total}", self.size)));
        }
        let mut adj = vec![0.0; total * total];
        for i in 0..self.size {
            adj[i * total..i * total + self.size]
                .copy_from_slice(&self.aug_adjacency[i * self.size..(i + 1) * self.size]);
        }
        let mut active = self.active.clone();
        active.resize(total, None);
        Ok(Self {
            size: total,
            feature_width: self.feature_width,
            aug_adjacency: adj,
            active,
            global_row: self.global_row,
        })
    }
}

/// Full encoding: global augmentation, normalization and one-hot features.
pub fn encode(g: &ArchGraph, vocab: &OpVocabulary) -> Result<EncodedGraph> {
    g.validate(vocab)?;
    let aug = normalize_adjacency(&augment_with_global(g))?;
    let size = g.node_count + 1;
    let active = g.ops.iter().copied().chain(std::iter::once(vocab.global_index())).map(Some).collect();
    Ok(EncodedGraph {
        size,
        feature_width: vocab.feature_width(),
        aug_adjacency: aug.into_iter().flatten().collect(),
        active,
        global_row: g.node_count,
    })
}

/// Recovers the cell from an (unpadded) encoding.
pub fn decode(e: &EncodedGraph) -> Result<ArchGraph> {
    let n = e.global_row;
    let mut adjacency = vec![vec![0u8; n]; n];
    let mut ops = Vec::with_capacity(n);
    for (i, row) in adjacency.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j && e.adjacency_entry(i, j) != 0.0 {
                *cell = 1;
            }
        }
        ops.push(e.active[i].ok_or_else(|| Error::InvalidGraph(format!("row {i} has no feature")))?);
    }
    ArchGraph::new(adjacency, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn vocab(n: usize) -> OpVocabulary {
        OpVocabulary::new((0..n).map(|i| format!("op{i}"))).unwrap()
    }

    pub(crate) fn random_dag(rng: &mut ChaCha8Rng, n: usize, ops: usize) -> ArchGraph {
        let mut adj = vec![vec![0u8; n]; n];
        for (i, row) in adj.iter_mut().enumerate() {
            for cell in row.iter_mut().skip(i + 1) {
                *cell = rng.gen_bool(0.4) as u8;
            }
        }
        let labels = (0..n).map(|_| rng.gen_range(0..ops)).collect();
        ArchGraph::new(adj, labels).unwrap()
    }

    #[test]
    fn one_hot_examples() {
        let v = vocab(2);
        let g = ArchGraph::new(vec![vec![0]], vec![0]).unwrap();
        assert_eq!(one_hot_features(&g, &v).unwrap(), vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let g = ArchGraph::new(vec![vec![0, 1], vec![0, 0]], vec![1, 0]).unwrap();
        assert_eq!(
            one_hot_features(&g, &v).unwrap(),
            vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]
        );
    }

    #[test]
    fn label_out_of_vocabulary_names_the_node() {
        let g = ArchGraph::new(vec![vec![0, 1], vec![0, 0]], vec![0, 7]).unwrap();
        let err = one_hot_features(&g, &vocab(6)).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfVocabulary { node: 1, label: 7, size: 6 }));
    }

    #[test]
    fn augment_examples() {
        let g = ArchGraph::new(vec![vec![0]], vec![0]).unwrap();
        assert_eq!(augment_with_global(&g), vec![vec![0, 1], vec![0, 0]]);
        let g = ArchGraph::new(vec![vec![0, 1], vec![0, 0]], vec![0, 0]).unwrap();
        assert_eq!(augment_with_global(&g), vec![vec![0, 1, 1], vec![0, 0, 1], vec![0, 0, 0]]);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_adjacency(&[vec![0]]).unwrap(), vec![vec![1.0]]);
        let a = normalize_adjacency(&[vec![0, 1], vec![0, 0]]).unwrap();
        let expected = [[0.5, 1.0 / 2f64.sqrt()], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalized_diagonal_is_inverse_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = rng.gen_range(1..8);
            let g = random_dag(&mut rng, n, 3);
            let aug = augment_with_global(&g);
            let norm = normalize_adjacency(&aug).unwrap();
            for (i, row) in aug.iter().enumerate() {
                let degree = 1.0 + row.iter().map(|&v| v as f64).sum::<f64>();
                assert!((norm[i][i] - 1.0 / degree).abs() < 1e-15);
                for (j, &v) in row.iter().enumerate() {
                    let nonzero = norm[i][j] != 0.0;
                    assert_eq!(nonzero, i == j || v == 1);
                    assert!((0.0..=1.0).contains(&norm[i][j]));
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_graphs() {
        assert!(ArchGraph::new(vec![], vec![]).is_err());
        assert!(ArchGraph::new(vec![vec![1]], vec![0]).is_err());
        assert!(ArchGraph::new(vec![vec![0, 2], vec![0, 0]], vec![0, 0]).is_err());
        assert!(ArchGraph::new(vec![vec![0, 1], vec![1, 0]], vec![0, 0]).is_err());
        assert!(ArchGraph::new(vec![vec![0, 1]], vec![0]).is_err());
    }

    #[test]
    fn encode_round_trips_and_is_pure() {
        let v = vocab(5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..8);
            let g = random_dag(&mut rng, n, 5);
            let e = encode(&g, &v).unwrap();
            assert_eq!(decode(&e).unwrap(), g);
            assert_eq!(encode(&decode(&e).unwrap(), &v).unwrap(), e);
            assert_eq!(encode(&g, &v).unwrap(), e);
        }
        let g = ArchGraph::new(vec![vec![0]], vec![0]).unwrap();
        assert_eq!(encode(&g, &v).unwrap().size(), 2);
    }

    #[test]
    fn encoded_features_have_global_row() {
        let v = vocab(5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_dag(&mut rng, 6, 5);
        let e = encode(&g, &v).unwrap();
        let feats = e.features();
        for row in &feats {
            assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        assert_eq!(feats[e.global_row()][v.global_index()], 1.0);
    }

    #[test]
    fn global_node_is_one_hop_from_everything_and_stays_acyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.gen_range(1..8);
            let g = random_dag(&mut rng, n, 3);
            let aug = augment_with_global(&g);
            for row in aug.iter().take(n) {
                assert_eq!(row[n], 1);
            }
            assert!(aug[n].iter().all(|&v| v == 0));
            let flat: Vec<u8> = aug.iter().flatten().copied().collect();
            assert!(topological_order(n + 1, &flat).is_some());
        }
    }

    #[test]
    fn ids_are_structural_and_order_sensitive() {
        let a = ArchGraph::new(vec![vec![0, 1], vec![0, 0]], vec![0, 1]).unwrap();
        let b = ArchGraph::new(vec![vec![0, 1], vec![0, 0]], vec![0, 1]).unwrap();
        let swapped = ArchGraph::new(vec![vec![0, 0], vec![1, 0]], vec![1, 0]).unwrap();
        assert_eq!(a.id(), b.id());
        assert_ne!(a.id(), swapped.id());
    }

    #[test]
    fn no_id_collisions_on_many_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut ids = HashSet::new();
        let mut graphs = HashSet::new();
        for _ in 0..100_000 {
            let n = rng.gen_range(2..8);
            let g = random_dag(&mut rng, n, 5);
            ids.insert(g.id().to_string());
            graphs.insert((g.adjacency_rows(), g.ops().to_vec()));
        }
        assert_eq!(ids.len(), graphs.len());
    }

    #[test]
    fn neighbors_are_valid_single_edits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_dag(&mut rng, 5, 3);
        let nbrs = g.single_edit_neighbors(3);
        assert!(!nbrs.is_empty());
        for h in &nbrs {
            let op_diff = g.ops().iter().zip(h.ops()).filter(|(a, b)| a != b).count();
            let edge_diff = g
                .adjacency_rows()
                .iter()
                .flatten()
                .zip(h.adjacency_rows().iter().flatten())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(op_diff + edge_diff, 1);
        }
    }

    #[test]
    fn longest_path_of_chain() {
        let g = ArchGraph::new(vec![vec![0, 1, 0], vec![0, 0, 1], vec![0, 0, 0]], vec![0, 0, 0]).unwrap();
        assert_eq!(g.longest_path(), 2);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn vocabulary_rules() {
        assert!(OpVocabulary::new(Vec::<String>::new()).is_err());
        assert!(OpVocabulary::new(["a", "a"]).is_err());
        let v = OpVocabulary::new(["a", "b"]).unwrap();
        assert_eq!(v.global_index(), 2);
        assert_eq!(v.feature_width(), 3);
    }

    #[test]
    fn padding_keeps_original_block() {
        let v = vocab(3);
        let g = ArchGraph::new(vec![vec![0, 1], vec![0, 0]], vec![0, 2]).unwrap();
        let e = encode(&g, &v).unwrap();
        let p = e.padded(6).unwrap();
        assert_eq!(p.size(), 6);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(p.adjacency_entry(i, j), e.adjacency_entry(i, j));
            }
        }
        assert_eq!(p.active_feature(4), None);
        assert!(e.padded(2).is_err());
    }
}
