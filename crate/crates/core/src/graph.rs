//! Cell specifications and their adjacency + one-hot feature encoding.
//!
//! Benchmarks label the *edges* of a cell with operations. The predictor wants
//! per-node features, so every labelled edge `u -op-> v` becomes an operation
//! node `x` with `u -> x -> v`. Data nodes survive as pass-through nodes that
//! carry the INPUT, OUTPUT or internal token.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Vocabulary entries that double as the token of internal pass-through nodes.
const IDENTITY_NAMES: [&str; 3] = ["skip_connect", "skip", "identity"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub op: String,
}

impl Edge {
    pub fn new(src: usize, dst: usize, op: impl Into<String>) -> Self {
        Self {
            src,
            dst,
            op: op.into(),
        }
    }
}

/// An edge-labelled cell. Node 0 is the cell input, node `num_nodes - 1` the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    pub num_nodes: usize,
    pub edges: Vec<Edge>,
}

/// Feature columns of an encoded graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpVocabulary {
    ops: Vec<String>,
    identity: Option<usize>,
}

impl OpVocabulary {
    pub fn new(ops: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = ops.iter().collect();
        if unique.len() != ops.len() {
            return Err(Error::Config("operation vocabulary contains duplicates".into()));
        }
        if ops.is_empty() {
            return Err(Error::Config("operation vocabulary is empty".into()));
        }
        let identity = ops.iter().position(|o| IDENTITY_NAMES.contains(&o.as_str()));
        Ok(Self { ops, identity })
    }

    pub fn ops(&self) -> &[String] {
        &self.ops
    }

    pub fn index_of(&self, op: &str) -> Option<usize> {
        self.ops.iter().position(|o| o == op)
    }

    pub fn input_column(&self) -> usize {
        self.ops.len()
    }

    pub fn output_column(&self) -> usize {
        self.ops.len() + 1
    }

    /// Column used by internal data nodes: the identity op if present, else a dedicated token.
    pub fn internal_column(&self) -> usize {
        self.identity.unwrap_or(self.ops.len() + 2)
    }

    /// `|vocabulary| + 2`, or `+ 3` when no identity op exists.
    pub fn feature_dim(&self) -> usize {
        self.ops.len() + if self.identity.is_some() { 2 } else { 3 }
    }
}

/// Node-level encoding of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGraph {
    /// n×n, strictly upper triangular for real nodes.
    pub adjacency: Matrix,
    /// n×d one-hot rows; padding rows are all zero.
    pub features: Matrix,
    /// Nodes before padding.
    pub real_nodes: usize,
}

impl CellGraph {
    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    /// Inserts isolated all-zero rows just before the OUTPUT row until there are `n` nodes.
    pub fn pad_to(&self, n: usize) -> Result<Self> {
        let cur = self.n();
        if n < cur {
            return Err(Error::Contract(format!(
                "graph with {cur} nodes does not fit max_nodes = {n}"
            )));
        }
        if n == cur {
            return Ok(self.clone());
        }
        let pad = n - cur;
        // old index -> new index: the output node (last) shifts by `pad`
        let remap = |i: usize| if i + 1 == cur { i + pad } else { i };
        let mut adjacency = Matrix::zeros(n, n);
        for r in 0..cur {
            for c in 0..cur {
                let v = self.adjacency.get(r, c);
                if v != 0.0 {
                    adjacency.set(remap(r), remap(c), v);
                }
            }
        }
        let d = self.features.cols();
        let mut features = Matrix::zeros(n, d);
        for r in 0..cur {
            for c in 0..d {
                features.set(remap(r), c, self.features.get(r, c));
            }
        }
        Ok(Self {
            adjacency,
            features,
            real_nodes: self.real_nodes,
        })
    }
}

/// Expands an edge-labelled cell into an op-node graph.
///
/// Node order: INPUT, then for each data node `v = 1..` the op nodes of its
/// incoming edges sorted by source, followed by `v` itself. The output is
/// therefore the last row and the order is topological.
pub fn encode_cell(cell: &CellSpec, vocab: &OpVocabulary) -> Result<CellGraph> {
    let k = cell.num_nodes;
    if k < 2 {
        return Err(Error::InvalidCell(format!("a cell needs at least 2 nodes, got {k}")));
    }
    let mut seen = BTreeSet::new();
    let mut op_index = Vec::with_capacity(cell.edges.len());
    let mut backwards = false;
    for e in &cell.edges {
        if e.src >= k || e.dst >= k {
            return Err(Error::InvalidCell(format!(
                "edge {} -> {} references a node outside 0..{k}",
                e.src, e.dst
            )));
        }
        if e.src == e.dst {
            return Err(Error::Cycle {
                src: e.src,
                dst: e.dst,
                cycle: vec![e.src],
            });
        }
        if !seen.insert((e.src, e.dst)) {
            return Err(Error::InvalidCell(format!("duplicate edge {} -> {}", e.src, e.dst)));
        }
        let idx = vocab.index_of(&e.op).ok_or_else(|| Error::Vocabulary { op: e.op.clone() })?;
        op_index.push(idx);
        backwards |= e.src > e.dst;
    }
    if backwards {
        let mut data_adj = Matrix::zeros(k, k);
        for e in &cell.edges {
            data_adj.set(e.src, e.dst, 1.0);
        }
        validate_dag(&data_adj)?;
        return Err(Error::InvalidCell(
            "edges must point from lower to higher node index".into(),
        ));
    }

    let mut order: Vec<usize> = (0..cell.edges.len()).collect();
    order.sort_by_key(|&i| (cell.edges[i].dst, cell.edges[i].src));

    let n = k + cell.edges.len();
    let d = vocab.feature_dim();
    let mut adjacency = Matrix::zeros(n, n);
    let mut features = Matrix::zeros(n, d);
    let mut data_pos = vec![0usize; k];

    features.set(0, vocab.input_column(), 1.0);
    let mut next = 1;
    let mut cursor = 0;
    for v in 1..k {
        let first_op = next;
        while cursor < order.len() && cell.edges[order[cursor]].dst == v {
            let e = &cell.edges[order[cursor]];
            features.set(next, op_index[order[cursor]], 1.0);
            adjacency.set(data_pos[e.src], next, 1.0);
            cursor += 1;
            next += 1;
        }
        data_pos[v] = next;
        let token = if v + 1 == k {
            vocab.output_column()
        } else {
            vocab.internal_column()
        };
        features.set(next, token, 1.0);
        for x in first_op..next {
            adjacency.set(x, next, 1.0);
        }
        next += 1;
    }
    debug_assert_eq!(next, n);
    Ok(CellGraph {
        adjacency,
        features,
        real_nodes: n,
    })
}

/// Checks that a square 0/1 matrix describes a DAG.
///
/// Returns a topological order (smallest available index first), or
/// [`Error::Cycle`] naming one cycle and the edge that closes it.
pub fn validate_dag(adjacency: &Matrix) -> Result<Vec<usize>> {
    let (n, m) = adjacency.shape();
    if n != m {
        return Err(Error::dim("validate_dag", (n, m), (n, n)));
    }
    let mut indegree = vec![0usize; n];
    for r in 0..n {
        for (c, deg) in indegree.iter_mut().enumerate() {
            if adjacency.get(r, c) != 0.0 {
                *deg += 1;
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for c in 0..n {
            if adjacency.get(v, c) != 0.0 {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Every remaining node has a predecessor among the remaining nodes, so
    // walking predecessors must revisit a node.
    let placed: BTreeSet<usize> = order.iter().copied().collect();
    let start = (0..n).find(|i| !placed.contains(i)).expect("unplaced node exists");
    let mut path = vec![start];
    let mut pos = vec![usize::MAX; n];
    pos[start] = 0;
    let mut cur = start;
    loop {
        let pred = (0..n)
            .find(|&p| !placed.contains(&p) && adjacency.get(p, cur) != 0.0)
            .expect("remaining node has a remaining predecessor");
        if pos[pred] != usize::MAX {
            // path (walked backwards) from pred to cur closes the cycle
            let mut cycle: Vec<usize> = path[pos[pred]..].to_vec();
            cycle.reverse();
            let last = *cycle.last().expect("non-empty cycle");
            return Err(Error::Cycle {
                src: last,
                dst: cycle[0],
                cycle,
            });
        }
        pos[pred] = path.len();
        path.push(pred);
        cur = pred;
    }
}
