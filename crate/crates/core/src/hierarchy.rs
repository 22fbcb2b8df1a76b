//! Binary partition tree of a weighted graph.
//!
//! Edges are processed in nondecreasing weight order (stable on the edge
//! list); every edge that joins two components creates an internal node whose
//! altitude is the edge weight. The altitude of the lowest common ancestor of
//! two leaves is their minimax path distance, i.e. the subdominant
//! ultrametric of the graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, WeightedGraph};
use crate::unionfind::UnionFind;

/// Largest graph accepted by [`brute_force_ultrametric`].
pub const BRUTE_FORCE_LIMIT: usize = 256;

#[derive(Clone, Debug)]
pub struct BinaryPartitionTree {
    leaf_count: usize,
    /// Parent of every tree node; roots are their own parent.
    parent: Vec<usize>,
    altitude: Vec<f64>,
    /// Children of internal node `leaf_count + i`.
    children: Vec<[usize; 2]>,
    /// Graph edge that created internal node `leaf_count + i`, and its id.
    merge_edges: Vec<(usize, Edge)>,
    leaf_span: Vec<usize>,
    depth: Vec<u32>,
    /// `ancestors[k][v]` is the 2^k-th ancestor of `v`, saturating at roots.
    ancestors: Vec<Vec<u32>>,
}

/// One node of the exported dendrogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DendrogramNode {
    pub id: usize,
    pub parent: usize,
    pub altitude: f64,
    pub leaf: bool,
}

impl BinaryPartitionTree {
    pub fn build(g: &WeightedGraph) -> Self {
        let n = g.node_count();
        let mut order: Vec<usize> = (0..g.edge_count()).collect();
        order.sort_by(|&a, &b| g.edges()[a].w.total_cmp(&g.edges()[b].w));

        let mut uf = UnionFind::new(n);
        // tree node currently representing each union-find root
        let mut top: Vec<usize> = (0..n).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        let mut altitude = vec![0.0; n];
        let mut children = Vec::new();
        let mut merge_edges = Vec::new();
        let mut leaf_span = vec![1; n];

        for id in order {
            let e = g.edges()[id];
            let (ru, rv) = (uf.find(e.u), uf.find(e.v));
            if ru == rv {
                continue;
            }
            let node = parent.len();
            let (a, b) = (top[ru], top[rv]);
            parent[a] = node;
            parent[b] = node;
            parent.push(node);
            altitude.push(e.w);
            children.push([a, b]);
            merge_edges.push((id, e));
            leaf_span.push(leaf_span[a] + leaf_span[b]);
            let r = uf.union(ru, rv).expect("distinct roots");
            top[r] = node;
        }

        let total = parent.len();
        // parents always have larger ids than their children
        let mut depth = vec![0u32; total];
        for v in (0..total).rev() {
            if parent[v] != v {
                depth[v] = depth[parent[v]] + 1;
            }
        }
        let max_depth = depth.iter().copied().max().unwrap_or(0) as usize;
        let levels = usize::BITS as usize - max_depth.leading_zeros() as usize;
        let mut ancestors: Vec<Vec<u32>> = Vec::with_capacity(levels.max(1));
        ancestors.push(parent.iter().map(|&p| p as u32).collect());
        for k in 1..levels.max(1) {
            let prev = &ancestors[k - 1];
            let next = (0..total).map(|v| prev[prev[v] as usize]).collect();
            ancestors.push(next);
        }

        BinaryPartitionTree {
            leaf_count: n,
            parent,
            altitude,
            children,
            merge_edges,
            leaf_span,
            depth,
            ancestors,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Leaves plus internal nodes.
    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn internal_count(&self) -> usize {
        self.children.len()
    }

    pub fn parent(&self, node: usize) -> usize {
        self.parent[node]
    }

    pub fn altitude(&self, node: usize) -> f64 {
        self.altitude[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.leaf_count
    }

    pub fn children(&self, node: usize) -> Option<[usize; 2]> {
        node.checked_sub(self.leaf_count).map(|i| self.children[i])
    }

    /// Number of leaves below `node`.
    pub fn leaf_span(&self, node: usize) -> usize {
        self.leaf_span[node]
    }

    /// Graph edge recorded when internal `node` was created.
    pub fn merge_edge(&self, node: usize) -> Option<(usize, Edge)> {
        node.checked_sub(self.leaf_count).map(|i| self.merge_edges[i])
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&v| self.parent[v] == v).collect()
    }

    fn check_leaf(&self, i: usize) -> Result<()> {
        if i >= self.leaf_count {
            return Err(Error::OutOfRange {
                index: i,
                len: self.leaf_count,
            });
        }
        Ok(())
    }

    fn ancestor_at_depth(&self, mut v: usize, target: u32) -> usize {
        let mut climb = self.depth[v] - target;
        let mut k = 0;
        while climb > 0 {
            if climb & 1 == 1 {
                v = self.ancestors[k][v] as usize;
            }
            climb >>= 1;
            k += 1;
        }
        v
    }

    /// Lowest common ancestor of two tree nodes, `None` across components.
    pub fn lca(&self, a: usize, b: usize) -> Option<usize> {
        let (mut a, mut b) = (a, b);
        if self.depth[a] > self.depth[b] {
            a = self.ancestor_at_depth(a, self.depth[b]);
        } else if self.depth[b] > self.depth[a] {
            b = self.ancestor_at_depth(b, self.depth[a]);
        }
        if a == b {
            return Some(a);
        }
        for k in (0..self.ancestors.len()).rev() {
            let (pa, pb) = (self.ancestors[k][a], self.ancestors[k][b]);
            if pa != pb {
                a = pa as usize;
                b = pb as usize;
            }
        }
        let (pa, pb) = (self.parent[a], self.parent[b]);
        (pa == pb && pa != a).then_some(pa)
    }

    /// Minimax path distance between leaves `i` and `j`.
    ///
    /// Returns `f64::INFINITY` when they lie in different components.
    pub fn ultrametric_distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_leaf(i)?;
        self.check_leaf(j)?;
        if i == j {
            return Ok(0.0);
        }
        Ok(self
            .lca(i, j)
            .map_or(f64::INFINITY, |node| self.altitude[node]))
    }

    /// The bottleneck edge on the minimax path between leaves `i` and `j`.
    pub fn active_edge(&self, i: usize, j: usize) -> Result<(usize, Edge)> {
        self.check_leaf(i)?;
        self.check_leaf(j)?;
        if i == j {
            return Err(Error::invalid(format!("no active edge between node {i} and itself")));
        }
        let node = self.lca(i, j).ok_or(Error::Disconnected(i, j))?;
        Ok(self.merge_edges[node - self.leaf_count])
    }

    /// Highest ancestor of leaf `i` whose altitude is at most `t`: the region
    /// containing `i` in the cut at `t`.
    pub fn region_at(&self, i: usize, t: f64) -> Result<usize> {
        self.check_leaf(i)?;
        let mut v = i;
        for k in (0..self.ancestors.len()).rev() {
            let a = self.ancestors[k][v] as usize;
            if a != v && self.altitude[a] <= t {
                v = a;
            }
        }
        let p = self.parent[v];
        if p != v && self.altitude[p] <= t {
            v = p;
        }
        Ok(v)
    }

    /// Leaves below `node`, ascending.
    pub fn leaves_under(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.leaf_span[node]);
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            match self.children(v) {
                None => out.push(v),
                Some([a, b]) => {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Region representative (tree node) of every leaf in the cut at `t`.
    pub fn cut_regions(&self, t: f64) -> Vec<usize> {
        let total = self.node_count();
        let mut rep = vec![0usize; total];
        for v in (0..total).rev() {
            let p = self.parent[v];
            rep[v] = if p != v && self.altitude[p] <= t { rep[p] } else { v };
        }
        rep.truncate(self.leaf_count);
        rep
    }

    /// Partition of the leaves where `i` and `j` share a label iff their
    /// ultrametric distance is at most `t`. Labels start at 0 and follow the
    /// smallest leaf id of each region.
    pub fn threshold_cut(&self, t: f64) -> Vec<u32> {
        let rep = self.cut_regions(t);
        let mut label_of = vec![u32::MAX; self.node_count()];
        let mut next = 0;
        rep.into_iter()
            .map(|r| {
                if label_of[r] == u32::MAX {
                    label_of[r] = next;
                    next += 1;
                }
                label_of[r]
            })
            .collect()
    }

    pub fn to_dendrogram(&self) -> Vec<DendrogramNode> {
        (0..self.node_count())
            .map(|id| DendrogramNode {
                id,
                parent: self.parent[id],
                altitude: self.altitude[id],
                leaf: self.is_leaf(id),
            })
            .collect()
    }
}

/// All-pairs minimax distances by the O(n³) recurrence
/// `d[i][j] = min(d[i][j], max(d[i][k], d[k][j]))`.
pub fn brute_force_ultrametric(g: &WeightedGraph) -> Result<Vec<Vec<f64>>> {
    let n = g.node_count();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            nodes: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in g.edges() {
        let w = d[e.u][e.v].min(e.w);
        d[e.u][e.v] = w;
        d[e.v][e.u] = w;
    }
    for k in 0..n {
        let row_k = d[k].clone();
        for row in d.iter_mut() {
            let dik = row[k];
            if dik == f64::INFINITY {
                continue;
            }
            for (dij, &dkj) in row.iter_mut().zip(&row_k) {
                let via = dik.max(dkj);
                if via < *dij {
                    *dij = via;
                }
            }
        }
    }
    Ok(d)
}
