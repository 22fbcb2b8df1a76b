//! Fixtures and finite-difference oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umseg::graph::{DistanceMetric, Edge, FeatureMap, WeightedGraph};
use umseg::hierarchy::BinaryPartitionTree;
use umseg::losses::{
    depth_continuity_loss, feature_loss, training_graph, ContrastiveConfig, DepthPatchBatch, PATCH,
};
use umseg::mask::Mask;
use umseg::masktree::{build_mask_tree, sample_pairs, MaskSet, PairBatch, DEFAULT_P_IN, DEFAULT_P_IOU};

/// Random spanning tree plus `extra` random chords. With `ties` the weights
/// come from a handful of values so equal weights are common.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize, ties: bool) -> WeightedGraph {
    let weight = |rng: &mut ChaCha8Rng| {
        if ties {
            rng.random_range(0..5) as f64 * 0.25
        } else {
            rng.random::<f64>()
        }
    };
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        seen.insert((u, v));
        edges.push(Edge { u, v, w: weight(rng) });
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (u, v) = (a.min(b), a.max(b));
        if u != v && seen.insert((u, v)) {
            edges.push(Edge { u, v, w: weight(rng) });
        }
    }
    WeightedGraph::new(n, edges).unwrap()
}

/// Minimax distances by relaxing `d[i][j] = min over paths of max edge` with
/// a Dijkstra-style bottleneck search from every source.
pub fn bottleneck_oracle(g: &WeightedGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut adj = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.u].push((e.v, e.w));
        adj[e.v].push((e.u, e.w));
    }
    (0..n)
        .map(|s| {
            let mut best = vec![f64::INFINITY; n];
            let mut done = vec![false; n];
            best[s] = 0.0;
            for _ in 0..n {
                let Some(u) = (0..n).filter(|&v| !done[v]).min_by(|&a, &b| best[a].total_cmp(&best[b])) else {
                    break;
                };
                if best[u].is_infinite() {
                    break;
                }
                done[u] = true;
                for &(v, w) in &adj[u] {
                    let cand = best[u].max(w);
                    if cand < best[v] {
                        best[v] = cand;
                    }
                }
            }
            best
        })
        .collect()
}

/// Same-partition test: two labelings induce the same partition.
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    a.iter().zip(b).all(|(x, y)| *ab.entry(*x).or_insert(*y) == *y && *ba.entry(*y).or_insert(*x) == *x)
}

pub fn random_feature_map(rng: &mut ChaCha8Rng, h: usize, w: usize, dim: usize) -> FeatureMap {
    let data = (0..h * w * dim).map(|_| rng.random_range(0.1..1.0)).collect();
    FeatureMap::new(h, w, dim, data).unwrap()
}

pub fn rect(h: usize, w: usize, r0: usize, r1: usize, c0: usize, c1: usize) -> Mask {
    Mask::from_fn(h, w, |r, c| (r0..r1).contains(&r) && (c0..c1).contains(&c))
}

/// A small scene of nested rectangles: two siblings inside a parent.
pub fn nested_masks(h: usize, w: usize) -> MaskSet {
    let masks = vec![
        rect(h, w, 0, h, 0, w - 1),
        rect(h, w, 0, h / 2, 0, w / 2),
        rect(h, w, h / 2, h, 0, w / 2),
        rect(h, w, 0, h / 2, 0, w / 4),
    ];
    MaskSet::new("fixture", h, w, masks).unwrap()
}

pub struct FeatureFixture {
    pub fmap: FeatureMap,
    pub batch: PairBatch,
    pub samples: usize,
    pub k: usize,
    pub metric: DistanceMetric,
    pub seed: u64,
}

pub const FD_STEP: f64 = 1e-6;
/// Fixtures whose sorted graph weights come closer than this are rejected:
/// a perturbation could reorder them and switch an active edge.
pub const TIE_GAP: f64 = 1e-4;

impl FeatureFixture {
    pub fn new(seed: u64, metric: DistanceMetric) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (6, 8);
        let fmap = random_feature_map(&mut rng, h, w, 3);
        let tree = build_mask_tree(&nested_masks(h, w), DEFAULT_P_IN, DEFAULT_P_IOU);
        let batch = sample_pairs(&tree, 2, seed).unwrap();
        FeatureFixture {
            fmap,
            batch,
            samples: 30,
            k: 4,
            metric,
            seed,
        }
    }

    pub fn evaluate(&self, fmap: &FeatureMap, cfg: &ContrastiveConfig) -> (f64, Vec<f64>) {
        let g = training_graph(fmap, &self.batch, self.samples, self.k, self.metric, self.seed).unwrap();
        let bpt = BinaryPartitionTree::build(&g.graph);
        let (r, _) = feature_loss(fmap, &g, &bpt, &self.batch, cfg).unwrap();
        (r.value, r.gradient)
    }

    /// False when two graph weights nearly tie or a pair of features nearly
    /// coincide, where the loss is not differentiable.
    pub fn well_separated(&self) -> bool {
        let g = training_graph(&self.fmap, &self.batch, self.samples, self.k, self.metric, self.seed).unwrap();
        let mut ws: Vec<f64> = g.graph.edges().iter().map(|e| e.w).collect();
        ws.sort_by(f64::total_cmp);
        ws.windows(2).all(|p| p[1] - p[0] > TIE_GAP) && ws.first().is_some_and(|&w| w > TIE_GAP)
    }

    /// `max |fd − analytic| / max |analytic|` over every feature coordinate.
    pub fn gradient_error(&self, cfg: &ContrastiveConfig) -> f64 {
        let (_, analytic) = self.evaluate(&self.fmap, cfg);
        let mut worst: f64 = 0.0;
        for i in 0..analytic.len() {
            let mut plus = self.fmap.clone();
            plus.data_mut()[i] += FD_STEP;
            let mut minus = self.fmap.clone();
            minus.data_mut()[i] -= FD_STEP;
            let fd = (self.evaluate(&plus, cfg).0 - self.evaluate(&minus, cfg).0) / (2.0 * FD_STEP);
            worst = worst.max((fd - analytic[i]).abs());
        }
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        worst / scale.max(1e-12)
    }
}

/// Random 4×4 depth patches with hinge, maximum and sign margins checked.
pub fn depth_fixture(seed: u64) -> Option<DepthPatchBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patches: Vec<[f64; 16]> = (0..4)
        .map(|_| std::array::from_fn(|_| rng.random_range(1.0..2.0)))
        .collect();
    let batch = DepthPatchBatch {
        patches,
        delta_theta: 0.5,
        threshold: 2.0,
    };
    let margin = 1e-3;
    for p in &batch.patches {
        for line in 0..PATCH {
            let row: [f64; 4] = std::array::from_fn(|k| p[line * PATCH + k]);
            let col: [f64; 4] = std::array::from_fn(|k| p[k * PATCH + line]);
            for d in [row, col] {
                let delta = d[0] - 3.0 * d[1] + 3.0 * d[2] - d[3];
                let mut sorted = d;
                sorted.sort_by(f64::total_cmp);
                let m = sorted[3];
                let ratio = delta.abs() / (m * batch.delta_theta).powi(3);
                if delta.abs() < margin || sorted[3] - sorted[2] < margin || (ratio - batch.threshold).abs() < margin {
                    return None;
                }
            }
        }
    }
    Some(batch)
}

pub fn depth_gradient_error(batch: &DepthPatchBatch) -> f64 {
    let analytic = depth_continuity_loss(batch).unwrap().gradient;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (pi, g) in analytic.iter().enumerate() {
        for k in 0..16 {
            let eval = |delta: f64| {
                let mut b = batch.clone();
                b.patches[pi][k] += delta;
                depth_continuity_loss(&b).unwrap().value
            };
            let fd = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max((fd - g[k]).abs());
            scale = scale.max(g[k].abs());
        }
    }
    worst / scale.max(1e-12)
}
