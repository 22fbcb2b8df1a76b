//! Edge-weighted graphs over pixel grids and point clouds.
//!
//! Every constructor emits a loop-free, duplicate-free, undirected edge list
//! whose weights are feature distances under a [`DistanceMetric`].

mod cloud;
pub mod kdtree;

pub use cloud::{knn_graph, radius_outlier_filter, voxel_downsample, PointCloud};
pub(crate) use cloud::mode;

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unionfind::UnionFind;
use kdtree::KdTree;

/// Dense `height × width × dim` feature image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(Error::invalid(format!(
                "feature map dimensions must be positive, got {height}x{width}x{dim}"
            )));
        }
        if data.len() != height * width * dim {
            return Err(Error::invalid(format!(
                "feature map data has {} values, expected {}",
                data.len(),
                height * width * dim
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite feature value at offset {i}")));
        }
        Ok(FeatureMap {
            height,
            width,
            dim,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Feature vector of the pixel with row-major index `pixel`.
    pub fn feature(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.dim..(pixel + 1) * self.dim]
    }

    pub fn feature_mut(&mut self, pixel: usize) -> &mut [f64] {
        &mut self.data[pixel * self.dim..(pixel + 1) * self.dim]
    }

    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        self.feature(row * self.width + col)
    }
}

/// Distance between two feature vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// One minus cosine similarity.
    Cosine,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Cosine => {
                let (dot, na, nb) = cosine_parts(a, b);
                1.0 - dot / (na * nb)
            }
        }
    }

    /// Distance plus its gradient with respect to `a` and to `b`.
    ///
    /// The Euclidean gradient is zero when `a == b`.
    pub fn distance_with_grad(self, a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        match self {
            DistanceMetric::Euclidean => {
                let d = self.distance(a, b);
                if d == 0.0 {
                    return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
                }
                let ga: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) / d).collect();
                let gb = ga.iter().map(|g| -g).collect();
                (d, ga, gb)
            }
            DistanceMetric::Cosine => {
                let (dot, na, nb) = cosine_parts(a, b);
                let sim = dot / (na * nb);
                // d(1 - a.b/(|a||b|))/da = -(b/(|a||b|) - sim * a/|a|^2)
                let ga = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| -(y / (na * nb) - sim * x / (na * na)))
                    .collect();
                let gb = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| -(x / (na * nb) - sim * y / (nb * nb)))
                    .collect();
                (1.0 - sim, ga, gb)
            }
        }
    }

    fn check(self, v: &[f64], what: &str) -> Result<()> {
        if self == DistanceMetric::Cosine && v.iter().all(|x| *x == 0.0) {
            return Err(Error::invalid(format!(
                "cosine distance needs nonzero feature vectors; {what} is zero"
            )));
        }
        Ok(())
    }
}

fn cosine_parts(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let dot = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot, na, nb)
}

/// Undirected weighted edge. Constructors store `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    node_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl WeightedGraph {
    /// Validates and indexes an edge list.
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); node_count];
        for (id, e) in edges.iter().enumerate() {
            if e.u >= node_count || e.v >= node_count {
                return Err(Error::OutOfRange {
                    index: e.u.max(e.v),
                    len: node_count,
                });
            }
            if e.u == e.v {
                return Err(Error::invalid(format!("self loop on node {}", e.u)));
            }
            if !e.w.is_finite() || e.w < 0.0 {
                return Err(Error::invalid(format!(
                    "edge {}-{} has invalid weight {}",
                    e.u, e.v, e.w
                )));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(Error::invalid(format!("duplicate edge {}-{}", e.u, e.v)));
            }
            adjacency[e.u].push(id);
            adjacency[e.v].push(id);
        }
        Ok(WeightedGraph {
            node_count,
            edges,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Ids of the edges incident to `node`.
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }
}

/// A graph whose nodes are pixels of a feature map.
#[derive(Clone, Debug)]
pub struct PixelGraph {
    pub graph: WeightedGraph,
    /// Row-major pixel index of each node.
    pub pixels: Vec<usize>,
    pub metric: DistanceMetric,
}

impl PixelGraph {
    /// Node carrying `pixel`, if it was sampled.
    pub fn node_of(&self, pixel: usize) -> Option<usize> {
        self.pixels.iter().position(|&p| p == pixel)
    }

    /// Pixel → node lookup table for an image of `pixel_count` pixels.
    pub fn node_table(&self, pixel_count: usize) -> Vec<Option<usize>> {
        let mut table = vec![None; pixel_count];
        for (node, &p) in self.pixels.iter().enumerate() {
            if p < pixel_count {
                table[p] = Some(node);
            }
        }
        table
    }
}

/// How neighbors are chosen for [`sampled_pixel_graph_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NeighborSpace {
    /// Nearest in image-plane (row, col) distance.
    #[default]
    Image,
    /// Nearest in feature distance.
    Feature,
}

/// 4-connected grid graph, one node per pixel in row-major order.
pub fn grid_graph(fmap: &FeatureMap, metric: DistanceMetric) -> Result<WeightedGraph> {
    let (h, w) = (fmap.height(), fmap.width());
    if h * w == 0 {
        return Err(Error::invalid("empty feature map"));
    }
    for p in 0..h * w {
        metric.check(fmap.feature(p), &format!("pixel {p}"))?;
    }
    let mut edges = Vec::with_capacity(h * w.saturating_sub(1) + h.saturating_sub(1) * w);
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            if c + 1 < w {
                edges.push(Edge {
                    u: p,
                    v: p + 1,
                    w: metric.distance(fmap.feature(p), fmap.feature(p + 1)),
                });
            }
            if r + 1 < h {
                edges.push(Edge {
                    u: p,
                    v: p + w,
                    w: metric.distance(fmap.feature(p), fmap.feature(p + w)),
                });
            }
        }
    }
    WeightedGraph::new(h * w, edges)
}

/// Draws `count` distinct pixel ids, always including `required`.
///
/// The result is sorted and depends only on the arguments.
pub fn sample_pixel_ids(pixel_count: usize, count: usize, required: &[usize], seed: u64) -> Vec<usize> {
    let mut chosen: Vec<usize> = required.iter().copied().filter(|&p| p < pixel_count).collect();
    chosen.sort_unstable();
    chosen.dedup();
    let target = count.min(pixel_count);
    if chosen.len() < target {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taken: HashSet<usize> = chosen.iter().copied().collect();
        let extra: Vec<usize> = sample(&mut rng, pixel_count, target)
            .into_iter()
            .filter(|p| !taken.contains(p))
            .take(target - chosen.len())
            .collect();
        chosen.extend(extra);
        chosen.sort_unstable();
    }
    chosen
}

/// Training graph over a subset of pixels, each linked to its `k` nearest
/// sampled pixels in the image plane.
pub fn sampled_pixel_graph(
    fmap: &FeatureMap,
    pixel_ids: &[usize],
    k: usize,
    metric: DistanceMetric,
) -> Result<PixelGraph> {
    sampled_pixel_graph_with(fmap, pixel_ids, k, metric, NeighborSpace::Image)
}

pub fn sampled_pixel_graph_with(
    fmap: &FeatureMap,
    pixel_ids: &[usize],
    k: usize,
    metric: DistanceMetric,
    space: NeighborSpace,
) -> Result<PixelGraph> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if pixel_ids.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 sampled pixels, got {}",
            pixel_ids.len()
        )));
    }
    let n_pix = fmap.pixel_count();
    let mut seen = HashSet::with_capacity(pixel_ids.len());
    for &p in pixel_ids {
        if p >= n_pix {
            return Err(Error::OutOfRange { index: p, len: n_pix });
        }
        if !seen.insert(p) {
            return Err(Error::invalid(format!("pixel {p} sampled twice")));
        }
        metric.check(fmap.feature(p), &format!("pixel {p}"))?;
    }
    let n = pixel_ids.len();
    let k = k.min(n - 1);
    let neighbors: Vec<Vec<usize>> = match space {
        NeighborSpace::Image => {
            let w = fmap.width();
            let pts: Vec<[f64; 2]> = pixel_ids
                .iter()
                .map(|&p| [(p / w) as f64, (p % w) as f64])
                .collect();
            let tree = KdTree::new(pts.clone());
            (0..n)
                .map(|i| tree.nearest(&pts[i], k, Some(i)).into_iter().map(|(_, j)| j).collect())
                .collect()
        }
        NeighborSpace::Feature => (0..n)
            .map(|i| {
                let fi = fmap.feature(pixel_ids[i]);
                let mut cand: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (metric.distance(fi, fmap.feature(pixel_ids[j])), j))
                    .collect();
                cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cand.truncate(k);
                cand.into_iter().map(|(_, j)| j).collect()
            })
            .collect(),
    };
    let edges = symmetrize(&neighbors, |u, v| {
        metric.distance(fmap.feature(pixel_ids[u]), fmap.feature(pixel_ids[v]))
    });
    Ok(PixelGraph {
        graph: WeightedGraph::new(n, edges)?,
        pixels: pixel_ids.to_vec(),
        metric,
    })
}

/// Undirected union of directed neighbor lists, sorted by `(u, v)`.
pub(crate) fn symmetrize(neighbors: &[Vec<usize>], weight: impl Fn(usize, usize) -> f64) -> Vec<Edge> {
    let mut pairs: Vec<(usize, usize)> = neighbors
        .iter()
        .enumerate()
        .flat_map(|(i, ns)| ns.iter().map(move |&j| (i.min(j), i.max(j))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    pairs
        .into_iter()
        .map(|(u, v)| Edge { u, v, w: weight(u, v) })
        .collect()
}

/// Connected components of the subgraph keeping edges with `w <= t`.
///
/// Labels start at 0 and are numbered by each component's smallest node id.
pub fn components_under_threshold(g: &WeightedGraph, t: f64) -> Vec<u32> {
    let mut uf = UnionFind::new(g.node_count());
    for e in g.edges() {
        if e.w <= t {
            uf.union(e.u, e.v);
        }
    }
    uf.canonical_labels()
}
