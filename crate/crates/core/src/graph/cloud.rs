use std::collections::HashMap;

use crate::error::{Error, Result};

use super::kdtree::KdTree;
use super::{symmetrize, DistanceMetric, WeightedGraph};

/// Featurized 3D points with optional per-point segment labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    positions: Vec<[f64; 3]>,
    dim: usize,
    features: Vec<f64>,
    labels: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(positions: Vec<[f64; 3]>, dim: usize, features: Vec<f64>) -> Result<Self> {
        if features.len() != positions.len() * dim {
            return Err(Error::invalid(format!(
                "{} points with dim {dim} need {} feature values, got {}",
                positions.len(),
                positions.len() * dim,
                features.len()
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite point coordinate"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite point feature"));
        }
        Ok(PointCloud {
            positions,
            dim,
            features,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    fn select(&self, keep: &[usize]) -> PointCloud {
        PointCloud {
            positions: keep.iter().map(|&i| self.positions[i]).collect(),
            dim: self.dim,
            features: keep.iter().flat_map(|&i| self.feature(i).iter().copied()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| keep.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Graph linking every point to its `k` nearest neighbors by 3D position,
/// symmetrized, weighted by feature distance.
///
/// `k` larger than the cloud allows is clamped to `len - 1` with a warning.
pub fn knn_graph(cloud: &PointCloud, k: usize, metric: DistanceMetric) -> Result<WeightedGraph> {
    if cloud.is_empty() {
        return Err(Error::invalid("empty point cloud"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let n = cloud.len();
    if n < 2 {
        return Err(Error::invalid("need at least 2 points for a neighbor graph"));
    }
    let k = if k >= n {
        log::warn!("k = {k} exceeds the {n}-point cloud; using {}", n - 1);
        n - 1
    } else {
        k
    };
    for i in 0..n {
        metric.check(cloud.feature(i), &format!("point {i}"))?;
    }
    let tree = KdTree::new(cloud.positions.clone());
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            tree.nearest(&cloud.positions[i], k, Some(i))
                .into_iter()
                .map(|(_, j)| j)
                .collect()
        })
        .collect();
    let edges = symmetrize(&neighbors, |u, v| metric.distance(cloud.feature(u), cloud.feature(v)));
    WeightedGraph::new(n, edges)
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// Cells are `floor(coord / voxel)` per axis; outputs appear in order of each
/// cell's first point. Labels, when present, take the cell's most frequent
/// label (smallest id on ties).
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::invalid(format!("voxel size must be positive, got {voxel}")));
    }
    let mut cell_of: HashMap<[i64; 3], usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        let key = p.map(|c| (c / voxel).floor() as i64);
        let slot = *cell_of.entry(key).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[slot].push(i);
    }
    let dim = cloud.dim;
    let mut positions = Vec::with_capacity(members.len());
    let mut features = Vec::with_capacity(members.len() * dim);
    let mut labels = cloud.labels.as_ref().map(|_| Vec::with_capacity(members.len()));
    for idx in &members {
        let m = idx.len() as f64;
        let mut pos = [0.0; 3];
        let mut feat = vec![0.0; dim];
        for &i in idx {
            for (p, x) in pos.iter_mut().zip(cloud.positions[i]) {
                *p += x;
            }
            for (f, v) in feat.iter_mut().zip(cloud.feature(i)) {
                *f += v;
            }
        }
        positions.push(pos.map(|v| v / m));
        features.extend(feat.into_iter().map(|v| v / m));
        if let (Some(out), Some(src)) = (labels.as_mut(), cloud.labels.as_ref()) {
            out.push(mode(idx.iter().map(|&i| src[i])).unwrap_or(0));
        }
    }
    Ok(PointCloud {
        positions,
        dim,
        features,
        labels,
    })
}

/// Keeps points with at least `min_neighbors` other points within `radius`.
pub fn radius_outlier_filter(cloud: &PointCloud, radius: f64, min_neighbors: usize) -> Result<PointCloud> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("outlier radius must be positive, got {radius}")));
    }
    if min_neighbors == 0 {
        return Ok(cloud.clone());
    }
    let tree = KdTree::new(cloud.positions.clone());
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| {
            let near = tree.within_radius(&cloud.positions[i], radius);
            near.len() > min_neighbors
        })
        .collect();
    Ok(cloud.select(&keep))
}

/// Most frequent value; ties go to the smallest.
pub(crate) fn mode(values: impl IntoIterator<Item = u32>) -> Option<u32> {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(v, _)| v)
}
