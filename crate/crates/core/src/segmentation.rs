//! Threshold-cut segmentation of feature maps and point clouds.
//!
//! A [`Segmenter`] builds the partition tree once and answers cuts and
//! single-mask queries at any granularity `t` without rebuilding.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::graph::kdtree::KdTree;
use crate::graph::{grid_graph, knn_graph, mode, DistanceMetric, FeatureMap, PointCloud};
use crate::hierarchy::BinaryPartitionTree;
use crate::mask::Mask;

pub const DEFAULT_MIN_PIXELS: usize = 20;
pub const DEFAULT_K_GRAPH: usize = 16;
pub const DEFAULT_N_KEEP: usize = 200;
pub const DEFAULT_K_QUERY: usize = 5;
pub const DEFAULT_D_MAX: f64 = 5e-3;

/// Segment id per pixel; 0 means unlabeled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::invalid(format!(
                "label map has {} entries, expected {height}x{width}",
                labels.len()
            )));
        }
        Ok(LabelMap { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    pub fn get(&self, pixel: usize) -> u32 {
        self.labels[pixel]
    }

    /// Largest id in use.
    pub fn segment_count(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn mask_of(&self, label: u32) -> Mask {
        Mask::from_fn(self.height, self.width, |r, c| {
            label != 0 && self.labels[r * self.width + c] == label
        })
    }

    /// One mask per nonzero id, skipping ids with no pixels.
    pub fn masks(&self) -> Vec<Mask> {
        (1..=self.segment_count())
            .map(|l| self.mask_of(l))
            .filter(|m| m.area() > 0)
            .collect()
    }

    /// Renumbers nonzero ids densely from 1 in order of first appearance.
    pub fn canonicalize(&mut self) {
        let mut map = HashMap::new();
        for l in self.labels.iter_mut().filter(|l| **l != 0) {
            let next = map.len() as u32 + 1;
            *l = *map.entry(*l).or_insert(next);
        }
    }
}

/// How small components are dropped after a cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suppression {
    /// Components with fewer members are labeled 0; survivors are numbered by
    /// smallest member.
    MinSize(usize),
    /// Only the `n` largest components are kept, numbered by decreasing size
    /// with ties to the smallest member.
    KeepLargest(usize),
}

impl Default for Suppression {
    fn default() -> Self {
        Suppression::MinSize(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Image { height: usize, width: usize },
    Cloud { len: usize },
}

impl Domain {
    fn grid(self) -> (usize, usize) {
        match self {
            Domain::Image { height, width } => (height, width),
            Domain::Cloud { len } => (1, len),
        }
    }
}

/// Result of a single-mask query. `suppressed` is set when the query point
/// lies in a component removed by suppression; the mask is then empty.
#[derive(Clone, Debug)]
pub struct Query {
    pub mask: Mask,
    pub suppressed: bool,
}

#[derive(Clone, Debug)]
pub struct Segmenter {
    domain: Domain,
    bpt: BinaryPartitionTree,
    suppression: Suppression,
}

impl Segmenter {
    pub fn from_feature_map(fmap: &FeatureMap, metric: DistanceMetric) -> Result<Self> {
        let g = grid_graph(fmap, metric)?;
        Ok(Segmenter {
            domain: Domain::Image {
                height: fmap.height(),
                width: fmap.width(),
            },
            bpt: BinaryPartitionTree::build(&g),
            suppression: Suppression::default(),
        })
    }

    pub fn from_point_cloud(cloud: &PointCloud, k_graph: usize, metric: DistanceMetric) -> Result<Self> {
        let g = knn_graph(cloud, k_graph, metric)?;
        Ok(Segmenter {
            domain: Domain::Cloud { len: cloud.len() },
            bpt: BinaryPartitionTree::build(&g),
            suppression: Suppression::default(),
        })
    }

    pub fn with_suppression(mut self, suppression: Suppression) -> Self {
        self.suppression = suppression;
        self
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn tree(&self) -> &BinaryPartitionTree {
        &self.bpt
    }

    pub fn suppression(&self) -> Suppression {
        self.suppression
    }

    fn check_t(t: f64) -> Result<()> {
        if t.is_nan() {
            return Err(Error::invalid("threshold must not be NaN"));
        }
        Ok(())
    }

    /// Labels of every domain element at granularity `t` after suppression.
    pub fn labels_at(&self, t: f64) -> Result<Vec<u32>> {
        Self::check_t(t)?;
        let rep = self.bpt.cut_regions(t);
        let ids = self.region_ids(&rep);
        Ok(rep.iter().map(|r| ids.get(r).copied().unwrap_or(0)).collect())
    }

    /// Output id of each surviving region representative.
    fn region_ids(&self, rep: &[usize]) -> HashMap<usize, u32> {
        // regions in order of smallest member
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        for &r in rep {
            if seen.insert(r) {
                order.push(r);
            }
        }
        let size = |r: usize| self.bpt.leaf_span(r);
        let kept: Vec<usize> = match self.suppression {
            Suppression::MinSize(min) => order.into_iter().filter(|&r| size(r) >= min).collect(),
            Suppression::KeepLargest(n) => {
                // stable sort keeps smallest-member order among equal sizes
                order.sort_by_key(|&r| std::cmp::Reverse(size(r)));
                order.truncate(n);
                order
            }
        };
        kept.into_iter().enumerate().map(|(i, r)| (r, i as u32 + 1)).collect()
    }

    fn region_survives(&self, region: usize, t: f64) -> bool {
        match self.suppression {
            Suppression::MinSize(min) => self.bpt.leaf_span(region) >= min,
            Suppression::KeepLargest(_) => {
                let rep = self.bpt.cut_regions(t);
                self.region_ids(&rep).contains_key(&region)
            }
        }
    }

    /// The component holding `id` at granularity `t`.
    pub fn query(&self, id: usize, t: f64) -> Result<Query> {
        Self::check_t(t)?;
        let (h, w) = self.domain.grid();
        let region = self.bpt.region_at(id, t)?;
        if !self.region_survives(region, t) {
            log::debug!("query at {id} hit a suppressed component at t = {t}");
            return Ok(Query {
                mask: Mask::empty(h, w),
                suppressed: true,
            });
        }
        Ok(Query {
            mask: Mask::from_pixels(h, w, self.bpt.leaves_under(region))?,
            suppressed: false,
        })
    }

    pub fn query_mask(&self, id: usize, t: f64) -> Result<Mask> {
        Ok(self.query(id, t)?.mask)
    }
}

/// Labels of the 4-connected grid cut at `t`; components below `min_pixels`
/// become 0.
pub fn segment_2d(fmap: &FeatureMap, t: f64, min_pixels: usize, metric: DistanceMetric) -> Result<LabelMap> {
    let seg = Segmenter::from_feature_map(fmap, metric)?.with_suppression(Suppression::MinSize(min_pixels));
    LabelMap::new(fmap.height(), fmap.width(), seg.labels_at(t)?)
}

/// Copy of `cloud` labeled with the `n_keep` largest components of the kNN
/// graph cut at `t`.
pub fn segment_3d(
    cloud: &PointCloud,
    t: f64,
    k_graph: usize,
    n_keep: usize,
    metric: DistanceMetric,
) -> Result<PointCloud> {
    let seg = Segmenter::from_point_cloud(cloud, k_graph, metric)?.with_suppression(Suppression::KeepLargest(n_keep));
    cloud.clone().with_labels(seg.labels_at(t)?)
}

/// Index over the labeled points of a cloud for pixel-wise label lookups.
#[derive(Clone, Debug)]
pub struct LabelTransfer {
    tree: KdTree<3>,
    labels: Vec<u32>,
    k_query: usize,
    d_max: f64,
}

impl LabelTransfer {
    /// Points labeled 0 are left out of the index.
    pub fn new(positions: &[[f64; 3]], labels: &[u32], k_query: usize, d_max: f64) -> Result<Self> {
        if positions.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} positions but {} labels",
                positions.len(),
                labels.len()
            )));
        }
        if k_query == 0 {
            return Err(Error::invalid("k_query must be positive"));
        }
        if d_max.is_nan() || d_max < 0.0 {
            return Err(Error::invalid(format!("d_max must be nonnegative, got {d_max}")));
        }
        let (points, labels): (Vec<_>, Vec<_>) = positions
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l != 0)
            .map(|(p, &l)| (*p, l))
            .unzip();
        Ok(LabelTransfer {
            tree: KdTree::new(points),
            labels,
            k_query,
            d_max,
        })
    }

    /// Mode of the labels of up to `k_query` nearest points within `d_max`.
    pub fn label_at(&self, point: &[f64; 3]) -> u32 {
        let near = self.tree.nearest_within(point, self.k_query, self.d_max * self.d_max, None);
        mode(near.into_iter().map(|(_, i)| self.labels[i])).unwrap_or(0)
    }

    /// Labels for every pixel of a view; invalid depth yields 0.
    pub fn render(&self, depth: &[f64], cam: &CameraModel) -> Result<LabelMap> {
        if depth.len() != cam.pixel_count() {
            return Err(Error::invalid(format!(
                "depth map has {} pixels, camera expects {}",
                depth.len(),
                cam.pixel_count()
            )));
        }
        let labels = depth
            .par_iter()
            .enumerate()
            .map(|(p, &d)| {
                if !(d > 0.0 && d.is_finite()) {
                    return 0;
                }
                let (u, v) = cam.pixel_uv(p);
                self.label_at(&cam.back_project(u, v, d))
            })
            .collect();
        LabelMap::new(cam.height, cam.width, labels)
    }
}

/// Renders the labels of `cloud` into a view given its depth map.
pub fn transfer_labels(
    cloud: &PointCloud,
    depth: &[f64],
    cam: &CameraModel,
    k_query: usize,
    d_max: f64,
) -> Result<LabelMap> {
    let labels = cloud
        .labels()
        .ok_or_else(|| Error::invalid("label transfer needs a labeled cloud"))?;
    LabelTransfer::new(cloud.positions(), labels, k_query, d_max)?.render(depth, cam)
}

/// A cloud segmenter observed through one view: each query cuts the cloud at
/// `t`, transfers the labels into the view and returns the queried pixel's
/// segment. Rendered cuts are cached per threshold.
#[derive(Debug)]
pub struct ProjectedSegmenter<'a> {
    segmenter: &'a Segmenter,
    positions: &'a [[f64; 3]],
    camera: CameraModel,
    depth: Vec<f64>,
    k_query: usize,
    d_max: f64,
    cache: Mutex<HashMap<u64, Arc<LabelMap>>>,
}

impl<'a> ProjectedSegmenter<'a> {
    pub fn new(
        segmenter: &'a Segmenter,
        cloud: &'a PointCloud,
        camera: CameraModel,
        depth: Vec<f64>,
        k_query: usize,
        d_max: f64,
    ) -> Result<Self> {
        if segmenter.domain() != (Domain::Cloud { len: cloud.len() }) {
            return Err(Error::invalid("segmenter was not built on this cloud"));
        }
        if depth.len() != camera.pixel_count() {
            return Err(Error::invalid("depth map does not match the camera"));
        }
        Ok(ProjectedSegmenter {
            segmenter,
            positions: cloud.positions(),
            camera,
            depth,
            k_query,
            d_max,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn labels_at(&self, t: f64) -> Result<Arc<LabelMap>> {
        let key = t.to_bits();
        if let Some(m) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(m.clone());
        }
        let labels = self.segmenter.labels_at(t)?;
        let map = Arc::new(
            LabelTransfer::new(self.positions, &labels, self.k_query, self.d_max)?.render(&self.depth, &self.camera)?,
        );
        self.cache.lock().expect("cache poisoned").insert(key, map.clone());
        Ok(map)
    }

    pub fn query(&self, pixel: usize, t: f64) -> Result<Query> {
        if pixel >= self.camera.pixel_count() {
            return Err(Error::OutOfRange {
                index: pixel,
                len: self.camera.pixel_count(),
            });
        }
        let map = self.labels_at(t)?;
        let label = map.get(pixel);
        Ok(Query {
            mask: map.mask_of(label),
            suppressed: label == 0,
        })
    }
}
