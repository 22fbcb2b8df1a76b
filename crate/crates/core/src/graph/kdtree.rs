//! Exact k-nearest-neighbor index over fixed-dimension points.
//!
//! Neighbors are ordered by squared Euclidean distance, then by point index,
//! so equal-distance candidates always resolve toward the lower index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, Debug)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

/// Static balanced kd-tree stored as a permutation of point indices.
#[derive(Clone, Debug)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let n = points.len();
        let mut tree = KdTree {
            points,
            order: (0..n).collect(),
            axes: vec![0; n],
        };
        tree.build(0, n);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64; D] {
        &self.points[index]
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= 1 {
            return;
        }
        let axis = self.widest_axis(lo, hi);
        let mid = lo + (hi - lo) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        self.axes[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    fn widest_axis(&self, lo: usize, hi: usize) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for axis in 0..D {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[lo..hi] {
                let v = self.points[i][axis];
                min = min.min(v);
                max = max.max(v);
            }
            if max - min > best.1 {
                best = (axis, max - min);
            }
        }
        best.0
    }

    /// Up to `k` nearest points to `query` within squared radius `max_dist2`,
    /// skipping `exclude`. Returned as `(squared distance, index)` ascending.
    pub fn nearest_within(
        &self,
        query: &[f64; D],
        k: usize,
        max_dist2: f64,
        exclude: Option<usize>,
    ) -> Vec<(f64, usize)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, self.len(), query, k, max_dist2, exclude, &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| (c.dist2, c.index))
            .collect()
    }

    /// Up to `k` nearest points to `query`, skipping `exclude`.
    pub fn nearest(&self, query: &[f64; D], k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        self.nearest_within(query, k, f64::INFINITY, exclude)
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        lo: usize,
        hi: usize,
        query: &[f64; D],
        k: usize,
        max_dist2: f64,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let index = self.order[mid];
        let p = &self.points[index];
        if Some(index) != exclude {
            let dist2 = dist2(p, query);
            if dist2 <= max_dist2 {
                let cand = Candidate { dist2, index };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        if hi - lo == 1 {
            return;
        }
        let axis = self.axes[mid] as usize;
        let diff = query[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, query, k, max_dist2, exclude, heap);
        let plane2 = diff * diff;
        let bound = if heap.len() < k {
            max_dist2
        } else {
            heap.peek().unwrap().dist2.min(max_dist2)
        };
        if plane2 <= bound {
            self.search(far.0, far.1, query, k, max_dist2, exclude, heap);
        }
    }

    /// All points within `radius` (inclusive) of `query`, ascending by index.
    pub fn within_radius(&self, query: &[f64; D], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_radius(0, self.len(), query, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn collect_radius(&self, lo: usize, hi: usize, query: &[f64; D], r2: f64, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let index = self.order[mid];
        let p = &self.points[index];
        if dist2(p, query) <= r2 {
            out.push(index);
        }
        if hi - lo == 1 {
            return;
        }
        let axis = self.axes[mid] as usize;
        let diff = query[axis] - p[axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.collect_radius(lo, mid, query, r2, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.collect_radius(mid + 1, hi, query, r2, out);
        }
    }
}

pub(crate) fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[[f64; 3]], q: &[f64; 3], k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, p)| (dist2(p, q), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 7, 64, 200] {
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.random(), rng.random(), rng.random()])
                .collect();
            let tree = KdTree::new(pts.clone());
            for i in 0..n {
                for k in [1, 3, 10] {
                    assert_eq!(tree.nearest(&pts[i], k, Some(i)), brute(&pts, &pts[i], k, Some(i)));
                }
            }
        }
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        // Grid with many equal distances.
        let mut pts = Vec::new();
        for x in 0..5 {
            for y in 0..5 {
                pts.push([x as f64, y as f64, 0.0]);
            }
        }
        pts.push([2.0, 2.0, 0.0]);
        let tree = KdTree::new(pts.clone());
        for i in 0..pts.len() {
            for k in 1..9 {
                assert_eq!(tree.nearest(&pts[i], k, Some(i)), brute(&pts, &pts[i], k, Some(i)));
            }
        }
    }

    #[test]
    fn radius_query_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 2]> = (0..150).map(|_| [rng.random(), rng.random()]).collect();
        let tree = KdTree::new(pts.clone());
        for q in pts.iter().take(30) {
            let expect: Vec<usize> = (0..pts.len())
                .filter(|&j| dist2(&pts[j], q) <= 0.1 * 0.1)
                .collect();
            assert_eq!(tree.within_radius(q, 0.1), expect);
        }
    }
}
