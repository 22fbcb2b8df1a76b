//! Contrastive feature losses over ultrametric and Euclidean distances, and
//! the depth-continuity regularizer, with hand-derived gradients.
//!
//! The two-term contrastive loss reduces algebraically to
//! `s · (d_pos − d_neg) / τ`, where `s = +1` in the corrected form (positive
//! pairs are pulled together) and `s = −1` when the exponent signs are taken
//! literally. The softplus variant keeps only the cross-entropy term,
//! `log(1 + exp(s · (d_pos − d_neg) / τ))`.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{sample_pixel_ids, sampled_pixel_graph, DistanceMetric, FeatureMap, PixelGraph};
use crate::hierarchy::BinaryPartitionTree;
use crate::mask::Mask;
use crate::masktree::PairBatch;

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_EUCLID_WEIGHT: f64 = 1.0;
/// Pixels sampled per training graph.
pub const DEFAULT_GRAPH_SAMPLES: usize = 4096;
/// Image-plane neighbors per sampled pixel.
pub const DEFAULT_GRAPH_NEIGHBORS: usize = 10;
/// Side of a depth-continuity patch.
pub const PATCH: usize = 4;
/// Depth patches sampled per finest mask.
pub const DEFAULT_PATCHES_PER_MASK: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentSign {
    /// `exp(+d/τ)`, which rewards distant positives.
    AsPrinted,
    /// `exp(−d/τ)`.
    #[default]
    Corrected,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    #[default]
    TwoTerm,
    Softplus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub euclid_weight: f64,
    pub exponent_sign: ExponentSign,
    pub variant: LossVariant,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: DEFAULT_TEMPERATURE,
            euclid_weight: DEFAULT_EUCLID_WEIGHT,
            exponent_sign: ExponentSign::Corrected,
            variant: LossVariant::TwoTerm,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.euclid_weight >= 0.0 && self.euclid_weight.is_finite()) {
            return Err(Error::invalid(format!(
                "euclidean weight must be nonnegative, got {}",
                self.euclid_weight
            )));
        }
        Ok(())
    }
}

/// Loss of one (positive, negative) couple and its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub d_pos: f64,
    pub d_neg: f64,
}

pub fn pair_contrastive_loss(d_pos: f64, d_neg: f64, cfg: &ContrastiveConfig) -> PairLoss {
    let sign = match cfg.exponent_sign {
        ExponentSign::Corrected => 1.0,
        ExponentSign::AsPrinted => -1.0,
    };
    let scale = sign / cfg.temperature;
    let z = scale * (d_pos - d_neg);
    match cfg.variant {
        LossVariant::TwoTerm => PairLoss {
            value: z,
            d_pos: scale,
            d_neg: -scale,
        },
        LossVariant::Softplus => {
            let value = z.max(0.0) + (-z.abs()).exp().ln_1p();
            let slope = sigmoid(z) * scale;
            PairLoss {
                value,
                d_pos: slope,
                d_neg: -slope,
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Distance between two pixels' features with gradients for each side.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDistance {
    pub distance: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
}

/// `‖f_i − f_j‖₂`; the gradient is zero when the features coincide.
pub fn euclid_pair_distance(fmap: &FeatureMap, i: usize, j: usize) -> Result<PairDistance> {
    let n = fmap.pixel_count();
    for p in [i, j] {
        if p >= n {
            return Err(Error::OutOfRange { index: p, len: n });
        }
    }
    let (distance, grad_a, grad_b) = DistanceMetric::Euclidean.distance_with_grad(fmap.feature(i), fmap.feature(j));
    Ok(PairDistance {
        distance,
        grad_a,
        grad_b,
    })
}

/// Ultrametric distance between two graph nodes and the gradient routed
/// through its active edge.
#[derive(Clone, Debug, PartialEq)]
pub struct UltraDistance {
    pub distance: f64,
    /// Pixels at the ends of the active edge with their gradients;
    /// `None` when both nodes are the same.
    pub active: Option<ActiveGradient>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActiveGradient {
    pub edge: usize,
    pub pixel_u: usize,
    pub pixel_v: usize,
    pub grad_u: Vec<f64>,
    pub grad_v: Vec<f64>,
}

pub fn ultra_pair_distance(
    fmap: &FeatureMap,
    graph: &PixelGraph,
    bpt: &BinaryPartitionTree,
    i: usize,
    j: usize,
) -> Result<UltraDistance> {
    let distance = bpt.ultrametric_distance(i, j)?;
    if i == j {
        return Ok(UltraDistance {
            distance,
            active: None,
        });
    }
    if distance.is_infinite() {
        return Err(Error::Disconnected(i, j));
    }
    let (edge, e) = bpt.active_edge(i, j)?;
    let (pixel_u, pixel_v) = (graph.pixels[e.u], graph.pixels[e.v]);
    let (_, grad_u, grad_v) = graph
        .metric
        .distance_with_grad(fmap.feature(pixel_u), fmap.feature(pixel_v));
    Ok(UltraDistance {
        distance,
        active: Some(ActiveGradient {
            edge,
            pixel_u,
            pixel_v,
            grad_u,
            grad_v,
        }),
    })
}

/// Loss value and its gradient with respect to the feature buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossDiagnostics {
    pub couples: usize,
    /// Couples dropped because a pair straddled graph components.
    pub disconnected: usize,
    /// Couples dropped because a pixel was not a graph node.
    pub unmapped: usize,
}

/// Training graph over `samples` random pixels plus every pixel used by `batch`.
pub fn training_graph(
    fmap: &FeatureMap,
    batch: &PairBatch,
    samples: usize,
    k: usize,
    metric: DistanceMetric,
    seed: u64,
) -> Result<PixelGraph> {
    let w = fmap.width();
    let required: Vec<usize> = batch
        .levels
        .iter()
        .flat_map(|l| l.positives.iter().chain(&l.negatives))
        .flat_map(|p| {
            let (a, b) = p.indices(w);
            [a, b]
        })
        .collect();
    let ids = sample_pixel_ids(fmap.pixel_count(), samples, &required, seed);
    sampled_pixel_graph(fmap, &ids, k, metric)
}

/// Sum over levels and over couples (matched by emission order within each
/// level) of `ℓ(ultra) + α·ℓ(euclid)`.
pub fn feature_loss(
    fmap: &FeatureMap,
    graph: &PixelGraph,
    bpt: &BinaryPartitionTree,
    batch: &PairBatch,
    cfg: &ContrastiveConfig,
) -> Result<(LossResult, LossDiagnostics)> {
    cfg.validate()?;
    if batch.height != fmap.height() || batch.width != fmap.width() {
        return Err(Error::invalid(format!(
            "pair batch is for {}x{} images, feature map is {}x{}",
            batch.height,
            batch.width,
            fmap.height(),
            fmap.width()
        )));
    }
    if bpt.leaf_count() != graph.graph.node_count() {
        return Err(Error::invalid("partition tree was not built from this graph"));
    }
    let dim = fmap.dim();
    let n_pix = fmap.pixel_count();
    let table = graph.node_table(n_pix);
    let mut value = 0.0;
    let mut gradient = vec![0.0; fmap.data().len()];
    let mut diag = LossDiagnostics::default();

    let add = |grad: &mut Vec<f64>, pixel: usize, g: &[f64], scale: f64| {
        for (dst, src) in grad[pixel * dim..(pixel + 1) * dim].iter_mut().zip(g) {
            *dst += scale * src;
        }
    };

    for level in &batch.levels {
        for (pos, neg) in level.positives.iter().zip(&level.negatives) {
            let (p1, p2) = pos.indices(fmap.width());
            let (n1, n2) = neg.indices(fmap.width());
            if [p1, p2, n1, n2].iter().any(|&p| p >= n_pix) {
                return Err(Error::OutOfRange {
                    index: [p1, p2, n1, n2].into_iter().max().unwrap_or(0),
                    len: n_pix,
                });
            }
            let nodes = [p1, p2, n1, n2].map(|p| table[p]);
            let [Some(a1), Some(a2), Some(b1), Some(b2)] = nodes else {
                diag.unmapped += 1;
                continue;
            };
            let up = ultra_pair_distance(fmap, graph, bpt, a1, a2);
            let un = ultra_pair_distance(fmap, graph, bpt, b1, b2);
            let (up, un) = match (up, un) {
                (Ok(up), Ok(un)) => (up, un),
                (Err(Error::Disconnected(..)), _) | (_, Err(Error::Disconnected(..))) => {
                    diag.disconnected += 1;
                    continue;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            diag.couples += 1;

            let l = pair_contrastive_loss(up.distance, un.distance, cfg);
            value += l.value;
            for (ud, scale) in [(&up, l.d_pos), (&un, l.d_neg)] {
                if let Some(a) = &ud.active {
                    add(&mut gradient, a.pixel_u, &a.grad_u, scale);
                    add(&mut gradient, a.pixel_v, &a.grad_v, scale);
                }
            }

            if cfg.euclid_weight > 0.0 {
                let ep = euclid_pair_distance(fmap, p1, p2)?;
                let en = euclid_pair_distance(fmap, n1, n2)?;
                let l = pair_contrastive_loss(ep.distance, en.distance, cfg);
                let alpha = cfg.euclid_weight;
                value += alpha * l.value;
                add(&mut gradient, p1, &ep.grad_a, alpha * l.d_pos);
                add(&mut gradient, p2, &ep.grad_b, alpha * l.d_pos);
                add(&mut gradient, n1, &en.grad_a, alpha * l.d_neg);
                add(&mut gradient, n2, &en.grad_b, alpha * l.d_neg);
            }
        }
    }
    if diag.disconnected + diag.unmapped > 0 {
        log::warn!(
            "feature loss excluded {} disconnected and {} unmapped couples",
            diag.disconnected,
            diag.unmapped
        );
    }
    Ok((LossResult { value, gradient }, diag))
}

/// 4×4 depth patches, row-major within each patch.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthPatchBatch {
    pub patches: Vec<[f64; PATCH * PATCH]>,
    /// Ray angle between adjacent pixels, radians.
    pub delta_theta: f64,
    /// Hinge threshold.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthLossResult {
    pub value: f64,
    pub gradient: Vec<[f64; PATCH * PATCH]>,
    /// Patches ignored for holding a nonpositive depth.
    pub skipped: usize,
}

const THIRD_DIFF: [f64; 4] = [1.0, -3.0, 3.0, -1.0];

/// Sum over every row and column of every patch of
/// `max(|Δ₃| / (max(d)·Δθ)³ − t, 0)` with `Δ₃ = d₀ − 3d₁ + 3d₂ − d₃`.
pub fn depth_continuity_loss(batch: &DepthPatchBatch) -> Result<DepthLossResult> {
    if !(batch.delta_theta > 0.0 && batch.delta_theta.is_finite()) {
        return Err(Error::invalid(format!("ray angle step must be positive, got {}", batch.delta_theta)));
    }
    let mut value = 0.0;
    let mut gradient = vec![[0.0; PATCH * PATCH]; batch.patches.len()];
    let mut skipped = 0;
    for (patch, grad) in batch.patches.iter().zip(gradient.iter_mut()) {
        if patch.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            skipped += 1;
            continue;
        }
        for line in 0..PATCH {
            let row: [usize; PATCH] = std::array::from_fn(|k| line * PATCH + k);
            let col: [usize; PATCH] = std::array::from_fn(|k| k * PATCH + line);
            for idx in [row, col] {
                value += line_term(patch, &idx, batch.delta_theta, batch.threshold, grad);
            }
        }
    }
    if skipped > 0 {
        log::warn!("depth continuity skipped {skipped} patches with nonpositive depth");
    }
    Ok(DepthLossResult {
        value,
        gradient,
        skipped,
    })
}

fn line_term(patch: &[f64; 16], idx: &[usize; PATCH], dtheta: f64, t: f64, grad: &mut [f64; 16]) -> f64 {
    let d = idx.map(|i| patch[i]);
    let delta: f64 = d.iter().zip(THIRD_DIFF).map(|(x, c)| x * c).sum();
    let mut arg = 0;
    for k in 1..PATCH {
        if d[k] > d[arg] {
            arg = k;
        }
    }
    let m = d[arg];
    let denom = (m * dtheta).powi(3);
    let ratio = delta.abs() / denom;
    if ratio - t <= 0.0 {
        return 0.0;
    }
    let sign = if delta > 0.0 {
        1.0
    } else if delta < 0.0 {
        -1.0
    } else {
        0.0
    };
    for k in 0..PATCH {
        grad[idx[k]] += sign * THIRD_DIFF[k] / denom;
    }
    // through max(d), routed to the first maximal entry
    grad[idx[arg]] += -3.0 * ratio / m;
    ratio - t
}

/// Top-left corners of up to `count` random 4×4 patches lying entirely
/// inside `mask`.
pub fn sample_patch_origins(mask: &Mask, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (h, w) = (mask.height(), mask.width());
    if h < PATCH || w < PATCH {
        return Vec::new();
    }
    let fits: Vec<usize> = (0..h - PATCH + 1)
        .flat_map(|r| (0..w - PATCH + 1).map(move |c| (r, c)))
        .filter(|&(r, c)| (0..PATCH).all(|i| (0..PATCH).all(|j| mask.get((r + i) * w + c + j))))
        .map(|(r, c)| r * w + c)
        .collect();
    (0..count).filter_map(|_| fits.choose(rng).copied()).collect()
}

/// Samples `per_mask` patch origins in each mask, seeded.
pub fn sample_patches_in_masks(masks: &[Mask], per_mask: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    masks
        .iter()
        .flat_map(|m| sample_patch_origins(m, per_mask, &mut rng))
        .collect()
}

pub fn extract_patches(depth: &[f64], width: usize, origins: &[usize]) -> Vec<[f64; 16]> {
    origins
        .iter()
        .map(|&o| std::array::from_fn(|k| depth[o + (k / PATCH) * width + k % PATCH]))
        .collect()
}

/// Accumulates per-patch gradients back onto the depth image.
pub fn scatter_patch_gradient(grad: &[[f64; 16]], width: usize, origins: &[usize], out: &mut [f64]) {
    for (g, &o) in grad.iter().zip(origins) {
        for (k, v) in g.iter().enumerate() {
            out[o + (k / PATCH) * width + k % PATCH] += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, WeightedGraph};
    use crate::masktree::{PairLevel, PixelPair};

    fn cfg(variant: LossVariant) -> ContrastiveConfig {
        ContrastiveConfig {
            variant,
            ..ContrastiveConfig::default()
        }
    }

    #[test]
    fn pair_loss_symmetric_case() {
        assert_eq!(pair_contrastive_loss(0.3, 0.3, &cfg(LossVariant::TwoTerm)).value, 0.0);
        let sp = pair_contrastive_loss(0.3, 0.3, &cfg(LossVariant::Softplus)).value;
        assert!((sp - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn pair_loss_two_term_value() {
        // evaluate the unsimplified two-term expression with negated exponents
        let (dp, dn, tau) = (0.2f64, 0.4f64, 0.1f64);
        let (ep, en) = ((-dp / tau).exp(), (-dn / tau).exp());
        let literal = -(ep / (ep + en)).ln() + (en / (ep + en)).ln();
        let l = pair_contrastive_loss(dp, dn, &cfg(LossVariant::TwoTerm));
        assert!((literal - -2.0).abs() < 1e-12);
        assert!((l.value - -2.0).abs() < 1e-12);
        assert_eq!((l.d_pos, l.d_neg), (10.0, -10.0));
    }

    #[test]
    fn as_printed_flips_sign() {
        let printed = ContrastiveConfig {
            exponent_sign: ExponentSign::AsPrinted,
            ..ContrastiveConfig::default()
        };
        let (dp, dn, tau) = (0.2f64, 0.4f64, 0.1f64);
        let (ep, en) = ((dp / tau).exp(), (dn / tau).exp());
        let literal = -(ep / (ep + en)).ln() + (en / (ep + en)).ln();
        assert!((pair_contrastive_loss(dp, dn, &printed).value - literal).abs() < 1e-12);
    }

    #[test]
    fn softplus_is_overflow_safe_and_monotone() {
        let c = cfg(LossVariant::Softplus);
        let big = pair_contrastive_loss(500.0, 0.0, &c);
        assert!((big.value - 5000.0).abs() < 1e-9);
        assert!(pair_contrastive_loss(0.0, 500.0, &c).value >= 0.0);
    }

    #[test]
    fn decreasing_positive_distance_decreases_loss() {
        for variant in [LossVariant::TwoTerm, LossVariant::Softplus] {
            let c = cfg(variant);
            let mut prev = f64::INFINITY;
            for k in 0..20 {
                let v = pair_contrastive_loss(1.0 - k as f64 * 0.05, 0.5, &c).value;
                assert!(v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn euclid_distance_cases() {
        let fmap = FeatureMap::new(1, 3, 2, vec![3.0, 0.0, 0.0, 4.0, 3.0, 0.0]).unwrap();
        let d = euclid_pair_distance(&fmap, 0, 1).unwrap();
        assert_eq!(d.distance, 5.0);
        assert!((d.grad_a[0] - 0.6).abs() < 1e-15 && (d.grad_a[1] + 0.8).abs() < 1e-15);
        let z = euclid_pair_distance(&fmap, 0, 2).unwrap();
        assert_eq!(z.distance, 0.0);
        assert_eq!(z.grad_a, vec![0.0, 0.0]);
    }

    fn triangle_fixture() -> (FeatureMap, PixelGraph, BinaryPartitionTree) {
        // scalar features 0, 1, 3: a-b = 1, b-c = 2, a-c = 3
        let fmap = FeatureMap::new(1, 3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        let metric = DistanceMetric::Euclidean;
        let edges = [(0, 1), (1, 2), (0, 2)]
            .iter()
            .map(|&(u, v)| Edge { u, v, w: metric.distance(fmap.feature(u), fmap.feature(v)) })
            .collect();
        let graph = PixelGraph {
            graph: WeightedGraph::new(3, edges).unwrap(),
            pixels: vec![0, 1, 2],
            metric,
        };
        let bpt = BinaryPartitionTree::build(&graph.graph);
        (fmap, graph, bpt)
    }

    #[test]
    fn ultra_routes_to_bottleneck() {
        let (fmap, graph, bpt) = triangle_fixture();
        let u = ultra_pair_distance(&fmap, &graph, &bpt, 0, 2).unwrap();
        assert_eq!(u.distance, 2.0);
        assert_eq!(u.distance, bpt.ultrametric_distance(0, 2).unwrap());
        let a = u.active.unwrap();
        assert_eq!((a.pixel_u, a.pixel_v), (1, 2));
        assert_eq!((a.grad_u[0], a.grad_v[0]), (-1.0, 1.0));
        // adjacent pair along the minimum edge reduces to the euclidean pair
        let adj = ultra_pair_distance(&fmap, &graph, &bpt, 0, 1).unwrap();
        let e = euclid_pair_distance(&fmap, 0, 1).unwrap();
        assert_eq!(adj.distance, e.distance);
        assert_eq!(adj.active.unwrap().grad_u, e.grad_a);
    }

    #[test]
    fn feature_loss_matches_hand_composition() {
        let (fmap, graph, bpt) = triangle_fixture();
        let batch = PairBatch {
            height: 1,
            width: 3,
            levels: vec![PairLevel {
                positives: vec![PixelPair([0, 0], [0, 1])],
                negatives: vec![PixelPair([0, 0], [0, 2])],
            }],
            skipped: 0,
        };
        let c = ContrastiveConfig {
            euclid_weight: 0.5,
            ..ContrastiveConfig::default()
        };
        let (res, diag) = feature_loss(&fmap, &graph, &bpt, &batch, &c).unwrap();
        assert_eq!(diag.couples, 1);
        // ultra: d_p = 1, d_n = 2; euclid: d_p = 1, d_n = 3
        let expect = pair_contrastive_loss(1.0, 2.0, &c).value + 0.5 * pair_contrastive_loss(1.0, 3.0, &c).value;
        assert!((res.value - expect).abs() < 1e-12);
    }

    #[test]
    fn feature_loss_zero_case() {
        let fmap = FeatureMap::new(2, 2, 2, vec![0.5; 8]).unwrap();
        let batch = PairBatch {
            height: 2,
            width: 2,
            levels: vec![PairLevel {
                positives: vec![PixelPair([0, 0], [1, 1])],
                negatives: vec![PixelPair([0, 1], [1, 0])],
            }],
            skipped: 0,
        };
        let graph = training_graph(&fmap, &batch, 4, 3, DistanceMetric::Euclidean, 0).unwrap();
        let bpt = BinaryPartitionTree::build(&graph.graph);
        let c = ContrastiveConfig {
            euclid_weight: 0.0,
            ..ContrastiveConfig::default()
        };
        let (res, _) = feature_loss(&fmap, &graph, &bpt, &batch, &c).unwrap();
        assert_eq!(res.value, 0.0);
        assert!(res.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn feature_loss_counts_disconnected() {
        let fmap = FeatureMap::new(1, 4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let graph = PixelGraph {
            graph: WeightedGraph::new(4, vec![Edge { u: 0, v: 1, w: 1.0 }, Edge { u: 2, v: 3, w: 1.0 }]).unwrap(),
            pixels: vec![0, 1, 2, 3],
            metric: DistanceMetric::Euclidean,
        };
        let bpt = BinaryPartitionTree::build(&graph.graph);
        let batch = PairBatch {
            height: 1,
            width: 4,
            levels: vec![PairLevel {
                positives: vec![PixelPair([0, 0], [0, 1])],
                negatives: vec![PixelPair([0, 0], [0, 3])],
            }],
            skipped: 0,
        };
        let (res, diag) = feature_loss(&fmap, &graph, &bpt, &batch, &ContrastiveConfig::default()).unwrap();
        assert_eq!(diag.disconnected, 1);
        assert_eq!(res.value, 0.0);
    }

    fn batch_of(patches: Vec<[f64; 16]>, dtheta: f64, t: f64) -> DepthPatchBatch {
        DepthPatchBatch {
            patches,
            delta_theta: dtheta,
            threshold: t,
        }
    }

    #[test]
    fn depth_loss_vanishes_on_polynomial_ramps() {
        // dyadic coefficients keep every third difference exact
        let linear: [f64; 16] = std::array::from_fn(|k| 2.0 + 0.125 * (k / 4) as f64 + 0.375 * (k % 4) as f64);
        let quad: [f64; 16] = std::array::from_fn(|k| {
            let (r, c) = ((k / 4) as f64, (k % 4) as f64);
            1.0 + 0.25 * r * r + 0.0625 * c * c + 0.125 * r * c
        });
        let res = depth_continuity_loss(&batch_of(vec![linear, quad], 0.01, 0.0)).unwrap();
        assert_eq!(res.value, 0.0);
    }

    #[test]
    fn depth_loss_single_row() {
        // one row [1, 1, 1, 2]; remaining rows and columns are constant or linear
        let mut p = [1.0; 16];
        p[3] = 2.0;
        p[7] = 2.0;
        p[11] = 2.0;
        p[15] = 2.0;
        let res = depth_continuity_loss(&batch_of(vec![p], 1.0, 0.0)).unwrap();
        // four rows, each |Δ₃| = 1 with max 2: 1/8 each
        assert!((res.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn depth_loss_hinge_and_skips() {
        let mut p = [1.0; 16];
        p[3] = 2.0;
        let res = depth_continuity_loss(&batch_of(vec![p], 1.0, 0.2)).unwrap();
        assert_eq!(res.value, 0.0);
        p[0] = 0.0;
        let res = depth_continuity_loss(&batch_of(vec![p], 1.0, 0.0)).unwrap();
        assert_eq!(res.skipped, 1);
        assert!(depth_continuity_loss(&batch_of(vec![], 0.0, 0.0)).is_err());
    }

    #[test]
    fn depth_loss_scaling_law() {
        let p: [f64; 16] = std::array::from_fn(|k| 1.0 + ((k * 7919) % 13) as f64 * 0.1);
        let base = depth_continuity_loss(&batch_of(vec![p], 0.5, 0.0)).unwrap().value;
        let s = 3.0;
        let scaled = depth_continuity_loss(&batch_of(vec![p.map(|d| d * s)], 0.5, 0.0)).unwrap().value;
        assert!((scaled - base / (s * s)).abs() < 1e-12 * base);
    }

    #[test]
    fn patch_sampling_stays_inside_mask() {
        let mask = Mask::from_fn(10, 10, |r, c| (2..9).contains(&r) && (1..6).contains(&c));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let origins = sample_patch_origins(&mask, 20, &mut rng);
        assert_eq!(origins.len(), 20);
        for o in origins {
            for k in 0..16 {
                assert!(mask.get(o + (k / 4) * 10 + k % 4));
            }
        }
        assert!(sample_patch_origins(&Mask::full(3, 3), 5, &mut rng).is_empty());
    }
}
