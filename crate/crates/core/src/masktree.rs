//! Inclusion hierarchy of per-view masks and hierarchical pair sampling.
//!
//! A mask `A` is a child of `B` when `|A∩B|/|A| > p_in` and
//! `|A∩B|/|A∪B| < p_iou`. A synthetic all-positive root sits on top.
//! Pair sampling walks from every leaf up to the root: at each level the
//! carried positive pair is emitted together with a fresh negative pair that
//! straddles the current mask's boundary inside its parent, and that negative
//! becomes the positive carried to the next level.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{ratio, Mask};

/// Inclusion threshold `p_in`.
pub const DEFAULT_P_IN: f64 = 0.95;
/// IoU ceiling `p_iou`.
pub const DEFAULT_P_IOU: f64 = 0.85;
/// Samples per (mask, level) slot.
pub const DEFAULT_PAIRS_PER_MASK: usize = 64;

/// Node id of the synthetic root in every [`MaskTree`].
pub const ROOT: usize = 0;

/// All masks of one view.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    pub view_id: String,
    pub height: usize,
    pub width: usize,
    pub masks: Vec<Mask>,
}

impl MaskSet {
    pub fn new(view_id: impl Into<String>, height: usize, width: usize, masks: Vec<Mask>) -> Result<Self> {
        for (i, m) in masks.iter().enumerate() {
            if m.height() != height || m.width() != width {
                return Err(Error::invalid(format!("mask {i} is not on the {height}x{width} grid")));
            }
            if m.area() == 0 {
                return Err(Error::invalid(format!("mask {i} is empty")));
            }
        }
        Ok(MaskSet {
            view_id: view_id.into(),
            height,
            width,
            masks,
        })
    }
}

/// `(|A∩B|/|A|, |A∩B|/|A∪B|)`.
pub fn inclusion_stats(a: &Mask, b: &Mask) -> Result<(f64, f64)> {
    if !a.same_grid(b) {
        return Err(Error::invalid("masks are on different grids"));
    }
    let area = a.area();
    if area == 0 {
        return Err(Error::invalid("inclusion ratio of an empty mask"));
    }
    let (inter, union) = a.overlap(b);
    Ok((inter as f64 / area as f64, ratio(inter, union)))
}

#[derive(Clone, Debug)]
pub struct MaskTreeNode {
    pub mask: Mask,
    /// Index into the source [`MaskSet`]; `None` for the root.
    pub source: Option<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct MaskTree {
    pub height: usize,
    pub width: usize,
    pub nodes: Vec<MaskTreeNode>,
    /// Source indices of near-duplicate masks that were dropped.
    pub dropped: Vec<usize>,
    pub p_in: f64,
    pub p_iou: f64,
}

impl MaskTree {
    pub fn leaves(&self) -> Vec<usize> {
        (1..self.nodes.len())
            .filter(|&i| self.nodes[i].children.is_empty())
            .collect()
    }

    /// Nodes from `node` up to and including the root.
    pub fn ancestry(&self, node: usize) -> Vec<usize> {
        let mut out = vec![node];
        let mut at = node;
        while let Some(p) = self.nodes[at].parent {
            out.push(p);
            at = p;
        }
        out
    }

    pub fn depth(&self, node: usize) -> usize {
        self.ancestry(node).len() - 1
    }
}

/// Builds the inclusion tree. Masks whose IoU with an earlier kept mask is
/// at least `p_iou` are dropped; every other mask hangs below the
/// smallest-area mask that contains it by the inclusion predicate.
pub fn build_mask_tree(ms: &MaskSet, p_in: f64, p_iou: f64) -> MaskTree {
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for (i, m) in ms.masks.iter().enumerate() {
        let dup = kept.iter().find(|&&k| {
            let (inter, union) = m.overlap(&ms.masks[k]);
            ratio(inter, union) >= p_iou
        });
        match dup {
            Some(&k) => {
                log::info!("view {}: mask {i} duplicates mask {k}; dropped", ms.view_id);
                dropped.push(i);
            }
            None => kept.push(i),
        }
    }

    let areas: Vec<usize> = kept.iter().map(|&i| ms.masks[i].area()).collect();
    let mut nodes = vec![MaskTreeNode {
        mask: Mask::full(ms.height, ms.width),
        source: None,
        parent: None,
        children: Vec::new(),
    }];
    for &i in &kept {
        nodes.push(MaskTreeNode {
            mask: ms.masks[i].clone(),
            source: Some(i),
            parent: Some(ROOT),
            children: Vec::new(),
        });
    }

    for a in 0..kept.len() {
        let ma = &ms.masks[kept[a]];
        let area_a = areas[a];
        let mut best: Option<usize> = None;
        for b in 0..kept.len() {
            // parents strictly follow children in (area, input order)
            if (areas[b], b) <= (area_a, a) {
                continue;
            }
            if let Some(cur) = best {
                if (areas[b], b) >= (areas[cur], cur) {
                    continue;
                }
            }
            let (inter, union) = ma.overlap(&ms.masks[kept[b]]);
            let in_ratio = inter as f64 / area_a as f64;
            if in_ratio > p_in && ratio(inter, union) < p_iou {
                best = Some(b);
            }
        }
        if let Some(b) = best {
            nodes[a + 1].parent = Some(b + 1);
        }
    }
    for i in 1..nodes.len() {
        let p = nodes[i].parent.expect("non-root nodes have parents");
        nodes[p].children.push(i);
    }

    MaskTree {
        height: ms.height,
        width: ms.width,
        nodes,
        dropped,
        p_in,
        p_iou,
    }
}

/// `[[row, col], [row, col]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelPair(pub [usize; 2], pub [usize; 2]);

impl PixelPair {
    pub fn indices(&self, width: usize) -> (usize, usize) {
        (self.0[0] * width + self.0[1], self.1[0] * width + self.1[1])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairLevel {
    pub positives: Vec<PixelPair>,
    pub negatives: Vec<PixelPair>,
}

/// Positive and negative pairs grouped by level above the leaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBatch {
    pub height: usize,
    pub width: usize,
    pub levels: Vec<PairLevel>,
    /// Levels skipped because the mask covered its whole parent.
    pub skipped: usize,
}

impl PairBatch {
    pub fn pair_count(&self) -> usize {
        self.levels
            .iter()
            .map(|l| l.positives.len() + l.negatives.len())
            .sum()
    }
}

/// Hierarchical sampler: `pairs_per_mask` walks from each leaf to the root.
pub fn sample_pairs(tree: &MaskTree, pairs_per_mask: usize, seed: u64) -> Result<PairBatch> {
    if pairs_per_mask == 0 {
        return Err(Error::invalid("pairs_per_mask must be at least 1"));
    }
    let w = tree.width;
    let inside: Vec<Vec<usize>> = tree.nodes.iter().map(|n| n.mask.pixels()).collect();
    // Ā ∩ parent(A)
    let ring: Vec<Vec<usize>> = tree
        .nodes
        .iter()
        .map(|n| match n.parent {
            Some(p) => tree.nodes[p].mask.and_not(&n.mask).pixels(),
            None => Vec::new(),
        })
        .collect();
    let to_rc = |p: usize| [p / w, p % w];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels: Vec<PairLevel> = Vec::new();
    let mut skipped = 0;
    for leaf in tree.leaves() {
        for _ in 0..pairs_per_mask {
            let mut a = leaf;
            let mut sample = PixelPair(
                to_rc(*inside[a].choose(&mut rng).expect("masks are nonempty")),
                to_rc(*inside[a].choose(&mut rng).expect("masks are nonempty")),
            );
            let mut level = 0;
            while let Some(b) = tree.nodes[a].parent {
                if levels.len() <= level {
                    levels.push(PairLevel::default());
                }
                if ring[a].is_empty() {
                    log::debug!("node {a} covers its parent; level {level} skipped");
                    skipped += 1;
                    sample = PixelPair(
                        to_rc(*inside[b].choose(&mut rng).expect("masks are nonempty")),
                        to_rc(*inside[b].choose(&mut rng).expect("masks are nonempty")),
                    );
                } else {
                    levels[level].positives.push(sample);
                    let neg = PixelPair(
                        to_rc(*inside[a].choose(&mut rng).expect("masks are nonempty")),
                        to_rc(*ring[a].choose(&mut rng).expect("ring is nonempty")),
                    );
                    levels[level].negatives.push(neg);
                    sample = neg;
                }
                a = b;
                level += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} sampling levels skipped: mask covers its parent");
    }
    Ok(PairBatch {
        height: tree.height,
        width: tree.width,
        levels,
        skipped,
    })
}
