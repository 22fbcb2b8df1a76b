//! Binary masks over a `height × width` grid and their run-length coding.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::invalid(format!(
                "mask has {} cells, expected {height}x{width}",
                bits.len()
            )));
        }
        Ok(Mask { height, width, bits })
    }

    pub fn from_pixels(height: usize, width: usize, pixels: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut m = Mask::empty(height, width);
        for p in pixels {
            if p >= height * width {
                return Err(Error::OutOfRange {
                    index: p,
                    len: height * width,
                });
            }
            m.bits[p] = true;
        }
        Ok(m)
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height * width).map(|p| f(p / width, p % width)).collect();
        Mask { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, pixel: usize) -> bool {
        self.bits[pixel]
    }

    pub fn set(&mut self, pixel: usize, value: bool) {
        self.bits[pixel] = value;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn same_grid(&self, other: &Mask) -> bool {
        self.height == other.height && self.width == other.width
    }

    fn check_grid(&self, other: &Mask) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::invalid(format!(
                "mask grids differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn union_count(&self, other: &Mask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a || **b)
            .count()
    }

    /// Intersection over union; 0 when both masks are empty.
    pub fn iou(&self, other: &Mask) -> Result<f64> {
        self.check_grid(other)?;
        let (inter, union) = self.overlap(other);
        Ok(ratio(inter, union))
    }

    /// `(|A ∩ B|, |A ∪ B|)` in one pass.
    pub fn overlap(&self, other: &Mask) -> (usize, usize) {
        let mut inter = 0;
        let mut union = 0;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        (inter, union)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && !*b).collect(),
        }
    }

    /// Uncompressed row-major run lengths, starting with a (possibly empty)
    /// run of zeros and alternating thereafter.
    pub fn to_rle(&self) -> Vec<u64> {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for &b in &self.bits {
            if b != current {
                counts.push(run);
                current = b;
                run = 0;
            }
            run += 1;
        }
        counts.push(run);
        counts
    }

    pub fn from_rle(height: usize, width: usize, counts: &[u64]) -> Result<Self> {
        let total: u128 = counts.iter().map(|&c| c as u128).sum();
        if total != (height * width) as u128 {
            return Err(Error::format(format!(
                "RLE counts sum to {total}, expected {}",
                height * width
            )));
        }
        let mut bits = Vec::with_capacity(height * width);
        for (i, &c) in counts.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
        }
        Ok(Mask { height, width, bits })
    }
}

pub(crate) fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
