//! Siamese batch augmentation: flip, pad-and-crop shift, cutout.
//!
//! One parameter draw produces one index map; the map applies identically to
//! a plain tensor batch and to a graph node, which is how the real and
//! synthetic branches of a matching step are guaranteed to see the same
//! transform.

use std::rc::Rc;

use rand::Rng;

use crate::autograd::{GatherMap, Graph, NodeId, Tensor};
use crate::stream::seeded_rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AugmentFlags {
    pub flip: bool,
    /// Pad-and-crop shift radius in pixels.
    pub crop_pad: Option<usize>,
    /// Side length of the zeroed square.
    pub cutout: Option<usize>,
}

impl AugmentFlags {
    pub fn any(&self) -> bool {
        self.flip || self.crop_pad.is_some() || self.cutout.is_some()
    }
}

/// One concrete transform, shared across a batch and across branches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentParams {
    pub flip: bool,
    pub shift: (i64, i64),
    /// `(top, left, size)` of the zeroed square.
    pub cutout_at: Option<(usize, usize, usize)>,
}

impl AugmentParams {
    pub fn identity() -> AugmentParams {
        AugmentParams {
            flip: false,
            shift: (0, 0),
            cutout_at: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == AugmentParams::identity()
    }
}

/// Draw one transform for an `h x w` image batch. The draw count per flag is
/// fixed, so paired branches consume identical randomness.
pub fn draw_params(flags: &AugmentFlags, h: usize, w: usize, rng: &mut impl Rng) -> AugmentParams {
    let flip = flags.flip && rng.gen_bool(0.5);
    let shift = match flags.crop_pad {
        Some(pad) => {
            let p = pad as i64;
            (rng.gen_range(-p..=p), rng.gen_range(-p..=p))
        }
        None => (0, 0),
    };
    let cutout_at = flags.cutout.map(|size| {
        let size = size.min(h).min(w);
        let top = rng.gen_range(0..=h - size);
        let left = rng.gen_range(0..=w - size);
        (top, left, size)
    });
    AugmentParams {
        flip,
        shift,
        cutout_at,
    }
}

/// Index map realizing flip + shift + cutout over `[B, C, H, W]`; cutout
/// pixels map to the zero sentinel.
fn build_map(shape: &[usize], p: &AugmentParams) -> GatherMap {
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let mut idx = Vec::with_capacity(b * c * h * w);
    for bi in 0..b {
        for ci in 0..c {
            let base = ((bi * c) + ci) * h * w;
            for i in 0..h {
                for j in 0..w {
                    if let Some((top, left, size)) = p.cutout_at {
                        if i >= top && i < top + size && j >= left && j < left + size {
                            idx.push(-1);
                            continue;
                        }
                    }
                    let si = i as i64 + p.shift.0;
                    let mut sj = j as i64 + p.shift.1;
                    if p.flip {
                        sj = w as i64 - 1 - sj;
                    }
                    if si < 0 || si >= h as i64 || sj < 0 || sj >= w as i64 {
                        idx.push(-1);
                    } else {
                        idx.push((base + si as usize * w + sj as usize) as i64);
                    }
                }
            }
        }
    }
    GatherMap::new(idx, shape.to_vec(), shape.to_vec())
}

/// Apply a transform to a plain `[B, C, H, W]` batch.
pub fn apply(batch: &Tensor, p: &AugmentParams) -> Tensor {
    if p.is_identity() {
        return batch.clone();
    }
    let mut g = Graph::new();
    let x = g.leaf(batch.clone());
    let y = apply_graph(&mut g, x, p);
    g.value(y).clone()
}

/// Apply the same transform to a graph node (differentiable: the map is a
/// fixed linear operator).
pub fn apply_graph(g: &mut Graph, x: NodeId, p: &AugmentParams) -> NodeId {
    if p.is_identity() {
        return x;
    }
    let shape = g.value(x).shape().to_vec();
    let map = Rc::new(build_map(&shape, p));
    g.gather(x, map)
}

/// Draw once and apply: same-shape output, deterministic per seed.
pub fn augment(batch: &Tensor, flags: &AugmentFlags, seed: u64) -> Tensor {
    let shape = batch.shape();
    assert_eq!(shape.len(), 4, "augment expects [B, C, H, W]");
    let mut rng = seeded_rng(seed);
    let p = draw_params(flags, shape[2], shape[3], &mut rng);
    apply(batch, &p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch() -> Tensor {
        Tensor::new(vec![1, 1, 4, 4], (0..16).map(|i| i as f64).collect())
    }

    #[test]
    fn all_flags_off_is_identity() {
        let b = batch();
        let out = augment(&b, &AugmentFlags::default(), 1);
        assert_eq!(out, b);
    }

    #[test]
    fn flip_twice_is_identity() {
        let b = batch();
        let p = AugmentParams {
            flip: true,
            shift: (0, 0),
            cutout_at: None,
        };
        let once = apply(&b, &p);
        let twice = apply(&once, &p);
        assert_eq!(twice, b);
        assert_ne!(once, b);
    }

    #[test]
    fn shift_pads_with_zeros() {
        let b = batch();
        let p = AugmentParams {
            flip: false,
            shift: (1, 0),
            cutout_at: None,
        };
        let out = apply(&b, &p);
        // last row reads off the edge
        assert_eq!(&out.data()[12..16], &[0.0; 4]);
        // first row reads the old second row
        assert_eq!(&out.data()[0..4], &[4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn cutout_zeroes_a_square() {
        let b = Tensor::full(vec![1, 1, 6, 6], 1.0);
        let mut rng = seeded_rng(3);
        let flags = AugmentFlags {
            cutout: Some(2),
            ..Default::default()
        };
        let p = draw_params(&flags, 6, 6, &mut rng);
        let (top, left, size) = p.cutout_at.unwrap();
        assert_eq!(size, 2);
        let out = apply(&b, &p);
        let mut zeros = 0;
        for i in 0..6 {
            for j in 0..6 {
                let v = out.data()[i * 6 + j];
                if i >= top && i < top + 2 && j >= left && j < left + 2 {
                    assert_eq!(v, 0.0);
                    zeros += 1;
                } else {
                    assert_eq!(v, 1.0);
                }
            }
        }
        assert_eq!(zeros, 4);
    }

    #[test]
    fn plain_and_graph_application_agree() {
        let b = batch();
        let mut rng = seeded_rng(9);
        let flags = AugmentFlags {
            flip: true,
            crop_pad: Some(1),
            cutout: Some(2),
        };
        let p = draw_params(&flags, 4, 4, &mut rng);
        let plain = apply(&b, &p);
        let mut g = Graph::new();
        let x = g.leaf(b);
        let y = apply_graph(&mut g, x, &p);
        assert_eq!(g.value(y), &plain);
    }

    #[test]
    fn same_seed_same_transform() {
        let b = batch();
        let flags = AugmentFlags {
            flip: true,
            crop_pad: Some(1),
            cutout: Some(1),
        };
        assert_eq!(augment(&b, &flags, 42), augment(&b, &flags, 42));
    }

    #[test]
    fn gradient_flows_through_augmentation() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(vec![1, 1, 2, 2], 2.0));
        let p = AugmentParams {
            flip: true,
            shift: (0, 1),
            cutout_at: None,
        };
        let y = apply_graph(&mut g, x, &p);
        let s = g.sum(y);
        let grads = g.backward(s, &[x]).unwrap();
        // shifted-out pixels receive zero gradient, the rest exactly one
        let gd = g.value(grads[0]).data();
        assert_eq!(gd.iter().filter(|&&v| v == 1.0).count(), 2);
        assert_eq!(gd.iter().filter(|&&v| v == 0.0).count(), 2);
    }
}
