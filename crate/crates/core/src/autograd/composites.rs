//! Composite operations built from the primitive set.
//!
//! Everything here lowers to the primitives in `mod.rs`, so each composite
//! inherits an exact VJP by the chain rule and stays differentiable to any
//! order the primitives support.

use std::rc::Rc;

use super::{GatherMap, Graph, NodeId, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of (k-1)/2 per side; output keeps the spatial size.
    Same,
    /// No padding; output shrinks by k-1.
    Valid,
}

fn flat4(c1: usize, c2: usize, c3: usize, s: &[usize; 4]) -> usize {
    ((c1 * s[1] + c2) * s[2] + c3) * s[3]
}

impl Graph {
    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.mul(a, a)
    }

    /// Mean of all elements, as a scalar node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let m = self.mul(a, b);
        self.sum(m)
    }

    /// `x + b` broadcast over rows: `x` is `[r, c]`, `b` is `[c]`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let r = self.value(x).shape()[0];
        let c = self.value(x).shape()[1];
        assert_eq!(self.value(b).shape(), &[c], "bias length must match columns");
        let ones = self.constant(Tensor::full(vec![r, 1], 1.0));
        let brow = self.reshape(b, vec![1, c]);
        let full = self.matmul(ones, brow);
        self.add(x, full)
    }

    /// `x + b` broadcast over columns: `x` is `[r, c]`, `b` is `[r]`.
    pub fn add_col_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let r = self.value(x).shape()[0];
        let c = self.value(x).shape()[1];
        assert_eq!(self.value(b).shape(), &[r], "bias length must match rows");
        let ones = self.constant(Tensor::full(vec![1, c], 1.0));
        let bcol = self.reshape(b, vec![r, 1]);
        let full = self.matmul(bcol, ones);
        self.add(x, full)
    }

    /// Mean over rows of an `[r, c]` node, giving `[1, c]`.
    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let r = self.value(x).shape()[0];
        let w = self.constant(Tensor::full(vec![1, r], 1.0 / r as f64));
        self.matmul(w, x)
    }

    /// Extract one row of an `[r, c]` node as a `[c]` vector.
    pub fn row(&mut self, x: NodeId, i: usize) -> NodeId {
        let shape = self.value(x).shape().to_vec();
        assert_eq!(shape.len(), 2);
        let (r, c) = (shape[0], shape[1]);
        assert!(i < r);
        let idx = (i * c..(i + 1) * c).map(|k| k as i64).collect();
        let map = Rc::new(GatherMap::new(idx, shape, vec![c]));
        self.gather(x, map)
    }

    /// Cosine similarity of two equally shaped nodes, flattened.
    /// Undefined at zero vectors; callers guard.
    pub fn cosine_similarity(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = self.dot(a, b);
        let qa = self.dot(a, a);
        let qb = self.dot(b, b);
        let q = self.mul(qa, qb);
        let inv = self.rsqrt(q);
        self.mul(d, inv)
    }

    /// Mean softmax cross-entropy of `logits` `[B, C]` against constant
    /// one-hot (or soft) `targets` `[B, C]`. The internal max shift is taken
    /// as a constant, which leaves the gradient exact.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: &Tensor) -> NodeId {
        let shape = self.value(logits).shape().to_vec();
        assert_eq!(shape.len(), 2, "logits must be [batch, classes]");
        let (bsz, classes) = (shape[0], shape[1]);
        assert_eq!(targets.shape(), &[bsz, classes], "target shape mismatch");

        let vals = self.value(logits).data();
        let mut row_max = vec![0.0; bsz];
        for i in 0..bsz {
            row_max[i] = vals[i * classes..(i + 1) * classes]
                .iter()
                .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        }
        let mut max_full = Vec::with_capacity(bsz * classes);
        for &m in &row_max {
            max_full.extend(std::iter::repeat(m).take(classes));
        }
        let max_full = self.constant(Tensor::new(vec![bsz, classes], max_full));
        let max_col = self.constant(Tensor::new(vec![bsz, 1], row_max));

        let shifted = self.sub(logits, max_full);
        let e = self.exp(shifted);
        let ones = self.constant(Tensor::full(vec![classes, 1], 1.0));
        let rowsum = self.matmul(e, ones);
        let lnz = self.ln(rowsum);
        let lse = self.add(lnz, max_col);

        let t = self.constant(targets.clone());
        let picked_terms = self.mul(logits, t);
        let ones2 = self.constant(Tensor::full(vec![classes, 1], 1.0));
        let picked = self.matmul(picked_terms, ones2);

        let per_row = self.sub(lse, picked);
        self.mean(per_row)
    }

    /// 2-D convolution, stride 1, kernel `[Cout, Cin, kh, kw]` over input
    /// `[B, Cin, H, W]`, lowered to an index gather plus one matmul.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
        padding: Padding,
    ) -> NodeId {
        let xs: [usize; 4] = self.value(x).shape().try_into().expect("conv input rank 4");
        let ws: [usize; 4] = self.value(w).shape().try_into().expect("conv kernel rank 4");
        let (bsz, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, cin2, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        assert_eq!(cin, cin2, "conv channel mismatch");
        let (ph, pw) = match padding {
            Padding::Same => {
                assert!(kh % 2 == 1 && kw % 2 == 1, "same padding needs odd kernels");
                ((kh - 1) / 2, (kw - 1) / 2)
            }
            Padding::Valid => (0, 0),
        };
        let ho = h + 2 * ph + 1 - kh;
        let wo = wd + 2 * pw + 1 - kw;
        let cols_rows = cin * kh * kw;
        let cols_cols = bsz * ho * wo;

        // im2col as a gather: rows iterate (ci, di, dj), columns (b, oi, oj)
        let mut idx = Vec::with_capacity(cols_rows * cols_cols);
        for ci in 0..cin {
            for di in 0..kh {
                for dj in 0..kw {
                    for b in 0..bsz {
                        for oi in 0..ho {
                            let si = oi + di;
                            let in_i = si as i64 - ph as i64;
                            for oj in 0..wo {
                                let in_j = (oj + dj) as i64 - pw as i64;
                                if in_i < 0 || in_i >= h as i64 || in_j < 0 || in_j >= wd as i64 {
                                    idx.push(-1);
                                } else {
                                    idx.push(
                                        (flat4(b, ci, in_i as usize, &xs) + in_j as usize) as i64,
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        let map = Rc::new(GatherMap::new(idx, xs.to_vec(), vec![cols_rows, cols_cols]));
        let cols = self.gather(x, map);
        let wm = self.reshape(w, vec![cout, cols_rows]);
        let mut y = self.matmul(wm, cols); // [Cout, B*ho*wo]
        if let Some(b) = bias {
            y = self.add_col_bias(y, b);
        }
        // permute [Cout, B, ho, wo] -> [B, Cout, ho, wo]
        let howo = ho * wo;
        let mut perm = Vec::with_capacity(bsz * cout * howo);
        for b in 0..bsz {
            for co in 0..cout {
                let base = co * cols_cols + b * howo;
                perm.extend((0..howo).map(|k| (base + k) as i64));
            }
        }
        let pmap = Rc::new(GatherMap::new(
            perm,
            vec![cout, cols_cols],
            vec![bsz, cout, ho, wo],
        ));
        self.gather(y, pmap)
    }

    /// 2x2 average pooling with stride 2 over `[B, C, H, W]` (H, W even).
    pub fn avg_pool2(&mut self, x: NodeId) -> NodeId {
        let xs: [usize; 4] = self.value(x).shape().try_into().expect("pool input rank 4");
        let (bsz, ch, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even spatial dims");
        let (ho, wo) = (h / 2, w / 2);
        let rows = bsz * ch * ho * wo;
        let mut idx = Vec::with_capacity(rows * 4);
        for b in 0..bsz {
            for c in 0..ch {
                for oi in 0..ho {
                    for oj in 0..wo {
                        let base = flat4(b, c, 2 * oi, &xs) + 2 * oj;
                        idx.push(base as i64);
                        idx.push((base + 1) as i64);
                        idx.push((base + w) as i64);
                        idx.push((base + w + 1) as i64);
                    }
                }
            }
        }
        let map = Rc::new(GatherMap::new(idx, xs.to_vec(), vec![rows, 4]));
        let windows = self.gather(x, map);
        let quarter = self.constant(Tensor::full(vec![4, 1], 0.25));
        let pooled = self.matmul(windows, quarter);
        self.reshape(pooled, vec![bsz, ch, ho, wo])
    }

    /// Per-instance, per-channel normalization over the spatial extent of a
    /// `[B, C, H, W]` node: `(x - mean) / sqrt(var + eps)`.
    pub fn instance_norm(&mut self, x: NodeId, eps: f64) -> NodeId {
        let xs: [usize; 4] = self.value(x).shape().try_into().expect("norm input rank 4");
        let (bsz, ch, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (bc, hw) = (bsz * ch, h * w);
        let x2 = self.reshape(x, vec![bc, hw]);
        let avg = self.constant(Tensor::full(vec![hw, 1], 1.0 / hw as f64));
        let ones_row = self.constant(Tensor::full(vec![1, hw], 1.0));
        let mu = self.matmul(x2, avg);
        let mu_full = self.matmul(mu, ones_row);
        let cen = self.sub(x2, mu_full);
        let cen_sq = self.square(cen);
        let var = self.matmul(cen_sq, avg);
        let eps_c = self.constant(Tensor::full(vec![bc, 1], eps));
        let stabilized = self.add(var, eps_c);
        let inv = self.rsqrt(stabilized);
        let inv_full = self.matmul(inv, ones_row);
        let y = self.mul(cen, inv_full);
        self.reshape(y, vec![bsz, ch, h, w])
    }
}
