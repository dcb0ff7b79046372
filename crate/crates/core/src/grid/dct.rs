//! Orthonormal DCT-II and its inverse, applied separably per axis and channel.

use super::{map_axis, GridTensor};
use crate::error::{Error, Result};

/// Orthonormal DCT-II matrix: `M[k][n] = s_k cos(pi (2n+1) k / (2N))`
/// with `s_0 = sqrt(1/N)` and `s_k = sqrt(2/N)` otherwise.
fn dct_matrix(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let s = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        for j in 0..n {
            m[k * n + j] = s * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64
                / (2.0 * nf))
                .cos();
        }
    }
    m
}

fn apply(g: &GridTensor, inverse: bool) -> Result<GridTensor> {
    let rank = g.rank();
    if !(1..=3).contains(&rank) {
        return Err(Error::UnsupportedRank { rank });
    }
    let mut shape = g.shape().to_vec();
    let mut values = g.values().to_vec();
    for axis in 0..rank {
        let n = shape[axis];
        let mat = dct_matrix(n);
        let (s, v) = map_axis(g.channels(), &shape, &values, axis, n, |lane_in, lane_out| {
            for (k, out) in lane_out.iter_mut().enumerate() {
                let mut acc = 0.0;
                if inverse {
                    // orthonormal: inverse is the transpose
                    for (j, &x) in lane_in.iter().enumerate() {
                        acc += mat[j * n + k] * x;
                    }
                } else {
                    for (j, &x) in lane_in.iter().enumerate() {
                        acc += mat[k * n + j] * x;
                    }
                }
                *out = acc;
            }
        });
        shape = s;
        values = v;
    }
    GridTensor::new(g.channels(), shape, values)
}

/// Forward orthonormal DCT-II over every spatial axis, per channel.
pub fn dct(g: &GridTensor) -> Result<GridTensor> {
    apply(g, false)
}

/// Inverse of [`dct`]; `idct(dct(g)) == g` to within 1e-9.
pub fn idct(c: &GridTensor) -> Result<GridTensor> {
    apply(c, true)
}
