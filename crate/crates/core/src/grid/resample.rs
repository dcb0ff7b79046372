//! Separable grid resampling with the align-corners convention.
//!
//! Output sample positions follow the same inclusive-endpoint lattice as
//! [`make_coordinate_set`](super::make_coordinate_set), so resampling and
//! coordinate-network decoding agree on where a pixel lives.

use super::{axis_coordinate, map_axis, GridTensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMethod {
    Nearest,
    Bilinear,
    Bicubic,
}

impl ResampleMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(ResampleMethod::Nearest),
            "bilinear" | "linear" => Ok(ResampleMethod::Bilinear),
            "bicubic" | "cubic" => Ok(ResampleMethod::Bicubic),
            other => Err(Error::invalid(format!("unknown resample method {other:?}"))),
        }
    }
}

/// Keys cubic convolution kernel, a = -1/2. Interpolating and exact on
/// constants and linear ramps.
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        (((t - 5.0) * t + 8.0) * t - 4.0) * A
    } else {
        0.0
    }
}

/// Source index position (in input index space) of output sample `i`.
///
/// Uses normalized coordinates: both lattices live on [-1, 1], so
/// `p = (t + 1)/2 * (n_in - 1)`. For `n_out >= 2` this is exactly the usual
/// align-corners mapping `i * (n_in - 1) / (n_out - 1)`; a single output
/// sample lands on the axis center.
fn source_position(i: usize, n_out: usize, n_in: usize) -> f64 {
    let t = axis_coordinate(i, n_out);
    (t + 1.0) * 0.5 * (n_in - 1) as f64
}

fn interp_lane(input: &[f64], output: &mut [f64], method: ResampleMethod) {
    let n_in = input.len();
    let n_out = output.len();
    let clamp = |j: i64| -> usize { j.clamp(0, n_in as i64 - 1) as usize };
    for (i, out) in output.iter_mut().enumerate() {
        let p = source_position(i, n_out, n_in);
        *out = match method {
            ResampleMethod::Nearest => input[clamp(p.round() as i64)],
            ResampleMethod::Bilinear => {
                let j0 = p.floor();
                let frac = p - j0;
                let a = input[clamp(j0 as i64)];
                let b = input[clamp(j0 as i64 + 1)];
                a + (b - a) * frac
            }
            ResampleMethod::Bicubic => {
                let j0 = p.floor() as i64;
                let frac = p - j0 as f64;
                let mut acc = 0.0;
                for tap in -1..=2i64 {
                    let w = cubic_weight(frac - tap as f64);
                    acc += w * input[clamp(j0 + tap)];
                }
                acc
            }
        };
    }
}

/// Resample a grid to `target` axis lengths, axis by axis.
pub fn resample(g: &GridTensor, target: &[usize], method: ResampleMethod) -> Result<GridTensor> {
    let rank = g.rank();
    if !(1..=3).contains(&rank) {
        return Err(Error::UnsupportedRank { rank });
    }
    if target.len() != rank {
        return Err(Error::invalid(format!(
            "target rank {} does not match grid rank {}",
            target.len(),
            rank
        )));
    }
    if target.iter().any(|&d| d == 0) {
        return Err(Error::invalid("target axes must be >= 1"));
    }

    let mut shape = g.shape().to_vec();
    let mut values = g.values().to_vec();
    for axis in 0..rank {
        if shape[axis] == target[axis] && method == ResampleMethod::Nearest {
            continue; // nearest on an unchanged axis is the identity
        }
        let (s, v) = map_axis(g.channels(), &shape, &values, axis, target[axis], |i, o| {
            interp_lane(i, o, method)
        });
        shape = s;
        values = v;
    }
    GridTensor::new(g.channels(), shape, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn same_shape_nearest_is_identity() {
        let g = GridTensor::new(2, vec![3, 4], (0..24).map(|i| i as f64).collect()).unwrap();
        let r = resample(&g, &[3, 4], ResampleMethod::Nearest).unwrap();
        assert_eq!(g, r);
    }

    // hand-computed align-corners linear weights: positions 0, 1/3, 2/3, 1
    #[test]
    fn linear_upsample_1x2_to_1x4() {
        let g = GridTensor::new(1, vec![1, 2], vec![0.0, 1.0]).unwrap();
        let r = resample(&g, &[1, 4], ResampleMethod::Bilinear).unwrap();
        let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (a, b) in r.values().iter().zip(want.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn constants_survive_every_method() {
        let g = GridTensor::constant(3, vec![4, 5], 0.37).unwrap();
        for m in [
            ResampleMethod::Nearest,
            ResampleMethod::Bilinear,
            ResampleMethod::Bicubic,
        ] {
            let r = resample(&g, &[7, 3], m).unwrap();
            assert_eq!(r.shape(), &[7, 3]);
            for &v in r.values() {
                assert_abs_diff_eq!(v, 0.37, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cubic_reproduces_linear_ramp_away_from_borders() {
        let g = GridTensor::new(1, vec![5], vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = resample(&g, &[9], ResampleMethod::Bicubic).unwrap();
        // border taps are clamped, so exact linear reproduction holds where
        // all four taps are in range (source positions within [1, 3])
        for (i, &v) in r.values().iter().enumerate() {
            let p = i as f64 * 0.5;
            if (1.0..=3.0).contains(&p) {
                assert_abs_diff_eq!(v, p, epsilon = 1e-12);
            }
        }
        // endpoints are interpolating regardless
        assert_abs_diff_eq!(r.values()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.values()[8], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn single_point_target_takes_center() {
        let g = GridTensor::new(1, vec![3], vec![1.0, 5.0, 9.0]).unwrap();
        let r = resample(&g, &[1], ResampleMethod::Bilinear).unwrap();
        assert_abs_diff_eq!(r.values()[0], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_checked() {
        let g = GridTensor::constant(1, vec![2, 2, 2, 2], 0.0).unwrap();
        assert!(matches!(
            resample(&g, &[2, 2, 2, 2], ResampleMethod::Nearest),
            Err(Error::UnsupportedRank { rank: 4 })
        ));
    }
}
