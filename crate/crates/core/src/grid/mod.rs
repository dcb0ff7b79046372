//! Dense grid tensors, coordinate lattices, and labeled datasets.
//!
//! A [`GridTensor`] holds an `m`-channel grid over `n` axes in channel-major,
//! row-major-per-axis order. A [`CoordinateSet`] is the matching lattice of
//! normalized points on `[-1, 1]^n`, inclusive of endpoints, enumerated
//! lexicographically with axis 1 slowest.

mod dct;
mod io;
mod metrics;
mod resample;

pub use dct::{dct, idct};
pub use io::{
    dataset_from_bytes, dataset_to_bytes, grid_from_bytes, grid_to_bytes, load_external,
    load_idx_images, load_idx_labels, read_dataset, read_grid, write_dataset, write_grid,
    ExternalFormat,
};
pub use metrics::{mse, psnr};
pub use resample::{resample, ResampleMethod};

use crate::error::{Error, Result};

/// Dense n-dimensional grid with `channels` values per lattice point.
///
/// Values are stored channel-major: all of channel 0's grid (row-major over
/// the axes, axis 1 slowest), then channel 1's, and so on. The nominal value
/// range for image-like data is `[0, 1]` but it is not enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTensor {
    channels: usize,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl GridTensor {
    pub fn new(channels: usize, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("channel count must be >= 1"));
        }
        if shape.is_empty() {
            return Err(Error::invalid("grid needs at least one axis"));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid("grid axes must be >= 1"));
        }
        let expect = channels * shape.iter().product::<usize>();
        if values.len() != expect {
            return Err(Error::invalid(format!(
                "value buffer has {} entries, expected {}",
                values.len(),
                expect
            )));
        }
        Ok(GridTensor {
            channels,
            shape,
            values,
        })
    }

    /// Grid filled with a single value.
    pub fn constant(channels: usize, shape: Vec<usize>, value: f64) -> Result<Self> {
        let len = channels * shape.iter().product::<usize>();
        GridTensor::new(channels, shape, vec![value; len])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Lattice points per channel.
    pub fn points(&self) -> usize {
        self.shape.iter().product()
    }

    /// Total stored scalars `m * N1 * ... * Nn`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// One channel's grid as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.points();
        &self.values[c * p..(c + 1) * p]
    }

    pub fn same_layout(&self, other: &GridTensor) -> bool {
        self.channels == other.channels && self.shape == other.shape
    }
}

/// Ordered lattice of normalized coordinates on `[-1, 1]^n`.
///
/// For axes with `N >= 2` the components are `-1 + 2i/(N-1)`; a degenerate
/// axis (`N == 1`) sits at 0. Points are stored flattened, `n` components
/// per point, in lexicographic order over axis indices (axis 1 slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSet {
    dims: Vec<usize>,
    points: Vec<f64>,
}

impl CoordinateSet {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Number of lattice points.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.points[i * n..(i + 1) * n]
    }

    /// All points, flattened with `dim()` components each.
    pub fn flat(&self) -> &[f64] {
        &self.points
    }
}

/// Normalized coordinate of index `i` on an axis of length `n`.
pub fn axis_coordinate(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

/// Build the inclusive-endpoint lattice for the given axis lengths.
pub fn make_coordinate_set(dims: &[usize]) -> Result<CoordinateSet> {
    if dims.is_empty() {
        return Err(Error::invalid("coordinate set needs at least one axis"));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid("axis lengths must be >= 1"));
    }
    let n = dims.len();
    let total: usize = dims.iter().product();
    let mut points = Vec::with_capacity(total * n);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        for (k, &i) in idx.iter().enumerate() {
            points.push(axis_coordinate(i, dims[k]));
        }
        // lexicographic increment, last axis fastest
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(CoordinateSet {
        dims: dims.to_vec(),
        points,
    })
}

/// A collection of equally shaped grids with class labels in `0..class_count`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub instances: Vec<GridTensor>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(
        instances: Vec<GridTensor>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if instances.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} instances but {} labels",
                instances.len(),
                labels.len()
            )));
        }
        if class_count == 0 {
            return Err(Error::invalid("class count must be >= 1"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if let Some(first) = instances.first() {
            if let Some(odd) = instances.iter().find(|g| !g.same_layout(first)) {
                return Err(Error::invalid(format!(
                    "instances disagree on layout: {}x{:?} vs {}x{:?}",
                    first.channels(),
                    first.shape(),
                    odd.channels(),
                    odd.shape()
                )));
            }
        }
        Ok(LabeledDataset {
            instances,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Indices of every instance with the given label.
    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }
}

/// Apply a lane transform along one axis of a channel-major grid buffer.
///
/// `f` receives each input lane (contiguous along `axis`) and writes the
/// output lane; lanes have `shape[axis]` and `out_len` entries respectively.
pub(crate) fn map_axis<F>(
    channels: usize,
    shape: &[usize],
    values: &[f64],
    axis: usize,
    out_len: usize,
    mut f: F,
) -> (Vec<usize>, Vec<f64>)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n_in = shape[axis];
    let pre: usize = shape[..axis].iter().product();
    let post: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = out_len;
    let mut out = vec![0.0; channels * pre * out_len * post];

    let mut lane_in = vec![0.0; n_in];
    let mut lane_out = vec![0.0; out_len];
    for c in 0..channels {
        for p in 0..pre {
            for q in 0..post {
                let base_in = ((c * pre + p) * n_in) * post + q;
                let base_out = ((c * pre + p) * out_len) * post + q;
                for i in 0..n_in {
                    lane_in[i] = values[base_in + i * post];
                }
                f(&lane_in, &mut lane_out);
                for (i, &v) in lane_out.iter().enumerate() {
                    out[base_out + i * post] = v;
                }
            }
        }
    }
    (out_shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_endpoints_n2() {
        let c = make_coordinate_set(&[2]).unwrap();
        assert_eq!(c.flat(), &[-1.0, 1.0]);
    }

    #[test]
    fn lattice_symmetry_n3() {
        let c = make_coordinate_set(&[3]).unwrap();
        assert_eq!(c.flat(), &[-1.0, 0.0, 1.0]);
    }

    // hand enumeration of the lexicographic product
    #[test]
    fn lattice_order_2x2() {
        let c = make_coordinate_set(&[2, 2]).unwrap();
        assert_eq!(
            c.flat(),
            &[-1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn degenerate_axis_maps_to_zero() {
        let c = make_coordinate_set(&[1, 3]).unwrap();
        assert_eq!(c.point(0), &[0.0, -1.0]);
        assert_eq!(c.point(2), &[0.0, 1.0]);
    }

    #[test]
    fn empty_dims_rejected() {
        assert!(make_coordinate_set(&[]).is_err());
    }

    #[test]
    fn grid_length_invariant() {
        assert!(GridTensor::new(2, vec![3, 4], vec![0.0; 24]).is_ok());
        assert!(GridTensor::new(2, vec![3, 4], vec![0.0; 23]).is_err());
        assert!(GridTensor::new(0, vec![3], vec![]).is_err());
        assert!(GridTensor::new(1, vec![], vec![]).is_err());
    }

    #[test]
    fn dataset_checks_labels_and_layout() {
        let a = GridTensor::constant(1, vec![2, 2], 0.0).unwrap();
        let b = GridTensor::constant(1, vec![2, 2], 1.0).unwrap();
        assert!(LabeledDataset::new(vec![a.clone(), b.clone()], vec![0, 1], 2).is_ok());
        assert!(LabeledDataset::new(vec![a.clone(), b.clone()], vec![0, 2], 2).is_err());
        let c = GridTensor::constant(1, vec![3, 2], 0.0).unwrap();
        assert!(LabeledDataset::new(vec![a, c], vec![0, 1], 2).is_err());
    }

    #[test]
    fn negated_lattice_equals_reversed() {
        for dims in [vec![4], vec![3, 5], vec![2, 3, 2]] {
            let c = make_coordinate_set(&dims).unwrap();
            let n = c.dim();
            let total = c.len();
            for i in 0..total {
                let p = c.point(i);
                let q = c.point(total - 1 - i);
                for k in 0..n {
                    assert!((p[k] + q[k]).abs() < 1e-15);
                }
            }
        }
    }
}
