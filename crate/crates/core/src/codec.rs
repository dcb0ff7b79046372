//! Fitting fields to grids and decoding them back, at native or novel
//! resolutions.
//!
//! Fitting minimizes the full-batch sum of squared errors over the native
//! coordinate lattice with Adam; no coordinate minibatching. Decoding is a
//! single full-batch forward pass, so evaluating the same field on a denser
//! lattice is the whole cross-resolution story.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autograd::{adam_step, AdamHyper, AdamState, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::field::{forward, init_siren, FieldConfig, NeuralField, SyntheticDataset};
use crate::grid::{make_coordinate_set, CoordinateSet, GridTensor, LabeledDataset};
use crate::stream::seeded_rng;

/// Knobs for a single field fit. Defaults follow the fixed warm-up protocol:
/// 5000 iterations at learning rate 5e-4, no early stop.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop once the objective drops below this value.
    pub early_stop: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            iterations: 5000,
            lr: 5e-4,
            seed: 0,
            early_stop: None,
        }
    }
}

/// Outcome of one fit: the final full-batch objective (sum of squared
/// errors), the per-iteration objective trace, and wall time.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub iterations_run: usize,
    pub objective: f64,
    pub wall_ms: u64,
    pub seed: u64,
    pub history: Vec<f64>,
}

/// Coordinate lattice as an `[n, P]` matrix for batched evaluation.
pub fn coords_matrix(coords: &CoordinateSet) -> Tensor {
    let n = coords.dim();
    let p = coords.len();
    let mut data = vec![0.0; n * p];
    for i in 0..p {
        let pt = coords.point(i);
        for k in 0..n {
            data[k * p + i] = pt[k];
        }
    }
    Tensor::new(vec![n, p], data)
}

/// Build the field forward pass as graph nodes: sine layers
/// `sin(omega0 (W x + b))` and a final linear layer. `coords` is `[n, P]`;
/// the result is `[m, P]`, matching the channel-major grid layout.
pub fn field_forward_nodes(
    g: &mut Graph,
    weights: &[NodeId],
    biases: &[NodeId],
    omega0: f64,
    coords: NodeId,
) -> NodeId {
    let layers = weights.len() - 1;
    let mut h = coords;
    for l in 0..=layers {
        let a = g.matmul(weights[l], h);
        let a = g.add_col_bias(a, biases[l]);
        h = if l < layers {
            let scaled = g.scale(a, omega0);
            g.sin(scaled)
        } else {
            a
        };
    }
    h
}

/// Insert a field's parameters as differentiable leaves.
pub fn field_leaves(g: &mut Graph, f: &NeuralField) -> (Vec<NodeId>, Vec<NodeId>) {
    let weights = f.weights.iter().map(|w| g.leaf(w.clone())).collect();
    let biases = f.biases.iter().map(|b| g.leaf(b.clone())).collect();
    (weights, biases)
}

/// Fit a field to a grid by full-batch Adam on the sum of squared errors
/// over the native lattice. Deterministic per seed.
pub fn fit_field(
    target: &GridTensor,
    cfg: &FieldConfig,
    opts: &FitOptions,
) -> Result<(NeuralField, FitReport)> {
    if cfg.input_dim != target.rank() {
        return Err(Error::invalid(format!(
            "field input dim {} does not match grid rank {}",
            cfg.input_dim,
            target.rank()
        )));
    }
    if cfg.output_dim != target.channels() {
        return Err(Error::invalid(format!(
            "field output dim {} does not match grid channels {}",
            cfg.output_dim,
            target.channels()
        )));
    }
    let start = Instant::now();
    let mut field = init_siren(cfg, opts.seed)?;
    let coords = make_coordinate_set(target.shape())?;
    let coords_t = coords_matrix(&coords);
    let target_t = Tensor::new(
        vec![target.channels(), target.points()],
        target.values().to_vec(),
    );

    let mut params: Vec<Tensor> = field
        .weights
        .iter()
        .cloned()
        .chain(field.biases.iter().cloned())
        .collect();
    let layers = field.weights.len();
    let mut state = AdamState::new(&params);
    let hyper = AdamHyper::with_lr(opts.lr);
    let mut history = Vec::with_capacity(opts.iterations);
    let mut ran = 0;

    for _ in 0..opts.iterations {
        let mut g = Graph::new();
        let leaves: Vec<NodeId> = params.iter().map(|t| g.leaf(t.clone())).collect();
        let coords_node = g.constant(coords_t.clone());
        let out = field_forward_nodes(
            &mut g,
            &leaves[..layers],
            &leaves[layers..],
            cfg.omega0,
            coords_node,
        );
        let t = g.constant(target_t.clone());
        let diff = g.sub(out, t);
        let sq = g.square(diff);
        let obj = g.sum(sq);
        let value = g.value(obj).item();
        history.push(value);

        let grads = g.backward(obj, &leaves)?;
        let grad_vals: Vec<Tensor> = grads.iter().map(|&n| g.value(n).clone()).collect();
        adam_step(&mut params, &grad_vals, &mut state, hyper)?;
        ran += 1;
        if let Some(tol) = opts.early_stop {
            if value < tol {
                break;
            }
        }
    }

    field.weights = params[..layers].to_vec();
    field.biases = params[layers..].to_vec();

    // final full-batch objective with the updated parameters
    let decoded = forward(&field, &coords)?;
    let objective: f64 = decoded
        .values()
        .iter()
        .zip(target.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    Ok((
        field,
        FitReport {
            iterations_run: ran,
            objective,
            wall_ms: start.elapsed().as_millis() as u64,
            seed: opts.seed,
            history,
        },
    ))
}

/// Evaluate a field on the inclusive lattice of the given shape.
pub fn decode(f: &NeuralField, dims: &[usize]) -> Result<GridTensor> {
    if dims.len() != f.config.input_dim {
        return Err(Error::invalid(format!(
            "decode rank {} does not match field input dim {}",
            dims.len(),
            f.config.input_dim
        )));
    }
    forward(f, &make_coordinate_set(dims)?)
}

/// Decode at a resolution other than the one the field was fitted at.
/// Identical to [`decode`] with a different lattice; named separately for
/// the experiment harness.
pub fn decode_cross_resolution(f: &NeuralField, target_dims: &[usize]) -> Result<GridTensor> {
    decode(f, target_dims)
}

/// Fit `per_class` fields per class to randomly sampled real instances.
///
/// Sampling is without replacement within each class and seeded; field `j`
/// fits with seed `opts.seed + j`, so fits are independent and may run in
/// parallel without changing the result.
pub fn warmup_dataset(
    real: &LabeledDataset,
    per_class: usize,
    cfg: &FieldConfig,
    opts: &FitOptions,
) -> Result<(SyntheticDataset, Vec<FitReport>)> {
    if per_class == 0 {
        return Err(Error::invalid("per_class must be >= 1"));
    }
    let first = real
        .instances
        .first()
        .ok_or_else(|| Error::invalid("cannot warm up from an empty dataset"))?;
    let mut rng = seeded_rng(opts.seed);
    let mut picks: Vec<usize> = Vec::with_capacity(per_class * real.class_count);
    for class in 0..real.class_count {
        let mut idx = real.indices_of_class(class);
        if idx.len() < per_class {
            return Err(Error::invalid(format!(
                "class {class} has {} instances, need {per_class}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        picks.extend_from_slice(&idx[..per_class]);
    }

    let jobs: Vec<(usize, usize)> = picks.iter().copied().enumerate().collect();
    let fitted: Result<Vec<(NeuralField, FitReport)>> = jobs
        .par_iter()
        .map(|&(j, inst)| {
            let o = FitOptions {
                seed: opts.seed.wrapping_add(j as u64),
                ..opts.clone()
            };
            fit_field(&real.instances[inst], cfg, &o)
        })
        .collect();
    let fitted = fitted?;

    let mut fields = Vec::with_capacity(fitted.len());
    let mut reports = Vec::with_capacity(fitted.len());
    for (f, r) in fitted {
        fields.push(f);
        reports.push(r);
    }
    let labels = picks.iter().map(|&i| real.labels[i]).collect();
    let ds = SyntheticDataset::new(fields, labels, first.shape().to_vec(), first.channels())?;
    Ok((ds, reports))
}
