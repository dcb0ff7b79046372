//! The small convolutional classifier used for matching and evaluation:
//! repeated blocks of 3x3 conv, optional instance norm, ReLU, and 2x2
//! average pooling, closed by a linear head.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::autograd::{Graph, NodeId, Padding, Tensor};
use crate::error::{Error, Result};
use crate::stream::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Instance,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvNetConfig {
    /// Number of conv blocks; each halves the spatial extent.
    pub depth: usize,
    /// Filters per conv layer.
    pub width: usize,
    pub in_channels: usize,
    /// Input spatial extent `(H, W)`; must be divisible by `2^depth`.
    pub input_dims: (usize, usize),
    pub classes: usize,
    pub norm: NormKind,
}

impl ConvNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.in_channels == 0 || self.classes == 0 {
            return Err(Error::invalid("convnet dims must be >= 1"));
        }
        let div = 1usize << self.depth;
        if self.input_dims.0 % div != 0 || self.input_dims.1 % div != 0 {
            return Err(Error::invalid(format!(
                "input {}x{} not divisible by 2^depth = {div}",
                self.input_dims.0, self.input_dims.1
            )));
        }
        Ok(())
    }

    /// Flattened feature length after the conv blocks.
    pub fn feature_dim(&self) -> usize {
        let div = 1usize << self.depth;
        self.width * (self.input_dims.0 / div) * (self.input_dims.1 / div)
    }
}

/// Parameter layout: per block `[conv_w [width, cin, 3, 3], conv_b [width]]`,
/// then `[fc_w [classes, F], fc_b [classes]]`.
#[derive(Debug, Clone)]
pub struct ConvNet {
    pub config: ConvNetConfig,
    pub params: Vec<Tensor>,
}

impl ConvNet {
    pub fn init(config: &ConvNetConfig, seed: u64) -> Result<ConvNet> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let mut params = Vec::with_capacity(2 * config.depth + 2);
        let mut cin = config.in_channels;
        for _ in 0..config.depth {
            let fan_in = cin * 9;
            let limit = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let w: Vec<f64> = (0..config.width * cin * 9)
                .map(|_| dist.sample(&mut rng))
                .collect();
            params.push(Tensor::new(vec![config.width, cin, 3, 3], w));
            params.push(Tensor::zeros(vec![config.width]));
            cin = config.width;
        }
        let f = config.feature_dim();
        let limit = (6.0 / f as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let w: Vec<f64> = (0..config.classes * f).map(|_| dist.sample(&mut rng)).collect();
        params.push(Tensor::new(vec![config.classes, f], w));
        params.push(Tensor::zeros(vec![config.classes]));
        Ok(ConvNet {
            config: config.clone(),
            params,
        })
    }

    pub fn fresh_like(&self, rng: &mut impl Rng) -> Result<ConvNet> {
        ConvNet::init(&self.config, rng.gen())
    }

    /// Insert all parameters as graph leaves.
    pub fn leaves(&self, g: &mut Graph) -> Vec<NodeId> {
        self.params.iter().map(|p| g.leaf(p.clone())).collect()
    }

    /// Conv-block features of `x` (`[B, Cin, H, W]`) as `[B, F]`.
    pub fn features(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> NodeId {
        let mut h = x;
        for blk in 0..self.config.depth {
            let w = params[2 * blk];
            let b = params[2 * blk + 1];
            h = g.conv2d(h, w, Some(b), Padding::Same);
            if self.config.norm == NormKind::Instance {
                h = g.instance_norm(h, 1e-5);
            }
            h = g.relu(h);
            h = g.avg_pool2(h);
        }
        let shape = g.value(h).shape().to_vec();
        let bsz = shape[0];
        let f: usize = shape[1..].iter().product();
        g.reshape(h, vec![bsz, f])
    }

    /// Class logits of `x` as `[B, classes]`.
    pub fn logits(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> NodeId {
        let feats = self.features(g, params, x);
        let fc_w = params[params.len() - 2];
        let fc_b = params[params.len() - 1];
        let wt = g.transpose(fc_w);
        let scores = g.matmul(feats, wt);
        g.add_bias(scores, fc_b)
    }

    /// Plain forward pass for inference: argmax class per instance.
    pub fn predict(&self, batch: &Tensor) -> Vec<usize> {
        let mut g = Graph::new();
        let params = self.leaves(&mut g);
        let x = g.constant(batch.clone());
        let logits = self.logits(&mut g, &params, x);
        let v = g.value(logits);
        let classes = self.config.classes;
        (0..v.shape()[0])
            .map(|i| {
                let row = &v.data()[i * classes..(i + 1) * classes];
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, _)| j)
                    .unwrap()
            })
            .collect()
    }
}

/// One-hot targets for a label slice.
pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(vec![labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * classes + l] = 1.0;
    }
    t
}

/// Stack equally shaped grids into a `[B, C, H, W]` batch tensor.
pub fn stack_grids(grids: &[&crate::grid::GridTensor]) -> Result<Tensor> {
    let first = grids
        .first()
        .ok_or_else(|| Error::invalid("cannot stack an empty batch"))?;
    if first.rank() != 2 {
        return Err(Error::UnsupportedRank { rank: first.rank() });
    }
    let (c, h, w) = (first.channels(), first.shape()[0], first.shape()[1]);
    let mut data = Vec::with_capacity(grids.len() * c * h * w);
    for g in grids {
        if !g.same_layout(first) {
            return Err(Error::invalid("batch grids disagree on layout"));
        }
        data.extend_from_slice(g.values());
    }
    Ok(Tensor::new(vec![grids.len(), c, h, w], data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ConvNetConfig {
        ConvNetConfig {
            depth: 2,
            width: 8,
            in_channels: 3,
            input_dims: (8, 8),
            classes: 4,
            norm: NormKind::Instance,
        }
    }

    #[test]
    fn shapes_flow_through() {
        let net = ConvNet::init(&cfg(), 1).unwrap();
        let mut g = Graph::new();
        let params = net.leaves(&mut g);
        let x = g.constant(Tensor::zeros(vec![2, 3, 8, 8]));
        let f = net.features(&mut g, &params, x);
        assert_eq!(g.value(f).shape(), &[2, 8 * 2 * 2]);
        let l = net.logits(&mut g, &params, x);
        assert_eq!(g.value(l).shape(), &[2, 4]);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ConvNet::init(&cfg(), 7).unwrap();
        let b = ConvNet::init(&cfg(), 7).unwrap();
        assert_eq!(a.params, b.params);
        let c = ConvNet::init(&cfg(), 8).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn depth_divisibility_checked() {
        let mut c = cfg();
        c.input_dims = (6, 8);
        assert!(ConvNet::init(&c, 0).is_err());
    }

    #[test]
    fn classifier_gradient_matches_finite_differences() {
        let small = ConvNetConfig {
            depth: 1,
            width: 3,
            in_channels: 1,
            input_dims: (4, 4),
            classes: 2,
            norm: NormKind::Instance,
        };
        let net = ConvNet::init(&small, 3).unwrap();
        let point = net.params.clone();
        let x = {
            let mut rng = seeded_rng(5);
            let d: Vec<f64> = (0..2 * 16).map(|_| rng.gen_range(0.0..1.0)).collect();
            Tensor::new(vec![2, 1, 4, 4], d)
        };
        let targets = one_hot(&[0, 1], 2);
        let err = crate::autograd::grad_check(
            move |g, p| {
                let xin = g.constant(x.clone());
                let logits = net.logits(g, p, xin);
                g.softmax_cross_entropy(logits, &targets)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "classifier grad_check error {err}");
    }
}
