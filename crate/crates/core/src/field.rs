//! Sine-activated coordinate networks: the container a synthetic instance is
//! stored in.
//!
//! A field maps a normalized coordinate in `R^n` to `m` quantities through
//! `L` sine layers and a final linear layer. Budgets count exactly the stored
//! scalars: `d0 (n+1) + sum_{l=1}^{L-1} d_l (d_{l-1}+1) + m (d_{L-1}+1)`.

use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::grid::{CoordinateSet, GridTensor};
use crate::stream::seeded_rng;

pub const DEFAULT_OMEGA0: f64 = 30.0;

/// Architecture of one field: input dim `n`, output dim `m`, `L` sine layers
/// with the given widths, and the sine frequency scale `omega0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub widths: Vec<usize>,
    pub omega0: f64,
}

impl FieldConfig {
    pub fn uniform(input_dim: usize, output_dim: usize, layers: usize, width: usize) -> FieldConfig {
        FieldConfig {
            input_dim,
            output_dim,
            widths: vec![width; layers],
            omega0: DEFAULT_OMEGA0,
        }
    }

    pub fn with_omega0(mut self, omega0: f64) -> FieldConfig {
        self.omega0 = omega0;
        self
    }

    /// Number of sine layers `L`.
    pub fn layers(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("field dims must be >= 1"));
        }
        if self.widths.is_empty() {
            return Err(Error::invalid("field needs at least one sine layer"));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("layer widths must be >= 1"));
        }
        if !(self.omega0 > 0.0) {
            return Err(Error::invalid("omega0 must be positive"));
        }
        Ok(())
    }
}

/// Stored scalars of one field. Independent of any decode resolution.
pub fn param_count(cfg: &FieldConfig) -> usize {
    let n = cfg.input_dim;
    let m = cfg.output_dim;
    let d = &cfg.widths;
    let mut b = d[0] * (n + 1);
    for l in 1..d.len() {
        b += d[l] * (d[l - 1] + 1);
    }
    b + m * (d[d.len() - 1] + 1)
}

/// Largest field count whose total parameters fit the budget:
/// `floor(B / param_count)`.
pub fn plan_budget(total_budget: usize, cfg: &FieldConfig) -> Result<usize> {
    let b = param_count(cfg);
    if total_budget < b {
        return Err(Error::BudgetTooSmall {
            budget: total_budget,
            needed: b,
        });
    }
    Ok(total_budget / b)
}

/// One field's parameters. Weight `l` has shape `[rows_l, cols_l]` with the
/// matching bias of length `rows_l`; layer `L` is the final linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralField {
    pub config: FieldConfig,
    pub weights: Vec<crate::autograd::Tensor>,
    pub biases: Vec<crate::autograd::Tensor>,
}

impl NeuralField {
    /// Layer shapes `(rows, cols)` for weights `0..=L`.
    pub fn layer_shapes(cfg: &FieldConfig) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(cfg.layers() + 1);
        let mut prev = cfg.input_dim;
        for &w in &cfg.widths {
            shapes.push((w, prev));
            prev = w;
        }
        shapes.push((cfg.output_dim, prev));
        shapes
    }

    /// Total stored scalars; equals [`param_count`] of the config.
    pub fn scalar_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }
}

/// SIREN initialization: first layer `U(-1/n, 1/n)`, deeper layers
/// `U(-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0)`, zero biases.
/// Deterministic per seed.
pub fn init_siren(cfg: &FieldConfig, seed: u64) -> Result<NeuralField> {
    cfg.validate()?;
    let mut rng = seeded_rng(seed);
    let shapes = NeuralField::layer_shapes(cfg);
    let mut weights = Vec::with_capacity(shapes.len());
    let mut biases = Vec::with_capacity(shapes.len());
    for (l, &(rows, cols)) in shapes.iter().enumerate() {
        let limit = if l == 0 {
            1.0 / cfg.input_dim as f64
        } else {
            (6.0 / cols as f64).sqrt() / cfg.omega0
        };
        let dist = Uniform::new_inclusive(-limit, limit);
        let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
        weights.push(crate::autograd::Tensor::new(vec![rows, cols], data));
        biases.push(crate::autograd::Tensor::zeros(vec![rows]));
    }
    Ok(NeuralField {
        config: cfg.clone(),
        weights,
        biases,
    })
}

/// Evaluate a field on every lattice point in one pass.
///
/// Output channel `c` at point index `p` is the `c`-th component of
/// `W_L sin(omega0 (... sin(omega0 (W_0 x + b_0)) ...)) + b_L`, laid out
/// channel-major so the result is a well-formed [`GridTensor`].
pub fn forward(f: &NeuralField, coords: &CoordinateSet) -> Result<GridTensor> {
    if coords.dim() != f.config.input_dim {
        return Err(Error::invalid(format!(
            "coordinate dim {} does not match field input dim {}",
            coords.dim(),
            f.config.input_dim
        )));
    }
    let p = coords.len();
    let n = coords.dim();
    // activations as [rows, P] row-major
    let mut act = vec![0.0; n * p];
    for (i, pt) in (0..p).map(|i| (i, coords.point(i))) {
        for k in 0..n {
            act[k * p + i] = pt[k];
        }
    }
    let mut rows_in = n;
    let layers = f.config.layers();
    for l in 0..=layers {
        let w = &f.weights[l];
        let b = &f.biases[l];
        let rows = w.shape()[0];
        let cols = w.shape()[1];
        debug_assert_eq!(cols, rows_in);
        let mut next = vec![0.0; rows * p];
        for r in 0..rows {
            let wrow = &w.data()[r * cols..(r + 1) * cols];
            let out = &mut next[r * p..(r + 1) * p];
            out.fill(b.data()[r]);
            for (k, &wv) in wrow.iter().enumerate() {
                let lane = &act[k * p..(k + 1) * p];
                for (o, &x) in out.iter_mut().zip(lane) {
                    *o += wv * x;
                }
            }
        }
        if l < layers {
            for v in next.iter_mut() {
                *v = (f.config.omega0 * *v).sin();
            }
        }
        act = next;
        rows_in = rows;
    }
    GridTensor::new(f.config.output_dim, coords.dims().to_vec(), act)
}

/// A labeled collection of fields plus the shape they decode to.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub fields: Vec<NeuralField>,
    pub labels: Vec<usize>,
    pub decode_dims: Vec<usize>,
    pub channels: usize,
}

impl SyntheticDataset {
    pub fn new(
        fields: Vec<NeuralField>,
        labels: Vec<usize>,
        decode_dims: Vec<usize>,
        channels: usize,
    ) -> Result<Self> {
        if fields.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} fields but {} labels",
                fields.len(),
                labels.len()
            )));
        }
        for f in &fields {
            if f.config.input_dim != decode_dims.len() || f.config.output_dim != channels {
                return Err(Error::invalid(
                    "field input/output dims disagree with dataset decode shape",
                ));
            }
        }
        Ok(SyntheticDataset {
            fields,
            labels,
            decode_dims,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Total stored scalars across all fields.
    pub fn budget_used(&self) -> usize {
        self.fields.iter().map(|f| f.scalar_count()).sum()
    }
}

const NFB_MAGIC: &[u8; 4] = b"NFB1";

/// Serialize a synthetic dataset into NFB1 bytes.
///
/// Layout: magic "NFB1", u32 field count (LE), u8 n, u8 L, u16 m (LE),
/// u16 omega0 as fixed point x256 (LE), L x u16 widths (LE), then per field a
/// u32 label (LE) and the f32 LE parameter payload in layer order, weights
/// before bias within each layer. All fields must share one config; omega0
/// must sit on the 1/256 grid so the round trip is exact.
pub fn bundle_to_bytes(ds: &SyntheticDataset) -> Result<Vec<u8>> {
    let first = ds
        .fields
        .first()
        .ok_or_else(|| Error::invalid("refusing to write an empty bundle"))?;
    let cfg = &first.config;
    if ds.fields.iter().any(|f| f.config != *cfg) {
        return Err(Error::invalid("bundle fields must share one config"));
    }
    if cfg.input_dim != ds.decode_dims.len() {
        return Err(Error::invalid("decode dims disagree with field input dim"));
    }
    let omega_fp = cfg.omega0 * 256.0;
    if omega_fp.fract() != 0.0 || !(1.0..=u16::MAX as f64).contains(&omega_fp) {
        return Err(Error::invalid(format!(
            "omega0 {} is not representable as u16 fixed-point x256",
            cfg.omega0
        )));
    }
    if cfg.layers() > u8::MAX as usize
        || cfg.input_dim > u8::MAX as usize
        || cfg.output_dim > u16::MAX as usize
        || cfg.widths.iter().any(|&w| w > u16::MAX as usize)
    {
        return Err(Error::invalid("field config exceeds NFB1 header ranges"));
    }

    let mut out = Vec::new();
    out.extend_from_slice(NFB_MAGIC);
    out.extend_from_slice(&(ds.fields.len() as u32).to_le_bytes());
    out.push(cfg.input_dim as u8);
    out.push(cfg.layers() as u8);
    out.extend_from_slice(&(cfg.output_dim as u16).to_le_bytes());
    out.extend_from_slice(&(omega_fp as u16).to_le_bytes());
    for &w in &cfg.widths {
        out.extend_from_slice(&(w as u16).to_le_bytes());
    }
    for (f, &label) in ds.fields.iter().zip(&ds.labels) {
        out.extend_from_slice(&(label as u32).to_le_bytes());
        for l in 0..f.weights.len() {
            for &v in f.weights[l].data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
            for &v in f.biases[l].data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Parse an NFB1 byte buffer. The bundle stores no decode shape, so the
/// caller provides `decode_dims` (its length must equal the stored `n`).
pub fn bundle_from_bytes(bytes: &[u8], decode_dims: &[usize]) -> Result<SyntheticDataset> {
    let need = |at: usize, n: usize| -> Result<&[u8]> {
        if at + n > bytes.len() {
            return Err(Error::format(
                at as u64,
                format!("truncated while reading {n} bytes"),
            ));
        }
        Ok(&bytes[at..at + n])
    };
    let magic = need(0, 4)?;
    if magic != NFB_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"NFB1\"")));
    }
    let count = u32::from_le_bytes(need(4, 4)?.try_into().unwrap()) as usize;
    let n = need(8, 1)?[0] as usize;
    let layers = need(9, 1)?[0] as usize;
    let m = u16::from_le_bytes(need(10, 2)?.try_into().unwrap()) as usize;
    let omega_fp = u16::from_le_bytes(need(12, 2)?.try_into().unwrap());
    if n == 0 || layers == 0 || m == 0 || omega_fp == 0 {
        return Err(Error::format(8, "header fields must be nonzero"));
    }
    let mut widths = Vec::with_capacity(layers);
    let mut at = 14;
    for _ in 0..layers {
        let w = u16::from_le_bytes(need(at, 2)?.try_into().unwrap()) as usize;
        if w == 0 {
            return Err(Error::format(at as u64, "zero layer width"));
        }
        widths.push(w);
        at += 2;
    }
    let cfg = FieldConfig {
        input_dim: n,
        output_dim: m,
        widths,
        omega0: omega_fp as f64 / 256.0,
    };
    if decode_dims.len() != n {
        return Err(Error::invalid(format!(
            "decode dims rank {} does not match bundle input dim {n}",
            decode_dims.len()
        )));
    }
    let shapes = NeuralField::layer_shapes(&cfg);
    let mut fields = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let label = u32::from_le_bytes(need(at, 4)?.try_into().unwrap()) as usize;
        at += 4;
        let mut weights = Vec::with_capacity(shapes.len());
        let mut biases = Vec::with_capacity(shapes.len());
        for &(rows, cols) in &shapes {
            let wb = need(at, rows * cols * 4)?;
            at += rows * cols * 4;
            let data = wb
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            weights.push(crate::autograd::Tensor::new(vec![rows, cols], data));
            let bb = need(at, rows * 4)?;
            at += rows * 4;
            let data = bb
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            biases.push(crate::autograd::Tensor::new(vec![rows], data));
        }
        fields.push(NeuralField {
            config: cfg.clone(),
            weights,
            biases,
        });
        labels.push(label);
    }
    if at != bytes.len() {
        return Err(Error::format(at as u64, "trailing bytes after last field"));
    }
    SyntheticDataset::new(fields, labels, decode_dims.to_vec(), m)
}

pub fn save_bundle(ds: &SyntheticDataset, path: &Path) -> Result<()> {
    fs::write(path, bundle_to_bytes(ds)?)?;
    Ok(())
}

pub fn load_bundle(path: &Path, decode_dims: &[usize]) -> Result<SyntheticDataset> {
    bundle_from_bytes(&fs::read(path)?, decode_dims)
}
