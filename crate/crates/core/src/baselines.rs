//! Competing parameterizations under one budget-accounting rule: raw pixels,
//! low-resolution storage with deterministic upsampling, and masked
//! frequency-coefficient storage decoded by the inverse DCT.

use std::fs;
use std::path::Path;

use crate::codec::{decode, fit_field, FitOptions};
use crate::error::{Error, Result};
use crate::field::{param_count, FieldConfig, DEFAULT_OMEGA0};
use crate::grid::{dct, idct, resample, GridTensor, LabeledDataset, ResampleMethod};

/// Directly optimized pixels in the instance's own format.
#[derive(Debug, Clone)]
pub struct VanillaParam {
    pub grids: Vec<GridTensor>,
    pub labels: Vec<usize>,
}

/// Low-resolution grids decoded by fixed-factor upsampling.
#[derive(Debug, Clone)]
pub struct IdcParam {
    pub grids: Vec<GridTensor>,
    pub factor: usize,
    pub method: ResampleMethod,
    pub labels: Vec<usize>,
}

/// Masked DCT coefficients, one coefficient vector per instance, sharing a
/// single global frequency mask.
#[derive(Debug, Clone)]
pub struct FredParam {
    /// Indicator over the flat spatial index lattice, shared by all channels
    /// and instances.
    pub mask: Vec<bool>,
    pub native_dims: Vec<usize>,
    pub channels: usize,
    /// Per instance: `popcount * channels` coefficients, channel-major,
    /// mask indices ascending.
    pub coefficients: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl FredParam {
    pub fn mask_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn mask_size(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Stored scalars of a parameterized artifact. Every baseline reports its
/// budget through this one trait so comparisons stay like-for-like.
pub trait BudgetAccounted {
    fn stored_scalars(&self) -> usize;
}

impl BudgetAccounted for VanillaParam {
    fn stored_scalars(&self) -> usize {
        self.grids.iter().map(GridTensor::len).sum()
    }
}

impl BudgetAccounted for IdcParam {
    fn stored_scalars(&self) -> usize {
        self.grids.iter().map(GridTensor::len).sum()
    }
}

impl BudgetAccounted for FredParam {
    // the shared mask is stored once and excluded from per-instance budget
    fn stored_scalars(&self) -> usize {
        self.coefficients.iter().map(Vec::len).sum()
    }
}

impl BudgetAccounted for crate::field::SyntheticDataset {
    fn stored_scalars(&self) -> usize {
        self.budget_used()
    }
}

/// Rank spatial frequency indices by the variance of their DCT coefficients
/// across the dataset (channels pooled) and return the top-`k` indicator.
/// Ties break toward the lexicographically smaller index.
pub fn fred_select_mask(real: &LabeledDataset, k: usize) -> Result<Vec<bool>> {
    if k == 0 {
        return Err(Error::invalid("mask size must be >= 1"));
    }
    let first = real
        .instances
        .first()
        .ok_or_else(|| Error::invalid("mask selection needs a nonempty dataset"))?;
    let points = first.points();
    if k > points {
        return Err(Error::invalid(format!(
            "mask size {k} exceeds {points} frequency indices"
        )));
    }
    let samples = real.len() * first.channels();
    let mut sums = vec![0.0; points];
    let mut sq_sums = vec![0.0; points];
    for g in &real.instances {
        let c = dct(g)?;
        for ch in 0..c.channels() {
            for (u, &v) in c.channel(ch).iter().enumerate() {
                sums[u] += v;
                sq_sums[u] += v * v;
            }
        }
    }
    let inv = 1.0 / samples as f64;
    let mut ranked: Vec<(usize, f64)> = (0..points)
        .map(|u| {
            let mean = sums[u] * inv;
            (u, sq_sums[u] * inv - mean * mean)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut mask = vec![false; points];
    for &(u, _) in ranked.iter().take(k) {
        mask[u] = true;
    }
    Ok(mask)
}

/// Top-`k` indicator by coefficient energy of a single grid, channels
/// pooled. This is the L2-optimal support for one instance.
pub fn top_energy_mask(g: &GridTensor, k: usize) -> Result<Vec<bool>> {
    if k == 0 || k > g.points() {
        return Err(Error::invalid(format!(
            "mask size {k} outside 1..={}",
            g.points()
        )));
    }
    let c = dct(g)?;
    let points = c.points();
    let mut energy = vec![0.0; points];
    for ch in 0..c.channels() {
        for (u, &v) in c.channel(ch).iter().enumerate() {
            energy[u] += v * v;
        }
    }
    let mut ranked: Vec<(usize, f64)> = energy.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut mask = vec![false; points];
    for &(u, _) in ranked.iter().take(k) {
        mask[u] = true;
    }
    Ok(mask)
}

/// Project a grid onto the masked DCT coefficients: transform, keep the
/// masked entries. This is the L2-optimal coefficient assignment for the
/// given mask.
pub fn fred_encode(g: &GridTensor, mask: &[bool]) -> Result<Vec<f64>> {
    if mask.len() != g.points() {
        return Err(Error::invalid(format!(
            "mask of {} entries over {} lattice points",
            mask.len(),
            g.points()
        )));
    }
    let c = dct(g)?;
    let mut out = Vec::with_capacity(mask.iter().filter(|&&b| b).count() * g.channels());
    for ch in 0..c.channels() {
        let lane = c.channel(ch);
        out.extend(
            mask.iter()
                .zip(lane)
                .filter_map(|(&b, &v)| b.then_some(v)),
        );
    }
    Ok(out)
}

/// Scatter masked coefficients back onto a zero spectrum and invert.
pub fn fred_decode(
    coefficients: &[f64],
    mask: &[bool],
    channels: usize,
    dims: &[usize],
) -> Result<GridTensor> {
    let points: usize = dims.iter().product();
    if mask.len() != points {
        return Err(Error::invalid(format!(
            "mask of {} entries over {points} lattice points",
            mask.len()
        )));
    }
    let k = mask.iter().filter(|&&b| b).count();
    if coefficients.len() != k * channels {
        return Err(Error::invalid(format!(
            "{} coefficients for mask size {k} x {channels} channels",
            coefficients.len()
        )));
    }
    let mut spectrum = vec![0.0; channels * points];
    for ch in 0..channels {
        let src = &coefficients[ch * k..(ch + 1) * k];
        let dst = &mut spectrum[ch * points..(ch + 1) * points];
        let mut j = 0;
        for (u, &b) in mask.iter().enumerate() {
            if b {
                dst[u] = src[j];
                j += 1;
            }
        }
    }
    idct(&GridTensor::new(channels, dims.to_vec(), spectrum)?)
}

/// Decode masked coefficients at a higher resolution by zero-padding the
/// spectrum: the stored block is embedded top-left into a zero spectrum of
/// the target shape, coefficients scaled so cosine amplitudes carry over
/// (`sqrt(M_k/N_k)` per axis under the orthonormal transform, the usual
/// `(M/N)^2` factor in the unnormalized convention), then inverted at `M`.
pub fn fred_upsample_zero_pad(
    coefficients: &[f64],
    mask: &[bool],
    channels: usize,
    native_dims: &[usize],
    target_dims: &[usize],
) -> Result<GridTensor> {
    if target_dims.len() != native_dims.len() {
        return Err(Error::invalid("target rank differs from native rank"));
    }
    if target_dims
        .iter()
        .zip(native_dims)
        .any(|(&m, &n)| m < n)
        || target_dims.iter().product::<usize>() <= native_dims.iter().product::<usize>()
    {
        return Err(Error::invalid(format!(
            "target dims {target_dims:?} must exceed native dims {native_dims:?}"
        )));
    }
    let points: usize = native_dims.iter().product();
    if mask.len() != points {
        return Err(Error::invalid("mask does not match native dims"));
    }
    let k = mask.iter().filter(|&&b| b).count();
    if coefficients.len() != k * channels {
        return Err(Error::invalid("coefficient count does not match mask"));
    }
    let scale: f64 = target_dims
        .iter()
        .zip(native_dims)
        .map(|(&m, &n)| (m as f64 / n as f64).sqrt())
        .product();
    let target_points: usize = target_dims.iter().product();
    let mut spectrum = vec![0.0; channels * target_points];

    // flat index within the native block -> flat index in the target grid
    let to_target = |mut flat: usize| -> usize {
        let mut idx = vec![0usize; native_dims.len()];
        for ax in (0..native_dims.len()).rev() {
            idx[ax] = flat % native_dims[ax];
            flat /= native_dims[ax];
        }
        let mut out = 0;
        for ax in 0..target_dims.len() {
            out = out * target_dims[ax] + idx[ax];
        }
        out
    };

    for ch in 0..channels {
        let src = &coefficients[ch * k..(ch + 1) * k];
        let dst = &mut spectrum[ch * target_points..(ch + 1) * target_points];
        let mut j = 0;
        for (u, &b) in mask.iter().enumerate() {
            if b {
                dst[to_target(u)] = scale * src[j];
                j += 1;
            }
        }
    }
    idct(&GridTensor::new(channels, target_dims.to_vec(), spectrum)?)
}

/// Upsample every stored low-resolution grid by the configured factor.
pub fn idc_decode(p: &IdcParam) -> Result<Vec<GridTensor>> {
    p.grids
        .iter()
        .map(|g| {
            let target: Vec<usize> = g.shape().iter().map(|&d| d * p.factor).collect();
            resample(g, &target, p.method)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionMethod {
    Ddif,
    Fred,
    Idc,
    Vanilla,
}

impl ReconstructionMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ddif" => Ok(Self::Ddif),
            "fred" => Ok(Self::Fred),
            "idc" => Ok(Self::Idc),
            "vanilla" => Ok(Self::Vanilla),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// Knobs for [`reconstruct_at_budget`].
#[derive(Debug, Clone)]
pub struct ReconstructOptions {
    /// Sine-layer counts considered when searching the field family.
    pub layer_choices: Vec<usize>,
    pub omega0: f64,
    pub fit: FitOptions,
    pub idc_method: ResampleMethod,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            layer_choices: vec![1, 2, 3],
            omega0: DEFAULT_OMEGA0,
            fit: FitOptions::default(),
            idc_method: ResampleMethod::Bilinear,
        }
    }
}

/// Largest uniform field config (by parameter count) that fits the budget,
/// searching the given sine-layer counts; ties go to fewer layers.
pub fn widest_field_config(
    instance: &GridTensor,
    budget: usize,
    layer_choices: &[usize],
    omega0: f64,
) -> Result<FieldConfig> {
    let make = |layers: usize, d: usize| {
        FieldConfig::uniform(instance.rank(), instance.channels(), layers, d).with_omega0(omega0)
    };
    let mut best: Option<FieldConfig> = None;
    let mut smallest = usize::MAX;
    for &layers in layer_choices {
        smallest = smallest.min(param_count(&make(layers, 1)));
        if param_count(&make(layers, 1)) > budget {
            continue;
        }
        let mut d = 1;
        while param_count(&make(layers, d + 1)) <= budget {
            d += 1;
        }
        let cand = make(layers, d);
        let better = match &best {
            Some(b) => param_count(&cand) > param_count(b),
            None => true,
        };
        if better {
            best = Some(cand);
        }
    }
    best.ok_or(Error::BudgetTooSmall {
        budget,
        needed: smallest,
    })
}

/// Reconstruct one instance under a per-instance budget and report the
/// budget actually spent.
pub fn reconstruct_at_budget(
    instance: &GridTensor,
    budget: usize,
    method: ReconstructionMethod,
    opts: &ReconstructOptions,
) -> Result<(GridTensor, usize)> {
    let native = instance.shape().to_vec();
    let m = instance.channels();
    match method {
        ReconstructionMethod::Ddif => {
            let cfg = widest_field_config(instance, budget, &opts.layer_choices, opts.omega0)?;
            let (field, _) = fit_field(instance, &cfg, &opts.fit)?;
            Ok((decode(&field, &native)?, param_count(&cfg)))
        }
        ReconstructionMethod::Fred => {
            let k = budget / m;
            if k == 0 {
                return Err(Error::BudgetTooSmall { budget, needed: m });
            }
            let k = k.min(instance.points());
            let mask = top_energy_mask(instance, k)?;
            let coeffs = fred_encode(instance, &mask)?;
            Ok((fred_decode(&coeffs, &mask, m, &native)?, k * m))
        }
        ReconstructionMethod::Idc => {
            let stored_cost = |f: usize| -> usize {
                m * native.iter().map(|&n| n.div_ceil(f)).product::<usize>()
            };
            let fmax = *native.iter().max().unwrap();
            let mut f = 2;
            while f <= fmax && stored_cost(f) > budget {
                f += 1;
            }
            if stored_cost(f.min(fmax)) > budget {
                return Err(Error::BudgetTooSmall {
                    budget,
                    needed: stored_cost(fmax),
                });
            }
            let low: Vec<usize> = native.iter().map(|&n| n.div_ceil(f)).collect();
            let stored = resample(instance, &low, opts.idc_method)?;
            let achieved = stored.len();
            Ok((resample(&stored, &native, opts.idc_method)?, achieved))
        }
        ReconstructionMethod::Vanilla => {
            let d = instance.len();
            if budget < d {
                return Err(Error::BudgetTooSmall { budget, needed: d });
            }
            Ok((instance.clone(), d))
        }
    }
}

const FRD_MAGIC: &[u8; 4] = b"FRD1";

/// Serialize a frequency-domain artifact.
///
/// Layout: magic "FRD1", u8 rank, u8 reserved, u16 channels (LE), rank x u32
/// native dims (LE), u32 instance count (LE), mask bitmap over the flat
/// lattice (LSB-first within each byte), then per instance a u32 label (LE)
/// and `popcount * channels` f32 LE coefficients.
pub fn fred_to_bytes(p: &FredParam) -> Result<Vec<u8>> {
    let points: usize = p.native_dims.iter().product();
    if p.mask.len() != points {
        return Err(Error::invalid("mask does not match native dims"));
    }
    if p.coefficients.len() != p.labels.len() {
        return Err(Error::invalid("coefficient/label count mismatch"));
    }
    let k = p.mask_size();
    let mut out = Vec::new();
    out.extend_from_slice(FRD_MAGIC);
    out.push(p.native_dims.len() as u8);
    out.push(0);
    out.extend_from_slice(&(p.channels as u16).to_le_bytes());
    for &d in &p.native_dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(p.coefficients.len() as u32).to_le_bytes());
    let mut bitmap = vec![0u8; points.div_ceil(8)];
    for (u, &b) in p.mask.iter().enumerate() {
        if b {
            bitmap[u / 8] |= 1 << (u % 8);
        }
    }
    out.extend_from_slice(&bitmap);
    for (coeffs, &label) in p.coefficients.iter().zip(&p.labels) {
        if coeffs.len() != k * p.channels {
            return Err(Error::invalid("instance coefficient length mismatch"));
        }
        out.extend_from_slice(&(label as u32).to_le_bytes());
        for &v in coeffs {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parse an FRD1 byte buffer.
pub fn fred_from_bytes(bytes: &[u8]) -> Result<FredParam> {
    let need = |at: usize, n: usize| -> Result<&[u8]> {
        if at + n > bytes.len() {
            return Err(Error::format(at as u64, format!("truncated ({n} bytes needed)")));
        }
        Ok(&bytes[at..at + n])
    };
    if need(0, 4)? != FRD_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"FRD1\""));
    }
    let rank = need(4, 1)?[0] as usize;
    let channels = u16::from_le_bytes(need(6, 2)?.try_into().unwrap()) as usize;
    if rank == 0 || channels == 0 {
        return Err(Error::format(4, "rank and channels must be >= 1"));
    }
    let mut at = 8;
    let mut native_dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = u32::from_le_bytes(need(at, 4)?.try_into().unwrap()) as usize;
        if d == 0 {
            return Err(Error::format(at as u64, "zero axis length"));
        }
        native_dims.push(d);
        at += 4;
    }
    let count = u32::from_le_bytes(need(at, 4)?.try_into().unwrap()) as usize;
    at += 4;
    let points: usize = native_dims.iter().product();
    let bitmap = need(at, points.div_ceil(8))?;
    at += points.div_ceil(8);
    let mask: Vec<bool> = (0..points).map(|u| bitmap[u / 8] >> (u % 8) & 1 == 1).collect();
    let k = mask.iter().filter(|&&b| b).count();
    let mut coefficients = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        labels.push(u32::from_le_bytes(need(at, 4)?.try_into().unwrap()) as usize);
        at += 4;
        let body = need(at, k * channels * 4)?;
        at += k * channels * 4;
        coefficients.push(
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        );
    }
    if at != bytes.len() {
        return Err(Error::format(at as u64, "trailing bytes"));
    }
    Ok(FredParam {
        mask,
        native_dims,
        channels,
        coefficients,
        labels,
    })
}

pub fn write_fred(p: &FredParam, path: &Path) -> Result<()> {
    fs::write(path, fred_to_bytes(p)?)?;
    Ok(())
}

pub fn read_fred(path: &Path) -> Result<FredParam> {
    fred_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::mse;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_grid(channels: usize, dims: &[usize], seed: u64) -> GridTensor {
        let mut rng = crate::stream::seeded_rng(seed);
        let len = channels * dims.iter().product::<usize>();
        GridTensor::new(
            channels,
            dims.to_vec(),
            (0..len).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_dataset_selects_dc_first() {
        let instances = (0..5)
            .map(|i| GridTensor::constant(1, vec![4, 4], 0.1 * i as f64).unwrap())
            .collect();
        let ds = LabeledDataset::new(instances, vec![0; 5], 1).unwrap();
        let mask = fred_select_mask(&ds, 1).unwrap();
        assert!(mask[0]);
        assert_eq!(mask.iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn full_mask_is_all_true() {
        let ds = LabeledDataset::new(vec![random_grid(1, &[3, 3], 1)], vec![0], 1).unwrap();
        let mask = fred_select_mask(&ds, 9).unwrap();
        assert!(mask.iter().all(|&b| b));
    }

    #[test]
    fn two_atom_spectrum_recovered_exactly() {
        // dataset generated from two DCT atoms with random amplitudes
        let n = 8;
        let (u1, u2) = (3usize, 10usize);
        let mut rng = crate::stream::seeded_rng(5);
        let mut instances = Vec::new();
        for _ in 0..12 {
            let mut spectrum = vec![0.0; n * n];
            spectrum[u1] = rng.gen_range(-1.0..1.0);
            spectrum[u2] = rng.gen_range(-1.0..1.0);
            instances.push(
                idct(&GridTensor::new(1, vec![n, n], spectrum).unwrap()).unwrap(),
            );
        }
        let ds = LabeledDataset::new(instances, vec![0; 12], 1).unwrap();
        let mask = fred_select_mask(&ds, 2).unwrap();
        assert!(mask[u1] && mask[u2], "variance must concentrate on the atoms");
    }

    #[test]
    fn full_mask_roundtrip_identity() {
        let g = random_grid(2, &[5, 6], 2);
        let mask = vec![true; 30];
        let coeffs = fred_encode(&g, &mask).unwrap();
        let back = fred_decode(&coeffs, &mask, 2, &[5, 6]).unwrap();
        assert!(mse(&g, &back).unwrap() < 1e-18);
    }

    #[test]
    fn dc_only_mask_gives_channel_means() {
        let g = random_grid(2, &[4, 4], 3);
        let mut mask = vec![false; 16];
        mask[0] = true;
        let coeffs = fred_encode(&g, &mask).unwrap();
        let back = fred_decode(&coeffs, &mask, 2, &[4, 4]).unwrap();
        for ch in 0..2 {
            let mean = g.channel(ch).iter().sum::<f64>() / 16.0;
            for &v in back.channel(ch) {
                assert_abs_diff_eq!(v, mean, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn nested_masks_monotone_mse() {
        let g = random_grid(1, &[8, 8], 4);
        let mut prev = f64::INFINITY;
        for k in [1usize, 2, 4, 8, 16, 32, 64] {
            let mask = top_energy_mask(&g, k).unwrap();
            let coeffs = fred_encode(&g, &mask).unwrap();
            let back = fred_decode(&coeffs, &mask, 1, &[8, 8]).unwrap();
            let e = mse(&g, &back).unwrap();
            assert!(e <= prev + 1e-15, "k={k}: {e} rose above {prev}");
            prev = e;
        }
        assert!(prev < 1e-18); // full mask reconstructs exactly
    }

    #[test]
    fn projection_is_l2_optimal_on_its_support() {
        let g = random_grid(1, &[4, 4], 6);
        let mask = top_energy_mask(&g, 5).unwrap();
        let coeffs = fred_encode(&g, &mask).unwrap();
        let base = mse(&g, &fred_decode(&coeffs, &mask, 1, &[4, 4]).unwrap()).unwrap();
        let mut rng = crate::stream::seeded_rng(7);
        for _ in 0..50 {
            let mut alt = coeffs.clone();
            for v in alt.iter_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
            let e = mse(&g, &fred_decode(&alt, &mask, 1, &[4, 4]).unwrap()).unwrap();
            assert!(e >= base - 1e-15, "perturbed coefficients beat the projection");
        }
    }

    #[test]
    fn zero_pad_upsample_preserves_constants() {
        let g = GridTensor::constant(1, vec![4, 4], 0.62).unwrap();
        let mask = {
            let mut m = vec![false; 16];
            m[0] = true;
            m
        };
        let coeffs = fred_encode(&g, &mask).unwrap();
        let up = fred_upsample_zero_pad(&coeffs, &mask, 1, &[4, 4], &[8, 8]).unwrap();
        for &v in up.values() {
            assert_abs_diff_eq!(v, 0.62, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_pad_upsample_of_zeros_is_zero() {
        let mask = vec![true; 16];
        let coeffs = vec![0.0; 16];
        let up = fred_upsample_zero_pad(&coeffs, &mask, 1, &[4, 4], &[6, 6]).unwrap();
        assert!(up.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_pad_upsample_continues_single_atom() {
        // one low-frequency atom continues to the same physical cosine
        let n = 8;
        let m = 16;
        let u = 2usize; // frequency index along the only axis
        let mut spectrum = vec![0.0; n];
        spectrum[u] = 1.3;
        let g = idct(&GridTensor::new(1, vec![n], spectrum).unwrap()).unwrap();
        let mask: Vec<bool> = (0..n).map(|i| i == u).collect();
        let coeffs = fred_encode(&g, &mask).unwrap();
        let up = fred_upsample_zero_pad(&coeffs, &mask, 1, &[n], &[m]).unwrap();
        let amp = (2.0 / n as f64).sqrt() * 1.3;
        for (x, &v) in up.values().iter().enumerate() {
            let want = amp
                * (std::f64::consts::PI * u as f64 * (2 * x + 1) as f64 / (2.0 * m as f64)).cos();
            assert_abs_diff_eq!(v, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn zero_pad_rejects_non_growing_target() {
        let mask = vec![true; 4];
        let coeffs = vec![0.0; 4];
        assert!(fred_upsample_zero_pad(&coeffs, &mask, 1, &[2, 2], &[2, 2]).is_err());
        assert!(fred_upsample_zero_pad(&coeffs, &mask, 1, &[2, 2], &[1, 4]).is_err());
    }

    #[test]
    fn idc_nearest_duplicates() {
        let g = GridTensor::new(1, vec![2], vec![1.0, 2.0]).unwrap();
        let p = IdcParam {
            grids: vec![g],
            factor: 2,
            method: ResampleMethod::Nearest,
            labels: vec![0],
        };
        let out = idc_decode(&p).unwrap();
        assert_eq!(out[0].values(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn idc_constant_stays_constant() {
        let g = GridTensor::constant(3, vec![4, 4], 0.5).unwrap();
        let p = IdcParam {
            grids: vec![g],
            factor: 2,
            method: ResampleMethod::Bilinear,
            labels: vec![0],
        };
        let out = idc_decode(&p).unwrap();
        assert_eq!(out[0].shape(), &[8, 8]);
        assert!(out[0].values().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn idc_budget_arithmetic() {
        // storing a 3x16x16 grid at f=2 costs 3*8*8 = 192 scalars
        let g = random_grid(3, &[16, 16], 8);
        let low = resample(&g, &[8, 8], ResampleMethod::Bilinear).unwrap();
        let p = IdcParam {
            grids: vec![low],
            factor: 2,
            method: ResampleMethod::Bilinear,
            labels: vec![0],
        };
        assert_eq!(p.stored_scalars(), 192);
    }

    #[test]
    fn vanilla_at_full_budget_is_exact() {
        let g = random_grid(1, &[4, 4], 9);
        let (rec, spent) =
            reconstruct_at_budget(&g, 16, ReconstructionMethod::Vanilla, &Default::default())
                .unwrap();
        assert_eq!(spent, 16);
        assert_eq!(mse(&g, &rec).unwrap(), 0.0);
        assert!(matches!(
            reconstruct_at_budget(&g, 15, ReconstructionMethod::Vanilla, &Default::default()),
            Err(Error::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn fred_at_full_budget_is_near_exact() {
        let g = random_grid(1, &[4, 4], 10);
        let (rec, spent) =
            reconstruct_at_budget(&g, 16, ReconstructionMethod::Fred, &Default::default())
                .unwrap();
        assert_eq!(spent, 16);
        assert!(mse(&g, &rec).unwrap() < 1e-9);
    }

    #[test]
    fn ddif_budget_search_picks_widest_fit() {
        let g = random_grid(3, &[16, 16], 11);
        // L=2, n=2, m=3: b(d) = d^2 + 7d + 3
        let cfg = widest_field_config(&g, 38, &[2], DEFAULT_OMEGA0).unwrap();
        assert_eq!(cfg.widths, vec![3, 3]); // b(3)=33 <= 38 < b(4)=47
        assert!(matches!(
            widest_field_config(&g, 10, &[2], DEFAULT_OMEGA0),
            Err(Error::BudgetTooSmall { needed: 11, .. })
        ));
    }

    #[test]
    fn frd_roundtrip() {
        let g = random_grid(2, &[4, 4], 12);
        let mask = top_energy_mask(&g, 5).unwrap();
        let coeffs = fred_encode(&g, &mask).unwrap();
        let p = FredParam {
            mask,
            native_dims: vec![4, 4],
            channels: 2,
            coefficients: vec![coeffs],
            labels: vec![3],
        };
        let bytes = fred_to_bytes(&p).unwrap();
        let back = fred_from_bytes(&bytes).unwrap();
        assert_eq!(back.mask, p.mask);
        assert_eq!(back.labels, p.labels);
        assert_eq!(back.native_dims, p.native_dims);
        assert_eq!(fred_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn budget_accounting_shared_rule() {
        let g = random_grid(3, &[8, 8], 13);
        let v = VanillaParam {
            grids: vec![g.clone()],
            labels: vec![0],
        };
        assert_eq!(v.stored_scalars(), 192);
        let mask = top_energy_mask(&g, 10).unwrap();
        let f = FredParam {
            mask: mask.clone(),
            native_dims: vec![8, 8],
            channels: 3,
            coefficients: vec![fred_encode(&g, &mask).unwrap()],
            labels: vec![0],
        };
        assert_eq!(f.stored_scalars(), 30);
    }
}
