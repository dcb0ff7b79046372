//! Harmonic analysis of sine-layer fields and the budget/width arithmetic
//! that compares them against fixed cosine dictionaries.
//!
//! A 1-D scalar field with two equal-width sine layers expands into a sum of
//! cosines whose amplitudes are products of Bessel values of the second-layer
//! weights. Truncating the integer index lattice at `||k||_inf <= zeta` gives
//! a finite dictionary whose size the width/threshold arithmetic below pins
//! against a budget.

mod bessel;

pub use bessel::{bessel_j, BESSEL_MAX_ARG};

use crate::error::{Error, Result};
use crate::field::NeuralField;

/// Enumeration cap for expansions and exhaustive searches.
const ENUM_LIMIT: u128 = 5_000_000;

/// One truncation term: the integer index vector `k`, its frequency
/// `<k, W0>`, and per-neuron (amplitude, phase) entries.
#[derive(Debug, Clone)]
pub struct ExpansionTerm {
    pub k: Vec<i32>,
    pub freq: f64,
    /// `(A_i, phi_i)` per second-layer neuron; the term contributes
    /// `sum_i A_i cos(freq x + phi_i)`.
    pub entries: Vec<(f64, f64)>,
}

/// Truncated sum-of-cosines form of a two-sine-layer scalar field.
#[derive(Debug, Clone)]
pub struct HarmonicExpansion {
    /// Output shift (the final linear bias).
    pub shift: f64,
    pub zeta: u32,
    pub terms: Vec<ExpansionTerm>,
}

/// Expand a field with `n = 1`, `m = 1`, two equal-width sine layers into
/// its truncated cosine form over `||k||_inf <= zeta`.
///
/// The sine layers are taken at unit frequency scale: `omega0` is folded
/// into the weights and biases before expansion, so the expansion matches
/// [`crate::field::forward`] exactly up to truncation error.
pub fn expand(f: &NeuralField, zeta: u32) -> Result<HarmonicExpansion> {
    let cfg = &f.config;
    if cfg.input_dim != 1 || cfg.output_dim != 1 || cfg.layers() != 2 {
        return Err(Error::invalid(format!(
            "expansion needs a 1->1 field with two sine layers, got n={} m={} L={}",
            cfg.input_dim,
            cfg.output_dim,
            cfg.layers()
        )));
    }
    let d = cfg.widths[0];
    if cfg.widths[1] != d {
        return Err(Error::invalid(
            "expansion needs equal widths in both sine layers",
        ));
    }
    let side = 2 * zeta as u128 + 1;
    let total = side.checked_pow(d as u32).filter(|&t| t <= ENUM_LIMIT);
    let Some(total) = total else {
        return Err(Error::SearchSpaceOverflow {
            size: side.saturating_pow(d as u32),
            limit: ENUM_LIMIT,
        });
    };

    // fold omega0 into both sine layers
    let om = cfg.omega0;
    let w0: Vec<f64> = f.weights[0].data().iter().map(|v| om * v).collect();
    let b0: Vec<f64> = f.biases[0].data().iter().map(|v| om * v).collect();
    let w1: Vec<f64> = f.weights[1].data().iter().map(|v| om * v).collect();
    let b1: Vec<f64> = f.biases[1].data().iter().map(|v| om * v).collect();
    let w2 = f.weights[2].data();
    let shift = f.biases[2].data()[0];

    // J_q(w1[i][j]) for q in 0..=zeta
    let mut table = vec![0.0; (zeta as usize + 1) * d * d];
    for q in 0..=zeta as usize {
        for ij in 0..d * d {
            table[q * d * d + ij] = bessel_j(q as i32, w1[ij])?;
        }
    }
    let bessel_at = |q: i32, ij: usize| -> f64 {
        let a = table[(q.unsigned_abs() as usize) * d * d + ij];
        if q < 0 && q % 2 != 0 {
            -a
        } else {
            a
        }
    };

    let mut terms = Vec::with_capacity(total as usize);
    let mut k = vec![-(zeta as i32); d];
    for _ in 0..total {
        let freq: f64 = k.iter().zip(&w0).map(|(&kj, &w)| kj as f64 * w).sum();
        let phase_base: f64 = k.iter().zip(&b0).map(|(&kj, &b)| kj as f64 * b).sum();
        let mut entries = Vec::with_capacity(d);
        for i in 0..d {
            let mut lambda = 1.0;
            for j in 0..d {
                lambda *= bessel_at(k[j], i * d + j);
            }
            let amp = w2[i] * lambda;
            let phase = phase_base + b1[i] - std::f64::consts::FRAC_PI_2;
            entries.push((amp, phase));
        }
        terms.push(ExpansionTerm {
            k: k.clone(),
            freq,
            entries,
        });
        // odometer over [-zeta, zeta]^d, last axis fastest
        for j in (0..d).rev() {
            k[j] += 1;
            if k[j] <= zeta as i32 {
                break;
            }
            k[j] = -(zeta as i32);
        }
    }
    Ok(HarmonicExpansion { shift, zeta, terms })
}

/// Evaluate the expansion at one point: `shift + sum_k sum_i A cos(w x + phi)`.
pub fn eval_expansion(e: &HarmonicExpansion, x: f64) -> f64 {
    let mut acc = e.shift;
    for t in &e.terms {
        for &(amp, phase) in &t.entries {
            acc += amp * (t.freq * x + phase).cos();
        }
    }
    acc
}

/// Evaluate the expansion on many points.
///
/// Per term the neuron entries collapse to one cosine/sine pair; on a
/// uniformly spaced grid the per-point trig is replaced by a complex
/// rotation, which keeps large truncations affordable.
pub fn eval_expansion_grid(e: &HarmonicExpansion, xs: &[f64]) -> Vec<f64> {
    let mut out = vec![e.shift; xs.len()];
    if xs.is_empty() {
        return out;
    }
    let uniform_step = if xs.len() >= 3 {
        let d0 = xs[1] - xs[0];
        xs.windows(2)
            .all(|w| ((w[1] - w[0]) - d0).abs() < 1e-12)
            .then_some(d0)
    } else {
        None
    };
    for t in &e.terms {
        // sum_i A cos(wx + phi) = P cos(wx) - Q sin(wx)
        let mut p = 0.0;
        let mut q = 0.0;
        for &(amp, phase) in &t.entries {
            p += amp * phase.cos();
            q += amp * phase.sin();
        }
        match uniform_step {
            Some(step) => {
                let (mut s, mut c) = (t.freq * xs[0]).sin_cos();
                let (ds, dc) = (t.freq * step).sin_cos();
                for o in out.iter_mut() {
                    *o += p * c - q * s;
                    let (c2, s2) = (c * dc - s * ds, s * dc + c * ds);
                    c = c2;
                    s = s2;
                }
            }
            None => {
                for (o, &x) in out.iter_mut().zip(xs) {
                    let (s, c) = (t.freq * x).sin_cos();
                    *o += p * c - q * s;
                }
            }
        }
    }
    out
}

/// Evaluate the fixed cosine dictionary `sum_u gamma_u cos(pi u (2x+1)/(2N))`
/// at integer location `x` in `0..N`.
pub fn fred_feasible_eval(gamma: &[f64], u_set: &[usize], n: usize, x: usize) -> Result<f64> {
    if gamma.len() != u_set.len() {
        return Err(Error::invalid(format!(
            "{} coefficients for {} frequency indices",
            gamma.len(),
            u_set.len()
        )));
    }
    if x >= n {
        return Err(Error::invalid(format!("location {x} outside 0..{n}")));
    }
    if let Some(&bad) = u_set.iter().find(|&&u| u >= n) {
        return Err(Error::invalid(format!("frequency index {bad} outside 0..{n}")));
    }
    let mut acc = 0.0;
    for (&g, &u) in gamma.iter().zip(u_set) {
        let angle = std::f64::consts::PI * u as f64 * (2 * x + 1) as f64 / (2.0 * n as f64);
        acc += g * angle.cos();
    }
    Ok(acc)
}

fn isqrt(v: u64) -> u64 {
    let mut r = (v as f64).sqrt() as u64;
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    while r * r > v {
        r -= 1;
    }
    r
}

/// Largest two-sine-layer width whose 1-D scalar field fits budget `B`:
/// `floor(sqrt(3 + B)) - 2`. Needs `B >= 6` for a valid network.
pub fn max_width(budget: u64) -> Result<u64> {
    if budget < 6 {
        return Err(Error::TheoremPrecondition(format!(
            "budget {budget} < 6 cannot hold a width-1 network"
        )));
    }
    Ok(isqrt(budget + 3) - 2)
}

/// Truncation radius above which the width-`max_width(B)` dictionary covers
/// at least `B` distinct frequencies: `(exp(log(2B+1)/d) - 1) / 2`.
pub fn zeta_threshold(budget: u64) -> Result<f64> {
    let d = max_width(budget)?;
    if d == 1 {
        // exp(log(2B+1)) is exactly 2B+1, so the threshold is exactly B
        return Ok(budget as f64);
    }
    Ok(0.5 * ((2.0 * budget as f64 + 1.0).powf(1.0 / d as f64) - 1.0))
}

/// Distinct nonzero frequencies representable under truncation `zeta` with
/// width `d`: `((2 zeta + 1)^d - 1) / 2`.
pub fn harmonic_count(zeta: u32, d: u32) -> Result<u128> {
    let side = 2u128 * zeta as u128 + 1;
    let total = side
        .checked_pow(d)
        .ok_or_else(|| Error::invalid(format!("(2*{zeta}+1)^{d} overflows")))?;
    Ok((total - 1) / 2)
}

/// Result of the exhaustive nested-feasible-space check.
#[derive(Debug, Clone, Copy)]
pub struct Prop1Outcome {
    pub min_subset: f64,
    pub min_superset: f64,
    /// Whether every candidate point of the first space was found
    /// (bit-exactly) in the second.
    pub subset_verified: bool,
}

/// Exhaustively minimize a loss over all ordered `m`-tuples from each of two
/// finite candidate spaces.
///
/// When the first space is verified to be a subset of the second, the subset
/// minimum can never undercut the superset minimum; that inequality is
/// asserted on the exhaustive values.
pub fn prop1_oracle<F>(
    s1: &[Vec<f64>],
    s2: &[Vec<f64>],
    m: usize,
    loss: F,
) -> Result<Prop1Outcome>
where
    F: Fn(&[&[f64]]) -> f64,
{
    if m == 0 {
        return Err(Error::invalid("tuple length must be >= 1"));
    }
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::invalid("candidate spaces must be nonempty"));
    }
    for s in [s1, s2] {
        let size = (s.len() as u128)
            .checked_pow(m as u32)
            .unwrap_or(u128::MAX);
        if size > 1_000_000 {
            return Err(Error::SearchSpaceOverflow {
                size,
                limit: 1_000_000,
            });
        }
    }

    let exhaust = |s: &[Vec<f64>]| -> f64 {
        let mut idx = vec![0usize; m];
        let total = s.len().pow(m as u32);
        let mut best = f64::INFINITY;
        let mut tuple: Vec<&[f64]> = vec![&s[0]; m];
        for _ in 0..total {
            for (slot, &i) in tuple.iter_mut().zip(&idx) {
                *slot = &s[i];
            }
            best = best.min(loss(&tuple));
            for j in (0..m).rev() {
                idx[j] += 1;
                if idx[j] < s.len() {
                    break;
                }
                idx[j] = 0;
            }
        }
        best
    };

    let min_subset = exhaust(s1);
    let min_superset = exhaust(s2);
    let subset_verified = s1.iter().all(|p| s2.iter().any(|q| p == q));
    if subset_verified {
        assert!(
            min_subset >= min_superset,
            "exhaustive minima violate nesting: {min_subset} < {min_superset}"
        );
    }
    Ok(Prop1Outcome {
        min_subset,
        min_superset,
        subset_verified,
    })
}

/// Sum of squared distances to an anchor tuple, the default oracle loss.
pub fn squared_error_loss(target: Vec<Vec<f64>>) -> impl Fn(&[&[f64]]) -> f64 {
    move |tuple: &[&[f64]]| {
        tuple
            .iter()
            .zip(&target)
            .map(|(x, t)| x.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum()
    }
}
