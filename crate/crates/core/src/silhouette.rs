//! The interval-splitting process `Ξ`: `Ξ_j(x)` is the key at level `j`
//! (the root is level 0) on the dyadic path `x`, where each node's key is
//! uniform on the interval left open by its ancestors. `Ξ_j(x) → Ξ(x)`, a
//! random continuous distribution function on `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::rng::{open01, stream_rng, streams, LabRng};
use crate::stats::{ks_two_sample, StreamingMoments, TestReport, DEFAULT_LEVEL};
use crate::tree::{DyadicPath, KeyKind, LabelledTree};

/// `q = √(2/3)`; `E sup_x |Ξ_k(x) − Ξ_{k−1}(x)| ≤ 2 q^k`.
pub const Q: f64 = 0.816_496_580_927_726;
pub const MAX_TABLE_DEPTH: u32 = 24;
pub const MAX_LEVELS: usize = 120;
/// Target error of `Ξ` in density estimation.
pub const DENSITY_TOL: f64 = 1e-4;
/// Lower clip of `Ξ(2t)` in the `1/Ξ(2t)` integrand.
pub const CLIP: f64 = 1e-12;

/// Smallest `k` with `2 q^k < tol`.
pub fn levels_for(tol: f64) -> usize {
    ((2.0 / tol).ln() / (1.0 / Q).ln()).floor() as usize + 1
}

pub fn increment_bound(k: usize) -> f64 {
    2.0 * Q.powi(k as i32)
}

/// All keys of levels `0..depth`, stored in heap order (children of `i` at
/// `2i+1`, `2i+2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteTable {
    pub depth: u32,
    pub keys: Vec<f64>,
}

fn fill(keys: &mut [f64], node: usize, lo: f64, hi: f64, rng: &mut LabRng) {
    let key = lo + (hi - lo) * open01(rng);
    keys[node] = key;
    let left = 2 * node + 1;
    if left < keys.len() {
        fill(keys, left, lo, key, rng);
        fill(keys, left + 1, key, hi, rng);
    }
}

pub fn generate_table(k: u32, seed: u64) -> Result<SilhouetteTable> {
    generate_table_replicate(k, seed, 0)
}

pub fn generate_table_replicate(k: u32, seed: u64, replicate: u64) -> Result<SilhouetteTable> {
    if !(1..=MAX_TABLE_DEPTH).contains(&k) {
        return Err(out_of_range("table depth", k, "1..=24"));
    }
    let mut keys = vec![0.0; (1usize << k) - 1];
    let mut rng = stream_rng(seed, streams::SILHOUETTE, replicate);
    fill(&mut keys, 0, 0.0, 1.0, &mut rng);
    Ok(SilhouetteTable { depth: k, keys })
}

impl SilhouetteTable {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Keys in in-order, i.e. the values at the dyadic points `i / 2^depth`.
    pub fn in_order(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.keys.len());
        let mut stack = Vec::with_capacity(self.depth as usize);
        let mut cur = Some(0usize);
        while cur.is_some() || !stack.is_empty() {
            while let Some(c) = cur {
                stack.push(c);
                cur = (2 * c + 1 < self.keys.len()).then_some(2 * c + 1);
            }
            let c = stack.pop().expect("non-empty");
            out.push(self.keys[c]);
            cur = (2 * c + 2 < self.keys.len()).then_some(2 * c + 2);
        }
        out
    }

    /// `(x, Ξ)` pairs at the dyadic points `i / 2^depth`, `i = 1..2^depth`.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let scale = (1u64 << self.depth) as f64;
        self.in_order()
            .into_iter()
            .enumerate()
            .map(|(i, v)| ((i + 1) as f64 / scale, v))
            .collect()
    }

    /// Key of the deepest stored node on path `x`, `Ξ_{depth−1}(x)`.
    pub fn eval(&self, x: &DyadicPath) -> f64 {
        let mut node = 0usize;
        for level in 1..self.depth as usize {
            node = 2 * node + 1 + usize::from(x.bit(level));
        }
        self.keys[node]
    }

    /// Keys strictly increase in in-order and stay inside `(0, 1)`.
    pub fn is_monotone(&self) -> bool {
        let v = self.in_order();
        v.windows(2).all(|w| w[0] < w[1]) && v.first().is_some_and(|&a| a > 0.0) && v.last().is_some_and(|&b| b < 1.0)
    }
}

/// Walks `x` for levels `0..=levels`, passing each key to `visit`.
fn descend<F: FnMut() -> f64, V: FnMut(usize, f64)>(x: &DyadicPath, levels: usize, mut draw: F, mut visit: V) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut key = 0.0;
    for level in 0..=levels {
        key = lo + (hi - lo) * draw();
        visit(level, key);
        if x.bit(level + 1) {
            lo = key;
        } else {
            hi = key;
        }
    }
    key
}

/// `Ξ_1(x), …, Ξ_k(x)` along the single path `x` in `O(k)` memory.
pub fn xi_along_path_with<R: Rng + ?Sized>(x: &DyadicPath, k: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    descend(x, k, || open01(rng), |level, key| {
        if level > 0 {
            out.push(key)
        }
    });
    out
}

pub fn xi_along_path(x: &DyadicPath, k: usize, seed: u64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(out_of_range("k", k, ">= 1"));
    }
    let mut rng = stream_rng(seed, streams::SILHOUETTE, 0);
    Ok(xi_along_path_with(x, k, &mut rng))
}

/// `Ξ_k(x)` at a fixed level.
#[inline]
pub fn xi_at_level<R: Rng + ?Sized>(x: &DyadicPath, k: usize, rng: &mut R) -> f64 {
    descend(x, k, || open01(rng), |_, _| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiLimit {
    pub value: f64,
    pub levels: usize,
    /// `2 q^levels`, the expected truncation error bound.
    pub bound: f64,
}

pub fn xi_limit_with<R: Rng + ?Sized>(x: &DyadicPath, tol: f64, rng: &mut R) -> Result<XiLimit> {
    if !(tol > 0.0) {
        return Err(out_of_range("tol", tol, "> 0"));
    }
    let levels = levels_for(tol);
    if levels > MAX_LEVELS {
        return Err(Error::CapReached {
            cap: MAX_LEVELS,
            bound: increment_bound(MAX_LEVELS),
        });
    }
    Ok(XiLimit {
        value: xi_at_level(x, levels, rng),
        levels,
        bound: increment_bound(levels),
    })
}

pub fn xi_limit(x: &DyadicPath, tol: f64, seed: u64) -> Result<XiLimit> {
    let mut rng = stream_rng(seed, streams::SILHOUETTE, 0);
    xi_limit_with(x, tol, &mut rng)
}

/// `Ξ_k(t)` samples, one replicate stream each.
pub fn xi_samples(t: f64, k: usize, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    let x = DyadicPath::from_value(t)?;
    Ok((0..replicates)
        .map(|r| {
            let mut rng = stream_rng(seed, streams::SILHOUETTE, r as u64);
            xi_at_level(&x, k, &mut rng)
        })
        .collect())
}

/// `Ξ_k(ξ)` at an independent uniform point `ξ` per replicate.
pub fn xi_at_uniform_point(k: usize, replicates: usize, seed: u64) -> Vec<f64> {
    (0..replicates)
        .map(|r| {
            let mut rng = stream_rng(seed, streams::SILHOUETTE, r as u64);
            let xi = DyadicPath::from_value(rng.random::<f64>()).expect("in [0,1)");
            xi_at_level(&xi, k, &mut rng)
        })
        .collect()
}

/// Per replicate, `sup_x |Ξ_j(x) − Ξ_{j−1}(x)|` for `j = 1..=max_level`,
/// i.e. the largest key jump from a parent at each level of the table.
pub fn increment_sups<R: Rng + ?Sized>(max_level: usize, rng: &mut R) -> Vec<f64> {
    fn go<R: Rng + ?Sized>(level: usize, lo: f64, hi: f64, parent: f64, max_level: usize, rng: &mut R, sups: &mut [f64]) {
        let key = lo + (hi - lo) * open01(rng);
        if level > 0 {
            sups[level] = sups[level].max((key - parent).abs());
        }
        if level < max_level {
            go(level + 1, lo, key, key, max_level, rng, sups);
            go(level + 1, key, hi, key, max_level, rng, sups);
        }
    }
    let mut sups = vec![0.0; max_level + 1];
    go(0, 0.0, 1.0, 0.0, max_level, rng, &mut sups);
    sups.remove(0);
    sups
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementRow {
    pub level: usize,
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks `mean + 3 SE ≤ 2 q^k` for every level up to `max_level`.
pub fn increment_bound_check(max_level: usize, replicates: usize, seed: u64) -> Result<Vec<IncrementRow>> {
    if max_level == 0 || max_level >= MAX_TABLE_DEPTH as usize || replicates < 2 {
        return Err(Error::InvalidInput("need 1 <= max_level < 24 and >= 2 replicates".into()));
    }
    let mut acc = vec![StreamingMoments::new(); max_level];
    for r in 0..replicates {
        let mut rng = stream_rng(seed, streams::SILHOUETTE, r as u64);
        for (a, s) in acc.iter_mut().zip(increment_sups(max_level, &mut rng)) {
            a.push(s);
        }
    }
    Ok(acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let level = i + 1;
            let bound = increment_bound(level);
            IncrementRow {
                level,
                mean: a.mean(),
                stderr: a.std_error(),
                bound,
                pass: a.mean() + 3.0 * a.std_error() <= bound,
            }
        })
        .collect())
}

/// Draws `Ξ(t)` directly and through the right side of the fixed-point
/// equation, `U·Ξ′(2t)` below `1/2` and `(1−U)·Ξ′(2t−1) + U` above, and
/// compares the two samples.
pub fn fixpoint_resample_check(t_grid: &[f64], replicates: usize, seed: u64) -> Result<Vec<(f64, TestReport)>> {
    let levels = levels_for(DENSITY_TOL);
    t_grid
        .iter()
        .enumerate()
        .map(|(g, &t)| {
            if !(t > 0.0 && t < 1.0) {
                return Err(out_of_range("t", t, "(0, 1)"));
            }
            let x = DyadicPath::from_value(t)?;
            let inner = DyadicPath::from_value(if t < 0.5 { 2.0 * t } else { 2.0 * t - 1.0 })?;
            let mut direct = Vec::with_capacity(replicates);
            let mut resampled = Vec::with_capacity(replicates);
            let mut rng = stream_rng(seed, streams::RESAMPLE, g as u64);
            for _ in 0..replicates {
                direct.push(xi_at_level(&x, levels, &mut rng));
                let u = open01(&mut rng);
                let copy = xi_at_level(&inner, levels, &mut rng);
                resampled.push(if t < 0.5 { u * copy } else { (1.0 - u) * copy + u });
            }
            Ok((t, ks_two_sample(&direct, &resampled, DEFAULT_LEVEL)?))
        })
        .collect()
}

/// `Ξ(t)` and the mirrored `Ξ*(1−t)` from the same uniforms, with `Ξ*`
/// driven by `1 − U_i`; returns `Ξ*(1−t) + Ξ(t) − 1`, which is exactly 0 up to
/// rounding.
pub fn symmetry_coupling_defect(t: f64, levels: usize, seed: u64, replicate: u64) -> Result<f64> {
    let x = DyadicPath::from_value(t)?;
    let mut rng = stream_rng(seed, streams::SILHOUETTE, replicate);
    let us: Vec<f64> = (0..=levels).map(|_| open01(&mut rng)).collect();
    let mut it = us.iter();
    let xi = descend(&x, levels, || *it.next().expect("enough"), |_, _| {});
    let mut it = us.iter();
    let mirrored = descend(&x.complement(), levels, || 1.0 - *it.next().expect("enough"), |_, _| {});
    Ok(xi + mirrored - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiMarginalEstimate {
    pub t: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replicates: usize,
    /// Draws of `Ξ(2t)` below [`CLIP`].
    pub clipped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub t: f64,
    pub x: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub replicates: usize,
}

impl XiMarginalEstimate {
    pub fn rows(&self) -> Vec<DensityRow> {
        self.grid
            .iter()
            .zip(&self.density)
            .zip(&self.stderr)
            .map(|((&x, &estimate), &stderr)| DensityRow {
                t: self.t,
                x,
                estimate,
                stderr,
                replicates: self.replicates,
            })
            .collect()
    }

    /// Trapezoid integral over the grid, with its standard error (the grid
    /// values share draws, so errors add linearly).
    pub fn trapezoid(&self) -> (f64, f64) {
        let (mut total, mut se) = (0.0, 0.0);
        for i in 1..self.grid.len() {
            let h = self.grid[i] - self.grid[i - 1];
            total += 0.5 * h * (self.density[i] + self.density[i - 1]);
            se += 0.5 * h * (self.stderr[i] + self.stderr[i - 1]);
        }
        (total, se)
    }
}

/// Marginal density `f_t` of `Ξ(t)` through `f_t(x) = E[1{Ξ(2t) ≥ x} / Ξ(2t)]`
/// for `t < 1/2` and `f_t(x) = f_{1−t}(1−x)` for `t > 1/2`.
pub fn estimate_density(t: f64, x_grid: &[f64], replicates: usize, seed: u64) -> Result<XiMarginalEstimate> {
    if !(t > 0.0 && t < 1.0) {
        return Err(out_of_range("t", t, "(0, 1)"));
    }
    if let Some(&bad) = x_grid.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(out_of_range("x", bad, "(0, 1)"));
    }
    if replicates < 2 {
        return Err(out_of_range("replicates", replicates, ">= 2"));
    }
    if t == 0.5 {
        return Ok(XiMarginalEstimate {
            t,
            grid: x_grid.to_vec(),
            density: vec![1.0; x_grid.len()],
            stderr: vec![0.0; x_grid.len()],
            replicates,
            clipped: 0,
        });
    }
    let (s, mirrored) = if t < 0.5 { (t, false) } else { (1.0 - t, true) };
    let inner: Vec<f64> = x_grid.iter().map(|&x| if mirrored { 1.0 - x } else { x }).collect();
    let path = DyadicPath::from_value(2.0 * s)?;
    let levels = levels_for(DENSITY_TOL);
    let mut acc = vec![StreamingMoments::new(); inner.len()];
    let mut clipped = 0u64;
    for r in 0..replicates {
        let mut rng = stream_rng(seed, streams::SILHOUETTE, r as u64);
        let mut y = xi_at_level(&path, levels, &mut rng);
        if y < CLIP {
            y = CLIP;
            clipped += 1;
        }
        for (a, &x) in acc.iter_mut().zip(&inner) {
            a.push(if y >= x { 1.0 / y } else { 0.0 });
        }
    }
    if clipped > 0 {
        log::info!("density t={t}: {clipped} of {replicates} draws clipped at {CLIP}");
    }
    Ok(XiMarginalEstimate {
        t,
        grid: x_grid.to_vec(),
        density: acc.iter().map(StreamingMoments::mean).collect(),
        stderr: acc.iter().map(StreamingMoments::std_error).collect(),
        replicates,
        clipped,
    })
}

/// Exploratory: `f_t` near the left end (`x = 1e−3`) across `t`, showing where
/// the intercept stays finite.
pub fn intercept_report(t_grid: &[f64], replicates: usize, seed: u64) -> Result<Vec<DensityRow>> {
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        rows.extend(estimate_density(t, &[1e-3], replicates, seed)?.rows());
    }
    Ok(rows)
}

/// Largest root-to-leaf key sum of an i.i.d.-model tree.
pub fn weighted_height(tree: &LabelledTree) -> Result<f64> {
    if tree.kind() != KeyKind::Real {
        return Err(Error::InvalidInput("weighted height needs real keys".into()));
    }
    Ok(tree.weighted_height())
}
