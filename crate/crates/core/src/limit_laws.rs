//! Reference laws: Dickman, arcsine, normal and uniform, with samplers,
//! characteristic functions and CDFs where a closed form exists.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{out_of_range, Result};
use crate::quadrature::integrate;
use crate::rng::{open01, stream_rng, streams};

/// Series truncation for the Dickman sampler.
pub const DICKMAN_EPSILON: f64 = 1e-15;

/// Dickman variates as `Σ_j ∏_{i≤j} U_i`, stopped once the running product
/// drops below `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DickmanSampler {
    pub epsilon: f64,
}

impl Default for DickmanSampler {
    fn default() -> Self {
        Self {
            epsilon: DICKMAN_EPSILON,
        }
    }
}

impl DickmanSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut product = 1.0;
        let mut sum = 0.0;
        loop {
            product *= open01(rng);
            sum += product;
            if product < self.epsilon {
                return sum;
            }
        }
    }
}

pub fn dickman_sample(count: usize, seed: u64) -> Vec<f64> {
    let sampler = DickmanSampler::default();
    let mut rng = stream_rng(seed, streams::DICKMAN, 0);
    (0..count).map(|_| sampler.draw(&mut rng)).collect()
}

/// `exp(∫₀¹ (e^{iλx} − 1)/x dx)` by adaptive quadrature.
pub fn dickman_charfn(lambda: f64) -> Result<Complex64> {
    if !(lambda.abs() <= 100.0) {
        return Err(out_of_range("lambda", lambda, "[-100, 100]"));
    }
    if lambda == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    // cos(λx) − 1 = −2 sin²(λx/2) avoids cancellation near 0
    let re = integrate(
        |x| {
            let s = (0.5 * lambda * x).sin();
            -2.0 * s * s / x
        },
        0.0,
        1.0,
        1e-14,
        1e-13,
    )?;
    let im = integrate(|x| (lambda * x).sin() / x, 0.0, 1.0, 1e-14, 1e-13)?;
    Ok(Complex64::new(re.value, im.value).exp())
}

pub fn arcsine_cdf(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(out_of_range("x", x, "[0, 1]"));
    }
    Ok(2.0 / PI * x.sqrt().asin())
}

pub fn arcsine_density(x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(out_of_range("x", x, "(0, 1)"));
    }
    Ok(1.0 / (PI * (x * (1.0 - x)).sqrt()))
}

#[inline]
pub fn arcsine_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (FRAC_PI_2 * open01(rng)).sin().powi(2)
}

pub fn arcsine_sample(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, streams::ARCSINE, 0);
    (0..count).map(|_| arcsine_draw(&mut rng)).collect()
}

/// Arcsine variates from iterating `Y ← U·Y + 1_A·(1 − U)` with a fair coin
/// `A`; the dependence on the start decays like a product of uniforms.
pub fn arcsine_fixed_point_sample(count: usize, iterations: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, streams::ARCSINE, 1);
    (0..count)
        .map(|_| {
            let mut y = open01(&mut rng);
            for _ in 0..iterations {
                let u = open01(&mut rng);
                y = u * y + if rng.random::<bool>() { 1.0 - u } else { 0.0 };
            }
            y
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceLaw {
    Normal,
    Arcsine,
    Uniform,
    Dickman,
}

impl ReferenceLaw {
    /// Closed-form CDF; `None` for the Dickman law.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match self {
            ReferenceLaw::Normal => Some(0.5 * erfc(-x / std::f64::consts::SQRT_2)),
            ReferenceLaw::Arcsine => Some(arcsine_cdf(x.clamp(0.0, 1.0)).expect("clamped")),
            ReferenceLaw::Uniform => Some(x.clamp(0.0, 1.0)),
            ReferenceLaw::Dickman => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ReferenceLaw::Normal => 0.0,
            ReferenceLaw::Arcsine | ReferenceLaw::Uniform => 0.5,
            ReferenceLaw::Dickman => 1.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ReferenceLaw::Normal => 1.0,
            ReferenceLaw::Arcsine => 0.125,
            ReferenceLaw::Uniform => 1.0 / 12.0,
            ReferenceLaw::Dickman => 0.5,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ReferenceLaw::Normal => StandardNormal.sample(rng),
            ReferenceLaw::Arcsine => arcsine_draw(rng),
            ReferenceLaw::Uniform => open01(rng),
            ReferenceLaw::Dickman => DickmanSampler::default().draw(rng),
        }
    }

    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, streams::AUX, *self as u64);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }

    pub fn charfn(&self, lambda: f64) -> Result<Complex64> {
        match self {
            ReferenceLaw::Normal => Ok(Complex64::new((-0.5 * lambda * lambda).exp(), 0.0)),
            ReferenceLaw::Uniform => {
                if lambda == 0.0 {
                    Ok(Complex64::new(1.0, 0.0))
                } else {
                    Ok(Complex64::new(lambda.sin(), 1.0 - lambda.cos()) / lambda)
                }
            }
            ReferenceLaw::Arcsine => {
                // x = sin²θ turns the density into the constant 2/π on (0, π/2)
                let re = integrate(|t| (lambda * t.sin().powi(2)).cos(), 0.0, FRAC_PI_2, 1e-13, 1e-13)?;
                let im = integrate(|t| (lambda * t.sin().powi(2)).sin(), 0.0, FRAC_PI_2, 1e-13, 1e-13)?;
                Ok(Complex64::new(re.value, im.value) * (2.0 / PI))
            }
            ReferenceLaw::Dickman => dickman_charfn(lambda),
        }
    }
}

/// `sup_λ |φ̂(λ) − φ(λ)|` over the grid.
pub fn empirical_charfn_distance(samples: &[f64], law: ReferenceLaw, grid: &[f64]) -> Result<f64> {
    if samples.is_empty() || grid.is_empty() {
        return Err(crate::Error::InvalidInput("empty samples or grid".into()));
    }
    let n = samples.len() as f64;
    let mut sup = 0.0f64;
    for &lambda in grid {
        let (mut c, mut s) = (0.0, 0.0);
        for &x in samples {
            let (sin, cos) = (lambda * x).sin_cos();
            c += cos;
            s += sin;
        }
        let empirical = Complex64::new(c / n, s / n);
        sup = sup.max((empirical - law.charfn(lambda)?).norm());
    }
    Ok(sup)
}

/// `count` evenly spaced points covering `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}
