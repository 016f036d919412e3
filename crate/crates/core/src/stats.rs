//! Streaming moments, Kolmogorov–Smirnov tests, correlation and log-log
//! regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default significance level of every conformance test.
pub const DEFAULT_LEVEL: f64 = 1e-3;

/// Single-pass mean and variance (Welford), mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamingMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl StreamingMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut acc = Self::new();
        values.iter().for_each(|&v| acc.push(v));
        acc
    }

    #[inline]
    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn merge(&mut self, other: &StreamingMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        self.mean += delta * nb / total as f64;
        self.m2 += other.m2 + delta * delta * na * nb / total as f64;
        self.count = total;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (`count - 1` denominator); 0 below two values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Mergeable mean vector and co-moment matrix of a `D`-dimensional sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceAccumulator<const D: usize> {
    count: u64,
    mean: [f64; D],
    comoment: [[f64; D]; D],
}

impl<const D: usize> Default for CovarianceAccumulator<D> {
    fn default() -> Self {
        CovarianceAccumulator {
            count: 0,
            mean: [0.0; D],
            comoment: [[0.0; D]; D],
        }
    }
}

impl<const D: usize> CovarianceAccumulator<D> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: &[f64; D]) {
        self.count += 1;
        let n = self.count as f64;
        let mut before = [0.0; D];
        for i in 0..D {
            before[i] = x[i] - self.mean[i];
            self.mean[i] += before[i] / n;
        }
        for i in 0..D {
            let after = x[i] - self.mean[i];
            for j in 0..D {
                self.comoment[i][j] += after * before[j];
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        let mut delta = [0.0; D];
        for i in 0..D {
            delta[i] = other.mean[i] - self.mean[i];
        }
        for i in 0..D {
            for j in 0..D {
                self.comoment[i][j] += other.comoment[i][j] + delta[i] * delta[j] * na * nb / total;
            }
            self.mean[i] += delta[i] * nb / total;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> [f64; D] {
        self.mean
    }

    pub fn covariance(&self) -> [[f64; D]; D] {
        let mut c = [[0.0; D]; D];
        if self.count < 2 {
            return c;
        }
        let denom = (self.count - 1) as f64;
        for (row, src) in c.iter_mut().zip(&self.comoment) {
            for (v, s) in row.iter_mut().zip(src) {
                *v = s / denom;
            }
        }
        c
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let c = self.covariance();
        c[i][j] / (c[i][i] * c[j][j]).sqrt()
    }
}

/// Outcome of a goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub level: f64,
    pub p_value: f64,
    pub sizes: (usize, usize),
    pub rejected: bool,
}

/// Asymptotic Kolmogorov critical value `c(α) = sqrt(-ln(α/2)/2)`.
pub fn kolmogorov_critical(level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt()
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^(k-1) exp(-2 k² λ²)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let k = f64::from(k);
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn report(statistic: f64, effective: f64, level: f64, sizes: (usize, usize)) -> TestReport {
    let root = effective.sqrt();
    let critical_value = kolmogorov_critical(level) / root;
    let lambda = (root + 0.12 + 0.11 / root) * statistic;
    TestReport {
        statistic,
        critical_value,
        level,
        p_value: kolmogorov_survival(lambda),
        sizes,
        rejected: statistic > critical_value,
    }
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// One-sample test of `samples` against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F, level: f64) -> Result<TestReport> {
    let s = sorted_finite(samples)?;
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(report(d, n, level, (s.len(), 0)))
}

/// Two-sample test; ties are stepped over together.
pub fn ks_two_sample(a: &[f64], b: &[f64], level: f64) -> Result<TestReport> {
    let a = sorted_finite(a)?;
    let b = sorted_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(report(d, na * nb / (na + nb), level, (a.len(), b.len())))
}

/// Pearson correlation of two equally long samples.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("correlation needs two equal samples of length >= 2".into()));
    }
    let mut acc = CovarianceAccumulator::<2>::new();
    for (&a, &b) in x.iter().zip(y) {
        acc.push(&[a, b]);
    }
    Ok(acc.correlation(0, 1))
}

/// Least-squares slope of `ln statistic` against `ln n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub std_error: f64,
    pub log_prefactor: f64,
}

pub fn scaling_regression(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if ns.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 distinct n".into()));
    }
    if ns[0] <= 0.0 || ns[ns.len() - 1] / ns[0] < 100.0 {
        return Err(Error::InvalidInput("n values must be positive and span two decades".into()));
    }
    if points.iter().any(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
        return Err(Error::InvalidInput("statistics must be positive and finite".into()));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let std_error = if points.len() > 2 {
        (rss / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ScalingFit {
        exponent: slope,
        std_error,
        log_prefactor: intercept,
    })
}
