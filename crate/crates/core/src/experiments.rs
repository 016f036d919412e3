//! Declarative Monte Carlo experiments: a JSON spec names a model, sizes, a
//! rule selecting the node of interest, and claims with pre-registered
//! tolerances; running it yields one verdict row per claim (and size).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregates::{functionals_recursive, weighted_path_length_expansion, TreeFunctionals};
use crate::error::{Error, Result};
use crate::limit_laws::ReferenceLaw;
use crate::rng::{stream_rng, streams, LabRng};
use crate::sampling::{sample_label_path, sample_last_inserted, sample_silhouette_path};
use crate::stats::{correlation, ks_one_sample, ks_two_sample, scaling_regression, DEFAULT_LEVEL};
use crate::tree::{build_iid_with, build_permutation_with, DyadicPath, LabelledTree, PathObservation};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Permutation,
    Iid,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Build the whole tree per replicate.
    Tree,
    /// Sample only the path of interest (exact in law, `O(log n)`).
    #[default]
    Fast,
}

/// Which node each replicate observes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum KRule {
    Fixed { k: u64 },
    AlphaN { alpha: f64 },
    BetaNOverSqrtLog { beta: f64 },
    NOverLog,
    LastInserted,
    Dyadic { x: f64 },
    /// No single node: whole-tree path lengths and Wiener indices.
    Functionals,
}

impl KRule {
    fn is_label(&self) -> bool {
        matches!(self, KRule::Fixed { .. } | KRule::AlphaN { .. } | KRule::BetaNOverSqrtLog { .. } | KRule::NOverLog)
    }

    /// Label selected at size `n`, rounded half-up and clamped to `1..=n`.
    pub fn label(&self, n: u64) -> Option<(u64, bool)> {
        let nf = n as f64;
        let raw = match *self {
            KRule::Fixed { k } => k as f64,
            KRule::AlphaN { alpha } => alpha * nf,
            KRule::BetaNOverSqrtLog { beta } => beta * nf / nf.ln().sqrt(),
            KRule::NOverLog => nf / nf.ln(),
            _ => return None,
        };
        let rounded = (raw + 0.5).floor();
        let k = if rounded.is_nan() { 1.0 } else { rounded.clamp(1.0, nf) };
        let clamped = k != rounded;
        if clamped {
            log::warn!("k rule {self:?} at n={n} gives {raw}; clamped to {k}");
        }
        Some((k as u64, clamped))
    }
}

/// Per-replicate quantities a claim can refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Depth,
    WeightedDepth,
    /// `W / n`
    WeightedOverN,
    /// `(W − k·D) / n`
    WeightedCenteredKdOverN,
    /// `(W − E[W]) / n` with the exact mean
    WeightedCenteredMeanOverN,
    /// `(D − 2 ln n) / √(2 ln n)`
    DepthStd2Log,
    /// `(D − ln n) / √ln n`
    DepthStdLog,
    /// `W / ln n`
    WeightedOverLog,
    /// `W / (2 n ln n)`
    WeightedOver2NLogN,
    /// Key (rank or real) of the observed node
    Key,
    /// `(D − D*)²`, `D*` the depth of the `k`-th external node
    DfsDepthGapSq,
    /// `(W − W*)²`
    DfsWeightGapSq,
    /// 1 if `D ≤ D* ≤ D + H_k(n)` with `H_k(n)` the level count of the
    /// subtree of `k`, else 0
    DfsSandwich,
    PathLength,
    Wiener,
    WeightedPathLength,
    WeightedWiener,
    /// `P / n`
    PathLengthOverN,
    /// `W_n / n²`
    WienerOverN2,
    /// `𝓟 / n`
    WeightedPathLengthOverN,
    /// `𝓦 / n²`
    WeightedWienerOverN2,
}

impl Observable {
    fn needs_tree(self) -> bool {
        matches!(self, Observable::DfsDepthGapSq | Observable::DfsWeightGapSq | Observable::DfsSandwich)
    }

    fn needs_functionals(self) -> bool {
        matches!(
            self,
            Observable::PathLength
                | Observable::Wiener
                | Observable::WeightedPathLength
                | Observable::WeightedWiener
                | Observable::PathLengthOverN
                | Observable::WienerOverN2
                | Observable::WeightedPathLengthOverN
                | Observable::WeightedWienerOverN2
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    Mean { of: Observable },
    Variance { of: Observable },
    MeanSquare { of: Observable },
    Min { of: Observable },
    Max { of: Observable },
    Correlation { x: Observable, y: Observable },
    Covariance { x: Observable, y: Observable },
    /// `E[numerator] / Var(denominator)`
    MeanOverVariance { numerator: Observable, denominator: Observable },
    /// Kolmogorov–Smirnov distance to a reference law (two-sample against the
    /// law's sampler when it has no closed CDF).
    Ks { of: Observable, law: ReferenceLaw },
}

impl Statistic {
    fn observables(&self) -> Vec<Observable> {
        match *self {
            Statistic::Mean { of }
            | Statistic::Variance { of }
            | Statistic::MeanSquare { of }
            | Statistic::Min { of }
            | Statistic::Max { of }
            | Statistic::Ks { of, .. } => vec![of],
            Statistic::Correlation { x, y } | Statistic::Covariance { x, y } => vec![x, y],
            Statistic::MeanOverVariance { numerator, denominator } => vec![numerator, denominator],
        }
    }
}

/// Size-dependent reference values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    /// `k ln(k(n−k+1)) + n`
    WeightedDepthExpansion,
    /// exact `E[W_k(n)]` in the permutation model
    WeightedDepthMean,
    /// exact `E[D_k(n)] = H_k + H_{n−k+1} − 2`
    DepthMean,
    /// `2 ln n`
    TwoLogN,
    /// `1/2 + 2β²` with `β = k √(ln n) / n`
    RegimeVariance,
    /// `n ln n + (γ − 3/2) n`
    WeightedPathLengthExpansion,
    /// `(n+1) H_n − 3n/2`, the exact i.i.d.-model mean of `𝓟_n`
    WeightedPathLengthMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Value(f64),
    Formula { formula: Formula },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    /// `|s − t| ≤ abs + rel·|t| + se·SE`
    Within {
        target: Target,
        #[serde(default)]
        abs: f64,
        #[serde(default)]
        rel: f64,
        #[serde(default)]
        se: f64,
    },
    /// `s / t ∈ [1 − tol, 1 + tol]`
    RatioWithin { target: Target, tol: f64 },
    AtLeast { value: f64 },
    AtMost { value: f64 },
    AbsAtMost { value: f64 },
    NotRejected,
    /// Strictly decreasing across the listed sizes.
    DecreasingInN,
    /// Log-log slope of the statistic against `n` within `tol` of `target`.
    Slope { target: f64, tol: f64 },
    /// Slope reported without a verdict.
    SlopeReport,
    /// Always passes; the value is informational.
    Report,
}

impl Check {
    fn across_sizes(&self) -> bool {
        matches!(self, Check::DecreasingInN | Check::Slope { .. } | Check::SlopeReport)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub statistic: Statistic,
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub model: Model,
    pub n: Vec<u64>,
    pub k: KRule,
    #[serde(default)]
    pub method: Method,
    pub replicates: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub claims: Vec<Claim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecFile {
    pub spec_version: u32,
    pub experiments: Vec<ExperimentSpec>,
}

impl SpecFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SpecFile = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(Error::Spec(format!(
                "spec_version {} unsupported (expected {SPEC_VERSION})",
                self.spec_version
            )));
        }
        let mut ids = HashSet::new();
        for e in &self.experiments {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Spec(format!("duplicate experiment id {}", e.id)));
            }
            e.validate()?;
        }
        Ok(())
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Spec(format!("{}: {msg}", self.id)));
        if self.id.is_empty() {
            return fail("empty id".into());
        }
        if self.replicates < 1 {
            return fail("replicates must be >= 1".into());
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return fail("n must be a non-empty list of positive sizes".into());
        }
        match self.k {
            KRule::Dyadic { x } => {
                if self.model != Model::Iid {
                    return fail("dyadic paths need the iid model".into());
                }
                if !(0.0..=1.0).contains(&x) {
                    return fail(format!("dyadic x = {x} outside [0, 1]"));
                }
            }
            KRule::AlphaN { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                return fail(format!("alpha = {alpha} outside (0, 1]"));
            }
            KRule::BetaNOverSqrtLog { beta } if !(beta >= 0.0) => {
                return fail(format!("beta = {beta} must be >= 0"));
            }
            KRule::Fixed { k: 0 } => return fail("fixed k must be >= 1".into()),
            _ => {}
        }
        if self.method == Method::Fast && (self.k == KRule::Functionals || (self.model == Model::Iid && self.k.is_label())) {
            return fail("fast method unavailable for this rule/model; use \"tree\"".into());
        }
        let mut claim_ids = HashSet::new();
        for c in &self.claims {
            if !claim_ids.insert(c.id.as_str()) {
                return fail(format!("duplicate claim id {}", c.id));
            }
            for o in c.statistic.observables() {
                if o.needs_tree() && (self.method != Method::Tree || !self.k.is_label()) {
                    return fail(format!("{o:?} needs the tree method and a label rule"));
                }
                if o.needs_functionals() != (self.k == KRule::Functionals) {
                    return fail(format!("{o:?} does not fit rule {:?}", self.k));
                }
            }
            if c.check.across_sizes() && self.n.len() < 2 {
                return fail(format!("claim {} compares sizes but only one n is listed", c.id));
            }
            if matches!(c.check, Check::Slope { .. } | Check::SlopeReport) && self.n.len() < 3 {
                return fail(format!("claim {} fits a slope and needs at least 3 sizes", c.id));
            }
            if matches!(c.check, Check::NotRejected) && !matches!(c.statistic, Statistic::Ks { .. }) {
                return fail(format!("claim {}: not_rejected pairs with ks statistics only", c.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Report,
}

/// One conformance row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimResult {
    pub experiment: String,
    pub claim: String,
    /// `None` for claims comparing sizes.
    pub n: Option<u64>,
    pub k: Option<u64>,
    pub replicates: u64,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub verdict: Verdict,
    pub detail: String,
}

impl ClaimResult {
    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

/// What one replicate observed.
#[derive(Debug, Clone, Copy)]
struct Raw {
    obs: Option<PathObservation>,
    dfs: Option<(PathObservation, u32)>,
    functionals: Option<TreeFunctionals>,
}

struct SizeContext {
    n: u64,
    k: Option<u64>,
    exact_mean_w: f64,
}

fn harmonic(m: u64) -> f64 {
    (1..=m).map(|j| 1.0 / j as f64).sum()
}

/// Exact `E[W_k(n)] = k + Σ_{j≠k} j / (|k−j| + 1)`.
pub fn exact_weighted_depth_mean(n: u64, k: u64) -> f64 {
    let mut s = k as f64;
    for j in 1..=n {
        if j != k {
            s += j as f64 / (j.abs_diff(k) + 1) as f64;
        }
    }
    s
}

impl Observable {
    fn value(self, raw: &Raw, ctx: &SizeContext) -> f64 {
        let n = ctx.n as f64;
        let ln = n.ln();
        let o = raw.obs;
        let d = || f64::from(o.expect("path observation").depth);
        let w = || o.expect("path observation").weighted_depth;
        let f = || raw.functionals.expect("functionals");
        match self {
            Observable::Depth => d(),
            Observable::WeightedDepth => w(),
            Observable::WeightedOverN => w() / n,
            Observable::WeightedCenteredKdOverN => (w() - ctx.k.unwrap_or(1) as f64 * d()) / n,
            Observable::WeightedCenteredMeanOverN => (w() - ctx.exact_mean_w) / n,
            Observable::DepthStd2Log => (d() - 2.0 * ln) / (2.0 * ln).sqrt(),
            Observable::DepthStdLog => (d() - ln) / ln.sqrt(),
            Observable::WeightedOverLog => w() / ln,
            Observable::WeightedOver2NLogN => w() / (2.0 * n * ln),
            Observable::Key => o.expect("path observation").node_key.value(),
            Observable::DfsDepthGapSq => {
                let (e, _) = raw.dfs.expect("dfs");
                (d() - f64::from(e.depth)).powi(2)
            }
            Observable::DfsWeightGapSq => {
                let (e, _) = raw.dfs.expect("dfs");
                (w() - e.weighted_depth).powi(2)
            }
            Observable::DfsSandwich => {
                let (e, levels) = raw.dfs.expect("dfs");
                let dd = o.expect("path observation").depth;
                f64::from(u8::from(dd <= e.depth && e.depth <= dd + levels))
            }
            Observable::PathLength => f().p as f64,
            Observable::Wiener => f().w as f64,
            Observable::WeightedPathLength => f().wp,
            Observable::WeightedWiener => f().ww,
            Observable::PathLengthOverN => f().p as f64 / n,
            Observable::WienerOverN2 => f().w as f64 / (n * n),
            Observable::WeightedPathLengthOverN => f().wp / n,
            Observable::WeightedWienerOverN2 => f().ww / (n * n),
        }
    }
}

impl Formula {
    fn eval(self, ctx: &SizeContext) -> f64 {
        let n = ctx.n as f64;
        let k = ctx.k.unwrap_or(1) as f64;
        match self {
            Formula::WeightedDepthExpansion => k * (k * (n - k + 1.0)).ln() + n,
            Formula::WeightedDepthMean => ctx.exact_mean_w,
            Formula::DepthMean => {
                let k = ctx.k.unwrap_or(1);
                harmonic(k) + harmonic(ctx.n - k + 1) - 2.0
            }
            Formula::TwoLogN => 2.0 * n.ln(),
            Formula::RegimeVariance => {
                let beta = k * n.ln().sqrt() / n;
                0.5 + 2.0 * beta * beta
            }
            Formula::WeightedPathLengthExpansion => weighted_path_length_expansion(ctx.n as usize),
            Formula::WeightedPathLengthMean => (n + 1.0) * harmonic(ctx.n) - 1.5 * n,
        }
    }
}

impl Target {
    fn eval(self, ctx: &SizeContext) -> f64 {
        match self {
            Target::Value(v) => v,
            Target::Formula { formula } => formula.eval(ctx),
        }
    }
}

/// Stream for experiment `id` at size index `i`, so that experiments and
/// sizes never share random numbers.
fn stream_id(id: &str, i: usize) -> u64 {
    // FNV-1a of the id, then the size index
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ ((i as u64) << 56) ^ streams::PATH
}

fn node_of_label(tree: &LabelledTree, k: u64) -> usize {
    tree.node_of_rank(k as u32)
        .unwrap_or_else(|| tree.in_order()[k as usize - 1])
}

fn replicate(spec: &ExperimentSpec, ctx: &SizeContext, want: &BTreeSet<Observable>, rng: &mut LabRng) -> Result<Raw> {
    let n = ctx.n;
    let mut raw = Raw {
        obs: None,
        dfs: None,
        functionals: None,
    };
    if spec.method == Method::Fast {
        raw.obs = Some(match spec.k {
            KRule::LastInserted => sample_last_inserted(n, rng)?,
            KRule::Dyadic { x } => sample_silhouette_path(n, &DyadicPath::from_value(x)?, rng)?,
            _ => sample_label_path(n, ctx.k.expect("label rule"), rng)?,
        });
        return Ok(raw);
    }
    let tree = match spec.model {
        Model::Permutation => build_permutation_with(n as usize, rng)?,
        Model::Iid => build_iid_with(n as usize, rng)?,
    };
    match spec.k {
        KRule::Functionals => raw.functionals = Some(functionals_recursive(&tree)),
        KRule::LastInserted => raw.obs = Some(tree.last_inserted()),
        KRule::Dyadic { x } => raw.obs = Some(tree.silhouette_depths(&DyadicPath::from_value(x)?)),
        _ => {
            let k = ctx.k.expect("label rule");
            let node = node_of_label(&tree, k);
            raw.obs = Some(tree.observe_node(node));
            if want.iter().any(|o| o.needs_tree()) {
                let ext = tree.dfs_external()[k as usize - 1];
                let levels = subtree_levels(&tree, node);
                raw.dfs = Some((ext, levels));
            }
        }
    }
    Ok(raw)
}

/// Number of levels of the subtree rooted at `node`.
fn subtree_levels(tree: &LabelledTree, node: usize) -> u32 {
    let mut best = 0;
    let mut stack = vec![(node, 1u32)];
    while let Some((v, l)) = stack.pop() {
        best = best.max(l);
        stack.extend(tree.left(v).map(|c| (c, l + 1)));
        stack.extend(tree.right(v).map(|c| (c, l + 1)));
    }
    best
}

/// Per-size evaluation of a statistic: (estimate, standard error, extra).
struct Evaluated {
    estimate: f64,
    stderr: Option<f64>,
    ks_rejected: Option<bool>,
    detail: String,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    if x.len() < 2 {
        return 0.0;
    }
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

fn se_of_mean(x: &[f64]) -> f64 {
    (sample_var(x) / x.len() as f64).sqrt()
}

fn evaluate(stat: &Statistic, cols: &HashMap<Observable, Vec<f64>>, seed: u64) -> Result<Evaluated> {
    let col = |o: &Observable| cols[o].as_slice();
    let plain = |estimate: f64, stderr: f64| Evaluated {
        estimate,
        stderr: Some(stderr),
        ks_rejected: None,
        detail: String::new(),
    };
    Ok(match stat {
        Statistic::Mean { of } => plain(mean(col(of)), se_of_mean(col(of))),
        Statistic::Variance { of } => {
            let x = col(of);
            let m = mean(x);
            let dev2: Vec<f64> = x.iter().map(|v| (v - m).powi(2)).collect();
            plain(sample_var(x), se_of_mean(&dev2))
        }
        Statistic::MeanSquare { of } => {
            let sq: Vec<f64> = col(of).iter().map(|v| v * v).collect();
            plain(mean(&sq), se_of_mean(&sq))
        }
        Statistic::Min { of } => plain(col(of).iter().copied().fold(f64::INFINITY, f64::min), 0.0),
        Statistic::Max { of } => plain(col(of).iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0),
        Statistic::Correlation { x, y } => {
            let r = correlation(col(x), col(y))?;
            plain(r, (1.0 - r * r) / (col(x).len() as f64).sqrt())
        }
        Statistic::Covariance { x, y } => {
            let (a, b) = (col(x), col(y));
            let (ma, mb) = (mean(a), mean(b));
            let prod: Vec<f64> = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).collect();
            let n = a.len() as f64;
            plain(mean(&prod) * n / (n - 1.0).max(1.0), se_of_mean(&prod))
        }
        Statistic::MeanOverVariance { numerator, denominator } => {
            let v = sample_var(col(denominator));
            plain(mean(col(numerator)) / v, se_of_mean(col(numerator)) / v)
        }
        Statistic::Ks { of, law } => {
            let x = col(of);
            let report = match law.cdf(0.0) {
                Some(_) => ks_one_sample(x, |t| law.cdf(t).expect("closed form"), DEFAULT_LEVEL)?,
                None => {
                    let reference = law.sample(x.len(), seed);
                    ks_two_sample(x, &reference, DEFAULT_LEVEL)?
                }
            };
            Evaluated {
                estimate: report.statistic,
                stderr: None,
                ks_rejected: Some(report.rejected),
                detail: format!("critical {:.6}, p {:.3e}", report.critical_value, report.p_value),
            }
        }
    })
}

fn judge(check: &Check, ev: &Evaluated, ctx: &SizeContext) -> (Option<f64>, Option<f64>, Verdict) {
    let v = |ok: bool| if ok { Verdict::Pass } else { Verdict::Fail };
    let s = ev.estimate;
    match *check {
        Check::Within { target, abs, rel, se } => {
            let t = target.eval(ctx);
            let tol = abs + rel * t.abs() + se * ev.stderr.unwrap_or(0.0);
            (Some(t), Some(tol), v((s - t).abs() <= tol))
        }
        Check::RatioWithin { target, tol } => {
            let t = target.eval(ctx);
            (Some(t), Some(tol), v((s / t - 1.0).abs() <= tol))
        }
        Check::AtLeast { value } => (Some(value), None, v(s >= value)),
        Check::AtMost { value } => (Some(value), None, v(s <= value)),
        Check::AbsAtMost { value } => (Some(value), None, v(s.abs() <= value)),
        Check::NotRejected => (None, None, v(ev.ks_rejected == Some(false))),
        Check::Report => (None, None, Verdict::Report),
        Check::DecreasingInN | Check::Slope { .. } | Check::SlopeReport => unreachable!("handled across sizes"),
    }
}

/// Runs one experiment; `default_seed` applies when the spec has none.
pub fn run(spec: &ExperimentSpec, default_seed: u64) -> Result<Vec<ClaimResult>> {
    spec.validate()?;
    let seed = spec.seed.unwrap_or(default_seed);
    let want: BTreeSet<Observable> = spec.claims.iter().flat_map(|c| c.statistic.observables()).collect();
    let mut rows = Vec::new();
    let mut per_size: Vec<Vec<(u64, Evaluated)>> = (0..spec.claims.len()).map(|_| Vec::new()).collect();
    for (i, &n) in spec.n.iter().enumerate() {
        let k = spec.k.label(n).map(|(k, _)| k);
        let ctx = SizeContext {
            n,
            k,
            exact_mean_w: k.map_or(f64::NAN, |k| exact_weighted_depth_mean(n, k)),
        };
        let stream = stream_id(&spec.id, i);
        let raws: Vec<Raw> = (0..spec.replicates)
            .into_par_iter()
            .map(|r| replicate(spec, &ctx, &want, &mut stream_rng(seed, stream, r)))
            .collect::<Result<_>>()?;
        let cols: HashMap<Observable, Vec<f64>> = want
            .iter()
            .map(|&o| (o, raws.iter().map(|raw| o.value(raw, &ctx)).collect()))
            .collect();
        for (ci, claim) in spec.claims.iter().enumerate() {
            let ev = evaluate(&claim.statistic, &cols, seed ^ stream ^ ci as u64)?;
            if claim.check.across_sizes() {
                per_size[ci].push((n, ev));
                continue;
            }
            let (target, tolerance, verdict) = judge(&claim.check, &ev, &ctx);
            rows.push(ClaimResult {
                experiment: spec.id.clone(),
                claim: claim.id.clone(),
                n: Some(n),
                k,
                replicates: spec.replicates,
                estimate: ev.estimate,
                stderr: ev.stderr,
                target,
                tolerance,
                verdict,
                detail: ev.detail,
            });
        }
    }
    for (ci, claim) in spec.claims.iter().enumerate() {
        if !claim.check.across_sizes() {
            continue;
        }
        let series = &per_size[ci];
        let listing = series
            .iter()
            .map(|(n, e)| format!("n={n}: {:.6e}", e.estimate))
            .collect::<Vec<_>>()
            .join("; ");
        let (estimate, stderr, target, tolerance, verdict) = match claim.check {
            Check::DecreasingInN => {
                let ok = series.windows(2).all(|w| w[1].1.estimate < w[0].1.estimate);
                let last = series.last().expect("sizes").1.estimate;
                (last, None, None, None, if ok { Verdict::Pass } else { Verdict::Fail })
            }
            Check::Slope { .. } | Check::SlopeReport => {
                let points: Vec<(f64, f64)> = series.iter().map(|(n, e)| (*n as f64, e.estimate)).collect();
                let fit = scaling_regression(&points)?;
                match claim.check {
                    Check::Slope { target, tol } => {
                        let ok = (fit.exponent - target).abs() <= tol;
                        let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
                        (fit.exponent, Some(fit.std_error), Some(target), Some(tol), verdict)
                    }
                    _ => (fit.exponent, Some(fit.std_error), None, None, Verdict::Report),
                }
            }
            _ => unreachable!("only size-comparing checks reach here"),
        };
        rows.push(ClaimResult {
            experiment: spec.id.clone(),
            claim: claim.id.clone(),
            n: None,
            k: None,
            replicates: spec.replicates,
            estimate,
            stderr,
            target,
            tolerance,
            verdict,
            detail: listing,
        });
    }
    Ok(rows)
}

pub fn run_all(file: &SpecFile, default_seed: u64) -> Result<Vec<ClaimResult>> {
    let mut out = Vec::new();
    for spec in &file.experiments {
        out.extend(run(spec, default_seed)?);
    }
    Ok(out)
}

fn claim(id: &str, statistic: Statistic, check: Check) -> Claim {
    Claim {
        id: id.to_string(),
        statistic,
        check,
    }
}

/// Depth `X_n` and weighted depth `𝕏_n` of the last inserted node.
pub fn last_inserted_spec(n: &[u64], replicates: u64, seed: u64) -> ExperimentSpec {
    use Observable::*;
    ExperimentSpec {
        id: "last-inserted".into(),
        model: Model::Permutation,
        n: n.to_vec(),
        k: KRule::LastInserted,
        method: Method::Fast,
        replicates,
        seed: Some(seed),
        claims: vec![
            claim(
                "scaled-weight-mean",
                Statistic::Mean { of: WeightedOver2NLogN },
                Check::Within {
                    target: Target::Value(0.5),
                    abs: 0.02,
                    rel: 0.0,
                    se: 0.0,
                },
            ),
            claim("scaled-weight-min", Statistic::Min { of: WeightedOver2NLogN }, Check::AtLeast { value: 0.0 }),
            claim("scaled-weight-max", Statistic::Max { of: WeightedOver2NLogN }, Check::AtMost { value: 1.2 }),
            claim(
                "depth-over-2logn",
                Statistic::Mean { of: Depth },
                Check::RatioWithin {
                    target: Target::Formula { formula: Formula::TwoLogN },
                    tol: 0.1,
                },
            ),
            claim(
                "scaled-weight-vs-uniform",
                Statistic::Ks {
                    of: WeightedOver2NLogN,
                    law: ReferenceLaw::Uniform,
                },
                Check::Report,
            ),
            claim(
                "independence",
                Statistic::Correlation {
                    x: DepthStd2Log,
                    y: WeightedOver2NLogN,
                },
                Check::AbsAtMost { value: 0.05 },
            ),
        ],
    }
}

pub fn run_last_inserted(n: &[u64], replicates: u64, seed: u64) -> Result<Vec<ClaimResult>> {
    run(&last_inserted_spec(n, replicates, seed), seed)
}

/// Depth and weighted depth of a node against those of the matching
/// external node in depth-first order, over a grid of labels.
pub fn dfs_comparison_specs(n: &[u64], replicates: u64, seed: u64) -> Vec<ExperimentSpec> {
    use Observable::*;
    [0.1, 0.5, 0.9]
        .iter()
        .map(|&alpha| ExperimentSpec {
            id: format!("dfs-alpha-{alpha}"),
            model: Model::Permutation,
            n: n.to_vec(),
            k: KRule::AlphaN { alpha },
            method: Method::Tree,
            replicates,
            seed: Some(seed),
            claims: vec![
                claim("sandwich", Statistic::Min { of: DfsSandwich }, Check::AtLeast { value: 1.0 }),
                claim("depth-gap", Statistic::Mean { of: DfsDepthGapSq }, Check::AtMost { value: 10.0 }),
                claim(
                    "weight-gap-ratio",
                    Statistic::MeanOverVariance {
                        numerator: DfsWeightGapSq,
                        denominator: WeightedDepth,
                    },
                    if n.len() >= 2 { Check::DecreasingInN } else { Check::Report },
                ),
            ],
        })
        .collect()
}

pub fn run_dfs_comparison(n: &[u64], replicates: u64, seed: u64) -> Result<Vec<ClaimResult>> {
    let mut out = Vec::new();
    for spec in dfs_comparison_specs(n, replicates, seed) {
        out.extend(run(&spec, seed)?);
    }
    Ok(out)
}

const CSV_HEADER: [&str; 11] = [
    "experiment", "claim", "n", "k", "replicates", "estimate", "stderr", "target", "tolerance", "verdict", "detail",
];

/// RFC 4180 CSV with a header row, one row per claim result.
pub fn write_results_csv<W: Write>(out: W, rows: &[ClaimResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER).map_err(|e| Error::Spec(format!("csv: {e}")))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::Spec(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_jsonl<W: Write>(mut out: W, rows: &[ClaimResult]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_rules_round_half_up_and_clamp() {
        assert_eq!(KRule::AlphaN { alpha: 0.5 }.label(5), Some((3, false)));
        assert_eq!(KRule::AlphaN { alpha: 0.5 }.label(4), Some((2, false)));
        assert_eq!(KRule::Fixed { k: 10 }.label(4), Some((4, true)));
        assert_eq!(KRule::BetaNOverSqrtLog { beta: 0.0 }.label(100), Some((1, true)));
        let (k, _) = KRule::NOverLog.label(1000).unwrap();
        assert_eq!(k, 145);
        assert_eq!(KRule::LastInserted.label(10), None);
    }

    #[test]
    fn exact_mean_matches_small_oracle() {
        let m = crate::oracle::enumerate(6).unwrap();
        for lm in &m.labels {
            let exact = crate::oracle::to_f64(&lm.weighted_depth.mean);
            assert!((exact - exact_weighted_depth_mean(6, lm.k as u64)).abs() < 1e-12);
        }
    }

    fn parse(json: &str) -> Result<SpecFile> {
        SpecFile::from_json(json)
    }

    #[test]
    fn validation() {
        let ok = r#"{"spec_version":1,"experiments":[{"id":"a","model":"permutation","n":[100],
            "k":{"rule":"alpha_n","alpha":0.5},"replicates":10,
            "claims":[{"id":"m","statistic":{"kind":"mean","of":"depth"},"check":{"kind":"report"}}]}]}"#;
        assert!(parse(ok).is_ok());
        assert!(parse(&ok.replace("\"spec_version\":1", "\"spec_version\":2")).is_err());
        assert!(parse(&ok.replace("\"replicates\":10", "\"replicates\":0")).is_err());
        assert!(parse(&ok.replace("\"alpha_n\",\"alpha\":0.5", "\"dyadic\",\"x\":0.5")).is_err());
        assert!(parse(&ok.replace("\"of\":\"depth\"", "\"of\":\"dfs_sandwich\"")).is_err());
        assert!(parse(&ok.replace("\"of\":\"depth\"", "\"of\":\"wiener\"")).is_err());
        assert!(parse(&ok.replace("{\"kind\":\"report\"}", "{\"kind\":\"decreasing_in_n\"}")).is_err());
        let twice = ok.replace("}]}]}", "}]},{\"id\":\"a\",\"model\":\"iid\",\"n\":[5],\"k\":{\"rule\":\"functionals\"},\"method\":\"tree\",\"replicates\":1}]}");
        assert!(matches!(parse(&twice), Err(Error::Spec(_))));
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = ExperimentSpec {
            id: "det".into(),
            model: Model::Permutation,
            n: vec![50, 500, 5000],
            k: KRule::AlphaN { alpha: 0.3 },
            method: Method::Tree,
            replicates: 200,
            seed: None,
            claims: vec![
                claim("mean", Statistic::Mean { of: Observable::WeightedDepth }, Check::Report),
                claim(
                    "depth",
                    Statistic::Mean { of: Observable::Depth },
                    Check::Within {
                        target: Target::Formula { formula: Formula::DepthMean },
                        abs: 0.0,
                        rel: 0.0,
                        se: 4.0,
                    },
                ),
                claim("sandwich", Statistic::Min { of: Observable::DfsSandwich }, Check::AtLeast { value: 1.0 }),
                claim("slope", Statistic::Mean { of: Observable::WeightedDepth }, Check::SlopeReport),
            ],
        };
        let a = run(&spec, 7).unwrap();
        let b = run(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, run(&spec, 8).unwrap());
        assert!(a.iter().all(ClaimResult::passed), "{a:#?}");
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("experiment,claim,n,k,"));
        assert_eq!(text.lines().count(), a.len() + 1);
    }

    #[test]
    fn fast_and_tree_methods_agree() {
        let make = |method| ExperimentSpec {
            id: "m".into(),
            model: Model::Permutation,
            n: vec![300],
            k: KRule::Fixed { k: 100 },
            method,
            replicates: 4000,
            seed: Some(3),
            claims: vec![claim("m", Statistic::Mean { of: Observable::WeightedDepth }, Check::Report)],
        };
        let f = &run(&make(Method::Fast), 0).unwrap()[0];
        let t = &run(&make(Method::Tree), 0).unwrap()[0];
        let se = (f.stderr.unwrap().powi(2) + t.stderr.unwrap().powi(2)).sqrt();
        assert!((f.estimate - t.estimate).abs() < 4.0 * se);
        let exact = exact_weighted_depth_mean(300, 100);
        assert!((f.estimate - exact).abs() < 4.0 * f.stderr.unwrap());
    }

    #[test]
    fn impossible_tolerance_fails() {
        let spec = ExperimentSpec {
            id: "x".into(),
            model: Model::Iid,
            n: vec![64],
            k: KRule::Dyadic { x: 0.25 },
            method: Method::Fast,
            replicates: 50,
            seed: Some(1),
            claims: vec![claim(
                "m",
                Statistic::Mean { of: Observable::Depth },
                Check::Within {
                    target: Target::Value(-1.0),
                    abs: 0.0,
                    rel: 0.0,
                    se: 0.0,
                },
            )],
        };
        assert!(!run(&spec, 0).unwrap()[0].passed());
    }

    #[test]
    fn builtin_suites_run() {
        let rows = run_last_inserted(&[1000], 2000, 4).unwrap();
        assert_eq!(rows.len(), 6);
        let rows = run_dfs_comparison(&[100, 400], 100, 5).unwrap();
        assert!(rows.iter().filter(|r| r.claim == "sandwich").all(ClaimResult::passed));
    }
}
