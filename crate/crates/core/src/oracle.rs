//! Exact enumeration over all `n!` insertion orders (`n ≤ 8`) with rational
//! arithmetic.
//!
//! `A_{j,k}` is the event that `k` lies in the subtree of `j`. The shifted
//! events `B_{j,k}` are `A_{j,k−1}` for `j < k`, `A_{j,k+1}` for `j > k`, and
//! the sure event for `j = k`; `D̄_k = Σ_j 1_{B_{j,k}} − 1` and
//! `W̄_k = Σ_j j·1_{B_{j,k}}`.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::aggregates::functionals_recursive;
use crate::error::{out_of_range, Result};
use crate::tree::LabelledTree;

pub type Rational = Ratio<i128>;

pub const MAX_N: usize = 8;
pub const MAX_LEMMA_N: usize = 7;

fn r(p: i128, q: i128) -> Rational {
    Rational::new(p, q)
}

fn int(p: i128) -> Rational {
    Rational::from_integer(p)
}

/// Visits every permutation of `1..=n` once (Heap's algorithm).
pub fn for_each_permutation<F: FnMut(&[u32])>(n: usize, mut visit: F) {
    let mut perm: Vec<u32> = (1..=n as u32).collect();
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

pub fn factorial(n: usize) -> i128 {
    (1..=n as i128).product()
}

/// `Σ_{j≤m} j^{−i}`.
pub fn harmonic(m: usize, i: u32) -> Rational {
    (1..=m as i128).map(|j| r(1, j.pow(i))).sum()
}

/// Exact sums of `X` and `X²` over all permutations.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    sum: i128,
    sum_sq: i128,
}

impl Tally {
    fn push(&mut self, x: i128) {
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn moment(&self, total: i128) -> Moment {
        let mean = r(self.sum, total);
        Moment {
            mean,
            variance: r(self.sum_sq, total) - mean * mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Moment {
    pub mean: Rational,
    pub variance: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMoments {
    pub k: usize,
    pub depth: Moment,
    pub weighted_depth: Moment,
    pub depth_bar: Moment,
    pub weighted_bar: Moment,
    /// Weighted depth of label `n+1−k` in the mirrored tree.
    pub mirrored_weighted_depth: Moment,
    /// `P(T^>_k ≥ ℓ)` for `ℓ = 0..=n−k`, `T^>_k` the number of labels above
    /// `k` in its subtree.
    pub right_tail: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactMoments {
    pub n: usize,
    pub permutations: i128,
    pub labels: Vec<LabelMoments>,
    pub path_length: Moment,
    pub wiener: Moment,
    pub weighted_path_length: Moment,
    pub weighted_wiener: Moment,
    /// Depth of the last inserted node.
    pub last_depth: Moment,
    /// Weighted depth of the last inserted node.
    pub last_weighted: Moment,
    /// `a[j-1][k-1] = P(A_{j,k})`.
    pub a: Vec<Vec<Rational>>,
    /// `b[j-1][k-1] = P(B_{j,k})`.
    pub b: Vec<Vec<Rational>>,
    /// Per-sample mirror identity `W_k + W^{mirror}_{n+1−k} = (n+1)(D_k+1)`
    /// violations.
    pub mirror_violations: u64,
}

/// `anc[k-1]` has bit `j-1` set iff `j` is an ancestor of `k` (or `j = k`).
fn ancestor_masks(tree: &LabelledTree, n: usize) -> Vec<u32> {
    let mut anc = vec![0u32; n];
    // parents precede children in node order
    for node in 0..n {
        let label = tree.key_value(node) as usize;
        let up = tree.parent(node).map_or(0, |p| anc[tree.key_value(p) as usize - 1]);
        anc[label - 1] = up | (1 << (label - 1));
    }
    anc
}

/// Bit `j-1` set iff `B_{j,k}` holds.
fn b_mask(anc: &[u32], n: usize, k: usize) -> u32 {
    let mut mask = 1u32 << (k - 1);
    for j in 1..=n {
        let holds = if j < k {
            anc[k - 2] >> (j - 1) & 1 == 1
        } else if j > k {
            anc[k] >> (j - 1) & 1 == 1
        } else {
            continue;
        };
        if holds {
            mask |= 1 << (j - 1);
        }
    }
    mask
}

pub fn enumerate(n: usize) -> Result<ExactMoments> {
    if !(1..=MAX_N).contains(&n) {
        return Err(out_of_range("n", n, "1..=8"));
    }
    let total = factorial(n);
    let mut depth = vec![Tally::default(); n];
    let mut weighted = vec![Tally::default(); n];
    let mut depth_bar = vec![Tally::default(); n];
    let mut weighted_bar = vec![Tally::default(); n];
    let mut mirrored = vec![Tally::default(); n];
    let mut tail = vec![vec![0i128; n + 1]; n];
    let mut a_count = vec![vec![0i128; n]; n];
    let mut b_count = vec![vec![0i128; n]; n];
    let (mut p, mut w, mut wp, mut ww) = (Tally::default(), Tally::default(), Tally::default(), Tally::default());
    let (mut last_d, mut last_w) = (Tally::default(), Tally::default());
    let mut mirror_violations = 0u64;
    let mut mirror_perm = vec![0u32; n];

    for_each_permutation(n, |perm| {
        let tree = LabelledTree::from_permutation(perm).expect("valid permutation");
        for (m, &x) in mirror_perm.iter_mut().zip(perm) {
            *m = n as u32 + 1 - x;
        }
        let mirror = LabelledTree::from_permutation(&mirror_perm).expect("valid permutation");
        let anc = ancestor_masks(&tree, n);
        for k in 1..=n {
            let node = tree.node_of_rank(k as u32).expect("label present");
            let d = i128::from(tree.depth(node));
            let wk = tree.weighted_depth(node) as i128;
            depth[k - 1].push(d);
            weighted[k - 1].push(wk);
            let m_node = mirror.node_of_rank((n + 1 - k) as u32).expect("label present");
            let wm = mirror.weighted_depth(m_node) as i128;
            mirrored[k - 1].push(wm);
            if wk + wm != (n as i128 + 1) * (d + 1) {
                mirror_violations += 1;
            }
            for j in 1..=n {
                if anc[k - 1] >> (j - 1) & 1 == 1 {
                    a_count[j - 1][k - 1] += 1;
                }
            }
            let bm = b_mask(&anc, n, k);
            let mut db = -1i128;
            let mut wb = 0i128;
            for j in 1..=n {
                if bm >> (j - 1) & 1 == 1 {
                    b_count[j - 1][k - 1] += 1;
                    db += 1;
                    wb += j as i128;
                }
            }
            depth_bar[k - 1].push(db);
            weighted_bar[k - 1].push(wb);
            // labels above k in its subtree form the run k+1..k+t
            let above = (k + 1..=n).take_while(|&l| anc[l - 1] >> (k - 1) & 1 == 1).count();
            for cell in &mut tail[k - 1][..=above] {
                *cell += 1;
            }
        }
        let f = functionals_recursive(&tree);
        p.push(f.p as i128);
        w.push(f.w as i128);
        wp.push(f.wp as i128);
        ww.push(f.ww as i128);
        let last = tree.last_inserted();
        last_d.push(i128::from(last.depth));
        last_w.push(last.weighted_depth as i128);
    });

    let labels = (1..=n)
        .map(|k| LabelMoments {
            k,
            depth: depth[k - 1].moment(total),
            weighted_depth: weighted[k - 1].moment(total),
            depth_bar: depth_bar[k - 1].moment(total),
            weighted_bar: weighted_bar[k - 1].moment(total),
            mirrored_weighted_depth: mirrored[k - 1].moment(total),
            right_tail: tail[k - 1][..=n - k].iter().map(|&c| r(c, total)).collect(),
        })
        .collect();
    let to_prob = |m: Vec<Vec<i128>>| m.into_iter().map(|row| row.into_iter().map(|c| r(c, total)).collect()).collect();
    Ok(ExactMoments {
        n,
        permutations: total,
        labels,
        path_length: p.moment(total),
        wiener: w.moment(total),
        weighted_path_length: wp.moment(total),
        weighted_wiener: ww.moment(total),
        last_depth: last_d.moment(total),
        last_weighted: last_w.moment(total),
        a: to_prob(a_count),
        b: to_prob(b_count),
        mirror_violations,
    })
}

/// Outcome of one family of exact checks; `failures` lists every mismatch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub n: usize,
    pub checked: u64,
    pub failures: Vec<String>,
}

impl CheckReport {
    fn new(name: &str, n: usize) -> Self {
        CheckReport {
            name: name.to_string(),
            n,
            ..Default::default()
        }
    }

    fn expect_eq(&mut self, what: impl FnOnce() -> String, got: Rational, want: Rational) {
        self.checked += 1;
        if got != want {
            self.failures.push(format!("{}: got {got}, want {want}", what()));
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// `P(A_{j,k}) = 1/(|k−j|+1)` and `P(B_{j,k}) = 1/|k−j|` for `j ≠ k`.
pub fn marginal_check(m: &ExactMoments) -> CheckReport {
    let mut rep = CheckReport::new("event marginals", m.n);
    for j in 1..=m.n {
        for k in 1..=m.n {
            let gap = (k as i128 - j as i128).abs();
            rep.expect_eq(|| format!("P(A_{j},{k})"), m.a[j - 1][k - 1], r(1, gap + 1));
            if j != k {
                rep.expect_eq(|| format!("P(B_{j},{k})"), m.b[j - 1][k - 1], r(1, gap));
            }
        }
    }
    rep
}

/// Marginals and full mutual independence of `{B_{j,k}}_j` for each `k`:
/// `P(∩_{j∈S} B_{j,k}) = ∏_{j∈S} P(B_{j,k})` for every subset `S`.
pub fn lemma1_check(n: usize) -> Result<CheckReport> {
    if !(1..=MAX_LEMMA_N).contains(&n) {
        return Err(out_of_range("n", n, "1..=7"));
    }
    let total = factorial(n);
    let subsets = 1usize << n;
    let mut counts = vec![vec![0i128; subsets]; n];
    for_each_permutation(n, |perm| {
        let tree = LabelledTree::from_permutation(perm).expect("valid permutation");
        let anc = ancestor_masks(&tree, n);
        for k in 1..=n {
            counts[k - 1][b_mask(&anc, n, k) as usize] += 1;
        }
    });
    let mut rep = CheckReport::new("lemma 1 independence", n);
    for (k0, count) in counts.iter_mut().enumerate() {
        let k = k0 + 1;
        // superset sums: count[S] becomes #{perms whose event set contains S}
        for bit in 0..n {
            for s in 0..subsets {
                if s >> bit & 1 == 0 {
                    count[s] += count[s | 1 << bit];
                }
            }
        }
        for (s, &c) in count.iter().enumerate() {
            let product: Rational = (1..=n)
                .filter(|&j| s >> (j - 1) & 1 == 1)
                .map(|j| if j == k { int(1) } else { r(1, (k as i128 - j as i128).abs()) })
                .product();
            rep.expect_eq(|| format!("k={k} S={s:#b}"), r(c, total), product);
        }
    }
    Ok(rep)
}

pub fn expected_w_bar(n: usize, k: usize) -> Rational {
    let (n_, k_) = (n as i128, k as i128);
    let h1 = harmonic(k - 1, 1) + harmonic(n - k, 1);
    int(k_) * (h1 - int(1)) + int(n_ + 1)
}

pub fn variance_w_bar(n: usize, k: usize) -> Rational {
    let (n_, k_) = (n as i128, k as i128);
    let h1 = harmonic(k - 1, 1) + harmonic(n - k, 1);
    let h2 = harmonic(k - 1, 2) + harmonic(n - k, 2);
    int(k_ * k_) * (h1 - h2 - int(3)) + r(n_ * n_, 2) + int(k_ * n_)
        + int(2 * k_) * (harmonic(k - 1, 1) - harmonic(n - k, 1))
        - r(n_, 2)
        + int(k_ + 1)
}

/// Enumerated `E[W̄_k(n)]`, `Var(W̄_k(n))` against the closed forms.
pub fn exact_moment_formula_check(m: &ExactMoments) -> CheckReport {
    let mut rep = CheckReport::new("W-bar closed forms", m.n);
    for lm in &m.labels {
        let k = lm.k;
        rep.expect_eq(|| format!("E[Wbar_{k}]"), lm.weighted_bar.mean, expected_w_bar(m.n, k));
        rep.expect_eq(|| format!("Var[Wbar_{k}]"), lm.weighted_bar.variance, variance_w_bar(m.n, k));
    }
    rep
}

/// `P(T^>_k ≥ ℓ) = 1/(ℓ+1)`.
pub fn subtree_tail_check(m: &ExactMoments) -> CheckReport {
    let mut rep = CheckReport::new("subtree tails", m.n);
    for lm in &m.labels {
        for (l, &pr) in lm.right_tail.iter().enumerate() {
            rep.expect_eq(|| format!("P(T>_{} >= {l})", lm.k), pr, r(1, l as i128 + 1));
        }
    }
    rep
}

/// Mirror identity per sample and in expectation:
/// `E[W_k] + E[W^{mirror}_{n+1−k}] = (n+1)(E[D_k]+1)`.
pub fn reflection_check(m: &ExactMoments) -> CheckReport {
    let mut rep = CheckReport::new("mirror identity", m.n);
    rep.checked += 1;
    if m.mirror_violations > 0 {
        rep.failures.push(format!("{} per-sample violations", m.mirror_violations));
    }
    let n1 = int(m.n as i128 + 1);
    for lm in &m.labels {
        rep.expect_eq(
            || format!("k={}", lm.k),
            lm.weighted_depth.mean + lm.mirrored_weighted_depth.mean,
            n1 * (lm.depth.mean + int(1)),
        );
    }
    rep
}

/// Every exact check available at this `n`.
pub fn all_checks(n: usize) -> Result<(ExactMoments, Vec<CheckReport>)> {
    let m = enumerate(n)?;
    let mut reports = vec![
        marginal_check(&m),
        exact_moment_formula_check(&m),
        subtree_tail_check(&m),
        reflection_check(&m),
    ];
    if n <= MAX_LEMMA_N {
        reports.push(lemma1_check(n)?);
    }
    Ok((m, reports))
}

/// One exact value as a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactRow {
    pub n: usize,
    pub k: Option<usize>,
    pub statistic: String,
    pub mean: String,
    pub mean_decimal: f64,
    pub variance: String,
    pub variance_decimal: f64,
}

pub fn to_f64(x: &Rational) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn row(n: usize, k: Option<usize>, statistic: &str, m: &Moment) -> ExactRow {
    ExactRow {
        n,
        k,
        statistic: statistic.to_string(),
        mean: m.mean.to_string(),
        mean_decimal: to_f64(&m.mean),
        variance: m.variance.to_string(),
        variance_decimal: to_f64(&m.variance),
    }
}

impl ExactMoments {
    pub fn rows(&self) -> Vec<ExactRow> {
        let n = self.n;
        let mut rows = vec![
            row(n, None, "path_length", &self.path_length),
            row(n, None, "wiener", &self.wiener),
            row(n, None, "weighted_path_length", &self.weighted_path_length),
            row(n, None, "weighted_wiener", &self.weighted_wiener),
            row(n, None, "last_depth", &self.last_depth),
            row(n, None, "last_weighted_depth", &self.last_weighted),
        ];
        for lm in &self.labels {
            let k = Some(lm.k);
            rows.push(row(n, k, "depth", &lm.depth));
            rows.push(row(n, k, "weighted_depth", &lm.weighted_depth));
            rows.push(row(n, k, "depth_bar", &lm.depth_bar));
            rows.push(row(n, k, "weighted_depth_bar", &lm.weighted_bar));
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregates::expected_path_length;
    use crate::rng::{stream_rng, streams};
    use crate::stats::StreamingMoments;
    use crate::tree::build_permutation_with;

    #[test]
    fn heap_visits_each_permutation_once() {
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(5, |p| {
            assert!(seen.insert(p.to_vec()));
        });
        assert_eq!(seen.len(), 120);
        let mut count = 0;
        for_each_permutation(1, |_| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn small_cases() {
        let m = enumerate(1).unwrap();
        assert_eq!(m.labels[0].depth.mean, int(0));
        assert_eq!(m.labels[0].weighted_depth.mean, int(1));
        let m = enumerate(3).unwrap();
        assert_eq!(m.a[2][0], r(1, 3));
        assert_eq!(m.labels[1].weighted_bar.mean, int(6));
        assert_eq!(m.labels[1].weighted_bar.variance, int(0));
        assert!(enumerate(0).is_err());
        assert!(enumerate(9).is_err());
    }

    #[test]
    fn lemma_one_examples() {
        let rep = lemma1_check(5).unwrap();
        assert!(rep.passed(), "{:?}", rep.failures);
        // n=5, k=3: B_{1,3} and B_{5,3} each have probability 1/2
        let m = enumerate(5).unwrap();
        assert_eq!(m.b[0][2] * m.b[4][2], r(1, 4));
        assert!(lemma1_check(8).is_err());
    }

    #[test]
    fn every_check_passes_up_to_six() {
        for n in 1..=6 {
            let (_, reps) = all_checks(n).unwrap();
            for rep in reps {
                assert!(rep.passed(), "n={n} {}: {:?}", rep.name, rep.failures);
            }
        }
    }

    #[test]
    fn tail_examples() {
        let m = enumerate(4).unwrap();
        assert_eq!(m.labels[1].right_tail[1], r(1, 2));
        let m = enumerate(5).unwrap();
        assert_eq!(m.labels[0].right_tail[4], r(1, 5));
        assert_eq!(m.labels[0].right_tail[0], int(1));
    }

    #[test]
    fn path_length_mean_matches_closed_form() {
        for n in 1..=7 {
            let m = enumerate(n).unwrap();
            assert!((to_f64(&m.path_length.mean) - expected_path_length(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_depths_agree() {
        let n = 7;
        let m = enumerate(n).unwrap();
        let mut acc = vec![StreamingMoments::new(); n];
        let mut rng = stream_rng(21, streams::PERMUTATION, 0);
        for _ in 0..20_000 {
            let t = build_permutation_with(n, &mut rng).unwrap();
            for (k, a) in acc.iter_mut().enumerate() {
                a.push(f64::from(t.depth(t.node_of_rank(k as u32 + 1).unwrap())));
            }
        }
        for (lm, a) in m.labels.iter().zip(&acc) {
            assert!((a.mean() - to_f64(&lm.depth.mean)).abs() < 4.0 * a.std_error());
        }
    }

    #[test]
    fn rows_render_rationals() {
        let m = enumerate(3).unwrap();
        let rows = m.rows();
        let wbar = rows.iter().find(|r| r.statistic == "weighted_depth_bar" && r.k == Some(2)).unwrap();
        assert_eq!(wbar.mean, "6");
        assert!(rows.iter().any(|r| r.mean.contains('/')));
    }
}
