//! Path length, Wiener index and their weighted versions.
//!
//! The weighted Wiener index sums weighted distances over unordered pairs of
//! nodes including each node paired with itself, whose weighted distance is
//! its own key.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Result};
use crate::rng::{stream_rng, streams};
use crate::tree::{build_iid_with, LabelledTree};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest tree accepted by the quadratic-time oracle.
pub const NAIVE_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeFunctionals {
    pub n: usize,
    /// path length
    pub p: u128,
    /// Wiener index
    pub w: u128,
    /// weighted path length
    pub wp: f64,
    /// weighted Wiener index
    pub ww: f64,
}

impl TreeFunctionals {
    /// Matches `other` exactly on integers and to `rel` on reals.
    pub fn agrees_with(&self, other: &TreeFunctionals, rel: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0);
        self.n == other.n
            && self.p == other.p
            && self.w == other.w
            && close(self.wp, other.wp)
            && close(self.ww, other.ww)
    }
}

/// All four functionals in one bottom-up pass over the subtree recursions
///
/// ```text
/// p(T) = p(T1) + p(T2) + |T| - 1
/// w(T) = w(T1) + w(T2) + (|T2|+1) p(T1) + (|T1|+1) p(T2) + |T| + 2|T1||T2| - 1
/// 𝐩(T) = 𝐩(T1) + 𝐩(T2) + |T| x
/// 𝐰(T) = 𝐰(T1) + 𝐰(T2) + (|T2|+1) 𝐩(T1) + (|T1|+1) 𝐩(T2) + (|T| + |T1||T2|) x
/// ```
pub fn functionals_recursive(tree: &LabelledTree) -> TreeFunctionals {
    let n = tree.len();
    let mut p = vec![0u128; n];
    let mut w = vec![0u128; n];
    let mut wp = vec![0f64; n];
    let mut ww = vec![0f64; n];
    // children have larger indices than parents
    for v in (0..n).rev() {
        let x = tree.key_value(v);
        let size = u128::from(tree.subtree_size(v));
        let part = |c: Option<usize>| match c {
            Some(c) => (u128::from(tree.subtree_size(c)), p[c], w[c], wp[c], ww[c]),
            None => (0, 0, 0, 0.0, 0.0),
        };
        let (s1, p1, w1, wp1, ww1) = part(tree.left(v));
        let (s2, p2, w2, wp2, ww2) = part(tree.right(v));
        p[v] = p1 + p2 + size - 1;
        w[v] = w1 + w2 + (s2 + 1) * p1 + (s1 + 1) * p2 + size + 2 * s1 * s2 - 1;
        wp[v] = wp1 + wp2 + size as f64 * x;
        ww[v] = ww1
            + ww2
            + (s2 + 1) as f64 * wp1
            + (s1 + 1) as f64 * wp2
            + (size + s1 * s2) as f64 * x;
    }
    TreeFunctionals {
        n,
        p: p[0],
        w: w[0],
        wp: wp[0],
        ww: ww[0],
    }
}

/// All-pairs oracle: one breadth-first search from every node over the
/// undirected tree.
pub fn functionals_naive(tree: &LabelledTree) -> Result<TreeFunctionals> {
    let n = tree.len();
    if n > NAIVE_LIMIT {
        return Err(out_of_range("n", n, "1..=5000 for the all-pairs oracle"));
    }
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            [tree.left(v), tree.right(v), tree.parent(v)]
                .into_iter()
                .flatten()
                .collect()
        })
        .collect();
    let mut dist = vec![u32::MAX; n];
    let mut weight = vec![0f64; n];
    let mut queue = VecDeque::with_capacity(n);
    let (mut w_pairs, mut ww_pairs) = (0u128, 0f64);
    let (mut p, mut wp) = (0u128, 0f64);
    for source in 0..n {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[source] = 0;
        weight[source] = tree.key_value(source);
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &u in &neighbours[v] {
                if dist[u] == u32::MAX {
                    dist[u] = dist[v] + 1;
                    weight[u] = weight[v] + tree.key_value(u);
                    queue.push_back(u);
                }
            }
        }
        // ordered pairs (source, target) with target > source, plus the diagonal
        for target in source..n {
            w_pairs += u128::from(dist[target]);
            ww_pairs += weight[target];
        }
        if source == tree.root() {
            p = dist.iter().map(|&d| u128::from(d)).sum();
            wp = weight.iter().sum();
        }
    }
    Ok(TreeFunctionals {
        n,
        p,
        w: w_pairs,
        wp,
        ww: ww_pairs,
    })
}

/// Residuals of the affine relabelling identities
/// `𝐩(αT+β) = α𝐩(T) + (p(T)+|T|)β` and
/// `𝐰(αT+β) = α𝐰(T) + (w(T)+|T|(|T|+1)/2)β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineReport {
    pub wp_relabelled: f64,
    pub wp_predicted: f64,
    pub ww_relabelled: f64,
    pub ww_predicted: f64,
    pub holds: bool,
}

pub fn affine_relabel_check(tree: &LabelledTree, alpha: f64, beta: f64) -> Result<AffineReport> {
    if !(alpha > 0.0) || !(beta >= 0.0) {
        return Err(crate::error::Error::InvalidInput(format!(
            "need alpha > 0 and beta >= 0, got ({alpha}, {beta})"
        )));
    }
    let base = functionals_recursive(tree);
    let moved = functionals_recursive(&tree.relabelled(alpha, beta));
    let n = tree.len() as f64;
    let wp_predicted = alpha * base.wp + (base.p as f64 + n) * beta;
    let ww_predicted = alpha * base.ww + (base.w as f64 + n * (n + 1.0) / 2.0) * beta;
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    Ok(AffineReport {
        wp_relabelled: moved.wp,
        wp_predicted,
        ww_relabelled: moved.ww,
        ww_predicted,
        holds: rel(moved.wp, wp_predicted) && rel(moved.ww, ww_predicted),
    })
}

/// A tree on keys `U_i` and its mirror on `1 - U_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionReport {
    pub n: usize,
    pub original: TreeFunctionals,
    pub reflected: TreeFunctionals,
    /// `𝓟 + 𝓟* - (P + n)`
    pub path_residual: f64,
    /// `𝓦 + 𝓦* - (W + n(n+1)/2)`
    pub wiener_residual: f64,
    pub holds: bool,
}

pub fn reflection_report(tree: &LabelledTree) -> Result<ReflectionReport> {
    let mirrored: Vec<f64> = tree.keys().iter().map(|u| 1.0 - u).collect();
    let reflected_tree = LabelledTree::from_real_keys(&mirrored)?;
    let original = functionals_recursive(tree);
    let reflected = functionals_recursive(&reflected_tree);
    let n = tree.len() as f64;
    let path_residual = original.wp + reflected.wp - (original.p as f64 + n);
    // every pair, the diagonal included, contributes its node count
    let wiener_residual = original.ww + reflected.ww - (original.w as f64 + n * (n + 1.0) / 2.0);
    let scale_p = original.p as f64 + n;
    let scale_w = original.w as f64 + n * (n + 1.0) / 2.0;
    Ok(ReflectionReport {
        n: tree.len(),
        original,
        reflected,
        path_residual,
        wiener_residual,
        holds: path_residual.abs() <= 1e-9 * scale_p && wiener_residual.abs() <= 1e-9 * scale_w,
    })
}

pub fn reflection_check(n: usize, seed: u64) -> Result<ReflectionReport> {
    let tree = build_iid_with(n, &mut stream_rng(seed, streams::KEYS, 0))?;
    reflection_report(&tree)
}

/// `E[P_n] = 2(n+1)H_n - 4n`.
pub fn expected_path_length(n: usize) -> f64 {
    let h: f64 = (1..=n).map(|j| 1.0 / j as f64).sum();
    2.0 * (n as f64 + 1.0) * h - 4.0 * n as f64
}

/// Leading terms `n ln n + (γ - 3/2) n` of the mean weighted path length.
pub fn weighted_path_length_expansion(n: usize) -> f64 {
    let n = n as f64;
    n * n.ln() + (EULER_GAMMA - 1.5) * n
}

/// Leading terms `2n ln n + (2γ - 4) n` of the mean path length.
pub fn path_length_expansion(n: usize) -> f64 {
    let n = n as f64;
    2.0 * n * n.ln() + (2.0 * EULER_GAMMA - 4.0) * n
}

/// Leading terms `2n² ln n + (2γ - 6) n²` of the mean Wiener index.
pub fn wiener_expansion(n: usize) -> f64 {
    let n = n as f64;
    2.0 * n * n * n.ln() + (2.0 * EULER_GAMMA - 6.0) * n * n
}

/// Leading terms `n² ln n + (γ - 11/4) n²` of the mean weighted Wiener index.
pub fn weighted_wiener_expansion(n: usize) -> f64 {
    let n = n as f64;
    n * n * n.ln() + (EULER_GAMMA - 2.75) * n * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::build_permutation_with;
    use proptest::prelude::*;

    fn fig1() -> LabelledTree {
        LabelledTree::from_permutation(&[4, 2, 6, 5, 7, 3, 1]).unwrap()
    }

    #[test]
    fn single_node() {
        let t = LabelledTree::from_real_keys(&[0.37]).unwrap();
        let f = functionals_recursive(&t);
        assert_eq!((f.p, f.w, f.wp, f.ww), (0, 0, 0.37, 0.37));
        assert_eq!(functionals_naive(&t).unwrap(), f);
    }

    #[test]
    fn figure_one_path_lengths() {
        let f = functionals_recursive(&fig1());
        assert_eq!(f.p, 10);
        assert_eq!(f.wp, 68.0);
        assert_eq!(functionals_naive(&fig1()).unwrap(), f);
    }

    #[test]
    fn chain_of_three() {
        let t = LabelledTree::from_permutation(&[1, 2, 3]).unwrap();
        let f = functionals_recursive(&t);
        assert_eq!((f.p, f.w), (3, 4));
        // pairs: (1,2)=3, (2,3)=5, (1,3)=6, diagonal 1+2+3
        assert_eq!(f.ww, 3.0 + 5.0 + 6.0 + 6.0);
        assert_eq!(functionals_naive(&t).unwrap(), f);
    }

    #[test]
    fn two_nodes_by_enumeration() {
        let (a, b) = (0.2, 0.9);
        let t = LabelledTree::from_real_keys(&[a, b]).unwrap();
        let f = functionals_naive(&t).unwrap();
        assert_eq!(f.w, 1);
        assert!((f.ww - ((a + b) + a + b)).abs() < 1e-15);
    }

    #[test]
    fn naive_guard() {
        let t = crate::tree::build_iid(NAIVE_LIMIT + 1, 1).unwrap();
        assert!(functionals_naive(&t).is_err());
    }

    #[test]
    fn affine_identities() {
        let r = affine_relabel_check(&fig1(), 1.0, 0.0).unwrap();
        assert!(r.holds);
        assert_eq!(r.wp_relabelled, 68.0);
        let r = affine_relabel_check(&fig1(), 2.0, 1.0).unwrap();
        assert!(r.holds);
        assert_eq!(r.wp_predicted, 153.0);
        assert_eq!(r.wp_relabelled, 153.0);
        let t = crate::tree::build_iid(100, 8).unwrap();
        assert!(affine_relabel_check(&t, 0.5, 0.25).unwrap().holds);
        assert!(affine_relabel_check(&t, 0.0, 0.25).is_err());
    }

    #[test]
    fn reflection_identities() {
        let r = reflection_check(1, 3).unwrap();
        assert!((r.original.wp + r.reflected.wp - 1.0).abs() < 1e-15);
        assert!(r.holds);
        assert!(reflection_check(2, 3).unwrap().holds);
        assert!(reflection_check(10_000, 3).unwrap().holds);
    }

    #[test]
    fn exact_mean_path_length_small() {
        // n = 3: five shapes, P in {3 (chains) x4, 2 (balanced) x2} over 6 perms
        assert!((expected_path_length(3) - (4.0 * 3.0 + 2.0 * 2.0) / 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn recursion_matches_oracle_iid(seed in any::<u64>(), n in 1usize..200) {
            let t = crate::tree::build_iid(n, seed).unwrap();
            let a = functionals_recursive(&t);
            let b = functionals_naive(&t).unwrap();
            prop_assert!(a.agrees_with(&b, 1e-9), "{a:?} vs {b:?}");
        }

        #[test]
        fn recursion_matches_oracle_perm(seed in any::<u64>(), n in 1usize..200) {
            let mut rng = stream_rng(seed, streams::PERMUTATION, 0);
            let t = build_permutation_with(n, &mut rng).unwrap();
            let a = functionals_recursive(&t);
            let b = functionals_naive(&t).unwrap();
            prop_assert!(a.agrees_with(&b, 1e-9));
            // rank keys keep the weighted functionals integral
            prop_assert_eq!(a.wp.fract(), 0.0);
            prop_assert!(a.w >= a.p);
        }

        #[test]
        fn reflection_holds(seed in any::<u64>(), n in 1usize..500) {
            prop_assert!(reflection_check(n, seed).unwrap().holds);
        }
    }
}
