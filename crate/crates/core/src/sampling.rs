//! Exact samplers for single root paths that avoid building the whole tree.
//!
//! In the permutation model a label `j < k` lies on the root path of `k` iff
//! `j` arrived before every label in `j+1..=k`; likewise for `j > k`. Giving
//! each label an i.i.d. uniform arrival time, the ancestors on either side are
//! the successive minima met while scanning away from `k`. The gap to the
//! next minimum below a running minimum `m` is geometric with parameter `m`
//! and the new minimum is uniform on `(0, m)`, so one path costs `O(log n)`
//! draws instead of the `O(n log n)` of a full build.
//!
//! Along a dyadic path in the i.i.d. model, a subtree holding `N` keys on an
//! interval `(a, b)` has its root uniform on `(a, b)` and sends a
//! `Binomial(N - 1, u)` share of the remaining keys to the left.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{out_of_range, Result};
use crate::rng::open01;
use crate::tree::{DyadicPath, Key, PathObservation};

/// Walks the successive arrival-time minima away from `k` on one side.
/// Returns (count, label sum).
fn scan_minima<R: Rng + ?Sized>(rng: &mut R, start_min: f64, room: u64, k: u64, leftwards: bool) -> (u32, f64) {
    let mut m = start_min;
    let mut offset = 0u64;
    let mut count = 0u32;
    let mut sum = 0.0f64;
    loop {
        let gap = if m >= 1.0 {
            1.0
        } else {
            // trials until the first arrival below m
            (open01(rng).ln() / (-m).ln_1p()).floor() + 1.0
        };
        if !gap.is_finite() || gap > (room - offset) as f64 {
            return (count, sum);
        }
        offset += gap as u64;
        count += 1;
        let label = if leftwards { k - offset } else { k + offset };
        sum += label as f64;
        m *= open01(rng);
    }
}

/// Depth `D_k(n)` and weighted depth `W_k(n)` of label `k` in a
/// permutation-model tree of size `n`.
pub fn sample_label_path<R: Rng + ?Sized>(n: u64, k: u64, rng: &mut R) -> Result<PathObservation> {
    if n == 0 || k == 0 || k > n {
        return Err(out_of_range("label", k, "1..=n"));
    }
    let t = open01(rng);
    Ok(label_path_given_arrival(n, k, t, rng))
}

fn label_path_given_arrival<R: Rng + ?Sized>(n: u64, k: u64, t: f64, rng: &mut R) -> PathObservation {
    let (dl, wl) = scan_minima(rng, t, k - 1, k, true);
    let (dr, wr) = scan_minima(rng, t, n - k, k, false);
    PathObservation {
        depth: dl + dr,
        weighted_depth: wl + wr + k as f64,
        node_key: Key::Rank(k as u32),
        n: n as usize,
    }
}

/// Rank `Y_n`, depth `X_n` and weighted depth of the last inserted node.
pub fn sample_last_inserted<R: Rng + ?Sized>(n: u64, rng: &mut R) -> Result<PathObservation> {
    if n == 0 {
        return Err(out_of_range("n", n, ">= 1"));
    }
    let k = rng.random_range(1..=n);
    // the last arrival is later than every other one
    Ok(label_path_given_arrival(n, k, 1.0, rng))
}

/// `B_n(x)` and `𝓑_n(x)` in an i.i.d.-model tree of size `n`.
pub fn sample_silhouette_path<R: Rng + ?Sized>(n: u64, x: &DyadicPath, rng: &mut R) -> Result<PathObservation> {
    if n == 0 {
        return Err(out_of_range("n", n, ">= 1"));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut remaining = n;
    let mut level = 0usize;
    let mut weight = 0.0;
    let mut key = 0.0;
    while remaining > 0 {
        let u = open01(rng);
        key = lo + (hi - lo) * u;
        weight += key;
        let rest = remaining - 1;
        let left = if rest == 0 {
            0
        } else {
            Binomial::new(rest, u).expect("u in (0,1)").sample(rng)
        };
        level += 1;
        if x.bit(level) {
            lo = key;
            remaining = rest - left;
        } else {
            hi = key;
            remaining = left;
        }
    }
    Ok(PathObservation {
        depth: level as u32 - 1,
        weighted_depth: weight,
        node_key: Key::Real(key),
        n: n as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, streams};
    use crate::stats::{ks_two_sample, StreamingMoments};
    use crate::tree::{build_iid_with, build_permutation_with};

    #[test]
    fn degenerate_sizes() {
        let mut rng = stream_rng(1, streams::PATH, 0);
        let o = sample_label_path(1, 1, &mut rng).unwrap();
        assert_eq!((o.depth, o.weighted_depth), (0, 1.0));
        let o = sample_last_inserted(1, &mut rng).unwrap();
        assert_eq!((o.depth, o.weighted_depth), (0, 1.0));
        let o = sample_silhouette_path(1, &DyadicPath::zeros(), &mut rng).unwrap();
        assert_eq!(o.depth, 0);
        assert_eq!(o.weighted_depth, o.node_key.value());
        assert!(sample_label_path(5, 6, &mut rng).is_err());
        assert!(sample_label_path(5, 0, &mut rng).is_err());
    }

    #[test]
    fn last_inserted_has_a_parent() {
        let mut rng = stream_rng(2, streams::PATH, 0);
        for _ in 0..1000 {
            let o = sample_last_inserted(50, &mut rng).unwrap();
            assert!(o.depth >= 1);
            assert!(o.depth < 50);
        }
    }

    // compare the record sampler against full tree builds
    #[test]
    fn label_path_matches_tree_builds() {
        let (n, k) = (60u64, 17u64);
        let reps = 20_000;
        let mut a_d = Vec::with_capacity(reps);
        let mut b_d = Vec::with_capacity(reps);
        let mut a_w = Vec::with_capacity(reps);
        let mut b_w = Vec::with_capacity(reps);
        let mut rng = stream_rng(3, streams::PATH, 0);
        let mut trng = stream_rng(3, streams::PERMUTATION, 0);
        for _ in 0..reps {
            let o = sample_label_path(n, k, &mut rng).unwrap();
            a_d.push(f64::from(o.depth));
            a_w.push(o.weighted_depth);
            let t = build_permutation_with(n as usize, &mut trng).unwrap();
            let o = t.depth_and_weight(Key::Rank(k as u32)).unwrap();
            b_d.push(f64::from(o.depth));
            b_w.push(o.weighted_depth);
        }
        assert!(!ks_two_sample(&a_w, &b_w, 1e-3).unwrap().rejected);
        let ma = StreamingMoments::from_slice(&a_d);
        let mb = StreamingMoments::from_slice(&b_d);
        let se = (ma.variance() / reps as f64 + mb.variance() / reps as f64).sqrt();
        assert!((ma.mean() - mb.mean()).abs() < 4.0 * se);
    }

    #[test]
    fn silhouette_path_matches_tree_builds() {
        let n = 200u64;
        let x = DyadicPath::from_value(0.3).unwrap();
        let reps = 5_000;
        let mut rng = stream_rng(4, streams::PATH, 0);
        let mut trng = stream_rng(4, streams::KEYS, 0);
        let mut fast = Vec::with_capacity(reps);
        let mut slow = Vec::with_capacity(reps);
        let mut fast_d = Vec::with_capacity(reps);
        let mut slow_d = Vec::with_capacity(reps);
        for _ in 0..reps {
            let o = sample_silhouette_path(n, &x, &mut rng).unwrap();
            fast.push(o.weighted_depth);
            fast_d.push(f64::from(o.depth));
            let t = build_iid_with(n as usize, &mut trng).unwrap();
            let o = t.silhouette_depths(&x);
            slow.push(o.weighted_depth);
            slow_d.push(f64::from(o.depth));
        }
        assert!(!ks_two_sample(&fast, &slow, 1e-3).unwrap().rejected);
        let ma = StreamingMoments::from_slice(&fast_d);
        let mb = StreamingMoments::from_slice(&slow_d);
        let se = (ma.variance() / reps as f64 + mb.variance() / reps as f64).sqrt();
        assert!((ma.mean() - mb.mean()).abs() < 4.0 * se);
    }
}
