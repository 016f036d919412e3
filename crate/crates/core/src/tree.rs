//! Random binary search trees under the permutation and i.i.d. models.
//!
//! Nodes live in a flat arena indexed by insertion order: node `i` is the
//! `(i + 1)`-th inserted key, so children always have larger indices than
//! their parents and a reverse index scan is a valid post-order.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::rng::{open01, stream_rng, streams, LabRng};

pub const NIL: u32 = u32::MAX;

/// A node key: an integer rank (permutation model) or a real in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Key {
    Rank(u32),
    Real(f64),
}

impl Key {
    pub fn value(self) -> f64 {
        match self {
            Key::Rank(r) => f64::from(r),
            Key::Real(x) => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyKind {
    Rank,
    Real,
}

/// Depth and weighted depth of one node (or external node) of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathObservation {
    pub depth: u32,
    pub weighted_depth: f64,
    pub node_key: Key,
    pub n: usize,
}

/// An infinite 0/1 path from the root, `v1 v2 ...`, where `0` means left.
///
/// At most 64 leading bits are stored; deeper positions repeat the tail bit,
/// which is `0` except for the all-ones path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicPath {
    bits: u64,
    ones_tail: bool,
}

impl DyadicPath {
    pub const MAX_BITS: usize = 64;

    pub fn zeros() -> Self {
        DyadicPath { bits: 0, ones_tail: false }
    }

    pub fn ones() -> Self {
        DyadicPath { bits: u64::MAX, ones_tail: true }
    }

    /// Path with the given leading bits followed by zeros.
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.len() > Self::MAX_BITS {
            return Err(out_of_range("path length", bits.len(), "0..=64"));
        }
        let mut word = 0u64;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                word |= 1u64 << (63 - i);
            }
        }
        Ok(DyadicPath { bits: word, ones_tail: false })
    }

    /// The path of the binary expansion of `x` with infinitely many zeros;
    /// `x = 1` maps to the all-ones path.
    pub fn from_value(x: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) {
            return Err(out_of_range("dyadic value", x, "[0, 1]"));
        }
        if x == 1.0 {
            return Ok(Self::ones());
        }
        // exact for every f64 in [0, 1): the product only shifts the exponent
        let bits = (x * 18_446_744_073_709_551_616.0) as u64;
        Ok(DyadicPath { bits, ones_tail: false })
    }

    pub fn value(&self) -> f64 {
        if self.ones_tail {
            return 1.0;
        }
        self.bits as f64 / 18_446_744_073_709_551_616.0
    }

    /// Bit `v_i`, 1-based.
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i >= 1);
        if i > Self::MAX_BITS {
            self.ones_tail
        } else {
            (self.bits >> (64 - i)) & 1 == 1
        }
    }

    /// The mirrored path with every bit flipped, i.e. the value `1 − x` for
    /// non-dyadic `x`.
    pub fn complement(&self) -> Self {
        DyadicPath {
            bits: !self.bits,
            ones_tail: !self.ones_tail,
        }
    }

    /// The path `v2 v3 ...`, i.e. the value `2x mod 1` (with `1 ↦ 1`).
    pub fn shifted(&self) -> Self {
        DyadicPath {
            bits: (self.bits << 1) | u64::from(self.ones_tail),
            ones_tail: self.ones_tail,
        }
    }
}

/// A binary search tree built by successive insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledTree {
    kind: KeyKind,
    keys: Vec<f64>,
    children: Vec<[u32; 2]>,
    parent: Vec<u32>,
    depth: Vec<u32>,
    weighted_depth: Vec<f64>,
    size: Vec<u32>,
    /// rank -> node for rank trees (index 0 unused); empty for real keys
    rank_node: Vec<u32>,
}

impl LabelledTree {
    /// The tree obtained by inserting a permutation of `1..=n` left to right.
    pub fn from_permutation(perm: &[u32]) -> Result<Self> {
        let n = perm.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty permutation".into()));
        }
        if n >= NIL as usize {
            return Err(out_of_range("n", n, "1..2^32-1"));
        }
        let mut seen = vec![false; n + 1];
        for &r in perm {
            let r = r as usize;
            if r == 0 || r > n {
                return Err(Error::InvalidInput(format!("rank {r} outside 1..={n}")));
            }
            if seen[r] {
                return Err(Error::InvalidInput(format!("duplicate rank {r}")));
            }
            seen[r] = true;
        }
        let keys = perm.iter().map(|&r| f64::from(r)).collect();
        let mut tree = Self::insert_all(keys, KeyKind::Rank)?;
        let mut rank_node = vec![NIL; n + 1];
        for (node, &r) in perm.iter().enumerate() {
            rank_node[r as usize] = node as u32;
        }
        tree.rank_node = rank_node;
        Ok(tree)
    }

    /// The tree obtained by inserting real keys left to right. Equal keys are
    /// rejected.
    pub fn from_real_keys(keys: &[f64]) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::InvalidInput("empty key sequence".into()));
        }
        if let Some(&bad) = keys.iter().find(|k| !k.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite key {bad}")));
        }
        Self::insert_all(keys.to_vec(), KeyKind::Real)
    }

    fn insert_all(keys: Vec<f64>, kind: KeyKind) -> Result<Self> {
        let n = keys.len();
        let mut children = vec![[NIL, NIL]; n];
        let mut parent = vec![NIL; n];
        let mut depth = vec![0u32; n];
        let mut weighted_depth = vec![0f64; n];
        weighted_depth[0] = keys[0];
        for i in 1..n {
            let key = keys[i];
            let mut cur = 0usize;
            loop {
                let here = keys[cur];
                if key == here {
                    return Err(Error::DuplicateKey(key));
                }
                let dir = usize::from(key > here);
                let next = children[cur][dir];
                if next == NIL {
                    children[cur][dir] = i as u32;
                    parent[i] = cur as u32;
                    depth[i] = depth[cur] + 1;
                    weighted_depth[i] = weighted_depth[cur] + key;
                    break;
                }
                cur = next as usize;
            }
        }
        let mut size = vec![1u32; n];
        for i in (1..n).rev() {
            let p = parent[i] as usize;
            size[p] += size[i];
        }
        Ok(LabelledTree {
            kind,
            keys,
            children,
            parent,
            depth,
            weighted_depth,
            size,
            rank_node: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn kind(&self) -> KeyKind {
        self.kind
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn key(&self, node: usize) -> Key {
        match self.kind {
            KeyKind::Rank => Key::Rank(self.keys[node] as u32),
            KeyKind::Real => Key::Real(self.keys[node]),
        }
    }

    #[inline]
    pub fn key_value(&self, node: usize) -> f64 {
        self.keys[node]
    }

    /// Keys in insertion order.
    pub fn keys(&self) -> &[f64] {
        &self.keys
    }

    #[inline]
    pub fn left(&self, node: usize) -> Option<usize> {
        let c = self.children[node][0];
        (c != NIL).then_some(c as usize)
    }

    #[inline]
    pub fn right(&self, node: usize) -> Option<usize> {
        let c = self.children[node][1];
        (c != NIL).then_some(c as usize)
    }

    #[inline]
    pub fn parent(&self, node: usize) -> Option<usize> {
        let p = self.parent[node];
        (p != NIL).then_some(p as usize)
    }

    #[inline]
    pub fn depth(&self, node: usize) -> u32 {
        self.depth[node]
    }

    #[inline]
    pub fn weighted_depth(&self, node: usize) -> f64 {
        self.weighted_depth[node]
    }

    #[inline]
    pub fn subtree_size(&self, node: usize) -> u32 {
        self.size[node]
    }

    /// 1-based arrival position of `node`.
    pub fn insertion_index(&self, node: usize) -> usize {
        node + 1
    }

    /// Node holding rank `rank` (rank trees only).
    pub fn node_of_rank(&self, rank: u32) -> Option<usize> {
        self.rank_node
            .get(rank as usize)
            .filter(|&&v| v != NIL)
            .map(|&v| v as usize)
    }

    /// Node holding `key`, searched along the BST order.
    pub fn find(&self, key: Key) -> Option<usize> {
        match (self.kind, key) {
            (KeyKind::Rank, Key::Rank(r)) => self.node_of_rank(r),
            (KeyKind::Real, Key::Real(x)) => {
                let mut cur = 0usize;
                loop {
                    let here = self.keys[cur];
                    if x == here {
                        return Some(cur);
                    }
                    let next = self.children[cur][usize::from(x > here)];
                    if next == NIL {
                        return None;
                    }
                    cur = next as usize;
                }
            }
            _ => None,
        }
    }

    fn require(&self, key: Key) -> Result<usize> {
        self.find(key).ok_or_else(|| Error::NotFound(format!("{key:?}")))
    }

    fn observe(&self, node: usize) -> PathObservation {
        PathObservation {
            depth: self.depth[node],
            weighted_depth: self.weighted_depth[node],
            node_key: self.key(node),
            n: self.len(),
        }
    }

    /// Depth and root-to-node key sum (both endpoints included).
    pub fn depth_and_weight(&self, key: Key) -> Result<PathObservation> {
        Ok(self.observe(self.require(key)?))
    }

    pub fn observe_node(&self, node: usize) -> PathObservation {
        self.observe(node)
    }

    /// The `n`-th inserted node.
    pub fn last_inserted(&self) -> PathObservation {
        self.observe(self.len() - 1)
    }

    /// Deepest node along the path `x` and its weighted depth.
    pub fn silhouette_depths(&self, x: &DyadicPath) -> PathObservation {
        let mut cur = 0usize;
        let mut level = 1usize;
        loop {
            let next = self.children[cur][usize::from(x.bit(level))];
            if next == NIL {
                return self.observe(cur);
            }
            cur = next as usize;
            level += 1;
        }
    }

    fn lowest_common_ancestor(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a] as usize;
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b] as usize;
        }
        while a != b {
            a = self.parent[a] as usize;
            b = self.parent[b] as usize;
        }
        a
    }

    /// Graph distance and key sum along the path between two nodes, both
    /// endpoints included.
    pub fn node_distance(&self, a: usize, b: usize) -> (u32, f64) {
        let lca = self.lowest_common_ancestor(a, b);
        let dist = self.depth[a] + self.depth[b] - 2 * self.depth[lca];
        let weight = self.weighted_depth[a] + self.weighted_depth[b]
            - 2.0 * self.weighted_depth[lca]
            + self.keys[lca];
        (dist, weight)
    }

    pub fn distance_and_weight(&self, k: Key, l: Key) -> Result<(u32, f64)> {
        if k.value() > l.value() {
            return Err(Error::InvalidInput(format!(
                "labels must satisfy k <= l, got {k:?} > {l:?}"
            )));
        }
        let a = self.require(k)?;
        let b = self.require(l)?;
        Ok(self.node_distance(a, b))
    }

    /// Nodes in increasing key order.
    pub fn in_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = Vec::new();
        let mut cur = 0u32;
        loop {
            while cur != NIL {
                stack.push(cur);
                cur = self.children[cur as usize][0];
            }
            match stack.pop() {
                None => break,
                Some(v) => {
                    out.push(v as usize);
                    cur = self.children[v as usize][1];
                }
            }
        }
        out
    }

    /// External nodes from left to right. Each observation carries the depth
    /// of the external node and the key sum of its internal ancestors; the
    /// reported key is that of its parent.
    pub fn dfs_external(&self) -> Vec<PathObservation> {
        let n = self.len();
        let mut out = Vec::with_capacity(n + 1);
        for v in self.in_order() {
            let ext = PathObservation {
                depth: self.depth[v] + 1,
                weighted_depth: self.weighted_depth[v],
                node_key: self.key(v),
                n,
            };
            // left external of v precedes v, right external follows it
            if self.children[v][0] == NIL {
                out.push(ext);
            }
            if self.children[v][1] == NIL {
                out.push(ext);
            }
        }
        out
    }

    /// Maximum node depth (edges); 0 for a single node.
    pub fn height(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Edge height of every subtree; 0 at leaves.
    pub fn subtree_heights(&self) -> Vec<u32> {
        let mut h = vec![0u32; self.len()];
        for i in (1..self.len()).rev() {
            let p = self.parent[i] as usize;
            h[p] = h[p].max(h[i] + 1);
        }
        h
    }

    /// Largest key in the subtree of `node`.
    pub fn subtree_max_key(&self, node: usize) -> f64 {
        let mut cur = node;
        while let Some(r) = self.right(cur) {
            cur = r;
        }
        self.keys[cur]
    }

    /// Maximum root-to-leaf key sum.
    pub fn weighted_height(&self) -> f64 {
        self.weighted_depth
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// In-order keys strictly increase and the size field is consistent.
    pub fn is_valid(&self) -> bool {
        let order = self.in_order();
        if order.len() != self.len() {
            return false;
        }
        if order.windows(2).any(|w| self.keys[w[0]] >= self.keys[w[1]]) {
            return false;
        }
        (0..self.len()).all(|v| {
            let child = |c: u32| if c == NIL { 0 } else { self.size[c as usize] };
            self.size[v] == 1 + child(self.children[v][0]) + child(self.children[v][1])
        })
    }

    /// Same unlabelled shape (children pattern), ignoring keys.
    pub fn same_shape(&self, other: &LabelledTree) -> bool {
        self.len() == other.len() && self.children == other.children
    }

    /// The tree with every key `y` replaced by `alpha * y + beta`. Ranks
    /// become real keys.
    pub fn relabelled(&self, alpha: f64, beta: f64) -> LabelledTree {
        let mut t = self.clone();
        t.kind = KeyKind::Real;
        t.rank_node.clear();
        for k in &mut t.keys {
            *k = alpha * *k + beta;
        }
        for i in 0..t.len() {
            let above = match t.parent(i) {
                Some(p) => t.weighted_depth[p],
                None => 0.0,
            };
            t.weighted_depth[i] = above + t.keys[i];
        }
        t
    }
}

/// Uniform random permutation of `1..=n`.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u32> {
    let mut perm: Vec<u32> = (1..=n as u32).collect();
    perm.shuffle(rng);
    perm
}

/// Permutation-model tree from the given generator.
pub fn build_permutation_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<LabelledTree> {
    if n == 0 {
        return Err(out_of_range("n", n, ">= 1"));
    }
    LabelledTree::from_permutation(&random_permutation(n, rng))
}

/// I.i.d.-model tree from the given generator. A draw that repeats an earlier
/// key is logged and the whole sample redrawn.
pub fn build_iid_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<LabelledTree> {
    if n == 0 {
        return Err(out_of_range("n", n, ">= 1"));
    }
    loop {
        let keys: Vec<f64> = (0..n).map(|_| open01(rng)).collect();
        match LabelledTree::from_real_keys(&keys) {
            Err(Error::DuplicateKey(k)) => {
                log::warn!("rejected i.i.d. sample of size {n}: duplicate key {k}");
            }
            other => return other,
        }
    }
}

/// I.i.d.-model tree of size `n` for `seed` (replicate 0).
pub fn build_iid(n: usize, seed: u64) -> Result<LabelledTree> {
    build_iid_with(n, &mut stream_rng(seed, streams::KEYS, 0))
}

/// Ranks (1-based) of a sequence of distinct reals.
pub fn ranks(values: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0u32; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        r[i] = rank as u32 + 1;
    }
    r
}

/// Both models built from the same uniforms, with the rank-`k` weighted-depth
/// discrepancy and its bound.
#[derive(Debug, Clone)]
pub struct ModelCoupling {
    pub iid: LabelledTree,
    pub perm: LabelledTree,
    /// `max_k |W_(k)(n) - W_k(n)/n|`
    pub discrepancy: f64,
    /// `max_i |U_i - rank(U_i)/n|`
    pub max_key_gap: f64,
    /// `H_n * max_key_gap` with `H_n` the edge height.
    pub literal_bound: f64,
    /// `(H_n + 1) * max_key_gap`: a path holds at most `H_n + 1` nodes.
    pub bound: f64,
}

impl ModelCoupling {
    pub fn holds(&self) -> bool {
        self.discrepancy <= self.bound * (1.0 + 1e-12)
    }
}

pub fn couple_models_with(n: usize, rng: &mut LabRng) -> Result<ModelCoupling> {
    let iid = build_iid_with(n, rng)?;
    let rank_seq = ranks(iid.keys());
    let perm = LabelledTree::from_permutation(&rank_seq)?;
    let nf = n as f64;
    let max_key_gap = iid
        .keys()
        .iter()
        .zip(&rank_seq)
        .map(|(&u, &r)| (u - f64::from(r) / nf).abs())
        .fold(0.0, f64::max);
    // identical shapes, so node i of both trees carries the same rank
    let discrepancy = (0..n)
        .map(|v| (iid.weighted_depth(v) - perm.weighted_depth(v) / nf).abs())
        .fold(0.0, f64::max);
    let h = f64::from(iid.height());
    Ok(ModelCoupling {
        discrepancy,
        max_key_gap,
        literal_bound: h * max_key_gap,
        bound: (h + 1.0) * max_key_gap,
        iid,
        perm,
    })
}

pub fn couple_models(n: usize, seed: u64) -> Result<ModelCoupling> {
    couple_models_with(n, &mut stream_rng(seed, streams::KEYS, 0))
}
