//! Direct growth of random trees with Bernoulli bond percolation superposed.
//!
//! Each edge is kept or cut when it is created, which has the same law as
//! percolating the finished tree. The cluster of the root is tracked by
//! propagating a membership flag from parent to child; a union-find over all
//! vertices is maintained only when the largest cluster is requested.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// `p = 1 − c/ln n`.
pub fn p_of(c: f64, n: u64) -> Result<f64> {
    if n < 2 {
        return param(format!("n = {n} must be at least 2 for ln n > 0"));
    }
    p_of_real(c, n as f64)
}

/// [`p_of`] for a real size, e.g. `n = e²`.
pub fn p_of_real(c: f64, n: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return param(format!("c = {c} must be positive"));
    }
    let ln_n = n.ln();
    if !(c < ln_n) {
        return param(format!("c = {c} must be below ln n = {ln_n}"));
    }
    Ok(1.0 - c / ln_n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TreeModel {
    BAry { b: u32 },
    ScaleFree { a: f64 },
    UniformRecursive,
}

impl TreeModel {
    pub fn name(&self) -> &'static str {
        match self {
            TreeModel::BAry { .. } => "bary",
            TreeModel::ScaleFree { .. } => "scalefree",
            TreeModel::UniformRecursive => "urt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercolationResult {
    /// Size parameter: internal vertices for b-ary trees; the vertex set is
    /// `{0, …, n}` for scale-free and uniform recursive trees.
    pub n: u64,
    pub root_cluster: u64,
    pub largest_cluster: Option<u64>,
    pub p_used: f64,
}

fn check_common(n: u64, p: f64) -> Result<()> {
    if n == 0 {
        return param("tree size n must be at least 1");
    }
    if !(0.0..=1.0).contains(&p) {
        return param(format!("p = {p} must lie in [0, 1]"));
    }
    if n > u64::from(u32::MAX) / 8 {
        return param(format!("n = {n} too large"));
    }
    Ok(())
}

pub fn percolate<R: Rng + ?Sized>(
    model: TreeModel,
    n: u64,
    p: f64,
    rng: &mut R,
    want_largest: bool,
) -> Result<PercolationResult> {
    match model {
        TreeModel::BAry { b } => percolate_bary(b, n, p, rng, want_largest),
        TreeModel::ScaleFree { a } => percolate_scalefree(a, n, p, rng, want_largest),
        TreeModel::UniformRecursive => percolate_urt(n, p, rng, want_largest),
    }
}

/// b-ary recursive tree grown to `n` internal vertices.
///
/// Random draws per insertion are one uniform slot index and one uniform
/// retention variate, independent of `p`; two runs with the same stream and
/// different `p` therefore share the tree and the retention variates.
pub fn percolate_bary<R: Rng + ?Sized>(
    b: u32,
    n: u64,
    p: f64,
    rng: &mut R,
    want_largest: bool,
) -> Result<PercolationResult> {
    if b < 2 {
        return param(format!("arity b = {b} must be at least 2"));
    }
    check_common(n, p)?;
    let b = b as usize;
    let n = n as usize;
    let slots_len = (b - 1) * n + 1;

    if !want_largest {
        // External slots tagged with their owner's root-cluster flag.
        let mut slots: Vec<bool> = Vec::with_capacity(slots_len);
        slots.resize(b, true);
        let mut root = 1u64;
        for _ in 1..n {
            let j = rng.gen_range(0..slots.len());
            let intact = rng.gen::<f64>() < p;
            let flag = slots[j] & intact;
            slots[j] = flag;
            for _ in 1..b {
                slots.push(flag);
            }
            root += u64::from(flag);
        }
        debug_assert_eq!(slots.len(), slots_len);
        return Ok(PercolationResult { n: n as u64, root_cluster: root, largest_cluster: None, p_used: p });
    }

    let mut owners: Vec<u32> = Vec::with_capacity(slots_len);
    owners.resize(b, 0);
    let mut in_root: Vec<bool> = Vec::with_capacity(n);
    in_root.push(true);
    let mut dsu = DisjointSets::new(n);
    let mut root = 1u64;
    for v in 1..n {
        let j = rng.gen_range(0..owners.len());
        let intact = rng.gen::<f64>() < p;
        let parent = owners[j] as usize;
        let flag = in_root[parent] & intact;
        in_root.push(flag);
        if intact {
            dsu.union(parent, v);
        }
        owners[j] = v as u32;
        for _ in 1..b {
            owners.push(v as u32);
        }
        debug_assert_eq!(owners.len(), (b - 1) * (v + 1) + 1);
        root += u64::from(flag);
    }
    debug_assert_eq!(root, dsu.size_of(0));
    // Reported from the union-find so that it can be checked against the flags.
    Ok(PercolationResult {
        n: n as u64,
        root_cluster: dsu.size_of(0),
        largest_cluster: Some(dsu.largest()),
        p_used: p,
    })
}

/// Preferential-attachment tree on `{0, …, n}`: vertex `k+1` attaches to `i`
/// with probability proportional to `deg(i) + a`. The seed edge {0, 1} is
/// percolated like every other edge.
pub fn percolate_scalefree<R: Rng + ?Sized>(
    a: f64,
    n: u64,
    p: f64,
    rng: &mut R,
    want_largest: bool,
) -> Result<PercolationResult> {
    grow_scalefree(a, n, p, rng, want_largest).map(|(res, _)| res)
}

pub(crate) fn grow_scalefree<R: Rng + ?Sized>(
    a: f64,
    n: u64,
    p: f64,
    rng: &mut R,
    want_largest: bool,
) -> Result<(PercolationResult, Fenwick)> {
    if !(a > -1.0) || !a.is_finite() {
        return param(format!("scale-free parameter a = {a} must be finite and > -1"));
    }
    check_common(n, p)?;
    let n = n as usize;
    let mut weights = Fenwick::with_len(n + 1);
    weights.add(0, 1.0 + a);
    weights.add(1, 1.0 + a);
    let mut in_root: Vec<bool> = Vec::with_capacity(n + 1);
    in_root.push(true);
    let seed_intact = rng.gen::<f64>() < p;
    in_root.push(seed_intact);
    let mut dsu = want_largest.then(|| DisjointSets::new(n + 1));
    if seed_intact {
        if let Some(d) = dsu.as_mut() {
            d.union(0, 1);
        }
    }
    let mut root = 1 + u64::from(seed_intact);
    for k in 1..n {
        // Vertices {0..k} carry total weight 2k + a(k+1).
        let total = 2.0 * k as f64 + a * (k + 1) as f64;
        let target = weights.find(rng.gen::<f64>() * total, k);
        let intact = rng.gen::<f64>() < p;
        let flag = in_root[target] & intact;
        in_root.push(flag);
        weights.add(target, 1.0);
        weights.add(k + 1, 1.0 + a);
        if intact {
            if let Some(d) = dsu.as_mut() {
                d.union(target, k + 1);
            }
        }
        root += u64::from(flag);
    }
    if let Some(d) = dsu.as_ref() {
        debug_assert_eq!(root, d.size_of(0));
    }
    let res = PercolationResult {
        n: n as u64,
        root_cluster: dsu.as_ref().map_or(root, |d| d.size_of(0)),
        largest_cluster: dsu.map(|d| d.largest()),
        p_used: p,
    };
    Ok((res, weights))
}

/// Uniform recursive tree on `{0, …, n}`.
pub fn percolate_urt<R: Rng + ?Sized>(
    n: u64,
    p: f64,
    rng: &mut R,
    want_largest: bool,
) -> Result<PercolationResult> {
    check_common(n, p)?;
    let n = n as usize;
    let mut in_root: Vec<bool> = Vec::with_capacity(n + 1);
    in_root.push(true);
    let mut dsu = want_largest.then(|| DisjointSets::new(n + 1));
    let mut root = 1u64;
    for k in 0..n {
        let parent = rng.gen_range(0..=k);
        let intact = rng.gen::<f64>() < p;
        let flag = in_root[parent] & intact;
        in_root.push(flag);
        if intact {
            if let Some(d) = dsu.as_mut() {
                d.union(parent, k + 1);
            }
        }
        root += u64::from(flag);
    }
    if let Some(d) = dsu.as_ref() {
        debug_assert_eq!(root, d.size_of(0));
    }
    Ok(PercolationResult {
        n: n as u64,
        root_cluster: dsu.as_ref().map_or(root, |d| d.size_of(0)),
        largest_cluster: dsu.map(|d| d.largest()),
        p_used: p,
    })
}

/// Explicit reconstruction of a percolated b-ary tree for auditing the
/// slot bookkeeping of [`percolate_bary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaryAudit {
    pub root_cluster: u64,
    /// External slots in the whole tree.
    pub slots: u64,
    /// External slots hanging from root-cluster vertices.
    pub root_free_slots: u64,
    /// Cut edges from a root-cluster vertex to a child.
    pub root_cut_edges: u64,
}

/// Regrows the tree of [`percolate_bary`] from the same random draws, storing
/// parents, edge states and slot owners, and recounts everything from scratch.
pub fn audit_bary<R: Rng + ?Sized>(b: u32, n: u64, p: f64, rng: &mut R) -> Result<BaryAudit> {
    if b < 2 {
        return param(format!("arity b = {b} must be at least 2"));
    }
    check_common(n, p)?;
    let n = n as usize;
    let mut owners: Vec<usize> = vec![0; b as usize];
    let mut parent = vec![usize::MAX; n];
    let mut intact = vec![true; n];
    for v in 1..n {
        let j = rng.gen_range(0..owners.len());
        intact[v] = rng.gen::<f64>() < p;
        parent[v] = owners[j];
        owners[j] = v;
        owners.extend(std::iter::repeat(v).take(b as usize - 1));
    }
    // Parents precede children, so one forward pass settles membership.
    let mut in_root = vec![false; n];
    in_root[0] = true;
    for v in 1..n {
        in_root[v] = intact[v] && in_root[parent[v]];
    }
    let root_cut_edges = (1..n).filter(|&v| in_root[parent[v]] && !intact[v]).count() as u64;
    Ok(BaryAudit {
        root_cluster: in_root.iter().filter(|&&x| x).count() as u64,
        slots: owners.len() as u64,
        root_free_slots: owners.iter().filter(|&&o| in_root[o]).count() as u64,
        root_cut_edges,
    })
}

/// Binary indexed tree of non-negative weights with prefix-sum descent.
#[derive(Debug, Clone)]
pub struct Fenwick {
    // 1-based internally.
    tree: Vec<f64>,
    top_bit: usize,
}

impl Fenwick {
    pub fn with_len(len: usize) -> Self {
        let top_bit = if len == 0 { 0 } else { 1 << (usize::BITS - 1 - len.leading_zeros()) };
        Self { tree: vec![0.0; len + 1], top_bit }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add(&mut self, idx: usize, delta: f64) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of weights `0..=idx`.
    pub fn prefix_sum(&self, idx: usize) -> f64 {
        let mut i = (idx + 1).min(self.len());
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.prefix_sum(self.len().saturating_sub(1))
    }

    /// Smallest index whose prefix sum exceeds `value`, clamped to `max_idx`
    /// against rounding at the upper end.
    pub fn find(&self, mut value: f64, max_idx: usize) -> usize {
        let mut pos = 0;
        let mut bit = self.top_bit;
        while bit > 0 {
            let next = pos + bit;
            if next < self.tree.len() && self.tree[next] <= value {
                value -= self.tree[next];
                pos = next;
            }
            bit >>= 1;
        }
        pos.min(max_idx)
    }
}

/// Union-find with union by size and path halving.
#[derive(Debug, Clone)]
pub struct DisjointSets {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSets {
    pub fn new(len: usize) -> Self {
        Self { parent: (0..len as u32).collect(), size: vec![1; len] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    pub fn union(&mut self, x: usize, y: usize) {
        let (mut rx, mut ry) = (self.find(x), self.find(y));
        if rx == ry {
            return;
        }
        if self.size[rx] < self.size[ry] {
            std::mem::swap(&mut rx, &mut ry);
        }
        self.parent[ry] = rx as u32;
        self.size[rx] += self.size[ry];
    }

    pub fn size_of(&self, x: usize) -> u64 {
        let mut r = x;
        while self.parent[r] as usize != r {
            r = self.parent[r] as usize;
        }
        u64::from(self.size[r])
    }

    pub fn largest(&self) -> u64 {
        self.parent
            .iter()
            .enumerate()
            .filter(|&(i, &p)| i == p as usize)
            .map(|(i, _)| u64::from(self.size[i]))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSplitter;
    use proptest::prelude::*;

    #[test]
    fn p_of_examples() {
        assert!((p_of_real(1.0, (2.0f64).exp()).unwrap() - 0.5).abs() < 1e-15);
        assert!(p_of_real(1.0, std::f64::consts::E).is_err());
        let p = p_of(1e-9, 100).unwrap();
        assert_eq!(p, 1.0 - 1e-9 / (100.0f64).ln());
        assert!(p_of(1.0, 1).is_err());
        assert!(p_of(-1.0, 100).is_err());
    }

    #[test]
    fn single_internal_vertex() {
        let mut rng = SeedSplitter::new(0).stream(0, 0);
        for p in [0.0, 0.3, 1.0] {
            let r = percolate_bary(3, 1, p, &mut rng, true).unwrap();
            assert_eq!(r.root_cluster, 1);
            assert_eq!(r.largest_cluster, Some(1));
        }
    }

    #[test]
    fn no_cuts_keep_everything() {
        let mut rng = SeedSplitter::new(0).stream(0, 0);
        assert_eq!(percolate_bary(2, 1000, 1.0, &mut rng, false).unwrap().root_cluster, 1000);
        assert_eq!(percolate_scalefree(0.5, 1000, 1.0, &mut rng, false).unwrap().root_cluster, 1001);
        assert_eq!(percolate_urt(1000, 1.0, &mut rng, false).unwrap().root_cluster, 1001);
    }

    #[test]
    fn urt_all_cut() {
        let mut rng = SeedSplitter::new(0).stream(0, 0);
        let r = percolate_urt(500, 0.0, &mut rng, true).unwrap();
        assert_eq!(r.root_cluster, 1);
        assert_eq!(r.largest_cluster, Some(1));
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = SeedSplitter::new(0).stream(0, 0);
        assert!(percolate_bary(1, 10, 0.5, &mut rng, false).is_err());
        assert!(percolate_bary(2, 0, 0.5, &mut rng, false).is_err());
        assert!(percolate_scalefree(-1.0, 10, 0.5, &mut rng, false).is_err());
        assert!(percolate_urt(10, 1.5, &mut rng, false).is_err());
    }

    #[test]
    fn scalefree_single_edge_is_bernoulli() {
        let split = SeedSplitter::new(8);
        let reps = 20_000;
        let p = 0.3;
        let kept = (0..reps)
            .map(|i| percolate_scalefree(1.0, 1, p, &mut split.stream(0, i), false).unwrap().root_cluster)
            .inspect(|&r| assert!(r == 1 || r == 2))
            .filter(|&r| r == 2)
            .count() as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((kept / reps as f64 - p).abs() < 5.0 * se);
    }

    #[test]
    fn scalefree_second_vertex_is_symmetric() {
        // With a = 0, vertex 2 attaches to 0 or 1 with probability 1/2; with
        // p = 1 on the new edge only the attachment point matters, which we
        // read off through the Fenwick weights.
        let split = SeedSplitter::new(9);
        let reps = 20_000u64;
        let mut to_root = 0u64;
        for i in 0..reps {
            let (_, w) = grow_scalefree(0.0, 2, 1.0, &mut split.stream(0, i), false).unwrap();
            if (w.prefix_sum(0) - 2.0).abs() < 1e-12 {
                to_root += 1;
            }
        }
        let frac = to_root as f64 / reps as f64;
        assert!((frac - 0.5).abs() < 5.0 * (0.25 / reps as f64).sqrt(), "{frac}");
    }

    #[test]
    fn urt_two_edges_both_kept_with_p_squared() {
        let split = SeedSplitter::new(10);
        let reps = 40_000u64;
        let p: f64 = 0.6;
        let mut full = 0u64;
        for i in 0..reps {
            let r = percolate_urt(2, p, &mut split.stream(0, i), false).unwrap().root_cluster;
            assert!((1..=3).contains(&r));
            full += u64::from(r == 3);
        }
        let q = p * p;
        let frac = full as f64 / reps as f64;
        assert!((frac - q).abs() < 5.0 * (q * (1.0 - q) / reps as f64).sqrt(), "{frac}");
    }

    #[test]
    fn scalefree_weight_total_matches_degree_sum() {
        let mut rng = SeedSplitter::new(1).stream(0, 0);
        for &(a, n) in &[(0.0, 1000u64), (1.0, 777), (-0.5, 2000), (std::f64::consts::PI, 1500)] {
            let (_, w) = grow_scalefree(a, n, 0.8, &mut rng, false).unwrap();
            let expected = 2.0 * n as f64 + a * (n + 1) as f64;
            assert!((w.total() - expected).abs() <= 1e-9 * expected, "a={a}");
        }
    }

    #[test]
    fn fenwick_find_matches_linear_scan() {
        let weights = [0.5, 2.0, 0.0, 1.25, 3.0, 0.75, 1.0];
        let mut f = Fenwick::with_len(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            f.add(i, w);
        }
        let total: f64 = weights.iter().sum();
        assert_eq!(f.total(), total);
        for step in 0..200 {
            let v = total * step as f64 / 200.0;
            let mut acc = 0.0;
            let expected = weights
                .iter()
                .position(|&w| {
                    acc += w;
                    acc > v
                })
                .unwrap();
            assert_eq!(f.find(v, weights.len() - 1), expected, "v={v}");
        }
    }

    #[test]
    fn disjoint_sets_sizes() {
        let mut d = DisjointSets::new(6);
        d.union(0, 1);
        d.union(2, 3);
        d.union(1, 3);
        assert_eq!(d.size_of(2), 4);
        assert_eq!(d.largest(), 4);
        assert_eq!(d.size_of(5), 1);
    }

    fn model_strategy() -> impl Strategy<Value = TreeModel> {
        prop_oneof![
            (2u32..6).prop_map(|b| TreeModel::BAry { b }),
            (-0.9f64..3.0).prop_map(|a| TreeModel::ScaleFree { a }),
            Just(TreeModel::UniformRecursive),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn flags_agree_with_union_find(model in model_strategy(), n in 1u64..2000, p in 0.0f64..=1.0, seed in any::<u64>()) {
            let split = SeedSplitter::new(seed);
            let fast = percolate(model, n, p, &mut split.stream(0, 0), false).unwrap();
            let full = percolate(model, n, p, &mut split.stream(0, 0), true).unwrap();
            // Same stream, same tree: flag propagation (fast) and union-find (full) must agree.
            prop_assert_eq!(fast.root_cluster, full.root_cluster);
            let largest = full.largest_cluster.unwrap();
            prop_assert!(largest >= full.root_cluster);
            let max = match model { TreeModel::BAry { .. } => n, _ => n + 1 };
            prop_assert!(full.root_cluster >= 1 && full.root_cluster <= max);
        }

        #[test]
        fn bary_slot_bookkeeping(b in 2u32..7, n in 1u64..2000, p in 0.0f64..=1.0, seed in any::<u64>()) {
            let split = SeedSplitter::new(seed);
            let fast = percolate_bary(b, n, p, &mut split.stream(0, 0), false).unwrap();
            let audit = audit_bary(b, n, p, &mut split.stream(0, 0)).unwrap();
            let b = u64::from(b);
            prop_assert_eq!(audit.root_cluster, fast.root_cluster);
            prop_assert_eq!(audit.slots, (b - 1) * n + 1);
            prop_assert_eq!(audit.root_free_slots + audit.root_cut_edges, (b - 1) * audit.root_cluster + 1);
        }

        #[test]
        fn root_cluster_monotone_in_p(model in model_strategy(), n in 1u64..2000, p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, seed in any::<u64>()) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let split = SeedSplitter::new(seed);
            let a = percolate(model, n, lo, &mut split.stream(0, 0), false).unwrap();
            let b = percolate(model, n, hi, &mut split.stream(0, 0), false).unwrap();
            prop_assert!(a.root_cluster <= b.root_cluster);
        }
    }
}
