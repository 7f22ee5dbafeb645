//! Index groups, mixed norms, and iterative reweighting.
//!
//! A [`GroupStructure`] collects (possibly overlapping) index groups gᵢ over
//! a vector of length n; every index belongs to at least one group. The
//! mixed norm driving group sparsity is ‖z‖₂,₁ = Σᵢ ‖z_gᵢ‖₂, and
//! [`compute_weights`] builds the diagonal W(z) with
//!
//! ```text
//!   W(z)_jj = sqrt( Σ_{i : j ∈ gᵢ} 1 / sqrt(‖z_gᵢ‖₂² + τ²) )
//! ```
//!
//! so that (for τ → 0) the exact identity ‖W(z) z‖₂² = ‖z‖₂,₁ holds, also
//! for overlapping groups. The smoothing constant τ keeps weights finite on
//! vanishing groups; the conventional default is [`DEFAULT_TAU`].

use std::fmt::Write as _;

use crate::scalar::Scalar;
use crate::transforms::{Orientation, WaveletLayout};
use crate::{Error, Result};

/// Smoothing constant used by the reference experiments.
pub const DEFAULT_TAU: f64 = 1e-10;

/// A collection of index groups covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupStructure {
    n: usize,
    groups: Vec<Vec<usize>>,
    /// membership[j] lists the groups containing index j.
    membership: Vec<Vec<usize>>,
    overlapping: bool,
}

impl GroupStructure {
    /// Validates that groups are nonempty, in range, and jointly cover all
    /// indices.
    pub fn new(n: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut membership: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (gi, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::InvalidArgument(format!("group {gi} is empty")));
            }
            for &j in group {
                if j >= n {
                    return Err(Error::InvalidArgument(format!(
                        "group {gi} references index {j} out of {n}"
                    )));
                }
                membership[j].push(gi);
            }
        }
        if let Some(j) = membership.iter().position(|m| m.is_empty()) {
            return Err(Error::InvalidArgument(format!("index {j} belongs to no group")));
        }
        let overlapping = membership.iter().any(|m| m.len() > 1);
        Ok(GroupStructure { n, groups, membership, overlapping })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn membership(&self, j: usize) -> &[usize] {
        &self.membership[j]
    }

    pub fn overlapping(&self) -> bool {
        self.overlapping
    }

    /// Line-based text form, one group per line: `"<group_id>: i1 i2 ..."`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (gi, group) in self.groups.iter().enumerate() {
            let _ = write!(s, "{gi}:");
            for &j in group {
                let _ = write!(s, " {j}");
            }
            s.push('\n');
        }
        s
    }

    /// Parses the [`GroupStructure::to_text`] format. The vector length is
    /// the largest index plus one; group ids must be 0..num_groups in order.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut groups = Vec::new();
        let mut max_idx = None::<usize>;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id_part, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("line {}: missing ':'", lineno + 1)))?;
            let id: usize = id_part
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad group id", lineno + 1)))?;
            if id != groups.len() {
                return Err(Error::Parse(format!(
                    "line {}: group ids must be consecutive from 0",
                    lineno + 1
                )));
            }
            let mut group = Vec::new();
            for tok in rest.split_whitespace() {
                let j: usize = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad index {tok:?}", lineno + 1)))?;
                max_idx = Some(max_idx.map_or(j, |m: usize| m.max(j)));
                group.push(j);
            }
            groups.push(group);
        }
        let n = max_idx.map_or(0, |m| m + 1);
        if groups.is_empty() {
            return Err(Error::Parse("no groups in input".into()));
        }
        GroupStructure::new(n, groups)
    }
}

/// One group per index: the structure under which ‖·‖₂,₁ is the ℓ1 norm.
pub fn singleton_groups(n: usize) -> GroupStructure {
    GroupStructure::new(n, (0..n).map(|j| vec![j]).collect())
        .expect("singleton construction cannot fail")
}

/// Groups a space–time volume by spatial cell: group `p` collects
/// `p + t * n_space` over all time steps `t`, so each group is one cell's
/// full time series (stride `n_space` in the space-fastest vectorization).
pub fn temporal_groups(n_space: usize, n_time: usize) -> Result<GroupStructure> {
    if n_space == 0 || n_time == 0 {
        return Err(Error::InvalidArgument("temporal grouping needs positive dimensions".into()));
    }
    let groups = (0..n_space)
        .map(|p| (0..n_time).map(|t| p + t * n_space).collect())
        .collect();
    GroupStructure::new(n_space * n_time, groups)
}

/// Parent–child grouping strategy over a wavelet tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeStrategy {
    /// One group per (parent, child) pair: 4 two-element groups per parent.
    /// Overlapping (each parent sits in all 4 of its pair groups).
    G1,
    /// One group per parent: {parent, its 4 children}.
    G2,
}

impl TreeStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            TreeStrategy::G1 => "G1",
            TreeStrategy::G2 => "G2",
        }
    }
}

impl std::str::FromStr for TreeStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "G1" | "g1" => Ok(TreeStrategy::G1),
            "G2" | "g2" => Ok(TreeStrategy::G2),
            other => Err(Error::InvalidArgument(format!("unknown tree strategy {other:?}"))),
        }
    }
}

/// Builds parent–child tree groups over the detail coefficients of `layout`.
/// Every detail coefficient at a level above the finest is a parent of the 4
/// same-orientation coefficients one level finer. Coefficients not covered
/// by any tree group (the coarsest approximation block) become singletons.
/// Requires at least two levels.
pub fn wavelet_tree_groups(layout: &WaveletLayout, strategy: TreeStrategy) -> Result<GroupStructure> {
    if layout.levels() < 2 {
        return Err(Error::InvalidArgument(
            "tree groups need at least two decomposition levels".into(),
        ));
    }
    let n = layout.len();
    let mut covered = vec![false; n];
    let mut groups = Vec::new();
    for level in 2..=layout.levels() {
        let (bh, bw) = layout.block_dims(level);
        for ori in Orientation::DETAILS {
            for r in 0..bh {
                for c in 0..bw {
                    let parent = layout.index(level, ori, r, c);
                    let children = layout.children(level, ori, r, c);
                    covered[parent] = true;
                    for &ch in &children {
                        covered[ch] = true;
                    }
                    match strategy {
                        TreeStrategy::G1 => {
                            for &ch in &children {
                                groups.push(vec![parent, ch]);
                            }
                        }
                        TreeStrategy::G2 => {
                            let mut g = vec![parent];
                            g.extend_from_slice(&children);
                            groups.push(g);
                        }
                    }
                }
            }
        }
    }
    for (j, &cov) in covered.iter().enumerate() {
        if !cov {
            groups.push(vec![j]);
        }
    }
    GroupStructure::new(n, groups)
}

/// Σᵢ ‖z_gᵢ‖₂.
pub fn group_norm<T: Scalar>(gs: &GroupStructure, z: &[T]) -> T {
    assert_eq!(z.len(), gs.len(), "vector length does not match group structure");
    let mut acc = T::zero();
    for group in &gs.groups {
        let mut sq = T::zero();
        for &j in group {
            sq = sq + z[j] * z[j];
        }
        acc = acc + sq.sqrt();
    }
    acc
}

/// Positive diagonal weights with the smoothing constant they were built
/// from. Applied as `W v` (elementwise multiply) or inverted as `W⁻¹ v`.
#[derive(Debug, Clone)]
pub struct WeightVector<T> {
    diag: Vec<T>,
    tau: T,
}

impl<T: Scalar> WeightVector<T> {
    pub fn new(diag: Vec<T>, tau: T) -> Result<Self> {
        if diag.iter().any(|d| !(*d > T::zero()) || !d.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive and finite".into()));
        }
        Ok(WeightVector { diag, tau })
    }

    /// Identity weights.
    pub fn ones(n: usize) -> Self {
        WeightVector { diag: vec![T::one(); n], tau: T::zero() }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// `W v`.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.diag.len());
        v.iter().zip(&self.diag).map(|(x, d)| *x * *d).collect()
    }

    /// `W⁻¹ v`.
    pub fn solve(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.diag.len());
        v.iter().zip(&self.diag).map(|(x, d)| *x / *d).collect()
    }
}

/// Smoothed reweighting diagonal
/// `W̃(z)_jj = sqrt( Σ_{i : j ∈ gᵢ} 1 / sqrt(‖z_gᵢ‖₂² + τ²) )`.
///
/// For τ tiny relative to every group norm, ‖W̃(z) z‖₂² ≈ ‖z‖₂,₁.
pub fn compute_weights<T: Scalar>(gs: &GroupStructure, z: &[T], tau: T) -> Result<WeightVector<T>> {
    assert_eq!(z.len(), gs.len(), "vector length does not match group structure");
    if !(tau > T::zero()) {
        return Err(Error::InvalidArgument("smoothing constant tau must be positive".into()));
    }
    let tau2 = tau * tau;
    let mut inv_smoothed: Vec<T> = Vec::with_capacity(gs.num_groups());
    for group in &gs.groups {
        let mut sq = T::zero();
        for &j in group {
            sq = sq + z[j] * z[j];
        }
        inv_smoothed.push(T::one() / (sq + tau2).sqrt());
    }
    let mut diag = Vec::with_capacity(gs.len());
    for j in 0..gs.len() {
        let mut acc = T::zero();
        for &gi in &gs.membership[j] {
            acc = acc + inv_smoothed[gi];
        }
        diag.push(acc.sqrt());
    }
    WeightVector::new(diag, tau)
}

/// Combines an elementwise-sparsity weight `w1` with a group weight `w2`
/// into the single diagonal `sqrt(w1² + ratio² w2²)`; the combined penalty
/// `λ‖D z‖²` then majorizes `λ‖z‖₁ + ratio²λ ‖z‖₂,₁`-type objectives.
pub fn combined_weights<T: Scalar>(
    w1: &WeightVector<T>,
    w2: &WeightVector<T>,
    ratio: T,
) -> Result<WeightVector<T>> {
    if w1.len() != w2.len() {
        return Err(Error::InvalidArgument("combined weights need equal lengths".into()));
    }
    if !(ratio > T::zero()) {
        return Err(Error::InvalidArgument("weight ratio must be positive".into()));
    }
    let diag = w1
        .diag
        .iter()
        .zip(&w2.diag)
        .map(|(a, b)| (*a * *a + ratio * ratio * *b * *b).sqrt())
        .collect();
    WeightVector::new(diag, w1.tau.max(w2.tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn structure_validation() {
        assert!(GroupStructure::new(3, vec![vec![0, 1], vec![2]]).is_ok());
        // Uncovered index.
        assert!(GroupStructure::new(3, vec![vec![0, 1]]).is_err());
        // Out of range.
        assert!(GroupStructure::new(3, vec![vec![0, 3], vec![1, 2]]).is_err());
        // Empty group.
        assert!(GroupStructure::new(3, vec![vec![0, 1, 2], vec![]]).is_err());
    }

    #[test]
    fn overlap_detection() {
        let no = GroupStructure::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert!(!no.overlapping());
        let yes = GroupStructure::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        assert!(yes.overlapping());
    }

    #[test]
    fn temporal_groups_are_strided() {
        let gs = temporal_groups(3, 4).unwrap();
        assert_eq!(gs.num_groups(), 3);
        assert_eq!(gs.group(1), &[1, 4, 7, 10]);
        assert!(!gs.overlapping());
    }

    #[test]
    fn tree_group_counts_4x4_two_levels() {
        let layout = WaveletLayout::new(4, 4, 2).unwrap();
        let g1 = wavelet_tree_groups(&layout, TreeStrategy::G1).unwrap();
        // 3 level-2 detail parents, 4 pairs each, plus the single LL singleton.
        assert_eq!(g1.num_groups(), 13);
        assert!(g1.overlapping());
        let g2 = wavelet_tree_groups(&layout, TreeStrategy::G2).unwrap();
        // 3 five-element groups plus the LL singleton.
        assert_eq!(g2.num_groups(), 4);
        assert!(!g2.overlapping());
        for gs in [&g1, &g2] {
            let mut covered = vec![false; 16];
            for g in gs.groups() {
                for &j in g {
                    covered[j] = true;
                }
            }
            assert!(covered.iter().all(|&c| c));
        }
    }

    #[test]
    fn tree_groups_need_two_levels() {
        let layout = WaveletLayout::new(4, 4, 1).unwrap();
        assert!(wavelet_tree_groups(&layout, TreeStrategy::G1).is_err());
    }

    #[test]
    fn tree_parents_sit_in_four_pair_groups() {
        let layout = WaveletLayout::new(8, 8, 2).unwrap();
        let g1 = wavelet_tree_groups(&layout, TreeStrategy::G1).unwrap();
        let parent = layout.index(2, Orientation::Hl, 0, 0);
        assert_eq!(g1.membership(parent).len(), 4);
    }

    #[test]
    fn group_norm_hypotenuse() {
        let gs = GroupStructure::new(2, vec![vec![0, 1]]).unwrap();
        assert_eq!(group_norm(&gs, &[3.0f64, 4.0]), 5.0);
        let singles = singleton_groups(2);
        assert_eq!(group_norm(&singles, &[3.0f64, -4.0]), 7.0);
    }

    #[test]
    fn weight_reference_overlapping() {
        // z = [3, 4, 0] with groups {0,1} and {1,2}: group norms 5 and 4.
        let gs = GroupStructure::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let z = [3.0f64, 4.0, 0.0];
        let w = compute_weights(&gs, &z, 1e-14).unwrap();
        assert!((w.diag()[0] - (1.0f64 / 5.0).sqrt()).abs() < 1e-10);
        assert!((w.diag()[1] - (1.0f64 / 5.0 + 1.0 / 4.0).sqrt()).abs() < 1e-10);
        assert!((w.diag()[2] - 0.5).abs() < 1e-10);
        let wz = w.apply(&z);
        let wz2 = crate::scalar::dot(&wz, &wz);
        // ‖W z‖² = ‖z‖₂,₁ = 5 + 4.
        assert!((wz2 - 9.0).abs() < 1e-9);
    }

    #[test]
    fn weight_reference_singletons() {
        let gs = singleton_groups(3);
        let z = [4.0f64, 0.0, 0.0];
        let w = compute_weights(&gs, &z, 1e-12).unwrap();
        assert!((w.diag()[0] - 0.5).abs() < 1e-10);
        // Vanishing entries get large but finite weights ~ 1/sqrt(tau).
        assert!(w.diag()[1] > 1e5);
        assert!(w.diag()[1].is_finite());
    }

    #[test]
    fn combined_weight_formula() {
        let w1 = WeightVector::new(vec![1.0f64, 2.0], 1e-10).unwrap();
        let w2 = WeightVector::new(vec![3.0f64, 1.0], 1e-10).unwrap();
        let c = combined_weights(&w1, &w2, 2.0).unwrap();
        assert!((c.diag()[0] - (1.0f64 + 4.0 * 9.0).sqrt()).abs() < 1e-14);
        assert!((c.diag()[1] - (4.0f64 + 4.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn text_roundtrip() {
        let gs = GroupStructure::new(5, vec![vec![0, 2], vec![1, 2], vec![3], vec![4]]).unwrap();
        let text = gs.to_text();
        let back = GroupStructure::from_text(&text).unwrap();
        assert_eq!(gs, back);
        assert!(GroupStructure::from_text("not a group line\n").is_err());
    }

    fn random_structure(rng: &mut impl Rng, n: usize) -> GroupStructure {
        // Random partition into contiguous runs, then a few extra
        // overlapping groups on top.
        let mut groups = Vec::new();
        let mut start = 0;
        while start < n {
            let len = 1 + rng.gen_range(0..4).min(n - start - 1).max(0);
            groups.push((start..start + len).collect::<Vec<_>>());
            start += len;
        }
        for _ in 0..rng.gen_range(0..3) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                groups.push(vec![a.min(b), a.max(b)]);
            }
        }
        GroupStructure::new(n, groups).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reweighting_identity(seed in 0u64..10_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..40);
            let gs = random_structure(&mut rng, n);
            // Bounded-away-from-zero entries keep every group norm healthy.
            let z: Vec<f64> = (0..n)
                .map(|_| {
                    let mag = 0.5 + rng.gen::<f64>();
                    if rng.gen::<bool>() { mag } else { -mag }
                })
                .collect();
            let gnorm = group_norm(&gs, &z);
            let min_group: f64 = gs
                .groups()
                .iter()
                .map(|g| g.iter().map(|&j| z[j] * z[j]).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            let w = compute_weights(&gs, &z, 1e-14 * min_group).unwrap();
            let wz = w.apply(&z);
            let wz2 = crate::scalar::dot(&wz, &wz);
            prop_assert!((wz2 - gnorm).abs() <= 1e-10 * gnorm);
        }

        #[test]
        fn majorization_of_smoothed_group_norm(seed in 0u64..10_000) {
            // The quadratic tangent majorant at z̄:
            //   Φ̃(z) <= 0.5 ‖W̃(z̄) z‖² + Φ̃(z̄) − 0.5 ‖W̃(z̄) z̄‖²
            // where Φ̃(z) = Σᵢ sqrt(‖z_gᵢ‖² + τ²), with equality at z = z̄.
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..30);
            let gs = random_structure(&mut rng, n);
            let tau = 1e-3;
            let smoothed = |z: &[f64]| -> f64 {
                gs.groups()
                    .iter()
                    .map(|g| {
                        (g.iter().map(|&j| z[j] * z[j]).sum::<f64>() + tau * tau).sqrt()
                    })
                    .sum()
            };
            let zbar: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let w = compute_weights(&gs, &zbar, tau).unwrap();
            let quad = |v: &[f64]| -> f64 {
                let wv = w.apply(v);
                crate::scalar::dot(&wv, &wv)
            };
            let majorant = 0.5 * quad(&z) + smoothed(&zbar) - 0.5 * quad(&zbar);
            prop_assert!(smoothed(&z) <= majorant + 1e-9 * majorant.abs().max(1.0));
            // Tangency at z̄.
            let at_zbar = 0.5 * quad(&zbar) + smoothed(&zbar) - 0.5 * quad(&zbar);
            prop_assert!((at_zbar - smoothed(&zbar)).abs() < 1e-12 * smoothed(&zbar));
        }
    }
}
