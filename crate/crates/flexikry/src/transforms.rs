//! Orthogonal sparsifying transforms.
//!
//! The solvers only need three actions from a transform Ψ: the forward map
//! Ψx, the inverse Ψ⁻¹z, and the inverse transpose Ψ⁻ᵀx. For the orthonormal
//! 2-D Haar wavelet implemented here Ψ⁻ᵀ = Ψ and Ψ⁻¹ = Ψᵀ.
//!
//! Coefficients are stored in the usual nested (Mallat) layout over the
//! original row-major image array: the level-ℓ detail blocks have shape
//! `(rows/2^ℓ) x (cols/2^ℓ)`, level 1 is the finest, and the single
//! approximation (LL) block of the coarsest level sits in the top-left
//! corner. Within each level the horizontal-detail block is top-right, the
//! vertical-detail block bottom-left, and the diagonal block bottom-right.

use crate::scalar::{real, Scalar};
use crate::{Error, Result};

/// A transform pairing a solution-space vector with its coefficient vector.
pub trait Transform<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;
    /// Ψ x: coefficients of `x`.
    fn forward(&self, x: &[T]) -> Vec<T>;
    /// Ψ⁻¹ z: the vector with coefficients `z`.
    fn inverse(&self, z: &[T]) -> Vec<T>;
    /// Ψ⁻ᵀ x.
    fn inverse_transpose(&self, x: &[T]) -> Vec<T>;
}

/// The identity transform.
#[derive(Debug, Clone)]
pub struct IdentityTransform {
    dim: usize,
}

impl IdentityTransform {
    pub fn new(dim: usize) -> Self {
        IdentityTransform { dim }
    }
}

impl<T: Scalar> Transform<T> for IdentityTransform {
    fn dim(&self) -> usize {
        self.dim
    }
    fn forward(&self, x: &[T]) -> Vec<T> {
        x.to_vec()
    }
    fn inverse(&self, z: &[T]) -> Vec<T> {
        z.to_vec()
    }
    fn inverse_transpose(&self, x: &[T]) -> Vec<T> {
        x.to_vec()
    }
}

/// Detail orientation within a decomposition level. The first letter is the
/// horizontal filter, the second the vertical one (L = lowpass, H =
/// highpass); `Ll` is the approximation block of the coarsest level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Ll,
    Hl,
    Lh,
    Hh,
}

impl Orientation {
    pub const DETAILS: [Orientation; 3] = [Orientation::Hl, Orientation::Lh, Orientation::Hh];
}

/// Shape of a multilevel 2-D wavelet decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletLayout {
    rows: usize,
    cols: usize,
    levels: usize,
}

impl WaveletLayout {
    /// Both dimensions must be divisible by `2^levels` and `levels >= 1`.
    pub fn new(rows: usize, cols: usize, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidArgument("wavelet layout needs at least one level".into()));
        }
        let factor = 1usize
            .checked_shl(levels as u32)
            .ok_or_else(|| Error::InvalidArgument("level count overflows".into()))?;
        if rows == 0 || cols == 0 || rows % factor != 0 || cols % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions {rows}x{cols} are not divisible by 2^{levels}"
            )));
        }
        Ok(WaveletLayout { rows, cols, levels })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Block shape `(block_rows, block_cols)` at level `level` (1-based,
    /// level 1 finest).
    pub fn block_dims(&self, level: usize) -> (usize, usize) {
        assert!((1..=self.levels).contains(&level), "level out of range");
        (self.rows >> level, self.cols >> level)
    }

    /// Flat index of the coefficient at `(r, c)` inside the given block.
    /// `Orientation::Ll` is only valid at the coarsest level.
    pub fn index(&self, level: usize, orientation: Orientation, r: usize, c: usize) -> usize {
        let (bh, bw) = self.block_dims(level);
        assert!(r < bh && c < bw, "position outside block");
        let (ro, co) = match orientation {
            Orientation::Ll => {
                assert_eq!(level, self.levels, "LL block exists only at the coarsest level");
                (0, 0)
            }
            Orientation::Hl => (0, bw),
            Orientation::Lh => (bh, 0),
            Orientation::Hh => (bh, bw),
        };
        (ro + r) * self.cols + (co + c)
    }

    /// The four children of a detail coefficient at `level > 1`: the same
    /// orientation block one level finer, positions `(2r + dr, 2c + dc)`.
    pub fn children(
        &self,
        level: usize,
        orientation: Orientation,
        r: usize,
        c: usize,
    ) -> [usize; 4] {
        assert!(level > 1, "level-1 coefficients have no children");
        assert!(orientation != Orientation::Ll, "only detail coefficients form trees");
        [
            self.index(level - 1, orientation, 2 * r, 2 * c),
            self.index(level - 1, orientation, 2 * r, 2 * c + 1),
            self.index(level - 1, orientation, 2 * r + 1, 2 * c),
            self.index(level - 1, orientation, 2 * r + 1, 2 * c + 1),
        ]
    }
}

fn haar_pair_forward<T: Scalar>(buf: &mut [T], len: usize, stride: usize, scratch: &mut [T]) {
    let half = len / 2;
    let inv_sqrt2 = real::<T>(std::f64::consts::FRAC_1_SQRT_2);
    for i in 0..half {
        let a = buf[2 * i * stride];
        let b = buf[(2 * i + 1) * stride];
        scratch[i] = (a + b) * inv_sqrt2;
        scratch[half + i] = (a - b) * inv_sqrt2;
    }
    for i in 0..len {
        buf[i * stride] = scratch[i];
    }
}

fn haar_pair_inverse<T: Scalar>(buf: &mut [T], len: usize, stride: usize, scratch: &mut [T]) {
    let half = len / 2;
    let inv_sqrt2 = real::<T>(std::f64::consts::FRAC_1_SQRT_2);
    for i in 0..half {
        let s = buf[i * stride];
        let d = buf[(half + i) * stride];
        scratch[2 * i] = (s + d) * inv_sqrt2;
        scratch[2 * i + 1] = (s - d) * inv_sqrt2;
    }
    for i in 0..len {
        buf[i * stride] = scratch[i];
    }
}

/// Multilevel orthonormal 2-D Haar analysis of a row-major image.
pub fn haar_forward<T: Scalar>(image: &[T], layout: &WaveletLayout) -> Result<Vec<T>> {
    if image.len() != layout.len() {
        return Err(Error::InvalidArgument(format!(
            "image length {} does not match layout {}x{}",
            image.len(),
            layout.rows,
            layout.cols
        )));
    }
    let mut buf = image.to_vec();
    let mut scratch = vec![T::zero(); layout.rows.max(layout.cols)];
    for level in 0..layout.levels {
        let h = layout.rows >> level;
        let w = layout.cols >> level;
        for r in 0..h {
            haar_pair_forward(&mut buf[r * layout.cols..], w, 1, &mut scratch);
        }
        for c in 0..w {
            haar_pair_forward(&mut buf[c..], h, layout.cols, &mut scratch);
        }
    }
    Ok(buf)
}

/// Exact inverse of [`haar_forward`] (also its adjoint: the transform is
/// orthonormal).
pub fn haar_inverse<T: Scalar>(coeffs: &[T], layout: &WaveletLayout) -> Result<Vec<T>> {
    if coeffs.len() != layout.len() {
        return Err(Error::InvalidArgument(format!(
            "coefficient length {} does not match layout {}x{}",
            coeffs.len(),
            layout.rows,
            layout.cols
        )));
    }
    let mut buf = coeffs.to_vec();
    let mut scratch = vec![T::zero(); layout.rows.max(layout.cols)];
    for level in (0..layout.levels).rev() {
        let h = layout.rows >> level;
        let w = layout.cols >> level;
        for c in 0..w {
            haar_pair_inverse(&mut buf[c..], h, layout.cols, &mut scratch);
        }
        for r in 0..h {
            haar_pair_inverse(&mut buf[r * layout.cols..], w, 1, &mut scratch);
        }
    }
    Ok(buf)
}

/// Orthonormal Haar transform as a [`Transform`].
#[derive(Debug, Clone)]
pub struct HaarTransform {
    layout: WaveletLayout,
}

impl HaarTransform {
    pub fn new(layout: WaveletLayout) -> Self {
        HaarTransform { layout }
    }

    pub fn layout(&self) -> &WaveletLayout {
        &self.layout
    }
}

impl<T: Scalar> Transform<T> for HaarTransform {
    fn dim(&self) -> usize {
        self.layout.len()
    }
    fn forward(&self, x: &[T]) -> Vec<T> {
        haar_forward(x, &self.layout).expect("dimension checked at construction")
    }
    fn inverse(&self, z: &[T]) -> Vec<T> {
        haar_inverse(z, &self.layout).expect("dimension checked at construction")
    }
    fn inverse_transpose(&self, x: &[T]) -> Vec<T> {
        // Ψ orthonormal: Ψ⁻ᵀ = Ψ.
        haar_forward(x, &self.layout).expect("dimension checked at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{dot, norm2, sub};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn layout_validation() {
        assert!(WaveletLayout::new(8, 8, 3).is_ok());
        assert!(WaveletLayout::new(8, 8, 4).is_err());
        assert!(WaveletLayout::new(6, 8, 1).is_ok());
        assert!(WaveletLayout::new(6, 8, 2).is_err());
        assert!(WaveletLayout::new(8, 8, 0).is_err());
    }

    #[test]
    fn two_by_two_reference() {
        // [[a, b], [c, d]] with one level.
        let (a, b, c, d) = (1.0f64, 2.0, 3.0, 4.0);
        let layout = WaveletLayout::new(2, 2, 1).unwrap();
        let z = haar_forward(&[a, b, c, d], &layout).unwrap();
        let ll = z[layout.index(1, Orientation::Ll, 0, 0)];
        let hl = z[layout.index(1, Orientation::Hl, 0, 0)];
        let lh = z[layout.index(1, Orientation::Lh, 0, 0)];
        let hh = z[layout.index(1, Orientation::Hh, 0, 0)];
        assert!((ll - (a + b + c + d) / 2.0).abs() < 1e-15);
        assert!((hl - (a - b + c - d) / 2.0).abs() < 1e-15);
        assert!((lh - (a + b - c - d) / 2.0).abs() < 1e-15);
        assert!((hh - (a - b - c + d) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn index_map_is_bijective() {
        let layout = WaveletLayout::new(16, 8, 3).unwrap();
        let mut seen = vec![false; layout.len()];
        let (bh, bw) = layout.block_dims(layout.levels());
        for r in 0..bh {
            for c in 0..bw {
                let i = layout.index(layout.levels(), Orientation::Ll, r, c);
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        for level in 1..=layout.levels() {
            let (bh, bw) = layout.block_dims(level);
            for ori in Orientation::DETAILS {
                for r in 0..bh {
                    for c in 0..bw {
                        let i = layout.index(level, ori, r, c);
                        assert!(!seen[i], "index {i} hit twice");
                        seen[i] = true;
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s), "index map does not cover the array");
    }

    #[test]
    fn children_are_distinct_and_in_finer_block() {
        let layout = WaveletLayout::new(16, 16, 3).unwrap();
        let kids = layout.children(2, Orientation::Hh, 1, 0);
        let mut sorted = kids;
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            assert_ne!(w[0], w[1]);
        }
        // All children live in the level-1 HH block.
        let (bh, bw) = layout.block_dims(1);
        for k in kids {
            let r = k / layout.cols();
            let c = k % layout.cols();
            assert!((bh..2 * bh).contains(&r));
            assert!((bw..2 * bw).contains(&c));
        }
    }

    #[test]
    fn inverse_is_adjoint() {
        // <Ψx, z> == <x, Ψᵀ z> where Ψᵀ = Ψ⁻¹ for the orthonormal Haar.
        let layout = WaveletLayout::new(8, 8, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4 {
            let x: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() - 0.5).collect();
            let z: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() - 0.5).collect();
            let lhs = dot(&haar_forward(&x, &layout).unwrap(), &z);
            let rhs = dot(&x, &haar_inverse(&z, &layout).unwrap());
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_image_concentrates_in_ll() {
        let layout = WaveletLayout::new(8, 8, 3).unwrap();
        let img = vec![2.0f64; 64];
        let z = haar_forward(&img, &layout).unwrap();
        let ll = layout.index(3, Orientation::Ll, 0, 0);
        for (i, v) in z.iter().enumerate() {
            if i == ll {
                // Energy conservation: the single LL coefficient carries
                // the full norm sqrt(64 * 4) = 16.
                assert!((v - 16.0).abs() < 1e-12);
            } else {
                assert!(v.abs() < 1e-12, "leak at {i}: {v}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn roundtrip_and_isometry(seed in 0u64..1000, levels in 1usize..4) {
            let layout = WaveletLayout::new(16, 16, levels).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..256).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let z = haar_forward(&x, &layout).unwrap();
            let back = haar_inverse(&z, &layout).unwrap();
            let err = norm2(&sub(&back, &x));
            prop_assert!(err < 1e-12 * norm2(&x).max(1.0));
            // Orthonormality: coefficient norm equals image norm.
            prop_assert!((norm2(&z) - norm2(&x)).abs() < 1e-12 * norm2(&x).max(1.0));
        }
    }
}
