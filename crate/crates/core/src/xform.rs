//! Separable 3D transforms for groups of patches.
//!
//! A group is transformed patch by patch with a 2D spatial transform (for
//! spatio-temporal patches a Haar transform across the `kt` temporal slices
//! comes first), then with a full multi-level orthonormal Haar transform
//! across the `n` patches of the group, coefficient position by position.
//!
//! The 2D spatial transforms are tensor products of a 1D `k x k` analysis
//! matrix: the orthonormal DCT-II, or the periodized multi-level
//! bi-orthogonal spline wavelet bior1.5 (synthesis matrix obtained by exact
//! inversion of the analysis matrix).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::search::{PatchCoord, PatchSpec};
use crate::vidio::Video;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpatialTransform {
    Dct,
    Bior15,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StackTransform {
    Haar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransformId {
    pub spatial: SpatialTransform,
    pub stack: StackTransform,
}

impl TransformId {
    pub const DCT_HAAR: TransformId = TransformId {
        spatial: SpatialTransform::Dct,
        stack: StackTransform::Haar,
    };
    pub const BIOR_HAAR: TransformId = TransformId {
        spatial: SpatialTransform::Bior15,
        stack: StackTransform::Haar,
    };
}

/// Which coefficients are exempt from hard thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DcConvention {
    /// The single fully-DC coefficient of the 3D spectrum.
    #[default]
    Single,
    /// The spatial DC of every slice along the group dimension.
    PerSlice,
}

/// A group of `n` patches, or its spectrum, stored slice after slice.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStack {
    pub spec: PatchSpec,
    pub n: usize,
    pub coeffs: Vec<f64>,
    pub coords: Vec<PatchCoord>,
}

impl GroupStack {
    pub fn zeros(spec: PatchSpec, coords: Vec<PatchCoord>) -> Self {
        let n = coords.len();
        Self {
            spec,
            n,
            coeffs: vec![0.0; n * spec.len()],
            coords,
        }
    }

    /// Copies the patches at `coords` out of `v`. Coordinates must be in bounds.
    pub fn from_video(v: &Video, coords: &[PatchCoord], spec: PatchSpec) -> Self {
        let mut coeffs = Vec::with_capacity(coords.len() * spec.len());
        for c in coords {
            for dt in 0..spec.kt {
                for dy in 0..spec.k {
                    let start = v.index(c.x, c.y + dy, c.t + dt);
                    coeffs.extend_from_slice(&v.data()[start..start + spec.k]);
                }
            }
        }
        Self {
            spec,
            n: coords.len(),
            coeffs,
            coords: coords.to_vec(),
        }
    }

    #[inline]
    pub fn slice_len(&self) -> usize {
        self.spec.len()
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let m = self.slice_len();
        &self.coeffs[i * m..(i + 1) * m]
    }

    pub fn patch_mut(&mut self, i: usize) -> &mut [f64] {
        let m = self.slice_len();
        &mut self.coeffs[i * m..(i + 1) * m]
    }
}

// =============================================================================
// 1D kernels
// =============================================================================

/// Orthonormal DCT-II matrix, row `u` holds basis function `u`.
pub fn dct_matrix(k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k * k];
    let kf = k as f64;
    for u in 0..k {
        let scale = if u == 0 { (1.0 / kf).sqrt() } else { (2.0 / kf).sqrt() };
        for x in 0..k {
            m[u * k + x] = scale * (PI * (x as f64 + 0.5) * u as f64 / kf).cos();
        }
    }
    m
}

/// bior1.5 analysis low-pass filter.
pub const BIOR15_DEC_LO: [f64; 10] = [
    0.016_572_815_184_059_71,
    -0.016_572_815_184_059_71,
    -0.121_533_978_016_437_87,
    0.121_533_978_016_437_87,
    FRAC_1_SQRT_2,
    FRAC_1_SQRT_2,
    0.121_533_978_016_437_87,
    -0.121_533_978_016_437_87,
    -0.016_572_815_184_059_71,
    0.016_572_815_184_059_71,
];

/// bior1.5 analysis high-pass filter.
pub const BIOR15_DEC_HI: [f64; 10] = [0.0, 0.0, 0.0, 0.0, -FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0, 0.0, 0.0];

/// Filter tap aligned with sample `2i` of the input.
const BIOR15_ORIGIN: isize = 4;

/// Multi-level periodized bior1.5 analysis matrix for a power-of-two length.
/// Coefficients are ordered coarsest approximation first.
pub fn bior15_matrix(k: usize) -> Result<Vec<f64>> {
    if !k.is_power_of_two() {
        return Err(Error::Config(format!(
            "bior1.5 needs a power-of-two patch size, got {k}"
        )));
    }
    let mut m = vec![0.0; k * k];
    let mut column = vec![0.0; k];
    for j in 0..k {
        column.iter_mut().for_each(|c| *c = 0.0);
        column[j] = 1.0;
        bior15_forward(&mut column);
        for i in 0..k {
            m[i * k + j] = column[i];
        }
    }
    Ok(m)
}

fn bior15_forward(signal: &mut [f64]) {
    let mut len = signal.len();
    let mut scratch = vec![0.0; len];
    while len >= 2 {
        let half = len / 2;
        for i in 0..half {
            let mut lo = 0.0;
            let mut hi = 0.0;
            for (j, (&fl, &fh)) in BIOR15_DEC_LO.iter().zip(&BIOR15_DEC_HI).enumerate() {
                let idx = (2 * i as isize + j as isize - BIOR15_ORIGIN).rem_euclid(len as isize) as usize;
                lo += fl * signal[idx];
                hi += fh * signal[idx];
            }
            scratch[i] = lo;
            scratch[half + i] = hi;
        }
        signal[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
}

/// Inverse of a square matrix by Gauss-Jordan elimination with partial pivoting.
pub(crate) fn invert(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut work = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| work[r * n + col].abs().total_cmp(&work[s * n + col].abs()))
            .unwrap();
        if work[pivot * n + col].abs() < 1e-12 {
            return Err(Error::Config("singular transform matrix".into()));
        }
        if pivot != col {
            for c in 0..n {
                work.swap(pivot * n + c, col * n + c);
                inv.swap(pivot * n + c, col * n + c);
            }
        }
        let p = work[col * n + col];
        for c in 0..n {
            work[col * n + c] /= p;
            inv[col * n + c] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = work[r * n + col];
            if f != 0.0 {
                for c in 0..n {
                    work[r * n + c] -= f * work[col * n + c];
                    inv[r * n + c] -= f * inv[col * n + c];
                }
            }
        }
    }
    Ok(inv)
}

/// In-place orthonormal multi-level Haar over `len` blocks of `stride`
/// values each; block 0 ends up holding the overall average direction.
fn haar_forward_blocks(data: &mut [f64], len: usize, stride: usize, scratch: &mut Vec<f64>) {
    scratch.resize(len * stride, 0.0);
    let mut cur = len;
    while cur >= 2 {
        let half = cur / 2;
        for i in 0..half {
            for c in 0..stride {
                let a = data[(2 * i) * stride + c];
                let b = data[(2 * i + 1) * stride + c];
                scratch[i * stride + c] = (a + b) * FRAC_1_SQRT_2;
                scratch[(half + i) * stride + c] = (a - b) * FRAC_1_SQRT_2;
            }
        }
        data[..cur * stride].copy_from_slice(&scratch[..cur * stride]);
        cur = half;
    }
}

fn haar_inverse_blocks(data: &mut [f64], len: usize, stride: usize, scratch: &mut Vec<f64>) {
    scratch.resize(len * stride, 0.0);
    let mut cur = 2;
    while cur <= len {
        let half = cur / 2;
        for i in 0..half {
            for c in 0..stride {
                let a = data[i * stride + c];
                let d = data[(half + i) * stride + c];
                scratch[(2 * i) * stride + c] = (a + d) * FRAC_1_SQRT_2;
                scratch[(2 * i + 1) * stride + c] = (a - d) * FRAC_1_SQRT_2;
            }
        }
        data[..cur * stride].copy_from_slice(&scratch[..cur * stride]);
        cur *= 2;
    }
}

// =============================================================================
// 3D plan
// =============================================================================

/// Precomputed matrices for one patch extent and transform choice.
#[derive(Debug, Clone)]
pub struct TransformPlan {
    spec: PatchSpec,
    id: TransformId,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    spatial_dc: usize,
}

impl TransformPlan {
    pub fn new(spec: PatchSpec, id: TransformId) -> Result<Self> {
        if !spec.kt.is_power_of_two() {
            return Err(Error::Config(format!(
                "temporal patch depth must be a power of two, got {}",
                spec.kt
            )));
        }
        let k = spec.k;
        let (analysis, synthesis) = match id.spatial {
            SpatialTransform::Dct => {
                let a = dct_matrix(k);
                let mut s = vec![0.0; k * k];
                for i in 0..k {
                    for j in 0..k {
                        s[j * k + i] = a[i * k + j];
                    }
                }
                (a, s)
            }
            SpatialTransform::Bior15 => {
                let a = bior15_matrix(k)?;
                let s = invert(&a, k)?;
                (a, s)
            }
        };
        let mut plan = Self {
            spec,
            id,
            analysis,
            synthesis,
            spatial_dc: 0,
        };
        plan.spatial_dc = plan.locate_dc()?;
        Ok(plan)
    }

    /// Position of the largest coefficient of a transformed constant patch.
    fn locate_dc(&self) -> Result<usize> {
        let mut ones = GroupStack {
            spec: self.spec,
            n: 1,
            coeffs: vec![1.0; self.spec.len()],
            coords: vec![PatchCoord::new(0, 0, 0)],
        };
        self.forward(&mut ones)?;
        Ok(ones
            .coeffs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap())
    }

    pub fn spec(&self) -> PatchSpec {
        self.spec
    }

    pub fn id(&self) -> TransformId {
        self.id
    }

    fn check(&self, g: &GroupStack) -> Result<()> {
        if g.spec != self.spec {
            return Err(Error::InvalidInput("group patch extent does not match the plan".into()));
        }
        if g.n == 0 || !g.n.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "group size must be a power of two, got {}",
                g.n
            )));
        }
        if g.coeffs.len() != g.n * self.spec.len() {
            return Err(Error::InvalidInput("group buffer has the wrong length".into()));
        }
        Ok(())
    }

    /// `out = M x M^T` on one `k x k` slice.
    fn apply_2d(&self, matrix: &[f64], slice: &mut [f64], tmp: &mut [f64]) {
        let k = self.spec.k;
        // rows: tmp[y][v] = sum_x slice[y][x] M[v][x]
        for y in 0..k {
            let row = &slice[y * k..(y + 1) * k];
            for v in 0..k {
                let mrow = &matrix[v * k..(v + 1) * k];
                tmp[y * k + v] = row.iter().zip(mrow).map(|(a, b)| a * b).sum();
            }
        }
        // columns: slice[u][v] = sum_y M[u][y] tmp[y][v]
        for u in 0..k {
            let mrow = &matrix[u * k..(u + 1) * k];
            for v in 0..k {
                let mut acc = 0.0;
                for y in 0..k {
                    acc += mrow[y] * tmp[y * k + v];
                }
                slice[u * k + v] = acc;
            }
        }
    }

    fn spatial_forward(&self, patch: &mut [f64], tmp: &mut [f64], scratch: &mut Vec<f64>) {
        let kk = self.spec.k * self.spec.k;
        if self.spec.kt > 1 {
            haar_forward_blocks(patch, self.spec.kt, kk, scratch);
        }
        for slice in patch.chunks_exact_mut(kk) {
            self.apply_2d(&self.analysis, slice, tmp);
        }
    }

    fn spatial_inverse(&self, patch: &mut [f64], tmp: &mut [f64], scratch: &mut Vec<f64>) {
        let kk = self.spec.k * self.spec.k;
        for slice in patch.chunks_exact_mut(kk) {
            self.apply_2d(&self.synthesis, slice, tmp);
        }
        if self.spec.kt > 1 {
            haar_inverse_blocks(patch, self.spec.kt, kk, scratch);
        }
    }

    /// Transforms the group in place into its 3D spectrum.
    pub fn forward(&self, g: &mut GroupStack) -> Result<()> {
        self.check(g)?;
        let m = self.spec.len();
        let mut tmp = vec![0.0; self.spec.k * self.spec.k];
        let mut scratch = Vec::new();
        for patch in g.coeffs.chunks_exact_mut(m) {
            self.spatial_forward(patch, &mut tmp, &mut scratch);
        }
        haar_forward_blocks(&mut g.coeffs, g.n, m, &mut scratch);
        Ok(())
    }

    /// Exact inverse of [`TransformPlan::forward`].
    pub fn inverse(&self, g: &mut GroupStack) -> Result<()> {
        self.check(g)?;
        let m = self.spec.len();
        let mut tmp = vec![0.0; self.spec.k * self.spec.k];
        let mut scratch = Vec::new();
        haar_inverse_blocks(&mut g.coeffs, g.n, m, &mut scratch);
        for patch in g.coeffs.chunks_exact_mut(m) {
            self.spatial_inverse(patch, &mut tmp, &mut scratch);
        }
        Ok(())
    }

    /// Spectrum positions exempt from thresholding for a group of `n` patches.
    ///
    /// The Haar transform along the group puts the group average in slice 0,
    /// so the fully-DC position is the spatial DC of that slice.
    pub fn dc_mask(&self, n: usize, convention: DcConvention) -> Result<Vec<usize>> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "group size must be a power of two, got {n}"
            )));
        }
        let m = self.spec.len();
        Ok(match convention {
            DcConvention::Single => vec![self.spatial_dc],
            DcConvention::PerSlice => (0..n).map(|j| j * m + self.spatial_dc).collect(),
        })
    }
}

/// Convenience wrapper: spectrum of `g`.
pub fn forward_3d(g: &GroupStack, id: TransformId) -> Result<GroupStack> {
    let plan = TransformPlan::new(g.spec, id)?;
    let mut out = g.clone();
    plan.forward(&mut out)?;
    Ok(out)
}

/// Convenience wrapper: patches from spectrum `g`.
pub fn inverse_3d(g: &GroupStack, id: TransformId) -> Result<GroupStack> {
    let plan = TransformPlan::new(g.spec, id)?;
    let mut out = g.clone();
    plan.inverse(&mut out)?;
    Ok(out)
}

pub fn dc_mask(spec: PatchSpec, n: usize, id: TransformId, convention: DcConvention) -> Result<Vec<usize>> {
    TransformPlan::new(spec, id)?.dc_mask(n, convention)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(spec: PatchSpec, n: usize, f: impl Fn(usize) -> f64) -> GroupStack {
        let coords = vec![PatchCoord::new(0, 0, 0); n];
        let mut g = GroupStack::zeros(spec, coords);
        for (i, c) in g.coeffs.iter_mut().enumerate() {
            *c = f(i);
        }
        g
    }

    fn pseudo(i: usize) -> f64 {
        ((i as f64 * 12.9898).sin() * 43758.5453).fract() * 100.0
    }

    #[test]
    fn constant_patch_dct_single_coefficient() {
        let spec = PatchSpec::new(8, 1).unwrap();
        let g = group(spec, 1, |_| 3.0);
        let s = forward_3d(&g, TransformId::DCT_HAAR).unwrap();
        assert!((s.coeffs[0] - 24.0).abs() < 1e-12);
        assert!(s.coeffs[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn identical_pair_has_no_detail() {
        let spec = PatchSpec::new(8, 1).unwrap();
        let g = group(spec, 2, |i| pseudo(i % 64));
        let s = forward_3d(&g, TransformId::DCT_HAAR).unwrap();
        assert!(s.patch(1).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn round_trip_all_shapes() {
        for &(k, id) in &[(8, TransformId::BIOR_HAAR), (8, TransformId::DCT_HAAR), (7, TransformId::DCT_HAAR)] {
            for kt in [1, 2] {
                for n in [1, 2, 4, 8, 16] {
                    let spec = PatchSpec::new(k, kt).unwrap();
                    let g = group(spec, n, pseudo);
                    let back = inverse_3d(&forward_3d(&g, id).unwrap(), id).unwrap();
                    let err = g
                        .coeffs
                        .iter()
                        .zip(&back.coeffs)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    assert!(err < 1e-8, "k={k} kt={kt} n={n} err={err}");
                }
            }
        }
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let spec = PatchSpec::new(8, 2).unwrap();
        let g = group(spec, 4, |_| 0.0);
        let back = inverse_3d(&g, TransformId::BIOR_HAAR).unwrap();
        assert!(back.coeffs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let spec = PatchSpec::new(7, 1).unwrap();
        let g = group(spec, 8, |i| if i == 0 { 10.0 } else { 0.0 });
        let back = inverse_3d(&g, TransformId::DCT_HAAR).unwrap();
        let first = back.coeffs[0];
        assert!(first > 0.0);
        assert!(back.coeffs.iter().all(|c| (c - first).abs() < 1e-12));
    }

    #[test]
    fn non_power_of_two_group_rejected() {
        let spec = PatchSpec::new(8, 1).unwrap();
        let g = group(spec, 3, pseudo);
        assert!(forward_3d(&g, TransformId::DCT_HAAR).is_err());
    }

    #[test]
    fn bior_rejects_odd_size() {
        assert!(TransformPlan::new(PatchSpec::new(7, 1).unwrap(), TransformId::BIOR_HAAR).is_err());
    }

    #[test]
    fn dc_mask_sizes() {
        let spec = PatchSpec::new(8, 1).unwrap();
        assert_eq!(dc_mask(spec, 8, TransformId::DCT_HAAR, DcConvention::Single).unwrap(), vec![0]);
        assert_eq!(dc_mask(spec, 1, TransformId::DCT_HAAR, DcConvention::Single).unwrap(), vec![0]);
        assert_eq!(
            dc_mask(spec, 4, TransformId::DCT_HAAR, DcConvention::PerSlice).unwrap(),
            vec![0, 64, 128, 192]
        );
    }

    #[test]
    fn bior_constant_stack_has_unique_nonzero() {
        let spec = PatchSpec::new(8, 2).unwrap();
        let g = group(spec, 4, |_| 5.0);
        let s = forward_3d(&g, TransformId::BIOR_HAAR).unwrap();
        let nonzero: Vec<usize> = (0..s.coeffs.len()).filter(|&i| s.coeffs[i].abs() > 1e-9).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(dc_mask(spec, 4, TransformId::BIOR_HAAR, DcConvention::Single).unwrap(), nonzero);
    }

    #[test]
    fn bior_synthesis_low_pass_is_haar_like() {
        // The bior1.5 synthesis scaling function is a box: the inverse of the
        // coarsest coefficient is constant.
        let s = invert(&bior15_matrix(8).unwrap(), 8).unwrap();
        let col0: Vec<f64> = (0..8).map(|i| s[i * 8]).collect();
        assert!(col0.iter().all(|c| (c - col0[0]).abs() < 1e-12));
        assert!((col0[0] - 1.0 / 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dct_matrix_is_orthonormal() {
        let k = 7;
        let m = dct_matrix(k);
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = (0..k).map(|x| m[a * k + x] * m[b * k + x]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }
}
