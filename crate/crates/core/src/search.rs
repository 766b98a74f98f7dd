//! Patch geometry, the regularized patch distance, and the block-matching
//! searches (single-window local search and the predictive temporal search).
//!
//! Distances are plain sums of squared differences over all `kt * k * k`
//! samples, minus the correcting factor `d` when both patches share the same
//! spatial position. They are not normalized by patch size.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::vidio::Video;

/// Patch extent: `k x k` pixels over `kt` consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchSpec {
    pub k: usize,
    pub kt: usize,
}

impl PatchSpec {
    pub fn new(k: usize, kt: usize) -> Result<Self> {
        if k == 0 || kt == 0 {
            return Err(Error::Config(format!("patch extent must be positive, got {k}x{k}x{kt}")));
        }
        Ok(Self { k, kt })
    }

    /// Samples per patch.
    #[inline]
    pub fn len(&self) -> usize {
        self.kt * self.k * self.k
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether a patch of this extent fits in `v` at all.
    pub fn fits(&self, v: &Video) -> bool {
        self.k <= v.width() && self.k <= v.height() && self.kt <= v.frames()
    }
}

/// Top-left-front corner of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchCoord {
    pub x: usize,
    pub y: usize,
    pub t: usize,
}

impl PatchCoord {
    pub const fn new(x: usize, y: usize, t: usize) -> Self {
        Self { x, y, t }
    }

    pub fn in_bounds(&self, v: &Video, spec: PatchSpec) -> bool {
        self.x + spec.k <= v.width() && self.y + spec.k <= v.height() && self.t + spec.kt <= v.frames()
    }

    #[inline]
    pub fn same_position(&self, other: &PatchCoord) -> bool {
        self.x == other.x && self.y == other.y
    }

    /// Lexicographic (t, y, x) key used to break distance ties.
    #[inline]
    fn tyx(&self) -> (usize, usize, usize) {
        (self.t, self.y, self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub coord: PatchCoord,
    pub dist: f64,
}

/// Ordering by distance, then by (t, y, x).
pub fn match_order(a: &Match, b: &Match) -> Ordering {
    a.dist
        .total_cmp(&b.dist)
        .then_with(|| a.coord.tyx().cmp(&b.coord.tyx()))
}

/// Distance-ordered group of candidates.
///
/// A finalized list starts with the reference patch (it has the smallest
/// possible distance, `-d`, and wins ties), followed by the other matches in
/// [`match_order`]. Its length is a power of two.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchList {
    pub matches: Vec<Match>,
}

impl MatchList {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn coords(&self) -> Vec<PatchCoord> {
        self.matches.iter().map(|m| m.coord).collect()
    }

    pub fn contains(&self, c: &PatchCoord) -> bool {
        self.matches.iter().any(|m| m.coord == *c)
    }
}

/// Largest power of two `<= n` (0 for 0).
pub fn floor_pow2(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

/// Block-matching parameters for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    /// Maximum group size.
    pub n: usize,
    /// Temporal radius in frames.
    pub nf: usize,
    /// Window side in the reference frame.
    pub ns: usize,
    /// Window side in the other frames.
    pub npr: usize,
    /// Candidates kept per frame.
    pub nb: usize,
    /// Correcting factor favouring non-moving patches (sample^2).
    pub d: f64,
    /// Maximum distance (sample^2); `None` disables the filter.
    pub tau: Option<f64>,
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.nb == 0 || self.npr == 0 {
            return Err(Error::Config("n, nb and npr must be >= 1".into()));
        }
        if self.ns < self.npr {
            return Err(Error::Config(format!(
                "ns ({}) must be >= npr ({})",
                self.ns, self.npr
            )));
        }
        if !self.d.is_finite() {
            return Err(Error::Config("d must be finite".into()));
        }
        if let Some(tau) = self.tau {
            if !(tau >= 0.0) {
                return Err(Error::Config(format!("tau must be >= 0, got {tau}")));
            }
        }
        Ok(())
    }
}

// =============================================================================
// Distances
// =============================================================================

/// Sum of squared differences between two in-bounds patches.
#[inline]
pub(crate) fn ssd(v: &Video, p: PatchCoord, q: PatchCoord, spec: PatchSpec) -> f64 {
    let w = v.width();
    let data = v.data();
    let mut acc = 0.0;
    for dt in 0..spec.kt {
        for dy in 0..spec.k {
            let a = v.index(p.x, p.y + dy, p.t + dt);
            let b = v.index(q.x, q.y + dy, q.t + dt);
            debug_assert!(a + spec.k <= data.len() && b + spec.k <= data.len() && spec.k <= w);
            let ra = &data[a..a + spec.k];
            let rb = &data[b..b + spec.k];
            for (x, y) in ra.iter().zip(rb) {
                let diff = x - y;
                acc += diff * diff;
            }
        }
    }
    acc
}

#[inline]
pub(crate) fn regularized(v: &Video, p: PatchCoord, q: PatchCoord, spec: PatchSpec, d: f64) -> f64 {
    let s = ssd(v, p, q, spec);
    if p.same_position(&q) {
        s - d
    } else {
        s
    }
}

fn check_bounds(v: &Video, c: PatchCoord, spec: PatchSpec) -> Result<()> {
    if c.in_bounds(v, spec) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "patch {}x{}x{} at ({}, {}, {}) exceeds video {}x{}x{}",
            spec.k,
            spec.k,
            spec.kt,
            c.x,
            c.y,
            c.t,
            v.width(),
            v.height(),
            v.frames()
        )))
    }
}

/// Regularized squared distance between the patches at `p` and `q`.
pub fn patch_distance(v: &Video, p: PatchCoord, q: PatchCoord, spec: PatchSpec, d: f64) -> Result<f64> {
    check_bounds(v, p, spec)?;
    check_bounds(v, q, spec)?;
    Ok(regularized(v, p, q, spec, d))
}

/// Analytic moments of the per-pixel distance `|q1 - q2|^2 / m` between noisy
/// versions of two clean patches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStats {
    pub mean: f64,
    pub variance: f64,
}

/// Mean `|p1-p2|^2/m + 2 sigma^2` and variance `8 sigma^2/m (sigma^2 + |p1-p2|^2/m)`
/// of the normalized distance between the patches corrupted by independent AWGN.
pub fn distance_stats(p1: &[f64], p2: &[f64], sigma: f64) -> Result<DistanceStats> {
    if p1.len() != p2.len() || p1.is_empty() {
        return Err(Error::InvalidInput("patches must be non-empty and congruent".into()));
    }
    let m = p1.len() as f64;
    let delta = p1.iter().zip(p2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m;
    let s2 = sigma * sigma;
    Ok(DistanceStats {
        mean: delta + 2.0 * s2,
        variance: 8.0 * s2 / m * (s2 + delta),
    })
}

// =============================================================================
// Searches
// =============================================================================

/// Inclusive range of top-left positions in a window of side `side` centred
/// on `center`, clipped to `[0, max]`.
#[inline]
pub(crate) fn window_range(center: usize, side: usize, max: usize) -> (usize, usize) {
    let half = (side / 2) as isize;
    let lo = center as isize - half;
    let hi = lo + side as isize - 1;
    (lo.max(0) as usize, (hi.min(max as isize)).max(0) as usize)
}

/// Scores every position in `positions` (frame `t`) against `reference`
/// and keeps the `nb` best.
pub(crate) fn best_of(
    v: &Video,
    positions: &[(usize, usize)],
    t: usize,
    reference: PatchCoord,
    spec: PatchSpec,
    nb: usize,
    d: f64,
) -> Vec<Match> {
    let mut found: Vec<Match> = positions
        .iter()
        .map(|&(y, x)| {
            let coord = PatchCoord::new(x, y, t);
            Match {
                coord,
                dist: regularized(v, reference, coord, spec, d),
            }
        })
        .collect();
    found.sort_by(match_order);
    found.truncate(nb);
    found
}

/// Appends the clipped window around `(cx, cy)` to `out` as `(y, x)` pairs.
pub(crate) fn push_window(
    out: &mut Vec<(usize, usize)>,
    v: &Video,
    spec: PatchSpec,
    cx: usize,
    cy: usize,
    side: usize,
) {
    let (x0, x1) = window_range(cx, side, v.width() - spec.k);
    let (y0, y1) = window_range(cy, side, v.height() - spec.k);
    for y in y0..=y1 {
        for x in x0..=x1 {
            out.push((y, x));
        }
    }
}

/// Keeps the `nb` patches of `center`'s frame closest to `reference` among
/// those whose top-left corner lies in the `window x window` square centred
/// on `center` (clipped at the frame borders).
pub fn local_search(
    v: &Video,
    center: PatchCoord,
    reference: PatchCoord,
    window: usize,
    spec: PatchSpec,
    nb: usize,
    d: f64,
) -> Result<MatchList> {
    check_bounds(v, center, spec)?;
    check_bounds(v, reference, spec)?;
    if window == 0 {
        return Err(Error::InvalidInput("search window must be >= 1".into()));
    }
    let mut positions = Vec::with_capacity(window * window);
    push_window(&mut positions, v, spec, center.x, center.y, window);
    Ok(MatchList {
        matches: best_of(v, &positions, center.t, reference, spec, nb, d),
    })
}

/// Union of windows around `centers`, deduplicated, in (y, x) order.
pub(crate) fn region_union(v: &Video, spec: PatchSpec, centers: &[(usize, usize)], side: usize) -> Vec<(usize, usize)> {
    let mut positions = Vec::with_capacity(centers.len() * side * side);
    for &(cx, cy) in centers {
        push_window(&mut positions, v, spec, cx, cy, side);
    }
    positions.sort_unstable();
    positions.dedup();
    positions
}

/// Predictive search: an `ns` window in the reference frame, then frame by
/// frame forward and backward over `nf` frames, each frame searching the
/// union of `npr` windows centred on the previous frame's kept candidates.
pub fn predictive_search(v: &Video, reference: PatchCoord, params: &SearchParams, spec: PatchSpec) -> Result<MatchList> {
    check_bounds(v, reference, spec)?;
    let t = reference.t;
    let last = v.frames() - spec.kt;

    let ref_positions = region_union(v, spec, &[(reference.x, reference.y)], params.ns);
    let in_ref = best_of(v, &ref_positions, t, reference, spec, params.nb, params.d);
    let mut all = in_ref.clone();

    let follow = |frames: &mut dyn Iterator<Item = usize>, all: &mut Vec<Match>| {
        let mut prev = in_ref.clone();
        for tf in frames {
            let centers: Vec<(usize, usize)> = prev.iter().map(|m| (m.coord.x, m.coord.y)).collect();
            let region = region_union(v, spec, &centers, params.npr);
            prev = best_of(v, &region, tf, reference, spec, params.nb, params.d);
            all.extend_from_slice(&prev);
        }
    };
    follow(&mut (t + 1..=(t + params.nf).min(last)), &mut all);
    follow(&mut (t.saturating_sub(params.nf)..t).rev(), &mut all);

    Ok(finalize(all, reference, params, spec, v))
}

/// Deduplicates, applies the `tau` filter, guarantees the reference patch,
/// sorts and truncates to the largest power of two `<= min(len, n)`.
pub(crate) fn finalize(
    mut candidates: Vec<Match>,
    reference: PatchCoord,
    params: &SearchParams,
    spec: PatchSpec,
    v: &Video,
) -> MatchList {
    candidates.sort_by(|a, b| a.coord.tyx().cmp(&b.coord.tyx()));
    candidates.dedup_by(|a, b| a.coord == b.coord);
    if let Some(tau) = params.tau {
        candidates.retain(|m| m.dist <= tau || m.coord == reference);
    }
    if !candidates.iter().any(|m| m.coord == reference) {
        candidates.push(Match {
            coord: reference,
            dist: regularized(v, reference, reference, spec, params.d),
        });
    }
    candidates.sort_by(|a, b| {
        a.dist
            .total_cmp(&b.dist)
            .then_with(|| (a.coord != reference).cmp(&(b.coord != reference)))
            .then_with(|| a.coord.tyx().cmp(&b.coord.tyx()))
    });
    let keep = floor_pow2(candidates.len().min(params.n));
    candidates.truncate(keep);
    MatchList { matches: candidates }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_video(w: usize, h: usize, f: usize, seed: u64) -> Video {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Video::from_fn(w, h, f, |_, _, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 256) as f64
        })
        .unwrap()
    }

    #[test]
    fn distance_to_self_is_minus_d() {
        let v = noise_video(16, 16, 3, 1);
        let spec = PatchSpec::new(4, 1).unwrap();
        let p = PatchCoord::new(3, 5, 1);
        assert_eq!(patch_distance(&v, p, p, spec, 7.0).unwrap(), -7.0);
    }

    #[test]
    fn colocated_across_time_is_minus_d() {
        let v = Video::from_fn(8, 8, 2, |x, y, _| (x * y) as f64).unwrap();
        let spec = PatchSpec::new(3, 1).unwrap();
        let d = patch_distance(&v, PatchCoord::new(2, 2, 0), PatchCoord::new(2, 2, 1), spec, 5.0).unwrap();
        assert_eq!(d, -5.0);
    }

    #[test]
    fn unit_difference_closed_form() {
        let v = Video::from_fn(4, 2, 1, |x, _, _| if x < 2 { 0.0 } else { 1.0 }).unwrap();
        let spec = PatchSpec::new(2, 1).unwrap();
        let d = patch_distance(&v, PatchCoord::new(0, 0, 0), PatchCoord::new(2, 0, 0), spec, 0.0).unwrap();
        assert_eq!(d, 4.0);
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let v = noise_video(8, 8, 2, 2);
        let spec = PatchSpec::new(4, 2).unwrap();
        assert!(patch_distance(&v, PatchCoord::new(5, 0, 0), PatchCoord::new(0, 0, 0), spec, 0.0).is_err());
        assert!(patch_distance(&v, PatchCoord::new(0, 0, 1), PatchCoord::new(0, 0, 0), spec, 0.0).is_err());
    }

    #[test]
    fn window_of_one_returns_center() {
        let v = noise_video(16, 16, 2, 3);
        let spec = PatchSpec::new(4, 1).unwrap();
        let c = PatchCoord::new(6, 7, 1);
        let r = PatchCoord::new(2, 2, 0);
        let l = local_search(&v, c, r, 1, spec, 4, 0.0).unwrap();
        assert_eq!(l.coords(), vec![c]);
    }

    #[test]
    fn constant_frame_ties_pick_smallest_coords() {
        let v = Video::filled(12, 12, 1, 9.0).unwrap();
        let spec = PatchSpec::new(4, 1).unwrap();
        let c = PatchCoord::new(4, 4, 0);
        let l = local_search(&v, c, c, 5, spec, 3, 0.0).unwrap();
        assert_eq!(
            l.coords(),
            vec![PatchCoord::new(2, 2, 0), PatchCoord::new(3, 2, 0), PatchCoord::new(4, 2, 0)]
        );
        assert!(l.matches.iter().all(|m| m.dist == 0.0));
    }

    #[test]
    fn window_clipped_at_border() {
        assert_eq!(window_range(0, 7, 10), (0, 3));
        assert_eq!(window_range(10, 7, 10), (7, 10));
        assert_eq!(window_range(5, 1, 10), (5, 5));
        assert_eq!(window_range(5, 4, 10), (3, 6));
    }

    #[test]
    fn floor_pow2_values() {
        let got: Vec<usize> = [0, 1, 2, 3, 4, 5, 7, 8, 9, 31, 32, 33].iter().map(|&n| floor_pow2(n)).collect();
        assert_eq!(got, vec![0, 1, 2, 2, 4, 4, 4, 8, 8, 16, 32, 32]);
    }

    #[test]
    fn static_video_finds_colocated_in_every_frame() {
        let frame = noise_video(24, 24, 1, 5);
        let v = Video::from_fn(24, 24, 7, |x, y, _| frame.get(x, y, 0)).unwrap();
        let spec = PatchSpec::new(4, 1).unwrap();
        let params = SearchParams {
            n: 16,
            nf: 2,
            ns: 7,
            npr: 5,
            nb: 2,
            d: 10.0,
            tau: None,
        };
        let r = PatchCoord::new(9, 11, 3);
        let l = predictive_search(&v, r, &params, spec).unwrap();
        for t in 1..=5 {
            let c = PatchCoord::new(9, 11, t);
            let m = l.matches.iter().find(|m| m.coord == c).expect("colocated candidate");
            assert_eq!(m.dist, -10.0);
        }
        assert_eq!(l.matches[0].coord, r);
    }

    #[test]
    fn zero_tau_keeps_only_negative_distances() {
        let v = noise_video(24, 24, 5, 8);
        let spec = PatchSpec::new(4, 1).unwrap();
        let params = SearchParams {
            n: 16,
            nf: 2,
            ns: 7,
            npr: 5,
            nb: 2,
            d: 1.0,
            tau: Some(0.0),
        };
        let r = PatchCoord::new(8, 8, 2);
        let l = predictive_search(&v, r, &params, spec).unwrap();
        assert_eq!(l.matches[0].coord, r);
        assert_eq!(l.matches[0].dist, -1.0);
        assert!(l.matches.iter().all(|m| m.dist <= 0.0));
    }

    #[test]
    fn reference_kept_when_d_is_zero_and_content_repeats() {
        let v = Video::filled(16, 16, 3, 1.0).unwrap();
        let spec = PatchSpec::new(4, 1).unwrap();
        let params = SearchParams {
            n: 1,
            nf: 1,
            ns: 7,
            npr: 3,
            nb: 1,
            d: 0.0,
            tau: None,
        };
        let r = PatchCoord::new(6, 6, 1);
        let l = predictive_search(&v, r, &params, spec).unwrap();
        assert_eq!(l.coords(), vec![r]);
    }

    #[test]
    fn st_patches_stop_before_last_frame() {
        let v = noise_video(16, 16, 4, 4);
        let spec = PatchSpec::new(4, 2).unwrap();
        let params = SearchParams {
            n: 64,
            nf: 3,
            ns: 5,
            npr: 3,
            nb: 4,
            d: 0.0,
            tau: None,
        };
        let l = predictive_search(&v, PatchCoord::new(4, 4, 1), &params, spec).unwrap();
        assert!(l.matches.iter().all(|m| m.coord.t <= 2));
        assert!(l.len().is_power_of_two());
    }

    #[test]
    fn distance_stats_central_case() {
        let p = vec![3.0; 64];
        let s = distance_stats(&p, &p, 1.0).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.variance, 0.125);
    }

    #[test]
    fn distance_stats_noiseless() {
        let a = vec![0.0; 4];
        let b = vec![2.0; 4];
        let s = distance_stats(&a, &b, 0.0).unwrap();
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.variance, 0.0);
    }

    #[test]
    fn distance_stats_noncentral_case() {
        let a = vec![0.0; 128];
        let b = vec![2.0; 128];
        let s = distance_stats(&a, &b, 2.0).unwrap();
        assert_eq!(s.variance, 2.0);
        assert_eq!(s.mean, 12.0);
    }
}
