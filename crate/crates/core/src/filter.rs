//! Collaborative shrinkage of groups and Kaiser-weighted aggregation.

use crate::error::{Error, Result};
use crate::search::PatchSpec;
use crate::vidio::Video;
use crate::xform::{DcConvention, GroupStack, TransformPlan};

/// Floor applied to `sigma^2` (and to the Wiener energy) before division.
pub const WEIGHT_EPSILON: f64 = 1e-12;

// =============================================================================
// Kaiser window
// =============================================================================

/// Zeroth-order modified Bessel function of the first kind, power series.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut j = 1.0;
    loop {
        term *= q / (j * j);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        j += 1.0;
    }
    sum
}

/// Separable `k x k` Kaiser taper, peak value 1.
#[derive(Debug, Clone, PartialEq)]
pub struct KaiserWindow {
    pub beta: f64,
    pub k: usize,
    pub values: Vec<f64>,
}

impl KaiserWindow {
    /// Sample `i` of `0..k` is evaluated at `2i/(k-1) - 1` in [-1, 1]; the 1D
    /// profile is then divided by its maximum so the centre weighs 1.
    pub fn new(k: usize, beta: f64) -> Result<Self> {
        if k == 0 || !(beta >= 0.0) {
            return Err(Error::Config(format!("invalid Kaiser window k={k} beta={beta}")));
        }
        let profile: Vec<f64> = if k == 1 {
            vec![1.0]
        } else {
            let raw: Vec<f64> = (0..k)
                .map(|i| {
                    let r = 2.0 * i as f64 / (k - 1) as f64 - 1.0;
                    bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt())
                })
                .collect();
            let peak = raw.iter().cloned().fold(f64::MIN, f64::max);
            raw.iter().map(|v| v / peak).collect()
        };
        let mut values = Vec::with_capacity(k * k);
        for wy in &profile {
            for wx in &profile {
                values.push(wy * wx);
            }
        }
        Ok(Self { beta, k, values })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.k + x]
    }
}

// =============================================================================
// Shrinkage
// =============================================================================

/// Filtered group (back in the patch domain) and its aggregation weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkResult {
    pub stack: GroupStack,
    pub weight: f64,
    /// Coefficients kept by hard thresholding, or the Wiener energy `sum alpha^2`.
    pub energy: f64,
}

/// Hard thresholding: coefficients with `|c| <= lambda3d * sigma` are zeroed
/// except the DC positions. Weight is `1 / (sigma^2 * retained)`.
pub fn ht_shrink(
    g: &GroupStack,
    plan: &TransformPlan,
    sigma: f64,
    lambda3d: f64,
    convention: DcConvention,
) -> Result<ShrinkResult> {
    let mut stack = g.clone();
    plan.forward(&mut stack)?;
    let threshold = lambda3d * sigma;
    let mask = plan.dc_mask(stack.n, convention)?;
    let mut retained = 0usize;
    for (i, c) in stack.coeffs.iter_mut().enumerate() {
        if mask.contains(&i) || c.abs() > threshold {
            retained += 1;
        } else {
            *c = 0.0;
        }
    }
    plan.inverse(&mut stack)?;
    let energy = retained as f64;
    Ok(ShrinkResult {
        stack,
        weight: 1.0 / ((sigma * sigma).max(WEIGHT_EPSILON) * energy),
        energy,
    })
}

/// Empirical Wiener filtering of `noisy` with attenuations
/// `alpha = o^2 / (o^2 + sigma^2)` from the spectrum `o` of `oracle`.
/// Weight is `1 / (sigma^2 * sum alpha^2)`.
pub fn wiener_shrink(
    noisy: &GroupStack,
    oracle: &GroupStack,
    plan: &TransformPlan,
    sigma: f64,
) -> Result<ShrinkResult> {
    if noisy.n != oracle.n || noisy.spec != oracle.spec || noisy.coords != oracle.coords {
        return Err(Error::InvalidInput("noisy and oracle groups are not congruent".into()));
    }
    let mut stack = noisy.clone();
    let mut basic = oracle.clone();
    plan.forward(&mut stack)?;
    plan.forward(&mut basic)?;
    let s2 = sigma * sigma;
    let mut energy = 0.0;
    for (c, &o) in stack.coeffs.iter_mut().zip(&basic.coeffs) {
        let o2 = o * o;
        let denom = o2 + s2;
        let alpha = if denom > 0.0 { o2 / denom } else { 0.0 };
        *c *= alpha;
        energy += alpha * alpha;
    }
    plan.inverse(&mut stack)?;
    Ok(ShrinkResult {
        stack,
        weight: 1.0 / (s2.max(WEIGHT_EPSILON) * energy.max(WEIGHT_EPSILON)),
        energy,
    })
}

// =============================================================================
// Aggregation
// =============================================================================

/// Per-pixel weighted sums of patch estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AggBuffer {
    width: usize,
    height: usize,
    frames: usize,
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl AggBuffer {
    pub fn new(width: usize, height: usize, frames: usize) -> Self {
        let n = width * height * frames;
        Self {
            width,
            height,
            frames,
            num: vec![0.0; n],
            den: vec![0.0; n],
        }
    }

    pub fn for_video(v: &Video) -> Self {
        Self::new(v.width(), v.height(), v.frames())
    }

    /// Adds every patch of `result` with weight `result.weight * window`.
    pub fn aggregate(&mut self, result: &ShrinkResult, window: &KaiserWindow) -> Result<()> {
        let g = &result.stack;
        let spec: PatchSpec = g.spec;
        if window.k != spec.k {
            return Err(Error::InvalidInput("window size differs from patch size".into()));
        }
        for (i, c) in g.coords.iter().enumerate() {
            if c.x + spec.k > self.width || c.y + spec.k > self.height || c.t + spec.kt > self.frames {
                return Err(Error::InvalidInput(format!("patch at {c:?} is out of bounds")));
            }
            let patch = g.patch(i);
            for dt in 0..spec.kt {
                for dy in 0..spec.k {
                    let base = ((c.t + dt) * self.height + c.y + dy) * self.width + c.x;
                    let src = &patch[(dt * spec.k + dy) * spec.k..(dt * spec.k + dy + 1) * spec.k];
                    let win = &window.values[dy * spec.k..(dy + 1) * spec.k];
                    let num = &mut self.num[base..base + spec.k];
                    let den = &mut self.den[base..base + spec.k];
                    for x in 0..spec.k {
                        let w = result.weight * win[x];
                        num[x] += w * src[x];
                        den[x] += w;
                    }
                }
            }
        }
        Ok(())
    }

    /// Element-wise sum with another buffer of the same shape.
    pub fn merge(&mut self, other: &AggBuffer) -> Result<()> {
        if (self.width, self.height, self.frames) != (other.width, other.height, other.frames) {
            return Err(Error::InvalidInput("aggregation buffers differ in shape".into()));
        }
        for (a, b) in self.num.iter_mut().zip(&other.num) {
            *a += b;
        }
        for (a, b) in self.den.iter_mut().zip(&other.den) {
            *a += b;
        }
        Ok(())
    }

    /// Number of samples without any contribution.
    pub fn uncovered(&self) -> usize {
        self.den.iter().filter(|&&d| !(d > 0.0)).count()
    }

    /// `num / den` where covered, `fallback` elsewhere.
    pub fn normalize(&self, fallback: &Video) -> Result<Video> {
        if (fallback.width(), fallback.height(), fallback.frames()) != (self.width, self.height, self.frames) {
            return Err(Error::InvalidInput("fallback video differs in shape".into()));
        }
        let data = self
            .num
            .iter()
            .zip(&self.den)
            .zip(fallback.data())
            .map(|((&n, &d), &f)| if d > 0.0 { n / d } else { f })
            .collect();
        Video::from_data(self.width, self.height, self.frames, data)
    }
}
