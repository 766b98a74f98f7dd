//! The two-step denoiser: reference grids, search dispatch, group filtering
//! and aggregation, plus the parameter profiles driving it.
//!
//! Groups are filtered in parallel in fixed-size batches and aggregated
//! sequentially in grid order, so outputs do not depend on the worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{ht_shrink, wiener_shrink, AggBuffer, KaiserWindow, ShrinkResult};
use crate::flow::{self, FlowSequence};
use crate::search::{self, PatchCoord, PatchSpec, SearchParams};
use crate::vidio::Video;
use crate::xform::{DcConvention, GroupStack, SpatialTransform, TransformId, TransformPlan};

const NP_PROFILE: &str = include_str!("../profiles/np.profile");

/// Reference patches filtered between two sequential aggregation passes.
const BATCH: usize = 2048;

/// Parameters of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    /// Search geometry. `tau` is per patch sample and is multiplied by the
    /// patch size before searching, see [`StepParams::search_for`].
    pub search: SearchParams,
    pub patch: PatchSpec,
    pub st: usize,
    pub lambda3d: f64,
    pub transform: TransformId,
    pub beta: f64,
}

impl StepParams {
    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        if self.st == 0 || self.st > self.patch.k {
            return Err(Error::Config(format!(
                "grid step must lie in [1, k = {}], got {}",
                self.patch.k, self.st
            )));
        }
        if !(self.lambda3d >= 0.0) || !self.lambda3d.is_finite() {
            return Err(Error::Config(format!("lambda3d must be >= 0, got {}", self.lambda3d)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        TransformPlan::new(self.patch, self.transform)?;
        Ok(())
    }

    /// Search parameters for patches of extent `spec`.
    pub fn search_for(&self, spec: PatchSpec) -> SearchParams {
        SearchParams {
            tau: self.search.tau.map(|t| t * spec.len() as f64),
            ..self.search
        }
    }
}

/// Parameters of both steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamProfile {
    pub name: String,
    pub step1: StepParams,
    pub step2: StepParams,
}

impl ParamProfile {
    /// The built-in normal profile.
    pub fn np() -> Self {
        Self::parse(NP_PROFILE).expect("built-in profile parses")
    }

    /// `np` or a path to a profile file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if name_or_path == "np" {
            return Ok(Self::np());
        }
        Self::load(Path::new(name_or_path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses `key = value` lines; `#` starts a comment. Every step field is
    /// required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_string();
            if kv.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        let name = kv.remove("name").unwrap_or_else(|| "custom".into());
        let step1 = parse_step(&mut kv, "step1")?;
        let step2 = parse_step(&mut kv, "step2")?;
        if let Some(key) = kv.keys().next() {
            return Err(Error::Config(format!("unknown key {key}")));
        }
        let profile = Self { name, step1, step2 };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        self.step1.validate()?;
        self.step2.validate()
    }
}

fn parse_step(kv: &mut BTreeMap<String, String>, prefix: &str) -> Result<StepParams> {
    let mut take = |field: &str| -> Result<String> {
        kv.remove(&format!("{prefix}.{field}"))
            .ok_or_else(|| Error::Config(format!("missing key {prefix}.{field}")))
    };
    fn num<T: std::str::FromStr>(key: &str, s: String) -> Result<T> {
        s.parse()
            .map_err(|_| Error::Config(format!("invalid value for {key}: {s}")))
    }
    let k = num(&format!("{prefix}.k"), take("k")?)?;
    let kt = num(&format!("{prefix}.kt"), take("kt")?)?;
    let tau = match take("tau")?.as_str() {
        "none" => None,
        s => Some(num(&format!("{prefix}.tau"), s.to_string())?),
    };
    let search = SearchParams {
        n: num(&format!("{prefix}.n"), take("n")?)?,
        nf: num(&format!("{prefix}.nf"), take("nf")?)?,
        ns: num(&format!("{prefix}.ns"), take("ns")?)?,
        npr: num(&format!("{prefix}.npr"), take("npr")?)?,
        nb: num(&format!("{prefix}.nb"), take("nb")?)?,
        d: num(&format!("{prefix}.d"), take("d")?)?,
        tau,
    };
    let transform = match take("transform")?.as_str() {
        "bior1.5" => TransformId::BIOR_HAAR,
        "dct" => TransformId::DCT_HAAR,
        other => return Err(Error::Config(format!("unknown transform {other}"))),
    };
    Ok(StepParams {
        search,
        patch: PatchSpec::new(k, kt)?,
        st: num(&format!("{prefix}.st"), take("st")?)?,
        lambda3d: num(&format!("{prefix}.lambda3d"), take("lambda3d")?)?,
        transform,
        beta: num(&format!("{prefix}.beta"), take("beta")?)?,
    })
}

impl fmt::Display for ParamProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        for (prefix, s) in [("step1", &self.step1), ("step2", &self.step2)] {
            writeln!(f)?;
            writeln!(f, "{prefix}.k = {}", s.patch.k)?;
            writeln!(f, "{prefix}.kt = {}", s.patch.kt)?;
            writeln!(f, "{prefix}.n = {}", s.search.n)?;
            writeln!(f, "{prefix}.nf = {}", s.search.nf)?;
            writeln!(f, "{prefix}.ns = {}", s.search.ns)?;
            writeln!(f, "{prefix}.npr = {}", s.search.npr)?;
            writeln!(f, "{prefix}.nb = {}", s.search.nb)?;
            writeln!(f, "{prefix}.d = {}", s.search.d)?;
            match s.search.tau {
                Some(t) => writeln!(f, "{prefix}.tau = {t}")?,
                None => writeln!(f, "{prefix}.tau = none")?,
            }
            writeln!(f, "{prefix}.st = {}", s.st)?;
            writeln!(f, "{prefix}.lambda3d = {}", s.lambda3d)?;
            writeln!(f, "{prefix}.beta = {}", s.beta)?;
            let t = match s.transform.spatial {
                SpatialTransform::Bior15 => "bior1.5",
                SpatialTransform::Dct => "dct",
            };
            writeln!(f, "{prefix}.transform = {t}")?;
        }
        Ok(())
    }
}

/// Variant switches: flow-guided search and two-frame patches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineMode {
    pub guided: bool,
    pub st_patches: bool,
    pub flows: Option<FlowSequence>,
}

impl PipelineMode {
    pub fn plain() -> Self {
        Self::default()
    }

    pub fn st() -> Self {
        Self {
            st_patches: true,
            ..Self::default()
        }
    }

    pub fn guided(flows: FlowSequence) -> Self {
        Self {
            guided: true,
            st_patches: false,
            flows: Some(flows),
        }
    }

    pub fn st_guided(flows: FlowSequence) -> Self {
        Self {
            st_patches: true,
            ..Self::guided(flows)
        }
    }

    pub fn validate(&self, v: &Video) -> Result<()> {
        match (&self.flows, self.guided) {
            (None, true) => Err(Error::Config("guided search needs optical flows".into())),
            (Some(f), true) => f.check_video(v),
            _ => Ok(()),
        }
    }

    /// Patch extent actually used on a `frames`-long video.
    pub fn patch_for(&self, step: &StepParams, frames: usize) -> PatchSpec {
        let kt = if self.st_patches { 2 } else { step.patch.kt };
        PatchSpec {
            k: step.patch.k,
            kt: kt.min(frames),
        }
    }
}

/// Reference positions `0, st, 2 st, ...` along an axis whose last valid
/// position is `max`, with `max` appended when the step skips it.
pub fn grid(max: usize, st: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (0..=max).step_by(st.max(1)).collect();
    if g.last() != Some(&max) {
        g.push(max);
    }
    g
}

/// All reference coordinates of a step in processing order.
pub fn reference_grid(v: &Video, spec: PatchSpec, st: usize) -> Vec<PatchCoord> {
    let xs = grid(v.width() - spec.k, st);
    let ys = grid(v.height() - spec.k, st);
    let mut refs = Vec::with_capacity(xs.len() * ys.len() * v.frames());
    for t in 0..=v.frames() - spec.kt {
        for &y in &ys {
            for &x in &xs {
                refs.push(PatchCoord::new(x, y, t));
            }
        }
    }
    refs
}

fn check_inputs(v: &Video, step: &StepParams, sigma: f64, mode: &PipelineMode) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    step.validate()?;
    if v.width() < step.patch.k || v.height() < step.patch.k {
        return Err(Error::Config(format!(
            "{}x{} frames are smaller than the {}x{} patch",
            v.width(),
            v.height(),
            step.patch.k,
            step.patch.k
        )));
    }
    mode.validate(v)
}

fn find(
    src: &Video,
    reference: PatchCoord,
    params: &SearchParams,
    spec: PatchSpec,
    mode: &PipelineMode,
) -> Result<Vec<PatchCoord>> {
    let list = match (&mode.flows, mode.guided) {
        (Some(flows), true) => flow::guided_search(src, reference, params, spec, flows)?,
        _ => search::predictive_search(src, reference, params, spec)?,
    };
    Ok(list.coords())
}

fn run_step<F>(v: &Video, step: &StepParams, spec: PatchSpec, filter: F) -> Result<Video>
where
    F: Fn(PatchCoord) -> Result<ShrinkResult> + Sync,
{
    let window = KaiserWindow::new(spec.k, step.beta)?;
    let refs = reference_grid(v, spec, step.st);
    let mut acc = AggBuffer::for_video(v);
    for batch in refs.chunks(BATCH) {
        let results: Vec<ShrinkResult> = batch.par_iter().map(|&r| filter(r)).collect::<Result<_>>()?;
        for r in &results {
            acc.aggregate(r, &window)?;
        }
    }
    acc.normalize(v)
}

/// Hard-thresholding step: groups are searched in and taken from `v`.
pub fn step1(v: &Video, sigma: f64, p: &ParamProfile, mode: &PipelineMode) -> Result<Video> {
    let step = &p.step1;
    check_inputs(v, step, sigma, mode)?;
    let spec = mode.patch_for(step, v.frames());
    let plan = TransformPlan::new(spec, step.transform)?;
    let params = step.search_for(spec);
    run_step(v, step, spec, |r| {
        let coords = find(v, r, &params, spec, mode)?;
        let g = GroupStack::from_video(v, &coords, spec);
        ht_shrink(&g, &plan, sigma, step.lambda3d, DcConvention::Single)
    })
}

/// Wiener step: groups are searched in `basic`, and the noisy group is
/// filtered with attenuations from the co-located basic group.
pub fn step2(v: &Video, basic: &Video, sigma: f64, p: &ParamProfile, mode: &PipelineMode) -> Result<Video> {
    let step = &p.step2;
    check_inputs(v, step, sigma, mode)?;
    if !v.same_shape(basic) {
        return Err(Error::InvalidInput("noisy video and basic estimate differ in shape".into()));
    }
    let spec = mode.patch_for(step, v.frames());
    let plan = TransformPlan::new(spec, step.transform)?;
    let params = step.search_for(spec);
    run_step(v, step, spec, |r| {
        let coords = find(basic, r, &params, spec, mode)?;
        let noisy = GroupStack::from_video(v, &coords, spec);
        let oracle = GroupStack::from_video(basic, &coords, spec);
        wiener_shrink(&noisy, &oracle, &plan, sigma)
    })
}

/// Both steps; returns `(basic, final)`.
pub fn denoise(v: &Video, sigma: f64, p: &ParamProfile, mode: &PipelineMode) -> Result<(Video, Video)> {
    let basic = step1(v, sigma, p, mode)?;
    let fin = step2(v, &basic, sigma, p, mode)?;
    Ok((basic, fin))
}
