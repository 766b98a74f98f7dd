//! Command-line front end: denoising, noise synthesis, PSNR, block-matching
//! flows and the ablation bench.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for I/O and file
//! format errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use vbm3d::flow::{estimate_flows, estimate_flows_lowres, BlockMatchingConfig, FlowSequence};
use vbm3d::msdenoise::{ms_denoise_full, Pyramid, PyramidKind};
use vbm3d::pipeline::{denoise, ParamProfile, PipelineMode};
use vbm3d::vidio::{add_awgn, load_sequence, psnr, save_sequence, NoiseSpec, Video};
use vbm3d::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "vbm3d", version, about = "VBM3D video denoising")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Denoise a frame sequence.
    Denoise(DenoiseArgs),
    /// Run the ablation bench over a manifest of clean sequences and print CSV.
    Bench(BenchArgs),
    /// PSNR between two sequences.
    Psnr(PsnrArgs),
    /// Add seeded white Gaussian noise to a sequence.
    Noise(NoiseArgs),
    /// Estimate forward and backward flows by block matching.
    FlowBm(FlowBmArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SequenceArgs {
    /// Input path pattern, e.g. frames/%03d.png
    #[arg(short = 'i', long = "input")]
    pub input: String,
    /// First frame index.
    #[arg(short = 'f', long = "first")]
    pub first: usize,
    /// Last frame index (inclusive).
    #[arg(short = 'l', long = "last")]
    pub last: usize,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    #[command(flatten)]
    pub seq: SequenceArgs,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: f64,
    /// Output pattern for the final estimate.
    #[arg(short = 'o', long = "output")]
    pub output: String,
    /// Output pattern for the basic estimate.
    #[arg(long)]
    pub basic: Option<String>,
    /// Profile name (np) or path to a profile file.
    #[arg(long, default_value = "np")]
    pub profile: String,
    /// Two-frame patches.
    #[arg(long)]
    pub st: bool,
    /// Flow-guided search.
    #[arg(long)]
    pub of: bool,
    /// Forward flow pattern, indexed by source frame (first..last-1).
    #[arg(long)]
    pub fflow: Option<String>,
    /// Backward flow pattern, indexed by source frame (first+1..last).
    #[arg(long)]
    pub bflow: Option<String>,
    /// Estimate flows with the built-in block matcher.
    #[arg(long = "flow-bm")]
    pub flow_bm: bool,
    /// Resolution divisor of the flow files (full-size files are also accepted).
    #[arg(long = "flow-scale", default_value_t = 4)]
    pub flow_scale: usize,
    /// Multiscale pyramid: dct or lanczos.
    #[arg(long)]
    pub ms: Option<String>,
    /// Number of pyramid levels.
    #[arg(long, default_value_t = 2)]
    pub scales: usize,
    /// Recomposition cutoff.
    #[arg(long, default_value_t = 1.0)]
    pub frec: f64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Clean reference pattern; prints PSNR of both estimates.
    #[arg(long = "ref")]
    pub reference: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Manifest: one `name pattern first last` line per sequence, `#` comments.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    pub sigmas: Vec<f64>,
    /// Comma-separated modes: plain, st, of, st+of, ms, st+of+ms.
    #[arg(long, value_delimiter = ',', default_value = "plain")]
    pub modes: Vec<String>,
    /// Noise seed; sequence `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "np")]
    pub profile: String,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the CSV here instead of standard output.
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PsnrArgs {
    #[command(flatten)]
    pub seq: SequenceArgs,
    /// Pattern of the sequence to compare against.
    #[arg(long = "ref")]
    pub reference: String,
    #[arg(long, default_value_t = 255.0)]
    pub peak: f64,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub seq: SequenceArgs,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'o', long = "output")]
    pub output: String,
}

#[derive(Args, Debug)]
pub struct FlowBmArgs {
    #[command(flatten)]
    pub seq: SequenceArgs,
    /// Output pattern for forward flows.
    #[arg(long)]
    pub fflow: String,
    /// Output pattern for backward flows.
    #[arg(long)]
    pub bflow: String,
    /// Resolution divisor of the written flows.
    #[arg(long = "flow-scale", default_value_t = 4)]
    pub flow_scale: usize,
    /// Block side at the decimated resolution.
    #[arg(long, default_value_t = 4)]
    pub block: usize,
    /// Search radius at the decimated resolution.
    #[arg(long, default_value_t = 4)]
    pub radius: usize,
}

/// Rewrites single-dash long flags (`-sigma`) to their double-dash form.
pub fn normalize_args<I, T>(args: I) -> Vec<OsString>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    args.into_iter()
        .map(|a| {
            let a: OsString = a.into();
            match a.to_str() {
                Some(s) if s.len() > 2 && s.starts_with('-') && !s.starts_with("--") && s[1..].starts_with(|c: char| c.is_ascii_alphabetic()) => {
                    OsString::from(format!("-{s}"))
                }
                _ => a,
            }
        })
        .collect()
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        2
    } else {
        1
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(f),
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Denoise(a) => cmd_denoise(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Psnr(a) => cmd_psnr(&a),
        Command::Noise(a) => cmd_noise(&a),
        Command::FlowBm(a) => cmd_flow_bm(&a),
    }
}

fn load(seq: &SequenceArgs) -> Result<Video> {
    if seq.last < seq.first {
        return Err(Error::Config(format!("last ({}) is before first ({})", seq.last, seq.first)));
    }
    load_sequence(&seq.input, seq.first, seq.last)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn cmd_denoise(a: &DenoiseArgs) -> Result<()> {
    check_sigma(a.sigma)?;
    let profile = ParamProfile::resolve(&a.profile)?;
    let pyramid = a
        .ms
        .as_deref()
        .map(|k| PyramidKind::new(k.parse::<Pyramid>()?, a.scales, a.frec))
        .transpose()?;
    if a.of && !a.flow_bm && (a.fflow.is_none() || a.bflow.is_none()) {
        return Err(Error::Config("--of needs --fflow and --bflow, or --flow-bm".into()));
    }
    if a.flow_scale == 0 {
        return Err(Error::Config("--flow-scale must be >= 1".into()));
    }
    let noisy = load(&a.seq)?;
    let reference = a
        .reference
        .as_deref()
        .map(|p| load_sequence(p, a.seq.first, a.seq.last))
        .transpose()?;

    let (basic, fin) = with_threads(a.threads, || {
        let flows = if !a.of {
            None
        } else if let (Some(f), Some(b), false) = (&a.fflow, &a.bflow, a.flow_bm) {
            Some(FlowSequence::load(
                f,
                b,
                a.seq.first,
                a.seq.last,
                noisy.width(),
                noisy.height(),
                a.flow_scale,
            )?)
        } else {
            let cfg = BlockMatchingConfig {
                scale: a.flow_scale,
                ..BlockMatchingConfig::default()
            };
            Some(estimate_flows(&noisy, cfg)?)
        };
        let mode = PipelineMode {
            guided: a.of,
            st_patches: a.st,
            flows,
        };
        match &pyramid {
            Some(pyr) => ms_denoise_full(&noisy, a.sigma, &profile, &mode, pyr),
            None => denoise(&noisy, a.sigma, &profile, &mode),
        }
    })?;

    save_sequence(&fin, &a.output, a.seq.first)?;
    if let Some(p) = &a.basic {
        save_sequence(&basic, p, a.seq.first)?;
    }
    if let Some(clean) = &reference {
        println!(
            "psnr noisy {} basic {} final {}",
            format_db(psnr(clean, &noisy, 255.0)?),
            format_db(psnr(clean, &basic, 255.0)?),
            format_db(psnr(clean, &fin, 255.0)?)
        );
    }
    Ok(())
}

pub fn cmd_psnr(a: &PsnrArgs) -> Result<()> {
    let v = load(&a.seq)?;
    let r = load_sequence(&a.reference, a.seq.first, a.seq.last)?;
    if !v.same_shape(&r) {
        return Err(Error::Format("sequences differ in size".into()));
    }
    println!("{}", format_db(psnr(&v, &r, a.peak)?));
    Ok(())
}

pub fn cmd_noise(a: &NoiseArgs) -> Result<()> {
    check_sigma(a.sigma)?;
    let v = load(&a.seq)?;
    let noisy = add_awgn(&v, NoiseSpec::new(a.sigma, a.seed)?);
    save_sequence(&noisy, &a.output, a.seq.first)
}

pub fn cmd_flow_bm(a: &FlowBmArgs) -> Result<()> {
    if a.flow_scale == 0 || a.block == 0 {
        return Err(Error::Config("--flow-scale and --block must be >= 1".into()));
    }
    let v = load(&a.seq)?;
    let cfg = BlockMatchingConfig {
        scale: a.flow_scale,
        block: a.block,
        radius: a.radius,
    };
    estimate_flows_lowres(&v, cfg)?.save(&a.fflow, &a.bflow, a.seq.first)
}

// =============================================================================
// Bench
// =============================================================================

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub pattern: String,
    pub first: usize,
    pub last: usize,
}

/// Parses manifest text; relative patterns are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Config(format!("manifest line {}: expected `name pattern first last`", i + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        let pattern = if Path::new(f[1]).is_absolute() {
            f[1].to_string()
        } else {
            base.join(f[1]).to_string_lossy().into_owned()
        };
        out.push(ManifestEntry {
            name: f[0].to_string(),
            pattern,
            first: f[2].parse().map_err(|_| bad())?,
            last: f[3].parse().map_err(|_| bad())?,
        });
    }
    if out.is_empty() {
        return Err(Error::Config("manifest lists no sequences".into()));
    }
    Ok(out)
}

/// A bench configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    Plain,
    St,
    Of,
    StOf,
    Ms,
    StOfMs,
}

impl BenchMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" | "vbm3d" => Ok(Self::Plain),
            "st" => Ok(Self::St),
            "of" => Ok(Self::Of),
            "st+of" => Ok(Self::StOf),
            "ms" => Ok(Self::Ms),
            "st+of+ms" => Ok(Self::StOfMs),
            other => Err(Error::Config(format!("unknown bench mode {other:?}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Plain => "VBM3D",
            Self::St => "VBM3D ST",
            Self::Of => "VBM3D OF",
            Self::StOf => "VBM3D ST+OF",
            Self::Ms => "VBM3D MS",
            Self::StOfMs => "VBM3D ST+OF+MS",
        }
    }

    fn needs_flows(self) -> bool {
        matches!(self, Self::Of | Self::StOf | Self::StOfMs)
    }

    /// Final estimate of `noisy` in this configuration. Flows come from the
    /// built-in block matcher run on the noisy sequence.
    pub fn run(self, noisy: &Video, sigma: f64, p: &ParamProfile) -> Result<Video> {
        let flows = if self.needs_flows() {
            Some(estimate_flows(noisy, BlockMatchingConfig::default())?)
        } else {
            None
        };
        let mode = PipelineMode {
            guided: flows.is_some(),
            st_patches: matches!(self, Self::St | Self::StOf | Self::StOfMs),
            flows,
        };
        match self {
            Self::Ms => ms_denoise_full(noisy, sigma, p, &mode, &PyramidKind::new(Pyramid::Lanczos, 3, 0.6)?).map(|r| r.1),
            Self::StOfMs => {
                ms_denoise_full(noisy, sigma, p, &mode, &PyramidKind::new(Pyramid::Lanczos, 2, 1.0)?).map(|r| r.1)
            }
            _ => denoise(noisy, sigma, p, &mode).map(|r| r.1),
        }
    }
}

/// Runs the bench and returns the CSV text.
pub fn bench_csv(
    entries: &[ManifestEntry],
    sigmas: &[f64],
    modes: &[BenchMode],
    seed: u64,
    profile: &ParamProfile,
) -> Result<String> {
    let clips: Vec<Option<Video>> = entries
        .iter()
        .map(|e| match load_sequence(&e.pattern, e.first, e.last) {
            Ok(v) => Some(v),
            Err(err) => {
                eprintln!("warning: sequence {} unavailable ({err}); reported as NA", e.name);
                None
            }
        })
        .collect();
    let mut csv = String::from("sigma,mode");
    for e in entries {
        write!(csv, ",{}", e.name).unwrap();
    }
    csv.push_str(",average\n");
    for &sigma in sigmas {
        check_sigma(sigma)?;
        for &mode in modes {
            write!(csv, "{sigma},{}", mode.label()).unwrap();
            let mut values = Vec::new();
            for (i, clip) in clips.iter().enumerate() {
                match clip {
                    Some(clean) => {
                        let noisy = add_awgn(clean, NoiseSpec::new(sigma, seed.wrapping_add(i as u64))?);
                        let out = mode.run(&noisy, sigma, profile)?;
                        let value = psnr(clean, &out, 255.0)?;
                        values.push(value);
                        write!(csv, ",{value:.2}").unwrap();
                    }
                    None => csv.push_str(",NA"),
                }
            }
            if values.is_empty() {
                csv.push_str(",NA\n");
            } else {
                writeln!(csv, ",{:.2}", values.iter().sum::<f64>() / values.len() as f64).unwrap();
            }
        }
    }
    Ok(csv)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|source| Error::Io {
        path: a.manifest.clone(),
        source,
    })?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base)?;
    let modes = a.modes.iter().map(|m| BenchMode::parse(m)).collect::<Result<Vec<_>>>()?;
    if a.sigmas.is_empty() || modes.is_empty() {
        return Err(Error::Config("bench needs at least one sigma and one mode".into()));
    }
    let profile = ParamProfile::resolve(&a.profile)?;
    let csv = with_threads(a.threads, || bench_csv(&entries, &a.sigmas, &modes, a.seed, &profile))?;
    match &a.output {
        Some(path) => std::fs::write(path, csv).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(csv.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}
