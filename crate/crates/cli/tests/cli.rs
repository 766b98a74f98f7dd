use std::path::Path;
use std::process::{Command, Output};

use vbm3d::flow::load_flo;
use vbm3d::vidio::{add_awgn, load_sequence, save_sequence, NoiseSpec, Video};
use vbm3d_cli::{normalize_args, parse_manifest, BenchMode};

fn vbm3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vbm3d")).args(args).output().unwrap()
}

fn texture(w: usize, h: usize, frames: usize) -> Video {
    Video::from_fn(w, h, frames, |x, y, t| {
        let (x, y) = (x as f64 + t as f64, y as f64);
        128.0 + 60.0 * (0.4 * x).sin() * (0.3 * y).cos() + 30.0 * (0.17 * (x + 2.0 * y)).sin()
    })
    .unwrap()
}

fn write_clip(dir: &Path, name: &str, v: &Video) -> String {
    let pattern = dir.join(format!("{name}_%02d.png"));
    let pattern = pattern.to_str().unwrap().to_string();
    save_sequence(v, &pattern, 1).unwrap();
    pattern
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn single_dash_long_flags_are_rewritten() {
    let out = normalize_args(["vbm3d", "-sigma", "20", "-i", "-5", "--st", "-f"]);
    let out: Vec<_> = out.iter().map(|s| s.to_str().unwrap()).collect();
    assert_eq!(out, ["vbm3d", "--sigma", "20", "-i", "-5", "--st", "-f"]);
}

#[test]
fn manifest_resolves_relative_paths() {
    let m = parse_manifest("# clips\nfoo a/%03d.png 1 3\n\nbar /abs/%d.png 0 0 # x\n", Path::new("/data")).unwrap();
    assert_eq!(m.len(), 2);
    assert_eq!(m[0].pattern, "/data/a/%03d.png");
    assert_eq!((m[1].name.as_str(), m[1].pattern.as_str(), m[1].first, m[1].last), ("bar", "/abs/%d.png", 0, 0));
    assert!(parse_manifest("foo a.png 1\n", Path::new(".")).is_err());
    assert!(parse_manifest("# nothing\n", Path::new(".")).is_err());
}

#[test]
fn bench_mode_labels() {
    let labels: Vec<_> = ["plain", "st", "of", "st+of", "ms", "st+of+ms"]
        .iter()
        .map(|m| BenchMode::parse(m).unwrap().label())
        .collect();
    assert_eq!(labels, ["VBM3D", "VBM3D ST", "VBM3D OF", "VBM3D ST+OF", "VBM3D MS", "VBM3D ST+OF+MS"]);
    assert!(BenchMode::parse("fast").is_err());
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(vbm3d(&["--help"]).status.code(), Some(0));
    assert_eq!(vbm3d(&["--version"]).status.code(), Some(0));
}

#[test]
fn exit_codes_distinguish_config_from_io() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = write_clip(dir.path(), "c", &texture(16, 16, 2));
    let out = dir.path().join("o_%02d.png");
    let out = out.to_str().unwrap();

    // Missing sequence.
    let missing = dir.path().join("nope_%02d.png");
    let o = vbm3d(&["denoise", "-i", missing.to_str().unwrap(), "-f", "1", "-l", "2", "-sigma", "10", "-o", out]);
    assert_eq!(o.status.code(), Some(2));

    // A profile that is neither built in nor an existing file.
    let o = vbm3d(&["denoise", "-i", &pattern, "-f", "1", "-l", "2", "-o", out, "--sigma", "10", "--profile", "no-such-profile"]);
    assert_eq!(o.status.code(), Some(2));

    // Bad parameters.
    let bad_profile = dir.path().join("bad.profile");
    std::fs::write(&bad_profile, "name = bad\nstep1.k = 8\n").unwrap();
    let bad_profile = bad_profile.to_str().unwrap();
    for extra in [
        &["--sigma", "-3"][..],
        &["--sigma", "10", "--profile", bad_profile],
        &["--sigma", "10", "--of"],
        &["--sigma", "10", "--ms", "wavelet"],
    ] {
        let mut args = vec!["denoise", "-i", &pattern, "-f", "1", "-l", "2", "-o", out];
        args.extend_from_slice(extra);
        assert_eq!(vbm3d(&args).status.code(), Some(1), "{extra:?}");
    }
    assert_eq!(vbm3d(&["denoise", "--bogus"]).status.code(), Some(1));
}

#[test]
fn psnr_of_identical_sequences_is_inf() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = write_clip(dir.path(), "c", &texture(12, 10, 2));
    let o = vbm3d(&["psnr", "-i", &pattern, "--ref", &pattern, "-f", "1", "-l", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "inf");
}

#[test]
fn noise_then_denoise_improves_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write_clip(dir.path(), "clean", &texture(32, 32, 3));
    let noisy = dir.path().join("noisy_%02d.png");
    let noisy = noisy.to_str().unwrap();
    let o = vbm3d(&["noise", "-i", &clean, "-f", "1", "-l", "3", "--sigma", "20", "--seed", "7", "-o", noisy]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let den = dir.path().join("den_%02d.png");
    let basic = dir.path().join("basic_%02d.png");
    let o = vbm3d(&[
        "denoise", "-i", noisy, "-f", "1", "-l", "3", "-sigma", "20",
        "-o", den.to_str().unwrap(), "--basic", basic.to_str().unwrap(), "--ref", &clean, "--threads", "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    let nums: Vec<f64> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
    assert_eq!(nums.len(), 3, "{line}");
    assert!(nums[1] > nums[0] + 3.0 && nums[2] > nums[0] + 3.0, "{line}");
    assert_eq!(load_sequence(basic.to_str().unwrap(), 1, 3).unwrap().frames(), 3);
}

#[test]
fn flow_bm_writes_loadable_low_resolution_flows() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = write_clip(dir.path(), "c", &texture(32, 24, 3));
    let f = dir.path().join("fw_%02d.flo");
    let b = dir.path().join("bw_%02d.flo");
    let (f, b) = (f.to_str().unwrap(), b.to_str().unwrap());
    let o = vbm3d(&["flow-bm", "-i", &pattern, "-f", "1", "-l", "3", "--fflow", f, "--bflow", b]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fw = load_flo(&dir.path().join("fw_01.flo")).unwrap();
    assert_eq!((fw.width, fw.height), (8, 6));
    assert!(load_flo(&dir.path().join("bw_03.flo")).is_ok());

    // The written flows feed straight back into guided denoising.
    let noisy = add_awgn(&texture(32, 24, 3), NoiseSpec::new(15.0, 3).unwrap());
    let noisy_pat = write_clip(dir.path(), "n", &noisy);
    let out = dir.path().join("o_%02d.png");
    let o = vbm3d(&[
        "denoise", "-i", &noisy_pat, "-f", "1", "-l", "3", "--sigma", "15", "-o", out.to_str().unwrap(),
        "--of", "--fflow", f, "--bflow", b, "--st",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_csv_is_reproducible_and_marks_missing_sequences() {
    let dir = tempfile::tempdir().unwrap();
    write_clip(dir.path(), "a", &texture(24, 24, 2));
    std::fs::write(dir.path().join("m.txt"), "a a_%02d.png 1 2\ngone gone_%02d.png 1 2\n").unwrap();
    let manifest = dir.path().join("m.txt");
    let run = |threads: &str, out: &str| {
        let out = dir.path().join(out);
        let o = vbm3d(&[
            "bench", "--manifest", manifest.to_str().unwrap(), "--sigmas", "20", "--modes", "plain,st+of",
            "--seed", "5", "--threads", threads, "-o", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("gone"));
        std::fs::read(out).unwrap()
    };
    let one = run("1", "one.csv");
    assert_eq!(one, run("3", "three.csv"));
    let text = String::from_utf8(one).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "sigma,mode,a,gone,average");
    assert!(lines[1].starts_with("20,VBM3D,") && lines[1].contains(",NA,"), "{text}");
    assert!(lines[2].starts_with("20,VBM3D ST+OF,"), "{text}");
    let fields: Vec<_> = lines[1].split(',').collect();
    assert_eq!(fields[2], fields[4]);
}
