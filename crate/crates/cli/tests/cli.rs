use std::path::Path;
use std::process::{Command, Output};

const SCENE: &str = "m = 4\nn = 3\nsubcarriers = 32\ncenter_frequency = 5.805e9\nbandwidth = 160e6\npath = 1.0,0.0,24e-9,0.75,0.73\n";

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metaspectrum"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.scene"), SCENE).unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "scene = s.scene\nt_frames = 2\nsegment_len = 2\nsources = 1\nouter_iters = 2\ninner_iters = 10\ntheta_iters = 10\nout_dir = out\n",
    )
    .unwrap();
    dir
}

#[test]
fn pipeline_prints_the_report_and_writes_artifacts() {
    let dir = setup();
    let out = cli(dir.path(), &["--config", "run.cfg", "pipeline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"psnr_amp\""), "{stdout}");
    assert!(stdout.contains("\"hamming_trace\""), "{stdout}");
    for f in ["frames.mspc", "meta.mspc", "decoded.mspc", "music.mspc", "trace.csv", "report.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = setup();
    let out = cli(dir.path(), &["--config", "run.cfg", "--out-dir", "elsewhere", "--sampling", "uniform", "pipeline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("elsewhere/report.json").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn simulate_writes_the_requested_frames() {
    let dir = setup();
    let out = cli(dir.path(), &["simulate", "--scene", "s.scene", "--duration", "0.05", "--rate", "100", "--out", "sim/frames.mspc"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("sim/frames.mspc").exists());
}

#[test]
fn errors_exit_nonzero_with_context() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.cfg"), "t_frames = 2\nbogus = 1\n").unwrap();
    let out = cli(dir.path(), &["--config", "bad.cfg", "pipeline"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("bad.cfg:2"), "{stderr}");
    assert!(stderr.contains("bogus"), "{stderr}");

    let out = cli(dir.path(), &["--config", "run.cfg", "decode"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("meta.mspc"));
}
