use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use metaspectrum::config::{PipelineConfig, Sampling};
use metaspectrum::decoder::{Denoiser, Prior};
use metaspectrum::pipeline::{self, DECODED_FILE, FRAMES_FILE, REPORT_FILE, TRUTH_FILE};

#[derive(Parser)]
#[command(name = "metaspectrum", version, about = "Compress, decode and analyse RIS-coded sensing spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Decoder seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    codebook_seed: Option<u64>,
    #[arg(long, global = true)]
    codebook_bits: Option<u32>,
    /// Frames fused into one MetaSpectrum
    #[arg(long, global = true)]
    t_frames: Option<usize>,
    #[arg(long, global = true)]
    shift_d: Option<usize>,
    #[arg(long, global = true, value_parser = ["hash", "uniform"])]
    sampling: Option<String>,
    #[arg(long, global = true, value_parser = ["sd", "tv"])]
    denoiser: Option<String>,
    #[arg(long, global = true, value_parser = ["conv", "none"])]
    prior: Option<String>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate CFR frames from a scene file
    Simulate {
        /// Scene file (defaults to the configured scene)
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Seconds to capture (defaults to t_frames x segment_len / rate)
        #[arg(long)]
        duration: Option<f64>,
        /// Capture rate in Hz
        #[arg(long)]
        rate: Option<f64>,
        /// Output container (defaults to <out-dir>/frames.mspc)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mask the frames and keep one per segment
    Sample,
    /// Fuse the sampled frames into a MetaSpectrum pair
    Encode,
    /// Recover the frames from the MetaSpectrum pair
    Decode,
    /// Joint angle and delay estimation on the decoded frames
    Estimate,
    /// Score decoded frames against the truth
    Metrics {
        #[arg(long)]
        decoded: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run every stage and write report.json
    Pipeline,
}

fn load_config(o: &Overrides) -> Result<PipelineConfig> {
    let mut cfg = match &o.config {
        Some(path) => PipelineConfig::read(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = o.seed {
        cfg.decode.seed = v;
    }
    if let Some(v) = o.codebook_seed {
        cfg.codebook_seed = v;
    }
    if let Some(v) = o.codebook_bits {
        cfg.codebook_bits = v;
    }
    if let Some(v) = o.t_frames {
        cfg.t_frames = v;
    }
    if let Some(v) = o.shift_d {
        cfg.shift_d = v;
    }
    if let Some(v) = &o.sampling {
        cfg.sampling = v.parse::<Sampling>()?;
    }
    if let Some(v) = &o.denoiser {
        cfg.decode.denoiser = v.parse::<Denoiser>()?;
    }
    if let Some(v) = &o.prior {
        cfg.decode.prior = v.parse::<Prior>()?;
    }
    if let Some(v) = &o.out_dir {
        cfg.out_dir = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.overrides)?;
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    match cli.command {
        Command::Simulate {
            scene,
            duration,
            rate,
            out,
        } => {
            let scene = scene
                .or_else(|| cfg.scene.clone())
                .context("no scene file given (use --scene or set scene in the config)")?;
            let out = out.unwrap_or_else(|| cfg.out_dir.join(FRAMES_FILE));
            let rate = rate.unwrap_or(cfg.rate);
            let duration = duration.unwrap_or(cfg.captured_frames() as f64 / rate);
            let n = pipeline::cmd_simulate(&scene, duration, rate, cfg.start, &out)?;
            println!("{n} frames -> {}", out.display());
        }
        Command::Sample => {
            let s = pipeline::cmd_sample(&cfg)?;
            println!("selected frames {:?}", s.indices);
        }
        Command::Encode => {
            let meta = pipeline::cmd_encode(&cfg)?;
            println!("MetaSpectrum {} x {}", meta.z_amp.nrows(), meta.z_amp.ncols());
        }
        Command::Decode => {
            let out = pipeline::cmd_decode(&cfg)?;
            if let Some(last) = out.trace.last() {
                println!(
                    "{} iterations, objective {:.4e} / {:.4e}",
                    last.iter, last.objective_amp, last.objective_phase
                );
            }
        }
        Command::Estimate => {
            let est = pipeline::cmd_estimate(&cfg)?;
            print!("{}", pipeline::peaks_csv(&est.peaks));
        }
        Command::Metrics { decoded, truth } => {
            let decoded = decoded.unwrap_or_else(|| cfg.out_dir.join(DECODED_FILE));
            let truth = truth.unwrap_or_else(|| cfg.out_dir.join(TRUTH_FILE));
            let report = pipeline::cmd_metrics(&decoded, &truth, &cfg)?;
            let json = report.to_json();
            metaspectrum::container::write_atomic(&cfg.out_dir.join(REPORT_FILE), json.as_bytes())?;
            println!("{json}");
        }
        Command::Pipeline => {
            let report = pipeline::cmd_pipeline(&cfg)?;
            println!("{}", report.to_json());
            eprintln!("wall time {:.1} s", report.wall_time);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
