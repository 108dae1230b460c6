//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path as FsPath;
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metaspectrum::codebook::gen_codebook;
use metaspectrum::codec::{compression_ratio, differential_decode, differential_encode, encode, SensingOperator};
use metaspectrum::config::{PipelineConfig, Sampling};
use metaspectrum::decoder::generator::{Layer, Network, Shape};
use metaspectrum::music::{argmax, find_peaks, music_spectrum, Peak, SteeringGrid};
use metaspectrum::pipeline::{self, array_model, decode_meta, run_pipeline, steering_grid, PipelineRun};
use metaspectrum::scene::{apply_ris, gen_cfr, parse_scene, MultipathScene, SpectrumPair};

const DESK_SCENE: &str = "
m = 4
n = 3
subcarriers = 64
center_frequency = 5.805e9
bandwidth = 160e6
path = 1.0,0.0,24e-9,0.7504915783575618,0.7330382858376184
path = 0.3241813835208838,0.5048825908847379,57e-9,1.117010721276371,0.9250245035569946
";

const SINGLE_PATH_SCENE: &str = "
m = 4
n = 3
subcarriers = 64
center_frequency = 5.805e9
bandwidth = 160e6
path = 1.0,0.0,24e-9,0.7504915783575618,0.7330382858376184
";

// The second path jumps between two poses partway through five segments.
const BURSTY_SCENE: &str = "
m = 4
n = 3
subcarriers = 64
center_frequency = 5.805e9
bandwidth = 160e6
path = 1.0,0.0,24e-9,0.7504915783575618,0.7330382858376184
path = 0.3241813835208838,0.5048825908847379,57e-9,1.117010721276371,0.9250245035569946
at = 0.14
path = 1.0,0.0,24e-9,0.7504915783575618,0.7330382858376184
path = 0.3241813835208838,0.5048825908847379,40e-9,0.4363323129985824,0.3490658503988659
at = 0.36
path = 1.0,0.0,24e-9,0.7504915783575618,0.7330382858376184
path = 0.3241813835208838,0.5048825908847379,57e-9,1.117010721276371,0.9250245035569946
at = 0.57
path = 1.0,0.0,24e-9,0.7504915783575618,0.7330382858376184
path = 0.3241813835208838,0.5048825908847379,40e-9,0.4363323129985824,0.3490658503988659
at = 0.73
path = 1.0,0.0,24e-9,0.7504915783575618,0.7330382858376184
path = 0.3241813835208838,0.5048825908847379,57e-9,1.117010721276371,0.9250245035569946
at = 0.95
path = 1.0,0.0,24e-9,0.7504915783575618,0.7330382858376184
path = 0.3241813835208838,0.5048825908847379,40e-9,0.4363323129985824,0.3490658503988659
";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn desk_config(sources: usize) -> PipelineConfig {
    PipelineConfig {
        t_frames: 10,
        segment_len: 10,
        rate: 100.0,
        shift_d: 1,
        codebook_seed: 7,
        sources,
        ..Default::default()
    }
}

fn scene(text: &str) -> MultipathScene {
    parse_scene(text, "acceptance").expect("scene text parses")
}

fn moving_average(v: &[f64], w: usize) -> Vec<f64> {
    v.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect()
}

type DiffPair = (Array2<f64>, Array2<f64>);

fn max_rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

// 1 ----------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rho = compression_ratio(20, 1, 2048);
    let elapsed = start.elapsed();
    // 1/20 + (19/20) / 2048, written out
    let want = 0.05 + 0.95 / 2048.0;
    let reduction = 1.0 - rho;
    let pass = (rho - want).abs() < 1e-15
        && format!("{rho:.6}") == "0.050464"
        && reduction >= 0.949
        && elapsed < Duration::from_millis(1);
    outcome(pass, format!("rho = {rho:.9}, reduction = {:.3}%, {elapsed:?}", reduction * 100.0))
}

// 2 ----------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for case in 0..100u64 {
        let k = rng.random_range(16..=128);
        let l = rng.random_range(4..=16);
        let t = rng.random_range(2..=20);
        let d = rng.random_range(1..=2);
        let cb = gen_codebook(k, l, t, 4, 1000 + case).unwrap();
        let truth: Vec<SpectrumPair> = (0..t)
            .map(|_| {
                SpectrumPair::new(
                    Array2::from_shape_simple_fn((k, l), || rng.random_range(0.05..2.0)),
                    Array2::from_shape_simple_fn((k, l), || rng.random_range(-20.0..20.0)),
                )
                .unwrap()
            })
            .collect();
        let masked: Vec<SpectrumPair> = truth
            .iter()
            .enumerate()
            .map(|(i, p)| apply_ris(p, &cb.amp_masks[i], &cb.phase_masks[i]).unwrap())
            .collect();
        let indices: Vec<usize> = (0..t).collect();
        let meta = encode(&masked, &cb, &indices, d).unwrap();

        // per-frame differential pairs with the RIS amplitude divided out
        let unmasked: Vec<DiffPair> = masked
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let e = differential_encode(p, &cb.amp_masks[i], &cb.phase_masks[i], i).unwrap();
                (&e.amp_diff / &cb.amp_masks[i], &e.phase_diff / &cb.amp_masks[i])
            })
            .collect();
        for (dec, want) in differential_decode(&unmasked).iter().zip(&truth) {
            worst = worst.max(max_rel_err(&dec.amplitude, &want.amplitude));
            worst = worst.max(max_rel_err(&dec.phase, &want.phase));
        }

        // the MetaSpectrum is the shifted sum of those pairs under the masks
        let op = SensingOperator::new(cb.amp_masks.clone(), d).unwrap();
        let stack = |pick: fn(&DiffPair) -> &Array2<f64>| {
            let mut x = Array3::zeros((t, k, l));
            for (i, p) in unmasked.iter().enumerate() {
                x.index_axis_mut(ndarray::Axis(0), i).assign(pick(p));
            }
            x
        };
        worst_sum = worst_sum.max(max_rel_err(&op.forward(&stack(|p| &p.0)).unwrap(), &meta.z_amp));
        worst_sum = worst_sum.max(max_rel_err(&op.forward(&stack(|p| &p.1)).unwrap(), &meta.z_phase));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && worst_sum <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("worst decode error {worst:.2e}, worst MetaSpectrum error {worst_sum:.2e}, {elapsed:.2?}"),
    )
}

// 3 ----------------------------------------------------------------------

/// Block matrix with zero blocks above and below `diag(vec(mask_i))` in
/// block column `i`, vectorizing row-major.
fn dense_phi(masks: &[Array2<f64>], d: usize) -> Array2<f64> {
    let (k, l) = masks[0].dim();
    let t = masks.len();
    let rows = (k + (t - 1) * d) * l;
    let mut phi = Array2::zeros((rows, t * k * l));
    for (i, m) in masks.iter().enumerate() {
        let row0 = i * d * l;
        let col0 = i * k * l;
        for (j, v) in m.iter().enumerate() {
            phi[[row0 + j, col0 + j]] = *v;
        }
    }
    phi
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut instances = 0;
    let mut worst: f64 = 0.0;
    for t in [1usize, 2, 3, 5, 8] {
        for k in [1usize, 2, 4, 7, 16, 32] {
            for l in [1usize, 2, 3, 8] {
                for d in [1usize, 2, 3] {
                    if t * k * l > 512 {
                        continue;
                    }
                    instances += 1;
                    let cb = gen_codebook(k, l, t, 3, rng.random()).unwrap();
                    let op = SensingOperator::new(cb.amp_masks.clone(), d).unwrap();
                    let phi = dense_phi(&cb.amp_masks, d);
                    let x = Array3::from_shape_simple_fn((t, k, l), || rng.random_range(-1.0..1.0));
                    let (zr, zc) = op.output_dim();
                    let z = Array2::from_shape_simple_fn((zr, zc), || rng.random_range(-1.0..1.0));
                    let xv = ndarray::Array1::from_iter(x.iter().copied());
                    let zv = ndarray::Array1::from_iter(z.iter().copied());
                    let fwd = op.forward(&x).unwrap();
                    let adj = op.adjoint(&z).unwrap();
                    let dense_fwd = phi.dot(&xv);
                    let dense_adj = phi.t().dot(&zv);
                    for (a, b) in fwd.iter().zip(dense_fwd.iter()) {
                        worst = worst.max((a - b).abs());
                    }
                    for (a, b) in adj.iter().zip(dense_adj.iter()) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
    }
    let mut worst_inner: f64 = 0.0;
    for _ in 0..1000 {
        let t = rng.random_range(1..=12);
        let k = rng.random_range(1..=64);
        let l = rng.random_range(1..=8);
        let d = rng.random_range(1..=3);
        let cb = gen_codebook(k, l, t, 4, rng.random()).unwrap();
        let op = SensingOperator::new(cb.amp_masks, d).unwrap();
        let x = Array3::from_shape_simple_fn((t, k, l), || rng.random_range(-1.0..1.0));
        let (zr, zc) = op.output_dim();
        let z = Array2::from_shape_simple_fn((zr, zc), || rng.random_range(-1.0..1.0));
        let lhs: f64 = (op.forward(&x).unwrap() * &z).sum();
        let rhs: f64 = (op.adjoint(&z).unwrap() * &x).sum();
        worst_inner = worst_inner.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && worst_inner <= 1e-10 && elapsed < Duration::from_secs(10),
        format!(
            "{instances} dense instances, max deviation {worst:.1e}; 1000 adjoint draws, max relative gap {worst_inner:.1e}; {elapsed:.2?}"
        ),
    )
}

// 4, 5, 6 ----------------------------------------------------------------

struct DeskRuns {
    run: PipelineRun,
    wrong: metaspectrum::decoder::DecodeOutput,
    elapsed: Duration,
}

fn desk_runs() -> DeskRuns {
    let start = Instant::now();
    let cfg = desk_config(2);
    let sc = scene(DESK_SCENE);
    let run = run_pipeline(&sc, &cfg).expect("desk pipeline");
    let wrong_cfg = PipelineConfig {
        decode_codebook_seed: Some(cfg.codebook_seed + 1),
        ..cfg
    };
    let wrong = decode_meta(&run.meta, &wrong_cfg, Some(&run.sampled.truth)).expect("wrong-codebook decode");
    DeskRuns {
        run,
        wrong,
        elapsed: start.elapsed(),
    }
}

fn criterion_4(desk: &DeskRuns) -> Outcome {
    let trace = &desk.run.decoded.trace;
    let wrong = desk.wrong.trace.last().unwrap();
    let right = trace.last().unwrap();
    let gap_amp = right.psnr_amp.unwrap() - wrong.psnr_amp.unwrap();
    let gap_phase = right.psnr_phase.unwrap() - wrong.psnr_phase.unwrap();
    let worst_drop = |pick: fn(&metaspectrum::decoder::TraceRow) -> f64| {
        let ma = moving_average(&trace.iter().map(pick).collect::<Vec<_>>(), 5);
        ma.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max)
    };
    let drop_amp = worst_drop(|r| r.psnr_amp.unwrap());
    let drop_phase = worst_drop(|r| r.psnr_phase.unwrap());
    let pass = gap_amp >= 5.0
        && gap_phase >= 5.0
        && drop_amp <= 0.5
        && drop_phase <= 0.5
        && desk.elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "final PSNR amp {:.2} vs {:.2} dB (gap {gap_amp:.2}), phase {:.2} vs {:.2} dB (gap {gap_phase:.2}); \
             largest 5-iteration moving-average drop {drop_amp:.2} / {drop_phase:.2} dB; {:.1?}",
            right.psnr_amp.unwrap(),
            wrong.psnr_amp.unwrap(),
            right.psnr_phase.unwrap(),
            wrong.psnr_phase.unwrap(),
            desk.elapsed
        ),
    )
}

fn criterion_5(desk: &DeskRuns) -> Outcome {
    let h: Vec<f64> = desk.run.report.hamming_trace.iter().map(|&v| v as f64).collect();
    let cells = (desk.run.sampled.truth.len() * 64) as f64;
    let ma = moving_average(&h, 5);
    let rises = ma.windows(2).filter(|w| w[1] > w[0]).count();
    let final_fraction = h.last().unwrap() / cells;
    outcome(
        rises == 0 && final_fraction <= 0.05,
        format!(
            "Hamming trace {:?} of {cells} cells; moving-average rises {rises}; final {:.2}%",
            desk.run.report.hamming_trace,
            final_fraction * 100.0
        ),
    )
}

/// Every reference peak has its own decoded peak within one cell per axis.
fn peaks_agree(reference: &[Peak], decoded: &[Peak]) -> bool {
    fn close(a: &Peak, b: &Peak) -> bool {
        a.index.0.abs_diff(b.index.0) <= 1 && a.index.1.abs_diff(b.index.1) <= 1 && a.index.2.abs_diff(b.index.2) <= 1
    }
    fn assign(i: usize, r: &[Peak], d: &[Peak], used: &mut Vec<bool>) -> bool {
        if i == r.len() {
            return true;
        }
        for j in 0..d.len() {
            if !used[j] && close(&r[i], &d[j]) {
                used[j] = true;
                if assign(i + 1, r, d, used) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    reference.len() == decoded.len() && assign(0, reference, decoded, &mut vec![false; decoded.len()])
}

fn original_peaks(run: &PipelineRun, sc: &MultipathScene, cfg: &PipelineConfig) -> Vec<Peak> {
    let model = array_model(sc);
    let grid = steering_grid(cfg, &model).unwrap();
    let frames: Vec<Array2<Complex64>> = run.sampled.truth.iter().map(SpectrumPair::to_complex).collect();
    find_peaks(&music_spectrum(&frames, &grid, &model, cfg.sources).unwrap(), cfg.sources)
}

fn criterion_6(desk: &DeskRuns) -> Outcome {
    let start = Instant::now();
    let cfg1 = desk_config(1);
    let sc1 = scene(SINGLE_PATH_SCENE);
    let run1 = run_pipeline(&sc1, &cfg1).expect("single-path pipeline");
    let ref1 = original_peaks(&run1, &sc1, &cfg1);
    let ok1 = peaks_agree(&ref1, &run1.estimate.peaks);
    let ref2 = original_peaks(&desk.run, &scene(DESK_SCENE), &desk_config(2));
    let ok2 = peaks_agree(&ref2, &desk.run.estimate.peaks);
    // the two-path decode is shared with criterion 4; count its share of the runtime
    let elapsed = start.elapsed() + desk.elapsed / 2;
    let idx = |p: &[Peak]| p.iter().map(|p| p.index).collect::<Vec<_>>();
    outcome(
        ok1 && ok2 && elapsed < Duration::from_secs(120),
        format!(
            "1 path: original {:?} decoded {:?}; 2 paths: original {:?} decoded {:?}; {elapsed:.1?}",
            idx(&ref1),
            idx(&run1.estimate.peaks),
            idx(&ref2),
            idx(&desk.run.estimate.peaks)
        ),
    )
}

// 7 ----------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let sc = scene(SINGLE_PATH_SCENE);
    let model = array_model(&sc);
    let grid = SteeringGrid::desk(&model).unwrap();
    let nearest = |g: &[f64], v: f64| {
        (0..g.len())
            .min_by(|&a, &b| (g[a] - v).abs().total_cmp(&(g[b] - v).abs()))
            .unwrap()
    };
    let deg = PI / 180.0;
    let mut worst = 0;
    let mut points = 0;
    for theta in [12.0, 26.0, 41.0, 54.0, 68.0] {
        for phi in [17.0, 28.0, 38.0, 49.0, 61.0] {
            for tau in [12e-9, 48e-9, 83e-9] {
                let text = format!(
                    "m = 4\nn = 3\nsubcarriers = 64\ncenter_frequency = 5.805e9\nbandwidth = 160e6\npath = 1,0,{tau},{},{}\n",
                    theta * deg,
                    phi * deg
                );
                let frame = gen_cfr(&scene(&text), 0.0).unwrap().values;
                let spec = music_spectrum(&[frame], &grid, &model, 1).unwrap();
                let (i, j, l) = argmax(&spec);
                let err = i
                    .abs_diff(nearest(&grid.thetas, theta * deg))
                    .max(j.abs_diff(nearest(&grid.phis, phi * deg)))
                    .max(l.abs_diff(nearest(&grid.taus, tau)));
                worst = worst.max(err);
                points += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1 && points == 75 && elapsed < Duration::from_secs(120),
        format!("{points} lattice points, worst argmax offset {worst} cell(s); {elapsed:.1?}"),
    )
}

// 8 ----------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let sc = scene(BURSTY_SCENE);
    let run = |sampling| {
        let cfg = PipelineConfig {
            sampling,
            ..desk_config(2)
        };
        run_pipeline(&sc, &cfg).expect("bursty pipeline")
    };
    let hash = run(Sampling::Hash);
    let uniform = run(Sampling::Uniform);
    let (h, u) = (hash.report.aoa_mse.unwrap(), uniform.report.aoa_mse.unwrap());
    let elapsed = start.elapsed();
    outcome(
        h <= u && elapsed < Duration::from_secs(900),
        format!(
            "AoA MSE hash {h:.2} deg^2 (frames {:?}) vs uniform {u:.2} deg^2; {elapsed:.1?}",
            hash.sampled.indices
        ),
    )
}

// 9 ----------------------------------------------------------------------

fn gradient_case(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Shape::new(2, 9, 3);
    let layers = vec![
        Layer::Conv { cin: 2, cout: 3, kernel: 3, stride: 1, offset: 0 },
        Layer::LeakyRelu { slope: 0.2 },
        Layer::Conv { cin: 3, cout: 3, kernel: 3, stride: 2, offset: 0 },
        Layer::LeakyRelu { slope: 0.2 },
        Layer::Upsample { rows: 9 },
        Layer::Conv { cin: 3, cout: 3, kernel: 1, stride: 1, offset: 0 },
        Layer::SharedPointwise { cin: 3, cout: 2, gamma: 0.3, offset: 0 },
    ];
    let net = Network::new(input, layers).unwrap();
    let params: Vec<f64> = (0..net.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..input.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..net.output_shape().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |p: &[f64], x: &[f64]| -> f64 {
        let tape = net.forward(p, x).unwrap();
        tape.output().iter().zip(&w).map(|(a, b)| a * b).sum()
    };
    let tape = net.forward(&params, &x).unwrap();
    let (gp, gx) = net.backward(&params, &tape, &w).unwrap();
    let h = 1e-6;
    let central = |v: &[f64], f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let mut a = v.to_vec();
                let mut b = v.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    };
    let fp = central(&params, &|p| loss(p, &x));
    let fx = central(&x, &|xx| loss(&params, xx));
    let rel = |a: &[f64], b: &[f64]| {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
        diff / scale
    };
    (rel(&gp, &fp), rel(&gx, &fx))
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (p, x) = gradient_case(seed);
        worst = worst.max(p).max(x);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-4 && elapsed < Duration::from_secs(30),
        format!("20 seeds, conv (stride 1 and 2, 1x1), leaky ReLU, upsample, shared pointwise; worst relative error {worst:.2e}; {elapsed:.1?}"),
    )
}

// 10 ---------------------------------------------------------------------

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = dir.path().join("desk.scene");
    std::fs::write(&scene_path, DESK_SCENE).unwrap();
    let run = |name: &str| {
        let mut cfg = desk_config(2);
        cfg.scene = Some(scene_path.clone());
        cfg.out_dir = dir.path().join(name);
        pipeline::cmd_pipeline(&cfg).expect("pipeline run");
        cfg.out_dir
    };
    let a = run("a");
    let b = run("b");
    let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .map(|f| f.to_string_lossy().into_owned())
        .collect();
    let has = |f: &str| FsPath::new(&a).join(f).exists();
    let complete = [
        pipeline::FRAMES_FILE,
        pipeline::SAMPLED_FILE,
        pipeline::META_FILE,
        pipeline::DECODED_FILE,
        pipeline::MUSIC_FILE,
        pipeline::TRACE_FILE,
        pipeline::REPORT_FILE,
    ]
    .iter()
    .all(|f| has(f));
    outcome(
        differing.is_empty() && complete,
        format!("{} artifacts compared, differing: {differing:?}", files.len()),
    )
}

fn main() {
    // `cargo test` passes harness flags such as --list; only run on a plain
    // invocation or an explicit filter that names this suite
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "compression ratio", criterion_1());
    report(2, "lossless codec core", criterion_2());
    report(3, "operator correctness", criterion_3());
    let desk = desk_runs();
    report(4, "codebook as key", criterion_4(&desk));
    report(5, "decode quality trend", criterion_5(&desk));
    report(6, "sensing preserved", criterion_6(&desk));
    report(7, "MUSIC oracle", criterion_7());
    report(8, "sampling comparison", criterion_8());
    report(9, "gradient check", criterion_9());
    report(10, "determinism", criterion_10());
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
