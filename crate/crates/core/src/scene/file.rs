//! Plain-text scene descriptions.
//!
//! ```text
//! # L-shaped array, 4 + 1 + 3 sensors
//! m = 4
//! n = 3
//! subcarriers = 64
//! center_frequency = 5.805e9
//! bandwidth = 160e6
//! # optional: spacing (m, default half wavelength), speed (m/s, default 3e8),
//! #           noise_snr_db, noise_seed
//! path = 1.0,0.0,30e-9,0.785,0.524      # alpha_re,alpha_im,tof_s,elev_rad,azim_rad
//! at = 0.35                             # later paths belong to a keyframe at 0.35 s
//! path = 0.8,0.2,45e-9,0.9,1.1
//! ```
//!
//! Paths listed before the first `at` line belong to a keyframe at 0 s. Blank
//! lines and `#` comments are ignored; keys are case-sensitive.

use std::path::Path as FsPath;

use num_complex::Complex64;

use super::{ArrayGeometry, Keyframe, MultipathScene, NoiseSpec, Path, SubcarrierGrid, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

pub fn read_scene_file(path: impl AsRef<FsPath>) -> Result<MultipathScene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text, &path.display().to_string())
}

pub fn parse_scene(text: &str, origin: &str) -> Result<MultipathScene> {
    let err = |line: usize, message: String| Error::Parse {
        origin: origin.to_string(),
        line,
        message,
    };

    let mut m = None;
    let mut n = None;
    let mut k = None;
    let mut fc = None;
    let mut bw = None;
    let mut spacing = None;
    let mut speed = None;
    let mut snr = None;
    let mut noise_seed = 0u64;
    let mut keyframes: Vec<Keyframe> = Vec::new();
    let mut current = Keyframe {
        start: 0.0,
        paths: Vec::new(),
    };
    let mut explicit_first = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected key = value, got {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        let float = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| err(line_no, format!("{key}: not a number: {v:?}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| err(line_no, format!("{key}: not a non-negative integer: {v:?}")))
        };
        match key {
            "m" => m = Some(int(value)?),
            "n" => n = Some(int(value)?),
            "subcarriers" => k = Some(int(value)?),
            "center_frequency" => fc = Some(float(value)?),
            "bandwidth" => bw = Some(float(value)?),
            "spacing" => spacing = Some(float(value)?),
            "speed" => speed = Some(float(value)?),
            "noise_snr_db" => snr = Some(float(value)?),
            "noise_seed" => {
                noise_seed = value
                    .parse()
                    .map_err(|_| err(line_no, format!("noise_seed: not an integer: {value:?}")))?
            }
            "at" => {
                let start = float(value)?;
                if !current.paths.is_empty() || explicit_first {
                    keyframes.push(std::mem::replace(
                        &mut current,
                        Keyframe {
                            start,
                            paths: Vec::new(),
                        },
                    ));
                } else {
                    current.start = start;
                }
                explicit_first = true;
            }
            "path" => {
                let fields: Vec<&str> = value.split(',').collect();
                if fields.len() != 5 {
                    return Err(err(
                        line_no,
                        format!("path needs 5 fields (alpha_re,alpha_im,tof,elev,azim), got {}", fields.len()),
                    ));
                }
                let v = fields.iter().map(|f| float(f)).collect::<Result<Vec<_>>>()?;
                current.paths.push(Path::new(Complex64::new(v[0], v[1]), v[2], v[3], v[4]));
            }
            other => return Err(err(line_no, format!("unknown key {other:?}"))),
        }
    }
    keyframes.push(current);

    let eof = text.lines().count().max(1);
    let missing = |name: &str| err(eof, format!("missing required key {name:?}"));
    let m = m.ok_or_else(|| missing("m"))?;
    let n = n.ok_or_else(|| missing("n"))?;
    let k = k.ok_or_else(|| missing("subcarriers"))?;
    let fc = fc.ok_or_else(|| missing("center_frequency"))?;
    let bw = bw.ok_or_else(|| missing("bandwidth"))?;
    if keyframes.iter().all(|kf| kf.paths.is_empty()) {
        return Err(err(eof, "scene defines no paths".into()));
    }
    if let Some(kf) = keyframes.iter().find(|kf| kf.paths.is_empty()) {
        return Err(err(eof, format!("keyframe at {} s has no paths", kf.start)));
    }

    let speed = speed.unwrap_or(SPEED_OF_LIGHT);
    let geometry = match spacing {
        Some(d) => ArrayGeometry::new(m, n, d)?,
        None => ArrayGeometry::half_wavelength(m, n, fc, speed)?,
    };
    let grid = SubcarrierGrid::centered(k, fc, bw)?;
    let scene = MultipathScene::with_trajectory(keyframes, geometry, grid)?
        .with_speed(speed)?
        .with_noise(snr.map(|snr_db| NoiseSpec {
            snr_db,
            seed: noise_seed,
        }));
    Ok(scene)
}

/// Writes a scene back in the text grammar accepted by [`parse_scene`].
pub fn format_scene(scene: &MultipathScene) -> String {
    let mut s = String::new();
    let g = &scene.geometry;
    s.push_str(&format!("m = {}\nn = {}\n", g.m_count, g.n_count));
    s.push_str(&format!("subcarriers = {}\n", scene.grid.len()));
    s.push_str(&format!("center_frequency = {}\n", scene.grid.center()));
    s.push_str(&format!(
        "bandwidth = {}\n",
        scene.grid.spacing() * scene.grid.len() as f64
    ));
    s.push_str(&format!("spacing = {}\nspeed = {}\n", g.spacing, scene.speed));
    if let Some(noise) = scene.noise {
        s.push_str(&format!("noise_snr_db = {}\nnoise_seed = {}\n", noise.snr_db, noise.seed));
    }
    for kf in scene.keyframes() {
        s.push_str(&format!("at = {}\n", kf.start));
        for p in &kf.paths {
            s.push_str(&format!(
                "path = {},{},{},{},{}\n",
                p.alpha.re, p.alpha.im, p.tof, p.elevation, p.azimuth
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = "\
# desk scene
m = 4
n = 3
subcarriers = 64
center_frequency = 5.805e9
bandwidth = 160e6
path = 1.0,0.0,30e-9,0.785,0.524
path = 0.5,0.1,50e-9,0.3,1.2   # static reflector
at = 0.35
path = 1.0,0.0,32e-9,0.9,0.6
";

    #[test]
    fn parses_keyframes_and_defaults() {
        let scene = parse_scene(DESK, "desk").unwrap();
        assert_eq!(scene.keyframes().len(), 2);
        assert_eq!(scene.keyframes()[0].paths.len(), 2);
        assert_eq!(scene.keyframes()[1].start, 0.35);
        assert_eq!(scene.geometry.sensor_count(), 8);
        assert!((scene.geometry.spacing - 3e8 / (2.0 * 5.805e9)).abs() < 1e-15);
        assert_eq!(scene.grid.len(), 64);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "m = 4\nn = 3\nsubcarriers = x\n";
        match parse_scene(text, "bad") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "m = 4\npath = 1,2,3\n";
        match parse_scene(text, "bad") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn format_round_trips() {
        let scene = parse_scene(DESK, "desk").unwrap();
        let again = parse_scene(&format_scene(&scene), "again").unwrap();
        assert_eq!(scene.keyframes(), again.keyframes());
        assert_eq!(scene.geometry, again.geometry);
        for (a, b) in scene.grid.frequencies().iter().zip(again.grid.frequencies()) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
