//! File formats: PGM/PPM rasters, CSV trajectories and motion samples, a
//! raw SDF sample format, and dataset directories.
//!
//! A dataset directory holds `dataset.cfg` (the generating configuration)
//! and one `demo_NNN/` per demonstration containing the scene
//! (`scene.pgm`, `scene.ppm` or `scene_sdf.bin`), `motion.csv` and
//! `meta.txt` with the task parameters.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::data::{Demonstration, ImageShape, MotionSamples, SceneSamples, TaskParams, Trajectory};
use crate::error::{NfmpError, Result};
use crate::tasks::{Split, TaskKind};

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| NfmpError::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| NfmpError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| NfmpError::io(path, e))
}

/// Binary PGM (one channel) or PPM (three channels). Values are clamped to
/// `[0, 1]` and quantised to `maxval` (255 or 65535).
pub fn encode_pnm(scene: &SceneSamples, maxval: u16) -> Result<Vec<u8>> {
    let shape = scene.image.ok_or_else(|| NfmpError::WrongMode("only image scenes can be written as PNM".into()))?;
    let magic = match scene.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(NfmpError::InvalidArgument(format!("PNM supports 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", shape.width, shape.height).into_bytes();
    for &v in &scene.values {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u16;
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    Ok(out)
}

pub fn decode_pnm(bytes: &[u8]) -> Result<SceneSamples> {
    let bad = |m: &str| NfmpError::format("PNM image", m);
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?.to_string());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported magic {other}"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad header number `{s}`")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval out of range"));
    }
    let n = w * h * channels;
    let width = if maxval > 255 { 2 } else { 1 };
    let data = bytes.get(pos..pos + n * width).ok_or_else(|| bad("truncated pixel data"))?;
    let values = if width == 2 {
        data.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / maxval as f64).collect()
    } else {
        data.iter().map(|&b| b as f64 / maxval as f64).collect()
    };
    SceneSamples::from_image(w, h, channels, values)
}

pub fn write_image(path: impl AsRef<Path>, scene: &SceneSamples) -> Result<()> {
    write_file(path.as_ref(), &encode_pnm(scene, 255)?)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<SceneSamples> {
    decode_pnm(&read_file(path.as_ref())?)
}

/// `u64` sample count, then `x y z sdf` per sample as little-endian `f64`.
pub fn encode_sdf(scene: &SceneSamples) -> Result<Vec<u8>> {
    if scene.coord_dim != 3 || scene.channels != 1 {
        return Err(NfmpError::WrongMode("SDF files hold 3D scalar samples".into()));
    }
    let mut out = (scene.len() as u64).to_le_bytes().to_vec();
    for i in 0..scene.len() {
        for v in scene.coord(i).iter().chain(scene.value(i)) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_sdf(bytes: &[u8]) -> Result<SceneSamples> {
    let bad = |m: &str| NfmpError::format("SDF samples", m);
    let n = u64::from_le_bytes(bytes.get(..8).ok_or_else(|| bad("truncated"))?.try_into().expect("8 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() != n.checked_mul(32).ok_or_else(|| bad("count overflow"))? {
        return Err(bad("length does not match sample count"));
    }
    let mut coords = Vec::with_capacity(3 * n);
    let mut values = Vec::with_capacity(n);
    for rec in body.chunks_exact(32) {
        let f: Vec<f64> = rec.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        coords.extend_from_slice(&f[..3]);
        values.push(f[3]);
    }
    SceneSamples::new(3, 1, coords, values)
}

/// CSV with header `t,q0,...`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t");
    for j in 0..traj.joints {
        s.push_str(&format!(",q{j}"));
    }
    s.push('\n');
    for k in 0..traj.len() {
        s.push_str(&traj.times[k].to_string());
        for v in traj.row(k) {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    write_file(path.as_ref(), trajectory_csv(traj).as_bytes())
}

fn parse_rows(text: &str, what: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<String> =
        lines.next().ok_or_else(|| NfmpError::format(what, "missing header"))?.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| NfmpError::format(what, format!("row {}: {e}", i + 1)))?;
        if row.len() != header.len() {
            return Err(NfmpError::format(what, format!("row {} has {} fields, header has {}", i + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let (header, rows) = parse_rows(text, "trajectory CSV")?;
    if header.first().map(String::as_str) != Some("t") || header.len() < 2 {
        return Err(NfmpError::format("trajectory CSV", "header must be t,q0,..."));
    }
    let joints = header.len() - 1;
    Ok(Trajectory {
        joints,
        times: rows.iter().map(|r| r[0]).collect(),
        values: rows.iter().flat_map(|r| r[1..].to_vec()).collect(),
    })
}

/// Motion samples as CSV: `t,q0,...` for explicit and `t,q0,...,cost` for
/// implicit samples.
pub fn motion_csv(motion: &MotionSamples) -> String {
    match motion {
        MotionSamples::Explicit { joints, times, values } => {
            trajectory_csv(&Trajectory { joints: *joints, times: times.clone(), values: values.clone() })
        }
        MotionSamples::Implicit { joints, points, costs } => {
            let mut s = String::from("t");
            for j in 0..*joints {
                s.push_str(&format!(",q{j}"));
            }
            s.push_str(",cost\n");
            for (row, c) in points.chunks_exact(joints + 1).zip(costs) {
                s.push_str(&row[*joints].to_string());
                for v in &row[..*joints] {
                    s.push_str(&format!(",{v}"));
                }
                s.push_str(&format!(",{c}\n"));
            }
            s
        }
    }
}

pub fn parse_motion(text: &str) -> Result<MotionSamples> {
    let (header, rows) = parse_rows(text, "motion CSV")?;
    if header.first().map(String::as_str) != Some("t") || header.len() < 2 {
        return Err(NfmpError::format("motion CSV", "header must start with t"));
    }
    if header.last().map(String::as_str) == Some("cost") {
        let joints = header.len() - 2;
        let mut points = Vec::with_capacity(rows.len() * (joints + 1));
        let mut costs = Vec::with_capacity(rows.len());
        for r in &rows {
            points.extend_from_slice(&r[1..=joints]);
            points.push(r[0]);
            costs.push(r[joints + 1]);
        }
        Ok(MotionSamples::Implicit { joints, points, costs })
    } else {
        let t = parse_trajectory(text)?;
        Ok(MotionSamples::Explicit { joints: t.joints, times: t.times, values: t.values })
    }
}

/// Contents of `meta.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoMeta {
    pub task: TaskKind,
    pub params: TaskParams,
    pub seed: u64,
}

fn meta_text(m: &DemoMeta) -> String {
    let p: Vec<String> = m.params.0.iter().map(|v| v.to_string()).collect();
    format!("task = {}\np = {}\nseed = {}\n", m.task, p.join(" "), m.seed)
}

fn parse_meta(text: &str) -> Result<DemoMeta> {
    let bad = |m: String| NfmpError::format("meta.txt", m);
    let (mut task, mut params, mut seed) = (None, None, None);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad line `{line}`")))?;
        let v = v.trim();
        match k.trim() {
            "task" => task = Some(v.parse::<TaskKind>()?),
            "p" => {
                let p = v.split_whitespace().map(str::parse).collect::<std::result::Result<Vec<f64>, _>>().map_err(|e| bad(e.to_string()))?;
                params = Some(TaskParams::new(p)?);
            }
            "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    Ok(DemoMeta {
        task: task.ok_or_else(|| bad("missing task".into()))?,
        params: params.ok_or_else(|| bad("missing p".into()))?,
        seed: seed.ok_or_else(|| bad("missing seed".into()))?,
    })
}

pub fn demo_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("demo_{i:03}"))
}

/// Writes demos to `root`, replacing nothing outside the `demo_NNN` folders.
/// Image scenes are stored at 16 bits per channel.
pub fn write_dataset(root: impl AsRef<Path>, config: &Config, split: Split, demos: &[Demonstration]) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| NfmpError::io(root, e))?;
    let header = format!("# split: {split}\n# demos: {}\n{}", demos.len(), config.to_text());
    write_file(&root.join("dataset.cfg"), header.as_bytes())?;
    for (i, d) in demos.iter().enumerate() {
        let dir = demo_dir(root, i);
        fs::create_dir_all(&dir).map_err(|e| NfmpError::io(&dir, e))?;
        match (d.scene.image, d.scene.channels) {
            (Some(_), 1) => write_file(&dir.join("scene.pgm"), &encode_pnm(&d.scene, u16::MAX)?)?,
            (Some(_), _) => write_file(&dir.join("scene.ppm"), &encode_pnm(&d.scene, u16::MAX)?)?,
            (None, _) => write_file(&dir.join("scene_sdf.bin"), &encode_sdf(&d.scene)?)?,
        }
        write_file(&dir.join("motion.csv"), motion_csv(&d.motion).as_bytes())?;
        let params = d.task_params.clone().ok_or_else(|| NfmpError::InvalidArgument(format!("demo {i} has no task parameters")))?;
        write_file(&dir.join("meta.txt"), meta_text(&DemoMeta { task: config.task_kind, params, seed: config.task_seed }).as_bytes())?;
    }
    Ok(())
}

fn demo_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| NfmpError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("demo_")))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(NfmpError::InvalidArgument(format!("{} contains no demo_* directories", root.display())));
    }
    Ok(dirs)
}

pub fn read_dataset_config(root: impl AsRef<Path>) -> Result<Config> {
    Config::parse_file(root.as_ref().join("dataset.cfg"))
}

/// Scene of one `demo_NNN` directory.
pub fn read_scene(dir: &Path) -> Result<SceneSamples> {
    for name in ["scene.pgm", "scene.ppm"] {
        let p = dir.join(name);
        if p.exists() {
            return read_image(&p);
        }
    }
    decode_sdf(&read_file(&dir.join("scene_sdf.bin"))?)
}

/// Scene samples of every demo, without touching `meta.txt`.
pub fn load_scenes(root: impl AsRef<Path>) -> Result<Vec<SceneSamples>> {
    demo_dirs(root.as_ref())?.iter().map(|d| read_scene(d)).collect()
}

/// Training demos: scenes and motion. Task parameters are not loaded.
pub fn load_demos(root: impl AsRef<Path>) -> Result<Vec<Demonstration>> {
    demo_dirs(root.as_ref())?
        .iter()
        .map(|d| {
            Ok(Demonstration { scene: read_scene(d)?, motion: parse_motion(&read_text(&d.join("motion.csv"))?)?, task_params: None })
        })
        .collect()
}

/// Per-demo metadata, for ground-truth evaluation only.
pub fn load_meta(root: impl AsRef<Path>) -> Result<Vec<DemoMeta>> {
    demo_dirs(root.as_ref())?.iter().map(|d| parse_meta(&read_text(&d.join("meta.txt"))?)).collect()
}

/// Pixel shape of the first image scene in a dataset.
pub fn image_shape(scenes: &[SceneSamples]) -> Option<ImageShape> {
    scenes.first().and_then(|s| s.image)
}

/// Writes a file and its parent directories.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| NfmpError::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| NfmpError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| NfmpError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{gen_dataset, make_grid, TaskSpec};

    #[test]
    fn pgm_round_trip() {
        let s = SceneSamples::from_image(3, 2, 1, vec![0.0, 0.5, 1.0, 0.25, 2.0, -1.0]).unwrap();
        let back = decode_pnm(&encode_pnm(&s, 255).unwrap()).unwrap();
        let want = [0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0, 1.0, 0.0];
        for (a, b) in back.values.iter().zip(want) {
            approx::assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert!(encode_pnm(&s, 255).unwrap().starts_with(b"P5\n3 2\n255\n"));
        let deep = decode_pnm(&encode_pnm(&s, u16::MAX).unwrap()).unwrap();
        assert!((deep.values[1] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn ppm_round_trip() {
        let s = SceneSamples::from_image(2, 2, 3, (0..12).map(|i| i as f64 / 11.0).collect()).unwrap();
        let bytes = encode_pnm(&s, 255).unwrap();
        assert!(bytes.starts_with(b"P6"));
        let back = decode_pnm(&bytes).unwrap();
        assert_eq!(back.channels, 3);
        assert!(back.values.iter().zip(&s.values).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-12));
    }

    #[test]
    fn sdf_and_csv_round_trips() {
        let s = SceneSamples::new(3, 1, vec![0.1, 0.2, 0.3, -1.0, 0.5, 0.25], vec![0.01, -0.7]).unwrap();
        assert_eq!(decode_sdf(&encode_sdf(&s).unwrap()).unwrap(), s);
        let t = Trajectory { joints: 2, times: vec![0.0, 1.0], values: vec![0.1, -3.5, 1e-17, 2.0] };
        let csv = trajectory_csv(&t);
        assert!(csv.starts_with("t,q0,q1\n"));
        assert_eq!(parse_trajectory(&csv).unwrap(), t);
        let m = MotionSamples::Implicit { joints: 2, points: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], costs: vec![0.0, 0.7] };
        assert_eq!(parse_motion(&motion_csv(&m)).unwrap(), m);
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Config::default();
        cfg.task_kind = TaskKind::Multivalued;
        cfg.image_res = 8;
        let mut spec = TaskSpec::from_config(&cfg);
        spec.implicit_uniform = 16;
        let demos = gen_dataset(&spec, &make_grid(2, 2).unwrap(), Split::Train).unwrap();
        write_dataset(dir.path(), &cfg, Split::Train, &demos).unwrap();
        let back = load_demos(dir.path()).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back[1].motion, demos[1].motion);
        assert!(back[1].task_params.is_none());
        let meta = load_meta(dir.path()).unwrap();
        assert_eq!(meta[3].params, demos[3].task_params.clone().unwrap());
        assert_eq!(read_dataset_config(dir.path()).unwrap(), cfg);
        for (a, b) in back[2].scene.values.iter().zip(&demos[2].scene.values) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
