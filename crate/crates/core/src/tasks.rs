//! Synthetic analog tasks with closed-form oracles.
//!
//! Four task families mirror the structure of the reference experiments:
//! a positioned square (`peg`), three walls with varying heights and gap
//! (`wall`), a two-way obstacle passage with multi-valued motion
//! (`multivalued`), and a rotated box observed through SDF samples
//! (`sdfbox`). Scenes are soft renderings so every scene is a smooth
//! function of the task parameters.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::data::{uniform_times, Demonstration, MotionSamples, SceneSamples, TaskParams, Trajectory};
use crate::error::{NfmpError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Peg,
    Wall,
    Multivalued,
    SdfBox,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Peg, TaskKind::Wall, TaskKind::Multivalued, TaskKind::SdfBox];

    pub fn param_dim(self) -> usize {
        match self {
            TaskKind::Wall => 3,
            _ => 2,
        }
    }

    pub fn joints(self) -> usize {
        match self {
            TaskKind::Multivalued => 2,
            _ => 6,
        }
    }

    pub fn is_image(self) -> bool {
        !matches!(self, TaskKind::SdfBox)
    }

    pub fn is_implicit(self) -> bool {
        matches!(self, TaskKind::Multivalued)
    }

    /// Spatial dimension of the scene coordinates.
    pub fn scene_dim(self) -> usize {
        if self.is_image() {
            2
        } else {
            3
        }
    }

    /// Joint tasks are supervised in degrees.
    pub fn uses_degrees(self) -> bool {
        !self.is_implicit()
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Peg => "peg",
            TaskKind::Wall => "wall",
            TaskKind::Multivalued => "multivalued",
            TaskKind::SdfBox => "sdfbox",
        })
    }
}

impl FromStr for TaskKind {
    type Err = NfmpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peg" => Ok(TaskKind::Peg),
            "wall" => Ok(TaskKind::Wall),
            "multivalued" => Ok(TaskKind::Multivalued),
            "sdfbox" => Ok(TaskKind::SdfBox),
            other => Err(NfmpError::InvalidArgument(format!(
                "unknown task kind `{other}` (expected peg, wall, multivalued or sdfbox)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = NfmpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(NfmpError::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// Which branch of the multi-valued task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Plus,
    Minus,
}

impl Mode {
    pub fn sign(self) -> f64 {
        match self {
            Mode::Plus => 1.0,
            Mode::Minus => -1.0,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Plus => "+",
            Mode::Minus => "-",
        })
    }
}

/// Number of time-basis functions `[sin pi t, sin 2 pi t, t, t^2, 1]`.
const BASIS: usize = 5;
/// Coefficient range of the joint oracle, degrees.
const COEFF_RANGE_DEG: f64 = 15.0;
/// Rendering softness in pixels.
const SOFTNESS_PX: f64 = 1.5;

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub image_res: usize,
    pub channels: usize,
    pub seed: u64,
    pub motion_samples: usize,
    pub implicit_per_mode: usize,
    pub implicit_uniform: usize,
    pub sdf_near: usize,
    pub sdf_uniform: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            image_res: 64,
            channels: 1,
            seed: 42,
            motion_samples: 64,
            implicit_per_mode: 64,
            implicit_uniform: 512,
            sdf_near: 1024,
            sdf_uniform: 1024,
        }
    }

    pub fn from_config(cfg: &Config) -> Self {
        Self { image_res: cfg.image_res, channels: cfg.image_channels, seed: cfg.task_seed, ..Self::new(cfg.task_kind) }
    }

    fn check_params(&self, p: &TaskParams) -> Result<()> {
        if p.dim() != self.kind.param_dim() {
            return Err(NfmpError::Dimension(format!(
                "{} task takes {} parameters, got {}",
                self.kind,
                self.kind.param_dim(),
                p.dim()
            )));
        }
        TaskParams::new(p.0.clone()).map(|_| ())
    }

    /// Oracle coefficients `theta[j][b][f]` in degrees.
    pub fn coefficients(&self) -> Vec<f64> {
        let f = features_len(self.kind);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.kind.joints() * BASIS * f).map(|_| rng.gen_range(-COEFF_RANGE_DEG..=COEFF_RANGE_DEG)).collect()
    }

    /// Soft edge width in unit image coordinates.
    pub fn softness(&self) -> f64 {
        SOFTNESS_PX / self.image_res as f64
    }
}

fn features_len(kind: TaskKind) -> usize {
    match kind {
        TaskKind::Wall => 6,
        _ => 4,
    }
}

fn features(kind: TaskKind, p: &[f64]) -> Vec<f64> {
    match kind {
        TaskKind::Wall => vec![1.0, p[0], p[1], p[2], p[0] * p[1], p[1] * p[2]],
        _ => vec![1.0, p[0], p[1], p[0] * p[1]],
    }
}

fn time_basis(t: f64) -> [f64; BASIS] {
    [(PI * t).sin(), (2.0 * PI * t).sin(), t, t * t, 1.0]
}

/// Uniform lattice over `[0, 1]^d` with `g` points per axis, endpoints
/// included. The first coordinate varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub points_per_dim: usize,
    pub dims: usize,
    pub points: Vec<TaskParams>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn make_grid(g: usize, d: usize) -> Result<Grid> {
    if g < 2 {
        return Err(NfmpError::InvalidArgument(format!("grid needs at least 2 points per axis, got {g}")));
    }
    if d == 0 {
        return Err(NfmpError::InvalidArgument("grid needs at least one dimension".into()));
    }
    let total = g.pow(d as u32);
    let points = (0..total)
        .map(|mut idx| {
            let mut p = Vec::with_capacity(d);
            for _ in 0..d {
                p.push((idx % g) as f64 / (g - 1) as f64);
                idx /= g;
            }
            TaskParams(p)
        })
        .collect();
    Ok(Grid { points_per_dim: g, dims: d, points })
}

/// Lattice points of `make_grid(g, d)` strictly inside the unit box.
pub fn interior_grid(g: usize, d: usize) -> Result<Grid> {
    let mut grid = make_grid(g, d)?;
    grid.points.retain(|p| p.0.iter().all(|&v| v > 0.0 && v < 1.0));
    Ok(grid)
}

fn sigmoid_intensity(sdf: f64, softness: f64) -> f64 {
    1.0 / (1.0 + (sdf / softness).exp())
}

/// Signed distance to an axis-aligned rectangle.
fn rect_sdf(u: [f64; 2], center: [f64; 2], half: [f64; 2]) -> f64 {
    let dx = (u[0] - center[0]).abs() - half[0];
    let dy = (u[1] - center[1]).abs() - half[1];
    let outside = (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
    outside + dx.max(dy).min(0.0)
}

/// Signed distance to an axis-aligned box centred at the origin.
fn box_sdf(l: [f64; 3], half: [f64; 3]) -> f64 {
    let q = [l[0].abs() - half[0], l[1].abs() - half[1], l[2].abs() - half[2]];
    let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
    outside + q[0].max(q[1]).max(q[2]).min(0.0)
}

/// Colour applied to single-intensity renderings when three channels are requested.
const TINT: [f64; 3] = [0.95, 0.55, 0.2];

/// Image-space SDF of the scene at unit image coordinate `u`.
fn image_sdf(kind: TaskKind, p: &[f64], u: [f64; 2]) -> f64 {
    match kind {
        TaskKind::Peg => rect_sdf(u, [0.25 + 0.5 * p[0], 0.25 + 0.5 * p[1]], [0.1, 0.1]),
        TaskKind::Wall => {
            let half_w = 0.04;
            let h1 = 0.2 + 0.4 * p[0];
            let h3 = 0.2 + 0.4 * p[2];
            let gap = 0.3 + 0.4 * p[1];
            let gap_half = 0.1;
            let w1 = rect_sdf(u, [0.2, 1.0 - h1 / 2.0], [half_w, h1 / 2.0]);
            let w3 = rect_sdf(u, [0.8, 1.0 - h3 / 2.0], [half_w, h3 / 2.0]);
            let top = (gap - gap_half) / 2.0;
            let bottom_len = 1.0 - (gap + gap_half);
            let w2a = rect_sdf(u, [0.5, top], [half_w, top]);
            let w2b = rect_sdf(u, [0.5, 1.0 - bottom_len / 2.0], [half_w, bottom_len / 2.0]);
            w1.min(w3).min(w2a).min(w2b)
        }
        TaskKind::Multivalued => {
            let wall = rect_sdf(u, [0.5, 0.5], [0.04, 0.1 + 0.15 * p[0]]);
            let container = rect_sdf(u, [0.25 + 0.5 * p[1], 0.85], [0.06, 0.05]);
            wall.min(container)
        }
        TaskKind::SdfBox => unreachable!("sdfbox has no image rendering"),
    }
}

/// Box pose for the sdfbox task: rotation `R = Rz(yaw) Ry(pitch)`.
struct BoxPose {
    rot: [[f64; 3]; 3],
}

const BOX_HALF: [f64; 3] = [0.15, 0.1, 0.08];
const BOX_CENTER: [f64; 3] = [0.0, 0.0, -0.4];

impl BoxPose {
    fn new(p: &[f64]) -> Self {
        let yaw = (-30.0 + 60.0 * p[0]).to_radians();
        let pitch = (30.0 * p[1]).to_radians();
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let rz = [[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]];
        let ry = [[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]];
        let mut rot = [[0.0; 3]; 3];
        for (i, row) in rot.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| rz[i][k] * ry[k][j]).sum();
            }
        }
        Self { rot }
    }

    fn to_local(&self, x: [f64; 3]) -> [f64; 3] {
        let d = [x[0] - BOX_CENTER[0], x[1] - BOX_CENTER[1], x[2] - BOX_CENTER[2]];
        let mut l = [0.0; 3];
        for (j, lj) in l.iter_mut().enumerate() {
            *lj = (0..3).map(|i| self.rot[i][j] * d[i]).sum();
        }
        l
    }

    fn to_world(&self, l: [f64; 3]) -> [f64; 3] {
        let mut x = BOX_CENTER;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += (0..3).map(|j| self.rot[i][j] * l[j]).sum::<f64>();
        }
        x
    }

    fn sdf(&self, x: [f64; 3]) -> f64 {
        box_sdf(self.to_local(x), BOX_HALF)
    }

    /// Area-weighted uniform point on the box surface.
    fn surface_point(&self, rng: &mut impl Rng) -> [f64; 3] {
        let h = BOX_HALF;
        let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
        let total: f64 = areas.iter().sum();
        let mut pick = rng.gen_range(0.0..total);
        let mut axis = 0;
        while axis < 2 && pick >= areas[axis] {
            pick -= areas[axis];
            axis += 1;
        }
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut l = [0.0; 3];
        for (i, li) in l.iter_mut().enumerate() {
            *li = if i == axis { sign * h[i] } else { rng.gen_range(-h[i]..=h[i]) };
        }
        self.to_world(l)
    }
}

/// Exact signed distance of the sdfbox scene with parameters `p` at `x`.
pub fn box_scene_sdf(p: &TaskParams, x: [f64; 3]) -> f64 {
    BoxPose::new(&p.0).sdf(x)
}

/// `n` uniform samples on the true box surface.
pub fn box_surface_samples(p: &TaskParams, n: usize, seed: u64) -> Vec<[f64; 3]> {
    let pose = BoxPose::new(&p.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| pose.surface_point(&mut rng)).collect()
}

/// Deterministic per-scene sampling seed.
fn scene_seed(base: u64, p: &[f64], salt: u64) -> u64 {
    let mut h = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for v in p {
        h ^= v.to_bits();
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9).rotate_left(31);
    }
    h
}

/// Scene observations for parameters `p`.
pub fn render_scene(spec: &TaskSpec, p: &TaskParams) -> Result<SceneSamples> {
    spec.check_params(p)?;
    match spec.kind {
        TaskKind::SdfBox => render_sdf_box(spec, p, Split::Train),
        kind => {
            let res = spec.image_res;
            let s = spec.softness();
            let mut values = Vec::with_capacity(res * res * spec.channels);
            for r in 0..res {
                for c in 0..res {
                    let u = [(c as f64 + 0.5) / res as f64, (r as f64 + 0.5) / res as f64];
                    let i = sigmoid_intensity(image_sdf(kind, &p.0, u), s);
                    if spec.channels == 1 {
                        values.push(i);
                    } else {
                        values.extend(TINT.iter().map(|t| t * i));
                    }
                }
            }
            SceneSamples::from_image(res, res, spec.channels, values)
        }
    }
}

fn render_sdf_box(spec: &TaskSpec, p: &TaskParams, split: Split) -> Result<SceneSamples> {
    let pose = BoxPose::new(&p.0);
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(spec.seed, &p.0, split as u64 + 1));
    let n = spec.sdf_near + spec.sdf_uniform;
    let mut coords = Vec::with_capacity(3 * n);
    let mut values = Vec::with_capacity(n);
    let band = 0.05;
    for _ in 0..spec.sdf_near {
        let s = pose.surface_point(&mut rng);
        let x = [
            s[0] + rng.gen_range(-band..=band),
            s[1] + rng.gen_range(-band..=band),
            s[2] + rng.gen_range(-band..=band),
        ];
        coords.extend_from_slice(&x);
        values.push(pose.sdf(x));
    }
    for _ in 0..spec.sdf_uniform {
        let x = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        coords.extend_from_slice(&x);
        values.push(pose.sdf(x));
    }
    SceneSamples::new(3, 1, coords, values)
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(NfmpError::InvalidArgument(format!("time must lie in [0, 1], got {t}")));
    }
    Ok(())
}

/// Joint-angle oracle `q(t, p)` in degrees (peg, wall, sdfbox).
pub fn oracle_trajectory(spec: &TaskSpec, p: &TaskParams, t: f64) -> Result<Vec<f64>> {
    if spec.kind.is_implicit() {
        return Err(NfmpError::WrongMode("the multivalued task has two oracle modes; use oracle_mode".into()));
    }
    spec.check_params(p)?;
    check_time(t)?;
    let theta = spec.coefficients();
    let phi = features(spec.kind, &p.0);
    let basis = time_basis(t);
    let nf = phi.len();
    Ok((0..spec.kind.joints())
        .map(|j| {
            let mut q = 0.0;
            for (b, bv) in basis.iter().enumerate() {
                for (f, fv) in phi.iter().enumerate() {
                    q += theta[(j * BASIS + b) * nf + f] * bv * fv;
                }
            }
            q
        })
        .collect())
}

/// Position oracle of the multivalued task for one mode.
pub fn oracle_mode(p: &TaskParams, t: f64, mode: Mode) -> Result<[f64; 2]> {
    if p.dim() != 2 {
        return Err(NfmpError::Dimension(format!("multivalued task takes 2 parameters, got {}", p.dim())));
    }
    check_time(t)?;
    let target = 0.25 + 0.5 * p.0[1];
    let amp = 0.2 + 0.2 * p.0[0];
    Ok([(1.0 - t) * 0.1 + t * target, mode.sign() * amp * (PI * t).sin()])
}

/// Oracle trajectory sampled at `k` uniform times.
pub fn oracle_samples(spec: &TaskSpec, p: &TaskParams, k: usize) -> Result<Trajectory> {
    let times = uniform_times(k);
    let mut values = Vec::with_capacity(k * spec.kind.joints());
    for &t in &times {
        values.extend(oracle_trajectory(spec, p, t)?);
    }
    Ok(Trajectory { joints: spec.kind.joints(), times, values })
}

/// Both multivalued modes sampled at `k` uniform times, `[plus, minus]`.
pub fn oracle_mode_samples(p: &TaskParams, k: usize) -> Result<[Trajectory; 2]> {
    let times = uniform_times(k);
    let sample = |mode| -> Result<Trajectory> {
        let mut values = Vec::with_capacity(2 * k);
        for &t in &times {
            values.extend(oracle_mode(p, t, mode)?);
        }
        Ok(Trajectory { joints: 2, times: times.clone(), values })
    };
    Ok([sample(Mode::Plus)?, sample(Mode::Minus)?])
}

/// Workspace box of the multivalued task: `q0 in [0, 1]`, `q1 in [-0.5, 0.5]`.
pub fn workspace_box() -> [(f64, f64); 2] {
    [(0.0, 1.0), (-0.5, 0.5)]
}

/// Cost label: distance from `(q, t)` to the nearest discretised point of
/// either mode, time included with weight 1.
pub fn implicit_label(modes: &[Trajectory], q: &[f64], t: f64) -> f64 {
    let mut best = f64::INFINITY;
    for m in modes {
        for (k, &tk) in m.times.iter().enumerate() {
            let row = m.row(k);
            let d2: f64 = q.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + (t - tk).powi(2);
            best = best.min(d2);
        }
    }
    best.sqrt()
}

/// One demonstration per grid point.
pub fn gen_dataset(spec: &TaskSpec, grid: &Grid, split: Split) -> Result<Vec<Demonstration>> {
    grid.points.iter().map(|p| gen_demo(spec, p, split)).collect()
}

pub fn gen_demo(spec: &TaskSpec, p: &TaskParams, split: Split) -> Result<Demonstration> {
    spec.check_params(p)?;
    let scene = match spec.kind {
        TaskKind::SdfBox => render_sdf_box(spec, p, split)?,
        _ => render_scene(spec, p)?,
    };
    let motion = if spec.kind.is_implicit() {
        let modes = oracle_mode_samples(p, spec.implicit_per_mode)?;
        let mut points = Vec::new();
        let mut costs = Vec::new();
        for m in &modes {
            for (k, &t) in m.times.iter().enumerate() {
                points.extend_from_slice(m.row(k));
                points.push(t);
                costs.push(0.0);
            }
        }
        let [(x0, x1), (y0, y1)] = workspace_box();
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(spec.seed, &p.0, 100 + split as u64));
        for _ in 0..spec.implicit_uniform {
            let q = [rng.gen_range(x0..=x1), rng.gen_range(y0..=y1)];
            let t = rng.gen_range(0.0..=1.0);
            points.extend_from_slice(&q);
            points.push(t);
            costs.push(implicit_label(&modes, &q, t));
        }
        MotionSamples::Implicit { joints: 2, points, costs }
    } else {
        let traj = oracle_samples(spec, p, spec.motion_samples)?;
        MotionSamples::Explicit { joints: traj.joints, times: traj.times, values: traj.values }
    };
    Ok(Demonstration { scene, motion, task_params: Some(p.clone()) })
}

/// Intensity-weighted centroid of an image scene in unit image coordinates.
pub fn image_centroid(scene: &SceneSamples) -> Result<[f64; 2]> {
    if scene.image.is_none() {
        return Err(NfmpError::WrongMode("centroid requires an image scene".into()));
    }
    let mut acc = [0.0; 2];
    let mut mass = 0.0;
    for i in 0..scene.len() {
        let w: f64 = scene.value(i).iter().sum::<f64>() / scene.channels as f64;
        let x = scene.coord(i);
        acc[0] += w * (x[0] + 1.0) / 2.0;
        acc[1] += w * (x[1] + 1.0) / 2.0;
        mass += w;
    }
    if mass <= 0.0 {
        return Err(NfmpError::InvalidArgument("empty image has no centroid".into()));
    }
    Ok([acc[0] / mass, acc[1] / mass])
}

pub const DISTRACTOR_RADIUS: f64 = 0.06;
pub const DISTRACTOR_INTENSITY: f64 = 0.8;
pub const DISTRACTOR_CLEARANCE: f64 = 0.15;
/// The soft disc is truncated this many softness widths beyond its radius.
const DISTRACTOR_SUPPORT: f64 = 4.0;
const OBJECT_LEVEL: f64 = 0.01;

/// Adds a soft disc at a seeded position that keeps at least
/// [`DISTRACTOR_CLEARANCE`] from the object centroid and from every object
/// pixel. Blending is a per-channel maximum.
pub fn inject_distractor(scene: &SceneSamples, seed: u64) -> Result<SceneSamples> {
    let shape = scene.image.ok_or_else(|| NfmpError::WrongMode("distractors apply to image scenes only".into()))?;
    let centroid = image_centroid(scene)?;
    let softness = SOFTNESS_PX / shape.width as f64;
    let object: Vec<[f64; 2]> = (0..scene.len())
        .filter(|&i| scene.value(i).iter().any(|&v| v > OBJECT_LEVEL))
        .map(|i| {
            let x = scene.coord(i);
            [(x[0] + 1.0) / 2.0, (x[1] + 1.0) / 2.0]
        })
        .collect();
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = DISTRACTOR_RADIUS;
    let hi = 1.0 - DISTRACTOR_RADIUS;
    let center = (0..100)
        .map(|_| [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)])
        .find(|&c| dist(c, centroid) >= DISTRACTOR_CLEARANCE && object.iter().all(|&o| dist(c, o) >= DISTRACTOR_CLEARANCE))
        .ok_or_else(|| NfmpError::InvalidArgument("no valid distractor placement after 100 tries".into()))?;

    let mut out = scene.clone();
    for i in 0..out.len() {
        let x = out.coord(i);
        let u = [(x[0] + 1.0) / 2.0, (x[1] + 1.0) / 2.0];
        let d = dist(u, center) - DISTRACTOR_RADIUS;
        if d > DISTRACTOR_SUPPORT * softness {
            continue;
        }
        let v = DISTRACTOR_INTENSITY * sigmoid_intensity(d, softness);
        let c = out.channels;
        for s in &mut out.values[i * c..(i + 1) * c] {
            *s = s.max(v);
        }
    }
    Ok(out)
}

/// Where [`inject_distractor`] placed its disc, for diagnostics and tests.
pub fn distractor_center(scene: &SceneSamples, seed: u64) -> Result<[f64; 2]> {
    let clean = scene;
    let with = inject_distractor(clean, seed)?;
    let mut acc = [0.0; 2];
    let mut mass = 0.0;
    for i in 0..clean.len() {
        let w: f64 = with.value(i).iter().zip(clean.value(i)).map(|(a, b)| a - b).sum();
        let x = clean.coord(i);
        acc[0] += w * (x[0] + 1.0) / 2.0;
        acc[1] += w * (x[1] + 1.0) / 2.0;
        mass += w;
    }
    Ok([acc[0] / mass, acc[1] / mass])
}
