//! Metrics and evaluation reports.
//!
//! Ground truth is reached only through [`GroundTruth`], which
//! [`eval_report`] consults after the prediction for a demo is complete.
//! Prediction itself sees nothing but the scene samples.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::data::{SceneSamples, TaskParams, Trajectory};
use crate::error::{NfmpError, Result};
use crate::inference::{extract_mesh, fit_embedding, motion_for, scene_values, FitOptions, TrajOptions};
use crate::mesh::Mesh;
use crate::model::NfmpModel;
use crate::tasks::{box_surface_samples, oracle_mode_samples, oracle_samples, Mode, TaskKind, TaskSpec};

/// Mean absolute difference over all entries, in the trajectories' units
/// (degrees for joint tasks).
pub fn joint_error_deg(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    if pred.joints != gt.joints || pred.values.len() != gt.values.len() || pred.values.is_empty() {
        return Err(NfmpError::Dimension(format!(
            "trajectories {}x{} and {}x{}",
            pred.len(),
            pred.joints,
            gt.len(),
            gt.joints
        )));
    }
    Ok(pred.values.iter().zip(&gt.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.values.len() as f64)
}

/// Mean squared error over aligned values.
pub fn scene_mse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(NfmpError::Dimension(format!("{} predicted vs {} reference values", pred.len(), gt.len())));
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Mean time-aligned Euclidean distance between two trajectories.
pub fn mean_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.joints != b.joints || a.len() != b.len() || a.is_empty() {
        return Err(NfmpError::Dimension("trajectories differ in shape".into()));
    }
    Ok((0..a.len())
        .map(|k| a.row(k).iter().zip(b.row(k)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / a.len() as f64)
}

/// Success iff the mean distance to the nearer mode is within `tol`.
/// Returns the flag, the nearer mode and its distance.
pub fn implicit_success(traj: &Trajectory, modes: &[Trajectory; 2], tol: f64) -> Result<(bool, Mode, f64)> {
    let dp = mean_distance(traj, &modes[0])?;
    let dm = mean_distance(traj, &modes[1])?;
    let (mode, d) = if dp <= dm { (Mode::Plus, dp) } else { (Mode::Minus, dm) };
    Ok((d <= tol, mode, d))
}

/// Symmetric chamfer distance: the mean of the two directed mean
/// nearest-neighbour distances. Infinite when either set is empty.
pub fn chamfer_distance(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (directed(a, b) + directed(b, a))
}

/// Oracle-side information about evaluation demos.
pub trait GroundTruth {
    fn params(&self, demo: usize) -> Option<Vec<f64>>;
    /// Reference joint trajectory at `k` uniform times, data units.
    fn trajectory(&self, demo: usize, k: usize) -> Result<Trajectory>;
    /// The two reference modes of a multi-valued demo.
    fn modes(&self, demo: usize, k: usize) -> Result<[Trajectory; 2]>;
    /// Samples on the true scene surface.
    fn surface(&self, demo: usize, n: usize) -> Result<Vec<[f64; 3]>>;
}

/// Closed-form oracle truth for generated task demos.
pub struct OracleTruth {
    pub spec: TaskSpec,
    pub params: Vec<TaskParams>,
}

impl OracleTruth {
    fn p(&self, demo: usize) -> Result<&TaskParams> {
        self.params.get(demo).ok_or_else(|| NfmpError::InvalidArgument(format!("no ground truth for demo {demo}")))
    }
}

impl GroundTruth for OracleTruth {
    fn params(&self, demo: usize) -> Option<Vec<f64>> {
        self.params.get(demo).map(|p| p.0.clone())
    }

    fn trajectory(&self, demo: usize, k: usize) -> Result<Trajectory> {
        oracle_samples(&self.spec, self.p(demo)?, k)
    }

    fn modes(&self, demo: usize, k: usize) -> Result<[Trajectory; 2]> {
        oracle_mode_samples(self.p(demo)?, k)
    }

    fn surface(&self, demo: usize, n: usize) -> Result<Vec<[f64; 3]>> {
        if self.spec.kind != TaskKind::SdfBox {
            return Err(NfmpError::WrongMode("surface samples exist only for the sdfbox task".into()));
        }
        Ok(box_surface_samples(self.p(demo)?, n, self.spec.seed ^ demo as u64))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub fit: FitOptions,
    pub traj: TrajOptions,
    pub traj_k: usize,
    pub mesh_res: usize,
    pub surface_samples: usize,
    pub success_tol: f64,
    pub seed: u64,
    /// Effective configuration, echoed into reports.
    pub config_text: String,
}

impl EvalOptions {
    pub fn from_config(c: &crate::config::Config) -> Self {
        Self {
            fit: FitOptions::from_config(c),
            traj: TrajOptions::from_config(c),
            traj_k: c.traj_k,
            mesh_res: c.mesh_res,
            surface_samples: 2048,
            success_tol: c.success_tol,
            seed: c.seed,
            config_text: c.to_text(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoRecord {
    pub demo_id: usize,
    pub params: Vec<f64>,
    pub joint_err_deg: Option<f64>,
    pub scene_mse: Option<f64>,
    pub success: Option<bool>,
    pub mode: Option<Mode>,
    pub fit_loss: Option<f64>,
    pub chamfer: Option<f64>,
    pub alpha: Vec<f64>,
    pub wall_clock_s: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub joint_err_mean: Option<f64>,
    pub joint_err_median: Option<f64>,
    pub scene_mse_mean: Option<f64>,
    pub success_rate: Option<f64>,
    pub chamfer_mean: Option<f64>,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub records: Vec<DemoRecord>,
    pub aggregate: Aggregate,
    pub config_text: String,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

pub fn aggregate(records: &[DemoRecord]) -> Aggregate {
    let collect = |f: fn(&DemoRecord) -> Option<f64>| records.iter().filter_map(f).collect::<Vec<_>>();
    let joint = collect(|r| r.joint_err_deg);
    let successes: Vec<f64> = records.iter().filter_map(|r| r.success.map(|s| if s { 1.0 } else { 0.0 })).collect();
    Aggregate {
        joint_err_mean: mean(&joint),
        joint_err_median: median(&joint),
        scene_mse_mean: mean(&collect(|r| r.scene_mse)),
        success_rate: mean(&successes),
        chamfer_mean: mean(&collect(|r| r.chamfer)),
        failures: records.iter().filter(|r| r.error.is_some()).count(),
    }
}

struct Prediction {
    alpha: Vec<f64>,
    fit_loss: f64,
    scene_mse: f64,
    trajectory: Trajectory,
    mesh: Option<Mesh>,
}

fn predict(model: &NfmpModel, scene: &SceneSamples, opts: &EvalOptions, demo: usize) -> Result<Prediction> {
    let fit = fit_embedding(model, scene, &opts.fit)?;
    let pred = scene_values(model, &fit.z, &scene.coords)?;
    let mse = scene_mse(&pred, &scene.values)?;
    let trajectory = motion_for(model, &fit.z, opts.traj_k, &opts.traj, opts.seed.wrapping_add(demo as u64))?;
    let mesh = if model.dims.scene_dim == 3 {
        Some(extract_mesh(model, &fit.z, opts.mesh_res, ([-1.0; 3], [1.0; 3]))?)
    } else {
        None
    };
    Ok(Prediction { alpha: fit.weights.alpha(), fit_loss: fit.loss, scene_mse: mse, trajectory, mesh })
}

fn score(model: &NfmpModel, pred: &Prediction, truth: &dyn GroundTruth, opts: &EvalOptions, demo: usize, rec: &mut DemoRecord) -> Result<()> {
    if model.motion.is_explicit() {
        let gt = truth.trajectory(demo, opts.traj_k)?;
        rec.joint_err_deg = Some(joint_error_deg(&pred.trajectory, &gt)?);
    } else {
        let modes = truth.modes(demo, opts.traj_k)?;
        let (ok, mode, _) = implicit_success(&pred.trajectory, &modes, opts.success_tol)?;
        rec.success = Some(ok);
        rec.mode = Some(mode);
    }
    if let Some(mesh) = &pred.mesh {
        let surface = truth.surface(demo, opts.surface_samples)?;
        rec.chamfer = Some(chamfer_distance(&mesh.vertices, &surface));
    }
    Ok(())
}

/// Evaluates each scene: embedding fit, trajectory, then comparison with
/// ground truth. Per-demo failures are recorded, not propagated.
pub fn eval_report(model: &NfmpModel, scenes: &[SceneSamples], truth: &dyn GroundTruth, opts: &EvalOptions) -> Result<EvalReport> {
    if scenes.is_empty() {
        return Err(NfmpError::InvalidArgument("empty evaluation set".into()));
    }
    let mut records = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let start = Instant::now();
        let mut rec = DemoRecord {
            demo_id: i,
            params: Vec::new(),
            joint_err_deg: None,
            scene_mse: None,
            success: None,
            mode: None,
            fit_loss: None,
            chamfer: None,
            alpha: Vec::new(),
            wall_clock_s: 0.0,
            error: None,
        };
        match predict(model, scene, opts, i) {
            Ok(pred) => {
                rec.fit_loss = Some(pred.fit_loss);
                rec.scene_mse = Some(pred.scene_mse);
                rec.alpha = pred.alpha.clone();
                if let Err(e) = score(model, &pred, truth, opts, i, &mut rec) {
                    rec.error = Some(e.to_string());
                }
            }
            Err(e) => rec.error = Some(e.to_string()),
        }
        rec.params = truth.params(i).unwrap_or_default();
        rec.wall_clock_s = start.elapsed().as_secs_f64();
        log::info!(
            "demo {i}: joint_err {:?} scene_mse {:?} success {:?} chamfer {:?}",
            rec.joint_err_deg,
            rec.scene_mse,
            rec.success,
            rec.chamfer
        );
        records.push(rec);
    }
    let aggregate = aggregate(&records);
    Ok(EvalReport { records, aggregate, config_text: opts.config_text.clone() })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    /// CSV with `#` comment lines carrying the configuration, one row per
    /// demo and a final `mean` row.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# joint_err_deg: mean of |pred - oracle| over all joints and timesteps, degrees")?;
        writeln!(w, "# joint_err_median: {}", opt(self.aggregate.joint_err_median))?;
        for line in self.config_text.lines() {
            writeln!(w, "# config: {line}")?;
        }
        let np = self.records.iter().map(|r| r.params.len()).max().unwrap_or(0);
        let mut header = vec!["demo_id".to_string()];
        header.extend((0..np).map(|i| format!("p{i}")));
        header.extend(
            ["joint_err_deg", "scene_mse", "success", "mode", "fit_loss", "wall_clock_s", "chamfer", "error"]
                .map(String::from),
        );
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let mut row = vec![r.demo_id.to_string()];
            row.extend((0..np).map(|i| r.params.get(i).map(|v| v.to_string()).unwrap_or_default()));
            row.push(opt(r.joint_err_deg));
            row.push(opt(r.scene_mse));
            row.push(r.success.map(|s| s.to_string()).unwrap_or_default());
            row.push(r.mode.map(|m| m.to_string()).unwrap_or_default());
            row.push(opt(r.fit_loss));
            row.push(r.wall_clock_s.to_string());
            row.push(opt(r.chamfer));
            row.push(r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"));
            writeln!(w, "{}", row.join(","))?;
        }
        let a = &self.aggregate;
        let mut row = vec!["mean".to_string()];
        row.extend((0..np).map(|_| String::new()));
        row.push(opt(a.joint_err_mean));
        row.push(opt(a.scene_mse_mean));
        row.push(opt(a.success_rate));
        row.push(String::new());
        row.push(opt(mean(&self.records.iter().filter_map(|r| r.fit_loss).collect::<Vec<_>>())));
        row.push(self.records.iter().map(|r| r.wall_clock_s).sum::<f64>().to_string());
        row.push(opt(a.chamfer_mean));
        row.push(a.failures.to_string());
        writeln!(w, "{}", row.join(","))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| NfmpError::io(path, e))?);
        self.write_csv(&mut f).and_then(|_| f.flush()).map_err(|e| NfmpError::io(path, e))
    }
}
