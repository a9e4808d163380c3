//! Test-time use of a trained model: embedding recovery for new scenes,
//! trajectory generation and optimisation, interpolation and meshing.
//!
//! All network parameters stay frozen here; only the simplex logits,
//! trajectory waypoints or interpolation weights change.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{uniform_times, SceneSamples, Trajectory};
use crate::diffcore::{AdamState, RowGroups, Tape};
use crate::error::{NfmpError, Result};
use crate::fields::MotionField;
use crate::mesh::{grid_points, marching_cubes, Mesh};
use crate::model::NfmpModel;
use crate::tasks::workspace_box;

const EVAL_CHUNK: usize = 4096;

/// Weights on the training embeddings, parametrised by free logits so that
/// they always sum to one and stay positive.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexWeights {
    pub logits: Vec<f64>,
}

impl SimplexWeights {
    pub fn uniform(n: usize) -> Self {
        Self { logits: vec![0.0; n] }
    }

    pub fn alpha(&self) -> Vec<f64> {
        let max = self.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.logits.iter().map(|l| (l - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// `sum_i alpha_i z_i` for `n x k` row-major embeddings.
    pub fn combine(&self, embeddings: &[f64], k: usize) -> Vec<f64> {
        let mut z = vec![0.0; k];
        for (a, zi) in self.alpha().iter().zip(embeddings.chunks_exact(k)) {
            for (o, v) in z.iter_mut().zip(zi) {
                *o += a * v;
            }
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub iters: usize,
    pub lr: f64,
    /// Scene points per iteration; the full set is used when it is smaller.
    pub batch: usize,
    pub seed: u64,
    /// Keep `alpha` of every iterate in [`FitResult::alpha_trace`].
    pub record_trace: bool,
}

impl FitOptions {
    pub fn from_config(c: &crate::config::Config) -> Self {
        Self { iters: c.infer_iters, lr: c.lr_alpha, batch: c.infer_batch, seed: c.seed, record_trace: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub weights: SimplexWeights,
    pub z: Vec<f64>,
    /// Scene loss of the final embedding over all samples.
    pub loss: f64,
    pub loss_history: Vec<f64>,
    pub alpha_trace: Vec<Vec<f64>>,
}

fn check_scene(model: &NfmpModel, scene: &SceneSamples) -> Result<()> {
    if scene.is_empty() {
        return Err(NfmpError::InvalidArgument("no scene samples".into()));
    }
    if scene.coord_dim != model.dims.scene_dim || scene.channels != model.dims.channels {
        return Err(NfmpError::Dimension(format!(
            "scene samples are {}D x {}, model expects {}D x {}",
            scene.coord_dim, scene.channels, model.dims.scene_dim, model.dims.channels
        )));
    }
    Ok(())
}

/// Scene loss and its gradient with respect to `z` on the given samples.
fn scene_loss_grad(model: &NfmpModel, z: &[f64], coords: &[f64], values: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = model.dims.scene_dim;
    let n = coords.len() / m;
    let mut tape = Tape::new();
    let leaves = model.scene.leaves(&mut tape, false)?;
    let zv = tape.leaf(1, z.len(), z)?;
    let x = tape.constant(n, m, coords)?;
    let out = model.scene.apply(&mut tape, &leaves, zv, x, &RowGroups::from_counts(&[n]), 1.0)?;
    let neg = tape.constant(n, model.dims.channels, values.iter().map(|v| -v).collect::<Vec<_>>())?;
    let diff = tape.add(out.value, neg)?;
    let sq = tape.square(diff)?;
    let s = tape.sum(sq)?;
    let loss = tape.scale(s, 1.0 / n as f64)?;
    let mut grads = tape.backward(loss)?;
    Ok((tape.scalar_value(loss), grads.take(zv, z.len())))
}

/// Mean squared residual norm of the scene field against `scene`.
pub fn scene_loss(model: &NfmpModel, z: &[f64], scene: &SceneSamples) -> Result<f64> {
    check_scene(model, scene)?;
    let pred = scene_values(model, z, &scene.coords)?;
    let n = scene.len() as f64;
    Ok(pred.iter().zip(&scene.values).map(|(p, s)| (p - s).powi(2)).sum::<f64>() / n)
}

/// Recovers the embedding of an unseen scene as a convex combination of
/// the training embeddings, minimising scene reconstruction loss.
pub fn fit_embedding(model: &NfmpModel, scene: &SceneSamples, opts: &FitOptions) -> Result<FitResult> {
    if opts.iters < 1 {
        return Err(NfmpError::InvalidArgument("fit_embedding needs at least one iteration".into()));
    }
    fit_embedding_iters(model, scene, opts)
}

/// As [`fit_embedding`] but accepting zero iterations (returns uniform weights).
pub fn fit_embedding_iters(model: &NfmpModel, scene: &SceneSamples, opts: &FitOptions) -> Result<FitResult> {
    check_scene(model, scene)?;
    let n = model.num_demos();
    let k = model.embed_dim();
    let emb = &model.embeddings;
    let mut weights = SimplexWeights::uniform(n);
    let mut adam = AdamState::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(2);
    let full = scene.len() <= opts.batch;
    let mut loss_history = Vec::with_capacity(opts.iters);
    let mut alpha_trace = Vec::new();
    if opts.record_trace {
        alpha_trace.push(weights.alpha());
    }
    let (mut coords, mut values) = (Vec::new(), Vec::new());
    for _ in 0..opts.iters {
        let z = weights.combine(emb, k);
        let (loss, gz) = if full {
            scene_loss_grad(model, &z, &scene.coords, &scene.values)?
        } else {
            coords.clear();
            values.clear();
            for _ in 0..opts.batch {
                let i = rng.gen_range(0..scene.len());
                coords.extend_from_slice(scene.coord(i));
                values.extend_from_slice(scene.value(i));
            }
            scene_loss_grad(model, &z, &coords, &values)?
        };
        if !loss.is_finite() {
            return Err(NfmpError::NonFiniteLoss { context: "embedding fit", value: loss });
        }
        loss_history.push(loss);
        let g = logit_grad(&weights, emb, &gz);
        adam.step(&mut weights.logits, &g, opts.lr)?;
        if opts.record_trace {
            alpha_trace.push(weights.alpha());
        }
    }
    let z = weights.combine(emb, k);
    let loss = scene_loss(model, &z, scene)?;
    if !loss.is_finite() {
        return Err(NfmpError::NonFiniteLoss { context: "embedding fit", value: loss });
    }
    Ok(FitResult { weights, z, loss, loss_history, alpha_trace })
}

/// Chain rule from an embedding gradient `gz` to the simplex logits.
fn logit_grad(weights: &SimplexWeights, embeddings: &[f64], gz: &[f64]) -> Vec<f64> {
    // d alpha_i / d l_j = alpha_i (delta_ij - alpha_j)
    let alpha = weights.alpha();
    let proj: Vec<f64> = embeddings.chunks_exact(gz.len()).map(|zi| zi.iter().zip(gz).map(|(a, b)| a * b).sum()).collect();
    let mean: f64 = alpha.iter().zip(&proj).map(|(a, p)| a * p).sum();
    alpha.iter().zip(&proj).map(|(a, p)| a * (p - mean)).collect()
}

/// Scene field values at `coords` (`N x m`) for one embedding, full bandwidth.
pub fn scene_values(model: &NfmpModel, z: &[f64], coords: &[f64]) -> Result<Vec<f64>> {
    let m = model.dims.scene_dim;
    if z.len() != model.embed_dim() {
        return Err(NfmpError::Dimension(format!("embedding has dim {}, expected {}", z.len(), model.embed_dim())));
    }
    if coords.len() % m != 0 {
        return Err(NfmpError::Dimension(format!("coordinate buffer not a multiple of {m}")));
    }
    let mut out = Vec::with_capacity(coords.len() / m * model.dims.channels);
    for chunk in coords.chunks(EVAL_CHUNK * m) {
        let n = chunk.len() / m;
        let mut tape = Tape::new();
        let leaves = model.scene.leaves(&mut tape, false)?;
        let zv = tape.constant(1, z.len(), z)?;
        let x = tape.constant(n, m, chunk)?;
        let o = model.scene.apply(&mut tape, &leaves, zv, x, &RowGroups::from_counts(&[n]), 1.0)?;
        out.extend_from_slice(tape.value(o.value));
    }
    Ok(out)
}

/// Renders the scene field at the pixel centres of a `width x height` image.
pub fn render_image(model: &NfmpModel, z: &[f64], width: usize, height: usize) -> Result<SceneSamples> {
    if model.dims.scene_dim != 2 {
        return Err(NfmpError::WrongMode("image rendering needs a 2D scene field".into()));
    }
    let grid = SceneSamples::from_image(width, height, model.dims.channels, vec![0.0; width * height * model.dims.channels])?;
    let values = scene_values(model, z, &grid.coords)?;
    SceneSamples::from_image(width, height, model.dims.channels, values)
}

/// Explicit motion sampled at `k` uniform times, in data units.
pub fn generate_trajectory(model: &NfmpModel, z: &[f64], k: usize) -> Result<Trajectory> {
    if !model.motion.is_explicit() {
        return Err(NfmpError::WrongMode("generate_trajectory requires an explicit motion field".into()));
    }
    if k < 2 {
        return Err(NfmpError::InvalidArgument(format!("trajectories need at least 2 samples, got {k}")));
    }
    if z.len() != model.embed_dim() {
        return Err(NfmpError::Dimension(format!("embedding has dim {}, expected {}", z.len(), model.embed_dim())));
    }
    let times = uniform_times(k);
    let mut tape = Tape::new();
    let leaves = model.motion.leaves(&mut tape, false)?;
    let zv = tape.constant(1, z.len(), z)?;
    let t = tape.constant(k, 1, times.clone())?;
    let q = model.motion.apply_explicit(&mut tape, &leaves, zv, t, &RowGroups::from_counts(&[k]))?;
    let scale = model.dims.motion_scale;
    let values = tape.value(q).iter().map(|v| v / scale).collect();
    Ok(Trajectory { joints: model.dims.joints, times, values })
}

/// A cost over `(q, t)` with gradient in `q`, evaluated for all waypoints.
pub trait CostField {
    fn joints(&self) -> usize;
    /// Costs `K` and gradients `K x J` at waypoints `q` (`K x J`) and times `t`.
    fn cost_grad(&self, q: &[f64], t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// The implicit motion field of a model at a fixed embedding.
pub struct ModelCost<'a> {
    pub model: &'a NfmpModel,
    pub z: &'a [f64],
}

impl CostField for ModelCost<'_> {
    fn joints(&self) -> usize {
        self.model.dims.joints
    }

    fn cost_grad(&self, q: &[f64], t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let MotionField::Implicit(_) = &self.model.motion else {
            return Err(NfmpError::WrongMode("trajectory optimisation requires an implicit motion field".into()));
        };
        let j = self.joints();
        let k = t.len();
        let mut tape = Tape::new();
        let leaves = self.model.motion.leaves(&mut tape, false)?;
        let zv = tape.constant(1, self.z.len(), self.z)?;
        let qv = tape.leaf(k, j, q)?;
        let tv = tape.constant(k, 1, t)?;
        let qt = tape.concat_cols(&[qv, tv])?;
        let out = self.model.motion.apply_implicit(&mut tape, &leaves, zv, qt, &RowGroups::from_counts(&[k]), 1.0)?;
        let total = tape.sum(out.value)?;
        let mut grads = tape.backward(total)?;
        Ok((tape.value(out.value).to_vec(), grads.take(qv, k * j)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajOptions {
    pub iters: usize,
    pub lr: f64,
    pub smooth_weight: f64,
    /// Per-joint `(lo, hi)` box the waypoints are clamped to after every step.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl TrajOptions {
    pub fn from_config(c: &crate::config::Config) -> Self {
        Self { iters: c.traj_iters, lr: c.traj_lr, smooth_weight: c.smooth_weight, bounds: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajResult {
    pub trajectory: Trajectory,
    /// Mean cost over the waypoints of the returned trajectory.
    pub mean_cost: f64,
    /// Objective value per iteration of the returned run.
    pub objective_history: Vec<f64>,
    /// Index of the initialisation that produced the result.
    pub init_index: usize,
}

fn smoothness(q: &[f64], j: usize) -> (f64, Vec<f64>) {
    let k = q.len() / j;
    let mut s = 0.0;
    let mut g = vec![0.0; q.len()];
    for r in 0..k.saturating_sub(1) {
        for c in 0..j {
            let d = q[(r + 1) * j + c] - q[r * j + c];
            s += d * d;
            g[(r + 1) * j + c] += 2.0 * d;
            g[r * j + c] -= 2.0 * d;
        }
    }
    (s, g)
}

fn optimize_one(cost: &dyn CostField, init: &Trajectory, opts: &TrajOptions) -> Result<(Trajectory, f64, f64, Vec<f64>)> {
    let j = cost.joints();
    if init.joints != j || init.len() < 2 {
        return Err(NfmpError::Dimension(format!(
            "initial trajectory is {}x{}, cost expects K>=2 rows of {j}",
            init.len(),
            init.joints
        )));
    }
    let k = init.len();
    let mut q = init.values.clone();
    let mut adam = AdamState::new(q.len());
    let mut history = Vec::with_capacity(opts.iters);
    let objective = |q: &[f64]| -> Result<(f64, f64, Vec<f64>)> {
        let (costs, cg) = cost.cost_grad(q, &init.times)?;
        let mean = costs.iter().sum::<f64>() / k as f64;
        let (s, sg) = smoothness(q, j);
        let obj = mean + opts.smooth_weight * s;
        if !obj.is_finite() {
            return Err(NfmpError::NonFiniteLoss { context: "trajectory optimisation", value: obj });
        }
        let g = cg.iter().zip(&sg).map(|(a, b)| a / k as f64 + opts.smooth_weight * b).collect();
        Ok((obj, mean, g))
    };
    for _ in 0..opts.iters {
        let (obj, _, g) = objective(&q)?;
        history.push(obj);
        adam.step(&mut q, &g, opts.lr)?;
        if let Some(b) = &opts.bounds {
            for (i, v) in q.iter_mut().enumerate() {
                let (lo, hi) = b[i % j];
                *v = v.clamp(lo, hi);
            }
        }
    }
    let (obj, mean, _) = objective(&q)?;
    history.push(obj);
    Ok((Trajectory { joints: j, times: init.times.clone(), values: q }, obj, mean, history))
}

/// Minimises mean waypoint cost plus `smooth_weight * sum |q_{k+1} - q_k|^2`
/// from each initialisation and returns the run with the lowest objective.
pub fn optimize_trajectory_with(cost: &dyn CostField, inits: &[Trajectory], opts: &TrajOptions) -> Result<TrajResult> {
    if inits.is_empty() {
        return Err(NfmpError::InvalidArgument("at least one initial trajectory is required".into()));
    }
    if let Some(b) = &opts.bounds {
        if b.len() != cost.joints() {
            return Err(NfmpError::Dimension("bounds must give one range per joint".into()));
        }
    }
    let mut best: Option<(f64, TrajResult)> = None;
    for (i, init) in inits.iter().enumerate() {
        let (trajectory, obj, mean_cost, objective_history) = optimize_one(cost, init, opts)?;
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, TrajResult { trajectory, mean_cost, objective_history, init_index: i }));
        }
    }
    Ok(best.expect("non-empty inits").1)
}

/// Trajectory optimisation on the model's implicit motion field.
pub fn optimize_trajectory(model: &NfmpModel, z: &[f64], inits: &[Trajectory], opts: &TrajOptions) -> Result<TrajResult> {
    if model.motion.is_explicit() {
        return Err(NfmpError::WrongMode("optimize_trajectory requires an implicit motion field".into()));
    }
    if z.len() != model.embed_dim() {
        return Err(NfmpError::Dimension(format!("embedding has dim {}, expected {}", z.len(), model.embed_dim())));
    }
    optimize_trajectory_with(&ModelCost { model, z }, inits, opts)
}

/// Straight-line trajectory between two states.
pub fn line_trajectory(from: &[f64], to: &[f64], k: usize) -> Trajectory {
    let times = uniform_times(k);
    let values = times.iter().flat_map(|&t| from.iter().zip(to).map(move |(a, b)| a + t * (b - a))).collect();
    Trajectory { joints: from.len(), times, values }
}

/// Four seeded starts: the first joint ramps across the box while the
/// others sit near the upper or the lower extreme, plus two random lines.
pub fn default_inits(bounds: &[(f64, f64)], k: usize, seed: u64) -> Vec<Trajectory> {
    let j = bounds.len();
    let at = |frac: f64, d: usize| bounds[d].0 + frac * (bounds[d].1 - bounds[d].0);
    let extreme = |frac: f64| {
        let from: Vec<f64> = (0..j).map(|d| if d == 0 { at(0.1, d) } else { at(frac, d) }).collect();
        let to: Vec<f64> = (0..j).map(|d| if d == 0 { at(0.9, d) } else { at(frac, d) }).collect();
        line_trajectory(&from, &to, k)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = || {
        let mut p = || (0..j).map(|d| at(rng.gen_range(0.0..=1.0), d)).collect::<Vec<_>>();
        let (a, b) = (p(), p());
        line_trajectory(&a, &b, k)
    };
    vec![extreme(0.9), extreme(0.1), random(), random()]
}

/// Trajectory of embedding `z` in data units: sampled directly from an
/// explicit motion field, or optimised from seeded inits over the workspace
/// box for an implicit one.
pub fn motion_for(model: &NfmpModel, z: &[f64], k: usize, opts: &TrajOptions, seed: u64) -> Result<Trajectory> {
    if model.motion.is_explicit() {
        return generate_trajectory(model, z, k);
    }
    let bounds = workspace_box().to_vec();
    let mut traj = opts.clone();
    traj.bounds.get_or_insert(bounds.clone());
    let inits = default_inits(&bounds, k, seed);
    Ok(optimize_trajectory(model, z, &inits, &traj)?.trajectory)
}

/// `(1 - s) z_a + s z_b`.
pub fn interpolate_embedding(z_a: &[f64], z_b: &[f64], s: f64) -> Result<Vec<f64>> {
    if z_a.len() != z_b.len() {
        return Err(NfmpError::Dimension(format!("embeddings of dim {} and {}", z_a.len(), z_b.len())));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(NfmpError::InvalidArgument(format!("interpolation weight {s} outside [0, 1]")));
    }
    Ok(z_a.iter().zip(z_b).map(|(a, b)| (1.0 - s) * a + s * b).collect())
}

/// Zero level set of a 3D scene field on a `res^3` grid over `bounds`.
pub fn extract_mesh(model: &NfmpModel, z: &[f64], res: usize, bounds: ([f64; 3], [f64; 3])) -> Result<Mesh> {
    if model.dims.scene_dim != 3 || model.dims.channels != 1 {
        return Err(NfmpError::WrongMode("mesh extraction needs a 3D signed distance field".into()));
    }
    if res < 8 {
        return Err(NfmpError::InvalidArgument(format!("mesh resolution must be at least 8, got {res}")));
    }
    let coords: Vec<f64> = grid_points(res, bounds).into_iter().flatten().collect();
    let values = scene_values(model, z, &coords)?;
    marching_cubes(&values, res, bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::model::{init_model, ModelDims};
    use crate::tasks::TaskKind;

    fn tiny(kind: TaskKind, demos: usize) -> NfmpModel {
        let mut c = Config::default();
        c.hidden = 12;
        c.embed_dim = 6;
        c.hyper_hidden = 8;
        let mut m = init_model(&c, &ModelDims::for_task(kind, 1, demos)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        m.embeddings.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        m
    }

    fn opts(iters: usize) -> FitOptions {
        FitOptions { iters, lr: 0.05, batch: 1024, seed: 1, record_trace: true }
    }

    #[test]
    fn softmax_weights_are_a_simplex() {
        let w = SimplexWeights { logits: vec![300.0, -200.0, 0.5, 1e-3] };
        let a = w.alpha();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(SimplexWeights::uniform(4).alpha().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let m = tiny(TaskKind::Peg, 4);
        let values: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let scene = SceneSamples::from_image(6, 6, 1, values).unwrap();
        let w = SimplexWeights { logits: vec![0.3, -0.8, 1.1, 0.0] };
        let k = m.embed_dim();
        let (_, gz) = scene_loss_grad(&m, &w.combine(&m.embeddings, k), &scene.coords, &scene.values).unwrap();
        let g = logit_grad(&w, &m.embeddings, &gz);
        let h = 1e-6;
        for i in 0..4 {
            let mut hi = w.clone();
            hi.logits[i] += h;
            let mut lo = w.clone();
            lo.logits[i] -= h;
            let fd = (scene_loss(&m, &hi.combine(&m.embeddings, k), &scene).unwrap()
                - scene_loss(&m, &lo.combine(&m.embeddings, k), &scene).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1e-3), "logit {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn single_demo_weight_is_one() {
        let m = tiny(TaskKind::Peg, 1);
        let scene = SceneSamples::from_image(4, 4, 1, vec![0.3; 16]).unwrap();
        let r = fit_embedding(&m, &scene, &opts(5)).unwrap();
        assert_eq!(r.weights.alpha(), vec![1.0]);
    }

    #[test]
    fn zero_iterations_stay_uniform() {
        let m = tiny(TaskKind::Peg, 3);
        let scene = SceneSamples::from_image(4, 4, 1, vec![0.3; 16]).unwrap();
        assert!(fit_embedding(&m, &scene, &opts(0)).is_err());
        let r = fit_embedding_iters(&m, &scene, &opts(0)).unwrap();
        assert_eq!(r.weights.alpha(), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn fit_reduces_loss_and_never_touches_parameters() {
        let m = tiny(TaskKind::Peg, 3);
        let before = crate::checkpoint::to_bytes(&m);
        let target = render_image(&m, m.embedding(2), 6, 6).unwrap();
        let r = fit_embedding(&m, &target, &opts(60)).unwrap();
        assert_eq!(crate::checkpoint::to_bytes(&m), before);
        assert!(r.loss < r.loss_history[0]);
        for a in &r.alpha_trace {
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(a.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn trajectory_endpoints_match_direct_evaluation() {
        let m = tiny(TaskKind::Peg, 2);
        let z = m.embedding(1).to_vec();
        let tr = generate_trajectory(&m, &z, 2).unwrap();
        assert_eq!(tr.values.len(), 12);
        for (r, t) in [0.0, 1.0].into_iter().enumerate() {
            let want = m.motion_value(&z, t).unwrap();
            for j in 0..6 {
                approx::assert_relative_eq!(tr.row(r)[j], want[j], max_relative = 1e-10, epsilon = 1e-12);
            }
        }
        assert!(generate_trajectory(&tiny(TaskKind::Multivalued, 2), &z, 4).is_err());
    }

    struct Bowl(Vec<f64>);

    impl CostField for Bowl {
        fn joints(&self) -> usize {
            self.0.len()
        }
        fn cost_grad(&self, q: &[f64], _t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
            let j = self.0.len();
            let mut c = Vec::new();
            let mut g = Vec::new();
            for row in q.chunks_exact(j) {
                c.push(row.iter().zip(&self.0).map(|(a, b)| (a - b).powi(2)).sum());
                g.extend(row.iter().zip(&self.0).map(|(a, b)| 2.0 * (a - b)));
            }
            Ok((c, g))
        }
    }

    #[test]
    fn analytic_bowl_converges_to_centre() {
        let centre = vec![0.3, -0.2];
        let init = line_trajectory(&[0.0, 0.4], &[0.9, -0.4], 16);
        let o = TrajOptions { iters: 2000, lr: 0.01, smooth_weight: 1e-3, bounds: None };
        let r = optimize_trajectory_with(&Bowl(centre.clone()), &[init], &o).unwrap();
        for k in 0..16 {
            for j in 0..2 {
                assert!((r.trajectory.row(k)[j] - centre[j]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn bounds_are_enforced() {
        let init = line_trajectory(&[0.0, 0.0], &[0.0, 0.0], 4);
        let o = TrajOptions { iters: 50, lr: 0.1, smooth_weight: 0.0, bounds: Some(vec![(0.0, 1.0), (-0.5, 0.5)]) };
        let r = optimize_trajectory_with(&Bowl(vec![3.0, -3.0]), &[init], &o).unwrap();
        for k in 0..4 {
            assert_eq!(r.trajectory.row(k), &[1.0, -0.5]);
        }
    }

    #[test]
    fn model_cost_gradient_matches_differences() {
        let m = tiny(TaskKind::Multivalued, 2);
        let z = m.embedding(0).to_vec();
        let cost = ModelCost { model: &m, z: &z };
        let q = vec![0.2, 0.1, 0.5, -0.3];
        let t = vec![0.25, 0.75];
        let (c, g) = cost.cost_grad(&q, &t).unwrap();
        for (i, &tk) in t.iter().enumerate() {
            approx::assert_relative_eq!(c[i], m.motion.motion_cost(&z, &q[i * 2..i * 2 + 2], tk).unwrap(), max_relative = 1e-10);
        }
        let h = 1e-6;
        for i in 0..4 {
            let mut qp = q.clone();
            qp[i] += h;
            let mut qm = q.clone();
            qm[i] -= h;
            let fd = (cost.cost_grad(&qp, &t).unwrap().0.iter().sum::<f64>() - cost.cost_grad(&qm, &t).unwrap().0.iter().sum::<f64>()) / (2.0 * h);
            approx::assert_relative_eq!(g[i], fd, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let a = [1.0, -2.0, 0.5];
        let b = [3.0, 4.0, 0.5];
        assert_eq!(interpolate_embedding(&a, &b, 0.0).unwrap(), a.to_vec());
        assert_eq!(interpolate_embedding(&a, &b, 1.0).unwrap(), b.to_vec());
        assert_eq!(interpolate_embedding(&a, &b, 0.5).unwrap(), vec![2.0, 1.0, 0.5]);
        assert!(interpolate_embedding(&a, &b[..2], 0.5).is_err());
        assert!(interpolate_embedding(&a, &b, 1.5).is_err());
    }

    #[test]
    fn default_inits_stay_in_box() {
        let b = [(0.0, 1.0), (-0.5, 0.5)];
        let inits = default_inits(&b, 8, 3);
        assert_eq!(inits.len(), 4);
        for tr in &inits {
            for k in 0..8 {
                let r = tr.row(k);
                assert!((0.0..=1.0).contains(&r[0]) && (-0.5..=0.5).contains(&r[1]));
            }
        }
        assert!(inits[0].row(3)[1] > 0.3 && inits[1].row(3)[1] < -0.3);
    }

    #[test]
    fn mesh_requires_sdf_model() {
        let m = tiny(TaskKind::Peg, 2);
        assert!(extract_mesh(&m, m.embedding(0), 16, ([-1.0; 3], [1.0; 3])).is_err());
        let s = tiny(TaskKind::SdfBox, 2);
        let mesh = extract_mesh(&s, s.embedding(0), 8, ([-1.0; 3], [1.0; 3])).unwrap();
        mesh.validate().unwrap();
        assert!(extract_mesh(&s, s.embedding(0), 4, ([-1.0; 3], [1.0; 3])).is_err());
    }
}
