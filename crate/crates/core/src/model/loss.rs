use rand::Rng;

use super::NfmpModel;
use crate::data::{Demonstration, MotionSamples};
use crate::diffcore::{RowGroups, Tape, Var};
use crate::error::{NfmpError, Result};
use crate::fields::{MotionField, MotionLeaves};

/// Scene and motion samples for one optimisation step, grouped by demo.
/// Motion targets are already in the model's internal units.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub scene_counts: Vec<usize>,
    pub scene_coords: Vec<f64>,
    pub scene_values: Vec<f64>,
    pub motion_counts: Vec<usize>,
    /// `t` (explicit) or `(q, t)` (implicit) rows.
    pub motion_inputs: Vec<f64>,
    /// `q` (explicit) or cost (implicit) rows.
    pub motion_targets: Vec<f64>,
}

/// Named loss components; `total` is their weighted sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub motion: f64,
    pub scene: f64,
    pub deform_reg: f64,
    pub embed_reg: f64,
    pub total: f64,
}

fn split_counts(total: usize, demos: usize) -> Vec<usize> {
    let base = total / demos;
    let rem = total % demos;
    (0..demos).map(|i| (base + usize::from(i < rem)).max(1)).collect()
}

impl Batch {
    /// Gathers the given per-demo sample indices.
    pub fn from_indices(
        model: &NfmpModel,
        demos: &[Demonstration],
        scene_idx: &[Vec<usize>],
        motion_idx: &[Vec<usize>],
    ) -> Result<Self> {
        check_demos(model, demos)?;
        let scale = model.dims.motion_scale;
        let mut b = Batch {
            scene_counts: Vec::with_capacity(demos.len()),
            scene_coords: Vec::new(),
            scene_values: Vec::new(),
            motion_counts: Vec::with_capacity(demos.len()),
            motion_inputs: Vec::new(),
            motion_targets: Vec::new(),
        };
        for (d, (si, mi)) in demos.iter().zip(scene_idx.iter().zip(motion_idx)) {
            b.scene_counts.push(si.len());
            for &i in si {
                b.scene_coords.extend_from_slice(d.scene.coord(i));
                b.scene_values.extend_from_slice(d.scene.value(i));
            }
            b.motion_counts.push(mi.len());
            match &d.motion {
                MotionSamples::Explicit { joints, times, values } => {
                    for &i in mi {
                        b.motion_inputs.push(times[i]);
                        b.motion_targets.extend(values[i * joints..(i + 1) * joints].iter().map(|v| v * scale));
                    }
                }
                MotionSamples::Implicit { joints, points, costs } => {
                    let w = joints + 1;
                    for &i in mi {
                        b.motion_inputs.extend_from_slice(&points[i * w..(i + 1) * w]);
                        b.motion_targets.push(costs[i] * scale);
                    }
                }
            }
        }
        Ok(b)
    }

    /// Every sample of every demo.
    pub fn full(model: &NfmpModel, demos: &[Demonstration]) -> Result<Self> {
        let scene: Vec<Vec<usize>> = demos.iter().map(|d| (0..d.scene.len()).collect()).collect();
        let motion: Vec<Vec<usize>> = demos.iter().map(|d| (0..d.motion.len()).collect()).collect();
        Self::from_indices(model, demos, &scene, &motion)
    }

    /// Stratified draw with replacement: each demo contributes an equal share
    /// of `scene_batch` scene points and `motion_batch` motion points.
    pub fn sample(
        model: &NfmpModel,
        demos: &[Demonstration],
        scene_batch: usize,
        motion_batch: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        check_demos(model, demos)?;
        let sc = split_counts(scene_batch, demos.len());
        let mc = split_counts(motion_batch, demos.len());
        let mut scene = Vec::with_capacity(demos.len());
        let mut motion = Vec::with_capacity(demos.len());
        for (i, d) in demos.iter().enumerate() {
            scene.push((0..sc[i]).map(|_| rng.gen_range(0..d.scene.len())).collect());
            motion.push((0..mc[i]).map(|_| rng.gen_range(0..d.motion.len())).collect());
        }
        Self::from_indices(model, demos, &scene, &motion)
    }

    pub fn scene_len(&self) -> usize {
        self.scene_counts.iter().sum()
    }

    pub fn motion_len(&self) -> usize {
        self.motion_counts.iter().sum()
    }
}

fn check_demos(model: &NfmpModel, demos: &[Demonstration]) -> Result<()> {
    let dims = &model.dims;
    if demos.len() != dims.demos {
        return Err(NfmpError::Dimension(format!("model has {} embeddings but {} demos were given", dims.demos, demos.len())));
    }
    for (i, d) in demos.iter().enumerate() {
        if d.scene.coord_dim != dims.scene_dim || d.scene.channels != dims.channels {
            return Err(NfmpError::Dimension(format!(
                "demo {i}: scene is {}D with {} channels, model expects {}D with {}",
                d.scene.coord_dim, d.scene.channels, dims.scene_dim, dims.channels
            )));
        }
        if d.motion.is_explicit() == dims.implicit || d.motion.joints() != dims.joints {
            return Err(NfmpError::Dimension(format!("demo {i}: motion samples do not match the motion field")));
        }
        if d.scene.is_empty() || d.motion.is_empty() {
            return Err(NfmpError::InvalidArgument(format!("demo {i} has no samples")));
        }
    }
    Ok(())
}

pub(crate) struct LossGraph {
    pub motion: Var,
    pub scene: Var,
    pub deform: Var,
    pub embed: Var,
    pub total: Var,
    pub z: Var,
    /// Per parameter vector (in `param_vectors` order): leaves with their lengths.
    pub params: Vec<Vec<(Var, usize)>>,
}

impl LossGraph {
    pub fn record(&self, tape: &Tape<'_>) -> LossRecord {
        LossRecord {
            motion: tape.scalar_value(self.motion),
            scene: tape.scalar_value(self.scene),
            deform_reg: tape.scalar_value(self.deform),
            embed_reg: tape.scalar_value(self.embed),
            total: tape.scalar_value(self.total),
        }
    }
}

fn with_len(tape: &Tape<'_>, vars: impl IntoIterator<Item = Var>) -> Vec<(Var, usize)> {
    vars.into_iter()
        .map(|v| {
            let (r, c) = tape.shape(v);
            (v, r * c)
        })
        .collect()
}

/// Sum of squared row norms divided by the row count.
fn mean_sq_norm(tape: &mut Tape<'_>, a: Var) -> Result<Var> {
    let (rows, _) = tape.shape(a);
    let sq = tape.square(a)?;
    let s = tape.sum(sq)?;
    Ok(tape.scale(s, 1.0 / rows as f64)?)
}

fn residual_loss(tape: &mut Tape<'_>, pred: Var, target: &[f64]) -> Result<Var> {
    let (r, c) = tape.shape(pred);
    let neg = tape.constant(r, c, target.iter().map(|v| -v).collect::<Vec<_>>())?;
    let diff = tape.add(pred, neg)?;
    mean_sq_norm(tape, diff)
}

pub(crate) fn build_loss<'a>(
    tape: &mut Tape<'a>,
    model: &'a NfmpModel,
    batch: &'a Batch,
    progress: f64,
    trainable: bool,
) -> Result<LossGraph> {
    let dims = &model.dims;
    if batch.scene_len() == 0 || batch.motion_len() == 0 {
        return Err(NfmpError::InvalidArgument("empty batch".into()));
    }
    if batch.scene_counts.len() != dims.demos || batch.motion_counts.len() != dims.demos {
        return Err(NfmpError::Dimension("batch does not cover every demo".into()));
    }
    let k = model.embed_dim();
    let w = (model.config.w_motion, model.config.w_scene, model.config.w_deform, model.config.w_embed);

    let scene_leaves = model.scene.leaves(tape, trainable)?;
    let motion_leaves = model.motion.leaves(tape, trainable)?;
    let mut params = vec![
        with_len(tape, scene_leaves.template.iter().copied()),
        with_len(tape, scene_leaves.deformation.iter().flatten().copied()),
    ];
    match &motion_leaves {
        MotionLeaves::Explicit(heads) => params.push(with_len(tape, heads.iter().flatten().copied())),
        MotionLeaves::Implicit(l) => {
            params.push(with_len(tape, l.template.iter().copied()));
            params.push(with_len(tape, l.deformation.iter().flatten().copied()));
        }
    }

    let z = tape.leaf(dims.demos, k, model.embeddings.as_slice())?;

    let n = batch.scene_len();
    let x = tape.constant(n, dims.scene_dim, batch.scene_coords.as_slice())?;
    let groups = RowGroups::from_counts(&batch.scene_counts);
    let out = model.scene.apply(tape, &scene_leaves, z, x, &groups, progress)?;
    let scene = residual_loss(tape, out.value, &batch.scene_values)?;
    let deform = mean_sq_norm(tape, out.offset)?;

    let m = batch.motion_len();
    let mgroups = RowGroups::from_counts(&batch.motion_counts);
    let pred = match &model.motion {
        MotionField::Explicit(_) => {
            let t = tape.constant(m, 1, batch.motion_inputs.as_slice())?;
            model.motion.apply_explicit(tape, &motion_leaves, z, t, &mgroups)?
        }
        MotionField::Implicit(_) => {
            let qt = tape.constant(m, dims.joints + 1, batch.motion_inputs.as_slice())?;
            model.motion.apply_implicit(tape, &motion_leaves, z, qt, &mgroups, progress)?.value
        }
    };
    let motion = residual_loss(tape, pred, &batch.motion_targets)?;

    let zsq = tape.square(z)?;
    let zsum = tape.sum(zsq)?;
    let embed = tape.scale(zsum, 1.0 / dims.demos as f64)?;

    let terms = [(motion, w.0), (scene, w.1), (deform, w.2), (embed, w.3)];
    let mut total = tape.scale(terms[0].0, terms[0].1)?;
    for &(v, wi) in &terms[1..] {
        let s = tape.scale(v, wi)?;
        total = tape.add(total, s)?;
    }
    Ok(LossGraph { motion, scene, deform, embed, total, z, params })
}

/// Evaluates the four loss terms and their weighted total.
pub fn total_loss(model: &NfmpModel, batch: &Batch, progress: f64) -> Result<LossRecord> {
    if !(0.0..=1.0).contains(&progress) {
        return Err(NfmpError::InvalidArgument(format!("progress {progress} outside [0, 1]")));
    }
    let mut tape = Tape::new();
    let graph = build_loss(&mut tape, model, batch, progress, false)?;
    Ok(graph.record(&tape))
}
