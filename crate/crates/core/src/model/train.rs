use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{build_loss, Batch, LossRecord};
use super::NfmpModel;
use crate::config::Config;
use crate::data::Demonstration;
use crate::diffcore::{AdamState, BufferPool, Tape};
use crate::error::{NfmpError, Result};

/// Loss above which training is aborted as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr_params: f64,
    pub lr_embed: f64,
    pub anneal_fraction: f64,
    pub anneal: bool,
    pub scene_batch: usize,
    pub motion_batch: usize,
    pub seed: u64,
    /// A warning is logged when the final scene loss exceeds this.
    pub scene_threshold: f64,
    /// Same for the motion loss (internal units).
    pub motion_threshold: f64,
    /// Log every this many steps; 0 disables progress logging.
    pub log_every: usize,
}

impl TrainConfig {
    pub fn from_config(c: &Config) -> Self {
        Self {
            steps: c.train_steps,
            lr_params: c.lr_params,
            lr_embed: c.lr_embed,
            anneal_fraction: c.anneal_fraction,
            anneal: c.anneal,
            scene_batch: c.scene_batch,
            motion_batch: c.motion_batch,
            seed: c.seed,
            scene_threshold: 1e-3,
            motion_threshold: 3e-4,
            log_every: 1000,
        }
    }
}

/// Encoding mask progress at `step` (0-based): a linear ramp over the first
/// `anneal_fraction * steps` steps, then 1.
pub fn progress_at(step: usize, steps: usize, anneal_fraction: f64, anneal: bool) -> f64 {
    if !anneal {
        return 1.0;
    }
    let ramp = anneal_fraction * steps as f64;
    if ramp <= 0.0 {
        return 1.0;
    }
    (step as f64 / ramp).min(1.0)
}

/// Owns a model and its optimiser state during training.
pub struct Trainer {
    pub model: NfmpModel,
    pub config: TrainConfig,
    param_states: Vec<AdamState>,
    embed_state: AdamState,
    rng: ChaCha8Rng,
    pool: BufferPool,
    pub history: Vec<LossRecord>,
}

impl Trainer {
    pub fn new(model: NfmpModel, config: TrainConfig) -> Self {
        let param_states = model.param_vectors().iter().map(|(_, v)| AdamState::new(v.len())).collect();
        let embed_state = AdamState::new(model.embeddings.len());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Self { model, config, param_states, embed_state, rng, pool: BufferPool::default(), history: Vec::new() }
    }

    /// One Adam step on all network parameters and on the embeddings.
    pub fn train_step(&mut self, batch: &Batch, progress: f64) -> Result<LossRecord> {
        let step = self.history.len();
        let (record, param_grads, embed_grad) = {
            let mut tape = Tape::new();
            let graph = build_loss(&mut tape, &self.model, batch, progress, true)?;
            let record = graph.record(&tape);
            if !record.total.is_finite() {
                return Err(NfmpError::NonFiniteLoss { context: "training", value: record.total });
            }
            if record.total > DIVERGENCE_LIMIT {
                return Err(NfmpError::Diverged { step, loss: record.total });
            }
            let mut grads = tape.backward_pooled(graph.total, &mut self.pool)?;
            let param_grads: Vec<Vec<Vec<f64>>> = graph
                .params
                .iter()
                .map(|leaves| leaves.iter().map(|&(v, len)| grads.take(v, len)).collect())
                .collect();
            let embed_grad = grads.take(graph.z, self.model.embeddings.len());
            grads.recycle(&mut self.pool);
            (record, param_grads, embed_grad)
        };
        let (lr_p, lr_e) = (self.config.lr_params, self.config.lr_embed);
        for ((params, state), blocks) in self.model.param_vectors_mut().into_iter().zip(&mut self.param_states).zip(&param_grads) {
            let mut offset = 0;
            let segments: Vec<(usize, &[f64])> = blocks
                .iter()
                .map(|g| {
                    let s = (offset, g.as_slice());
                    offset += g.len();
                    s
                })
                .collect();
            state.step_segments(params, &segments, lr_p)?;
        }
        self.embed_state.step(&mut self.model.embeddings, &embed_grad, lr_e)?;
        param_grads.into_iter().flatten().for_each(|g| self.pool.put(g));
        self.history.push(record);
        Ok(record)
    }

    /// Runs the configured number of steps with freshly sampled batches.
    pub fn run(&mut self, demos: &[Demonstration]) -> Result<()> {
        let c = self.config.clone();
        for s in 0..c.steps {
            let progress = progress_at(s, c.steps, c.anneal_fraction, c.anneal);
            let batch = Batch::sample(&self.model, demos, c.scene_batch, c.motion_batch, &mut self.rng)?;
            let r = self.train_step(&batch, progress)?;
            if c.log_every > 0 && (s % c.log_every == 0 || s + 1 == c.steps) {
                info!(
                    "step {s}/{}: total {:.3e} scene {:.3e} motion {:.3e} deform {:.3e} embed {:.3e} progress {progress:.3}",
                    c.steps, r.total, r.scene, r.motion, r.deform_reg, r.embed_reg
                );
            }
        }
        self.warn_if_unconverged();
        Ok(())
    }

    fn warn_if_unconverged(&self) {
        let tail = &self.history[self.history.len().saturating_sub(100)..];
        if tail.is_empty() {
            return;
        }
        let n = tail.len() as f64;
        let scene = tail.iter().map(|r| r.scene).sum::<f64>() / n;
        let motion = tail.iter().map(|r| r.motion).sum::<f64>() / n;
        if scene > self.config.scene_threshold {
            warn!("final scene loss {scene:.3e} above threshold {:.1e}", self.config.scene_threshold);
        }
        if motion > self.config.motion_threshold {
            warn!("final motion loss {motion:.3e} above threshold {:.1e}", self.config.motion_threshold);
        }
    }

    pub fn into_model(self) -> NfmpModel {
        self.model
    }
}

/// Trains `model` on `demos` and returns it with the per-step loss history.
pub fn train(model: NfmpModel, demos: &[Demonstration], config: &TrainConfig) -> Result<(NfmpModel, Vec<LossRecord>)> {
    if config.steps == 0 {
        return Err(NfmpError::InvalidArgument("training needs at least one step".into()));
    }
    let mut trainer = Trainer::new(model, config.clone());
    trainer.run(demos)?;
    let history = std::mem::take(&mut trainer.history);
    Ok((trainer.into_model(), history))
}
