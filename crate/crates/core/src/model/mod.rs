//! The full model: scene field, motion field and per-demonstration
//! embeddings, plus the joint training loop.

mod loss;
mod train;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{NfmpError, Result};
use crate::fields::{
    init_hypernet_params, init_mlp_params, EncodingSpec, ExplicitMotion, HypernetSpec, MlpSpec, MotionField,
    SceneField,
};
use crate::tasks::TaskKind;

pub use loss::{total_loss, Batch, LossRecord};
pub use train::{progress_at, train, TrainConfig, Trainer};

/// Scale applied to the deformation network's final layer at init, so the
/// initial deformation is small but not identically zero.
pub const DEFORM_INIT_SCALE: f64 = 0.1;

/// Problem dimensions that the configuration file does not carry.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDims {
    /// Scene coordinate dimension `m`.
    pub scene_dim: usize,
    /// Scene output dimension (channels, or 1 for an SDF).
    pub channels: usize,
    /// Joint / state dimension `J`.
    pub joints: usize,
    /// Number of training demonstrations `n`.
    pub demos: usize,
    pub implicit: bool,
    /// Data units are multiplied by this before supervision (degrees to radians).
    pub motion_scale: f64,
}

impl ModelDims {
    pub fn for_task(kind: TaskKind, channels: usize, demos: usize) -> Self {
        Self {
            scene_dim: kind.scene_dim(),
            channels: if kind.is_image() { channels } else { 1 },
            joints: kind.joints(),
            demos,
            implicit: kind.is_implicit(),
            motion_scale: if kind.uses_degrees() { PI / 180.0 } else { 1.0 },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.scene_dim == 0 || self.channels == 0 || self.joints == 0 || self.demos == 0 {
            return Err(NfmpError::InvalidArgument(format!("model dimensions must be positive: {self:?}")));
        }
        if !(self.motion_scale.is_finite() && self.motion_scale > 0.0) {
            return Err(NfmpError::InvalidArgument(format!("invalid motion scale {}", self.motion_scale)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NfmpModel {
    pub config: Config,
    pub dims: ModelDims,
    pub scene: SceneField,
    pub motion: MotionField,
    /// `n x k`, row-major.
    pub embeddings: Vec<f64>,
}

/// Builds a freshly initialised model: seeded network weights, zero embeddings.
pub fn init_model(config: &Config, dims: &ModelDims) -> Result<NfmpModel> {
    dims.validate()?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let k = c.embed_dim;

    let scene = template_deformation_field(c, dims.scene_dim, dims.channels, c.template_bands, &mut rng)?;
    let motion = if dims.implicit {
        MotionField::Implicit(template_deformation_field(c, dims.joints + 1, 1, c.motion_bands, &mut rng)?)
    } else {
        let enc = EncodingSpec::full(1, c.motion_bands).encoded_dim();
        let target = MlpSpec::uniform(enc, c.hidden, c.layers, dims.joints)?;
        let spec = HypernetSpec::new(k, c.hyper_hidden, c.hyper_layers, target)?;
        let hyper = init_hypernet_params(&spec, 1.0, &mut rng);
        MotionField::Explicit(ExplicitMotion::new(dims.joints, c.motion_bands, spec, hyper)?)
    };
    Ok(NfmpModel { config: config.clone(), dims: dims.clone(), scene, motion, embeddings: vec![0.0; dims.demos * k] })
}

fn template_deformation_field(
    c: &Config,
    coord_dim: usize,
    out_dim: usize,
    template_bands: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SceneField> {
    let t_in = EncodingSpec::full(coord_dim, template_bands).encoded_dim();
    let d_in = EncodingSpec::full(coord_dim, c.deform_bands).encoded_dim();
    let tspec = MlpSpec::uniform(t_in, c.hidden, c.layers, out_dim)?;
    let dspec = HypernetSpec::new(c.embed_dim, c.hyper_hidden, c.hyper_layers, MlpSpec::uniform(d_in, c.hidden, c.layers, coord_dim)?)?;
    let template = init_mlp_params(&tspec, rng);
    let deformation = init_hypernet_params(&dspec, DEFORM_INIT_SCALE, rng);
    SceneField::new(coord_dim, tspec, template_bands, template, dspec, c.deform_bands, deformation)
}

impl NfmpModel {
    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn num_demos(&self) -> usize {
        self.dims.demos
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        let k = self.embed_dim();
        &self.embeddings[i * k..(i + 1) * k]
    }

    /// Named network parameter vectors, in a fixed order.
    pub fn param_vectors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> =
            vec![("scene.template", &self.scene.template), ("scene.deformation", &self.scene.deformation)];
        match &self.motion {
            MotionField::Explicit(e) => out.push(("motion.hyper", &e.hyper)),
            MotionField::Implicit(f) => {
                out.push(("motion.template", &f.template));
                out.push(("motion.deformation", &f.deformation));
            }
        }
        out
    }

    pub fn param_vectors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.scene.template, &mut self.scene.deformation];
        match &mut self.motion {
            MotionField::Explicit(e) => out.push(&mut e.hyper),
            MotionField::Implicit(f) => {
                out.push(&mut f.template);
                out.push(&mut f.deformation);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_vectors().iter().map(|(_, v)| v.len()).sum()
    }

    /// Scene field value at `x` for embedding `z`, full bandwidth.
    pub fn scene_value(&self, z: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.scene.scene_eval(z, x, 1.0)?.value)
    }

    /// Explicit motion at time `t` in data units.
    pub fn motion_value(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let q = self.motion.motion_eval(z, t)?;
        Ok(q.into_iter().map(|v| v / self.dims.motion_scale).collect())
    }
}
