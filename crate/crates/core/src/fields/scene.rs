use super::encoding::{encode, encode_on_tape, EncodingSpec};
use super::hypernet::{hypernet_eval, hypernet_leaves, hypernet_on_tape, HypernetSpec};
use super::mlp::{mlp_eval, mlp_leaves, mlp_on_tape, MlpSpec};
use crate::diffcore::{RowGroups, Tape, Var};
use crate::error::{NfmpError, Result};

/// Template/deformation field `F_z(x) = T(x + D_z(x))`.
///
/// `T` is a standalone MLP over a high-bandwidth encoding of the deformed
/// coordinate. `D_z` is an MLP over a low-bandwidth encoding of `x` whose
/// parameters come from a hypernetwork on `z`. The same structure serves as
/// the implicit motion cost field over `(q, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneField {
    pub coord_dim: usize,
    pub template_spec: MlpSpec,
    pub template_bands: usize,
    pub template: Vec<f64>,
    pub deformation_spec: HypernetSpec,
    pub deform_bands: usize,
    pub deformation: Vec<f64>,
}

/// Field value plus the coordinate offset produced by the deformation.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneValue {
    pub value: Vec<f64>,
    pub offset: Vec<f64>,
}

pub struct SceneLeaves {
    pub template: Vec<Var>,
    pub deformation: Vec<Vec<Var>>,
}

pub struct SceneOutput {
    /// `N x out_dim`
    pub value: Var,
    /// `N x coord_dim`
    pub offset: Var,
}

impl SceneField {
    pub fn new(
        coord_dim: usize,
        template_spec: MlpSpec,
        template_bands: usize,
        template: Vec<f64>,
        deformation_spec: HypernetSpec,
        deform_bands: usize,
        deformation: Vec<f64>,
    ) -> Result<Self> {
        let t_in = EncodingSpec::full(coord_dim, template_bands).encoded_dim();
        let d_in = EncodingSpec::full(coord_dim, deform_bands).encoded_dim();
        if template_spec.input_dim() != t_in {
            return Err(NfmpError::Dimension(format!(
                "template input {} != encoded dim {t_in}",
                template_spec.input_dim()
            )));
        }
        if deformation_spec.target.input_dim() != d_in {
            return Err(NfmpError::Dimension(format!(
                "deformation input {} != encoded dim {d_in}",
                deformation_spec.target.input_dim()
            )));
        }
        if deformation_spec.target.output_dim() != coord_dim {
            return Err(NfmpError::Dimension(format!(
                "deformation output {} != coordinate dim {coord_dim}",
                deformation_spec.target.output_dim()
            )));
        }
        if template.len() != template_spec.param_count() || deformation.len() != deformation_spec.param_count() {
            return Err(NfmpError::Dimension("scene field parameter length mismatch".into()));
        }
        Ok(Self { coord_dim, template_spec, template_bands, template, deformation_spec, deform_bands, deformation })
    }

    pub fn out_dim(&self) -> usize {
        self.template_spec.output_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.deformation_spec.embed_dim
    }

    fn encodings(&self, progress: f64) -> Result<(EncodingSpec, EncodingSpec)> {
        Ok((
            EncodingSpec::new(self.coord_dim, self.template_bands, progress)?,
            EncodingSpec::new(self.coord_dim, self.deform_bands, progress)?,
        ))
    }

    /// Direct evaluation at a single coordinate.
    pub fn scene_eval(&self, z: &[f64], x: &[f64], progress: f64) -> Result<SceneValue> {
        let (enc_t, enc_d) = self.encodings(progress)?;
        let deform_params = hypernet_eval(&self.deformation_spec, &self.deformation, z)?;
        let offset = mlp_eval(&self.deformation_spec.target, &deform_params, &encode(x, &enc_d)?)?;
        let moved: Vec<f64> = x.iter().zip(&offset).map(|(a, b)| a + b).collect();
        let value = mlp_eval(&self.template_spec, &self.template, &encode(&moved, &enc_t)?)?;
        Ok(SceneValue { value, offset })
    }

    /// Template alone, bypassing the deformation.
    pub fn template_eval(&self, x: &[f64], progress: f64) -> Result<Vec<f64>> {
        let (enc_t, _) = self.encodings(progress)?;
        mlp_eval(&self.template_spec, &self.template, &encode(x, &enc_t)?)
    }

    pub fn leaves<'a>(&'a self, tape: &mut Tape<'a>, trainable: bool) -> Result<SceneLeaves> {
        Ok(SceneLeaves {
            template: mlp_leaves(tape, &self.template_spec, &self.template, trainable)?,
            deformation: hypernet_leaves(tape, &self.deformation_spec, &self.deformation, trainable)?,
        })
    }

    /// Batched evaluation: `z` is `G x k`, `x` is `N x m`, and rows of `x`
    /// in `groups.range(g)` use embedding row `g`.
    pub fn apply(
        &self,
        tape: &mut Tape<'_>,
        leaves: &SceneLeaves,
        z: Var,
        x: Var,
        groups: &RowGroups,
        progress: f64,
    ) -> Result<SceneOutput> {
        let (enc_t, enc_d) = self.encodings(progress)?;
        let deform_layers = hypernet_on_tape(tape, &self.deformation_spec, &leaves.deformation, z)?;
        let ex = encode_on_tape(tape, x, &enc_d)?;
        let offset = mlp_on_tape(tape, &self.deformation_spec.target, &deform_layers, ex, Some(groups))?;
        let moved = tape.add(x, offset)?;
        let em = encode_on_tape(tape, moved, &enc_t)?;
        let value = mlp_on_tape(tape, &self.template_spec, &leaves.template, em, None)?;
        Ok(SceneOutput { value, offset })
    }
}
