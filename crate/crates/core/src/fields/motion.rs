use super::encoding::{encode, encode_on_tape, EncodingSpec};
use super::hypernet::{hypernet_eval, hypernet_leaves, hypernet_on_tape, HypernetSpec};
use super::mlp::{mlp_eval, mlp_on_tape};
use super::scene::{SceneField, SceneLeaves, SceneOutput};
use crate::diffcore::{RowGroups, Tape, Var};
use crate::error::{NfmpError, Result};

/// Time-indexed joint trajectory `t -> q`, parametrised by a hypernet on `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitMotion {
    pub joints: usize,
    pub bands: usize,
    pub hyper_spec: HypernetSpec,
    pub hyper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MotionField {
    Explicit(ExplicitMotion),
    /// Cost field over `(q, t)` with the same template/deformation structure
    /// as the scene field.
    Implicit(SceneField),
}

pub enum MotionLeaves {
    Explicit(Vec<Vec<Var>>),
    Implicit(SceneLeaves),
}

impl ExplicitMotion {
    pub fn new(joints: usize, bands: usize, hyper_spec: HypernetSpec, hyper: Vec<f64>) -> Result<Self> {
        let enc = EncodingSpec::full(1, bands).encoded_dim();
        if hyper_spec.target.input_dim() != enc || hyper_spec.target.output_dim() != joints {
            return Err(NfmpError::Dimension(format!(
                "explicit motion target {:?} incompatible with encoding dim {enc} and {joints} joints",
                hyper_spec.target.layer_sizes()
            )));
        }
        if hyper.len() != hyper_spec.param_count() {
            return Err(NfmpError::Dimension("explicit motion parameter length mismatch".into()));
        }
        Ok(Self { joints, bands, hyper_spec, hyper })
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(NfmpError::InvalidArgument(format!("time must lie in [0, 1], got {t}")));
    }
    Ok(())
}

impl MotionField {
    pub fn joints(&self) -> usize {
        match self {
            MotionField::Explicit(e) => e.joints,
            MotionField::Implicit(f) => f.coord_dim - 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            MotionField::Explicit(_) => 1,
            MotionField::Implicit(f) => f.coord_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            MotionField::Explicit(e) => e.joints,
            MotionField::Implicit(_) => 1,
        }
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self, MotionField::Explicit(_))
    }

    /// Joint vector at time `t` (explicit mode), in the model's internal units.
    pub fn motion_eval(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let MotionField::Explicit(e) = self else {
            return Err(NfmpError::WrongMode("motion_eval requires an explicit motion field".into()));
        };
        check_time(t)?;
        let params = hypernet_eval(&e.hyper_spec, &e.hyper, z)?;
        mlp_eval(&e.hyper_spec.target, &params, &encode(&[t], &EncodingSpec::full(1, e.bands))?)
    }

    /// Cost at `(q, t)` (implicit mode).
    pub fn motion_cost(&self, z: &[f64], q: &[f64], t: f64) -> Result<f64> {
        let MotionField::Implicit(f) = self else {
            return Err(NfmpError::WrongMode("motion_cost requires an implicit motion field".into()));
        };
        check_time(t)?;
        if q.len() + 1 != f.coord_dim {
            return Err(NfmpError::Dimension(format!("state has dim {}, field expects {}", q.len(), f.coord_dim - 1)));
        }
        let mut x = q.to_vec();
        x.push(t);
        Ok(f.scene_eval(z, &x, 1.0)?.value[0])
    }

    pub fn leaves<'a>(&'a self, tape: &mut Tape<'a>, trainable: bool) -> Result<MotionLeaves> {
        Ok(match self {
            MotionField::Explicit(e) => MotionLeaves::Explicit(hypernet_leaves(tape, &e.hyper_spec, &e.hyper, trainable)?),
            MotionField::Implicit(f) => MotionLeaves::Implicit(f.leaves(tape, trainable)?),
        })
    }

    /// Explicit mode on tape: `t` is `M x 1`, returns `M x J`.
    pub fn apply_explicit(
        &self,
        tape: &mut Tape<'_>,
        leaves: &MotionLeaves,
        z: Var,
        t: Var,
        groups: &RowGroups,
    ) -> Result<Var> {
        let (MotionField::Explicit(e), MotionLeaves::Explicit(heads)) = (self, leaves) else {
            return Err(NfmpError::WrongMode("explicit evaluation on an implicit motion field".into()));
        };
        let layers = hypernet_on_tape(tape, &e.hyper_spec, heads, z)?;
        let et = encode_on_tape(tape, t, &EncodingSpec::full(1, e.bands))?;
        mlp_on_tape(tape, &e.hyper_spec.target, &layers, et, Some(groups))
    }

    /// Implicit mode on tape: `qt` is `M x (J+1)` with time in the last column.
    pub fn apply_implicit(
        &self,
        tape: &mut Tape<'_>,
        leaves: &MotionLeaves,
        z: Var,
        qt: Var,
        groups: &RowGroups,
        progress: f64,
    ) -> Result<SceneOutput> {
        let (MotionField::Implicit(f), MotionLeaves::Implicit(l)) = (self, leaves) else {
            return Err(NfmpError::WrongMode("implicit evaluation on an explicit motion field".into()));
        };
        f.apply(tape, l, z, qt, groups, progress)
    }
}
