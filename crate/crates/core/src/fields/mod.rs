//! Coordinate networks: positional encodings, MLPs, hypernetworks and the
//! composed scene and motion fields built from them.

mod encoding;
mod hypernet;
mod mlp;
mod motion;
mod scene;

pub use encoding::{encode, encode_on_tape, EncodingSpec};
pub use hypernet::{hypernet_eval, hypernet_leaves, hypernet_on_tape, init_hypernet_params, HypernetSpec};
pub use mlp::{init_mlp_params, mlp_eval, mlp_leaves, mlp_on_tape, MlpSpec};
pub use motion::{ExplicitMotion, MotionField, MotionLeaves};
pub use scene::{SceneField, SceneLeaves, SceneOutput, SceneValue};
