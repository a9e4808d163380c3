//! Neural field movement primitives.
//!
//! Scenes and motions are modelled jointly as neural fields conditioned on a
//! per-demonstration embedding. Scene fields compose a shared template with
//! an embedding-dependent deformation; motion fields are either explicit
//! (`t -> q`) or implicit cost fields over `(q, t)`. At test time the
//! embedding of a new scene is recovered on the convex hull of the training
//! embeddings, and the motion field then yields the trajectory.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod fields;
pub mod inference;
pub mod io;
pub mod mesh;
pub mod model;
pub mod tasks;

pub use config::{parse_config, Config};
pub use data::{Demonstration, MotionSamples, SceneSamples, TaskParams, Trajectory};
pub use error::{NfmpError, Result};
pub use eval::{eval_report, EvalReport};
pub use inference::{fit_embedding, generate_trajectory, optimize_trajectory, FitResult, SimplexWeights};
pub use mesh::Mesh;
pub use model::{init_model, train, LossRecord, ModelDims, NfmpModel, Trainer};
pub use tasks::{TaskKind, TaskSpec};
