use rand::Rng;

use super::mlp::{init_mlp_params, mlp_eval, mlp_leaves, mlp_on_tape, MlpSpec};
use crate::diffcore::{Tape, Var};
use crate::error::{NfmpError, Result};

/// Maps an embedding `z` to the parameters of a target MLP. Each target
/// layer gets its own head, an MLP `k -> hidden^hidden_layers -> packed`
/// whose output is that layer's flattened weights followed by its biases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypernetSpec {
    pub embed_dim: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub target: MlpSpec,
}

impl HypernetSpec {
    pub fn new(embed_dim: usize, hidden: usize, hidden_layers: usize, target: MlpSpec) -> Result<Self> {
        if embed_dim == 0 || hidden == 0 {
            return Err(NfmpError::InvalidArgument("hypernet dims must be positive".into()));
        }
        Ok(Self { embed_dim, hidden, hidden_layers, target })
    }

    pub fn num_heads(&self) -> usize {
        self.target.num_layers()
    }

    pub fn head_spec(&self, layer: usize) -> MlpSpec {
        MlpSpec::uniform(self.embed_dim, self.hidden, self.hidden_layers, self.target.packed_len(layer))
            .expect("positive widths")
    }

    pub fn head_offset(&self, layer: usize) -> usize {
        (0..layer).map(|l| self.head_spec(l).param_count()).sum()
    }

    pub fn param_count(&self) -> usize {
        (0..self.num_heads()).map(|l| self.head_spec(l).param_count()).sum()
    }

    /// Total values emitted by all heads.
    pub fn output_count(&self) -> usize {
        (0..self.num_heads()).map(|l| self.head_spec(l).output_dim()).sum()
    }
}

/// Hidden layers use the standard fan-in init. Each head's output layer is
/// scaled by `1/sqrt(target fan_in)` so that the generated network starts
/// out like a conventionally initialised one; the target's final layer is
/// further multiplied by `final_layer_scale`.
pub fn init_hypernet_params(spec: &HypernetSpec, final_layer_scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.param_count());
    let last = spec.num_heads() - 1;
    for l in 0..spec.num_heads() {
        let head = spec.head_spec(l);
        let mut p = init_mlp_params(&head, rng);
        let (target_in, _) = spec.target.layer(l);
        let shrink = 1.0 / (target_in as f64).sqrt() * if l == last { final_layer_scale } else { 1.0 };
        let out_layer = head.num_layers() - 1;
        let start = head.layer_offset(out_layer);
        let (fan_in, n_out) = head.layer(out_layer);
        let wlen = fan_in * n_out;
        for v in &mut p[start..start + wlen] {
            *v *= shrink;
        }
        // biases of the output layer become a standard init of the target layer
        let base = 1.0 / (target_in as f64).sqrt() * if l == last { final_layer_scale } else { 1.0 };
        for v in &mut p[start + wlen..] {
            *v = rng.gen_range(-base..=base);
        }
        out.extend(p);
    }
    out
}

fn check_params(spec: &HypernetSpec, params: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(NfmpError::Dimension(format!(
            "hypernet needs {} parameters, got {}",
            spec.param_count(),
            params.len()
        )));
    }
    Ok(())
}

/// Direct evaluation: flat target-network parameters for embedding `z`.
pub fn hypernet_eval(spec: &HypernetSpec, params: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    check_params(spec, params)?;
    if z.len() != spec.embed_dim {
        return Err(NfmpError::Dimension(format!(
            "embedding has dim {}, hypernet expects {}",
            z.len(),
            spec.embed_dim
        )));
    }
    let mut out = Vec::with_capacity(spec.output_count());
    let mut offset = 0;
    for l in 0..spec.num_heads() {
        let head = spec.head_spec(l);
        let n = head.param_count();
        out.extend(mlp_eval(&head, &params[offset..offset + n], z)?);
        offset += n;
    }
    Ok(out)
}

/// Registers every head's layer blocks as leaves; one `Vec` per head.
pub fn hypernet_leaves<'a>(
    tape: &mut Tape<'a>,
    spec: &HypernetSpec,
    params: &'a [f64],
    trainable: bool,
) -> Result<Vec<Vec<Var>>> {
    check_params(spec, params)?;
    let mut heads = Vec::with_capacity(spec.num_heads());
    let mut offset = 0;
    for l in 0..spec.num_heads() {
        let head = spec.head_spec(l);
        let n = head.param_count();
        heads.push(mlp_leaves(tape, &head, &params[offset..offset + n], trainable)?);
        offset += n;
    }
    Ok(heads)
}

/// `z` is `G x k`; returns one `G x packed_len(l)` node per target layer,
/// directly usable as grouped affine parameters.
pub fn hypernet_on_tape(
    tape: &mut Tape<'_>,
    spec: &HypernetSpec,
    heads: &[Vec<Var>],
    z: Var,
) -> Result<Vec<Var>> {
    let (_, k) = tape.shape(z);
    if k != spec.embed_dim {
        return Err(NfmpError::Dimension(format!("embedding has dim {k}, hypernet expects {}", spec.embed_dim)));
    }
    heads
        .iter()
        .enumerate()
        .map(|(l, leaves)| mlp_on_tape(tape, &spec.head_spec(l), leaves, z, None))
        .collect()
}
