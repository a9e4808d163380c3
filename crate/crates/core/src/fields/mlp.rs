use rand::Rng;

use crate::diffcore::{RowGroups, Tape, Var};
use crate::error::{NfmpError, Result};

/// Layer widths of a fully connected network: relu on hidden layers,
/// linear output. Parameters are stored per layer as a packed block of a
/// row-major `in x out` weight matrix followed by `out` biases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(NfmpError::InvalidArgument("an MLP needs at least input and output sizes".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(NfmpError::InvalidArgument(format!("zero-width layer in {layer_sizes:?}")));
        }
        Ok(Self { layer_sizes })
    }

    /// `input -> hidden x layers -> output`.
    pub fn uniform(input: usize, hidden: usize, layers: usize, output: usize) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat(hidden).take(layers));
        sizes.push(output);
        Self::new(sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// `(inputs, outputs)` of layer `i`.
    pub fn layer(&self, i: usize) -> (usize, usize) {
        (self.layer_sizes[i], self.layer_sizes[i + 1])
    }

    /// Length of layer `i`'s packed block.
    pub fn packed_len(&self, i: usize) -> usize {
        let (a, b) = self.layer(i);
        a * b + b
    }

    pub fn layer_offset(&self, i: usize) -> usize {
        (0..i).map(|j| self.packed_len(j)).sum()
    }

    pub fn param_count(&self) -> usize {
        (0..self.num_layers()).map(|i| self.packed_len(i)).sum()
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` draw for every weight and bias.
pub fn init_mlp_params(spec: &MlpSpec, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.param_count());
    for i in 0..spec.num_layers() {
        let (fan_in, _) = spec.layer(i);
        let bound = 1.0 / (fan_in as f64).sqrt();
        out.extend((0..spec.packed_len(i)).map(|_| rng.gen_range(-bound..=bound)));
    }
    out
}

/// Direct (tape-free) evaluation on one input vector.
pub fn mlp_eval(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    if params.len() != spec.param_count() {
        return Err(NfmpError::Dimension(format!(
            "MLP {:?} needs {} parameters, got {}",
            spec.layer_sizes,
            spec.param_count(),
            params.len()
        )));
    }
    if input.len() != spec.input_dim() {
        return Err(NfmpError::Dimension(format!(
            "MLP expects input of dim {}, got {}",
            spec.input_dim(),
            input.len()
        )));
    }
    let mut h = input.to_vec();
    let last = spec.num_layers() - 1;
    let mut offset = 0;
    for i in 0..spec.num_layers() {
        let (ni, no) = spec.layer(i);
        let w = &params[offset..offset + ni * no];
        let b = &params[offset + ni * no..offset + ni * no + no];
        let mut y = b.to_vec();
        for (r, &x) in h.iter().enumerate() {
            for (c, yc) in y.iter_mut().enumerate() {
                *yc += x * w[r * no + c];
            }
        }
        if i != last {
            for v in &mut y {
                *v = v.max(0.0);
            }
        }
        h = y;
        offset += ni * no + no;
    }
    Ok(h)
}

/// Registers each packed layer block of `params` as a 1-row leaf.
pub fn mlp_leaves<'a>(
    tape: &mut Tape<'a>,
    spec: &MlpSpec,
    params: &'a [f64],
    trainable: bool,
) -> Result<Vec<Var>> {
    if params.len() != spec.param_count() {
        return Err(NfmpError::Dimension(format!(
            "MLP needs {} parameters, got {}",
            spec.param_count(),
            params.len()
        )));
    }
    let mut out = Vec::with_capacity(spec.num_layers());
    let mut offset = 0;
    for i in 0..spec.num_layers() {
        let len = spec.packed_len(i);
        let block = &params[offset..offset + len];
        let v = if trainable { tape.leaf(1, len, block)? } else { tape.constant(1, len, block)? };
        out.push(v);
        offset += len;
    }
    Ok(out)
}

/// Applies the network row-wise. `layers[i]` holds layer `i`'s packed
/// parameters: one row, or one row per group when `groups` is given.
pub fn mlp_on_tape(
    tape: &mut Tape<'_>,
    spec: &MlpSpec,
    layers: &[Var],
    input: Var,
    groups: Option<&RowGroups>,
) -> Result<Var> {
    if layers.len() != spec.num_layers() {
        return Err(NfmpError::Dimension(format!(
            "{} layer blocks for a {}-layer MLP",
            layers.len(),
            spec.num_layers()
        )));
    }
    let mut h = input;
    let last = spec.num_layers() - 1;
    for (i, &p) in layers.iter().enumerate() {
        let (ni, no) = spec.layer(i);
        h = tape.affine(h, p, ni, no, groups)?;
        if i != last {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}
