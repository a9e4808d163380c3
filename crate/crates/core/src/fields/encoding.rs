use std::f64::consts::PI;

use crate::diffcore::{Tape, Var};
use crate::error::{NfmpError, Result};

/// Sinusoidal positional encoding with a coarse-to-fine band mask.
///
/// Output layout for `x` in R^m:
/// `[x, w_0 cos(pi x), w_0 sin(pi x), ..., w_{L-1} cos(2^{L-1} pi x), w_{L-1} sin(2^{L-1} pi x)]`
/// where the band weights `w_k` are driven by `progress`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodingSpec {
    pub input_dim: usize,
    pub bands: usize,
    pub progress: f64,
}

impl EncodingSpec {
    pub fn new(input_dim: usize, bands: usize, progress: f64) -> Result<Self> {
        let spec = Self { input_dim, bands, progress };
        spec.validate()?;
        Ok(spec)
    }

    /// Fully unmasked encoding.
    pub fn full(input_dim: usize, bands: usize) -> Self {
        Self { input_dim, bands, progress: 1.0 }
    }

    pub fn with_progress(self, progress: f64) -> Result<Self> {
        Self::new(self.input_dim, self.bands, progress)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.progress) {
            return Err(NfmpError::InvalidArgument(format!(
                "encoding progress must lie in [0, 1], got {}",
                self.progress
            )));
        }
        Ok(())
    }

    pub fn encoded_dim(&self) -> usize {
        self.input_dim + 2 * self.input_dim * self.bands
    }

    /// Mask weight of band `k`: 0 before the band opens, a raised-cosine
    /// ramp while it opens, 1 afterwards.
    pub fn band_weight(&self, k: usize) -> f64 {
        let d = self.progress * self.bands as f64 - k as f64;
        if d <= 0.0 {
            0.0
        } else if d < 1.0 {
            (1.0 - (d * PI).cos()) / 2.0
        } else {
            1.0
        }
    }

    pub fn band_weights(&self) -> Vec<f64> {
        (0..self.bands).map(|k| self.band_weight(k)).collect()
    }
}

fn band_frequency(k: usize) -> f64 {
    (1u64 << k) as f64 * PI
}

pub fn encode(x: &[f64], spec: &EncodingSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.len() != spec.input_dim {
        return Err(NfmpError::Dimension(format!(
            "encoding expects {} coordinates, got {}",
            spec.input_dim,
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(spec.encoded_dim());
    out.extend_from_slice(x);
    for k in 0..spec.bands {
        let w = spec.band_weight(k);
        let f = band_frequency(k);
        out.extend(x.iter().map(|&v| w * (v * f).cos()));
        out.extend(x.iter().map(|&v| w * (v * f).sin()));
    }
    Ok(out)
}

/// Row-wise encoding of an `N x m` node.
pub fn encode_on_tape(tape: &mut Tape<'_>, x: Var, spec: &EncodingSpec) -> Result<Var> {
    spec.validate()?;
    let (_, cols) = tape.shape(x);
    if cols != spec.input_dim {
        return Err(NfmpError::Dimension(format!(
            "encoding expects {} columns, got {cols}",
            spec.input_dim
        )));
    }
    let mut parts = vec![x];
    for k in 0..spec.bands {
        let w = spec.band_weight(k);
        let u = tape.scale(x, band_frequency(k))?;
        let mut c = tape.cos(u)?;
        let mut s = tape.sin(u)?;
        if w != 1.0 {
            c = tape.scale(c, w)?;
            s = tape.scale(s, w)?;
        }
        parts.push(c);
        parts.push(s);
    }
    if parts.len() == 1 {
        return Ok(x);
    }
    Ok(tape.concat_cols(&parts)?)
}
