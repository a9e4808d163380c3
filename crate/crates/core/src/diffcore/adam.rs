use super::DiffError;

/// Bias-corrected Adam state for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(len: usize) -> Self {
        Self::with_hyperparams(len, Self::DEFAULT_BETA1, Self::DEFAULT_BETA2, Self::DEFAULT_EPSILON)
    }

    pub fn with_hyperparams(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// One Adam update of `params` from `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), DiffError> {
        self.step_segments(params, &[(0, grads)], lr)
    }

    /// One Adam update where the gradient arrives as disjoint `(offset, values)`
    /// segments that together tile `params` exactly.
    pub fn step_segments(
        &mut self,
        params: &mut [f64],
        segments: &[(usize, &[f64])],
        lr: f64,
    ) -> Result<(), DiffError> {
        if params.len() != self.len() {
            return Err(DiffError::LengthMismatch { expected: self.len(), got: params.len() });
        }
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(DiffError::InvalidLearningRate(lr));
        }
        let mut covered = 0;
        let mut ordered: Vec<&(usize, &[f64])> = segments.iter().collect();
        ordered.sort_by_key(|s| s.0);
        for (offset, g) in ordered {
            if *offset != covered {
                return Err(DiffError::LengthMismatch { expected: covered, got: *offset });
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(DiffError::NonFiniteGradient { index: offset + i, value: g[i] });
            }
            covered += g.len();
        }
        if covered != params.len() {
            return Err(DiffError::LengthMismatch { expected: params.len(), got: covered });
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 / (1.0 - b1.powi(t));
        let c2 = 1.0 / (1.0 - b2.powi(t));
        for &(offset, g) in segments {
            let end = offset + g.len();
            let p = &mut params[offset..end];
            let m = &mut self.first_moment[offset..end];
            let v = &mut self.second_moment[offset..end];
            for (((p, m), v), &gi) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = flush(b1 * *m + (1.0 - b1) * gi);
                *v = flush(b2 * *v + (1.0 - b2) * gi * gi);
                *p -= lr * (*m * c1) / ((*v * c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Subnormal moments become zero. A moment decaying under a zero gradient
/// otherwise sticks at the smallest subnormal (0.9 * 4.9e-324 rounds back
/// up), and subnormal arithmetic is far slower than normal arithmetic.
#[inline(always)]
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), DiffError> {
    state.step(params, grads, lr)
}
