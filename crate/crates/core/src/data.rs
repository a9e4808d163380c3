//! Demonstration data shared by the task generators, training and inference.

use crate::error::{NfmpError, Result};

/// Scene observations `{(x_j, s_j)}`. Coordinates are normalised to
/// `[-1, 1]^m`. Images additionally record their raster shape; their samples
/// are stored row-major, one per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSamples {
    pub coord_dim: usize,
    pub channels: usize,
    /// `len x coord_dim`, row-major.
    pub coords: Vec<f64>,
    /// `len x channels`, row-major.
    pub values: Vec<f64>,
    pub image: Option<ImageShape>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageShape {
    pub width: usize,
    pub height: usize,
}

impl SceneSamples {
    pub fn new(coord_dim: usize, channels: usize, coords: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if coord_dim == 0 || channels == 0 {
            return Err(NfmpError::InvalidArgument("scene samples need positive dims".into()));
        }
        if coords.len() % coord_dim != 0 || values.len() % channels != 0 {
            return Err(NfmpError::Dimension("ragged scene sample buffers".into()));
        }
        if coords.len() / coord_dim != values.len() / channels {
            return Err(NfmpError::Dimension(format!(
                "{} coordinates but {} values",
                coords.len() / coord_dim,
                values.len() / channels
            )));
        }
        Ok(Self { coord_dim, channels, coords, values, image: None })
    }

    /// Pixel-centre samples of a `width x height` raster with `channels`
    /// values per pixel. Pixel `(row, col)` sits at
    /// `x = (2 (col + 0.5) / width - 1, 2 (row + 0.5) / height - 1)`.
    pub fn from_image(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height * channels {
            return Err(NfmpError::Dimension(format!(
                "{}x{}x{} image needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                values.len()
            )));
        }
        let mut coords = Vec::with_capacity(width * height * 2);
        for r in 0..height {
            for c in 0..width {
                coords.push(2.0 * (c as f64 + 0.5) / width as f64 - 1.0);
                coords.push(2.0 * (r as f64 + 0.5) / height as f64 - 1.0);
            }
        }
        let mut s = Self::new(2, channels, coords, values)?;
        s.image = Some(ImageShape { width, height });
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.coord_dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coord(&self, i: usize) -> &[f64] {
        &self.coords[i * self.coord_dim..(i + 1) * self.coord_dim]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    /// Copy restricted to the sample indices in `idx`; raster shape is dropped.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(idx.len() * self.coord_dim);
        let mut values = Vec::with_capacity(idx.len() * self.channels);
        for &i in idx {
            coords.extend_from_slice(self.coord(i));
            values.extend_from_slice(self.value(i));
        }
        Self { coord_dim: self.coord_dim, channels: self.channels, coords, values, image: None }
    }
}

/// Motion supervision for one demonstration, in data units (degrees for
/// joint-angle tasks, normalised workspace units for position tasks).
#[derive(Clone, Debug, PartialEq)]
pub enum MotionSamples {
    /// `(t, q)` pairs; `values` is `len x joints`.
    Explicit { joints: usize, times: Vec<f64>, values: Vec<f64> },
    /// `((q, t), cost)` pairs; `points` is `len x (joints + 1)` with time last.
    Implicit { joints: usize, points: Vec<f64>, costs: Vec<f64> },
}

impl MotionSamples {
    pub fn joints(&self) -> usize {
        match self {
            MotionSamples::Explicit { joints, .. } | MotionSamples::Implicit { joints, .. } => *joints,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            MotionSamples::Explicit { times, .. } => times.len(),
            MotionSamples::Implicit { costs, .. } => costs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self, MotionSamples::Explicit { .. })
    }
}

/// Hidden generating parameters of a scene, componentwise in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskParams(pub Vec<f64>);

impl TaskParams {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(NfmpError::InvalidArgument(format!("task parameter {v} outside [0, 1]")));
        }
        Ok(Self(p))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// One expert demonstration. `task_params` is carried for evaluation only;
/// training and inference never read it.
#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub scene: SceneSamples,
    pub motion: MotionSamples,
    pub task_params: Option<TaskParams>,
}

impl Demonstration {
    pub fn without_params(&self) -> Self {
        Self { scene: self.scene.clone(), motion: self.motion.clone(), task_params: None }
    }
}

/// A `K x J` trajectory sampled at `times`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub joints: usize,
    pub times: Vec<f64>,
    /// `K x joints`, row-major.
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.joints..(k + 1) * self.joints]
    }
}

/// `K` uniform times `t_k = k / (K - 1)`.
pub fn uniform_times(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.0];
    }
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}
