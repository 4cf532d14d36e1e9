//! Space-time lattice geometry. Dimension 0 is time; dimensions 1.. are space.

use std::f64::consts::PI;

use ndarray::{ArrayD, IxDyn};

use crate::error::{config, Result, SimError};

/// Requested lattice before defaults are resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub points: Vec<usize>,
    pub ranges: Vec<f64>,
    /// `None` gives time origin 0 and space origins centred on zero.
    pub origins: Option<Vec<f64>>,
    /// Computational steps per output interval.
    pub steps: usize,
}

impl GridSpec {
    pub fn new(points: Vec<usize>, ranges: Vec<f64>) -> Self {
        GridSpec { points, ranges, origins: None, steps: 1 }
    }

    pub fn with_origins(mut self, origins: Vec<f64>) -> Self {
        self.origins = Some(origins);
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn dimensions(&self) -> usize {
        self.points.len()
    }
}

/// Ordering used when a momentum or frequency axis is requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convention {
    /// FFT order: zero, positive, then wrapped negative values.
    PropagationFft,
    /// Monotone order from the most negative value, as used for output.
    GraphicsCentered,
    /// Integer multiples of the trig spacing (type-I transforms).
    TrigWhole,
    /// Half-integer multiples of the trig spacing (type-II/III transforms).
    TrigHalf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub dims: usize,
    pub points: Vec<usize>,
    pub ranges: Vec<f64>,
    pub origins: Vec<f64>,
    pub steps: usize,
    pub dx: Vec<f64>,
    /// Output time spacing.
    pub dt: f64,
    /// Coarse computational step, `dt / steps`.
    pub dtr: f64,
    pub axes: Vec<Vec<f64>>,
    pub dk_periodic: Vec<f64>,
    pub dk_trig: Vec<f64>,
    pub dv: f64,
    pub dkv: f64,
    pub nspace: usize,
}

pub fn build_grid(spec: &GridSpec) -> Result<Grid> {
    let d = spec.points.len();
    if d == 0 {
        return config("at least the time dimension is required");
    }
    if spec.ranges.len() != d {
        return config(format!("{} ranges given for {} dimensions", spec.ranges.len(), d));
    }
    if spec.steps == 0 {
        return config("steps must be at least 1");
    }
    let origins = match &spec.origins {
        Some(o) if o.len() != d => {
            return config(format!("{} origins given for {} dimensions", o.len(), d))
        }
        Some(o) => o.clone(),
        None => (0..d).map(|i| if i == 0 { 0.0 } else { -spec.ranges[i] / 2.0 }).collect(),
    };
    for i in 0..d {
        if !(spec.ranges[i] > 0.0) || !spec.ranges[i].is_finite() {
            return config(format!("range {} must be positive, got {}", i, spec.ranges[i]));
        }
        if spec.points[i] < 2 {
            return config(format!("dimension {} needs at least 2 points", i));
        }
    }
    let dx: Vec<f64> = (0..d).map(|i| spec.ranges[i] / (spec.points[i] - 1) as f64).collect();
    let axes = (0..d)
        .map(|i| (0..spec.points[i]).map(|n| origins[i] + n as f64 * dx[i]).collect())
        .collect();
    let dk_periodic: Vec<f64> =
        (0..d).map(|i| 2.0 * PI / (spec.points[i] as f64 * dx[i])).collect();
    let dk_trig: Vec<f64> = (0..d).map(|i| PI / ((spec.points[i] - 1) as f64 * dx[i])).collect();
    Ok(Grid {
        dims: d,
        points: spec.points.clone(),
        ranges: spec.ranges.clone(),
        origins,
        steps: spec.steps,
        dt: dx[0],
        dtr: dx[0] / spec.steps as f64,
        dv: dx[1..].iter().product(),
        dkv: dk_periodic[1..].iter().product(),
        nspace: spec.points[1..].iter().product(),
        dx,
        axes,
        dk_periodic,
        dk_trig,
    })
}

impl Grid {
    pub fn space_dims(&self) -> usize {
        self.dims - 1
    }

    pub fn space_points(&self) -> &[usize] {
        &self.points[1..]
    }

    /// Shape of one field cell: `[components, space..., ensemble]`.
    pub fn field_shape(&self, components: usize, ensemble: usize) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.dims + 1);
        s.push(components);
        s.extend_from_slice(self.space_points());
        s.push(ensemble);
        s
    }

    /// Output times.
    pub fn times(&self) -> &[f64] {
        &self.axes[0]
    }

    pub fn momentum_axis(&self, dim: usize, convention: Convention) -> Result<Vec<f64>> {
        if dim >= self.dims {
            return Err(SimError::Config(format!("dimension {} out of range", dim)));
        }
        let n = self.points[dim];
        let axis = match convention {
            Convention::PropagationFft => {
                let dk = self.dk_periodic[dim];
                (0..n)
                    .map(|j| {
                        // for even N the Nyquist value sits on the positive side
                        let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                        m * dk
                    })
                    .collect()
            }
            Convention::GraphicsCentered => {
                let dk = self.dk_periodic[dim];
                let low = -(((n - 1) / 2) as f64);
                (0..n).map(|j| (low + j as f64) * dk).collect()
            }
            Convention::TrigWhole => (0..n).map(|j| j as f64 * self.dk_trig[dim]).collect(),
            Convention::TrigHalf => {
                (0..n).map(|j| (j as f64 + 0.5) * self.dk_trig[dim]).collect()
            }
        };
        Ok(axis)
    }

    /// Coordinates of space dimension `dim` shaped `[space..., 1]`, which
    /// broadcasts against one component `[space..., ensemble]`.
    pub fn coordinate(&self, dim: usize) -> ArrayD<f64> {
        self.broadcast_axis(dim, &self.axes[dim])
    }

    /// Values along space dimension `dim` shaped to broadcast like [`Grid::coordinate`].
    pub fn broadcast_axis(&self, dim: usize, values: &[f64]) -> ArrayD<f64> {
        let mut shape: Vec<usize> = vec![1; self.dims];
        shape[dim - 1] = self.points[dim];
        ArrayD::from_shape_vec(IxDyn(&shape), values.to_vec()).expect("axis length matches grid")
    }
}
