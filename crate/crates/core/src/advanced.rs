//! Projected methods on constraint manifolds, and weighted-trajectory breeding.

use ndarray::{ArrayD, Axis, Zip};
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::field::{all_finite, axpy, combine, Cells, Field};
use crate::stepper::{Dynamics, Method, StepContext};

#[derive(Clone, Debug, PartialEq)]
pub enum Manifold {
    /// `sum_ij q_ij x_i x_j - 1`.
    Quadratic(Vec<Vec<f64>>),
    /// `sum_i v_i x_i^p - 1`.
    Polynomial { v: Vec<f64>, power: i32 },
    /// `x1^2 + x2^2 - sinh^2(x3) - 1`.
    Catenoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// A tangent vector at `a`.
    Tangent = 0,
    /// Tangential projection of `d` at `a`.
    Tangential = 1,
    /// Normal projection of `a` onto the manifold.
    Normal = 2,
    /// Constraint residual `f(a)`.
    Residual = 4,
}

impl Projection {
    pub fn from_code(code: i32) -> Result<Self> {
        match code {
            0 => Ok(Projection::Tangent),
            1 => Ok(Projection::Tangential),
            2 => Ok(Projection::Normal),
            4 => Ok(Projection::Residual),
            _ => Err(SimError::Config(format!("projection option {} is not 0, 1, 2 or 4", code))),
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Manifold {
    pub fn sphere(n: usize) -> Self {
        Manifold::Quadratic((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect())
    }

    pub fn value(&self, x: &[Complex64]) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        match self {
            Manifold::Quadratic(q) => {
                let mut s = Complex64::new(0.0, 0.0);
                for (i, row) in q.iter().enumerate() {
                    for (j, &qij) in row.iter().enumerate() {
                        s += qij * x[i] * x[j];
                    }
                }
                s - one
            }
            Manifold::Polynomial { v, power } => {
                v.iter().zip(x).map(|(&vi, xi)| vi * xi.powi(*power)).sum::<Complex64>() - one
            }
            Manifold::Catenoid => x[0] * x[0] + x[1] * x[1] - x[2].sinh().powi(2) - one,
        }
    }

    pub fn gradient(&self, x: &[Complex64]) -> Vec<Complex64> {
        match self {
            Manifold::Quadratic(q) => (0..x.len())
                .map(|k| (0..x.len()).map(|j| (q[k][j] + q[j][k]) * x[j]).sum())
                .collect(),
            Manifold::Polynomial { v, power } => v
                .iter()
                .zip(x)
                .map(|(&vi, xi)| vi * *power as f64 * xi.powi(power - 1))
                .collect(),
            Manifold::Catenoid => vec![2.0 * x[0], 2.0 * x[1], -(2.0 * x[2]).sinh()],
        }
    }

    fn tangential(&self, d: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let n = self.gradient(x);
        let nn = dot(&n, &n);
        if nn.norm() == 0.0 {
            return d.to_vec();
        }
        let c = dot(&n, d) / nn;
        d.iter().zip(&n).map(|(di, ni)| di - c * ni).collect()
    }

    fn tangent(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.gradient(x);
        // project the coordinate axis least aligned with the normal
        let k = (0..n.len())
            .min_by(|&i, &j| n[i].norm().partial_cmp(&n[j].norm()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        let mut e = vec![Complex64::new(0.0, 0.0); n.len()];
        e[k] = Complex64::new(1.0, 0.0);
        self.tangential(&e, x)
    }

    fn normal(&self, x: &[Complex64], iterations: usize) -> Vec<Complex64> {
        let mut y = x.to_vec();
        for _ in 0..iterations {
            let f = self.value(&y);
            let g = self.gradient(&y);
            let gg = dot(&g, &g);
            if gg.norm() == 0.0 {
                break;
            }
            let c = f / gg;
            for (yi, gi) in y.iter_mut().zip(&g) {
                *yi -= c * gi;
            }
        }
        y
    }
}

/// Residual tolerance beyond which a normal projection counts as failed.
pub const PROJECTION_TOLERANCE: f64 = 1e-6;

/// Applies a projection to every vector along axis 0 of `a` (and `d`).
/// Residual output has one component.
pub fn project(manifold: &Manifold, d: Option<&Field>, a: &Field, option: Projection, iterations: usize) -> Result<Field> {
    let f = a.shape()[0];
    let mut out = match option {
        Projection::Residual => {
            let mut s = a.shape().to_vec();
            s[0] = 1;
            ArrayD::zeros(s)
        }
        _ => a.clone(),
    };
    let lanes_a: Vec<Vec<Complex64>> = a.lanes(Axis(0)).into_iter().map(|l| l.to_vec()).collect();
    let lanes_d: Option<Vec<Vec<Complex64>>> =
        d.map(|d| d.lanes(Axis(0)).into_iter().map(|l| l.to_vec()).collect());
    let mut worst: f64 = 0.0;
    for (i, mut lane) in out.lanes_mut(Axis(0)).into_iter().enumerate() {
        let x = &lanes_a[i];
        if x.len() != f {
            return Err(SimError::Shape("manifold dimension mismatch".into()));
        }
        let v = match option {
            Projection::Residual => vec![manifold.value(x)],
            Projection::Tangent => manifold.tangent(x),
            Projection::Tangential => {
                let dv = lanes_d
                    .as_ref()
                    .ok_or_else(|| SimError::Config("tangential projection needs a vector".into()))?;
                manifold.tangential(&dv[i], x)
            }
            Projection::Normal => {
                let y = manifold.normal(x, iterations);
                worst = worst.max(manifold.value(&y).norm());
                y
            }
        };
        for (o, vi) in lane.iter_mut().zip(v) {
            *o = vi;
        }
    }
    if option == Projection::Normal && !(worst <= PROJECTION_TOLERANCE) {
        return Err(SimError::Projection { residual: worst });
    }
    Ok(out)
}

struct Projected<'a> {
    inner: &'a dyn Dynamics,
    manifold: &'a Manifold,
}

impl Projected<'_> {
    fn deriv(&self, a: &Cells, w: &[Field], t: f64) -> Result<Cells> {
        let mut d = self.inner.deriv(a, w, t)?;
        d[0] = project(self.manifold, Some(&d[0]), &a[0], Projection::Tangential, 0)?;
        Ok(d)
    }
}

/// One projected step; the manifold constrains cell 0.
pub fn step_projected(
    method: Method,
    a: &Cells,
    w: &[Field],
    ctx: &StepContext,
    dy: &dyn Dynamics,
    manifold: &Manifold,
    iterproj: usize,
) -> Result<Cells> {
    let p = Projected { inner: dy, manifold };
    let (t, dt) = (ctx.t, ctx.dtr);
    let mut out = match method {
        Method::Enproj => {
            let mut b = a.clone();
            axpy(&mut b, dt, &p.deriv(a, w, t)?);
            dy.propagate(&mut b, t + dt)?;
            b
        }
        Method::MPproj | Method::MPnproj => {
            let mut a0 = a.clone();
            dy.propagate(&mut a0, t + dt / 2.0)?;
            let mut ab = a0.clone();
            for _ in 0..ctx.iterations.max(1) {
                let d = p.deriv(&ab, w, t + dt / 2.0)?;
                ab = a0.clone();
                axpy(&mut ab, dt / 2.0, &d);
            }
            let mut r = combine(2.0, &ab, -1.0, &a0);
            dy.propagate(&mut r, t + dt)?;
            r
        }
        _ => return Err(SimError::Config(format!("{} is not a projected method", method))),
    };
    if matches!(method, Method::Enproj | Method::MPnproj) {
        out[0] = project(manifold, None, &out[0], Projection::Normal, iterproj)?;
    }
    if !all_finite(&out) {
        return Err(SimError::Divergence { t: t + dt, method: method.name().into() });
    }
    Ok(out)
}

/// Breeding outcome for one vector ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightState {
    pub thresholdw: f64,
    /// Fraction of trajectories replaced in the last breeding event.
    pub breed_fraction: f64,
    /// Total `exp(Re Omega)` of the removed trajectories.
    pub removed_weight: f64,
}

/// Log-weights `Re Omega` per trajectory: the last component of cell 0,
/// which must have layout `[components, ensemble]`.
pub fn log_weights(cells: &Cells) -> Result<Vec<f64>> {
    let c = &cells[0];
    if c.ndim() != 2 {
        return Err(SimError::Unsupported("weights are only defined for SDE cells".into()));
    }
    let last = c.shape()[0] - 1;
    Ok(c.index_axis(Axis(0), last).iter().map(|v| v.re).collect())
}

/// Replaces trajectories whose weight `exp(Re Omega)` falls below
/// `thresholdw / mean weight` by copies of the most probable one, halving
/// the weight of both copies.
pub fn breed(cells: &mut Cells, thresholdw: f64) -> Result<WeightState> {
    if !(thresholdw > 0.0) {
        return Err(SimError::Config("breeding needs a positive thresholdw".into()));
    }
    let omega = log_weights(cells)?;
    let e = omega.len();
    let mut w: Vec<f64> = omega.iter().map(|o| o.exp()).collect();
    let mean = w.iter().sum::<f64>() / e as f64;
    let cut = thresholdw / mean;
    let low: Vec<usize> = (0..e).filter(|&i| w[i] < cut).collect();
    if low.len() == e {
        return Err(SimError::DegenerateEnsemble);
    }
    let removed_weight: f64 = low.iter().map(|&i| w[i]).sum();
    let mut alive: Vec<bool> = (0..e).map(|i| w[i] >= cut).collect();
    let last = cells[0].shape()[0] - 1;
    for &slot in &low {
        let mut best = usize::MAX;
        for i in 0..e {
            if alive[i] && (best == usize::MAX || w[i] > w[best]) {
                best = i;
            }
        }
        for cell in cells.iter_mut() {
            let ax = Axis(cell.ndim() - 1);
            let src = cell.index_axis(ax, best).to_owned();
            cell.index_axis_mut(ax, slot).assign(&src);
        }
        let ln2 = std::f64::consts::LN_2;
        for i in [best, slot] {
            cells[0][[last, i]] -= ln2;
        }
        w[best] /= 2.0;
        w[slot] = w[best];
        alive[slot] = true;
    }
    Ok(WeightState { thresholdw, breed_fraction: low.len() as f64 / e as f64, removed_weight })
}

/// Weighted ensemble mean over the last axis with weights `exp(Re Omega)`.
pub fn weighted_mean(o: &ArrayD<f64>, omega: &[f64]) -> ArrayD<f64> {
    let ax = Axis(o.ndim() - 1);
    let w: Vec<f64> = omega.iter().map(|v| v.exp()).collect();
    let total: f64 = w.iter().sum();
    let mut out = o.index_axis(ax, 0).mapv(|_| 0.0);
    for (k, lane) in o.axis_iter(ax).enumerate() {
        Zip::from(&mut out).and(&lane).for_each(|s, &v| *s += v * w[k] / total);
    }
    out
}
