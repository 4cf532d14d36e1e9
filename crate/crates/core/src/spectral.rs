//! Interaction-picture propagators, spectral derivative arrays and the
//! physics-normalized output Fourier transform.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{config, Result, SimError};
use crate::field::{Cells, Field};
use crate::findiff::{pin_dirichlet, BoundaryPair, BoundaryType, BoundaryValues, Boundaries};
use crate::lattice::{Convention, Grid};
use crate::trig::{trig_transform_in_place, Direction, TrigKind};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized FFT of a buffer; `inverse` selects the positive exponent.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        }
    });
    plan.process(buf);
}

/// Unnormalized FFT along one array axis.
pub fn fft_axis(a: &mut ArrayD<Complex64>, axis: usize, inverse: bool) {
    let n = a.shape()[axis];
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for mut lane in a.lanes_mut(Axis(axis)) {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        plan.process(&mut buf);
        for (v, b) in lane.iter_mut().zip(&buf) {
            *v = *b;
        }
    }
}

/// How one space dimension of one component is diagonalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisTransform {
    Fft,
    Trig(TrigKind),
}

impl AxisTransform {
    pub fn for_pair(pair: BoundaryPair) -> Result<Self> {
        pair.validate()?;
        use BoundaryType::*;
        Ok(match (pair.lower, pair.upper) {
            (Periodic, _) => AxisTransform::Fft,
            (Dirichlet, Dirichlet) => AxisTransform::Trig(TrigKind::Dst1),
            (Robin, Robin) => AxisTransform::Trig(TrigKind::Dct1),
            (Dirichlet, Robin) => AxisTransform::Trig(TrigKind::Dst3),
            (Robin, Dirichlet) => AxisTransform::Trig(TrigKind::Dct3),
            _ => unreachable!("validated pair"),
        })
    }

    /// Wavenumbers matching the transformed storage order.
    pub fn wavenumbers(self, grid: &Grid, dim: usize) -> Result<Vec<f64>> {
        match self {
            AxisTransform::Fft => grid.momentum_axis(dim, Convention::PropagationFft),
            AxisTransform::Trig(k) if k.half_integer() => grid.momentum_axis(dim, Convention::TrigHalf),
            AxisTransform::Trig(_) => grid.momentum_axis(dim, Convention::TrigWhole),
        }
    }

    fn forward(self, a: &mut ArrayD<Complex64>, axis: usize) -> Result<()> {
        match self {
            AxisTransform::Fft => {
                fft_axis(a, axis, false);
                Ok(())
            }
            AxisTransform::Trig(k) => trig_transform_in_place(a, k, axis, Direction::Forward),
        }
    }

    fn inverse(self, a: &mut ArrayD<Complex64>, axis: usize) -> Result<()> {
        match self {
            AxisTransform::Fft => {
                fft_axis(a, axis, true);
                let n = a.shape()[axis] as f64;
                a.mapv_inplace(|v| v / n);
                Ok(())
            }
            AxisTransform::Trig(k) => trig_transform_in_place(a, k, axis, Direction::Inverse),
        }
    }
}

/// Spectral derivative eigenvalues for one space dimension, in transformed
/// storage order. Periodic gives `(ik)^order`; trig pairs allow only even
/// orders and give `(-k^2)^(order/2)`.
pub fn derivative_array(grid: &Grid, dim: usize, order: u32, pair: BoundaryPair) -> Result<Vec<Complex64>> {
    if dim == 0 || dim >= grid.dims {
        return config(format!("dimension {} is not a space dimension", dim));
    }
    let kind = AxisTransform::for_pair(pair)?;
    if order == 0 {
        return Ok(vec![Complex64::new(1.0, 0.0); grid.points[dim]]);
    }
    if kind != AxisTransform::Fft && order % 2 == 1 {
        return Err(SimError::Unsupported(
            "odd spectral derivatives need periodic boundaries; use finite differences".into(),
        ));
    }
    let k = kind.wavenumbers(grid, dim)?;
    Ok(k.iter().map(|&kv| Complex64::new(0.0, kv).powu(order)).collect())
}

/// Linear operator: receives the derivative value `D = ik` for each space
/// dimension and returns one coefficient per component of the cell.
pub type LinearFn = Arc<dyn Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync>;

#[derive(Clone, Debug)]
struct ComponentPropagator {
    axes: Vec<AxisTransform>,
    /// `exp(dt L)` shaped `[space..., 1]`.
    factor: ArrayD<Complex64>,
    identity: bool,
    /// `L(0)` and the `D^2` coefficient, used to carry boundary polynomials.
    l0: Complex64,
    l2: Complex64,
}

/// Per-cell, per-component `exp(dt L(k))` arrays and their transform kinds.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub dt: f64,
    cells: Vec<Vec<ComponentPropagator>>,
    pairs: Vec<Vec<Vec<BoundaryPair>>>,
    space_dims: usize,
}

fn lattice_indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0; shape.len()];
    for _ in 0..total {
        out.push(idx.clone());
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

impl Propagator {
    /// Builds `exp(dt L)` for each cell with a linear operator. Cells
    /// without one propagate as the identity.
    pub fn new(
        grid: &Grid,
        fields: &[usize],
        linear: &[Option<LinearFn>],
        boundaries: &Boundaries,
        dt: f64,
    ) -> Result<Self> {
        let sd = grid.space_dims();
        let space: Vec<usize> = grid.space_points().to_vec();
        let mut cells = Vec::new();
        let mut pairs = Vec::new();
        for (c, &nf) in fields.iter().enumerate() {
            let cell_pairs: Vec<Vec<BoundaryPair>> =
                (1..grid.dims).map(|d| boundaries.pairs_for(c, d, nf)).collect();
            let lin = linear.get(c).and_then(|l| l.clone());
            let mut comps = Vec::with_capacity(nf);
            for f in 0..nf {
                let axes: Vec<AxisTransform> = (0..sd)
                    .map(|s| AxisTransform::for_pair(cell_pairs[s][f]))
                    .collect::<Result<_>>()?;
                let mut fshape = space.clone();
                fshape.push(1);
                let mut factor = ArrayD::from_elem(IxDyn(&fshape), Complex64::new(1.0, 0.0));
                let (mut l0, mut l2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                let mut identity = true;
                if let Some(lf) = &lin {
                    let ks: Vec<Vec<f64>> = (0..sd)
                        .map(|s| axes[s].wavenumbers(grid, s + 1))
                        .collect::<Result<_>>()?;
                    let eval = |dvals: &[Complex64]| -> Result<Complex64> {
                        let v = lf(dvals);
                        v.get(f).or_else(|| v.last()).copied().ok_or_else(|| {
                            SimError::Config(format!("linear operator of cell {} returned no values", c))
                        })
                    };
                    for idx in lattice_indices(&space) {
                        let dvals: Vec<Complex64> =
                            (0..sd).map(|s| Complex64::new(0.0, ks[s][idx[s]])).collect();
                        let l = eval(&dvals)?;
                        if l != Complex64::new(0.0, 0.0) {
                            identity = false;
                        }
                        let mut full = idx.clone();
                        full.push(0);
                        factor[IxDyn(&full)] = (l * dt).exp();
                    }
                    if sd == 1 {
                        let zero = [Complex64::new(0.0, 0.0)];
                        l0 = eval(&zero)?;
                        let m1 = eval(&[Complex64::new(0.0, 1.0)])? - l0;
                        let m4 = eval(&[Complex64::new(0.0, 2.0)])? - l0;
                        // L = l0 + l2 s + l4 s^2 in s = D^2, sampled at s = -1, -4
                        l2 = -(16.0 * m1 - m4) / 12.0;
                    }
                }
                comps.push(ComponentPropagator { axes, factor, identity, l0, l2 });
            }
            cells.push(comps);
            pairs.push(cell_pairs);
        }
        Ok(Propagator { dt, cells, pairs, space_dims: sd })
    }

    pub fn is_identity(&self) -> bool {
        self.cells.iter().flatten().all(|c| c.identity)
    }

    /// Applies `exp(dt L)` to every cell. With `bvals`, non-zero boundary
    /// data in one space dimension is carried by a low-order polynomial
    /// that the operator evolves in closed form; Dirichlet rows are then
    /// set to the prescribed values.
    pub fn apply(&self, a: &mut Cells, bvals: Option<&BoundaryValues>, x: &[f64]) -> Result<()> {
        for (c, comps) in self.cells.iter().enumerate() {
            let Some(cell) = a.get_mut(c) else { continue };
            for (f, cp) in comps.iter().enumerate() {
                if cp.identity {
                    continue;
                }
                let mut sub = cell.index_axis(Axis(0), f).to_owned();
                let poly = match bvals {
                    Some(bv) if self.space_dims == 1 && cp.axes[0] != AxisTransform::Fft => {
                        bv.get(c, 1).and_then(|(lo, hi)| {
                            boundary_polynomial(self.pairs[c][0][f], lo, hi, f, x)
                        })
                    }
                    _ => None,
                };
                if let Some(b) = &poly {
                    sub -= b;
                }
                for (s, ax) in cp.axes.iter().enumerate() {
                    ax.forward(&mut sub, s)?;
                }
                sub *= &cp.factor;
                for (s, ax) in cp.axes.iter().enumerate().rev() {
                    ax.inverse(&mut sub, s)?;
                }
                if let Some(b) = poly {
                    let curv = second_coefficient(&b, x);
                    let scale = (cp.l0 * self.dt).exp();
                    let shift = curv.mapv(|c2| 2.0 * c2 * cp.l2 * self.dt);
                    sub += &((&b + &shift) * scale);
                }
                cell.index_axis_mut(Axis(0), f).assign(&sub);
            }
            if let Some(bv) = bvals {
                for d in 1..=self.space_dims {
                    pin_dirichlet(cell, d, &self.pairs[c][d - 1], bv.get(c, d));
                }
            }
        }
        Ok(())
    }
}

/// Polynomial matching the boundary data of one component, shaped
/// `[N, ensemble]`; `None` when all data vanish.
fn boundary_polynomial(
    pair: BoundaryPair,
    lo: &Field,
    hi: &Field,
    comp: usize,
    x: &[f64],
) -> Option<ArrayD<Complex64>> {
    let lo = lo.index_axis(Axis(0), comp).index_axis(Axis(0), 0).to_owned();
    let hi = hi.index_axis(Axis(0), comp).index_axis(Axis(0), 0).to_owned();
    if lo.iter().chain(hi.iter()).all(|v| v.norm_sqr() == 0.0) {
        return None;
    }
    let n = x.len();
    let e = lo.len();
    let (x0, x1) = (x[0], x[n - 1]);
    let r = x1 - x0;
    use BoundaryType::*;
    let mut out = ArrayD::zeros(IxDyn(&[n, e]));
    for k in 0..e {
        let (vl, vh) = (lo[[k]], hi[[k]]);
        for (i, &xi) in x.iter().enumerate() {
            out[[i, k]] = match (pair.lower, pair.upper) {
                (Dirichlet, Dirichlet) => vl + (vh - vl) * ((xi - x0) / r),
                (Dirichlet, Robin) => vl + vh * (xi - x0),
                (Robin, Dirichlet) => vh + vl * (xi - x1),
                (Robin, Robin) => vl * (xi - x0) + (vh - vl) * ((xi - x0).powi(2) / (2.0 * r)),
                _ => Complex64::new(0.0, 0.0),
            };
        }
    }
    Some(out)
}

/// Coefficient of x^2 in each column of a sampled quadratic.
fn second_coefficient(b: &ArrayD<Complex64>, x: &[f64]) -> ArrayD<Complex64> {
    let n = x.len();
    let h = x[1] - x[0];
    let col = |k: usize| {
        // exact for quadratics on a uniform grid
        (b[[2, k]] - b[[1, k]] * 2.0 + b[[0, k]]) / (2.0 * h * h)
    };
    let e = b.shape()[1];
    let mut out = ArrayD::zeros(IxDyn(&[1, e]));
    for k in 0..e {
        out[[0, k]] = if n >= 3 { col(k) } else { Complex64::new(0.0, 0.0) };
    }
    out
}

/// Physics-normalized transform over flagged space dimensions of an array
/// laid out `[lead, space..., rest...]`: `prod(dx/sqrt(2 pi)) sum exp(-ikx) a`,
/// reordered to graphics-centered momentum. Time (flag 0) is handled by the
/// spectral averaging path and ignored here.
pub fn fourier_output_transform(data: &ArrayD<Complex64>, flags: &[bool], grid: &Grid) -> Result<ArrayD<Complex64>> {
    let mut out = data.clone();
    for dim in 1..grid.dims {
        if !flags.get(dim).copied().unwrap_or(false) {
            continue;
        }
        let n = grid.points[dim];
        if out.shape().get(dim) != Some(&n) {
            return Err(SimError::Shape(format!("axis {} does not have {} points", dim, n)));
        }
        fft_axis(&mut out, dim, false);
        let k = grid.momentum_axis(dim, Convention::GraphicsCentered)?;
        let dk = grid.dk_periodic[dim];
        let norm = grid.dx[dim] / (2.0 * PI).sqrt();
        let origin = grid.origins[dim];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for mut lane in out.lanes_mut(Axis(dim)) {
            for (i, &kv) in k.iter().enumerate() {
                let m = (kv / dk).round() as i64;
                let src = m.rem_euclid(n as i64) as usize;
                buf[i] = lane[src] * Complex64::from_polar(norm, -kv * origin);
            }
            for (v, b) in lane.iter_mut().zip(&buf) {
                *v = *b;
            }
        }
    }
    Ok(out)
}

/// Frequency transform of a step-averaged series stored along the last axis:
/// `dt/sqrt(2 pi) sum_j exp(+i w t_j) a_j` with `t_j = t0 + j dt`. Returns
/// the `keep` lowest frequencies in centred order and their values.
pub fn time_transform(series: &ArrayD<Complex64>, t0: f64, dt: f64, keep: usize) -> (ArrayD<Complex64>, Vec<f64>) {
    let axis = series.ndim() - 1;
    let m = series.shape()[axis];
    let mut s = series.clone();
    fft_axis(&mut s, axis, true);
    let dw = 2.0 * PI / (m as f64 * dt);
    let low = -(((keep - 1) / 2) as i64);
    let omegas: Vec<f64> = (0..keep).map(|i| (low + i as i64) as f64 * dw).collect();
    let idx: Vec<usize> = (0..keep).map(|i| (low + i as i64).rem_euclid(m as i64) as usize).collect();
    let mut out = s.select(Axis(axis), &idx);
    let norm = dt / (2.0 * PI).sqrt();
    for mut lane in out.lanes_mut(Axis(axis)) {
        for (v, &w) in lane.iter_mut().zip(&omegas) {
            *v *= Complex64::from_polar(norm, w * t0);
        }
    }
    (out, omegas)
}
