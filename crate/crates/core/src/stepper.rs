//! Interaction-picture stepping methods.

use std::fmt;
use std::str::FromStr;

use ndarray::Zip;
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::field::{all_finite, axpy, combine, scaled, Cells, Field};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Euler,
    Implicit,
    MP,
    MPadapt,
    RK2,
    RK4,
    /// Euler with tangential and final normal projection.
    Enproj,
    /// Midpoint with tangential projection.
    MPproj,
    /// Midpoint with tangential and final normal projection.
    MPnproj,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Calculus {
    Ito,
    BackwardIto,
    Stratonovich,
}

impl Method {
    pub const STANDARD: [Method; 6] =
        [Method::Euler, Method::Implicit, Method::MP, Method::MPadapt, Method::RK2, Method::RK4];

    /// Propagator sub-intervals per step.
    pub fn ipsteps(self) -> usize {
        match self {
            Method::Euler | Method::Implicit | Method::RK2 | Method::Enproj => 1,
            _ => 2,
        }
    }

    /// Deterministic convergence order.
    pub fn order(self) -> u32 {
        match self {
            Method::Euler | Method::Implicit | Method::Enproj => 1,
            Method::RK4 => 4,
            _ => 2,
        }
    }

    pub fn calculus(self) -> Calculus {
        match self {
            Method::Euler | Method::Enproj => Calculus::Ito,
            Method::Implicit => Calculus::BackwardIto,
            _ => Calculus::Stratonovich,
        }
    }

    pub fn is_projected(self) -> bool {
        matches!(self, Method::Enproj | Method::MPproj | Method::MPnproj)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "Euler",
            Method::Implicit => "Implicit",
            Method::MP => "MP",
            Method::MPadapt => "MPadapt",
            Method::RK2 => "RK2",
            Method::RK4 => "RK4",
            Method::Enproj => "Enproj",
            Method::MPproj => "MPproj",
            Method::MPnproj => "MPnproj",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Method::Euler,
            Method::Implicit,
            Method::MP,
            Method::MPadapt,
            Method::RK2,
            Method::RK4,
            Method::Enproj,
            Method::MPproj,
            Method::MPnproj,
        ];
        all.into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SimError::Config(format!("unknown method '{}'", s)))
    }
}

/// The model as seen by a stepping method.
pub trait Dynamics {
    /// Derivative without the linear term, with noise held fixed over the step.
    fn deriv(&self, a: &Cells, w: &[Field], t: f64) -> Result<Cells>;
    /// Applies the propagator for one sub-interval to a field that ends at `t_end`.
    fn propagate(&self, a: &mut Cells, t_end: f64) -> Result<()>;
    /// Applies the propagator to an increment (homogeneous boundaries).
    fn propagate_increment(&self, a: &mut Cells) -> Result<()>;
}

#[derive(Clone, Copy, Debug)]
pub struct StepContext {
    pub t: f64,
    pub dtr: f64,
    pub iterations: usize,
    /// `|a|^2` threshold above which MPadapt inverts amplitudes.
    pub adapt: f64,
}

/// Advances `a` by one computational step of length `ctx.dtr`.
pub fn step(method: Method, a: &Cells, w: &[Field], ctx: &StepContext, dy: &dyn Dynamics) -> Result<Cells> {
    let (t, dt) = (ctx.t, ctx.dtr);
    let iters = ctx.iterations.max(1);
    let out = match method {
        Method::Euler => {
            let mut b = a.clone();
            axpy(&mut b, dt, &dy.deriv(a, w, t)?);
            dy.propagate(&mut b, t + dt)?;
            b
        }
        Method::Implicit => {
            let mut a0 = a.clone();
            dy.propagate(&mut a0, t + dt)?;
            let mut ab = a0.clone();
            for _ in 0..iters {
                let d = dy.deriv(&ab, w, t + dt)?;
                ab = a0.clone();
                axpy(&mut ab, dt, &d);
            }
            ab
        }
        Method::MP => {
            let mut a0 = a.clone();
            dy.propagate(&mut a0, t + dt / 2.0)?;
            let mut ab = a0.clone();
            for _ in 0..iters {
                let d = dy.deriv(&ab, w, t + dt / 2.0)?;
                ab = a0.clone();
                axpy(&mut ab, dt / 2.0, &d);
            }
            let mut r = combine(2.0, &ab, -1.0, &a0);
            dy.propagate(&mut r, t + dt)?;
            r
        }
        Method::MPadapt => {
            let mut a0 = a.clone();
            dy.propagate(&mut a0, t + dt / 2.0)?;
            let p = adapt_mask(a, ctx.adapt);
            let at0 = apply_power(&a0, &p);
            let mut at = at0.clone();
            for _ in 0..iters {
                let d = dy.deriv(&apply_power(&at, &p), w, t + dt / 2.0)?;
                let mut next = at0.clone();
                for (((nc, dc), ac), pc) in next.iter_mut().zip(&d).zip(&at).zip(&p) {
                    Zip::from(nc).and(dc).and(ac).and(pc).for_each(|n, &dv, &av, &inv| {
                        let chain = if inv { -(av * av) * dv } else { dv };
                        *n += chain * (dt / 2.0);
                    });
                }
                at = next;
            }
            let mut r = apply_power(&combine(2.0, &at, -1.0, &at0), &p);
            dy.propagate(&mut r, t + dt)?;
            r
        }
        Method::RK2 => {
            let mut ab = a.clone();
            dy.propagate(&mut ab, t + dt)?;
            let mut a1 = a.clone();
            axpy(&mut a1, dt, &dy.deriv(a, w, t)?);
            dy.propagate(&mut a1, t + dt)?;
            let mut a2 = ab;
            axpy(&mut a2, dt, &dy.deriv(&a1, w, t + dt)?);
            combine(0.5, &a1, 0.5, &a2)
        }
        Method::RK4 => {
            let h = dt / 2.0;
            let mut ab = a.clone();
            dy.propagate(&mut ab, t + h)?;
            let mut d1 = scaled(&dy.deriv(a, w, t)?, h);
            dy.propagate_increment(&mut d1)?;
            let mut s = ab.clone();
            axpy(&mut s, 1.0, &d1);
            let d2 = scaled(&dy.deriv(&s, w, t + h)?, h);
            let mut s = ab.clone();
            axpy(&mut s, 1.0, &d2);
            let d3 = scaled(&dy.deriv(&s, w, t + h)?, h);
            let mut s = ab.clone();
            axpy(&mut s, 2.0, &d3);
            dy.propagate(&mut s, t + dt)?;
            let d4 = scaled(&dy.deriv(&s, w, t + dt)?, h);
            let mut r = ab;
            axpy(&mut r, 1.0 / 3.0, &d1);
            axpy(&mut r, 2.0 / 3.0, &d2);
            axpy(&mut r, 2.0 / 3.0, &d3);
            dy.propagate(&mut r, t + dt)?;
            axpy(&mut r, 1.0 / 3.0, &d4);
            r
        }
        Method::Enproj | Method::MPproj | Method::MPnproj => {
            return Err(SimError::Config(format!(
                "{} needs a manifold; use the projected stepper",
                method
            )))
        }
    };
    if !all_finite(&out) {
        return Err(SimError::Divergence { t: t + dt, method: method.name().into() });
    }
    Ok(out)
}

/// Per-element branch choice: `true` where `|a|^2` exceeds the threshold.
/// Ties keep the direct branch.
pub fn adapt_mask(a: &Cells, threshold: f64) -> Vec<ndarray::ArrayD<bool>> {
    a.iter().map(|c| c.mapv(|v| v.norm_sqr() > threshold)).collect()
}

fn apply_power(a: &Cells, mask: &[ndarray::ArrayD<bool>]) -> Cells {
    a.iter()
        .zip(mask)
        .map(|(c, m)| {
            let mut out = c.clone();
            Zip::from(&mut out).and(m).for_each(|v, &inv| {
                if inv {
                    *v = Complex64::new(1.0, 0.0) / *v;
                }
            });
            out
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdaptDirection {
    Forward,
    Inverse,
}

/// Amplitude inversion used by MPadapt: elements with `|a|^2 > threshold`
/// are replaced by their reciprocal. The map is its own inverse given the
/// branch choice, so `Inverse` applies the branch chosen from `a`'s
/// pre-image; callers pass the original field to decide branches.
pub fn adapt_transform(a: &Field, direction: AdaptDirection, threshold: f64, reference: Option<&Field>) -> Result<Field> {
    if !(threshold > 0.0) {
        return Err(SimError::Config("adapt threshold must be positive".into()));
    }
    let basis = match (direction, reference) {
        (AdaptDirection::Inverse, Some(r)) => r,
        _ => a,
    };
    let mut out = a.clone();
    Zip::from(&mut out).and(basis).for_each(|v, b| {
        if b.norm_sqr() > threshold {
            *v = Complex64::new(1.0, 0.0) / *v;
        }
    });
    Ok(out)
}

/// Drift correction `(1/2) B_jk d_j B_ik` that converts an Ito drift to
/// the Stratonovich drift of the same process, by central differences.
/// `b` maps a state vector to its noise matrix `B[i][k]`.
pub fn ito_stratonovich_drift_shift(
    b: &dyn Fn(&[Complex64]) -> Vec<Vec<Complex64>>,
    a: &[Complex64],
) -> Vec<Complex64> {
    let n = a.len();
    let h = 1e-6;
    let b0 = b(a);
    let noises = b0.first().map_or(0, |r| r.len());
    // dB[j][i][k] = d B_ik / d a_j
    let db: Vec<Vec<Vec<Complex64>>> = (0..n)
        .map(|j| {
            let mut up = a.to_vec();
            let mut dn = a.to_vec();
            up[j] += h;
            dn[j] -= h;
            let (bu, bd) = (b(&up), b(&dn));
            (0..n)
                .map(|i| (0..noises).map(|k| (bu[i][k] - bd[i][k]) / (2.0 * h)).collect())
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..n {
                for k in 0..noises {
                    s += b0[j][k] * db[j][i][k];
                }
            }
            0.5 * s
        })
        .collect()
}
