//! Discrete sine/cosine transforms for non-periodic boundary pairs, computed
//! through length-2(N-1) FFTs. Storage always has the full N lattice points;
//! entries a transform does not use are ignored on input and zero on output.

use std::f64::consts::PI;

use ndarray::{ArrayD, Axis};
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::spectral::fft_in_place;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrigKind {
    /// Dirichlet at both ends. Self-inverse.
    Dst1,
    /// Robin at both ends. Self-inverse.
    Dct1,
    /// Maps mode amplitudes to a Dirichlet-lower / Robin-upper field.
    Dst2,
    /// Dirichlet-lower / Robin-upper field to half-integer modes.
    Dst3,
    /// Maps mode amplitudes to a Robin-lower / Dirichlet-upper field.
    Dct2,
    /// Robin-lower / Dirichlet-upper field to half-integer modes.
    Dct3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl TrigKind {
    pub const ALL: [TrigKind; 6] =
        [TrigKind::Dst1, TrigKind::Dct1, TrigKind::Dst2, TrigKind::Dst3, TrigKind::Dct2, TrigKind::Dct3];

    /// True when mode numbers are half-integers.
    pub fn half_integer(self) -> bool {
        !matches!(self, TrigKind::Dst1 | TrigKind::Dct1)
    }
}

#[derive(Clone, Copy)]
enum Map {
    Dst1,
    Dct1,
    DrForward,
    DrInverse,
    RdForward,
    RdInverse,
}

fn map_for(kind: TrigKind, dir: Direction) -> Map {
    use Direction::*;
    match (kind, dir) {
        (TrigKind::Dst1, _) => Map::Dst1,
        (TrigKind::Dct1, _) => Map::Dct1,
        (TrigKind::Dst3, Forward) | (TrigKind::Dst2, Inverse) => Map::DrForward,
        (TrigKind::Dst3, Inverse) | (TrigKind::Dst2, Forward) => Map::DrInverse,
        (TrigKind::Dct3, Forward) | (TrigKind::Dct2, Inverse) => Map::RdForward,
        (TrigKind::Dct3, Inverse) | (TrigKind::Dct2, Forward) => Map::RdInverse,
    }
}

/// `A(x)_m = sum_j x_j cos(pi (j + 1/2) m / M)` for `m < M`.
fn half_cos_synthesis(x: &[Complex64]) -> Vec<Complex64> {
    let m = x.len();
    let mut y = vec![Complex64::new(0.0, 0.0); 2 * m];
    for (l, &v) in x.iter().enumerate() {
        y[l] = v;
        y[2 * m - 1 - l] = v;
    }
    fft_in_place(&mut y, false);
    (0..m)
        .map(|k| Complex64::from_polar(0.5, -PI * k as f64 / (2 * m) as f64) * y[k])
        .collect()
}

/// `B(x)_j = sum_m w_m x_m cos(pi (j + 1/2) m / M)` with `w_0 = 1/2`, else 1.
fn half_cos_analysis(x: &[Complex64]) -> Vec<Complex64> {
    let m = x.len();
    let mut lo = vec![Complex64::new(0.0, 0.0); 2 * m];
    let mut hi = lo.clone();
    for (l, &v) in x.iter().enumerate() {
        let w = if l == 0 { 0.5 } else { 1.0 };
        let theta = PI * l as f64 / (2 * m) as f64;
        lo[l] = v * Complex64::from_polar(w, -theta);
        hi[l] = v * Complex64::from_polar(w, theta);
    }
    fft_in_place(&mut lo, false);
    fft_in_place(&mut hi, true);
    (0..m).map(|j| 0.5 * (lo[j] + hi[j])).collect()
}

fn alternate(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Applies one transform to a single lattice line of length N >= 3.
pub fn trig_line(kind: TrigKind, dir: Direction, u: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = u.len();
    if n < 3 {
        return Err(SimError::Transform(format!("trig transforms need N >= 3, got {}", n)));
    }
    let m = n - 1;
    let s = (2.0 / m as f64).sqrt();
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![zero; n];
    match map_for(kind, dir) {
        Map::Dst1 => {
            let mut y = vec![zero; 2 * m];
            for l in 1..m {
                y[l] = u[l];
                y[2 * m - l] = -u[l];
            }
            fft_in_place(&mut y, false);
            for k in 1..m {
                out[k] = Complex64::new(0.0, 0.5 * s) * y[k];
            }
        }
        Map::Dct1 => {
            let mut y = vec![zero; 2 * m];
            y[0] = u[0];
            y[m] = u[m];
            for l in 1..m {
                y[l] = u[l];
                y[2 * m - l] = u[l];
            }
            fft_in_place(&mut y, false);
            for k in 0..=m {
                out[k] = 0.5 * s * y[k];
            }
        }
        Map::DrForward => {
            let r: Vec<Complex64> = (0..m).map(|q| u[m - q]).collect();
            let b = half_cos_analysis(&r);
            for j in 0..m {
                out[j] = s * alternate(j) * b[j];
            }
        }
        Map::DrInverse => {
            let q: Vec<Complex64> = (0..m).map(|j| alternate(j) * u[j]).collect();
            let a = half_cos_synthesis(&q);
            for k in 1..=m {
                out[k] = s * a[m - k];
            }
        }
        Map::RdForward => {
            let b = half_cos_analysis(&u[..m]);
            for j in 0..m {
                out[j] = s * b[j];
            }
        }
        Map::RdInverse => {
            let a = half_cos_synthesis(&u[..m]);
            for k in 0..m {
                out[k] = s * a[k];
            }
        }
    }
    Ok(out)
}

/// Applies a transform along `axis` of an array, returning a new array.
pub fn trig_transform(
    u: &ArrayD<Complex64>,
    kind: TrigKind,
    axis: usize,
    dir: Direction,
) -> Result<ArrayD<Complex64>> {
    let mut out = u.clone();
    trig_transform_in_place(&mut out, kind, axis, dir)?;
    Ok(out)
}

pub fn trig_transform_in_place(
    u: &mut ArrayD<Complex64>,
    kind: TrigKind,
    axis: usize,
    dir: Direction,
) -> Result<()> {
    if axis >= u.ndim() {
        return Err(SimError::Transform(format!("axis {} out of range", axis)));
    }
    let mut line = Vec::with_capacity(u.shape()[axis]);
    for mut lane in u.lanes_mut(Axis(axis)) {
        line.clear();
        line.extend(lane.iter().copied());
        let t = trig_line(kind, dir, &line)?;
        for (dst, v) in lane.iter_mut().zip(t) {
            *dst = v;
        }
    }
    Ok(())
}
