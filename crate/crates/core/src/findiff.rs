//! Central finite differences with periodic, Dirichlet and Robin boundaries.

use std::collections::BTreeMap;

use ndarray::{ArrayD, Axis, IxDyn, Slice};
use num_complex::Complex64;

use crate::error::{config, Result, SimError};
use crate::field::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryType {
    /// Prescribed derivative (Neumann when zero).
    Robin,
    Periodic,
    /// Prescribed value.
    Dirichlet,
}

impl BoundaryType {
    pub fn from_code(code: i32) -> Result<Self> {
        match code {
            -1 => Ok(BoundaryType::Robin),
            0 => Ok(BoundaryType::Periodic),
            1 => Ok(BoundaryType::Dirichlet),
            _ => config(format!("boundary code {} is not -1, 0 or 1", code)),
        }
    }

    pub fn code(self) -> i32 {
        match self {
            BoundaryType::Robin => -1,
            BoundaryType::Periodic => 0,
            BoundaryType::Dirichlet => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoundaryPair {
    pub lower: BoundaryType,
    pub upper: BoundaryType,
}

impl BoundaryPair {
    pub const PERIODIC: BoundaryPair =
        BoundaryPair { lower: BoundaryType::Periodic, upper: BoundaryType::Periodic };

    pub fn new(lower: BoundaryType, upper: BoundaryType) -> Result<Self> {
        let p = BoundaryPair { lower, upper };
        p.validate()?;
        Ok(p)
    }

    pub fn from_codes(lower: i32, upper: i32) -> Result<Self> {
        Self::new(BoundaryType::from_code(lower)?, BoundaryType::from_code(upper)?)
    }

    pub fn is_periodic(&self) -> bool {
        self.lower == BoundaryType::Periodic
    }

    pub fn validate(&self) -> Result<()> {
        let lp = self.lower == BoundaryType::Periodic;
        let up = self.upper == BoundaryType::Periodic;
        if lp != up {
            return config("periodic boundaries cannot be combined with other types");
        }
        Ok(())
    }
}

/// Boundary types per (cell, space dimension), one pair per component.
/// Unlisted entries are periodic; a short list repeats its last pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Boundaries {
    pairs: BTreeMap<(usize, usize), Vec<BoundaryPair>>,
}

impl Boundaries {
    pub fn periodic() -> Self {
        Boundaries::default()
    }

    pub fn set(&mut self, cell: usize, dim: usize, pairs: Vec<BoundaryPair>) -> &mut Self {
        self.pairs.insert((cell, dim), pairs);
        self
    }

    pub fn with(mut self, cell: usize, dim: usize, pairs: Vec<BoundaryPair>) -> Self {
        self.set(cell, dim, pairs);
        self
    }

    pub fn pair(&self, cell: usize, dim: usize, component: usize) -> BoundaryPair {
        match self.pairs.get(&(cell, dim)) {
            Some(v) if !v.is_empty() => v[component.min(v.len() - 1)],
            _ => BoundaryPair::PERIODIC,
        }
    }

    pub fn pairs_for(&self, cell: usize, dim: usize, components: usize) -> Vec<BoundaryPair> {
        (0..components).map(|c| self.pair(cell, dim, c)).collect()
    }

    pub fn any_nonperiodic(&self) -> bool {
        self.pairs.values().flatten().any(|p| !p.is_periodic())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<BoundaryPair>)> {
        self.pairs.iter()
    }
}

/// Lower and upper boundary arrays for one (cell, dimension): each has the
/// cell shape with the boundary dimension collapsed to length 1.
pub type BoundaryArrays = (Field, Field);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryValues {
    pub values: BTreeMap<(usize, usize), BoundaryArrays>,
}

impl BoundaryValues {
    pub fn get(&self, cell: usize, dim: usize) -> Option<&BoundaryArrays> {
        self.values.get(&(cell, dim))
    }

    pub fn is_zero(&self) -> bool {
        self.values
            .values()
            .all(|(lo, hi)| lo.iter().chain(hi.iter()).all(|v| v.norm_sqr() == 0.0))
    }
}

/// Shape of a boundary array for a cell of shape `cell_shape` on `dim`.
pub fn boundary_shape(cell_shape: &[usize], dim: usize) -> Vec<usize> {
    let mut s = cell_shape.to_vec();
    s[dim] = 1;
    s
}

fn check(a: &Field, dim: usize, bounds: &[BoundaryPair], bvals: Option<&BoundaryArrays>) -> Result<()> {
    if dim == 0 {
        return Err(SimError::Unsupported("time derivatives are not available".into()));
    }
    if dim + 1 >= a.ndim() {
        return Err(SimError::Config(format!("dimension {} is not a space dimension", dim)));
    }
    if a.shape()[dim] < 3 {
        return config("finite differences need at least 3 points");
    }
    if bounds.len() < a.shape()[0] {
        return config("one boundary pair per component is required");
    }
    if let Some((lo, hi)) = bvals {
        let want = boundary_shape(a.shape(), dim);
        if lo.shape() != want.as_slice() || hi.shape() != want.as_slice() {
            return Err(SimError::Config(format!(
                "boundary values have shape {:?}, expected {:?}",
                lo.shape(),
                want
            )));
        }
    }
    Ok(())
}

enum Order {
    First,
    Second,
}

/// Shared stencil driver. `a` is one cell `[components, space..., ensemble]`;
/// `dim` counts space dimensions from 1, so it is also the array axis.
fn stencil(
    a: &Field,
    dim: usize,
    bounds: &[BoundaryPair],
    bvals: Option<&BoundaryArrays>,
    dx: f64,
    order: Order,
) -> Result<Field> {
    check(a, dim, bounds, bvals)?;
    let n = a.shape()[dim];
    let ax = Axis(dim);
    let mut out = Field::zeros(a.raw_dim());
    let zeros = Field::zeros(IxDyn(&boundary_shape(a.shape(), dim)));
    let (blo, bhi) = match bvals {
        Some((l, h)) => (l, h),
        None => (&zeros, &zeros),
    };
    let h2 = 1.0 / (dx * dx);
    let h1 = 0.5 / dx;
    for (c, pair) in bounds.iter().enumerate().take(a.shape()[0]) {
        let ac = a.index_axis(Axis(0), c);
        let mut oc = out.index_axis_mut(Axis(0), c);
        let sub = ax.0 - 1;
        let sax = Axis(sub);
        let mid = ac.slice_axis(sax, Slice::from(1..n - 1));
        let up = ac.slice_axis(sax, Slice::from(2..n));
        let dn = ac.slice_axis(sax, Slice::from(0..n - 2));
        {
            let mut o = oc.slice_axis_mut(sax, Slice::from(1..n - 1));
            match order {
                Order::First => o.assign(&((&up - &dn) * Complex64::new(h1, 0.0))),
                Order::Second => {
                    o.assign(&((&up + &dn - &mid * Complex64::new(2.0, 0.0)) * Complex64::new(h2, 0.0)))
                }
            }
        }
        let first = ac.index_axis(sax, 0);
        let second = ac.index_axis(sax, 1);
        let last = ac.index_axis(sax, n - 1);
        let penult = ac.index_axis(sax, n - 2);
        let lo = blo.index_axis(Axis(0), c);
        let lo = lo.index_axis(sax, 0);
        let hi = bhi.index_axis(Axis(0), c);
        let hi = hi.index_axis(sax, 0);
        let (lower, upper): (ArrayD<Complex64>, ArrayD<Complex64>) = match order {
            Order::First => {
                let lower = match pair.lower {
                    BoundaryType::Robin => lo.to_owned(),
                    _ => (&second - &last) * Complex64::new(h1, 0.0),
                };
                let upper = match pair.upper {
                    BoundaryType::Robin => hi.to_owned(),
                    _ => (&first - &penult) * Complex64::new(h1, 0.0),
                };
                (lower, upper)
            }
            Order::Second => {
                let two = Complex64::new(2.0, 0.0);
                let lower = match pair.lower {
                    BoundaryType::Periodic => (&second - &first * two + &last) * Complex64::new(h2, 0.0),
                    BoundaryType::Dirichlet => (&second - &first * two + &lo) * Complex64::new(h2, 0.0),
                    BoundaryType::Robin => {
                        (&second - &first - &lo * Complex64::new(dx, 0.0)) * Complex64::new(2.0 * h2, 0.0)
                    }
                };
                let upper = match pair.upper {
                    BoundaryType::Periodic => (&first - &last * two + &penult) * Complex64::new(h2, 0.0),
                    BoundaryType::Dirichlet => (&hi - &last * two + &penult) * Complex64::new(h2, 0.0),
                    BoundaryType::Robin => {
                        (&penult - &last + &hi * Complex64::new(dx, 0.0)) * Complex64::new(2.0 * h2, 0.0)
                    }
                };
                (lower, upper)
            }
        };
        oc.index_axis_mut(sax, 0).assign(&lower);
        oc.index_axis_mut(sax, n - 1).assign(&upper);
    }
    Ok(out)
}

/// First derivative along space dimension `dim`.
pub fn d1(
    a: &Field,
    dim: usize,
    bounds: &[BoundaryPair],
    bvals: Option<&BoundaryArrays>,
    dx: f64,
) -> Result<Field> {
    stencil(a, dim, bounds, bvals, dx, Order::First)
}

/// Second derivative along space dimension `dim`.
pub fn d2(
    a: &Field,
    dim: usize,
    bounds: &[BoundaryPair],
    bvals: Option<&BoundaryArrays>,
    dx: f64,
) -> Result<Field> {
    stencil(a, dim, bounds, bvals, dx, Order::Second)
}

/// Selects components of a derivative result.
pub fn select(a: &Field, indices: &[usize]) -> Field {
    a.select(Axis(0), indices)
}

/// Overwrites Dirichlet boundary rows of one cell with prescribed values.
pub fn pin_dirichlet(a: &mut Field, dim: usize, bounds: &[BoundaryPair], bvals: Option<&BoundaryArrays>) {
    let n = a.shape()[dim];
    let zeros = Field::zeros(IxDyn(&boundary_shape(a.shape(), dim)));
    let (blo, bhi) = match bvals {
        Some((l, h)) => (l, h),
        None => (&zeros, &zeros),
    };
    for (c, pair) in bounds.iter().enumerate().take(a.shape()[0]) {
        let mut ac = a.index_axis_mut(Axis(0), c);
        let sax = Axis(dim - 1);
        if pair.lower == BoundaryType::Dirichlet {
            let lo = blo.index_axis(Axis(0), c);
            ac.index_axis_mut(sax, 0).assign(&lo.index_axis(sax, 0));
        }
        if pair.upper == BoundaryType::Dirichlet {
            let hi = bhi.index_axis(Axis(0), c);
            ac.index_axis_mut(sax, n - 1).assign(&hi.index_axis(sax, 0));
        }
    }
}
