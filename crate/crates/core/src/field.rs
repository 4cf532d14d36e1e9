//! Field storage: each cell is a complex array `[components, space..., ensemble]`.

use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64;

pub type Field = ArrayD<Complex64>;
pub type Cells = Vec<Field>;

pub fn zeros_like(cells: &[Field]) -> Cells {
    cells.iter().map(|c| Field::zeros(c.raw_dim())).collect()
}

/// `y += alpha * x`, cell by cell.
pub fn axpy(y: &mut [Field], alpha: f64, x: &[Field]) {
    for (yc, xc) in y.iter_mut().zip(x) {
        yc.scaled_add(Complex64::new(alpha, 0.0), xc);
    }
}

pub fn scaled(x: &[Field], alpha: f64) -> Cells {
    x.iter().map(|c| c.mapv(|v| v * alpha)).collect()
}

/// `alpha * x + beta * y`.
pub fn combine(alpha: f64, x: &[Field], beta: f64, y: &[Field]) -> Cells {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let mut out = a.mapv(|v| v * alpha);
            out.scaled_add(Complex64::new(beta, 0.0), b);
            out
        })
        .collect()
}

pub fn all_finite(cells: &[Field]) -> bool {
    cells.iter().all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
}

/// Stacks per-component arrays `[space..., ensemble]` into one cell.
pub fn stack(components: &[ArrayD<Complex64>]) -> Field {
    let views: Vec<_> = components.iter().map(|c| c.view()).collect();
    ndarray::stack(Axis(0), &views).expect("components share one shape")
}

/// A cell filled with one value per component.
pub fn constant(shape: &[usize], values: &[Complex64]) -> Field {
    let mut f = Field::zeros(IxDyn(shape));
    for (i, mut comp) in f.axis_iter_mut(Axis(0)).enumerate() {
        comp.fill(values[i.min(values.len() - 1)]);
    }
    f
}

pub fn real(a: &ArrayD<f64>) -> Field {
    a.mapv(|v| Complex64::new(v, 0.0))
}
