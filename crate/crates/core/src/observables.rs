//! Lattice integrals and averages, probability binning, step averaging for
//! spectra and ensemble reductions of observed quantities.

use std::ops::Mul;

use ndarray::{ArrayD, Axis, IxDyn, LinalgScalar};

use crate::error::{config, Result, SimError};
use crate::field::{combine, Cells};
use crate::lattice::Grid;

/// Trapezoidal integral over the space dimensions with `measure[d] > 0`.
/// `o` is laid out `[lead, space..., ensemble]`; integrated axes collapse
/// to length 1. Periodic axes weight every point fully, since the endpoint
/// image lies one spacing beyond the last point. `bounds` restricts each
/// axis to a coordinate interval.
pub fn int<T>(
    o: &ArrayD<T>,
    measure: &[f64],
    bounds: Option<&[Option<(f64, f64)>]>,
    grid: &Grid,
    periodic: &[bool],
) -> Result<ArrayD<T>>
where
    T: LinalgScalar + Mul<f64, Output = T>,
{
    if measure.len() != grid.dims {
        return config(format!("measure has {} entries for {} dimensions", measure.len(), grid.dims));
    }
    if o.ndim() != grid.dims + 1 {
        return Err(SimError::Shape(format!("expected {} axes, got {}", grid.dims + 1, o.ndim())));
    }
    let mut out = o.clone();
    for d in 1..grid.dims {
        let n = out.shape()[d];
        if !(measure[d] > 0.0) || n == 1 {
            continue;
        }
        if n != grid.points[d] {
            return Err(SimError::Shape(format!("axis {} has {} points, grid has {}", d, n, grid.points[d])));
        }
        let range = bounds.and_then(|b| b.get(d).copied().flatten());
        let inside: Vec<bool> = grid.axes[d]
            .iter()
            .map(|&x| range.is_none_or(|(lo, hi)| x >= lo - 1e-12 && x <= hi + 1e-12))
            .collect();
        let first = inside.iter().position(|&b| b);
        let last = inside.iter().rposition(|&b| b);
        let mut w = vec![0.0; n];
        if let (Some(f), Some(l)) = (first, last) {
            for i in f..=l {
                w[i] = measure[d];
            }
            if !periodic.get(d).copied().unwrap_or(false) && l > f {
                w[f] *= 0.5;
                w[l] *= 0.5;
            }
        }
        let mut shape = out.shape().to_vec();
        shape[d] = 1;
        let mut acc = ArrayD::<T>::zeros(IxDyn(&shape));
        {
            let mut slot = acc.index_axis_mut(Axis(d), 0);
            for (i, lane) in out.axis_iter(Axis(d)).enumerate() {
                let wi = w[i];
                if wi != 0.0 {
                    slot.zip_mut_with(&lane, |s, &v| *s = *s + v * wi);
                }
            }
        }
        out = acc;
    }
    Ok(out)
}

/// Mean over flagged space dimensions (all by default), keeping them as
/// length-1 axes.
pub fn ave<T>(o: &ArrayD<T>, switch: Option<&[bool]>, grid: &Grid) -> Result<ArrayD<T>>
where
    T: LinalgScalar + Mul<f64, Output = T>,
{
    if o.ndim() != grid.dims + 1 {
        return Err(SimError::Shape(format!("expected {} axes, got {}", grid.dims + 1, o.ndim())));
    }
    let mut out = o.clone();
    for d in 1..grid.dims {
        let on = switch.is_none_or(|s| s.get(d).copied().unwrap_or(false));
        let n = out.shape()[d];
        if !on || n == 1 {
            continue;
        }
        let summed = out.sum_axis(Axis(d)).insert_axis(Axis(d));
        out = summed.mapv(|v| v * (1.0 / n as f64));
    }
    Ok(out)
}

fn bin_width(centres: &[f64]) -> Result<f64> {
    if centres.len() < 2 {
        return config("a bin range needs at least two centres");
    }
    let w = centres[1] - centres[0];
    if !(w > 0.0) {
        return config("bin centres must increase");
    }
    for pair in centres.windows(2) {
        if ((pair[1] - pair[0]) - w).abs() > 1e-9 * w.max(1.0) {
            return config("bin widths must be uniform");
        }
    }
    Ok(w)
}

/// Joint density over bin centres from samples `[lines, space..., ensemble]`.
/// Line `l` is binned with `binranges[l]`; empty ranges and lines without a
/// range are marginalized. Output: `[1, space..., bins per active line...]`.
/// Each in-range sample adds its normalized weight divided by the bin volume.
pub fn bin_probability(samples: &ArrayD<f64>, binranges: &[Vec<f64>], weights: Option<&[f64]>) -> Result<ArrayD<f64>> {
    let lines = samples.shape()[0];
    let active: Vec<usize> = (0..lines.min(binranges.len())).filter(|&l| !binranges[l].is_empty()).collect();
    let widths: Vec<f64> = active.iter().map(|&l| bin_width(&binranges[l])).collect::<Result<_>>()?;
    let volume: f64 = widths.iter().product();
    let nd = samples.ndim();
    let e = samples.shape()[nd - 1];
    let space: Vec<usize> = samples.shape()[1..nd - 1].to_vec();
    let mut shape = vec![1];
    shape.extend_from_slice(&space);
    shape.extend(active.iter().map(|&l| binranges[l].len()));
    let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
    let norm: Vec<f64> = match weights {
        Some(w) => {
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        }
        None => vec![1.0 / e as f64; e],
    };
    let space_total: usize = space.iter().product();
    let mut sidx = vec![0usize; space.len()];
    for _ in 0..space_total {
        'sample: for k in 0..e {
            let mut idx = vec![0usize];
            idx.extend_from_slice(&sidx);
            for (a, &l) in active.iter().enumerate() {
                let mut full = vec![l];
                full.extend_from_slice(&sidx);
                full.push(k);
                let v = samples[IxDyn(&full)];
                let lo = binranges[l][0] - widths[a] / 2.0;
                let pos = ((v - lo) / widths[a]).floor();
                if !(pos >= 0.0 && pos < binranges[l].len() as f64) {
                    continue 'sample;
                }
                idx.push(pos as usize);
            }
            out[IxDyn(&idx)] += norm[k] / volume;
        }
        for d in (0..space.len()).rev() {
            sidx[d] += 1;
            if sidx[d] < space[d] {
                break;
            }
            sidx[d] = 0;
        }
    }
    Ok(out)
}

/// Average of a path over one output sub-interval: the mean of the
/// trapezoidal step averages, so two fine steps give `(a0 + 2 a1 + a2)/4`.
pub fn spectral_field_average(path: &[Cells]) -> Result<Cells> {
    if path.len() < 2 {
        return config("a step average needs at least two path points");
    }
    let steps = (path.len() - 1) as f64;
    let mut acc = combine(0.5 / steps, &path[0], 0.5 / steps, &path[path.len() - 1]);
    for p in &path[1..path.len() - 1] {
        crate::field::axpy(&mut acc, 1.0 / steps, p);
    }
    Ok(acc)
}

/// Mean over the ensemble (last) axis, optionally weighted by `exp(omega)`.
pub fn ensemble_mean(o: &ArrayD<f64>, omega: Option<&[f64]>) -> ArrayD<f64> {
    match omega {
        Some(w) => crate::advanced::weighted_mean(o, w),
        None => {
            let ax = Axis(o.ndim() - 1);
            o.mean_axis(ax).expect("non-empty ensemble")
        }
    }
}

/// First `n` trajectories of `[lines, space..., ensemble]` as extra lines:
/// `[lines * n, space...]`, trajectory-major within each line.
pub fn capture_scatters(o: &ArrayD<f64>, n: usize) -> ArrayD<f64> {
    let nd = o.ndim();
    let take = n.min(o.shape()[nd - 1]);
    let lines = o.shape()[0];
    let mut parts = Vec::new();
    for l in 0..lines {
        let line = o.index_axis(Axis(0), l);
        for k in 0..take {
            parts.push(line.index_axis(Axis(nd - 2), k).to_owned());
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::stack(Axis(0), &views).expect("equal shapes")
}
