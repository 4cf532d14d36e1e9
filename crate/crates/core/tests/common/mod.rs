#![allow(dead_code)]

use std::sync::Arc;

use ndarray::ArrayD;
use num_complex::Complex64;
use stochastica::lattice::GridSpec;
use stochastica::model::{ObserveSpec, SimConfig};
use stochastica::randoms::NoiseSpec;
use stochastica::results::GraphData;
use stochastica::stepper::Method;

pub fn max_abs(a: &ArrayD<f64>) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

pub fn max_deviation(g: &GraphData) -> f64 {
    let c = g.compare.as_ref().expect("compare plane");
    g.mean.iter().zip(c.iter()).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
}

/// RMS of `(mean - compare) / sqrt(sampling^2 + step^2)` over points with a
/// nonzero bar.
pub fn rms_z(g: &GraphData) -> f64 {
    let c = g.compare.as_ref().expect("compare plane");
    let mut acc = 0.0;
    let mut k = 0;
    for (i, (m, e)) in g.mean.iter().zip(c.iter()).enumerate() {
        let s = g.sampling.as_ref().map_or(0.0, |a| a.as_slice_memory_order().unwrap()[i]);
        let d = g.step.as_ref().map_or(0.0, |a| a.as_slice_memory_order().unwrap()[i]);
        let bar = (s * s + d * d).sqrt();
        if bar > 0.0 {
            acc += ((m - e) / bar).powi(2);
            k += 1;
        }
    }
    (acc / k.max(1) as f64).sqrt()
}

/// Fraction of points with `|mean - compare| <= factor * (step + sampling)`.
pub fn fraction_within(g: &GraphData, factor: f64) -> f64 {
    let c = g.compare.as_ref().expect("compare plane");
    let bar = g.error_bar();
    let n = g.mean.len();
    let ok = g
        .mean
        .iter()
        .zip(c.iter())
        .zip(bar.iter())
        .filter(|((m, e), b)| (*m - *e).abs() <= factor * *b + 1e-14)
        .count();
    ok as f64 / n as f64
}

pub fn chi2k(g: &GraphData) -> f64 {
    g.chi2.as_ref().map_or(f64::NAN, |c| c.per_point())
}

/// `a' = cos(t) a`, `a(0) = 1`, observed as `Re a` against `exp(sin t)`.
pub fn smooth_ode(method: Method, steps: usize, range: f64) -> SimConfig {
    let mut c = SimConfig::new("smooth ode", GridSpec::new(vec![2], vec![range]).with_steps(steps));
    c.method = Some(method);
    c.noise = Some(NoiseSpec::none());
    c.checks = false;
    c.order = 0;
    c.initial = Some(Arc::new(|_, ctx| Ok(vec![ctx.zeros(1).mapv(|_| Complex64::new(1.0, 0.0))])));
    c.deriv = Some(Arc::new(|a, _, ctx| Ok(vec![a[0].mapv(|v| v * ctx.t.cos())])));
    c.observe = vec![ObserveSpec::new("a", Arc::new(|a, _| Ok(a[0].mapv(|v| v.re))))
        .compare(Arc::new(|p| vec![p.t.sin().exp()]))];
    c
}

/// Least-squares slope of `log(err)` against `log(dt)`.
pub fn loglog_slope(dts: &[f64], errs: &[f64]) -> f64 {
    let x: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
