//! Step-size extrapolation, sub-ensemble sampling errors, goodness-of-fit
//! statistics and the summary error vector.

use ndarray::{ArrayD, Zip};

use crate::engine::simulate;
use crate::error::{Result, SimError};
use crate::model::SimConfig;
use crate::results::{GraphData, ResultData};

/// `1/(2^n - 1)`; zero for order 0.
pub fn epsilon(order: u32) -> f64 {
    if order == 0 {
        0.0
    } else {
        1.0 / (2f64.powi(order as i32) - 1.0)
    }
}

/// Combines fine- and coarse-step results. Returns the extrapolated value
/// and the step error `|value - fine|`; order 0 keeps the fine value with
/// error `|fine - coarse|`.
pub fn extrapolate(fine: &ArrayD<f64>, coarse: &ArrayD<f64>, order: u32) -> (ArrayD<f64>, ArrayD<f64>) {
    if order == 0 {
        let err = Zip::from(fine).and(coarse).map_collect(|f, c| (f - c).abs());
        return (fine.clone(), err);
    }
    let e = epsilon(order);
    let value = Zip::from(fine).and(coarse).map_collect(|f, c| (1.0 + e) * f - e * c);
    let err = Zip::from(&value).and(fine).map_collect(|v, f| (v - f).abs());
    (value, err)
}

/// Grand mean of sub-ensemble means and the standard deviation of that mean,
/// which is absent for a single sub-ensemble.
pub fn sampling_stats(subs: &[ArrayD<f64>]) -> Result<(ArrayD<f64>, Option<ArrayD<f64>>)> {
    let m = subs.len();
    if m == 0 {
        return Err(SimError::Config("no sub-ensembles".into()));
    }
    let shape = subs[0].raw_dim();
    if subs.iter().any(|s| s.raw_dim() != shape) {
        return Err(SimError::Shape("sub-ensemble means differ in shape".into()));
    }
    let mut mean = ArrayD::<f64>::zeros(shape.clone());
    for s in subs {
        mean += s;
    }
    mean /= m as f64;
    if m < 2 {
        return Ok((mean, None));
    }
    let mut var = ArrayD::<f64>::zeros(shape);
    for s in subs {
        Zip::from(&mut var).and(s).and(&mean).for_each(|v, &x, &mu| *v += (x - mu).powi(2));
    }
    let sigma = var.mapv(|v| (v / (m as f64 - 1.0) / m as f64).sqrt());
    Ok((mean, Some(sigma)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChiSquared {
    pub chi2: f64,
    /// Contributing points.
    pub k: usize,
    /// Points passing the cutoff but with a zero denominator.
    pub excluded: usize,
}

impl ChiSquared {
    pub fn per_point(&self) -> f64 {
        if self.k == 0 {
            f64::NAN
        } else {
            self.chi2 / self.k as f64
        }
    }
}

/// Variance form (`scale == 0`): `sum (p - e)^2 / (s^2 + s_e^2)` over points
/// with `|p|, |e| > cutoff`. Count form (`scale > 0`): `sum (N - E)^2 / E`
/// with `N = scale p`, `E = scale e`, over bins where both exceed `mincount`.
pub fn chi_squared(
    mean: &ArrayD<f64>,
    sigma: &ArrayD<f64>,
    comparison: &ArrayD<f64>,
    comp_sigma: Option<&ArrayD<f64>>,
    cutoff: f64,
    mincount: f64,
    scale: f64,
) -> ChiSquared {
    let mut out = ChiSquared::default();
    let zeros;
    let cs = match comp_sigma {
        Some(c) => c,
        None => {
            zeros = ArrayD::<f64>::zeros(mean.raw_dim());
            &zeros
        }
    };
    for (((&p, &e), &s), &se) in mean.iter().zip(comparison).zip(sigma).zip(cs) {
        if scale > 0.0 {
            let (n, ex) = (scale * p, scale * e);
            if n > mincount && ex > mincount {
                out.chi2 += (n - ex).powi(2) / ex;
                out.k += 1;
            }
            continue;
        }
        if !(p.abs() > cutoff && e.abs() > cutoff) {
            continue;
        }
        let denom = s * s + se * se;
        if denom > 0.0 {
            out.chi2 += (p - e).powi(2) / denom;
            out.k += 1;
        } else {
            out.excluded += 1;
        }
    }
    out
}

/// `G^2 = 2 sum N ln(N/E)` over bins with `N, E > mincount`, after scaling
/// `E` so both sums agree.
pub fn g_squared(counts: &[f64], expected: &[f64], mincount: f64) -> (f64, usize) {
    let keep: Vec<(f64, f64)> = counts
        .iter()
        .zip(expected)
        .filter(|(&n, &e)| n > mincount && e > mincount)
        .map(|(&n, &e)| (n, e))
        .collect();
    let sn: f64 = keep.iter().map(|p| p.0).sum();
    let se: f64 = keep.iter().map(|p| p.1).sum();
    if keep.is_empty() || se == 0.0 {
        return (0.0, 0);
    }
    let r = sn / se;
    let g = 2.0 * keep.iter().map(|&(n, e)| n * (n / (e * r)).ln()).sum::<f64>();
    (g, keep.len())
}

/// `[total, step, sampling, comparison, chi2/k, seconds]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorVector {
    pub total: f64,
    pub step: f64,
    pub sampling: f64,
    pub comparison: f64,
    pub chi2_per_point: f64,
    pub seconds: f64,
}

impl ErrorVector {
    pub fn as_array(&self) -> [f64; 6] {
        [self.total, self.step, self.sampling, self.comparison, self.chi2_per_point, self.seconds]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphReport {
    pub sequence: usize,
    pub graph: usize,
    pub label: String,
    pub step: f64,
    pub sampling: f64,
    pub comparison: f64,
    pub chi2: Option<ChiSquared>,
}

/// Category values below this are treated as absent.
pub const NEGLIGIBLE: f64 = 1e-10;

fn reduce(values: impl Iterator<Item = f64>, rms: bool) -> f64 {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return 0.0;
    }
    if rms {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    } else {
        v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    }
}

fn category_mean(values: &[f64]) -> f64 {
    let v: Vec<f64> = values.iter().copied().filter(|&x| x >= NEGLIGIBLE).collect();
    reduce(v.into_iter(), true)
}

/// Per-graph normalized error measures and the run's error vector.
pub fn summarize(graphs: &[(usize, usize, &GraphData)], relerr: bool, rmserr: bool) -> (ErrorVector, Vec<GraphReport>) {
    let mut reports = Vec::new();
    let (mut chi, mut k) = (0.0, 0usize);
    for &(s, n, g) in graphs {
        let norm = if relerr {
            let reference = g.compare.as_ref().map(max_abs).filter(|&m| m > 0.0);
            reference.unwrap_or_else(|| max_abs(&g.mean))
        } else {
            1.0
        };
        let norm = if norm > 0.0 { norm } else { 1.0 };
        let plane = |p: &Option<ArrayD<f64>>| p.as_ref().map_or(0.0, |a| reduce(a.iter().map(|x| x / norm), rmserr));
        let comparison = match &g.compare {
            Some(c) => reduce(g.mean.iter().zip(c.iter()).map(|(m, c)| (m - c) / norm), rmserr),
            None => 0.0,
        };
        if let Some(c) = g.chi2 {
            chi += c.chi2;
            k += c.k;
        }
        reports.push(GraphReport {
            sequence: s,
            graph: n,
            label: g.label.clone(),
            step: plane(&g.step),
            sampling: plane(&g.sampling),
            comparison,
            chi2: g.chi2,
        });
    }
    let step = category_mean(&reports.iter().map(|r| r.step).collect::<Vec<_>>());
    let sampling = category_mean(&reports.iter().map(|r| r.sampling).collect::<Vec<_>>());
    let comparison = category_mean(&reports.iter().map(|r| r.comparison).collect::<Vec<_>>());
    let total = category_mean(&[step, sampling, comparison]);
    let vector = ErrorVector {
        total,
        step,
        sampling,
        comparison,
        chi2_per_point: if k > 0 { chi / k as f64 } else { 0.0 },
        seconds: 0.0,
    };
    (vector, reports)
}

fn max_abs(a: &ArrayD<f64>) -> f64 {
    a.iter().fold(0.0, |m: f64, x| if x.is_finite() { m.max(x.abs()) } else { m })
}

/// One refinement level of a convergence check.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub dtr: f64,
    /// Largest `|mean - comparison|` over all compared graphs.
    pub max_difference: f64,
    pub max_step_error: f64,
    pub max_sampling_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Differences never increase from one level to the next.
    pub monotone: bool,
}

/// Repeats a run `levels` times, doubling the steps each time.
pub fn xcheck(levels: usize, cfg: &SimConfig) -> Result<ConvergenceTable> {
    if !cfg.observe.iter().any(|o| o.compare.is_some()) {
        return Err(SimError::Config("convergence checks need a comparison function".into()));
    }
    let mut rows = Vec::new();
    for level in 0..levels {
        let mut c = cfg.clone();
        c.grid.steps = cfg.grid.steps << level;
        let (_, data) = simulate(&[c.clone()])?;
        rows.push(convergence_row(&c, &data));
    }
    let monotone = rows.windows(2).all(|w| w[1].max_difference <= w[0].max_difference);
    Ok(ConvergenceTable { rows, monotone })
}

fn convergence_row(cfg: &SimConfig, data: &ResultData) -> ConvergenceRow {
    let mut row = ConvergenceRow {
        steps: cfg.grid.steps,
        dtr: cfg.grid.ranges[0] / ((cfg.grid.points[0] - 1) * cfg.grid.steps) as f64,
        max_difference: 0.0,
        max_step_error: 0.0,
        max_sampling_error: 0.0,
    };
    for g in data.sequences.iter().flat_map(|s| &s.graphs) {
        if let Some(c) = &g.compare {
            for (m, e) in g.mean.iter().zip(c.iter()) {
                row.max_difference = row.max_difference.max((m - e).abs());
            }
            if let Some(s) = &g.step {
                row.max_step_error = row.max_step_error.max(max_abs(s));
            }
            if let Some(s) = &g.sampling {
                row.max_sampling_error = row.max_sampling_error.max(max_abs(s));
            }
        }
    }
    row
}
