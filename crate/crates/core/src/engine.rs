//! Runs sequences of simulations over the ensemble hierarchy and assembles
//! averaged results with step and sampling errors.

use std::borrow::Cow;
use std::time::Instant;

use ndarray::{ArrayD, Axis, IxDyn, Slice};
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::advanced::{breed, log_weights, step_projected};
use crate::error::{config, Result, SimError};
use crate::errors::{chi_squared, extrapolate, sampling_stats, summarize, ErrorVector};
use crate::field::{combine, Cells, Field};
use crate::findiff::{boundary_shape, pin_dirichlet, BoundaryValues};
use crate::lattice::{build_grid, Convention, Grid};
use crate::model::{Ctx, ObserveSpec, Params, Point, SimConfig};
use crate::observables::{bin_probability, capture_scatters, ensemble_mean, spectral_field_average};
use crate::randoms::{coarsen, initial_randoms, propagation_noise, NoiseSet, NoiseSpec, Purpose, RngState};
use crate::results::{GraphData, RawBlock, ResultData, SequenceResult};
use crate::spectral::{fourier_output_transform, time_transform, Propagator};
use crate::stepper::{step, Dynamics, Method, StepContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PassKind {
    Single,
    Fine,
    Coarse,
}

impl PassKind {
    fn name(self) -> &'static str {
        match self {
            PassKind::Single => "single",
            PassKind::Fine => "fine",
            PassKind::Coarse => "coarse",
        }
    }
}

struct Pass {
    kind: PassKind,
    dtr: f64,
    refine: usize,
    prop: Propagator,
}

struct Prepared {
    cfg: SimConfig,
    grid: Grid,
    noise: NoiseSpec,
    method: Method,
    order: u32,
    passes: Vec<Pass>,
    spectra: bool,
    has_boundaries: bool,
    static_bvals: Option<BoundaryValues>,
}

const SEQUENCE_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

fn prepare(cfg: &SimConfig, first: &SimConfig) -> Result<Prepared> {
    let grid = build_grid(&cfg.grid)?;
    if cfg.ensembles.contains(&0) {
        return config("ensemble sizes must be positive");
    }
    if cfg.ensembles[1..] != first.ensembles[1..] {
        return config("serial and parallel ensembles cannot change during a sequence");
    }
    if cfg.fields.is_empty() {
        return config("at least one field cell is required");
    }
    if cfg.iterations == 0 {
        return config("iterations must be at least 1");
    }
    let method = cfg.resolved_method();
    if let Some(ip) = cfg.ipsteps {
        if ip != method.ipsteps() {
            return config(format!("{} uses {} propagator sub-steps, not {}", method, method.ipsteps(), ip));
        }
    }
    if method.is_projected() && cfg.manifold.is_none() {
        return config(format!("{} needs a manifold", method));
    }
    if cfg.weighted && cfg.ensembles[0] < 1 {
        return config("weighted averages need trajectories");
    }
    for (n, o) in cfg.observe.iter().enumerate() {
        if !o.transforms.is_empty() && o.transforms.len() != grid.dims {
            return config(format!("graph {} has {} transform flags for {} dimensions", n + 1, o.transforms.len(), grid.dims));
        }
        if o.scatters > cfg.ensembles[0] {
            return config(format!("graph {} captures more scatters than trajectories", n + 1));
        }
    }
    for (_, pairs) in cfg.boundaries.entries() {
        for p in pairs {
            p.validate()?;
        }
    }
    let kinds = if cfg.checks { vec![(PassKind::Fine, 2), (PassKind::Coarse, 1)] } else { vec![(PassKind::Single, 1)] };
    let mut passes = Vec::new();
    for (kind, refine) in kinds {
        let dtr = grid.dtr / refine as f64;
        let prop = Propagator::new(&grid, &cfg.fields, &cfg.linear, &cfg.boundaries, dtr / method.ipsteps() as f64)?;
        passes.push(Pass { kind, dtr, refine, prop });
    }
    let has_boundaries = cfg.boundaries.any_nonperiodic();
    let static_bvals = if has_boundaries {
        Some(static_boundaries(cfg, &grid)?)
    } else {
        None
    };
    Ok(Prepared {
        noise: cfg.resolved_noise(),
        order: cfg.resolved_order(),
        spectra: cfg.observe.iter().any(|o| o.time_transformed()),
        cfg: cfg.clone(),
        grid,
        method,
        passes,
        has_boundaries,
        static_bvals,
    })
}

fn static_boundaries(cfg: &SimConfig, grid: &Grid) -> Result<BoundaryValues> {
    let e = cfg.ensembles[0];
    let mut bv = BoundaryValues::default();
    for (c, &nf) in cfg.fields.iter().enumerate() {
        for d in 1..grid.dims {
            let shape = boundary_shape(&grid.field_shape(nf, e), d);
            let mut lo = Field::zeros(IxDyn(&shape));
            let mut hi = lo.clone();
            if let Some(vals) = cfg.boundval.as_ref().and_then(|m| m.get(&(c, d))) {
                for f in 0..nf {
                    let Some(&(l, h)) = vals.get(f).or(vals.last()) else { continue };
                    lo.index_axis_mut(Axis(0), f).fill(l);
                    hi.index_axis_mut(Axis(0), f).fill(h);
                }
            }
            bv.values.insert((c, d), (lo, hi));
        }
    }
    Ok(bv)
}

struct Env<'a> {
    prep: &'a Prepared,
    seq: usize,
    ensemble: usize,
    initial_boundary: Option<&'a BoundaryValues>,
}

impl<'a> Env<'a> {
    fn ctx(&self, t: f64, dtr: f64, bvals: Option<&'a BoundaryValues>, breed_fraction: f64, transformed: &'a [bool]) -> Ctx<'a> {
        Ctx {
            t,
            grid: &self.prep.grid,
            params: &self.prep.cfg.params,
            ensemble: self.ensemble,
            dtr,
            fields: &self.prep.cfg.fields,
            boundaries: &self.prep.cfg.boundaries,
            bvals,
            initial_boundary: self.initial_boundary,
            breed_fraction,
            sequence: self.seq,
            transformed,
        }
    }
}

/// Current boundary values for all (cell, space dimension) pairs: static
/// values, or the boundary callback evaluated on the given fields.
pub fn eval_boundaries(
    a: &Cells,
    t: f64,
    cfg: &SimConfig,
    grid: &Grid,
    initial_boundary: Option<&BoundaryValues>,
) -> Result<BoundaryValues> {
    let e = a.first().map_or(1, |c| c.shape()[c.ndim() - 1]);
    let Some(bf) = &cfg.boundfun else {
        let mut c = cfg.clone();
        c.ensembles[0] = e;
        return static_boundaries(&c, grid);
    };
    let ctx = Ctx {
        t,
        grid,
        params: &cfg.params,
        ensemble: e,
        dtr: grid.dtr,
        fields: &cfg.fields,
        boundaries: &cfg.boundaries,
        bvals: None,
        initial_boundary,
        breed_fraction: 0.0,
        sequence: 0,
        transformed: &[],
    };
    let mut bv = BoundaryValues::default();
    for (c, cell) in a.iter().enumerate() {
        for d in 1..grid.dims {
            let pairs = cfg.boundaries.pairs_for(c, d, cell.shape()[0]);
            let want = boundary_shape(cell.shape(), d);
            let vals = if pairs.iter().all(|p| p.is_periodic()) {
                (Field::zeros(IxDyn(&want)), Field::zeros(IxDyn(&want)))
            } else {
                bf(cell, c, d, &ctx)?
            };
            if vals.0.shape() != want.as_slice() || vals.1.shape() != want.as_slice() {
                return Err(SimError::Config(format!(
                    "boundary function returned shape {:?} for cell {} dimension {}, expected {:?}",
                    vals.0.shape(),
                    c,
                    d,
                    want
                )));
            }
            bv.values.insert((c, d), vals);
        }
    }
    Ok(bv)
}

struct ModelDynamics<'a> {
    env: &'a Env<'a>,
    pass: &'a Pass,
    breed_fraction: f64,
}

impl ModelDynamics<'_> {
    fn bvals(&self, a: &Cells, t: f64) -> Result<Option<Cow<'_, BoundaryValues>>> {
        let prep = self.env.prep;
        if !prep.has_boundaries {
            return Ok(None);
        }
        if prep.cfg.boundfun.is_some() {
            let bv = eval_boundaries(a, t, &prep.cfg, &prep.grid, self.env.initial_boundary)?;
            return Ok(Some(Cow::Owned(bv)));
        }
        Ok(prep.static_bvals.as_ref().map(Cow::Borrowed))
    }

    fn pin(&self, a: &mut Cells, bv: &BoundaryValues) {
        let prep = self.env.prep;
        for (c, cell) in a.iter_mut().enumerate() {
            for d in 1..prep.grid.dims {
                let pairs = prep.cfg.boundaries.pairs_for(c, d, cell.shape()[0]);
                pin_dirichlet(cell, d, &pairs, bv.get(c, d));
            }
        }
    }

    fn finish(&self, a: &mut Cells, t: f64) -> Result<()> {
        if let Some(bv) = self.bvals(a, t)? {
            self.pin(a, &bv);
        }
        Ok(())
    }

    fn x_axis(&self) -> &[f64] {
        let g = &self.env.prep.grid;
        if g.dims > 1 {
            &g.axes[1]
        } else {
            &[]
        }
    }
}

impl Dynamics for ModelDynamics<'_> {
    fn deriv(&self, a: &Cells, w: &[Field], t: f64) -> Result<Cells> {
        let prep = self.env.prep;
        let Some(deriv) = &prep.cfg.deriv else {
            return Ok(crate::field::zeros_like(a));
        };
        let bv = self.bvals(a, t)?;
        let pinned;
        let input = match &bv {
            Some(b) => {
                let mut p = a.clone();
                self.pin(&mut p, b);
                pinned = p;
                &pinned
            }
            None => a,
        };
        let ctx = self.env.ctx(t, self.pass.dtr, bv.as_deref(), self.breed_fraction, &[]);
        let d = deriv(input, w, &ctx)?;
        if d.len() != a.len() || d.iter().zip(a).any(|(x, y)| x.shape() != y.shape()) {
            return Err(SimError::Shape("derivative cells must match the field cells".into()));
        }
        Ok(d)
    }

    fn propagate(&self, a: &mut Cells, t_end: f64) -> Result<()> {
        let bv = self.bvals(a, t_end)?;
        self.pass.prop.apply(a, bv.as_deref(), self.x_axis())
    }

    fn propagate_increment(&self, a: &mut Cells) -> Result<()> {
        self.pass.prop.apply(a, None, self.x_axis())
    }
}

fn pass_noise(prep: &Prepared, pass: &Pass, rng: &RngState, g: u64, e: usize) -> Result<NoiseSet> {
    match pass.kind {
        PassKind::Single | PassKind::Fine => propagation_noise(&prep.grid, &prep.noise, pass.dtr, rng, g, e),
        PassKind::Coarse => {
            let half = pass.dtr / 2.0;
            let a = propagation_noise(&prep.grid, &prep.noise, half, rng, 2 * g, e)?;
            let b = propagation_noise(&prep.grid, &prep.noise, half, rng, 2 * g + 1, e)?;
            coarsen(&a, &b)
        }
    }
}

/// Observed quantity reduced over the ensemble: `[lines, space...]`,
/// or a density `[1, space..., bins...]` for probability graphs.
fn reduce_observation(spec: &ObserveSpec, o: &ArrayD<f64>, weights: Option<&[f64]>) -> Result<ArrayD<f64>> {
    if spec.is_probability() {
        bin_probability(o, &spec.binranges, weights)
    } else if spec.scatters > 0 {
        Ok(capture_scatters(o, spec.scatters))
    } else {
        Ok(ensemble_mean(o, weights))
    }
}

fn transform_cells(cells: &[Field], flags: &[bool], grid: &Grid) -> Result<Cells> {
    if !flags.iter().skip(1).any(|&f| f) {
        return Ok(cells.to_vec());
    }
    cells.iter().map(|c| fourier_output_transform(c, flags, grid)).collect()
}

fn observe_once(
    env: &Env,
    spec: &ObserveSpec,
    fields: &[Field],
    aux: &[Field],
    t: f64,
    dtr: f64,
    breed_fraction: f64,
    weights: Option<&[f64]>,
) -> Result<ArrayD<f64>> {
    let grid = &env.prep.grid;
    let mut all = transform_cells(fields, &spec.transforms, grid)?;
    all.extend(transform_cells(aux, &spec.transforms, grid)?);
    let ctx = env.ctx(t, dtr, None, breed_fraction, &spec.transforms);
    let o = (spec.observe)(&all, &ctx)?;
    if o.ndim() != grid.dims + 1 || o.shape()[grid.dims] != env.ensemble {
        return Err(SimError::Shape(format!(
            "observable '{}' has shape {:?}; expected [lines, space..., {}]",
            spec.label,
            o.shape(),
            env.ensemble
        )));
    }
    reduce_observation(spec, &o, weights)
}

/// Stores one time slice into an accumulator `[lines, N, rest...]`.
fn store(acc: &mut Option<ArrayD<f64>>, n: usize, j: usize, v: ArrayD<f64>) -> Result<()> {
    if acc.is_none() {
        let mut shape = vec![v.shape()[0], n];
        shape.extend_from_slice(&v.shape()[1..]);
        *acc = Some(ArrayD::zeros(IxDyn(&shape)));
    }
    let a = acc.as_mut().expect("initialized");
    let mut slot = a.index_axis_mut(Axis(1), j);
    if slot.shape() != v.shape() {
        return Err(SimError::Shape(format!("observable changed shape from {:?} to {:?}", slot.shape(), v.shape())));
    }
    slot.assign(&v);
    Ok(())
}

struct PassOutput {
    averages: Vec<ArrayD<f64>>,
    last: Cells,
    raw: Option<Vec<Cells>>,
}

fn stack_series(series: &[Cells], cell: usize) -> ArrayD<Complex64> {
    let views: Vec<_> = series.iter().map(|c| c[cell].view()).collect();
    let nd = series[0][cell].ndim();
    ndarray::stack(Axis(nd), &views).expect("equal shapes")
}

fn integrate(
    env: &Env,
    pass: &Pass,
    rng: &RngState,
    randoms: &NoiseSet,
    previous: Option<&Cells>,
) -> Result<PassOutput> {
    let prep = env.prep;
    let cfg = &prep.cfg;
    let grid = &prep.grid;
    let e = env.ensemble;
    let n = grid.points[0];
    let t0 = grid.origins[0];
    let ctx0 = env.ctx(t0, pass.dtr, None, 0.0, &[]);
    let mut a: Cells = match (previous, &cfg.transfer, &cfg.initial) {
        (Some(p), Some(tf), _) => tf(p, &randoms.cells, &ctx0)?,
        (Some(p), None, _) => p.clone(),
        (None, _, Some(init)) => init(&randoms.cells, &ctx0)?,
        (None, _, None) => cfg.fields.iter().map(|&f| Field::zeros(IxDyn(&grid.field_shape(f, e)))).collect(),
    };
    if a.len() != cfg.fields.len() {
        return Err(SimError::Shape(format!("{} initial cells for {} field cells", a.len(), cfg.fields.len())));
    }
    for (c, cell) in a.iter().enumerate() {
        let want = grid.field_shape(cfg.fields[c], e);
        if cell.shape() != want.as_slice() {
            return Err(SimError::Shape(format!("initial cell {} has shape {:?}, expected {:?}", c, cell.shape(), want)));
        }
    }
    let mut dynamics = ModelDynamics { env, pass, breed_fraction: 0.0 };
    dynamics.finish(&mut a, t0)?;

    let zero_noise = crate::randoms::zero_like(&pass_noise(prep, pass, rng, 0, e)?);
    let mut aux: Cells = match &cfg.define {
        Some(def) => def(&a, &zero_noise.cells, &ctx0)?,
        None => Vec::new(),
    };
    let weights = |a: &Cells| -> Result<Option<Vec<f64>>> {
        if cfg.weighted {
            log_weights(a).map(Some)
        } else {
            Ok(None)
        }
    };

    let graphs = &cfg.observe;
    let mut acc: Vec<Option<ArrayD<f64>>> = vec![None; graphs.len()];
    let mut raw = if cfg.rawdata { Some(vec![a.clone()]) } else { None };
    let record = |acc: &mut Vec<Option<ArrayD<f64>>>, j: usize, a: &Cells, aux: &Cells, bf: f64| -> Result<()> {
        let w = weights(a)?;
        for (g, spec) in graphs.iter().enumerate() {
            if spec.time_transformed() {
                continue;
            }
            let t = grid.axes[0][j];
            let v = observe_once(env, spec, a, aux, t, pass.dtr, bf, w.as_deref())?;
            store(&mut acc[g], n, j, v)?;
        }
        Ok(())
    };
    record(&mut acc, 0, &a, &aux, 0.0)?;

    let intervals = if prep.spectra { n } else { n - 1 };
    let per_out = grid.steps * pass.refine;
    let mut series: Vec<Cells> = Vec::new();
    let mut aux_series: Vec<Cells> = Vec::new();
    let mut breed_fraction = 0.0;
    for j in 1..=intervals {
        if cfg.weighted && cfg.thresholdw > 0.0 {
            breed_fraction = breed(&mut a, cfg.thresholdw)?.breed_fraction;
            dynamics.breed_fraction = breed_fraction;
        }
        for k in 0..grid.steps {
            let mut path = if prep.spectra { vec![a.clone()] } else { Vec::new() };
            let mut aux_sum: Option<Cells> = None;
            for r in 0..pass.refine {
                let g = ((j - 1) * per_out + k * pass.refine + r) as u64;
                let t = t0 + g as f64 * pass.dtr;
                let w = pass_noise(prep, pass, rng, g, e)?;
                let sc = StepContext { t, dtr: pass.dtr, iterations: cfg.iterations, adapt: cfg.adapt };
                let mut next = if prep.method.is_projected() {
                    let m = cfg.manifold.as_ref().expect("checked in prepare");
                    step_projected(prep.method, &a, &w.cells, &sc, &dynamics, m, cfg.iterproj)?
                } else {
                    step(prep.method, &a, &w.cells, &sc, &dynamics)?
                };
                dynamics.finish(&mut next, t + pass.dtr)?;
                if let Some(def) = &cfg.define {
                    let mid = combine(0.5, &a, 0.5, &next);
                    let ctx = env.ctx(t + pass.dtr / 2.0, pass.dtr, None, breed_fraction, &[]);
                    let v = def(&mid, &w.cells, &ctx)?;
                    let scale = 1.0 / pass.refine as f64;
                    match &mut aux_sum {
                        Some(s) => crate::field::axpy(s, scale, &v),
                        None => aux_sum = Some(crate::field::scaled(&v, scale)),
                    }
                }
                a = next;
                if prep.spectra {
                    path.push(a.clone());
                }
            }
            if let Some(s) = aux_sum {
                aux = s;
            }
            if prep.spectra {
                let avg = if cfg.spectral_average { spectral_field_average(&path)? } else { path[0].clone() };
                series.push(avg);
                aux_series.push(aux.clone());
            }
        }
        if j < n {
            record(&mut acc, j, &a, &aux, breed_fraction)?;
            if let Some(r) = raw.as_mut() {
                r.push(a.clone());
            }
        }
    }

    if prep.spectra {
        let dtc = grid.dtr;
        let tbar = t0 + dtc / 2.0;
        let transform = |s: &[Cells]| -> Vec<ArrayD<Complex64>> {
            if s.is_empty() || s[0].is_empty() {
                return Vec::new();
            }
            (0..s[0].len()).map(|c| time_transform(&stack_series(s, c), tbar, dtc, n).0).collect()
        };
        let fields_w = transform(&series);
        let aux_w = transform(&aux_series);
        let omegas = spectral_axis(grid);
        for (g, spec) in graphs.iter().enumerate() {
            if !spec.time_transformed() {
                continue;
            }
            for (i, &w) in omegas.iter().enumerate() {
                let at = |cells: &[ArrayD<Complex64>]| -> Cells {
                    cells.iter().map(|c| c.index_axis(Axis(c.ndim() - 1), i).to_owned()).collect()
                };
                let v = observe_once(env, spec, &at(&fields_w), &at(&aux_w), w, pass.dtr, breed_fraction, None)?;
                store(&mut acc[g], n, i, v)?;
            }
        }
    }

    let averages: Vec<ArrayD<f64>> = acc
        .into_iter()
        .enumerate()
        .map(|(g, a)| a.ok_or_else(|| SimError::Shape(format!("graph {} produced no data", g + 1))))
        .collect::<Result<_>>()?;
    Ok(PassOutput { averages, last: a, raw })
}

/// Output frequencies of time-transformed graphs.
pub fn spectral_axis(grid: &Grid) -> Vec<f64> {
    let n = grid.points[0];
    let dw = 2.0 * std::f64::consts::PI / (n as f64 * grid.dt);
    let low = -(((n - 1) / 2) as f64);
    (0..n).map(|i| (low + i as f64) * dw).collect()
}

fn boundary_randoms(prep: &Prepared, rng: &RngState, e: usize) -> Cells {
    let mut gen: ChaCha8Rng = rng.generator(Purpose::Boundary, 0);
    prep.cfg
        .fields
        .iter()
        .map(|&f| {
            let shape = prep.grid.field_shape(f, e);
            ArrayD::from_shape_simple_fn(IxDyn(&shape), || {
                let g: f64 = StandardNormal.sample(&mut gen);
                Complex64::new(g, 0.0)
            })
        })
        .collect()
}

/// Graph arrays of one member: `[sequence][pass][graph]`.
struct MemberOutput {
    graphs: Vec<Vec<Vec<ArrayD<f64>>>>,
    raw: Vec<RawBlock>,
}

fn apply_outputs(prep: &Prepared, seq: usize, averages: Vec<ArrayD<f64>>) -> Result<Vec<ArrayD<f64>>> {
    let env = Env { prep, seq, ensemble: prep.cfg.ensembles[0], initial_boundary: None };
    let ctx = env.ctx(prep.grid.origins[0], prep.grid.dtr, None, 0.0, &[]);
    prep.cfg
        .observe
        .iter()
        .enumerate()
        .map(|(g, spec)| match &spec.output {
            Some(f) => f(&averages, &ctx),
            None => Ok(averages[g].clone()),
        })
        .collect()
}

fn run_member(preps: &[Prepared], member: usize) -> Result<MemberOutput> {
    let mut out = MemberOutput { graphs: Vec::new(), raw: Vec::new() };
    let mut finals: Vec<(PassKind, Cells)> = Vec::new();
    for (s, prep) in preps.iter().enumerate() {
        let wrap = |e: SimError| SimError::InSequence { index: s, method: prep.method.name().into(), source: Box::new(e) };
        let rng = RngState::new(prep.cfg.seed.wrapping_add((s as u64).wrapping_mul(SEQUENCE_MIX)), member as u64);
        let e = prep.cfg.ensembles[0];
        let randoms = initial_randoms(&prep.grid, &prep.noise, &rng, e).map_err(wrap)?;
        let initial_boundary = match &prep.cfg.boundfun {
            Some(_) if prep.has_boundaries => {
                let r = boundary_randoms(prep, &rng, e);
                let t = prep.grid.origins[0] - prep.grid.dt;
                Some(eval_boundaries(&r, t, &prep.cfg, &prep.grid, None).map_err(wrap)?)
            }
            _ => None,
        };
        let env = Env { prep, seq: s, ensemble: e, initial_boundary: initial_boundary.as_ref() };
        let mut seq_graphs = Vec::new();
        let mut new_finals = Vec::new();
        for pass in &prep.passes {
            let previous = finals
                .iter()
                .find(|(k, _)| *k == pass.kind)
                .or_else(|| finals.iter().find(|(k, _)| matches!(k, PassKind::Fine | PassKind::Single)))
                .map(|(_, c)| c);
            let po = integrate(&env, pass, &rng, &randoms, previous).map_err(wrap)?;
            seq_graphs.push(apply_outputs(prep, s, po.averages).map_err(wrap)?);
            if let Some(r) = po.raw {
                for c in 0..prep.cfg.fields.len() {
                    let views: Vec<_> = r.iter().map(|cells| cells[c].view()).collect();
                    let st = ndarray::stack(Axis(1), &views).expect("equal shapes");
                    out.raw.push(RawBlock {
                        sequence: s,
                        pass: pass.kind.name().into(),
                        member,
                        cell: c,
                        re: st.mapv(|v| v.re),
                        im: st.mapv(|v| v.im),
                    });
                }
            }
            new_finals.push((pass.kind, po.last));
        }
        finals = new_finals;
        out.graphs.push(seq_graphs);
    }
    Ok(out)
}

fn graph_axes(prep: &Prepared, spec: &ObserveSpec, shape: &[usize]) -> Vec<Vec<f64>> {
    let grid = &prep.grid;
    let mut axes = Vec::new();
    axes.push(if spec.time_transformed() { spectral_axis(grid) } else { grid.axes[0].clone() });
    for d in 1..grid.dims {
        let len = shape.get(d + 1).copied().unwrap_or(1);
        let flagged = spec.transforms.get(d).copied().unwrap_or(false);
        let axis = if len != grid.points[d] {
            vec![0.0; len]
        } else if flagged {
            grid.momentum_axis(d, Convention::GraphicsCentered).unwrap_or_default()
        } else {
            grid.axes[d].clone()
        };
        axes.push(axis);
    }
    if spec.is_probability() {
        for b in &spec.binranges {
            if !b.is_empty() {
                axes.push(b.clone());
            }
        }
    }
    axes.truncate(shape.len().saturating_sub(1));
    while axes.len() + 1 < shape.len() {
        axes.push(vec![0.0; shape[axes.len() + 1]]);
    }
    axes
}

fn evaluate_compare(prep: &Prepared, spec: &ObserveSpec, shape: &[usize], axes: &[Vec<f64>]) -> Option<ArrayD<f64>> {
    let f = spec.compare.as_ref()?;
    let grid = &prep.grid;
    let params: &Params = &prep.cfg.params;
    let lines = shape[0];
    let mut out = ArrayD::<f64>::zeros(IxDyn(shape));
    let rest: Vec<usize> = shape[1..].to_vec();
    let total: usize = rest.iter().product();
    let sd = grid.space_dims();
    let mut idx = vec![0usize; rest.len()];
    for _ in 0..total {
        let coords: Vec<f64> = idx.iter().enumerate().map(|(a, &i)| axes.get(a).and_then(|v| v.get(i)).copied().unwrap_or(0.0)).collect();
        let p = Point {
            t: coords[0],
            x: coords[1..(1 + sd).min(coords.len())].to_vec(),
            bins: coords.get(1 + sd..).map(|b| b.to_vec()).unwrap_or_default(),
            grid,
            params,
        };
        let vals = f(&p);
        for l in 0..lines {
            let v = vals.get(l).or(vals.last()).copied().unwrap_or(f64::NAN);
            let mut full = vec![l];
            full.extend_from_slice(&idx);
            out[IxDyn(&full)] = v;
        }
        for d in (0..rest.len()).rev() {
            idx[d] += 1;
            if idx[d] < rest[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Some(out)
}

fn merge_sequence(prep: &Prepared, s: usize, members: &[MemberOutput]) -> Result<SequenceResult> {
    let checks = prep.passes.len() == 2;
    let mut graphs = Vec::new();
    for (g, spec) in prep.cfg.observe.iter().enumerate() {
        let fine: Vec<ArrayD<f64>> = members.iter().map(|m| m.graphs[s][0][g].clone()).collect();
        let (mean_f, sigma) = sampling_stats(&fine)?;
        let (mut mean, mut step, mut sampling) = (mean_f.clone(), None, sigma);
        if checks {
            let coarse: Vec<ArrayD<f64>> = members.iter().map(|m| m.graphs[s][1][g].clone()).collect();
            let (mean_c, _) = sampling_stats(&coarse)?;
            let (v, err) = extrapolate(&mean_f, &mean_c, prep.order);
            mean = v;
            step = Some(err);
        }
        if spec.scatters > 0 {
            mean = fine[0].clone();
            step = None;
            sampling = None;
        }
        let shape = mean.shape().to_vec();
        let axes = graph_axes(prep, spec, &shape);
        let compare = if spec.scatters > 0 { None } else { evaluate_compare(prep, spec, &shape, &axes) };
        let chi2 = match (&compare, &sampling) {
            (Some(c), Some(sig)) => Some(chi_squared(&mean, sig, c, None, prep.cfg.cutoff, prep.cfg.mincount, spec.scale)),
            _ => None,
        };
        let zeros = compare.as_ref().map(|c| ArrayD::<f64>::zeros(c.raw_dim()));
        graphs.push(GraphData {
            label: spec.label.clone(),
            axes,
            mean,
            step,
            sampling,
            compare_systematic: zeros.clone(),
            compare_statistical: zeros,
            compare,
            scale: spec.scale,
            chi2,
        });
    }
    Ok(SequenceResult { config: prep.cfg.echo(), axes: prep.grid.axes.clone(), graphs })
}

/// Runs a sequence of simulations on the global thread pool.
pub fn simulate(sequence: &[SimConfig]) -> Result<(ErrorVector, ResultData)> {
    simulate_lanes(sequence, None)
}

/// Runs a sequence with `lanes` worker threads (`None` uses the global pool).
/// Results do not depend on the lane count.
pub fn simulate_lanes(sequence: &[SimConfig], lanes: Option<usize>) -> Result<(ErrorVector, ResultData)> {
    let start = Instant::now();
    let first = sequence.first().ok_or_else(|| SimError::Config("empty sequence".into()))?;
    let preps: Vec<Prepared> = sequence
        .iter()
        .enumerate()
        .map(|(i, c)| {
            prepare(c, first).map_err(|e| SimError::InSequence { index: i, method: c.resolved_method().name().into(), source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let members = run_ensembles_lanes(&preps, first.ensembles, lanes)?;
    let mut data = ResultData::default();
    for (s, prep) in preps.iter().enumerate() {
        data.sequences.push(merge_sequence(prep, s, &members)?);
    }
    for m in members {
        data.raw.extend(m.raw);
    }
    let list: Vec<(usize, usize, &GraphData)> = data
        .sequences
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| seq.graphs.iter().enumerate().map(move |(n, g)| (s, n, g)))
        .collect();
    let (mut ev, _) = summarize(&list, first.relerr, first.rmserr);
    ev.seconds = start.elapsed().as_secs_f64();
    data.errors = ev;
    Ok((ev, data))
}

fn run_ensembles_lanes(preps: &[Prepared], ensembles: [usize; 3], lanes: Option<usize>) -> Result<Vec<MemberOutput>> {
    let (serial, parallel) = (ensembles[1], ensembles[2]);
    let work = || -> Result<Vec<MemberOutput>> {
        let blocks: Vec<Result<Vec<MemberOutput>>> = (0..parallel)
            .into_par_iter()
            .map(|p| (0..serial).map(|s| run_member(preps, p * serial + s)).collect())
            .collect();
        let mut out = Vec::with_capacity(serial * parallel);
        for b in blocks {
            out.extend(b?);
        }
        Ok(out)
    };
    match lanes {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SimError::Config(format!("thread pool: {}", e)))?
            .install(work),
        None => work(),
    }
}

/// Sub-ensemble means of every graph for one configuration:
/// `[member][graph]` from the finest pass, in member order.
pub fn run_ensembles(cfg: &SimConfig, lanes: Option<usize>) -> Result<Vec<Vec<ArrayD<f64>>>> {
    let prep = prepare(cfg, cfg)?;
    let members = run_ensembles_lanes(std::slice::from_ref(&prep), cfg.ensembles, lanes)?;
    Ok(members.into_iter().map(|mut m| m.graphs.remove(0).remove(0)).collect())
}

/// One row of a parameter scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub value: f64,
    pub mean: f64,
    pub step: f64,
    pub sampling: f64,
    pub compare: Option<f64>,
}

/// Which number to extract from each run of a scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Extract {
    pub graph: usize,
    pub line: usize,
    /// Index along the time axis; the remaining axes use index 0.
    pub time_index: usize,
}

/// Runs `base` once per value of the named setting, with seed `base.seed + j`
/// for the `j`-th value.
pub fn scan_parameter(base: &SimConfig, key: &str, values: &[f64], extract: Extract) -> Result<Vec<ScanRow>> {
    let mut rows = Vec::new();
    for (j, &v) in values.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.set(key, &format!("{:?}", v))?;
        cfg.seed = base.seed.wrapping_add(j as u64);
        let (_, data) = simulate(&[cfg])?;
        let g = data.graph(0, extract.graph).ok_or_else(|| SimError::Config("scan graph missing".into()))?;
        let mut idx = vec![0usize; g.mean.ndim()];
        idx[0] = extract.line;
        idx[1] = extract.time_index;
        let at = |a: &ArrayD<f64>| a.get(IxDyn(&idx)).copied().unwrap_or(f64::NAN);
        rows.push(ScanRow {
            value: v,
            mean: at(&g.mean),
            step: g.step.as_ref().map_or(0.0, at),
            sampling: g.sampling.as_ref().map_or(0.0, at),
            compare: g.compare.as_ref().map(at),
        });
    }
    Ok(rows)
}

/// Keeps only the time slices `[from, to)` of a graph array.
pub fn time_window(a: &ArrayD<f64>, from: usize, to: usize) -> ArrayD<f64> {
    a.slice_axis(Axis(1), Slice::from(from..to)).to_owned()
}
