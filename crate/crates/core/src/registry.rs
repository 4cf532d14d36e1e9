//! Built-in models with all callbacks registered in code.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64;

use crate::advanced::Manifold;
use crate::error::{Result, SimError};
use crate::field::{Cells, Field};
use crate::findiff::{BoundaryPair, Boundaries};
use crate::lattice::GridSpec;
use crate::model::{Ctx, ObserveSpec, SimConfig};
use crate::randoms::NoiseSpec;
use crate::spectral::LinearFn;
use crate::stepper::Method;

type C64 = Complex64;

/// One registered model.
pub struct ModelEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub factory: fn() -> Vec<SimConfig>,
    /// Named acceptance metrics with their bounds.
    pub expected: &'static [(&'static str, f64)],
}

pub fn models() -> Vec<ModelEntry> {
    vec![
        ModelEntry { name: "wiener", description: "Wiener process, <a^2> = t", factory: wiener, expected: &[("rms_deviation_in_sigma", 3.0)] },
        ModelEntry { name: "kubo", description: "Kubo oscillator, <a> = exp(-t/2), <a^2> = exp(-2t)", factory: kubo, expected: &[("chi2_low", 0.2), ("chi2_high", 3.0)] },
        ModelEntry { name: "kubocheck", description: "Kubo oscillator for convergence checks", factory: kubocheck, expected: &[] },
        ModelEntry { name: "blackscholes", description: "Black-Scholes stock price, <a> = exp(0.1 t)", factory: blackscholes, expected: &[] },
        ModelEntry { name: "loss_gain", description: "Loss then gain with noise, two-stage sequence", factory: loss_gain, expected: &[] },
        ModelEntry { name: "equilibrium", description: "Ornstein-Uhlenbeck spectrum T/(pi(1+w^2))", factory: equilibrium, expected: &[("chi2_low", 0.2), ("chi2_high", 3.0)] },
        ModelEntry { name: "nls_soliton", description: "NLS soliton sech(x), periodic spectral", factory: nls_soliton, expected: &[("integral_error", 2e-3)] },
        ModelEntry { name: "nls_soliton_neumann", description: "NLS soliton with Neumann boundaries", factory: nls_soliton_neumann, expected: &[("norm_drift", 1e-6)] },
        ModelEntry { name: "heat_boundaries", description: "Heat equation with DD, NN, DN, ND, PP boundaries: spectral then finite differences", factory: heat_boundaries, expected: &[("spectral_max_error", 1e-10), ("fd_max_error", 5e-3)] },
        ModelEntry { name: "catenoid", description: "Projected diffusion on a catenoid, <R^2> = 2t", factory: catenoid, expected: &[("residual", 1e-8)] },
        ModelEntry { name: "planar", description: "Planar noise growth in x and k space", factory: planar, expected: &[] },
        ModelEntry { name: "cellarray", description: "Coupled vector and scalar SDE cells", factory: cellarray, expected: &[("rms_diff", 0.02)] },
        ModelEntry { name: "quantum_oscillator", description: "Damped oscillator input-output spectra", factory: quantum_oscillator, expected: &[("chi2_low", 0.2), ("chi2_high", 3.0)] },
        ModelEntry { name: "wiener_prob", description: "Probability density of a Wiener process", factory: wiener_prob, expected: &[("chi2_low", 0.3), ("chi2_high", 3.0)] },
        ModelEntry { name: "gpe_vortex", description: "Gross-Pitaevskii equation with vortex formation", factory: gpe_vortex, expected: &[] },
        ModelEntry { name: "characteristic", description: "Travelling wave through periodic boundaries", factory: characteristic, expected: &[] },
        ModelEntry { name: "peregrine", description: "Peregrine wave with time-dependent boundary values", factory: peregrine, expected: &[] },
        ModelEntry { name: "gaussian_diffraction", description: "Gaussian diffraction in three space dimensions", factory: gaussian_diffraction, expected: &[("max_error", 1e-3)] },
        ModelEntry { name: "weightcheck", description: "Weighted trajectories with breeding", factory: weightcheck, expected: &[] },
        ModelEntry { name: "wiener_scan", description: "Scanned diffusion a' = B w", factory: wiener_scan, expected: &[] },
    ]
}

pub fn find(name: &str) -> Result<ModelEntry> {
    models()
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| SimError::Config(format!("unknown model '{}'", name)))
}

fn observe<F>(label: &str, f: F) -> ObserveSpec
where
    F: Fn(&[Field], &Ctx) -> Result<ArrayD<f64>> + Send + Sync + 'static,
{
    ObserveSpec::new(label, Arc::new(f))
}

fn compare<F>(f: F) -> crate::model::CompareFn
where
    F: Fn(&crate::model::Point) -> Vec<f64> + Send + Sync + 'static,
{
    Arc::new(f)
}

fn linear<F>(f: F) -> Option<LinearFn>
where
    F: Fn(&[C64]) -> Vec<C64> + Send + Sync + 'static,
{
    Some(Arc::new(f))
}

/// Component `i` of a cell: `[space..., ensemble]`.
pub fn comp(a: &Field, i: usize) -> Field {
    a.index_axis(Axis(0), i).to_owned()
}

/// Builds a cell from components broadcast to `[space..., ensemble]`.
pub fn cell(ctx: &Ctx, comps: &[Field]) -> Result<Field> {
    let shape = ctx.shape(1)[1..].to_vec();
    let views = comps
        .iter()
        .map(|c| c.broadcast(IxDyn(&shape)).ok_or_else(|| SimError::Shape(format!("cannot broadcast {:?} to {:?}", c.shape(), shape))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ndarray::stack(Axis(0), &views).expect("equal shapes"))
}

/// Stacks real observables `[space..., ensemble]` as lines.
pub fn lines(parts: Vec<ArrayD<f64>>) -> ArrayD<f64> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::stack(Axis(0), &views).expect("equal shapes")
}

fn abs2(a: &Field) -> ArrayD<f64> {
    a.mapv(|v| v.norm_sqr())
}

fn re(a: &Field) -> ArrayD<f64> {
    a.mapv(|v| v.re)
}

fn complex_noise(w: &Field, scale: f64) -> Field {
    let (a, b) = (comp(w, 0), comp(w, 1));
    (a + b.mapv(|v| v * C64::i())).mapv(|v| v * scale)
}

fn real_field(x: &ArrayD<f64>) -> Field {
    x.mapv(|v| C64::new(v, 0.0))
}

/// Length of the periodic record seen by the time transform: `points * dt`.
pub fn record_length(grid: &crate::lattice::Grid) -> f64 {
    grid.points[0] as f64 * grid.dt
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

pub fn wiener() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Wiener process", GridSpec::new(vec![51], vec![10.0]));
    c.ensembles = [10000, 10, 1];
    c.deriv = Some(Arc::new(|_a, w, _| Ok(vec![w[0].clone()])));
    c.observe = vec![observe("<a^2>", |a, _| Ok(abs2(&a[0]))).compare(compare(|p| vec![p.t]))];
    vec![c]
}

pub fn kubo() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Kubo oscillator", GridSpec::new(vec![51], vec![10.0]));
    c.ensembles = [1000, 8, 1];
    c.method = Some(Method::MP);
    c.initial = Some(Arc::new(|_, ctx| Ok(vec![ctx.zeros(1).mapv(|_| C64::new(1.0, 0.0))])));
    c.deriv = Some(Arc::new(|a, w, _| Ok(vec![&a[0] * &w[0].mapv(|v| v * C64::i())])));
    c.observe = vec![
        observe("<a>", |a, _| Ok(re(&a[0]))).compare(compare(|p| vec![(-p.t / 2.0).exp()])),
        observe("<a^2>", |a, _| Ok(re(&a[0].mapv(|v| v * v)))).compare(compare(|p| vec![(-2.0 * p.t).exp()])),
    ];
    vec![c]
}

pub fn kubocheck() -> Vec<SimConfig> {
    let mut c = kubo().remove(0);
    c.name = "Kubo with convergence checks".into();
    c.ensembles = [1000, 1, 1];
    c.grid = GridSpec::new(vec![11], vec![1.0]);
    vec![c]
}

pub fn blackscholes() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Black-Scholes", GridSpec::new(vec![51], vec![10.0]));
    c.ensembles = [1000, 10, 1];
    c.set_param("Mu", vec![0.1]).set_param("Sigma", vec![1.0]);
    c.initial = Some(Arc::new(|_, ctx| Ok(vec![ctx.zeros(1).mapv(|_| C64::new(1.0, 0.0))])));
    c.deriv = Some(Arc::new(|a, w, ctx| {
        let (mu, sigma) = (ctx.param("Mu")?, ctx.param("Sigma")?);
        let drift = mu - sigma * sigma / 2.0;
        Ok(vec![&a[0].mapv(|v| v * drift) + &(&a[0] * &w[0].mapv(|v| v * sigma))])
    }));
    c.observe = vec![observe("<a>", |a, _| Ok(re(&a[0]))).compare(compare(|p| vec![(p.param("Mu") * p.t).exp()]))];
    vec![c]
}

pub fn loss_gain() -> Vec<SimConfig> {
    let mut loss = SimConfig::new("Loss with noise", GridSpec::new(vec![51], vec![4.0]));
    loss.ensembles = [10000, 1, 10];
    loss.noise = Some(NoiseSpec::gaussian(2));
    loss.initial = Some(Arc::new(|v, _| Ok(vec![complex_noise(&v[0], 1.0 / SQRT_2).insert_axis(Axis(0))])));
    loss.deriv = Some(Arc::new(|a, w, _| Ok(vec![&complex_noise(&w[0], 1.0).insert_axis(Axis(0)) - &a[0]])));
    loss.observe = vec![observe("|a|^2", |a, _| Ok(abs2(&a[0]))).compare(compare(|_| vec![1.0]))];
    let mut gain = loss.clone();
    gain.name = "Gain with noise".into();
    gain.grid = GridSpec::new(vec![51], vec![4.0]).with_origins(vec![4.0]).with_steps(2);
    gain.deriv = Some(Arc::new(|a, w, _| Ok(vec![&complex_noise(&w[0], 1.0).insert_axis(Axis(0)) + &a[0]])));
    gain.observe = vec![observe("|a|^2", |a, _| Ok(abs2(&a[0]))).compare(compare(|p| vec![2.0 * (2.0 * (p.t - 4.0)).exp() - 1.0]))];
    vec![loss, gain]
}

pub fn equilibrium() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Equilibrium spectrum", GridSpec::new(vec![50], vec![50.0]).with_steps(4));
    c.seed = 241;
    c.ensembles = [100, 50, 1];
    c.noise = Some(NoiseSpec::gaussian(2));
    c.initial = Some(Arc::new(|v, _| Ok(vec![complex_noise(&v[0], 1.0 / SQRT_2).insert_axis(Axis(0))])));
    c.deriv = Some(Arc::new(|a, w, _| Ok(vec![&complex_noise(&w[0], 1.0).insert_axis(Axis(0)) - &a[0]])));
    c.observe = vec![
        observe("|a(t)|^2", |a, _| Ok(abs2(&a[0]))).compare(compare(|_| vec![1.0])),
        observe("|a(w)|^2", |a, _| Ok(abs2(&a[0])))
            .transforms(vec![true])
            .compare(compare(|p| {
                vec![record_length(p.grid) / (PI * (1.0 + p.t * p.t))]
            })),
    ];
    vec![c]
}

fn nls_deriv() -> crate::model::DerivFn {
    Arc::new(|a, _, _| Ok(vec![a[0].mapv(|v| C64::i() * v * v.norm_sqr())]))
}

fn nls_linear() -> Option<LinearFn> {
    linear(|d| vec![C64::new(0.0, 0.5) * (d[0] * d[0] - 1.0)])
}

pub fn nls_soliton() -> Vec<SimConfig> {
    let mut c = SimConfig::new("NLS soliton", GridSpec::new(vec![51, 101], vec![10.0, 20.0]));
    c.initial = Some(Arc::new(|_, ctx| Ok(vec![cell(ctx, &[real_field(&ctx.x(1).mapv(sech))])?])));
    c.deriv = Some(nls_deriv());
    c.linear = vec![nls_linear()];
    c.observe = vec![
        observe("a(x)", |a, _| Ok(re(&a[0]))).compare(compare(|p| vec![sech(p.x[0])])),
        observe("int a(x) dx", |a, ctx| ctx.int(&re(&a[0]))).compare(compare(|_| vec![PI])),
    ];
    vec![c]
}

pub fn nls_soliton_neumann() -> Vec<SimConfig> {
    let mut c = SimConfig::new("NLS soliton, Neumann", GridSpec::new(vec![101, 101], vec![10.0, 15.0]).with_steps(4));
    c.initial = Some(Arc::new(|_, ctx| Ok(vec![cell(ctx, &[real_field(&ctx.x(1).mapv(sech))])?])));
    c.deriv = Some(nls_deriv());
    c.linear = vec![nls_linear()];
    c.boundaries = Boundaries::periodic().with(0, 1, vec![BoundaryPair::from_codes(-1, -1).expect("valid codes")]);
    c.observe = vec![
        observe("|a|^2", |a, _| Ok(abs2(&a[0]))),
        observe("int |a|^2 dx", |a, ctx| ctx.int(&abs2(&a[0]))).compare(compare(|_| vec![2.0 * (7.5f64).tanh()])),
        observe("int |da/dx|^2 dx", |a, ctx| ctx.int(&abs2(&ctx.d1(&a[0], 1, 0)?))),
    ];
    vec![c]
}

const HEAT_PERIOD: f64 = 1.02;

fn heat_initial(ctx: &Ctx) -> Result<Cells> {
    let x = ctx.x(1);
    let f = |g: &dyn Fn(f64) -> f64| real_field(&x.mapv(g));
    let e = HEAT_PERIOD;
    Ok(vec![cell(
        ctx,
        &[
            f(&|x| 4.0 * x.sin() + (2.0 * x).sin()),
            f(&|x| 5.0 + 4.0 * x.cos() + (2.0 * x).cos()),
            f(&|x| 4.0 * (x / 2.0).sin() + (1.5 * x).sin()),
            f(&|x| 4.0 * (x / 2.0).cos() + (1.5 * x).cos()),
            f(&move |x| 2.0 + (2.0 * x / e).cos() + (4.0 * x / e).sin()),
        ],
    )?])
}

/// Closed-form heat solution for component `c`.
pub fn heat_exact(c: usize, t: f64, x: f64) -> f64 {
    let e = HEAT_PERIOD;
    match c {
        0 => 4.0 * x.sin() * (-t).exp() + (2.0 * x).sin() * (-4.0 * t).exp(),
        1 => 5.0 + 4.0 * x.cos() * (-t).exp() + (2.0 * x).cos() * (-4.0 * t).exp(),
        2 => 4.0 * (x / 2.0).sin() * (-t / 4.0).exp() + (1.5 * x).sin() * (-9.0 * t / 4.0).exp(),
        3 => 4.0 * (x / 2.0).cos() * (-t / 4.0).exp() + (1.5 * x).cos() * (-9.0 * t / 4.0).exp(),
        _ => {
            2.0 + (2.0 * x / e).cos() * (-4.0 * t / (e * e)).exp() + (4.0 * x / e).sin() * (-16.0 * t / (e * e)).exp()
        }
    }
}

pub fn heat_boundaries() -> Vec<SimConfig> {
    let grid = GridSpec::new(vec![51, 51], vec![4.0, PI]).with_origins(vec![0.0, 0.0]);
    let mut c = SimConfig::new("Heat test, spectral", grid);
    c.fields = vec![5];
    c.order = 0;
    c.method = Some(Method::MP);
    c.noise = Some(NoiseSpec::none());
    let pairs = [(1, 1), (-1, -1), (1, -1), (-1, 1), (0, 0)]
        .iter()
        .map(|&(l, u)| BoundaryPair::from_codes(l, u).expect("valid codes"))
        .collect();
    c.boundaries = Boundaries::periodic().with(0, 1, pairs);
    c.initial = Some(Arc::new(|_, ctx| heat_initial(ctx)));
    let labels = ["a, DD", "a, NN", "a, DN", "a, ND", "a, PP"];
    c.observe = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            observe(l, move |a, _| Ok(re(&comp(&a[0], i)).insert_axis(Axis(0)))).compare(compare(move |p| vec![heat_exact(i, p.t, p.x[0])]))
        })
        .collect();
    let mut fd = c.clone();
    c.linear = vec![linear(|d| vec![d[0] * d[0]; 5])];
    fd.name = "Heat test, finite differences".into();
    fd.grid = fd.grid.with_steps(40);
    fd.deriv = Some(Arc::new(|a, _, ctx| Ok(vec![ctx.d2(&a[0], 1, 0)?])));
    fd.transfer = Some(Arc::new(|_, _, ctx| heat_initial(ctx)));
    vec![c, fd]
}

pub fn catenoid() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Catenoid diffusion", GridSpec::new(vec![51], vec![5.0]));
    c.fields = vec![3];
    c.iterproj = 3;
    c.ensembles = [400, 10, 1];
    c.method = Some(Method::MPnproj);
    c.manifold = Some(Manifold::Catenoid);
    c.set_param("X0", vec![1.0, 0.0, 0.0]);
    c.initial = Some(Arc::new(|_, ctx| {
        let x0 = ctx.param_vec("X0")?;
        let comps: Vec<Field> = x0.iter().map(|&v| ctx.zeros(1).index_axis(Axis(0), 0).mapv(|_| C64::new(v, 0.0))).collect();
        Ok(vec![cell(ctx, &comps)?])
    }));
    c.deriv = Some(Arc::new(|_, w, _| Ok(vec![w[0].clone()])));
    c.observe = vec![
        observe("<R^2>", |a, ctx| {
            let x0 = ctx.param_vec("X0")?;
            let mut r2 = ArrayD::<f64>::zeros(IxDyn(&a[0].shape()[1..]));
            for (i, &x) in x0.iter().enumerate() {
                r2 += &comp(&a[0], i).mapv(|v| (v.re - x).powi(2));
            }
            Ok(r2.insert_axis(Axis(0)))
        })
        .compare(compare(|p| vec![2.0 * p.t])),
        observe("|f(a)|", |a, _| {
            let m = Manifold::Catenoid;
            let e = a[0].shape()[1];
            let v: Vec<f64> = (0..e)
                .map(|k| {
                    let x: Vec<C64> = a[0].index_axis(Axis(1), k).iter().copied().collect();
                    m.value(&x).norm()
                })
                .collect();
            Ok(ArrayD::from_shape_vec(IxDyn(&[1, e]), v).expect("length e"))
        }),
    ];
    vec![c]
}

pub fn planar() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Planar noise growth", GridSpec::new(vec![10, 10, 10], vec![1.0, 5.0, 5.0]));
    c.fields = vec![2];
    c.ensembles = [10, 2, 12];
    c.noise = Some(NoiseSpec {
        noises: vec![2],
        knoises: vec![2],
        inrandoms: vec![2],
        krandoms: vec![2],
        ..Default::default()
    });
    c.initial = Some(Arc::new(|v, ctx| {
        let s = 1.0 / SQRT_2;
        Ok(vec![cell(ctx, &[complex_noise(&v[0], s), complex_noise(&v[1], s)])?])
    }));
    c.deriv = Some(Arc::new(|_, w, ctx| {
        let s = 1.0 / SQRT_2;
        Ok(vec![cell(ctx, &[complex_noise(&w[0], s), complex_noise(&w[1], s)])?])
    }));
    c.linear = vec![linear(|d| vec![C64::new(0.0, 0.5) * (d[0] * d[0] + d[1] * d[1]); 2])];
    let nspace = |p: &crate::model::Point| p.grid.nspace as f64 * (1.0 + p.t);
    let kspace = vec![false, true, true];
    c.observe = vec![
        observe("<int |a_1(x)|^2 dx>", |a, ctx| ctx.int(&abs2(&comp(&a[0], 0)).insert_axis(Axis(0)))).compare(compare(move |p| vec![nspace(p)])),
        observe("<int |a_2(k)|^2 dk>", |a, ctx| ctx.int(&abs2(&comp(&a[0], 1)).insert_axis(Axis(0))))
            .transforms(kspace.clone())
            .compare(compare(move |p| vec![nspace(p)])),
        observe("<<a_1(k) a_2*(k)>>", |a, ctx| {
            let o = (&comp(&a[0], 0) * &comp(&a[0], 1).mapv(|v| v.conj())).mapv(|v| v.re);
            ctx.ave(&o.insert_axis(Axis(0)))
        })
        .transforms(kspace.clone())
        .compare(compare(|_| vec![0.0])),
        observe("<|a_2(x)|^2>", |a, _| Ok(abs2(&comp(&a[0], 1)).insert_axis(Axis(0))))
            .compare(compare(|p| vec![(1.0 + p.t) / p.grid.dv])),
        observe("<|a_1(k)|^2>", |a, _| Ok(abs2(&comp(&a[0], 0)).insert_axis(Axis(0))))
            .transforms(kspace)
            .compare(compare(|p| vec![(1.0 + p.t) / p.grid.dkv])),
    ];
    vec![c]
}

pub fn cellarray() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Cell array SDE", GridSpec::new(vec![51], vec![10.0]));
    c.fields = vec![2, 1];
    c.ensembles = [100, 100, 1];
    c.noise = Some(NoiseSpec::gaussian(2));
    c.initial = Some(Arc::new(|_, ctx| {
        let k = |v: f64| ctx.zeros(1).mapv(|_| C64::new(v, 0.0));
        let mut a = k(0.0);
        a.append(Axis(0), k(2.0).view()).expect("same layout");
        Ok(vec![a, k(2.0)])
    }));
    c.deriv = Some(Arc::new(|a, w, ctx| {
        let a1 = comp(&a[0], 0);
        let a2 = comp(&a[0], 1);
        let da1 = (&a1.mapv(|v| C64::new(2.0, 0.0) - v)) + &comp(&w[0], 0);
        let da2 = (&a2.mapv(|v| C64::new(1.0, 0.0) - v)) + &comp(&w[0], 1).mapv(|v| v * 0.5);
        let db = &a1 - &comp(&a[1], 0);
        Ok(vec![cell(ctx, &[da1, da2])?, cell(ctx, &[db])?])
    }));
    let moments = |a: &[Field], power: i32| {
        lines(vec![
            re(&comp(&a[0], 0)).mapv(|v| v.powi(power)),
            re(&comp(&a[0], 1)).mapv(|v| v.powi(power)),
            re(&comp(&a[1], 0)).mapv(|v| v.powi(power)),
        ])
    };
    let mut variance = observe("<Delta a(i)^2>, <Delta b^2>", move |a, _| Ok(moments(a, 2))).compare(compare(|p| {
        let t = p.t;
        vec![
            0.5 * (1.0 - (-2.0 * t).exp()),
            0.125 * (1.0 - (-2.0 * t).exp()),
            0.25 * (1.0 - (1.0 + 2.0 * t + 2.0 * t * t) * (-2.0 * t).exp()),
        ]
    }));
    variance.output = Some(Arc::new(|o, _| Ok(&o[1] - &o[0].mapv(|v| v * v))));
    c.observe = vec![
        observe("<a(i)>, <b>", move |a, _| Ok(moments(a, 1))).compare(compare(|p| {
            let t = p.t;
            vec![2.0 * (1.0 - (-t).exp()), 1.0 + (-t).exp(), 2.0 * (1.0 - t * (-t).exp())]
        })),
        variance,
    ];
    vec![c]
}

pub fn quantum_oscillator() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Quantum oscillator spectrum", GridSpec::new(vec![160], vec![120.0]).with_steps(4));
    c.ensembles = [400, 1, 12];
    c.noise = Some(NoiseSpec::gaussian(2));
    c.initial = Some(Arc::new(|v, _| Ok(vec![complex_noise(&v[0], 0.5).insert_axis(Axis(0))])));
    c.deriv = Some(Arc::new(|a, w, _| {
        let input = complex_noise(&w[0], 0.5).insert_axis(Axis(0)).mapv(|v| v * SQRT_2);
        Ok(vec![&input - &a[0]])
    }));
    c.define = Some(Arc::new(|a, w, _| {
        let input = complex_noise(&w[0], 0.5).insert_axis(Axis(0));
        let output = &a[0].mapv(|v| v * SQRT_2) - &input;
        Ok(vec![input, output])
    }));
    let spectrum = |cell: usize| {
        move |a: &[Field], ctx: &Ctx| -> Result<ArrayD<f64>> {
            let scale = 2.0 * PI / record_length(ctx.grid);
            Ok(abs2(&a[cell]).mapv(|v| v * scale))
        }
    };
    c.observe = vec![
        observe("|a(w)|^2", spectrum(0)).transforms(vec![true]).compare(compare(|p| vec![1.0 / (1.0 + p.t * p.t)])),
        observe("|a_in(w)|^2", spectrum(1)).transforms(vec![true]).compare(compare(|_| vec![0.5])),
        observe("|a_out(w)|^2", spectrum(2)).transforms(vec![true]).compare(compare(|_| vec![0.5])),
    ];
    vec![c]
}

/// Gaussian density with variance 1/4 + t.
pub fn wiener_density(t: f64, x: f64) -> f64 {
    let var = 0.25 + t;
    (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

pub fn wiener_prob() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Wiener SDE distribution", GridSpec::new(vec![10], vec![10.0]));
    c.ensembles = [10000, 10, 1];
    c.initial = Some(Arc::new(|v, _| Ok(vec![v[0].mapv(|x| x / 2.0)])));
    c.deriv = Some(Arc::new(|_, w, _| Ok(vec![w[0].clone()])));
    let bins: Vec<f64> = (0..=40).map(|i| -5.0 + 0.25 * i as f64).collect();
    c.observe = vec![observe("P(x)", |a, _| Ok(re(&a[0])))
        .bins(vec![bins])
        .compare(compare(|p| vec![wiener_density(p.t, p.bins[0])]))];
    vec![c]
}

pub fn gpe_vortex() -> Vec<SimConfig> {
    let grid = GridSpec::new(vec![50, 40, 40], vec![15.0, 16.0, 16.0]).with_steps(15);
    let mut c = SimConfig::new("GPE vortex", grid);
    c.set_param("G", vec![200.0]).set_param("Om", vec![0.6]);
    let trap = |ctx: &Ctx| {
        let (x, y) = (ctx.x(1), ctx.x(2));
        (&x * &x + &y * &y).mapv(|v| 0.35 * v)
    };
    c.initial = Some(Arc::new(move |_, ctx| Ok(vec![cell(ctx, &[real_field(&trap(ctx).mapv(|v| 0.1 * (-v).exp()))])?])));
    c.deriv = Some(Arc::new(move |a, _, ctx| {
        let (g, om) = (ctx.param("G")?, ctx.param("Om")?);
        let v = real_field(&trap(ctx));
        let a0 = comp(&a[0], 0);
        let rho = a0.mapv(|z| C64::new(g * z.norm_sqr(), 0.0));
        let (x, y) = (real_field(&ctx.x(1)), real_field(&ctx.x(2)));
        let dy = comp(&ctx.d1(&a[0], 2, 0)?, 0);
        let dx = comp(&ctx.d1(&a[0], 1, 0)?, 0);
        let rot = (&x * &dy - &y * &dx).mapv(|z| z * C64::new(0.0, om));
        let da = &rot - &(&a0 * &(&v + &rho));
        let b = &a0 + &da.mapv(|z| z * ctx.dtr);
        let norm = ctx.int(&abs2(&b).insert_axis(Axis(0)))?;
        let e = b.shape()[b.ndim() - 1];
        let norm: Vec<f64> = norm.iter().map(|n| n.sqrt()).collect();
        let mut out = b.clone();
        for k in 0..e {
            let ax = Axis(out.ndim() - 1);
            let nk = norm[k];
            let ak = a0.index_axis(ax, k).to_owned();
            let mut lane = out.index_axis_mut(ax, k);
            lane.zip_mut_with(&ak, |o, &av| *o = (*o / nk - av) / ctx.dtr);
        }
        Ok(vec![out.insert_axis(Axis(0))])
    }));
    c.linear = vec![linear(|d| vec![(d[0] * d[0] + d[1] * d[1]) * 0.5])];
    c.observe = vec![observe("|a|^2", |a, _| Ok(abs2(&comp(&a[0], 0)).insert_axis(Axis(0))))];
    vec![c]
}

pub fn characteristic() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Characteristic", GridSpec::new(vec![51, 51], vec![10.0, 10.0]));
    c.initial = Some(Arc::new(|_, ctx| Ok(vec![cell(ctx, &[real_field(&ctx.x(1).mapv(|x| sech(2.0 * (x + 2.5))))])?])));
    c.linear = vec![linear(|d| vec![-d[0]])];
    c.observe = vec![observe("a(x)", |a, _| Ok(re(&a[0]))).compare(compare(|p| {
        let period = p.grid.points[1] as f64 * p.grid.dx[1];
        let value = (-3..=3).map(|n| sech(2.0 * (p.x[0] - p.t + n as f64 * period) + 5.0)).sum();
        vec![value]
    }))];
    vec![c]
}

fn peregrine_wave(x: f64, t: f64) -> (C64, C64) {
    let phase = C64::from_polar(1.0, t);
    let den = 1.0 + 4.0 * (t * t + x * x);
    let num = C64::new(4.0, 8.0 * t);
    let value = phase * (num / den - 1.0);
    let slope = phase * num * (-8.0 * x) / (den * den);
    (value, slope)
}

pub fn peregrine() -> Vec<SimConfig> {
    let grid = GridSpec::new(vec![51, 161], vec![10.0, 10.0]).with_origins(vec![-5.0, -5.0]).with_steps(20);
    let mut c = SimConfig::new("Peregrine solution", grid);
    c.fields = vec![4];
    c.order = 2;
    c.method = Some(Method::MP);
    c.noise = Some(NoiseSpec::none());
    let pairs = [(1, 1), (-1, -1), (1, -1), (-1, 1)]
        .iter()
        .map(|&(l, u)| BoundaryPair::from_codes(l, u).expect("valid codes"))
        .collect();
    c.boundaries = Boundaries::periodic().with(0, 1, pairs);
    c.boundfun = Some(Arc::new(|a, _, _, ctx| {
        let (p, dp) = peregrine_wave(ctx.grid.origins[1], ctx.t);
        let lo = [p, dp, p, dp];
        let hi = [p, -dp, -dp, p];
        let mut shape = a.shape().to_vec();
        shape[1] = 1;
        let mut l = Field::zeros(IxDyn(&shape));
        let mut h = l.clone();
        for f in 0..4 {
            l.index_axis_mut(Axis(0), f).fill(lo[f]);
            h.index_axis_mut(Axis(0), f).fill(hi[f]);
        }
        Ok((l, h))
    }));
    c.initial = Some(Arc::new(|_, ctx| {
        let t0 = ctx.grid.origins[0];
        let v = ctx.x(1).mapv(|x| peregrine_wave(x, t0).0);
        Ok(vec![cell(ctx, &[v.clone(), v.clone(), v.clone(), v])?])
    }));
    c.deriv = Some(nls_deriv());
    c.linear = vec![linear(|d| vec![C64::new(0.0, 0.5) * d[0] * d[0]; 4])];
    let labels = ["|a|^2, DD", "|a|^2, NN", "|a|^2, DN", "|a|^2, ND"];
    c.observe = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut o = observe(l, move |a, _| {
                let ai = comp(&a[0], i);
                Ok(lines(vec![ai.mapv(|v| v.re), ai.mapv(|v| v.im)]))
            })
            .compare(compare(|p| vec![peregrine_wave(p.x[0], p.t).0.norm_sqr()]));
            o.output = Some(Arc::new(move |o, _| {
                let g = &o[i];
                let re = g.index_axis(Axis(0), 0);
                let im = g.index_axis(Axis(0), 1);
                Ok((&re.mapv(|v| v * v) + &im.mapv(|v| v * v)).insert_axis(Axis(0)))
            }));
            o
        })
        .collect();
    vec![c]
}

pub fn gaussian_diffraction() -> Vec<SimConfig> {
    let grid = GridSpec::new(vec![11, 24, 24, 24], vec![10.0, 10.0, 10.0, 10.0]);
    let mut c = SimConfig::new("Gaussian diffraction", grid);
    c.set_param("D", vec![0.1]);
    c.initial = Some(Arc::new(|_, ctx| {
        let r2 = (1..4).map(|d| ctx.x(d).mapv(|v| v * v)).reduce(|a, b| &a + &b).expect("three dimensions");
        Ok(vec![cell(ctx, &[real_field(&r2.mapv(|v| (-0.5 * v).exp()))])?])
    }));
    c.linear = vec![linear(|d| vec![C64::new(0.0, 0.05) * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])])];
    c.observe = vec![observe("|a(t,x)|^2", |a, _| Ok(abs2(&comp(&a[0], 0)).insert_axis(Axis(0)))).compare(compare(|p| {
        let s = 1.0 + (p.param("D") * p.t).powi(2);
        let r2: f64 = p.x.iter().map(|v| v * v).sum();
        vec![s.powf(-1.5) * (-r2 / s).exp()]
    }))];
    vec![c]
}

pub fn weightcheck() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Weightcheck", GridSpec::new(vec![6], vec![10.0]));
    c.ensembles = [10000, 10, 1];
    c.fields = vec![2];
    c.order = 2;
    c.weighted = true;
    c.thresholdw = 0.1;
    c.initial = Some(Arc::new(|w, ctx| {
        let one = comp(&w[0], 0).mapv(|v| v + 1.0);
        let zero = comp(&w[0], 1).mapv(|_| C64::new(0.0, 0.0));
        Ok(vec![cell(ctx, &[one, zero])?])
    }));
    c.deriv = Some(Arc::new(|a, z, _| Ok(vec![&z[0] - &a[0]])));
    c.observe = vec![
        observe("<a>", |a, _| Ok(re(&comp(&a[0], 0)).insert_axis(Axis(0)))).compare(compare(|p| vec![(-p.t).exp()])),
        observe("<fractional breeds per step>", |a, ctx| {
            let e = a[0].shape()[1];
            Ok(ArrayD::from_elem(IxDyn(&[1, e]), ctx.breed_fraction))
        }),
    ];
    vec![c]
}

pub fn wiener_scan() -> Vec<SimConfig> {
    let mut c = SimConfig::new("Wiener scan", GridSpec::new(vec![12], vec![10.0]));
    c.ensembles = [1000, 10, 1];
    c.set_param("B", vec![1.0]);
    c.deriv = Some(Arc::new(|_, w, ctx| {
        let b = ctx.param("B")?;
        Ok(vec![w[0].mapv(|v| v * b)])
    }));
    c.observe = vec![observe("<a^2>", |a, _| Ok(abs2(&a[0]))).compare(compare(|p| vec![p.t * p.param("B").powi(2)]))];
    vec![c]
}
