use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stochastica::engine::simulate;
use stochastica::error::{Result, SimError};
use stochastica::field::{Cells, Field};
use stochastica::registry;
use stochastica::stepper::{
    adapt_transform, ito_stratonovich_drift_shift, step, AdaptDirection, Calculus, Dynamics, Method, StepContext,
};

type Deriv = Box<dyn Fn(&Cells, &[Field], f64) -> Cells>;

/// Scalar test model: `a' = L a + f(a, w, t)` with the propagator for one
/// sub-interval `dt / ipsteps`.
struct Model {
    linear: f64,
    sub: f64,
    f: Deriv,
}

impl Dynamics for Model {
    fn deriv(&self, a: &Cells, w: &[Field], t: f64) -> Result<Cells> {
        Ok((self.f)(a, w, t))
    }
    fn propagate(&self, a: &mut Cells, _t_end: f64) -> Result<()> {
        self.propagate_increment(a)
    }
    fn propagate_increment(&self, a: &mut Cells) -> Result<()> {
        let g = (self.linear * self.sub).exp();
        a.iter_mut().for_each(|c| c.mapv_inplace(|v| v * g));
        Ok(())
    }
}

fn model(method: Method, linear: f64, dt: f64, f: Deriv) -> Model {
    Model { linear, sub: dt / method.ipsteps() as f64, f }
}

fn scalar(values: &[Complex64]) -> Cells {
    vec![ArrayD::from_shape_vec(IxDyn(&[1, values.len()]), values.to_vec()).unwrap()]
}

fn ctx(t: f64, dtr: f64) -> StepContext {
    StepContext { t, dtr, iterations: 4, adapt: 1.0 }
}

fn zero_deriv() -> Deriv {
    Box::new(|a, _, _| a.iter().map(|c| Field::zeros(c.raw_dim())).collect())
}

#[test]
fn attribute_table() {
    let table: Vec<(usize, u32, Calculus)> =
        Method::STANDARD.iter().map(|m| (m.ipsteps(), m.order(), m.calculus())).collect();
    use Calculus::*;
    assert_eq!(
        table,
        vec![(1, 1, Ito), (1, 1, BackwardIto), (2, 2, Stratonovich), (2, 2, Stratonovich), (1, 2, Stratonovich), (2, 4, Stratonovich)]
    );
    assert_eq!(Method::STANDARD.map(|m| m.name()), ["Euler", "Implicit", "MP", "MPadapt", "RK2", "RK4"]);
}

#[test]
fn names_parse() {
    for m in Method::STANDARD {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert_eq!("mpnproj".parse::<Method>().unwrap(), Method::MPnproj);
    assert!("Milstein".parse::<Method>().is_err());
}

#[test]
fn identity_dynamics_leave_fields_unchanged() {
    let a = scalar(&[Complex64::new(1.5, -0.5), Complex64::new(-2.0, 3.0)]);
    for m in Method::STANDARD {
        let out = step(m, &a, &[], &ctx(0.3, 0.1), &model(m, 0.0, 0.1, zero_deriv())).unwrap();
        if m == Method::MPadapt {
            // reciprocal round trip on the inverted branch
            let worst = out[0].iter().zip(a[0].iter()).map(|(x, y)| (x - y).norm() / y.norm()).fold(0.0, f64::max);
            assert!(worst <= 4.0 * f64::EPSILON, "{m}");
        } else {
            assert_eq!(out, a, "{m}");
        }
    }
}

#[test]
fn linear_decay_is_exact_in_the_interaction_picture() {
    let a = scalar(&[Complex64::new(1.0, 2.0)]);
    let dt = 0.1;
    for m in Method::STANDARD {
        let out = step(m, &a, &[], &ctx(0.0, dt), &model(m, -1.0, dt, zero_deriv())).unwrap();
        let want = Complex64::new(1.0, 2.0) * (-dt).exp();
        assert!((out[0][[0, 0]] - want).norm() < 1e-14, "{m}");
    }
}

#[test]
fn projected_methods_need_a_manifold() {
    let a = scalar(&[Complex64::new(1.0, 0.0)]);
    let err = step(Method::MPnproj, &a, &[], &ctx(0.0, 0.1), &model(Method::MPnproj, 0.0, 0.1, zero_deriv()));
    assert!(err.is_err());
}

#[test]
fn non_finite_values_raise_divergence() {
    let a = scalar(&[Complex64::new(1.0, 0.0)]);
    let f: Deriv = Box::new(|a, _, _| a.iter().map(|c| c.mapv(|_| Complex64::new(f64::NAN, 0.0))).collect());
    match step(Method::Euler, &a, &[], &ctx(1.0, 0.5), &model(Method::Euler, 0.0, 0.5, f)) {
        Err(SimError::Divergence { t, method }) => {
            assert_eq!(t, 1.5);
            assert_eq!(method, "Euler");
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

fn kubo_deriv() -> Deriv {
    Box::new(|a, w, _| vec![&a[0] * &w[0].mapv(|v| Complex64::new(0.0, v.re))])
}

/// Fine noises of variance `1/dt` for `n` steps and `m` trajectories.
fn fine_noise(n: usize, m: usize, dt: f64, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (1.0 / dt).sqrt();
    (0..n)
        .map(|_| ArrayD::from_shape_simple_fn(IxDyn(&[1, m]), || {
            let g: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(sd * g, 0.0)
        }))
        .collect()
}

fn coarsen(w: &[Field]) -> Vec<Field> {
    w.chunks(2).map(|p| (&p[0] + &p[1]).mapv(|v| v * 0.5)).collect()
}

fn run_path(method: Method, noise: &[Field], dt: f64, f: &dyn Fn() -> Deriv) -> Cells {
    let m = noise[0].shape()[1];
    let mut a = scalar(&vec![Complex64::new(1.0, 0.0); m]);
    let dy = model(method, 0.0, dt, f());
    for (i, w) in noise.iter().enumerate() {
        a = step(method, &a, std::slice::from_ref(w), &ctx(i as f64 * dt, dt), &dy).unwrap();
    }
    a
}

#[test]
fn kubo_mean_under_midpoint() {
    let mut c = registry::kubo().remove(0);
    c.grid = stochastica::lattice::GridSpec::new(vec![11], vec![1.0]);
    c.ensembles = [1000, 8, 1];
    let (_, data) = simulate(&[c]).unwrap();
    let g = data.graph(0, 0).unwrap();
    let last = g.mean.shape()[1] - 1;
    let err = (g.mean[[0, last]] - (-0.5f64).exp()).abs();
    let bar = g.error_bar()[[0, last]];
    assert!(err <= 3.0 * bar, "{err} vs {bar}");
}

#[test]
fn strong_convergence_with_shared_noise() {
    let (m, t) = (2000, 1.0);
    let n4 = 256;
    let dt4 = t / n4 as f64;
    let w4 = fine_noise(n4, m, dt4, 7);
    let w2 = coarsen(&w4);
    let w1 = coarsen(&w2);
    let a4 = run_path(Method::MP, &w4, dt4, &kubo_deriv);
    let a2 = run_path(Method::MP, &w2, 2.0 * dt4, &kubo_deriv);
    let a1 = run_path(Method::MP, &w1, 4.0 * dt4, &kubo_deriv);
    let rms = |x: &Cells, y: &Cells| {
        (x[0].iter().zip(y[0].iter()).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>() / m as f64).sqrt()
    };
    let ratio = rms(&a1, &a2) / rms(&a2, &a4);
    assert!((ratio - 2.0).abs() <= 0.3, "ratio {ratio}");
}

#[test]
fn midpoint_keeps_the_kubo_norm() {
    let dt = 0.01;
    let w = fine_noise(100, 500, dt, 8);
    let a = run_path(Method::MP, &w, dt, &kubo_deriv);
    let worst = a[0].iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn drift_shift_vanishes_for_additive_noise() {
    let b = |_: &[Complex64]| vec![vec![Complex64::new(0.3, 0.0)], vec![Complex64::new(-1.0, 0.0)]];
    let s = ito_stratonovich_drift_shift(&b, &[Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)]);
    assert!(s.iter().all(|v| v.norm() < 1e-9));
}

#[test]
fn black_scholes_drift_shift() {
    let sigma = 0.4;
    let b = move |a: &[Complex64]| vec![vec![a[0] * sigma]];
    let a = Complex64::new(1.7, 0.0);
    let s = ito_stratonovich_drift_shift(&b, &[a]);
    assert!((s[0] - a * (sigma * sigma / 2.0)).norm() < 1e-8);
}

#[test]
fn two_component_drift_shift() {
    // diag(a2, a1) has no self-derivatives, so the shift is zero
    let diag = |a: &[Complex64]| {
        let z = Complex64::new(0.0, 0.0);
        vec![vec![a[1], z], vec![z, a[0]]]
    };
    let x = [Complex64::new(0.8, 0.0), Complex64::new(-1.3, 0.0)];
    assert!(ito_stratonovich_drift_shift(&diag, &x).iter().all(|v| v.norm() < 1e-8));
    // full matrix with hand-derived Jacobian
    let full = |a: &[Complex64]| vec![vec![a[0] * a[1], a[1]], vec![Complex64::new(1.0, 0.0), a[0] * a[0]]];
    let (a1, a2) = (x[0].re, x[1].re);
    let want = [0.5 * (a1 * a2 * a2 + a1 + a1 * a1), a1 * a2];
    let got = ito_stratonovich_drift_shift(&full, &x);
    for (g, w) in got.iter().zip(want) {
        assert!((g.re - w).abs() < 1e-8 && g.im.abs() < 1e-12, "{g} vs {w}");
    }
}

#[test]
fn adapt_transform_branches() {
    let a = ArrayD::from_shape_vec(IxDyn(&[3]), vec![Complex64::new(0.5, 0.0), Complex64::new(10.0, 0.0), Complex64::new(1.0, 0.0)])
        .unwrap();
    let f = adapt_transform(&a, AdaptDirection::Forward, 1.0, None).unwrap();
    assert_eq!(f[0], a[0]);
    assert!((f[1] - Complex64::new(0.1, 0.0)).norm() < 1e-16);
    assert_eq!(f[2], a[2], "ties keep the direct branch");
    let back = adapt_transform(&f, AdaptDirection::Inverse, 1.0, Some(&a)).unwrap();
    assert!(back.iter().zip(a.iter()).all(|(x, y)| (x - y).norm() < 1e-14));
    assert!(adapt_transform(&a, AdaptDirection::Forward, 0.0, None).is_err());
}

#[test]
fn adaptive_midpoint_passes_the_blow_up() {
    // a' = a^2, a(0) = 1 has the solution 1/(1 - t), singular at t = 1
    let square: &dyn Fn() -> Deriv = &|| Box::new(|a: &Cells, _: &[Field], _| vec![a[0].mapv(|v| v * v)]);
    let dt = 0.01;
    let n = 200;
    let mut plain = scalar(&[Complex64::new(1.0, 0.0)]);
    let mut diverged = false;
    for i in 0..n {
        match step(Method::MP, &plain, &[], &ctx(i as f64 * dt, dt), &model(Method::MP, 0.0, dt, square())) {
            Ok(next) => plain = next,
            Err(SimError::Divergence { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(diverged, "midpoint should not survive the singularity");
    let mut a = scalar(&[Complex64::new(1.0, 0.0)]);
    for i in 0..n {
        a = step(Method::MPadapt, &a, &[], &ctx(i as f64 * dt, dt), &model(Method::MPadapt, 0.0, dt, square())).unwrap();
    }
    // past the singularity the solution is 1/(1 - t) = -1 at t = 2
    assert!((a[0][[0, 0]] - Complex64::new(-1.0, 0.0)).norm() < 1e-3, "{}", a[0][[0, 0]]);
}

#[test]
fn euler_increment_is_explicit() {
    let a = scalar(&[Complex64::new(2.0, 0.0)]);
    let f: Deriv = Box::new(|a, _, t| vec![a[0].mapv(|v| v * t)]);
    let out = step(Method::Euler, &a, &[], &ctx(0.5, 0.1), &model(Method::Euler, 0.0, 0.1, f)).unwrap();
    assert!((out[0][[0, 0]].re - 2.1).abs() < 1e-15);
}

#[test]
fn implicit_uses_the_end_point() {
    // a' = -a: the iterated backward step approaches a/(1 + dt)
    let a = scalar(&[Complex64::new(1.0, 0.0)]);
    let f: Deriv = Box::new(|a, _, _| vec![a[0].mapv(|v| -v)]);
    let dt = 0.1;
    let dy = model(Method::Implicit, 0.0, dt, f);
    let out = step(Method::Implicit, &a, &[], &StepContext { t: 0.0, dtr: dt, iterations: 40, adapt: 1.0 }, &dy).unwrap();
    assert!((out[0][[0, 0]].re - 1.0 / 1.1).abs() < 1e-14);
}
