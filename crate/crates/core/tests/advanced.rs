mod common;

use common::*;
use ndarray::{arr2, ArrayD, Axis, IxDyn};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stochastica::advanced::{breed, log_weights, project, step_projected, weighted_mean, Manifold, Projection};
use stochastica::engine::simulate;
use stochastica::error::{Result, SimError};
use stochastica::field::{Cells, Field};
use stochastica::registry;
use stochastica::stepper::{Dynamics, Method, StepContext};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// One point per column: `[components, points]`.
fn points(cols: &[&[f64]]) -> Field {
    let f = cols[0].len();
    ArrayD::from_shape_fn(IxDyn(&[f, cols.len()]), |i| c(cols[i[1]][i[0]]))
}

fn dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y).re).sum()
}

fn column(a: &Field, k: usize) -> Vec<Complex64> {
    a.index_axis(Axis(1), k).iter().copied().collect()
}

#[test]
fn catenoid_waist_is_on_the_manifold() {
    let a = points(&[&[1.0, 0.0, 0.0]]);
    let r = project(&Manifold::Catenoid, None, &a, Projection::Residual, 0).unwrap();
    assert_eq!(r.shape(), &[1, 1]);
    assert_eq!(r[[0, 0]], c(0.0));
}

#[test]
fn radial_vector_has_no_tangential_part() {
    let s = 0.5f64.sqrt();
    let a = points(&[&[s, s, 0.0]]);
    let d = points(&[&[2.0 * s, 2.0 * s, 0.0]]);
    let t = project(&Manifold::sphere(3), Some(&d), &a, Projection::Tangential, 0).unwrap();
    assert!(t.iter().all(|v| v.norm() < 1e-15));
}

#[test]
fn normal_projection_onto_the_sphere() {
    let a = points(&[&[2.0, 0.0, 0.0], &[0.3, -0.4, 1.2]]);
    let y = project(&Manifold::sphere(3), None, &a, Projection::Normal, 12).unwrap();
    for k in 0..2 {
        // nearest point on the unit sphere is the radial scaling
        let x = column(&a, k);
        let r = dot(&x, &x).sqrt();
        for (yi, xi) in column(&y, k).iter().zip(&x) {
            assert!((yi - xi / r).norm() < 1e-12);
        }
    }
}

#[test]
fn failed_normal_projection_is_reported() {
    let a = points(&[&[3.0, 0.0, 0.0]]);
    match project(&Manifold::sphere(3), None, &a, Projection::Normal, 1) {
        Err(SimError::Projection { residual }) => assert!(residual > 1e-6),
        other => panic!("{other:?}"),
    }
}

#[test]
fn tangent_vector_is_orthogonal_to_the_gradient() {
    let m = Manifold::Catenoid;
    let x = [c(1.2f64.cosh()), c(0.0), c(1.2)];
    let a = points(&[&[x[0].re, x[1].re, x[2].re]]);
    let t = project(&m, None, &a, Projection::Tangent, 0).unwrap();
    let tv = column(&t, 0);
    assert!(dot(&tv, &tv) > 0.1);
    assert!(dot(&m.gradient(&x), &tv).abs() < 1e-12);
}

#[test]
fn projection_codes() {
    for (code, p) in [(0, Projection::Tangent), (1, Projection::Tangential), (2, Projection::Normal), (4, Projection::Residual)] {
        assert_eq!(Projection::from_code(code).unwrap(), p);
    }
    assert!(Projection::from_code(3).is_err());
}

#[test]
fn manifold_constraint_forms() {
    let q = Manifold::Quadratic(vec![vec![2.0, 0.5], vec![0.5, 1.0]]);
    assert!((q.value(&[c(1.0), c(2.0)]) - c(2.0 + 2.0 + 4.0 - 1.0)).norm() < 1e-15);
    let p = Manifold::Polynomial { v: vec![1.0, 3.0], power: 3 };
    assert!((p.value(&[c(2.0), c(-1.0)]) - c(8.0 - 3.0 - 1.0)).norm() < 1e-15);
    let x = 0.7f64;
    assert!((Manifold::Catenoid.value(&[c(1.0), c(2.0), c(x)]) - c(1.0 + 4.0 - x.sinh().powi(2) - 1.0)).norm() < 1e-15);
}

/// `a' = w` with the manifold applied by the projected stepper.
struct Walk;

impl Dynamics for Walk {
    fn deriv(&self, _a: &Cells, w: &[Field], _t: f64) -> Result<Cells> {
        Ok(vec![w[0].clone()])
    }
    fn propagate(&self, _a: &mut Cells, _t: f64) -> Result<()> {
        Ok(())
    }
    fn propagate_increment(&self, _a: &mut Cells) -> Result<()> {
        Ok(())
    }
}

struct Still;

impl Dynamics for Still {
    fn deriv(&self, a: &Cells, _w: &[Field], _t: f64) -> Result<Cells> {
        Ok(a.iter().map(|x| Field::zeros(x.raw_dim())).collect())
    }
    fn propagate(&self, _a: &mut Cells, _t: f64) -> Result<()> {
        Ok(())
    }
    fn propagate_increment(&self, _a: &mut Cells) -> Result<()> {
        Ok(())
    }
}

#[test]
fn zero_dynamics_keep_the_point() {
    let a = vec![points(&[&[1.0, 0.0, 0.0], &[2.0f64.cosh(), 0.0, 2.0]])];
    let ctx = StepContext { t: 0.0, dtr: 0.1, iterations: 4, adapt: 1.0 };
    for m in [Method::Enproj, Method::MPproj, Method::MPnproj] {
        let out = step_projected(m, &a, &[], &ctx, &Still, &Manifold::Catenoid, 4).unwrap();
        let before = project(&Manifold::Catenoid, None, &a[0], Projection::Residual, 0).unwrap();
        let after = project(&Manifold::Catenoid, None, &out[0], Projection::Residual, 0).unwrap();
        assert!(out[0].iter().zip(a[0].iter()).all(|(x, y)| (x - y).norm() < 1e-14), "{m}");
        assert!(before.iter().zip(after.iter()).all(|(x, y)| (x - y).norm() < 1e-14));
    }
    let err = step_projected(Method::MP, &a, &[], &ctx, &Still, &Manifold::Catenoid, 4);
    assert!(err.is_err());
}

#[test]
fn brownian_motion_stays_on_the_sphere() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dt: f64 = 0.01;
    let e = 50;
    let mut a = vec![ArrayD::from_shape_fn(IxDyn(&[3, e]), |i| c(if i[0] == 2 { 1.0 } else { 0.0 }))];
    let sphere = Manifold::sphere(3);
    for n in 0..200 {
        let w = ArrayD::from_shape_simple_fn(IxDyn(&[3, e]), || {
            let g: f64 = StandardNormal.sample(&mut rng);
            c(g / dt.sqrt())
        });
        let ctx = StepContext { t: n as f64 * dt, dtr: dt, iterations: 4, adapt: 1.0 };
        a = step_projected(Method::MPnproj, &a, &[w], &ctx, &Walk, &sphere, 10).unwrap();
        for k in 0..e {
            let x = column(&a[0], k);
            assert!((dot(&x, &x).sqrt() - 1.0).abs() < 1e-10);
        }
    }
}

/// Cell 0 `[value, log-weight]` per trajectory.
fn weighted(values: &[f64], omega: &[f64]) -> Cells {
    let e = values.len();
    vec![ArrayD::from_shape_fn(IxDyn(&[2, e]), |i| c(if i[0] == 0 { values[i[1]] } else { omega[i[1]] }))]
}

#[test]
fn equal_weights_do_not_breed() {
    let mut cells = weighted(&[1.0, 2.0, 3.0], &[0.2, 0.2, 0.2]);
    let before = cells.clone();
    let s = breed(&mut cells, 0.5).unwrap();
    assert_eq!(cells, before);
    assert_eq!(s.breed_fraction, 0.0);
}

#[test]
fn low_weight_slot_takes_half_of_the_best() {
    let eps = 1e-6f64;
    let mut cells = weighted(&[5.0, -7.0], &[8f64.ln(), eps.ln()]);
    let s = breed(&mut cells, 0.1).unwrap();
    let w: Vec<f64> = log_weights(&cells).unwrap().iter().map(|o| o.exp()).collect();
    assert!((w[0] - 4.0).abs() < 1e-12 && (w[1] - 4.0).abs() < 1e-12, "{w:?}");
    assert_eq!(cells[0][[0, 1]], c(5.0));
    assert_eq!(s.breed_fraction, 0.5);
    assert!((s.removed_weight - eps).abs() < 1e-18);
}

#[test]
fn breeding_errors() {
    let mut cells = weighted(&[1.0, 2.0], &[0.0, 0.0]);
    assert!(matches!(breed(&mut cells, 2.0), Err(SimError::DegenerateEnsemble)));
    assert!(breed(&mut cells, 0.0).is_err());
    let mut spde = vec![ArrayD::zeros(IxDyn(&[2, 3, 4]))];
    assert!(breed(&mut spde, 0.5).is_err());
}

#[test]
fn complex_log_weights_select_on_the_real_part() {
    let mut cells = weighted(&[1.0, 2.0], &[0.0, -20.0]);
    cells[0][[1, 0]] = Complex64::new(0.0, 3.0);
    cells[0][[1, 1]] = Complex64::new(-20.0, -3.0);
    breed(&mut cells, 0.1).unwrap();
    assert_eq!(cells[0][[0, 1]], c(1.0));
}

#[test]
fn weighted_mean_uses_exponential_weights() {
    let o = arr2(&[[1.0, 3.0]]).into_dyn();
    let m = weighted_mean(&o, &[0.0, 0.0]);
    assert_eq!(m[[0]], 2.0);
    let m = weighted_mean(&o, &[0.0, 3f64.ln()]);
    assert!((m[[0]] - 2.5).abs() < 1e-15);
}

#[test]
fn weighted_ou_mean_decays() {
    let mut cfg = registry::weightcheck().remove(0);
    cfg.ensembles = [2000, 10, 1];
    let (_, data) = simulate(&[cfg]).unwrap();
    let g = data.graph(0, 0).unwrap();
    assert!(rms_z(g) <= 2.0, "rms z {}", rms_z(g));
    let breeds = data.graph(0, 1).unwrap();
    assert!(breeds.mean.iter().all(|&f| (0.0..=1.0).contains(&f)));
}

fn catenoid_point(u: f64, theta: f64) -> [Complex64; 3] {
    [c(u.cosh() * theta.cos()), c(u.cosh() * theta.sin()), c(u)]
}

proptest! {
    #[test]
    fn tangential_output_is_tangent(u in -1.5f64..1.5, th in 0.0f64..std::f64::consts::TAU, d in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let m = Manifold::Catenoid;
        let x = catenoid_point(u, th);
        let a = points(&[&[x[0].re, x[1].re, x[2].re]]);
        let dv = points(&[&d]);
        let t = project(&m, Some(&dv), &a, Projection::Tangential, 0).unwrap();
        prop_assert!(dot(&m.gradient(&x), &column(&t, 0)).abs() < 1e-10);
    }

    #[test]
    fn normal_projection_is_idempotent(x in proptest::collection::vec(-2.0f64..2.0, 3)) {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(r > 0.5);
        let m = Manifold::sphere(3);
        let a = points(&[&x]);
        let once = project(&m, None, &a, Projection::Normal, 30).unwrap();
        let twice = project(&m, None, &once, Projection::Normal, 30).unwrap();
        for (p, q) in once.iter().zip(twice.iter()) {
            prop_assert!((p - q).norm() < 1e-10);
        }
    }

    #[test]
    fn breeding_keeps_the_surviving_weight(omega in proptest::collection::vec(-6.0f64..2.0, 2..40), thr in 0.01f64..0.5) {
        let values: Vec<f64> = (0..omega.len()).map(|i| i as f64).collect();
        let mut cells = weighted(&values, &omega);
        let before: f64 = omega.iter().map(|o| o.exp()).sum();
        match breed(&mut cells, thr) {
            Ok(s) => {
                let after: f64 = log_weights(&cells).unwrap().iter().map(|o| o.exp()).sum();
                prop_assert!(((before - s.removed_weight) - after).abs() <= 1e-10 * before);
            }
            Err(SimError::DegenerateEnsemble) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
