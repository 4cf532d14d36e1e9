use std::f64::consts::PI;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use proptest::prelude::*;
use stochastica::findiff::{d1, d2, pin_dirichlet, select, Boundaries, BoundaryPair, BoundaryType};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn pair(lo: i32, hi: i32) -> BoundaryPair {
    BoundaryPair::from_codes(lo, hi).unwrap()
}

/// Uniform points `x0 + i dx` and a one-component field `[1, n, 1]`.
fn sample(n: usize, x0: f64, dx: f64, f: impl Fn(f64) -> f64) -> (Vec<f64>, ArrayD<Complex64>) {
    let x: Vec<f64> = (0..n).map(|i| x0 + i as f64 * dx).collect();
    let a = ArrayD::from_shape_vec(IxDyn(&[1, n, 1]), x.iter().map(|&v| c(f(v))).collect()).unwrap();
    (x, a)
}

fn edges(lo: f64, hi: f64) -> (ArrayD<Complex64>, ArrayD<Complex64>) {
    (ArrayD::from_elem(IxDyn(&[1, 1, 1]), c(lo)), ArrayD::from_elem(IxDyn(&[1, 1, 1]), c(hi)))
}

fn values(a: &ArrayD<Complex64>) -> Vec<f64> {
    a.iter().map(|v| v.re).collect()
}

#[test]
fn first_derivative_of_a_line() {
    let (_, a) = sample(11, -1.0, 0.2, |x| x);
    let d = values(&d1(&a, 1, &[BoundaryPair::PERIODIC], None, 0.2).unwrap());
    for v in &d[1..10] {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn robin_first_derivative_returns_the_prescribed_value() {
    let (_, a) = sample(9, 0.0, 0.3, |x| (3.0 * x).exp());
    let d = values(&d1(&a, 1, &[pair(-1, -1)], None, 0.3).unwrap());
    assert_eq!(d[0], 0.0);
    assert_eq!(d[8], 0.0);
    let b = edges(1.5, -2.0);
    let d = values(&d1(&a, 1, &[pair(-1, -1)], Some(&b), 0.3).unwrap());
    assert_eq!((d[0], d[8]), (1.5, -2.0));
}

#[test]
fn dirichlet_first_derivative_uses_the_periodic_formula() {
    let (_, a) = sample(6, 0.0, 1.0, |x| x * x);
    let p = values(&d1(&a, 1, &[BoundaryPair::PERIODIC], None, 1.0).unwrap());
    let d = values(&d1(&a, 1, &[pair(1, 1)], None, 1.0).unwrap());
    assert_eq!(p, d);
}

#[test]
fn central_difference_error_on_sine() {
    let dx = PI / 50.0;
    let (x, a) = sample(51, 0.0, dx, f64::sin);
    let d = values(&d1(&a, 1, &[pair(1, 1)], None, dx).unwrap());
    let worst = (1..50).map(|i| (d[i] - x[i].cos()).abs()).fold(0.0, f64::max);
    assert!(worst <= dx * dx / 6.0, "{worst}");
    assert!(worst > 0.5 * dx * dx / 6.0);
}

#[test]
fn second_derivative_of_a_constant() {
    let (_, a) = sample(8, 0.0, 0.5, |_| 3.0);
    for bounds in [pair(-1, -1), BoundaryPair::PERIODIC] {
        assert!(values(&d2(&a, 1, &[bounds], None, 0.5).unwrap()).iter().all(|v| v.abs() < 1e-12));
    }
    let b = edges(3.0, 3.0);
    assert!(values(&d2(&a, 1, &[pair(1, 1)], Some(&b), 0.5).unwrap()).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn second_derivative_of_a_quadratic_with_exact_ghosts() {
    let (dx, n) = (0.25, 9);
    let (x, a) = sample(n, -1.0, dx, |x| x * x);
    let ghosts = edges((x[0] - dx).powi(2), (x[n - 1] + dx).powi(2));
    let d = values(&d2(&a, 1, &[pair(1, 1)], Some(&ghosts), dx).unwrap());
    assert!(d.iter().all(|v| (v - 2.0).abs() < 1e-12), "{d:?}");
    let slopes = edges(2.0 * x[0], 2.0 * x[n - 1]);
    let d = values(&d2(&a, 1, &[pair(-1, -1)], Some(&slopes), dx).unwrap());
    assert!(d.iter().all(|v| (v - 2.0).abs() < 1e-12), "{d:?}");
}

#[test]
fn robin_lower_row_formula() {
    let dx = 0.5;
    let (_, a) = sample(5, 0.0, dx, |x| x.powi(3));
    let b = edges(0.7, 0.0);
    let d = values(&d2(&a, 1, &[pair(-1, 1)], Some(&b), dx).unwrap());
    let a1 = 0.0;
    let a2 = dx.powi(3);
    assert!((d[0] - 2.0 / (dx * dx) * (a2 - a1 - 0.7 * dx)).abs() < 1e-12);
}

#[test]
fn periodic_rows_wrap() {
    let n = 16;
    let dx = 2.0 * PI / n as f64;
    let (x, a) = sample(n, 0.0, dx, f64::sin);
    let d = values(&d2(&a, 1, &[BoundaryPair::PERIODIC], None, dx).unwrap());
    let symbol = (2.0 * dx.cos() - 2.0) / (dx * dx);
    for i in 0..n {
        assert!((d[i] - symbol * x[i].sin()).abs() < 1e-12);
    }
}

#[test]
fn invalid_requests() {
    let (_, a) = sample(5, 0.0, 1.0, |x| x);
    assert!(d1(&a, 0, &[BoundaryPair::PERIODIC], None, 1.0).is_err());
    assert!(d1(&a, 2, &[BoundaryPair::PERIODIC], None, 1.0).is_err());
    let (_, short) = sample(2, 0.0, 1.0, |x| x);
    assert!(d2(&short, 1, &[BoundaryPair::PERIODIC], None, 1.0).is_err());
    let bad = (ArrayD::zeros(IxDyn(&[1, 2, 1])), ArrayD::zeros(IxDyn(&[1, 2, 1])));
    assert!(d2(&a, 1, &[pair(1, 1)], Some(&bad), 1.0).is_err());
    assert!(BoundaryPair::from_codes(0, 1).is_err());
    assert!(BoundaryPair::from_codes(-1, 0).is_err());
    assert!(BoundaryPair::from_codes(2, 1).is_err());
}

#[test]
fn boundary_codes_round_trip() {
    for code in [-1, 0, 1] {
        assert_eq!(BoundaryType::from_code(code).unwrap().code(), code);
    }
    let b = Boundaries::periodic().with(1, 1, vec![pair(1, -1)]);
    assert_eq!(b.pairs_for(1, 1, 3), vec![pair(1, -1); 3]);
    assert_eq!(b.pair(0, 1, 0), BoundaryPair::PERIODIC);
    assert!(b.any_nonperiodic());
}

#[test]
fn pinning_sets_only_dirichlet_rows() {
    let (_, mut a) = sample(5, 0.0, 1.0, |x| x + 10.0);
    let b = edges(-1.0, -2.0);
    pin_dirichlet(&mut a, 1, &[pair(1, -1)], Some(&b));
    assert_eq!(values(&a), vec![-1.0, 11.0, 12.0, 13.0, 14.0]);
    pin_dirichlet(&mut a, 1, &[pair(-1, 1)], None);
    assert_eq!(values(&a), vec![-1.0, 11.0, 12.0, 13.0, 0.0]);
}

#[test]
fn select_picks_components() {
    let a = ArrayD::from_shape_fn(IxDyn(&[3, 4, 1]), |i| c(i[0] as f64));
    let s = select(&a, &[2, 0]);
    assert_eq!(s.shape(), &[2, 4, 1]);
    assert_eq!(s[[0, 1, 0]], c(2.0));
}

fn interior_error(n: usize, second: bool) -> f64 {
    let dx = PI / (n - 1) as f64;
    let (x, a) = sample(n, 0.0, dx, |x| (2.0 * x).sin());
    let d = if second {
        values(&d2(&a, 1, &[pair(1, 1)], None, dx).unwrap())
    } else {
        values(&d1(&a, 1, &[pair(1, 1)], None, dx).unwrap())
    };
    (1..n - 1)
        .map(|i| {
            let exact = if second { -4.0 * (2.0 * x[i]).sin() } else { 2.0 * (2.0 * x[i]).cos() };
            (d[i] - exact).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn interior_stencils_are_second_order() {
    for second in [false, true] {
        let errs: Vec<f64> = [21, 41, 81, 161].iter().map(|&n| interior_error(n, second)).collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() <= 0.1, "slope {slope}");
        }
    }
}

#[test]
fn periodic_first_derivative_symbol() {
    // the central stencil multiplies exp(ikx) by i sin(k dx)/dx
    let n = 64;
    let dx = 0.1;
    let kmax = PI / dx;
    let dk = 2.0 * PI / (n as f64 * dx);
    for m in 1..=n / 8 {
        let k = m as f64 * dk;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
        let a = ArrayD::from_shape_vec(IxDyn(&[1, n, 1]), x.iter().map(|&v| Complex64::from_polar(1.0, k * v)).collect())
            .unwrap();
        let d = d1(&a, 1, &[BoundaryPair::PERIODIC], None, dx).unwrap();
        let symbol = Complex64::new(0.0, (k * dx).sin() / dx);
        for (v, e) in d.iter().zip(a.iter()) {
            assert!((v - symbol * e).norm() < 1e-10);
        }
        if k <= kmax / 8.0 {
            assert!((symbol.im - k).abs() <= 0.05 * k);
        }
    }
}

proptest! {
    #[test]
    fn linear_fields_have_exact_interior_derivatives(slope in -5.0f64..5.0, offset in -5.0f64..5.0, n in 3usize..30) {
        let (_, a) = sample(n, 0.0, 0.3, |x| slope * x + offset);
        let d = values(&d1(&a, 1, &[pair(-1, -1)], None, 0.3).unwrap());
        let dd = values(&d2(&a, 1, &[BoundaryPair::PERIODIC], None, 0.3).unwrap());
        for i in 1..n - 1 {
            prop_assert!((d[i] - slope).abs() < 1e-10);
            prop_assert!(dd[i].abs() < 1e-9);
        }
    }
}
