mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64;
use stochastica::advanced::Manifold;
use stochastica::engine::{eval_boundaries, run_ensembles, scan_parameter, simulate, simulate_lanes, Extract};
use stochastica::error::SimError;
use stochastica::field::Field;
use stochastica::findiff::{BoundaryPair, Boundaries};
use stochastica::lattice::{build_grid, GridSpec};
use stochastica::model::{ObserveSpec, SimConfig};
use stochastica::randoms::NoiseSpec;
use stochastica::registry;
use stochastica::results::encode;
use stochastica::stepper::Method;

use common::{max_abs, max_deviation, rms_z};

type C64 = Complex64;

#[test]
fn loss_then_gain() {
    let (_, data) = simulate(&registry::loss_gain()).unwrap();
    let loss = data.graph(0, 0).unwrap();
    let gain = data.graph(1, 0).unwrap();
    assert_eq!(loss.axes[0][0], 0.0);
    assert_eq!(gain.axes[0][0], 4.0);
    assert_eq!(*gain.axes[0].last().unwrap(), 8.0);
    assert!(rms_z(loss) <= 2.0, "loss z {}", rms_z(loss));
    assert!(rms_z(gain) <= 2.0, "gain z {}", rms_z(gain));
}

#[test]
fn gaussian_diffraction_matches_the_closed_form() {
    let (_, data) = simulate(&registry::gaussian_diffraction()).unwrap();
    let g = data.graph(0, 0).unwrap();
    assert_eq!(g.mean.shape(), &[1, 11, 24, 24, 24]);
    assert!(max_deviation(g) <= 1e-3, "{}", max_deviation(g));
}

#[test]
fn serial_and_parallel_members_agree() {
    let mut serial = registry::wiener().remove(0);
    serial.ensembles = [1000, 10, 1];
    let mut parallel = serial.clone();
    parallel.ensembles = [1000, 1, 10];
    let (_, a) = simulate(&[serial]).unwrap();
    let (_, b) = simulate(&[parallel]).unwrap();
    let (ga, gb) = (a.graph(0, 0).unwrap(), b.graph(0, 0).unwrap());
    assert_eq!(ga.mean, gb.mean);
    assert_eq!(ga.sampling, gb.sampling);
}

#[test]
fn every_trajectory_is_counted() {
    let mut c = registry::wiener().remove(0);
    c.grid = GridSpec::new(vec![5], vec![1.0]);
    c.ensembles = [7, 2, 3];
    c.rawdata = true;
    let members = run_ensembles(&c, None).unwrap();
    assert_eq!(members.len(), 6);
    let (_, data) = simulate(&[c]).unwrap();
    let fine: usize = data.raw.iter().filter(|b| b.pass == "fine").map(|b| *b.re.shape().last().unwrap()).sum();
    assert_eq!(fine, 7 * 2 * 3);
}

#[test]
fn single_trajectory_has_no_sampling_plane() {
    let mut c = registry::wiener().remove(0);
    c.ensembles = [1, 1, 1];
    let (_, data) = simulate(&[c]).unwrap();
    let g = data.graph(0, 0).unwrap();
    assert!(g.sampling.is_none());
    // a real walk, with fine and coarse passes agreeing to round-off
    assert!(max_abs(&g.mean) > 0.0);
    assert!(max_abs(g.step.as_ref().unwrap()) <= 1e-12);
}

#[test]
fn final_fields_seed_the_next_sequence() {
    let mut seq = registry::loss_gain();
    for c in &mut seq {
        c.ensembles = [20, 1, 2];
        c.rawdata = true;
    }
    let (_, data) = simulate(&seq).unwrap();
    let mut checked = 0;
    for first in data.raw.iter().filter(|b| b.sequence == 0) {
        let next = data
            .raw
            .iter()
            .find(|b| b.sequence == 1 && b.pass == first.pass && b.member == first.member && b.cell == first.cell)
            .unwrap();
        let last = first.re.shape()[1] - 1;
        assert_eq!(first.re.index_axis(Axis(1), last), next.re.index_axis(Axis(1), 0));
        assert_eq!(first.im.index_axis(Axis(1), last), next.im.index_axis(Axis(1), 0));
        checked += 1;
    }
    assert_eq!(checked, 4);
}

#[test]
fn explicit_transfer_replaces_the_default() {
    let mut seq = registry::loss_gain();
    for c in &mut seq {
        c.ensembles = [10, 1, 1];
        c.rawdata = true;
    }
    seq[1].transfer = Some(Arc::new(|a, _, _| Ok(a.iter().map(|c| c.mapv(|_| C64::new(3.0, 0.0))).collect())));
    let (_, data) = simulate(&seq).unwrap();
    let next = data.raw.iter().find(|b| b.sequence == 1).unwrap();
    assert!(next.re.index_axis(Axis(1), 0).iter().all(|&v| v == 3.0));
}

#[test]
fn diffusion_scan_follows_the_variance_line() {
    let base = registry::wiener_scan().remove(0);
    let values: Vec<f64> = (0..25).map(|j| (0.2 + 0.2 * j as f64).sqrt()).collect();
    let rows = scan_parameter(&base, "B", &values, Extract { graph: 0, line: 0, time_index: 11 }).unwrap();
    assert_eq!(rows.len(), 25);
    let mut z2 = 0.0;
    for r in &rows {
        let expected = 10.0 * r.value * r.value;
        assert!((r.compare.unwrap() - expected).abs() < 1e-12);
        z2 += ((r.mean - expected) / (r.sampling * r.sampling + r.step * r.step).sqrt()).powi(2);
    }
    let z = (z2 / 25.0).sqrt();
    assert!(z <= 2.0, "rms z {z}");
}

#[test]
fn single_value_scan_is_a_plain_run() {
    let base = registry::wiener_scan().remove(0);
    let rows = scan_parameter(&base, "B", &[1.5], Extract { graph: 0, line: 0, time_index: 6 }).unwrap();
    let mut cfg = base.clone();
    cfg.set_param("B", vec![1.5]);
    let (_, data) = simulate(&[cfg]).unwrap();
    let g = data.graph(0, 0).unwrap();
    assert_eq!(rows[0].mean, g.mean[[0, 6]]);
    assert_eq!(rows[0].sampling, g.sampling.as_ref().unwrap()[[0, 6]]);
}

#[test]
fn noiseless_scan_has_zero_variance() {
    let mut base = registry::wiener_scan().remove(0);
    base.noise = Some(NoiseSpec::none());
    base.deriv = Some(Arc::new(|a, _, ctx| {
        let b = ctx.param("B")?;
        Ok(vec![a[0].mapv(|v| -b * v)])
    }));
    let rows = scan_parameter(&base, "B", &[0.5, 1.0, 2.0], Extract { graph: 0, line: 0, time_index: 11 }).unwrap();
    assert!(rows.iter().all(|r| r.mean == 0.0 && r.step == 0.0));
}

#[test]
fn scans_reject_unknown_settings() {
    let base = registry::wiener_scan().remove(0);
    assert!(scan_parameter(&base, "bogus", &[1.0], Extract { graph: 0, line: 0, time_index: 0 }).is_err());
    assert!(scan_parameter(&base, "B", &[1.0], Extract { graph: 3, line: 0, time_index: 0 }).is_err());
}

fn line_field(cfg: &SimConfig, components: usize) -> Field {
    let grid = build_grid(&cfg.grid).unwrap();
    Field::from_elem(IxDyn(&grid.field_shape(components, cfg.ensembles[0])), C64::new(0.7, 0.0))
}

#[test]
fn periodic_boundaries_evaluate_to_zero() {
    let mut c = SimConfig::new("flat", GridSpec::new(vec![3, 8], vec![1.0, 2.0]));
    c.ensembles = [2, 1, 1];
    let grid = build_grid(&c.grid).unwrap();
    let bv = eval_boundaries(&vec![line_field(&c, 1)], 0.0, &c, &grid, None).unwrap();
    assert!(bv.is_zero());
    assert_eq!(bv.get(0, 1).unwrap().0.shape(), &[1, 1, 2]);
}

#[test]
fn static_boundary_values() {
    let mut c = SimConfig::new("pinned", GridSpec::new(vec![3, 8], vec![1.0, 2.0]));
    c.fields = vec![2];
    c.boundaries = Boundaries::periodic().with(0, 1, vec![BoundaryPair::from_codes(1, 1).unwrap(); 2]);
    c.boundval = Some(BTreeMap::from([((0, 1), vec![(C64::new(1.0, 0.0), C64::new(2.0, 0.0)), (C64::new(-1.0, 0.5), C64::new(0.0, 0.0))])]));
    let grid = build_grid(&c.grid).unwrap();
    let bv = eval_boundaries(&vec![line_field(&c, 2)], 0.3, &c, &grid, None).unwrap();
    let (lo, hi) = bv.get(0, 1).unwrap();
    assert_eq!(lo[[0, 0, 0]], C64::new(1.0, 0.0));
    assert_eq!(hi[[0, 0, 0]], C64::new(2.0, 0.0));
    assert_eq!(lo[[1, 0, 0]], C64::new(-1.0, 0.5));
}

fn rogue_wave(x: f64, t: f64) -> C64 {
    let den = 1.0 + 4.0 * (t * t + x * x);
    C64::from_polar(1.0, t) * (C64::new(4.0, 8.0 * t) / den - 1.0)
}

#[test]
fn boundary_callbacks_follow_time() {
    let c = registry::peregrine().remove(0);
    let grid = build_grid(&c.grid).unwrap();
    let a = vec![line_field(&c, 4)];
    for t in [-5.0, 0.0, 1.3] {
        let bv = eval_boundaries(&a, t, &c, &grid, None).unwrap();
        let (lo, hi) = bv.get(0, 1).unwrap();
        assert!((lo[[0, 0, 0]] - rogue_wave(-5.0, t)).norm() < 1e-14);
        assert!((hi[[0, 0, 0]] - rogue_wave(-5.0, t)).norm() < 1e-14);
    }
}

fn pinned_diffusion() -> SimConfig {
    let mut c = SimConfig::new("pinned diffusion", GridSpec::new(vec![6, 21], vec![0.5, 1.0]).with_origins(vec![0.0, 0.0]).with_steps(20));
    c.noise = Some(NoiseSpec::none());
    c.method = Some(Method::MP);
    c.boundaries = Boundaries::periodic().with(0, 1, vec![BoundaryPair::from_codes(1, 1).unwrap()]);
    c.boundval = Some(BTreeMap::from([((0, 1), vec![(C64::new(2.0, 0.0), C64::new(3.0, 0.0))])]));
    c.initial = Some(Arc::new(|_, ctx| Ok(vec![ctx.x(1).mapv(|x| C64::new((5.0 * x).sin(), 0.0)).insert_axis(Axis(0))])));
    c.deriv = Some(Arc::new(|a, _, ctx| Ok(vec![ctx.d2(&a[0], 1, 0)?])));
    c.observe = vec![ObserveSpec::new("a", Arc::new(|a, _| Ok(a[0].mapv(|v| v.re))))];
    c
}

#[test]
fn dirichlet_edges_hold_their_values() {
    let (_, data) = simulate(&[pinned_diffusion()]).unwrap();
    let g = data.graph(0, 0).unwrap();
    for t in 1..6 {
        assert_eq!(g.mean[[0, t, 0]], 2.0);
        assert_eq!(g.mean[[0, t, 20]], 3.0);
    }
}

#[test]
fn results_do_not_depend_on_lanes() {
    let mut seq = registry::cellarray();
    seq[0].ensembles = [50, 2, 4];
    seq[0].rawdata = true;
    let (_, one) = simulate_lanes(&seq, Some(1)).unwrap();
    let (_, four) = simulate_lanes(&seq, Some(4)).unwrap();
    let (_, again) = simulate(&seq).unwrap();
    assert_eq!(encode(&one).unwrap(), encode(&four).unwrap());
    assert_eq!(encode(&one).unwrap(), encode(&again).unwrap());
}

#[test]
fn seeds_change_the_noise() {
    let mut c = registry::wiener().remove(0);
    c.ensembles = [10, 1, 1];
    let (_, a) = simulate(&[c.clone()]).unwrap();
    c.seed = 1;
    let (_, b) = simulate(&[c]).unwrap();
    assert_ne!(a.graph(0, 0).unwrap().mean, b.graph(0, 0).unwrap().mean);
}

fn is_config(r: Result<impl Sized, SimError>) -> bool {
    matches!(r, Err(SimError::Config(_))) || matches!(r, Err(SimError::InSequence { ref source, .. }) if matches!(**source, SimError::Config(_)))
}

#[test]
fn invalid_configurations() {
    let base = registry::wiener().remove(0);
    let mut bad = base.clone();
    bad.method = Some(Method::RK4);
    bad.ipsteps = Some(1);
    assert!(is_config(simulate(&[bad])));
    let mut bad = base.clone();
    bad.ensembles = [0, 1, 1];
    assert!(is_config(simulate(&[bad])));
    let mut bad = base.clone();
    bad.iterations = 0;
    assert!(is_config(simulate(&[bad])));
    let mut bad = base.clone();
    bad.method = Some(Method::MPnproj);
    assert!(is_config(simulate(&[bad])));
    let mut bad = base.clone();
    bad.observe[0].scatters = base.ensembles[0] + 1;
    assert!(is_config(simulate(&[bad])));
    let mut bad = base.clone();
    bad.observe[0].transforms = vec![true, false];
    assert!(is_config(simulate(&[bad])));
    assert!(is_config(simulate(&[])));
    let mut second = base.clone();
    second.ensembles = [base.ensembles[0], base.ensembles[1] + 1, 1];
    assert!(is_config(simulate(&[base.clone(), second])));
    let mut fine = base.clone();
    fine.method = Some(Method::MPnproj);
    fine.manifold = Some(Manifold::sphere(1));
    fine.ensembles = [4, 1, 1];
    fine.grid = GridSpec::new(vec![3], vec![0.1]);
    fine.initial = Some(Arc::new(|_, ctx| Ok(vec![ctx.zeros(1).mapv(|_| C64::new(1.0, 0.0))])));
    assert!(simulate(&[fine]).is_ok());
}

#[test]
fn sequence_errors_name_the_failing_entry() {
    let base = registry::wiener().remove(0);
    let mut bad = base.clone();
    bad.iterations = 0;
    match simulate(&[base, bad]) {
        Err(SimError::InSequence { index, .. }) => assert_eq!(index, 1),
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}

#[test]
fn divergence_is_reported() {
    let mut c = SimConfig::new("blow-up", GridSpec::new(vec![11], vec![2.0]));
    c.noise = Some(NoiseSpec::none());
    c.method = Some(Method::Euler);
    c.initial = Some(Arc::new(|_, ctx| Ok(vec![ctx.zeros(1).mapv(|_| C64::new(1.0, 0.0))])));
    c.deriv = Some(Arc::new(|a, _, _| Ok(vec![a[0].mapv(|v| v * v * v * 1e100)])));
    c.observe = vec![ObserveSpec::new("a", Arc::new(|a, _| Ok(a[0].mapv(|v| v.re))))];
    let err = simulate(&[c]).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("Euler"), "{text}");
}

#[test]
fn observe_output_must_keep_the_ensemble_axis() {
    let mut c = registry::wiener().remove(0);
    c.ensembles = [4, 1, 1];
    c.observe = vec![ObserveSpec::new("flat", Arc::new(|_, _| Ok(ArrayD::zeros(IxDyn(&[1])))))];
    assert!(simulate(&[c]).is_err());
}
