//! Initial random fields and propagation noises on the lattice.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{ArrayD, Axis, IxDyn, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SimError};
use crate::field::Field;
use crate::lattice::{Convention, Grid};
use crate::spectral::fft_axis;

/// Filter applied to delta-correlated momentum-space noise before it is
/// transformed back to x-space. The array is in FFT order.
pub type FilterFn = Arc<dyn Fn(Field, &Grid) -> Field + Send + Sync>;

#[derive(Clone, Default)]
pub struct NoiseSpec {
    pub noises: Vec<usize>,
    pub knoises: Vec<usize>,
    pub unoises: Vec<usize>,
    pub inrandoms: Vec<usize>,
    pub krandoms: Vec<usize>,
    pub urandoms: Vec<usize>,
    pub nfilter: Option<FilterFn>,
    pub rfilter: Option<FilterFn>,
}

impl fmt::Debug for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseSpec")
            .field("noises", &self.noises)
            .field("knoises", &self.knoises)
            .field("unoises", &self.unoises)
            .field("inrandoms", &self.inrandoms)
            .field("krandoms", &self.krandoms)
            .field("urandoms", &self.urandoms)
            .field("nfilter", &self.nfilter.is_some())
            .field("rfilter", &self.rfilter.is_some())
            .finish()
    }
}

impl NoiseSpec {
    pub fn gaussian(noises: usize) -> Self {
        NoiseSpec { noises: vec![noises], inrandoms: vec![noises], ..Default::default() }
    }

    pub fn none() -> Self {
        NoiseSpec::default()
    }

    pub fn is_empty(&self) -> bool {
        let total = |v: &[usize]| v.iter().sum::<usize>();
        total(&self.noises) + total(&self.knoises) + total(&self.unoises) == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Filtered,
    Uniform,
}

/// Noise cells in delivery order: x-space, then k-space, then uniform.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSet {
    pub cells: Vec<Field>,
    pub kinds: Vec<NoiseKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Initial = 1,
    Propagation = 2,
    Boundary = 3,
}

/// Keyed generator state: every (seed, stream, purpose, counter) tuple maps
/// to its own ChaCha8 key, so draws never depend on scheduling order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

pub const RNG_ALGORITHM: &str = "chacha8-splitmix64-keyed";

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngState { seed, stream }
    }

    pub fn generator(&self, purpose: Purpose, counter: u64) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        let words = [
            splitmix(&mut state),
            splitmix(&mut state) ^ self.stream.wrapping_mul(0xD6E8_FEB8_6659_FD93),
            splitmix(&mut state) ^ (purpose as u64).rotate_left(17),
            splitmix(&mut state) ^ counter.wrapping_mul(0xA076_1D64_78BD_642F),
        ];
        let mut mix = words[0] ^ words[1] ^ words[2] ^ words[3];
        for (i, w) in words.iter().enumerate() {
            let v = w ^ splitmix(&mut mix);
            key[i * 8..i * 8 + 8].copy_from_slice(&v.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

struct Draw<'a> {
    grid: &'a Grid,
    ensemble: usize,
    /// Time factor in the variance: `dt` for noises, 1 for initial fields.
    dt: f64,
    uniform_max: f64,
}

impl Draw<'_> {
    fn gaussian(&self, rng: &mut ChaCha8Rng, n: usize) -> Field {
        let sd = (1.0 / (self.dt * self.grid.dv)).sqrt();
        let shape = self.grid.field_shape(n, self.ensemble);
        ArrayD::from_shape_simple_fn(IxDyn(&shape), || {
            let g: f64 = rng.sample(StandardNormal);
            Complex64::new(sd * g, 0.0)
        })
    }

    fn filtered(&self, rng: &mut ChaCha8Rng, n: usize, filter: Option<&FilterFn>) -> Result<Field> {
        let grid = self.grid;
        let sd = (1.0 / (self.dt * grid.dkv)).sqrt();
        let shape = grid.field_shape(n, self.ensemble);
        let raw = ArrayD::from_shape_simple_fn(IxDyn(&shape), || {
            let g: f64 = rng.sample(StandardNormal);
            Complex64::new(sd * g, 0.0)
        });
        let mut k = match filter {
            Some(f) => {
                let out = f(raw, grid);
                if out.shape() != shape.as_slice() {
                    return Err(SimError::Noise(format!(
                        "filter returned shape {:?}, expected {:?}",
                        out.shape(),
                        shape
                    )));
                }
                out
            }
            None => raw,
        };
        inverse_symmetric(&mut k, grid)?;
        Ok(k)
    }

    fn uniform(&self, rng: &mut ChaCha8Rng, n: usize) -> Field {
        let shape = self.grid.field_shape(n, self.ensemble);
        let top = self.uniform_max;
        ArrayD::from_shape_simple_fn(IxDyn(&shape), || {
            Complex64::new(rng.random::<f64>() * top, 0.0)
        })
    }

    fn all(
        &self,
        rng: &mut ChaCha8Rng,
        counts: [&[usize]; 3],
        filter: Option<&FilterFn>,
    ) -> Result<NoiseSet> {
        let mut set = NoiseSet { cells: Vec::new(), kinds: Vec::new() };
        for &n in counts[0] {
            set.cells.push(self.gaussian(rng, n));
            set.kinds.push(NoiseKind::Gaussian);
        }
        for &n in counts[1] {
            set.cells.push(self.filtered(rng, n, filter)?);
            set.kinds.push(NoiseKind::Filtered);
        }
        for &n in counts[2] {
            set.cells.push(self.uniform(rng, n));
            set.kinds.push(NoiseKind::Uniform);
        }
        Ok(set)
    }
}

/// `v(x) = prod(dk/sqrt(2 pi)) sum_k exp(i k x) v(k)` along every space axis.
fn inverse_symmetric(k: &mut Field, grid: &Grid) -> Result<()> {
    for dim in 1..grid.dims {
        let axis = grid.momentum_axis(dim, Convention::PropagationFft)?;
        let origin = grid.origins[dim];
        let phase: Vec<Complex64> =
            axis.iter().map(|&kv| Complex64::from_polar(1.0, kv * origin)).collect();
        for mut lane in k.lanes_mut(Axis(dim)) {
            for (v, p) in lane.iter_mut().zip(&phase) {
                *v *= p;
            }
        }
        fft_axis(k, dim, true);
        let norm = grid.dk_periodic[dim] / (2.0 * PI).sqrt();
        k.mapv_inplace(|v| v * norm);
    }
    Ok(())
}

/// Noise for one computational step of length `dt`, drawn from the stream's
/// `step`-th key.
pub fn propagation_noise(
    grid: &Grid,
    spec: &NoiseSpec,
    dt: f64,
    rng: &RngState,
    step: u64,
    ensemble: usize,
) -> Result<NoiseSet> {
    if !(dt > 0.0) {
        return Err(SimError::Noise(format!("noise step must be positive, got {}", dt)));
    }
    let mut gen = rng.generator(Purpose::Propagation, step);
    let draw = Draw { grid, ensemble, dt, uniform_max: 1.0 / dt };
    draw.all(&mut gen, [&spec.noises, &spec.knoises, &spec.unoises], spec.nfilter.as_ref())
}

/// Random fields for the initial condition; uniform entries lie on [0, 1].
pub fn initial_randoms(
    grid: &Grid,
    spec: &NoiseSpec,
    rng: &RngState,
    ensemble: usize,
) -> Result<NoiseSet> {
    let mut gen = rng.generator(Purpose::Initial, 0);
    let draw = Draw { grid, ensemble, dt: 1.0, uniform_max: 1.0 };
    draw.all(&mut gen, [&spec.inrandoms, &spec.krandoms, &spec.urandoms], spec.rfilter.as_ref())
}

fn check_pair(a: &NoiseSet, b: &NoiseSet) -> Result<()> {
    let same = a.cells.len() == b.cells.len()
        && a.cells.iter().zip(&b.cells).all(|(x, y)| x.shape() == y.shape());
    if same {
        Ok(())
    } else {
        Err(SimError::Shape("fine noise sets differ in shape".into()))
    }
}

fn pairwise(a: &NoiseSet, b: &NoiseSet, f: impl Fn(NoiseKind, f64, f64) -> f64) -> Result<NoiseSet> {
    check_pair(a, b)?;
    let cells = a
        .cells
        .iter()
        .zip(&b.cells)
        .zip(&a.kinds)
        .map(|((x, y), &kind)| {
            let mut out = x.clone();
            Zip::from(&mut out).and(y).for_each(|o, &v| {
                *o = Complex64::new(f(kind, o.re, v.re), f(kind, o.im, v.im));
            });
            out
        })
        .collect();
    Ok(NoiseSet { cells, kinds: a.kinds.clone() })
}

/// Element-wise mean of two successive fine noises.
pub fn coarsen_gaussian(fine_a: &NoiseSet, fine_b: &NoiseSet) -> Result<NoiseSet> {
    pairwise(fine_a, fine_b, |_, x, y| 0.5 * (x + y))
}

/// Element-wise minimum of two successive fine uniform noises.
pub fn coarsen_uniform(fine_a: &NoiseSet, fine_b: &NoiseSet) -> Result<NoiseSet> {
    pairwise(fine_a, fine_b, |_, x, y| x.min(y))
}

/// Coarsens each cell by its own rule.
pub fn coarsen(fine_a: &NoiseSet, fine_b: &NoiseSet) -> Result<NoiseSet> {
    pairwise(fine_a, fine_b, |kind, x, y| match kind {
        NoiseKind::Uniform => x.min(y),
        _ => 0.5 * (x + y),
    })
}

/// An all-zero set with the same layout, used where no step noise applies.
pub fn zero_like(set: &NoiseSet) -> NoiseSet {
    NoiseSet {
        cells: set.cells.iter().map(|c| Field::zeros(c.raw_dim())).collect(),
        kinds: set.kinds.clone(),
    }
}
