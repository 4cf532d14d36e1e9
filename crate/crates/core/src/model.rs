//! Simulation configuration, callback signatures and the context handed to
//! user callbacks.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::advanced::Manifold;
use crate::error::{config, Result, SimError};
use crate::field::{Cells, Field};
use crate::findiff::{self, BoundaryArrays, BoundaryValues, Boundaries};
use crate::lattice::{Convention, Grid, GridSpec};
use crate::observables;
use crate::randoms::NoiseSpec;
use crate::spectral::LinearFn;
use crate::stepper::Method;

/// Model constants by name; scalars are one-element vectors.
pub type Params = BTreeMap<String, Vec<f64>>;

pub type InitialFn = Arc<dyn Fn(&[Field], &Ctx) -> Result<Cells> + Send + Sync>;
pub type DerivFn = Arc<dyn Fn(&Cells, &[Field], &Ctx) -> Result<Cells> + Send + Sync>;
/// Auxiliary fields from the fields and the step's noise.
pub type DefineFn = Arc<dyn Fn(&Cells, &[Field], &Ctx) -> Result<Cells> + Send + Sync>;
/// Builds the initial fields of a sequence member from the previous final fields.
pub type TransferFn = Arc<dyn Fn(&Cells, &[Field], &Ctx) -> Result<Cells> + Send + Sync>;
/// Maps fields (followed by auxiliary cells) to `[lines, space..., ensemble]`.
pub type ObserveFn = Arc<dyn Fn(&[Field], &Ctx) -> Result<ArrayD<f64>> + Send + Sync>;
/// Maps all ensemble averages `[lines, time, space...]` to one graph.
pub type OutputFn = Arc<dyn Fn(&[ArrayD<f64>], &Ctx) -> Result<ArrayD<f64>> + Send + Sync>;
/// Expected value of each line at one graph point.
pub type CompareFn = Arc<dyn Fn(&Point) -> Vec<f64> + Send + Sync>;
/// Boundary arrays for one (cell, space dimension) given that cell's field.
pub type BoundFn = Arc<dyn Fn(&Field, usize, usize, &Ctx) -> Result<BoundaryArrays> + Send + Sync>;

/// Static boundary values per (cell, dimension): one (lower, upper) pair per component.
pub type StaticBoundaries = BTreeMap<(usize, usize), Vec<(Complex64, Complex64)>>;

/// One graph point handed to a comparison function.
pub struct Point<'a> {
    /// Time, or angular frequency for time-transformed graphs.
    pub t: f64,
    /// Space coordinates or momenta; 0 along integrated dimensions.
    pub x: Vec<f64>,
    /// Bin centres for probability graphs.
    pub bins: Vec<f64>,
    pub grid: &'a Grid,
    pub params: &'a Params,
}

impl Point<'_> {
    pub fn param(&self, key: &str) -> f64 {
        self.params.get(key).and_then(|v| v.first().copied()).unwrap_or(f64::NAN)
    }
}

#[derive(Clone)]
pub struct ObserveSpec {
    pub label: String,
    pub observe: ObserveFn,
    /// Per space-time dimension: transform this axis before observing.
    pub transforms: Vec<bool>,
    /// Bin centres per observed line; an empty list marginalizes that line.
    pub binranges: Vec<Vec<f64>>,
    /// Capture this many raw trajectories instead of averaging.
    pub scatters: usize,
    pub output: Option<OutputFn>,
    pub compare: Option<CompareFn>,
    /// Count scale for chi-squared; 0 selects the variance form.
    pub scale: f64,
}

impl ObserveSpec {
    pub fn new(label: impl Into<String>, observe: ObserveFn) -> Self {
        ObserveSpec {
            label: label.into(),
            observe,
            transforms: Vec::new(),
            binranges: Vec::new(),
            scatters: 0,
            output: None,
            compare: None,
            scale: 0.0,
        }
    }

    pub fn compare(mut self, f: CompareFn) -> Self {
        self.compare = Some(f);
        self
    }

    pub fn transforms(mut self, t: Vec<bool>) -> Self {
        self.transforms = t;
        self
    }

    pub fn bins(mut self, b: Vec<Vec<f64>>) -> Self {
        self.binranges = b;
        self
    }

    pub fn time_transformed(&self) -> bool {
        self.transforms.first().copied().unwrap_or(false)
    }

    pub fn is_probability(&self) -> bool {
        !self.binranges.is_empty()
    }
}

impl fmt::Debug for ObserveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObserveSpec")
            .field("label", &self.label)
            .field("transforms", &self.transforms)
            .field("binranges", &self.binranges.len())
            .field("scatters", &self.scatters)
            .field("compare", &self.compare.is_some())
            .finish()
    }
}

/// The full parameter record of one simulation in a sequence.
#[derive(Clone)]
pub struct SimConfig {
    pub name: String,
    pub grid: GridSpec,
    pub fields: Vec<usize>,
    /// `None` draws one Gaussian noise per field component.
    pub noise: Option<NoiseSpec>,
    /// `None` selects RK4 for single trajectories, MP otherwise.
    pub method: Option<Method>,
    pub iterations: usize,
    pub ipsteps: Option<usize>,
    /// Extrapolation order; negative selects the method's own order.
    pub order: i32,
    pub checks: bool,
    pub seed: u64,
    /// `[vector, serial, parallel]` ensemble sizes.
    pub ensembles: [usize; 3],
    pub initial: Option<InitialFn>,
    pub deriv: Option<DerivFn>,
    pub linear: Vec<Option<LinearFn>>,
    pub define: Option<DefineFn>,
    pub transfer: Option<TransferFn>,
    pub observe: Vec<ObserveSpec>,
    pub boundaries: Boundaries,
    pub boundval: Option<StaticBoundaries>,
    pub boundfun: Option<BoundFn>,
    /// Average with `exp(Re Omega)` weights from the last component of cell 0.
    pub weighted: bool,
    pub thresholdw: f64,
    pub adapt: f64,
    pub manifold: Option<Manifold>,
    pub iterproj: usize,
    pub cutoff: f64,
    pub mincount: f64,
    pub relerr: bool,
    pub rmserr: bool,
    pub verbose: i32,
    pub file: Option<String>,
    pub rawdata: bool,
    /// Use step-averaged fields for time-transformed graphs.
    pub spectral_average: bool,
    pub params: Params,
}

impl fmt::Debug for SimConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.echo()).finish()
    }
}

impl SimConfig {
    pub fn new(name: impl Into<String>, grid: GridSpec) -> Self {
        SimConfig {
            name: name.into(),
            grid,
            fields: vec![1],
            noise: None,
            method: None,
            iterations: 4,
            ipsteps: None,
            order: 1,
            checks: true,
            seed: 0,
            ensembles: [1, 1, 1],
            initial: None,
            deriv: None,
            linear: Vec::new(),
            define: None,
            transfer: None,
            observe: Vec::new(),
            boundaries: Boundaries::periodic(),
            boundval: None,
            boundfun: None,
            weighted: false,
            thresholdw: 0.0,
            adapt: 1.0,
            manifold: None,
            iterproj: 4,
            cutoff: 1e-12,
            mincount: 10.0,
            relerr: true,
            rmserr: true,
            verbose: 0,
            file: None,
            rawdata: false,
            spectral_average: true,
            params: Params::new(),
        }
    }

    pub fn stochastic(&self) -> bool {
        self.ensembles != [1, 1, 1]
    }

    pub fn resolved_method(&self) -> Method {
        self.method.unwrap_or(if self.stochastic() { Method::MP } else { Method::RK4 })
    }

    pub fn resolved_noise(&self) -> NoiseSpec {
        match &self.noise {
            Some(n) => n.clone(),
            None => NoiseSpec {
                noises: self.fields.clone(),
                inrandoms: self.fields.clone(),
                ..Default::default()
            },
        }
    }

    /// Extrapolation order actually used.
    pub fn resolved_order(&self) -> u32 {
        if self.order >= 0 {
            self.order as u32
        } else if self.stochastic() {
            1
        } else {
            self.resolved_method().order()
        }
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(|v| v.first().copied())
    }

    pub fn set_param(&mut self, key: &str, values: Vec<f64>) -> &mut Self {
        self.params.insert(key.to_string(), values);
        self
    }

    /// Resolved scalar settings as ordered key/value text.
    pub fn echo(&self) -> Vec<(String, String)> {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let flist = |v: &[f64]| v.iter().map(|x| format!("{:?}", x)).collect::<Vec<_>>().join(",");
        let noise = self.resolved_noise();
        let origins = match &self.grid.origins {
            Some(o) => o.clone(),
            None => (0..self.grid.points.len())
                .map(|i| if i == 0 { 0.0 } else { -self.grid.ranges[i] / 2.0 })
                .collect(),
        };
        let mut out = vec![
            ("name".to_string(), self.name.clone()),
            ("dimensions".into(), self.grid.points.len().to_string()),
            ("points".into(), list(&self.grid.points)),
            ("ranges".into(), flist(&self.grid.ranges)),
            ("origins".into(), flist(&origins)),
            ("steps".into(), self.grid.steps.to_string()),
            ("fields".into(), list(&self.fields)),
            ("noises".into(), list(&noise.noises)),
            ("knoises".into(), list(&noise.knoises)),
            ("unoises".into(), list(&noise.unoises)),
            ("inrandoms".into(), list(&noise.inrandoms)),
            ("krandoms".into(), list(&noise.krandoms)),
            ("urandoms".into(), list(&noise.urandoms)),
            ("method".into(), self.resolved_method().name().to_string()),
            ("ipsteps".into(), self.ipsteps.unwrap_or(self.resolved_method().ipsteps()).to_string()),
            ("iterations".into(), self.iterations.to_string()),
            ("order".into(), self.resolved_order().to_string()),
            ("checks".into(), (self.checks as i32).to_string()),
            ("seed".into(), self.seed.to_string()),
            ("ensembles".into(), list(&self.ensembles)),
            ("weighted".into(), (self.weighted as i32).to_string()),
            ("thresholdw".into(), format!("{:?}", self.thresholdw)),
            ("adapt".into(), format!("{:?}", self.adapt)),
            ("iterproj".into(), self.iterproj.to_string()),
            ("cutoff".into(), format!("{:?}", self.cutoff)),
            ("mincount".into(), format!("{:?}", self.mincount)),
            ("relerr".into(), (self.relerr as i32).to_string()),
            ("rmserr".into(), (self.rmserr as i32).to_string()),
            ("rawdata".into(), (self.rawdata as i32).to_string()),
            ("spectral_average".into(), (self.spectral_average as i32).to_string()),
            ("graphs".into(), self.observe.len().to_string()),
        ];
        for (n, o) in self.observe.iter().enumerate() {
            let flags = o.transforms.iter().map(|&b| (b as i32).to_string()).collect::<Vec<_>>().join(",");
            out.push((format!("olabel.{}", n + 1), o.label.clone()));
            out.push((format!("transforms.{}", n + 1), flags));
            out.push((format!("scale.{}", n + 1), format!("{:?}", o.scale)));
            out.push((format!("scatters.{}", n + 1), o.scatters.to_string()));
        }
        for (k, v) in &self.params {
            out.push((k.clone(), flist(v)));
        }
        out
    }

    /// Applies a `key=value` override. Vectors are comma separated; graph
    /// settings use `key.n` with `n` counted from 1.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let nums = || -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| SimError::Config(format!("bad number '{}' for {}", s, key))))
                .collect()
        };
        let ints = || -> Result<Vec<usize>> {
            value
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| SimError::Config(format!("bad integer '{}' for {}", s, key))))
                .collect()
        };
        let one_int = || -> Result<usize> { ints()?.first().copied().ok_or_else(|| SimError::Config(key.into())) };
        let one_num = || -> Result<f64> { nums()?.first().copied().ok_or_else(|| SimError::Config(key.into())) };
        let flag = || -> Result<bool> { Ok(one_num()? != 0.0) };
        if let Some((base, idx)) = key.split_once('.') {
            let n: usize = idx.parse().map_err(|_| SimError::Config(format!("bad graph index in '{}'", key)))?;
            if n == 0 || n > self.observe.len() {
                return config(format!("graph {} does not exist", n));
            }
            let spec = &mut self.observe[n - 1];
            match base {
                "scale" => spec.scale = one_num()?,
                "scatters" => spec.scatters = one_int()?,
                "transforms" => spec.transforms = nums()?.iter().map(|&v| v != 0.0).collect(),
                "olabel" => spec.label = value.to_string(),
                _ => return config(format!("unknown graph setting '{}'", base)),
            }
            return Ok(());
        }
        match key {
            "name" => self.name = value.to_string(),
            "points" => self.grid.points = ints()?,
            "ranges" => self.grid.ranges = nums()?,
            "origins" => self.grid.origins = Some(nums()?),
            "steps" => self.grid.steps = one_int()?,
            "method" => self.method = Some(value.parse()?),
            "iterations" => self.iterations = one_int()?,
            "ipsteps" => self.ipsteps = Some(one_int()?),
            "order" => self.order = one_num()? as i32,
            "checks" => self.checks = flag()?,
            "seed" => self.seed = one_int()? as u64,
            "ensembles" => {
                let e = ints()?;
                let mut full = [1usize; 3];
                for (i, v) in e.iter().take(3).enumerate() {
                    full[i] = *v;
                }
                self.ensembles = full;
            }
            "thresholdw" => self.thresholdw = one_num()?,
            "adapt" => self.adapt = one_num()?,
            "iterproj" => self.iterproj = one_int()?,
            "cutoff" => self.cutoff = one_num()?,
            "mincount" => self.mincount = one_num()?,
            "relerr" => self.relerr = flag()?,
            "rmserr" => self.rmserr = flag()?,
            "verbose" => self.verbose = one_num()? as i32,
            "file" => self.file = Some(value.to_string()),
            "rawdata" => self.rawdata = flag()?,
            "spectral_average" => self.spectral_average = flag()?,
            "weighted" => self.weighted = flag()?,
            k if k.chars().next().is_some_and(|c| c.is_ascii_uppercase()) => {
                self.params.insert(k.to_string(), nums()?);
            }
            _ => return config(format!("unknown setting '{}'", key)),
        }
        Ok(())
    }
}

/// Read-only view handed to every callback.
pub struct Ctx<'a> {
    pub t: f64,
    pub grid: &'a Grid,
    pub params: &'a Params,
    /// Trajectories in the vector ensemble.
    pub ensemble: usize,
    pub dtr: f64,
    pub fields: &'a [usize],
    pub boundaries: &'a Boundaries,
    pub bvals: Option<&'a BoundaryValues>,
    /// Values from the initializing boundary call, if any.
    pub initial_boundary: Option<&'a BoundaryValues>,
    pub breed_fraction: f64,
    pub sequence: usize,
    /// Space dimensions currently in momentum space (observe only).
    pub transformed: &'a [bool],
}

impl<'a> Ctx<'a> {
    pub fn param(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .and_then(|v| v.first().copied())
            .ok_or_else(|| SimError::Config(format!("parameter {} is not set", key)))
    }

    pub fn param_vec(&self, key: &str) -> Result<&'a [f64]> {
        self.params
            .get(key)
            .map(|v| v.as_slice())
            .ok_or_else(|| SimError::Config(format!("parameter {} is not set", key)))
    }

    /// Shape of a cell with `components` components.
    pub fn shape(&self, components: usize) -> Vec<usize> {
        self.grid.field_shape(components, self.ensemble)
    }

    pub fn zeros(&self, components: usize) -> Field {
        Field::zeros(IxDyn(&self.shape(components)))
    }

    /// Coordinate of space dimension `dim`, shaped to broadcast against one
    /// component `[space..., ensemble]`. Momentum when that axis is transformed.
    pub fn x(&self, dim: usize) -> ArrayD<f64> {
        if self.transformed.get(dim).copied().unwrap_or(false) {
            self.k(dim)
        } else {
            self.grid.coordinate(dim)
        }
    }

    /// Graphics-centered momentum of space dimension `dim`.
    pub fn k(&self, dim: usize) -> ArrayD<f64> {
        let k = self.grid.momentum_axis(dim, Convention::GraphicsCentered).unwrap_or_default();
        self.grid.broadcast_axis(dim, &k)
    }

    pub fn d1(&self, a: &Field, dim: usize, cell: usize) -> Result<Field> {
        let pairs = self.boundaries.pairs_for(cell, dim, a.shape()[0]);
        findiff::d1(a, dim, &pairs, self.bvals.and_then(|b| b.get(cell, dim)), self.grid.dx[dim])
    }

    pub fn d2(&self, a: &Field, dim: usize, cell: usize) -> Result<Field> {
        let pairs = self.boundaries.pairs_for(cell, dim, a.shape()[0]);
        findiff::d2(a, dim, &pairs, self.bvals.and_then(|b| b.get(cell, dim)), self.grid.dx[dim])
    }

    /// Integral over all space dimensions with the lattice spacing.
    pub fn int(&self, o: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        let measure = self.space_measure();
        observables::int(o, &measure, None, self.grid, &self.periodic())
    }

    /// Integral with an explicit measure per space-time dimension.
    pub fn int_with(&self, o: &ArrayD<f64>, measure: &[f64]) -> Result<ArrayD<f64>> {
        observables::int(o, measure, None, self.grid, &self.periodic())
    }

    pub fn ave(&self, o: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        observables::ave(o, None, self.grid)
    }

    /// Lattice spacing per dimension: `dk` along transformed axes, `dx` otherwise.
    pub fn space_measure(&self) -> Vec<f64> {
        (0..self.grid.dims)
            .map(|d| {
                if d == 0 {
                    0.0
                } else if self.transformed.get(d).copied().unwrap_or(false) {
                    self.grid.dk_periodic[d]
                } else {
                    self.grid.dx[d]
                }
            })
            .collect()
    }

    /// Per dimension: integrate with the periodic rule. Momentum axes are
    /// always periodic; space axes follow the boundary type of cell 0.
    pub fn periodic(&self) -> Vec<bool> {
        (0..self.grid.dims)
            .map(|d| {
                d > 0
                    && (self.transformed.get(d).copied().unwrap_or(false)
                        || self.boundaries.pair(0, d, 0).is_periodic())
            })
            .collect()
    }
}
