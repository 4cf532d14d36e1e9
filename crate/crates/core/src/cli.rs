//! Command-line front end: run, check, list and plot-data.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ndarray::{ArrayD, IxDyn};

use crate::engine::simulate_lanes;
use crate::error::{Result, SimError};
use crate::errors::{summarize, xcheck, ErrorVector};
use crate::model::SimConfig;
use crate::registry::{find, models};
use crate::results::{read_results, write_results, GraphData, ResultData};

/// Environment variable that replaces the model seed unless `seed` is set
/// explicitly with `--set`.
pub const SEED_VAR: &str = "STOCHASTICA_SEED";

#[derive(Parser, Debug)]
#[command(name = "stochastica", version, about = "Stochastic and partial differential equation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a registered model and print its error summary.
    Run {
        model: String,
        /// Override a setting, `key=value`; vectors are comma separated.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Write the result file here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the parallel ensemble.
        #[arg(long)]
        lanes: Option<usize>,
    },
    /// Run a convergence check with successively halved steps.
    Check {
        model: String,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// List the registered models.
    List,
    /// Print one graph of a result file as whitespace-separated columns.
    PlotData {
        file: PathBuf,
        /// Graph number, counted from 1.
        #[arg(long)]
        graph: usize,
        /// Sequence number, counted from 1.
        #[arg(long, default_value_t = 1)]
        sequence: usize,
        /// Per axis after the line index: `:` keeps the axis, an integer fixes it.
        #[arg(long)]
        axes: Option<String>,
    },
}

enum Failure {
    Usage(String),
    Simulation(SimError),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Simulation(e)
    }
}

/// Parses arguments and runs a command; returns the exit status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{}", text) } else { write!(err, "{}", text) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {}", m);
            2
        }
        Err(Failure::Simulation(e)) => {
            let _ = writeln!(err, "error: {}", e);
            1
        }
    }
}

fn configured(model: &str, set: &[String]) -> std::result::Result<Vec<SimConfig>, Failure> {
    let entry = find(model).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut seq = (entry.factory)();
    let explicit_seed = set.iter().any(|s| s.split('=').next().map(str::trim) == Some("seed"));
    if !explicit_seed {
        if let Ok(v) = std::env::var(SEED_VAR) {
            let seed: u64 = v.trim().parse().map_err(|_| Failure::Usage(format!("{} must be an integer", SEED_VAR)))?;
            for c in &mut seq {
                c.seed = seed;
            }
        }
    }
    for s in set {
        let (k, v) = s.split_once('=').ok_or_else(|| Failure::Usage(format!("override '{}' is not key=value", s)))?;
        for c in &mut seq {
            c.set(k.trim(), v.trim()).map_err(|e| Failure::Usage(e.to_string()))?;
        }
    }
    Ok(seq)
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Simulation(SimError::Io(e));
    match cmd {
        Command::List => {
            for m in models() {
                writeln!(out, "{:<22} {}", m.name, m.description).map_err(io)?;
            }
        }
        Command::Run { model, set, out: file, lanes } => {
            let seq = configured(&model, &set)?;
            let (ev, data) = simulate_lanes(&seq, lanes)?;
            print_summary(out, &ev, &data, seq[0].verbose).map_err(io)?;
            let target = file.or_else(|| seq[0].file.as_ref().map(PathBuf::from));
            if let Some(path) = target {
                write_results(&path, &data)?;
            }
        }
        Command::Check { model, levels, set } => {
            let seq = configured(&model, &set)?;
            let table = xcheck(levels, &seq[0])?;
            writeln!(out, "# steps dtr max_difference max_step_error max_sampling_error").map_err(io)?;
            for r in &table.rows {
                writeln!(out, "{} {:e} {:e} {:e} {:e}", r.steps, r.dtr, r.max_difference, r.max_step_error, r.max_sampling_error).map_err(io)?;
            }
            writeln!(out, "# monotone {}", table.monotone).map_err(io)?;
        }
        Command::PlotData { file, graph, sequence, axes } => {
            let data = read_results(&file)?;
            plot_data(out, &data, sequence, graph, axes.as_deref())?;
        }
    }
    Ok(())
}

fn print_summary(out: &mut dyn Write, ev: &ErrorVector, data: &ResultData, verbose: i32) -> std::io::Result<()> {
    writeln!(out, "# step errors are |value - fine|; sampling errors are standard deviations of the mean")?;
    writeln!(
        out,
        "RMS errors: Step={:.3e} Samp={:.3e} Diff={:.3e} Chi2/k={:.3} Total={:.3e} Time={:.2}s",
        ev.step, ev.sampling, ev.comparison, ev.chi2_per_point, ev.total, ev.seconds
    )?;
    if verbose >= 1 {
        let list: Vec<(usize, usize, &GraphData)> = data
            .sequences
            .iter()
            .enumerate()
            .flat_map(|(s, q)| q.graphs.iter().enumerate().map(move |(n, g)| (s, n, g)))
            .collect();
        let (_, reports) = summarize(&list, true, true);
        writeln!(out, "{:>4} {:>5} {:>11} {:>11} {:>11} {:>8}  label", "seq", "graph", "step", "sampling", "diff", "chi2/k")?;
        for r in reports {
            let chi = r.chi2.map_or(f64::NAN, |c| c.per_point());
            writeln!(out, "{:>4} {:>5} {:>11.3e} {:>11.3e} {:>11.3e} {:>8.3}  {}", r.sequence + 1, r.graph + 1, r.step, r.sampling, r.comparison, chi, r.label)?;
        }
    }
    Ok(())
}

enum AxisPick {
    All,
    Fixed(usize),
}

fn parse_axes(spec: Option<&str>, n: usize) -> Result<Vec<AxisPick>> {
    let Some(s) = spec else {
        return Ok((0..n).map(|_| AxisPick::All).collect());
    };
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(SimError::Config(format!("axes spec has {} entries for {} axes", parts.len(), n)));
    }
    parts
        .iter()
        .map(|p| match *p {
            ":" => Ok(AxisPick::All),
            v => v.parse().map(AxisPick::Fixed).map_err(|_| SimError::Config(format!("bad axes entry '{}'", v))),
        })
        .collect()
}

fn plot_data(out: &mut dyn Write, data: &ResultData, sequence: usize, graph: usize, axes: Option<&str>) -> std::result::Result<(), Failure> {
    let g = data
        .graph(sequence.wrapping_sub(1), graph.wrapping_sub(1))
        .ok_or_else(|| Failure::Usage(format!("no graph {} in sequence {}", graph, sequence)))?;
    let shape = g.mean.shape().to_vec();
    let naxes = shape.len() - 1;
    let picks = parse_axes(axes, naxes).map_err(|e| Failure::Usage(e.to_string()))?;
    for (a, p) in picks.iter().enumerate() {
        if let AxisPick::Fixed(i) = p {
            if *i >= shape[a + 1] {
                return Err(Failure::Usage(format!("index {} out of range for axis {}", i, a + 1)));
            }
        }
    }
    let io = |e: std::io::Error| Failure::Simulation(SimError::Io(e));
    let mut header = vec!["line".to_string()];
    for a in 0..naxes {
        if matches!(picks[a], AxisPick::All) {
            header.push(format!("axis{}", a + 1));
        }
    }
    header.extend(["mean", "step", "sampling"].map(String::from));
    if g.compare.is_some() {
        header.push("compare".into());
    }
    writeln!(out, "# {}: {}", g.label, header.join(" ")).map_err(io)?;
    let zero = |a: &Option<ArrayD<f64>>, idx: &[usize]| a.as_ref().map_or(0.0, |x| x[IxDyn(idx)]);
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        let selected = picks.iter().enumerate().all(|(a, p)| match p {
            AxisPick::All => true,
            AxisPick::Fixed(i) => idx[a + 1] == *i,
        });
        if selected {
            let mut row = vec![idx[0].to_string()];
            for a in 0..naxes {
                if matches!(picks[a], AxisPick::All) {
                    let v = g.axes.get(a).and_then(|ax| ax.get(idx[a + 1])).copied().unwrap_or(idx[a + 1] as f64);
                    row.push(format!("{:e}", v));
                }
            }
            row.push(format!("{:e}", g.mean[IxDyn(&idx)]));
            row.push(format!("{:e}", zero(&g.step, &idx)));
            row.push(format!("{:e}", zero(&g.sampling, &idx)));
            if let Some(c) = &g.compare {
                row.push(format!("{:e}", c[IxDyn(&idx)]));
            }
            writeln!(out, "{}", row.join(" ")).map_err(io)?;
        }
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(())
}
