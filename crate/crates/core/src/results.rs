//! In-memory results and the self-describing result file.
//!
//! A result file is one JSON document followed by a line
//! `sha256 <hex digest of the document bytes>`. Numbers are written in
//! shortest round-trip form; non-finite values are written as strings.

use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Result, SimError};
use crate::errors::{ChiSquared, ErrorVector};

pub const FORMAT_NAME: &str = "stochastica-result";
pub const FORMAT_VERSION: u64 = 1;

/// Averaged output of one graph: arrays `[line, time, space..., bins...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphData {
    pub label: String,
    /// Coordinate values for every axis after the line axis.
    pub axes: Vec<Vec<f64>>,
    pub mean: ArrayD<f64>,
    pub step: Option<ArrayD<f64>>,
    pub sampling: Option<ArrayD<f64>>,
    pub compare: Option<ArrayD<f64>>,
    pub compare_systematic: Option<ArrayD<f64>>,
    pub compare_statistical: Option<ArrayD<f64>>,
    pub scale: f64,
    pub chi2: Option<ChiSquared>,
}

impl GraphData {
    /// Plane `c` counted from 1: mean, step error, sampling error,
    /// comparison, comparison systematic and statistical errors.
    pub fn plane(&self, c: usize) -> Option<&ArrayD<f64>> {
        match c {
            1 => Some(&self.mean),
            2 => self.step.as_ref(),
            3 => self.sampling.as_ref(),
            4 => self.compare.as_ref(),
            5 => self.compare_systematic.as_ref(),
            6 => self.compare_statistical.as_ref(),
            _ => None,
        }
    }

    pub fn lines(&self) -> usize {
        self.mean.shape()[0]
    }

    /// Combined step and sampling error bar at each point.
    pub fn error_bar(&self) -> ArrayD<f64> {
        let mut e = ArrayD::<f64>::zeros(self.mean.raw_dim());
        if let Some(s) = &self.step {
            e += s;
        }
        if let Some(s) = &self.sampling {
            e += s;
        }
        e
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceResult {
    pub config: Vec<(String, String)>,
    pub axes: Vec<Vec<f64>>,
    pub graphs: Vec<GraphData>,
}

/// Raw trajectories of one cell: `[component, time, space..., ensemble]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawBlock {
    pub sequence: usize,
    pub pass: String,
    pub member: usize,
    pub cell: usize,
    pub re: ArrayD<f64>,
    pub im: ArrayD<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultData {
    pub sequences: Vec<SequenceResult>,
    /// Elapsed time is not written to files.
    pub errors: ErrorVector,
    pub raw: Vec<RawBlock>,
}

impl ResultData {
    pub fn graph(&self, sequence: usize, graph: usize) -> Option<&GraphData> {
        self.sequences.get(sequence).and_then(|s| s.graphs.get(graph))
    }
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::String(format!("{}", v))
    }
}

fn array(a: &ArrayD<f64>) -> Value {
    json!({
        "shape": a.shape(),
        "data": a.iter().map(|&v| num(v)).collect::<Vec<_>>(),
    })
}

fn opt_array(a: &Option<ArrayD<f64>>) -> Value {
    a.as_ref().map_or(Value::Null, array)
}

fn to_json(r: &ResultData) -> Value {
    let sequences: Vec<Value> = r
        .sequences
        .iter()
        .map(|s| {
            let mut cfg = Map::new();
            for (k, v) in &s.config {
                cfg.insert(k.clone(), Value::String(v.clone()));
            }
            let graphs: Vec<Value> = s
                .graphs
                .iter()
                .map(|g| {
                    json!({
                        "label": g.label,
                        "axes": g.axes.iter().map(|a| a.iter().map(|&v| num(v)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                        "planes": {
                            "mean": array(&g.mean),
                            "step": opt_array(&g.step),
                            "sampling": opt_array(&g.sampling),
                            "compare": opt_array(&g.compare),
                            "compare_systematic": opt_array(&g.compare_systematic),
                            "compare_statistical": opt_array(&g.compare_statistical),
                        },
                        "scale": num(g.scale),
                        "chi2": g.chi2.map_or(Value::Null, |c| json!({"chi2": num(c.chi2), "k": c.k, "excluded": c.excluded})),
                    })
                })
                .collect();
            json!({
                "config": Value::Object(cfg),
                "config_order": s.config.iter().map(|(k, _)| k.clone()).collect::<Vec<_>>(),
                "axes": s.axes.iter().map(|a| a.iter().map(|&v| num(v)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "graphs": graphs,
            })
        })
        .collect();
    let e = &r.errors;
    json!({
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "errors": {
            "total": num(e.total),
            "step": num(e.step),
            "sampling": num(e.sampling),
            "comparison": num(e.comparison),
            "chi2_per_point": num(e.chi2_per_point),
        },
        "sequences": sequences,
        "raw": r.raw.iter().map(|b| json!({
            "sequence": b.sequence,
            "pass": b.pass,
            "member": b.member,
            "cell": b.cell,
            "re": array(&b.re),
            "im": array(&b.im),
        })).collect::<Vec<_>>(),
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

/// Serializes results to the file format as bytes.
pub fn encode(r: &ResultData) -> Result<Vec<u8>> {
    let body = serde_json::to_vec_pretty(&to_json(r)).map_err(|e| SimError::Format(e.to_string()))?;
    let digest = hex(&Sha256::digest(&body));
    let mut out = body;
    out.extend_from_slice(format!("\nsha256 {}\n", digest).as_bytes());
    Ok(out)
}

pub fn write_results(path: impl AsRef<Path>, r: &ResultData) -> Result<()> {
    fs::write(path, encode(r)?)?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<ResultData> {
    decode(&fs::read(path)?)
}

fn bad(msg: &str) -> SimError {
    SimError::Format(msg.to_string())
}

fn get_num(v: &Value) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| bad("number out of range")),
        Value::String(s) => s.parse::<f64>().map_err(|_| bad("bad non-finite marker")),
        _ => Err(bad("expected a number")),
    }
}

fn get_vec(v: &Value) -> Result<Vec<f64>> {
    v.as_array().ok_or_else(|| bad("expected a list"))?.iter().map(get_num).collect()
}

fn get_array(v: &Value) -> Result<ArrayD<f64>> {
    let shape: Vec<usize> = v["shape"]
        .as_array()
        .ok_or_else(|| bad("missing shape"))?
        .iter()
        .map(|x| x.as_u64().map(|u| u as usize).ok_or_else(|| bad("bad shape")))
        .collect::<Result<_>>()?;
    let data = get_vec(&v["data"])?;
    ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|_| bad("payload does not match shape"))
}

fn get_opt_array(v: &Value) -> Result<Option<ArrayD<f64>>> {
    if v.is_null() {
        Ok(None)
    } else {
        get_array(v).map(Some)
    }
}

pub fn decode(bytes: &[u8]) -> Result<ResultData> {
    let marker = b"\nsha256 ";
    let pos = bytes
        .windows(marker.len())
        .rposition(|w| w == marker)
        .ok_or_else(|| bad("missing checksum line"))?;
    let body = &bytes[..pos];
    let stated = std::str::from_utf8(&bytes[pos + marker.len()..])
        .map_err(|_| SimError::Checksum)?
        .trim();
    if hex(&Sha256::digest(body)) != stated {
        return Err(SimError::Checksum);
    }
    let v: Value = serde_json::from_slice(body).map_err(|e| SimError::Format(e.to_string()))?;
    if v["format"] != FORMAT_NAME {
        return Err(bad("not a result file"));
    }
    if v["version"].as_u64() != Some(FORMAT_VERSION) {
        return Err(SimError::Format(format!("unsupported version {}", v["version"])));
    }
    let e = &v["errors"];
    let errors = ErrorVector {
        total: get_num(&e["total"])?,
        step: get_num(&e["step"])?,
        sampling: get_num(&e["sampling"])?,
        comparison: get_num(&e["comparison"])?,
        chi2_per_point: get_num(&e["chi2_per_point"])?,
        seconds: 0.0,
    };
    let mut sequences = Vec::new();
    for s in v["sequences"].as_array().ok_or_else(|| bad("missing sequences"))? {
        let cfg = s["config"].as_object().ok_or_else(|| bad("missing config"))?;
        let config = s["config_order"]
            .as_array()
            .ok_or_else(|| bad("missing config order"))?
            .iter()
            .map(|k| {
                let k = k.as_str().ok_or_else(|| bad("bad config key"))?;
                let val = cfg.get(k).and_then(|x| x.as_str()).ok_or_else(|| bad("bad config value"))?;
                Ok((k.to_string(), val.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let axes = s["axes"].as_array().ok_or_else(|| bad("missing axes"))?.iter().map(get_vec).collect::<Result<_>>()?;
        let mut graphs = Vec::new();
        for g in s["graphs"].as_array().ok_or_else(|| bad("missing graphs"))? {
            let p = &g["planes"];
            let chi2 = if g["chi2"].is_null() {
                None
            } else {
                Some(ChiSquared {
                    chi2: get_num(&g["chi2"]["chi2"])?,
                    k: g["chi2"]["k"].as_u64().ok_or_else(|| bad("bad k"))? as usize,
                    excluded: g["chi2"]["excluded"].as_u64().ok_or_else(|| bad("bad excluded"))? as usize,
                })
            };
            graphs.push(GraphData {
                label: g["label"].as_str().unwrap_or_default().to_string(),
                axes: g["axes"].as_array().ok_or_else(|| bad("missing graph axes"))?.iter().map(get_vec).collect::<Result<_>>()?,
                mean: get_array(&p["mean"])?,
                step: get_opt_array(&p["step"])?,
                sampling: get_opt_array(&p["sampling"])?,
                compare: get_opt_array(&p["compare"])?,
                compare_systematic: get_opt_array(&p["compare_systematic"])?,
                compare_statistical: get_opt_array(&p["compare_statistical"])?,
                scale: get_num(&g["scale"])?,
                chi2,
            });
        }
        sequences.push(SequenceResult { config, axes, graphs });
    }
    let mut raw = Vec::new();
    for b in v["raw"].as_array().ok_or_else(|| bad("missing raw list"))? {
        raw.push(RawBlock {
            sequence: b["sequence"].as_u64().ok_or_else(|| bad("bad raw block"))? as usize,
            pass: b["pass"].as_str().unwrap_or_default().to_string(),
            member: b["member"].as_u64().ok_or_else(|| bad("bad raw block"))? as usize,
            cell: b["cell"].as_u64().ok_or_else(|| bad("bad raw block"))? as usize,
            re: get_array(&b["re"])?,
            im: get_array(&b["im"])?,
        });
    }
    Ok(ResultData { sequences, errors, raw })
}
