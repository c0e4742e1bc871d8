//! Parameter sweeps and method comparisons on a registered pair with known
//! reference points.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::metrics::{feature_error, rmse, ControlGrid};
use super::ncc::ncc_register;
use crate::drs::{run_drs, DrsConfig};
use crate::error::{Error, Result};
use crate::features::detect_and_describe;
use crate::image::Image;
use crate::imaging::RateCheck;
use crate::pipeline::{register, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fao,
    Ncc,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fao" => Ok(Method::Fao),
            "ncc" => Ok(Method::Ncc),
            other => Err(Error::InvalidInput(format!("unknown method '{other}' (expected fao or ncc)"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fao => "fao",
            Method::Ncc => "ncc",
        })
    }
}

/// What to vary; every other setting comes from the base configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Generations(Vec<usize>),
    Proportions(Vec<f64>),
    /// Feature fidelity and cost of DRS against plain detection.
    Rates(Vec<usize>),
    Methods(Vec<Method>),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub sweep: Sweep,
    pub config: PipelineConfig,
    pub ncc_window: usize,
    pub match_radius: f64,
}

impl ExperimentSpec {
    pub fn new(sweep: Sweep) -> Self {
        ExperimentSpec {
            sweep,
            config: PipelineConfig::default(),
            ncc_window: super::ncc::DEFAULT_WINDOW,
            match_radius: super::metrics::DEFAULT_MATCH_RADIUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub method: String,
    pub rmse_px: Option<f64>,
    pub elapsed_ms: f64,
    pub params: serde_json::Value,
}

/// A CSV table plus one JSON summary per run.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub runs: Vec<RunSummary>,
}

impl Report {
    fn new(columns: &[&str]) -> Self {
        Report {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            runs: Vec::new(),
        }
    }

    /// Values of a numeric column; non-numeric cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[idx].parse().unwrap_or(f64::NAN))
                .collect(),
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::InvalidInput(format!("report csv: {e}"));
        w.write_record(&self.columns).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("report csv: {e}")))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.runs).expect("summaries serialize")
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs every sweep point in order. Points run sequentially so their
/// timings do not interfere.
pub fn run_experiment(spec: &ExperimentSpec, fixed: &Image, moving: &Image, grid: &ControlGrid) -> Result<Report> {
    match &spec.sweep {
        Sweep::Generations(gens) => {
            let mut rep = Report::new(&["generation", "rmse_px", "objective", "elapsed_ms"]);
            for &g in gens {
                let cfg = PipelineConfig { max_gen: g, ..spec.config.clone() };
                let t = Instant::now();
                let out = register(fixed, moving, &cfg)?;
                let elapsed = ms(t);
                let e = rmse(&out.transform, grid);
                let obj = out.result.trace.entries.last().map_or(f64::NAN, |t| t.objective);
                rep.rows.push(vec![g.to_string(), e.to_string(), obj.to_string(), elapsed.to_string()]);
                rep.runs.push(RunSummary {
                    method: Method::Fao.to_string(),
                    rmse_px: Some(e),
                    elapsed_ms: elapsed,
                    params: json!({ "max_gen": g, "generations_run": out.result.generations }),
                });
            }
            Ok(rep)
        }
        Sweep::Proportions(props) => {
            let mut rep = Report::new(&["proportion", "achieved", "slices", "rmse_px", "elapsed_ms"]);
            for &p in props {
                let cfg = PipelineConfig { proportion: p, ..spec.config.clone() };
                let t = Instant::now();
                let out = register(fixed, moving, &cfg)?;
                let elapsed = ms(t);
                let e = rmse(&out.transform, grid);
                rep.rows.push(vec![
                    p.to_string(),
                    out.slices.proportion().to_string(),
                    out.slices.len().to_string(),
                    e.to_string(),
                    elapsed.to_string(),
                ]);
                rep.runs.push(RunSummary {
                    method: Method::Fao.to_string(),
                    rmse_px: Some(e),
                    elapsed_ms: elapsed,
                    params: json!({ "proportion": p, "achieved": out.slices.proportion() }),
                });
            }
            Ok(rep)
        }
        Sweep::Rates(rates) => {
            let mut rep = Report::new(&[
                "rate",
                "drs_ms",
                "sift_ms",
                "drs_features",
                "sift_features",
                "paired",
                "mean_error_px",
                "mean_error_px2",
            ]);
            let t = Instant::now();
            let (s1, s2) = (detect_and_describe(fixed)?, detect_and_describe(moving)?);
            let sift_ms = ms(t);
            for &n in rates {
                let cfg = DrsConfig {
                    rate: n,
                    seed: spec.config.seed,
                    ratio: spec.config.ratio,
                    rate_check: if spec.config.enforce_rate_bound { RateCheck::Enforce } else { RateCheck::Skip },
                    ..DrsConfig::default()
                };
                let t = Instant::now();
                let drs = run_drs(fixed, moving, &cfg)?;
                let drs_ms = ms(t);
                let mut all_drs = drs.features1.clone();
                all_drs.extend(drs.features2.iter().map(|f| f.translated(1e7, 0.0)));
                let mut all_sift = s1.clone();
                all_sift.extend(s2.iter().map(|f| f.translated(1e7, 0.0)));
                let fe = feature_error(&all_drs, &all_sift, spec.match_radius)?;
                rep.rows.push(vec![
                    n.to_string(),
                    drs_ms.to_string(),
                    sift_ms.to_string(),
                    all_drs.len().to_string(),
                    all_sift.len().to_string(),
                    fe.paired.to_string(),
                    fe.mean_px.to_string(),
                    fe.mean_sq_px.to_string(),
                ]);
                rep.runs.push(RunSummary {
                    method: "sift-drs".into(),
                    rmse_px: None,
                    elapsed_ms: drs_ms,
                    params: json!({ "rate": n, "mean_error_px": fe.mean_px, "sift_ms": sift_ms }),
                });
            }
            Ok(rep)
        }
        Sweep::Methods(methods) => {
            let mut rep = Report::new(&["method", "rmse_px", "elapsed_ms"]);
            for &m in methods {
                let t = Instant::now();
                let (h, params) = match m {
                    Method::Fao => {
                        let out = register(fixed, moving, &spec.config)?;
                        (out.transform, serde_json::to_value(&spec.config).expect("config serializes"))
                    }
                    Method::Ncc => {
                        let r = ncc_register(fixed, moving, spec.ncc_window)?;
                        (r.transform, json!({ "window": spec.ncc_window, "score": r.score }))
                    }
                };
                let elapsed = ms(t);
                let e = rmse(&h, grid);
                rep.rows.push(vec![m.to_string(), e.to_string(), elapsed.to_string()]);
                rep.runs.push(RunSummary {
                    method: m.to_string(),
                    rmse_px: Some(e),
                    elapsed_ms: elapsed,
                    params,
                });
            }
            Ok(rep)
        }
    }
}
