//! Two-parameter sweeps over a base model with an on-disk point cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{classify_with_tolerance, default_tol_imag, detect_bound_states};
use crate::config::{ModelDoc, Parameter};
use crate::effective::threshold_pbc;
use crate::eigen::{eig, eigenvalues, spectral_norm_estimate};
use crate::error::{Error, Result};
use crate::lattice::{build_hamiltonian, Boundary, ModelSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub parameter: Parameter,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.steps {
            self.max
        } else {
            self.min + (self.max - self.min) * k as f64 / (self.steps - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps).map(|k| self.value(k)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[serde(alias = "PCom")]
    PCom,
    #[serde(alias = "MaxImE")]
    MaxImE,
    /// P_com per point, plus the predicted-versus-observed threshold table.
    #[serde(alias = "ThresholdCompare")]
    ThresholdCompare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base_model: ModelDoc,
    pub axis1: Axis,
    pub axis2: Axis,
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_imag: Option<f64>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<ModelSpec<f64>> {
        for (name, axis) in [("axis1", &self.axis1), ("axis2", &self.axis2)] {
            if axis.steps < 2 {
                return Err(Error::config(format!("{name}.steps"), "at least 2 steps required"));
            }
            if !(axis.min.is_finite() && axis.max.is_finite()) {
                return Err(Error::config(name, "bounds must be finite"));
            }
        }
        if self.axis1.parameter == Parameter::Len || self.axis2.parameter == Parameter::Len {
            return Err(Error::config("axis1.parameter", "L cannot be swept"));
        }
        if matches!(self.tol_imag, Some(t) if !(t >= 0.0 && t.is_finite())) {
            return Err(Error::config("tol_imag", "must be a finite non-negative number"));
        }
        self.base_model.to_spec().map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("base_model.{path}"), message),
            other => other,
        })
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Short hash used in file names.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn point_model(&self, base: &ModelSpec<f64>, i: usize, j: usize) -> Result<ModelSpec<f64>> {
        let spec = self.axis1.parameter.apply(base, self.axis1.value(i))?;
        self.axis2.parameter.apply(&spec, self.axis2.value(j))
    }
}

/// `P_com` of a model; bound states are left out of the count on open chains.
pub fn p_com(spec: &ModelSpec<f64>, tol_imag: Option<f64>) -> Result<f64> {
    let h = build_hamiltonian(spec);
    let tol = tol_imag.unwrap_or_else(|| default_tol_imag(spectral_norm_estimate(&h)));
    match spec.boundary() {
        Boundary::Open => {
            let s = eig(&h)?;
            let bound = detect_bound_states(&s, spec.max_range());
            Ok(classify_with_tolerance(&s.eigenvalues, tol, &bound).p_com)
        }
        Boundary::Periodic => Ok(classify_with_tolerance(&eigenvalues(&h)?, tol, &[]).p_com),
    }
}

pub fn point_metric(spec: &ModelSpec<f64>, metric: Metric, tol_imag: Option<f64>) -> Result<f64> {
    match metric {
        Metric::PCom | Metric::ThresholdCompare => p_com(spec, tol_imag),
        Metric::MaxImE => Ok(eigenvalues(&build_hamiltonian(spec))?.iter().fold(0.0f64, |m, e| m.max(e.im.abs()))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointFailure {
    pub i: usize,
    pub j: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub axis1: Axis,
    pub axis2: Axis,
    pub metric: Metric,
    /// Row-major, `values[i * steps2 + j]` for `axis1[i]`, `axis2[j]`.
    pub values: Vec<f64>,
    pub failures: Vec<PointFailure>,
    pub config_hash: String,
    pub version: String,
    pub cached_points: usize,
}

impl PhaseGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.steps + j]
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.axis2.steps;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn csv_name(&self) -> String {
        format!("{}.grid.csv", &self.config_hash[..16])
    }

    pub fn sidecar_name(&self) -> String {
        format!("{}.grid.json", &self.config_hash[..16])
    }

    /// `axis1,axis2,value` rows in full precision.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},value\n", self.axis1.parameter, self.axis2.parameter);
        for i in 0..self.axis1.steps {
            for j in 0..self.axis2.steps {
                out.push_str(&format!(
                    "{},{},{}\n",
                    fmt_f64(self.axis1.value(i)),
                    fmt_f64(self.axis2.value(j)),
                    fmt_f64(self.get(i, j))
                ));
            }
        }
        out
    }

    pub fn sidecar(&self, extra: Value) -> Value {
        let timestamp =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        json!({
            "axis1": self.axis1,
            "axis2": self.axis2,
            "metric": self.metric,
            "shape": [self.axis1.steps, self.axis2.steps],
            "csv": self.csv_name(),
            "provenance": {
                "config_hash": self.config_hash,
                "version": self.version,
                "timestamp_unix": timestamp,
            },
            "cached_points": self.cached_points,
            "failures": self.failures,
            "extra": extra,
        })
    }

    /// Writes the CSV and its JSON sidecar into `dir`.
    pub fn write(&self, dir: &Path, extra: Value) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(self.csv_name());
        let side = dir.join(self.sidecar_name());
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(&side, serde_json::to_string_pretty(&self.sidecar(extra))?)?;
        Ok((csv, side))
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    /// Directory holding the point cache; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
}

fn load_cache(path: &Path, steps: (usize, usize)) -> Result<HashMap<(usize, usize), f64>> {
    let mut map = HashMap::new();
    if !path.exists() {
        return Ok(map);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    for row in reader.records() {
        // a torn last line from an interrupted run is skipped
        let Ok(row) = row else { continue };
        if row.len() != 5 {
            continue;
        }
        let (Ok(i), Ok(j), Ok(v)) = (row[0].parse::<usize>(), row[1].parse::<usize>(), row[4].parse::<f64>()) else {
            continue;
        };
        if i < steps.0 && j < steps.1 && v.is_finite() {
            map.insert((i, j), v);
        }
    }
    Ok(map)
}

/// Evaluates the metric on every grid point in parallel. Failed points are
/// NaN with a diagnostic; successful ones are appended to
/// `<hash>.points.csv` and reused on the next run with the same config.
pub fn run_sweep(config: &SweepConfig, options: &SweepOptions) -> Result<PhaseGrid> {
    let base = config.validate()?;
    let hash = config.hash();
    let steps = (config.axis1.steps, config.axis2.steps);
    let cache_path = options.cache_dir.as_ref().map(|d| d.join(format!("{}.points.csv", &hash[..16])));
    let cached = match &cache_path {
        Some(p) => load_cache(p, steps)?,
        None => HashMap::new(),
    };
    let writer: Option<Mutex<File>> = match &cache_path {
        Some(p) => {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir)?;
            }
            Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?))
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let points: Vec<(usize, usize)> = (0..steps.0).flat_map(|i| (0..steps.1).map(move |j| (i, j))).collect();
    let results: Vec<std::result::Result<f64, String>> = pool.install(|| {
        points
            .par_iter()
            .map(|&(i, j)| {
                if let Some(&v) = cached.get(&(i, j)) {
                    return Ok(v);
                }
                let value = config
                    .point_model(&base, i, j)
                    .and_then(|spec| point_metric(&spec, config.metric, config.tol_imag))
                    .map_err(|e| e.to_string())?;
                if !value.is_finite() {
                    return Err(format!("non-finite metric {value}"));
                }
                if let Some(w) = &writer {
                    let line = format!(
                        "{i},{j},{},{},{}\n",
                        fmt_f64(config.axis1.value(i)),
                        fmt_f64(config.axis2.value(j)),
                        fmt_f64(value)
                    );
                    let mut f = w.lock().unwrap_or_else(|p| p.into_inner());
                    if let Err(e) = f.write_all(line.as_bytes()) {
                        log::warn!("point cache write failed: {e}");
                    }
                }
                Ok(value)
            })
            .collect()
    });
    let mut failures = Vec::new();
    let values = results
        .into_iter()
        .zip(&points)
        .map(|(r, &(i, j))| {
            r.unwrap_or_else(|message| {
                log::warn!("point ({i}, {j}) failed: {message}");
                failures.push(PointFailure { i, j, message });
                f64::NAN
            })
        })
        .collect();
    Ok(PhaseGrid {
        axis1: config.axis1.clone(),
        axis2: config.axis2.clone(),
        metric: config.metric,
        values,
        failures,
        config_hash: hash,
        version: VERSION.to_string(),
        cached_points: cached.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Onset {
    pub axis1: f64,
    /// `None` when the whole column is zero.
    pub onset: Option<f64>,
}

/// First positive entry along `axis2` in every column, placed midway between
/// it and the last zero entry before it.
pub fn threshold_extract(grid: &PhaseGrid) -> Result<Vec<Onset>> {
    if grid.metric == Metric::MaxImE {
        return Err(Error::InvalidArgument("threshold extraction needs a P_com grid".into()));
    }
    Ok((0..grid.axis1.steps)
        .map(|i| {
            let col = grid.column(i);
            let onset = col.iter().position(|&v| v > 0.0).map(|j| {
                let hit = grid.axis2.value(j);
                match j {
                    0 => hit,
                    _ => 0.5 * (grid.axis2.value(j - 1) + hit),
                }
            });
            Onset { axis1: grid.axis1.value(i), onset }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub theta: f64,
    pub phi: f64,
    pub g_c_predicted: Option<f64>,
    pub g_c_observed: Option<f64>,
    pub relative_error: Option<f64>,
}

/// Compares sweep onsets with the two-level prediction. Requires a ring base
/// model and `g` on the second axis.
pub fn threshold_compare(config: &SweepConfig, grid: &PhaseGrid) -> Result<Vec<ThresholdRow>> {
    let base = config.validate()?;
    if base.boundary() != Boundary::Periodic {
        return Err(Error::NotPeriodic);
    }
    if config.axis2.parameter != Parameter::G {
        return Err(Error::config("axis2.parameter", "threshold comparison needs g on axis2"));
    }
    let t = base
        .hoppings()
        .get(1)
        .map(|t| t.norm())
        .ok_or_else(|| Error::config("base_model.hoppings", "nearest-neighbour hopping required"))?;
    let onsets = threshold_extract(grid)?;
    onsets
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let spec = config.axis1.parameter.apply(&base, config.axis1.value(i))?;
            let theta = spec.flux_theta();
            let theta = if theta > std::f64::consts::PI { theta - 2.0 * std::f64::consts::PI } else { theta };
            let phi = spec
                .perturbations()
                .iter()
                .find(|p| p.site_i + p.site_j <= spec.len() + 1)
                .map_or(0.0, |p| p.amplitude.arg());
            let predicted = threshold_pbc(spec.len(), theta, phi, t).value();
            let relative_error = match (predicted, o.onset) {
                (Some(p), Some(obs)) if p > 0.0 => Some((obs - p).abs() / p),
                _ => None,
            };
            Ok(ThresholdRow { theta, phi, g_c_predicted: predicted, g_c_observed: o.onset, relative_error })
        })
        .collect()
}

pub fn threshold_csv(rows: &[ThresholdRow]) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "NaN".to_string(), fmt_f64);
    let mut out = String::from("theta,phi,g_c_predicted,g_c_observed,relative_error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.theta),
            fmt_f64(r.phi),
            opt(r.g_c_predicted),
            opt(r.g_c_observed),
            opt(r.relative_error)
        ));
    }
    out
}
