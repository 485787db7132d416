//! JSON model documents, `key=value` overrides and named model parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, FluxGauge, HoppingSet, ModelSpec, PerturbationTerm};
use crate::scalar::{cis, C};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoppingDoc {
    pub range: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationDoc {
    pub i: usize,
    pub j: usize,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// On-disk form of a [`ModelSpec`]. `options` carries settings for the
/// individual subcommands and is ignored when building the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    #[serde(rename = "L")]
    pub len: usize,
    pub boundary: Boundary,
    pub hoppings: Vec<HoppingDoc>,
    #[serde(default)]
    pub flux_theta: f64,
    #[serde(default, skip_serializing_if = "is_uniform")]
    pub flux_gauge: FluxGauge,
    #[serde(default)]
    pub perturbations: Vec<PerturbationDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Value>,
}

fn is_uniform(g: &FluxGauge) -> bool {
    *g == FluxGauge::Uniform
}

impl ModelDoc {
    pub fn from_value(v: &Value) -> Result<Self> {
        parse_value(v)
    }

    /// Builds the model, naming the offending field on failure.
    pub fn to_spec(&self) -> Result<ModelSpec<f64>> {
        let mut terms = Vec::with_capacity(self.hoppings.len());
        for (k, h) in self.hoppings.iter().enumerate() {
            if h.range == 0 {
                return Err(Error::config(format!("hoppings[{k}].range"), "must be >= 1"));
            }
            if !(h.re.is_finite() && h.im.is_finite()) || (h.re == 0.0 && h.im == 0.0) {
                return Err(Error::config(format!("hoppings[{k}]"), "amplitude must be finite and non-zero"));
            }
            if terms.iter().any(|&(n, _)| n == h.range) {
                return Err(Error::config(format!("hoppings[{k}].range"), format!("range {} repeated", h.range)));
            }
            terms.push((h.range, C::new(h.re, h.im)));
        }
        let hoppings = HoppingSet::new(terms).map_err(|e| Error::config("hoppings", e.to_string()))?;
        for (k, p) in self.perturbations.iter().enumerate() {
            for (name, site) in [("i", p.i), ("j", p.j)] {
                if site == 0 || site > self.len {
                    return Err(Error::config(
                        format!("perturbations[{k}].{name}"),
                        format!("site {site} outside 1..={}", self.len),
                    ));
                }
            }
            if !(p.re.is_finite() && p.im.is_finite()) {
                return Err(Error::config(format!("perturbations[{k}]"), "amplitude must be finite"));
            }
        }
        if !self.flux_theta.is_finite() {
            return Err(Error::config("flux_theta", "must be finite"));
        }
        let perturbations =
            self.perturbations.iter().map(|p| PerturbationTerm::new(p.i, p.j, C::new(p.re, p.im))).collect();
        ModelSpec::new(self.len, self.boundary, hoppings, self.flux_theta, perturbations)
            .map(|s| s.with_gauge(self.flux_gauge))
            .map_err(|e| match e {
                Error::InvalidModel(m) => Error::config("L", m),
                other => other,
            })
    }

    pub fn from_spec(spec: &ModelSpec<f64>) -> Self {
        ModelDoc {
            len: spec.len(),
            boundary: spec.boundary(),
            hoppings: spec.hoppings().iter().map(|(range, t)| HoppingDoc { range, re: t.re, im: t.im }).collect(),
            flux_theta: spec.flux_theta(),
            flux_gauge: spec.gauge(),
            perturbations: spec
                .perturbations()
                .iter()
                .map(|p| PerturbationDoc { i: p.site_i, j: p.site_j, re: p.amplitude.re, im: p.amplitude.im })
                .collect(),
            options: None,
        }
    }

    /// Subcommand option `key`, deserialized; `None` when absent.
    pub fn option<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        let Some(v) = self.options.as_ref().and_then(|o| o.get(key)) else {
            return Ok(None);
        };
        let mut track = serde_path_to_error::Track::new();
        let de = serde_path_to_error::Deserializer::new(v, &mut track);
        T::deserialize(de)
            .map(Some)
            .map_err(|e| Error::config(join_path(&format!("options.{key}"), &track.path().to_string()), e.to_string()))
    }
}

fn join_path(prefix: &str, rest: &str) -> String {
    if rest.is_empty() || rest == "." {
        prefix.to_string()
    } else if rest.starts_with('[') {
        format!("{prefix}{rest}")
    } else {
        format!("{prefix}.{rest}")
    }
}

/// Deserializes with the failing JSON path in the error.
pub fn parse_value<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path.is_empty() { ".".to_string() } else { path }, e.into_inner().to_string())
    })
}

/// Reads a JSON file; syntax errors are reported as config errors with
/// line and column.
pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

/// Named knobs shared by overrides and sweep axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parameter {
    FluxTheta,
    /// Total flux `Φ = Lθ`.
    FluxTotal,
    /// Magnitude of every perturbation amplitude.
    G,
    /// Phase of every perturbation amplitude, `+φ` on terms with
    /// `i + j ≤ L + 1` and `−φ` on the mirrored ones.
    Phi,
    Hopping(usize),
    Len,
}

impl std::str::FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "flux_theta" | "theta" => Parameter::FluxTheta,
            "flux_total" | "Phi" => Parameter::FluxTotal,
            "g" => Parameter::G,
            "phi" => Parameter::Phi,
            "L" => Parameter::Len,
            _ => match s.strip_prefix('t').map(str::parse::<usize>) {
                Some(Ok(n)) if n >= 1 => Parameter::Hopping(n),
                _ => return Err(Error::config(s, "unknown parameter")),
            },
        })
    }
}

impl std::fmt::Display for Parameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Parameter::FluxTheta => write!(f, "flux_theta"),
            Parameter::FluxTotal => write!(f, "flux_total"),
            Parameter::G => write!(f, "g"),
            Parameter::Phi => write!(f, "phi"),
            Parameter::Hopping(n) => write!(f, "t{n}"),
            Parameter::Len => write!(f, "L"),
        }
    }
}

impl Serialize for Parameter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Parameter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| serde::de::Error::custom(format!("unknown parameter `{s}`")))
    }
}

fn phase_sign(len: usize, p: &PerturbationTerm<f64>) -> f64 {
    if p.site_i + p.site_j <= len + 1 {
        1.0
    } else {
        -1.0
    }
}

/// Sites in the right half keep their distance to the right edge.
fn remap_site(site: usize, old: usize, new: usize) -> usize {
    if 2 * site > old {
        site + new - old
    } else {
        site
    }
}

/// Model at a different size with boundary terms carried along to the same
/// edge they were attached to.
pub fn resize(spec: &ModelSpec<f64>, len: usize) -> Result<ModelSpec<f64>> {
    let old = spec.len();
    if len < 2 {
        return Err(Error::InvalidModel(format!("size {len} too small")));
    }
    let terms = spec
        .perturbations()
        .iter()
        .map(|p| {
            let (i, j) = (remap_site(p.site_i, old, len), remap_site(p.site_j, old, len));
            if i == 0 || j == 0 || i > len || j > len {
                Err(Error::InvalidModel(format!("perturbation ({}, {}) does not fit L = {len}", p.site_i, p.site_j)))
            } else {
                Ok(PerturbationTerm::new(i, j, p.amplitude))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    spec.clone().with_perturbations(Vec::new())?.with_len(len)?.with_perturbations(terms)
}

impl Parameter {
    /// Sets this parameter on `spec`.
    pub fn apply(&self, spec: &ModelSpec<f64>, value: f64) -> Result<ModelSpec<f64>> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("{self} = {value} is not finite")));
        }
        let len = spec.len();
        match *self {
            Parameter::FluxTheta => spec.clone().with_flux_theta(value),
            Parameter::FluxTotal => spec.clone().with_flux_theta(value / len as f64),
            Parameter::G => {
                // the phase of a zero amplitude is unknown, so it cannot be rescaled
                let terms = spec
                    .perturbations()
                    .iter()
                    .map(|p| match p.amplitude.norm() {
                        n if n > 0.0 => Ok(PerturbationTerm::new(p.site_i, p.site_j, p.amplitude / n * value)),
                        _ => Err(Error::InvalidModel(format!(
                            "perturbation ({}, {}) has zero amplitude; give it a non-zero value to fix its phase",
                            p.site_i, p.site_j
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                spec.clone().with_perturbations(terms)
            }
            Parameter::Phi => {
                let terms = spec
                    .perturbations()
                    .iter()
                    .map(|p| {
                        PerturbationTerm::new(p.site_i, p.site_j, cis(phase_sign(len, p) * value) * p.amplitude.norm())
                    })
                    .collect();
                spec.clone().with_perturbations(terms)
            }
            Parameter::Hopping(n) => {
                let unit = spec.hoppings().get(n).map_or(C::new(1.0, 0.0), |t| t / t.norm());
                spec.clone().with_hoppings(spec.hoppings().with_term(n, unit * value)?)
            }
            Parameter::Len => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!("L = {value} is not a size")));
                }
                resize(spec, value as usize)
            }
        }
    }
}

/// A parsed `--override KEY=VALUE`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Override {
    pub key: String,
    pub value: String,
}

impl std::str::FromStr for Override {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => {
                Ok(Override { key: k.trim().to_string(), value: v.trim().to_string() })
            }
            _ => Err(Error::config(s, "override must look like KEY=VALUE")),
        }
    }
}

fn pointer_of(key: &str) -> String {
    key.split('.').fold(String::new(), |mut acc, part| {
        acc.push('/');
        acc.push_str(part);
        acc
    })
}

fn parse_scalar(v: &str) -> Value {
    serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))
}

/// Applies overrides to a raw JSON document. A [`Parameter`] name is applied
/// to the built model, which is then written back; any other key must name an
/// existing JSON field (dotted path, array indices as numbers) and is set in
/// place. `root` addresses the model document inside `doc` (empty for a bare
/// model file).
pub fn apply_overrides(doc: &mut Value, root: &str, overrides: &[Override]) -> Result<()> {
    for o in overrides {
        let Ok(param) = o.key.parse::<Parameter>() else {
            let slot = doc
                .pointer_mut(&pointer_of(&o.key))
                .ok_or_else(|| Error::config(&o.key, "no such field or parameter"))?;
            *slot = parse_scalar(&o.value);
            continue;
        };
        let value: f64 =
            o.value.parse().map_err(|_| Error::config(&o.key, format!("`{}` is not a number", o.value)))?;
        let model_slot = if root.is_empty() {
            &mut *doc
        } else {
            doc.pointer_mut(&pointer_of(root)).ok_or_else(|| Error::config(root, "missing"))?
        };
        let model: ModelDoc = parse_value(model_slot).map_err(|e| prefix_error(e, root))?;
        let spec = param
            .apply(&model.to_spec().map_err(|e| prefix_error(e, root))?, value)
            .map_err(|e| Error::config(&o.key, e.to_string()))?;
        let mut updated = ModelDoc::from_spec(&spec);
        updated.options = model.options;
        *model_slot = serde_json::to_value(updated)?;
    }
    Ok(())
}

fn prefix_error(e: Error, root: &str) -> Error {
    match e {
        Error::Config { path, message } if !root.is_empty() => Error::config(join_path(root, &path), message),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::models;
    use serde_json::json;
    use std::f64::consts::FRAC_PI_2;

    fn ring_doc() -> Value {
        json!({
            "L": 20,
            "boundary": "periodic",
            "hoppings": [{"range": 1, "re": 1.0, "im": 0.0}],
            "flux_theta": 0.01,
            "perturbations": [{"i": 1, "j": 1, "re": 0.0, "im": 0.5}, {"i": 20, "j": 20, "re": 0.0, "im": -0.5}]
        })
    }

    #[test]
    fn parses_and_round_trips() {
        let doc = ModelDoc::from_value(&ring_doc()).unwrap();
        let spec = doc.to_spec().unwrap();
        let reference = models::flux_ring(20, 1.0, 0.01, 0.5, FRAC_PI_2).unwrap();
        assert!(crate::build_hamiltonian(&spec).max_abs_diff(&crate::build_hamiltonian(&reference)) < 1e-15);
        assert_eq!(ModelDoc::from_spec(&spec).to_spec().unwrap(), spec);
    }

    #[test]
    fn errors_name_the_path() {
        let mut v = ring_doc();
        v["hoppings"][0]["re"] = json!("one");
        let Err(Error::Config { path, .. }) = ModelDoc::from_value(&v) else { panic!() };
        assert_eq!(path, "hoppings[0].re");

        let mut v = ring_doc();
        v["perturbations"][1]["i"] = json!(21);
        let Err(Error::Config { path, .. }) = ModelDoc::from_value(&v).unwrap().to_spec() else { panic!() };
        assert_eq!(path, "perturbations[1].i");

        let mut v = ring_doc();
        v["bogus"] = json!(1);
        assert!(ModelDoc::from_value(&v).unwrap_err().is_config());

        let mut v = ring_doc();
        v["L"] = json!(2);
        v["perturbations"] = json!([]);
        let Err(Error::Config { path, .. }) = ModelDoc::from_value(&v).unwrap().to_spec() else { panic!() };
        assert_eq!(path, "L");
    }

    #[test]
    fn overrides() {
        let mut v = ring_doc();
        let o = |s: &str| s.parse::<Override>().unwrap();
        apply_overrides(&mut v, "", &[o("flux_theta=0.02"), o("hoppings.0.re=2")]).unwrap();
        assert_eq!(v["flux_theta"], json!(0.02));
        assert_eq!(v["hoppings"][0]["re"], json!(2));

        apply_overrides(&mut v, "", &[o("phi=0.3"), o("g=0.8")]).unwrap();
        let spec = ModelDoc::from_value(&v).unwrap().to_spec().unwrap();
        let reference = models::flux_ring(20, 2.0, 0.02, 0.8, 0.3).unwrap();
        assert!(crate::build_hamiltonian(&spec).max_abs_diff(&crate::build_hamiltonian(&reference)) < 1e-15);

        assert!(apply_overrides(&mut v, "", &[o("nonsense=1")]).unwrap_err().is_config());
        assert!("novalue".parse::<Override>().is_err());
    }

    #[test]
    fn parameters() {
        let spec = models::nnn_chain(30, 1.0, 0.5, 0.8).unwrap();
        let s = Parameter::Hopping(2).apply(&spec, 0.1).unwrap();
        assert_eq!(s.hoppings().get(2), Some(C::new(0.1, 0.0)));
        let s = Parameter::Hopping(2).apply(&spec, 0.0).unwrap();
        assert_eq!(s.max_range(), 1);
        let s = Parameter::G.apply(&spec, 2.0).unwrap();
        assert_eq!(s.perturbations()[1].amplitude, C::new(0.0, -2.0));
        let s = Parameter::Len.apply(&spec, 50.0).unwrap();
        assert_eq!((s.perturbations()[0].site_i, s.perturbations()[1].site_i), (1, 50));
        let ring = models::flux_ring(40, 1.0, 0.0, 1.0, 0.0).unwrap();
        let s = Parameter::FluxTotal.apply(&ring, 0.4).unwrap();
        assert!((s.flux_theta() - 0.01).abs() < 1e-16);
        assert_eq!("t3".parse::<Parameter>().unwrap(), Parameter::Hopping(3));
        assert!("t0".parse::<Parameter>().is_err());
    }

    #[test]
    fn options_are_typed() {
        let mut v = ring_doc();
        v["options"] = json!({"sizes": [10, "x"]});
        let doc = ModelDoc::from_value(&v).unwrap();
        let Err(Error::Config { path, .. }) = doc.option::<Vec<usize>>("sizes") else { panic!() };
        assert_eq!(path, "options.sizes[1]");
        assert_eq!(doc.option::<f64>("missing").unwrap(), None);
    }
}
