//! Experiment configuration: sectioned `key = value` files plus overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::SigmaParams;
use crate::grid::GridField;
use crate::nonlinearity::{Nonlinearity, NonlinearityKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Kernel,
    Laplacian,
    Linear,
    Solve,
    Extension,
    Analyze,
    Acceptance,
}

impl Subcommand {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "kernel" => Self::Kernel,
            "laplacian" => Self::Laplacian,
            "linear" => Self::Linear,
            "solve" => Self::Solve,
            "extension" => Self::Extension,
            "analyze" => Self::Analyze,
            "acceptance" => Self::Acceptance,
            other => return Err(Error::Config(format!("unknown subcommand '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Kernel => "kernel",
            Self::Laplacian => "laplacian",
            Self::Linear => "linear",
            Self::Solve => "solve",
            Self::Extension => "extension",
            Self::Analyze => "analyze",
            Self::Acceptance => "acceptance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Gaussian,
    Box,
    TwoBump,
    SignedTwoBump,
}

impl Preset {
    fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "gaussian" => Self::Gaussian,
            "box" => Self::Box,
            "two-bump" => Self::TwoBump,
            "signed-two-bump" => Self::SignedTwoBump,
            other => return Err(Error::Config(format!("unknown initial preset '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Semigroup,
    Imex,
}

/// Keys accepted in each section, with defaults (`""` means unset).
const SCHEMA: &[(&str, &[(&str, &str)])] = &[
    ("run", &[("subcommand", ""), ("seed", "0"), ("output", "out"), ("cache", ""), ("plots", "true")]),
    ("params", &[("dim", "1"), ("sigma", "1")]),
    ("grid", &[("length", "20"), ("n", "256")]),
    ("nonlinearity", &[("name", "linear"), ("m", ""), ("epsilon", "")]),
    (
        "time",
        &[("t_final", "1"), ("steps", "100"), ("snapshots", ""), ("scheme", "semigroup"), ("refreeze", "1")],
    ),
    ("initial", &[("preset", "gaussian"), ("amplitude", "1"), ("width", "1")]),
    ("tolerances", &[("newton", "1e-10"), ("max_newton", "50"), ("check", "1e-3")]),
    ("extension", &[("y_max", "40"), ("y_nodes", "128")]),
    (
        "analyze",
        &[("input", ""), ("prefix", "u"), ("p", "1"), ("q", "8"), ("alpha_step", "0.1"), ("pairs", "2000")],
    ),
    ("acceptance", &[("criteria", "1,2,3,4,5,6,7,8,9,10,11")]),
];

/// Fully resolved configuration, every key present.
pub type RawConfig = BTreeMap<String, BTreeMap<String, String>>;

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub seed: u64,
    pub output: PathBuf,
    pub cache: PathBuf,
    pub plots: bool,
    pub dim: usize,
    pub sigma: f64,
    pub length: f64,
    pub n: usize,
    pub nonlinearity: NonlinearityKind,
    pub epsilon: Option<f64>,
    pub t_final: f64,
    pub steps: usize,
    pub snapshots: Vec<f64>,
    pub scheme: Scheme,
    pub refreeze: usize,
    pub preset: Preset,
    pub amplitude: f64,
    pub width: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub check_tol: f64,
    pub y_max: f64,
    pub y_nodes: usize,
    pub input: Option<PathBuf>,
    pub prefix: String,
    pub p: u32,
    pub q: f64,
    pub alpha_step: f64,
    pub pairs: usize,
    pub criteria: Vec<u8>,
    #[serde(skip)]
    pub raw: RawConfig,
}

fn defaults() -> RawConfig {
    SCHEMA
        .iter()
        .map(|(sec, keys)| {
            (sec.to_string(), keys.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn set(raw: &mut RawConfig, section: &str, key: &str, value: &str) -> Result<()> {
    let sec = raw
        .get_mut(section)
        .ok_or_else(|| Error::Config(format!("unknown section [{section}]")))?;
    let slot = sec
        .get_mut(key)
        .ok_or_else(|| Error::Config(format!("unknown key '{key}' in [{section}]")))?;
    *slot = value.trim().to_string();
    Ok(())
}

/// Apply a `section.key=value` override.
pub fn apply_override(raw: &mut RawConfig, assignment: &str) -> Result<()> {
    let (lhs, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not section.key=value")))?;
    let (section, key) = lhs
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not section.key=value")))?;
    set(raw, section, key, value)
}

/// Defaults overlaid with an optional config file.
pub fn load_raw(path: Option<&Path>) -> Result<RawConfig> {
    let mut raw = defaults();
    if let Some(path) = path {
        let ini = Ini::load_from_file(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys outside a section".into()));
                }
                continue;
            };
            for (k, v) in props.iter() {
                set(&mut raw, section, k, v)?;
            }
        }
    }
    Ok(raw)
}

/// Resolved configuration as a config file.
pub fn to_ini_string(raw: &RawConfig) -> String {
    let mut out = String::new();
    for (sec, keys) in raw {
        out.push_str(&format!("[{sec}]\n"));
        for (k, v) in keys {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push('\n');
    }
    out
}

fn get<'a>(raw: &'a RawConfig, section: &str, key: &str) -> &'a str {
    raw[section][key].as_str()
}

fn parse<T: std::str::FromStr>(raw: &RawConfig, section: &str, key: &str) -> Result<T> {
    let v = get(raw, section, key);
    v.parse()
        .map_err(|_| Error::Config(format!("[{section}] {key} = '{v}' is not a valid value")))
}

fn optional<T: std::str::FromStr>(raw: &RawConfig, section: &str, key: &str) -> Result<Option<T>> {
    if get(raw, section, key).is_empty() {
        Ok(None)
    } else {
        parse(raw, section, key).map(Some)
    }
}

fn list<T: std::str::FromStr>(raw: &RawConfig, section: &str, key: &str) -> Result<Vec<T>> {
    get(raw, section, key)
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("[{section}] {key}: bad entry '{s}'"))))
        .collect()
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let sub = get(&raw, "run", "subcommand");
        if sub.is_empty() {
            return Err(Error::Config("no subcommand given".into()));
        }
        let subcommand = Subcommand::from_name(sub)?;
        let output = PathBuf::from(get(&raw, "run", "output"));
        let cache = optional::<String>(&raw, "run", "cache")?
            .map(PathBuf::from)
            .unwrap_or_else(|| output.join("profile-cache"));
        let sigma: f64 = parse(&raw, "params", "sigma")?;
        if !(sigma > 0.0 && sigma < 2.0) {
            return Err(Error::Config(format!("sigma must lie in (0, 2), got {sigma}")));
        }
        let dim: usize = parse(&raw, "params", "dim")?;
        if dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        let n: usize = parse(&raw, "grid", "n")?;
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Config(format!("n must be a power of two >= 4, got {n}")));
        }
        let nonlinearity = NonlinearityKind::from_name(get(&raw, "nonlinearity", "name"), optional(&raw, "nonlinearity", "m")?)
            .map_err(|e| Error::Config(e.to_string()))?;
        let epsilon = optional::<f64>(&raw, "nonlinearity", "epsilon")?;
        if let Some(e) = epsilon {
            positive("nonlinearity.epsilon", e)?;
        }
        let scheme = match get(&raw, "time", "scheme") {
            "semigroup" => Scheme::Semigroup,
            "imex" => Scheme::Imex,
            other => return Err(Error::Config(format!("unknown scheme '{other}'"))),
        };
        let steps: usize = parse(&raw, "time", "steps")?;
        let refreeze: usize = parse(&raw, "time", "refreeze")?;
        if steps == 0 || refreeze == 0 {
            return Err(Error::Config("time.steps and time.refreeze must be >= 1".into()));
        }
        let max_newton: usize = parse(&raw, "tolerances", "max_newton")?;
        let y_nodes: usize = parse(&raw, "extension", "y_nodes")?;
        let pairs: usize = parse(&raw, "analyze", "pairs")?;
        if max_newton == 0 || y_nodes < 4 || pairs == 0 {
            return Err(Error::Config("max_newton >= 1, y_nodes >= 4 and pairs >= 1 required".into()));
        }
        let criteria: Vec<u8> = list(&raw, "acceptance", "criteria")?;
        if let Some(bad) = criteria.iter().find(|c| !(1..=11).contains(*c)) {
            return Err(Error::Config(format!("no acceptance criterion {bad}")));
        }
        let p: u32 = parse(&raw, "analyze", "p")?;
        if p == 0 {
            return Err(Error::Config("analyze.p must be >= 1".into()));
        }
        let snapshots: Vec<f64> = list(&raw, "time", "snapshots")?;
        if snapshots.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("snapshot times must be nonnegative".into()));
        }
        Ok(Self {
            subcommand,
            seed: parse(&raw, "run", "seed")?,
            output,
            cache,
            plots: parse(&raw, "run", "plots")?,
            dim,
            sigma,
            length: positive("grid.length", parse(&raw, "grid", "length")?)?,
            n,
            nonlinearity,
            epsilon,
            t_final: positive("time.t_final", parse(&raw, "time", "t_final")?)?,
            steps,
            snapshots,
            scheme,
            refreeze,
            preset: Preset::from_name(get(&raw, "initial", "preset"))?,
            amplitude: parse(&raw, "initial", "amplitude")?,
            width: positive("initial.width", parse(&raw, "initial", "width")?)?,
            newton_tol: positive("tolerances.newton", parse(&raw, "tolerances", "newton")?)?,
            max_newton,
            check_tol: positive("tolerances.check", parse(&raw, "tolerances", "check")?)?,
            y_max: positive("extension.y_max", parse(&raw, "extension", "y_max")?)?,
            y_nodes,
            input: optional::<String>(&raw, "analyze", "input")?.map(PathBuf::from),
            prefix: get(&raw, "analyze", "prefix").to_string(),
            p,
            q: positive("analyze.q", parse(&raw, "analyze", "q")?)?,
            alpha_step: positive("analyze.alpha_step", parse(&raw, "analyze", "alpha_step")?)?,
            pairs,
            criteria,
            raw,
        })
    }

    pub fn params(&self) -> Result<SigmaParams> {
        SigmaParams::new(self.dim, self.sigma).map_err(|e| Error::Config(e.to_string()))
    }

    /// Initial data from the preset.
    pub fn initial(&self) -> Result<GridField> {
        let (a, w) = (self.amplitude, self.width);
        let c = 2.0 * w;
        let preset = self.preset;
        GridField::from_fn(self.params()?, self.length, self.n, move |x| {
            let r2 = |shift: f64| {
                x.iter().enumerate().map(|(i, v)| if i == 0 { (v - shift).powi(2) } else { v * v }).sum::<f64>()
                    / (w * w)
            };
            match preset {
                Preset::Gaussian => a * (-r2(0.0)).exp(),
                Preset::Box => {
                    if x.iter().all(|v| v.abs() < w) {
                        a
                    } else {
                        0.0
                    }
                }
                Preset::TwoBump => a * ((-r2(c)).exp() + 0.5 * (-r2(-c)).exp()),
                Preset::SignedTwoBump => a * ((-r2(c)).exp() - (-r2(-c)).exp()),
            }
        })
    }

    /// The configured nonlinearity; degenerate members are regularized with
    /// `epsilon`, defaulting to `1e-6` times the range of the data.
    pub fn nonlinearity_for(&self, u0: &GridField) -> Result<Nonlinearity> {
        let base = Nonlinearity::new(self.nonlinearity);
        let range = (u0.max_value() - u0.min_value()).max(f64::MIN_POSITIVE);
        match self.epsilon {
            Some(e) => base.regularize(e),
            None if self.nonlinearity.is_degenerate() => base.regularize(1e-6 * range),
            None => Ok(base),
        }
    }
}
