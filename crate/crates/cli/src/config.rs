//! Flat sectioned key-value (INI-style) run configuration.
//!
//! A configuration file has `[geometry]`, `[medium]`, `[reservoir]` and an
//! optional `[run]` section. Values are plain scalars, lists separated by
//! whitespace or commas, and spatial profiles written either as one number
//! (constant) or as two numbers (two layers splitting the domain in half).
//! Lines starting with `#` or `;` are comments.

use std::collections::BTreeMap;
use std::fmt;

use polariton::model::{
    BetaFamily, GeometryConfig, MediumConfig, ModelConfig, ProfileSpec, ReservoirConfig,
};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Raw sectioned key-value text, before schema interpretation.
#[derive(Debug, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    err(format!("line {}: unterminated section header", lineno + 1))
                })?;
                current = name.trim().to_ascii_lowercase();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected `key = value`", lineno + 1)))?;
            if current.is_empty() {
                return Err(err(format!(
                    "line {}: key outside any [section]",
                    lineno + 1
                )));
            }
            let prev = sections
                .get_mut(&current)
                .expect("section inserted on header")
                .insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
            if prev.is_some() {
                return Err(err(format!(
                    "line {}: duplicate key `{}` in [{}]",
                    lineno + 1,
                    key.trim(),
                    current
                )));
            }
        }
        Ok(RawConfig { sections })
    }

    fn section(&self, name: &str) -> Result<&BTreeMap<String, String>, ConfigError> {
        self.sections
            .get(name)
            .ok_or_else(|| err(format!("missing required section [{name}]")))
    }

    fn get<'a>(&'a self, section: &str, key: &str) -> Option<&'a str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(String::as_str)
    }

    fn require(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.get(section, key)
            .ok_or_else(|| err(format!("missing key `{key}` in [{section}]")))
    }
}

fn strip_comment(line: &str) -> &str {
    let trimmed = line.trim_start();
    if trimmed.starts_with('#') || trimmed.starts_with(';') {
        return "";
    }
    // Trailing comments must be separated from the value by whitespace.
    for marker in [" #", "\t#", " ;", "\t;"] {
        if let Some(idx) = line.find(marker) {
            return &line[..idx];
        }
    }
    line
}

fn parse_f64(section: &str, key: &str, raw: &str) -> Result<f64, ConfigError> {
    raw.parse::<f64>()
        .map_err(|_| err(format!("[{section}] {key}: `{raw}` is not a number")))
}

fn parse_usize(section: &str, key: &str, raw: &str) -> Result<usize, ConfigError> {
    raw.parse::<usize>().map_err(|_| {
        err(format!(
            "[{section}] {key}: `{raw}` is not a nonnegative integer"
        ))
    })
}

fn parse_list(section: &str, key: &str, raw: &str) -> Result<Vec<f64>, ConfigError> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(section, key, s))
        .collect()
}

/// A profile is one value (constant) or two values (two half-domain layers).
fn parse_profile(section: &str, key: &str, raw: &str) -> Result<ProfileSpec, ConfigError> {
    let values = parse_list(section, key, raw)?;
    match values.as_slice() {
        [v] => Ok(ProfileSpec::Constant(*v)),
        [a, b] => Ok(ProfileSpec::TwoLayer {
            first: *a,
            second: *b,
        }),
        _ => Err(err(format!(
            "[{section}] {key}: expected 1 (constant) or 2 (two-layer) values, got {}",
            values.len()
        ))),
    }
}

/// Which initial field-state the `evolve` command prepares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    /// Gaussian bump in the vector potential, everything else at rest.
    Pulse,
    /// Independent Gaussian samples in every canonical component (seeded).
    Random,
}

/// Command-specific parameters from the `[run]` section.
#[derive(Debug, Clone)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub t_max: f64,
    pub samples: usize,
    pub initial: InitialState,
    pub pulse_center: f64,
    pub pulse_width: f64,
    pub pulse_amplitude: f64,
    pub branch: usize,
    pub n_smear: usize,
    pub fluct_amplitude: f64,
    pub fluct_center: Option<f64>,
    pub fluct_width: f64,
    pub pairs: Vec<(usize, usize)>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_samples: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: None,
            t_max: 20.0,
            samples: 100,
            initial: InitialState::Pulse,
            pulse_center: 0.5,
            pulse_width: 0.1,
            pulse_amplitude: 1.0,
            branch: 1,
            n_smear: 128,
            fluct_amplitude: 0.8,
            fluct_center: None,
            fluct_width: 0.5,
            pairs: Vec::new(),
            omega_min: 0.05,
            omega_max: 5.0,
            omega_samples: 200,
        }
    }
}

/// Fully interpreted configuration file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub run: RunSection,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw = RawConfig::parse(text)?;
    let model = ModelConfig {
        geometry: parse_geometry(&raw)?,
        medium: parse_medium(&raw)?,
        reservoir: parse_reservoir(&raw)?,
    };
    let run = parse_run(&raw)?;
    Ok(RunConfig { model, run })
}

fn parse_geometry(raw: &RawConfig) -> Result<GeometryConfig, ConfigError> {
    let section = "geometry";
    raw.section(section)?;
    let kind = raw.require(section, "kind")?.to_ascii_lowercase();
    match kind.as_str() {
        "layered" => Ok(GeometryConfig::Layered1D {
            l_x: parse_f64(section, "length", raw.require(section, "length")?)?,
            points: parse_usize(section, "points", raw.require(section, "points")?)?,
        }),
        "homogeneous" => Ok(GeometryConfig::Homogeneous3D {
            l_box: parse_f64(section, "box", raw.require(section, "box")?)?,
            m_max: parse_usize(section, "m_max", raw.require(section, "m_max")?)?,
        }),
        other => Err(err(format!(
            "[geometry] kind: `{other}` (expected `layered` or `homogeneous`)"
        ))),
    }
}

fn parse_medium(raw: &RawConfig) -> Result<MediumConfig, ConfigError> {
    let section = "medium";
    raw.section(section)?;
    Ok(MediumConfig {
        rho: parse_profile(section, "rho", raw.require(section, "rho")?)?,
        omega0: parse_profile(section, "omega0", raw.require(section, "omega0")?)?,
        alpha: parse_profile(section, "alpha", raw.require(section, "alpha")?)?,
    })
}

fn parse_reservoir(raw: &RawConfig) -> Result<ReservoirConfig, ConfigError> {
    let section = "reservoir";
    raw.section(section)?;
    let kind = raw.require(section, "kind")?.to_ascii_lowercase();
    match kind.as_str() {
        "none" => Ok(ReservoirConfig::Discrete {
            omegas: Vec::new(),
            betas: Vec::new(),
        }),
        "discrete" => {
            let omegas = parse_list(section, "omegas", raw.require(section, "omegas")?)?;
            let mut betas = Vec::with_capacity(omegas.len());
            for n in 1..=omegas.len() {
                let key = format!("beta_{n}");
                betas.push(parse_profile(section, &key, raw.require(section, &key)?)?);
            }
            Ok(ReservoirConfig::Discrete { omegas, betas })
        }
        "continuum" => {
            let family = match raw
                .get(section, "family")
                .unwrap_or("gaussian")
                .to_ascii_lowercase()
                .as_str()
            {
                "gaussian" => BetaFamily::Gaussian,
                other => {
                    return Err(err(format!(
                        "[reservoir] family: `{other}` (only `gaussian` is implemented)"
                    )))
                }
            };
            Ok(ReservoirConfig::Continuum {
                family,
                omega_c: parse_f64(section, "omega_c", raw.require(section, "omega_c")?)?,
                amplitude: parse_profile(section, "amplitude", raw.require(section, "amplitude")?)?,
                omega_max: parse_f64(section, "omega_max", raw.require(section, "omega_max")?)?,
            })
        }
        other => Err(err(format!(
            "[reservoir] kind: `{other}` (expected `none`, `discrete` or `continuum`)"
        ))),
    }
}

fn parse_pairs(section: &str, key: &str, raw: &str) -> Result<Vec<(usize, usize)>, ConfigError> {
    let mut out = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (a, b) = item
            .split_once(':')
            .ok_or_else(|| err(format!("[{section}] {key}: pairs are written `x:x'`")))?;
        out.push((
            parse_usize(section, key, a.trim())?,
            parse_usize(section, key, b.trim())?,
        ));
    }
    Ok(out)
}

fn parse_run(raw: &RawConfig) -> Result<RunSection, ConfigError> {
    let section = "run";
    let mut run = RunSection::default();
    if raw.section(section).is_err() {
        return Ok(run);
    }
    if let Some(v) = raw.get(section, "seed") {
        run.seed = Some(
            v.parse::<u64>()
                .map_err(|_| err(format!("[run] seed: `{v}` is not a u64")))?,
        );
    }
    if let Some(v) = raw.get(section, "t_max") {
        run.t_max = parse_f64(section, "t_max", v)?;
        if run.t_max <= 0.0 {
            return Err(err("[run] t_max must be positive".to_string()));
        }
    }
    if let Some(v) = raw.get(section, "samples") {
        run.samples = parse_usize(section, "samples", v)?;
        if run.samples < 2 {
            return Err(err("[run] samples must be at least 2".to_string()));
        }
    }
    if let Some(v) = raw.get(section, "initial") {
        run.initial = match v.to_ascii_lowercase().as_str() {
            "pulse" => InitialState::Pulse,
            "random" => InitialState::Random,
            other => {
                return Err(err(format!(
                    "[run] initial: `{other}` (expected `pulse` or `random`)"
                )))
            }
        };
    }
    if let Some(v) = raw.get(section, "pulse_center") {
        run.pulse_center = parse_f64(section, "pulse_center", v)?;
    }
    if let Some(v) = raw.get(section, "pulse_width") {
        run.pulse_width = parse_f64(section, "pulse_width", v)?;
        if run.pulse_width <= 0.0 {
            return Err(err("[run] pulse_width must be positive".to_string()));
        }
    }
    if let Some(v) = raw.get(section, "pulse_amplitude") {
        run.pulse_amplitude = parse_f64(section, "pulse_amplitude", v)?;
    }
    if let Some(v) = raw.get(section, "branch") {
        run.branch = parse_usize(section, "branch", v)?;
    }
    if let Some(v) = raw.get(section, "n_smear") {
        run.n_smear = parse_usize(section, "n_smear", v)?;
    }
    if let Some(v) = raw.get(section, "fluct_amplitude") {
        run.fluct_amplitude = parse_f64(section, "fluct_amplitude", v)?;
        if run.fluct_amplitude < 0.0 {
            return Err(err("[run] fluct_amplitude must be nonnegative".to_string()));
        }
    }
    if let Some(v) = raw.get(section, "fluct_center") {
        run.fluct_center = Some(parse_f64(section, "fluct_center", v)?);
    }
    if let Some(v) = raw.get(section, "fluct_width") {
        run.fluct_width = parse_f64(section, "fluct_width", v)?;
        if run.fluct_width <= 0.0 {
            return Err(err("[run] fluct_width must be positive".to_string()));
        }
    }
    if let Some(v) = raw.get(section, "pairs") {
        run.pairs = parse_pairs(section, "pairs", v)?;
    }
    if let Some(v) = raw.get(section, "omega_min") {
        run.omega_min = parse_f64(section, "omega_min", v)?;
    }
    if let Some(v) = raw.get(section, "omega_max") {
        run.omega_max = parse_f64(section, "omega_max", v)?;
    }
    if let Some(v) = raw.get(section, "omega_samples") {
        run.omega_samples = parse_usize(section, "omega_samples", v)?;
        if run.omega_samples < 2 {
            return Err(err("[run] omega_samples must be at least 2".to_string()));
        }
    }
    if run.omega_min <= 0.0 || run.omega_max <= run.omega_min {
        return Err(err(
            "[run] omega_min/omega_max must satisfy 0 < omega_min < omega_max".to_string(),
        ));
    }
    Ok(run)
}
