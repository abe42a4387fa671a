//! Experiment configuration: a TOML file, environment overrides, validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::DrConfig;
use crate::env::{LatentParam, PhysicalParam, PlantSpec};
use crate::error::{Error, Result};
use crate::gp::HyperparamMode;
use crate::rff::{DEFAULT_FEATURES, DEFAULT_SAMPLES};
use crate::search::{SearchConfig, Variant};
use crate::unscented::DEFAULT_K;

/// Environment variables with this prefix override config keys; `__` separates
/// sections, e.g. `UNCAPS_SEARCH__ITERATIONS=5`.
pub const ENV_PREFIX: &str = "UNCAPS_";

pub const DEFAULT_SEEDS: [u64; 5] = [50, 100, 150, 500, 1000];

/// One column of the result table: a search variant or the DR baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Search(Variant),
    DomainRandomisation,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Search(Variant::StandardBo),
        Method::Search(Variant::UncapsMinusEp),
        Method::Search(Variant::UncapsPlusGa),
        Method::Search(Variant::Uncaps),
        Method::DomainRandomisation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Search(v) => v.name(),
            Method::DomainRandomisation => "DR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("DR") {
            return Ok(Method::DomainRandomisation);
        }
        s.parse().map(Method::Search)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    /// Latent physical parameters, in cube-coordinate order.
    pub latent: Vec<PhysicalParam>,
    /// Physical `[lower, upper]` overrides for latent parameters.
    pub ranges: BTreeMap<PhysicalParam, [f64; 2]>,
    /// Values for the non-latent parameters.
    pub nominal: BTreeMap<PhysicalParam, f64>,
    pub dt: f64,
    /// Diagonal of the state reward weight.
    pub q: [f64; 2],
    pub r: f64,
    pub target: [f64; 2],
    pub initial_state: [f64; 2],
    pub init_half_width: [f64; 2],
    /// Standard deviation of the real world's additive state noise.
    pub noise_std: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        PlantSection {
            latent: vec![PhysicalParam::Mass, PhysicalParam::Spring, PhysicalParam::Damping],
            ranges: BTreeMap::new(),
            nominal: BTreeMap::new(),
            dt: 0.05,
            q: [1.0, 0.1],
            r: 0.01,
            target: [0.0, 0.0],
            initial_state: [1.0, 0.0],
            init_half_width: [1.0, 0.5],
            noise_std: 0.1,
        }
    }
}

impl PlantSection {
    pub fn build(&self) -> Result<PlantSpec> {
        let latent = self
            .latent
            .iter()
            .map(|&p| match self.ranges.get(&p) {
                Some(&[lower, upper]) => LatentParam { param: p, lower, upper },
                None => LatentParam::with_default_range(p),
            })
            .collect();
        let mut nominal = PhysicalParam::ALL.map(PhysicalParam::default_nominal);
        for (i, p) in PhysicalParam::ALL.iter().enumerate() {
            if let Some(&v) = self.nominal.get(p) {
                nominal[i] = v;
            }
        }
        let mut builder = PlantSpec::builder();
        builder.latent = latent;
        builder.nominal = nominal;
        builder.dt = self.dt;
        builder.q_reward = DMatrix::from_diagonal(&DVector::from_column_slice(&self.q));
        builder.r_reward = DMatrix::from_element(1, 1, self.r);
        builder.target = DVector::from_column_slice(&self.target);
        builder.initial_state = DVector::from_column_slice(&self.initial_state);
        builder.init_half_width = DVector::from_column_slice(&self.init_half_width);
        builder.build()
    }
}

/// The [`SearchConfig`] fields shared by every variant and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub iterations: usize,
    pub n_init: usize,
    pub noise_variance: f64,
    pub k: f64,
    pub n_samples: usize,
    pub n_features: usize,
    pub window: usize,
    pub acquisition_restarts: usize,
    pub hyperparams: HyperparamMode,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchConfig::default();
        SearchSection {
            iterations: d.iterations,
            n_init: d.n_init,
            noise_variance: d.noise_variance,
            k: DEFAULT_K,
            n_samples: DEFAULT_SAMPLES,
            n_features: DEFAULT_FEATURES,
            window: d.window,
            acquisition_restarts: d.acquisition_restarts,
            hyperparams: d.hyperparams,
        }
    }
}

impl SearchSection {
    pub fn search_config(&self, variant: Variant, seed: u64) -> SearchConfig {
        SearchConfig {
            iterations: self.iterations,
            n_init: self.n_init,
            variant,
            noise_variance: self.noise_variance,
            k: self.k,
            n_samples: self.n_samples,
            n_features: self.n_features,
            hyperparams: self.hyperparams,
            window: self.window,
            acquisition_restarts: self.acquisition_restarts,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpstartSection {
    pub episodes: usize,
    pub horizon: usize,
}

impl Default for JumpstartSection {
    fn default() -> Self {
        JumpstartSection {
            episodes: 100,
            horizon: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub variants: Vec<Method>,
    /// Worker threads for (variant, seed) cells. Does not affect results.
    pub jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub plant: PlantSection,
    pub search: SearchSection,
    pub dr: DrConfig,
    pub jumpstart: JumpstartSection,
    /// Written into manifests; ignored on input.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub versions: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: DEFAULT_SEEDS.to_vec(),
            variants: Method::ALL.to_vec(),
            jobs: 1,
            output_dir: None,
            plant: PlantSection::default(),
            search: SearchSection::default(),
            dr: DrConfig::default(),
            jumpstart: JumpstartSection::default(),
            versions: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML text; unknown keys are errors.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse TOML text after applying `UNCAPS_*` overrides from `vars`.
    pub fn from_toml_with_overrides<I>(text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut overrides: Vec<(String, String)> =
            vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (key, raw) in overrides {
            apply_override(&mut table, &key[ENV_PREFIX.len()..], &raw)?;
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Read a config file and apply overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let in_file = |e: Error| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => Error::Config(format!("{}: {other}", path.display())),
        };
        let cfg = Self::from_toml_with_overrides(&text, std::env::vars()).map_err(in_file)?;
        cfg.validate().map_err(in_file)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if self.seeds.is_empty() {
            return cfg_err("seeds: list must not be empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return cfg_err(format!("seeds: duplicate seed {s}"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.variants {
            if !seen.insert(v) {
                return cfg_err(format!("variants: duplicate entry {v}"));
            }
        }
        if self.jobs == 0 {
            return cfg_err("jobs: must be at least 1".into());
        }
        if !(self.plant.noise_std >= 0.0 && self.plant.noise_std.is_finite()) {
            return cfg_err("plant.noise_std: must be >= 0".into());
        }
        if self.jumpstart.episodes == 0 || self.jumpstart.horizon == 0 {
            return cfg_err("jumpstart: episodes and horizon must be positive".into());
        }
        self.plant.build().map_err(|e| Error::Config(format!("plant: {e}")))?;
        for v in &self.variants {
            if let Method::Search(variant) = v {
                self.search
                    .search_config(*variant, 0)
                    .validate()
                    .map_err(|e| Error::Config(format!("search ({variant}): {e}")))?;
            }
        }
        self.dr.validate().map_err(|e| Error::Config(format!("dr: {e}")))?;
        Ok(())
    }

    /// The config as TOML, without the output directory, plus crate version.
    pub fn manifest_toml(&self) -> Result<String> {
        let mut echo = self.clone();
        echo.output_dir = None;
        echo.versions = BTreeMap::from([(
            env!("CARGO_PKG_NAME").to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        )]);
        toml::to_string(&echo).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parse an override value: TOML literal if possible, a comma list as an array,
/// otherwise a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let literal = |s: &str| -> Option<toml::Value> {
        format!("v = {s}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
    };
    if let Some(v) = literal(raw) {
        return v;
    }
    if raw.contains(',') {
        let items = raw
            .split(',')
            .map(|p| literal(p.trim()).unwrap_or_else(|| toml::Value::String(p.trim().to_string())))
            .collect();
        return toml::Value::Array(items);
    }
    toml::Value::String(raw.to_string())
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let path: Vec<String> = key.split("__").map(|p| p.to_ascii_lowercase()).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::Config(format!("malformed override key {ENV_PREFIX}{key}")));
    }
    let (last, sections) = path.split_last().expect("split yields at least one part");
    let mut cur = table;
    for section in sections {
        let entry = cur
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {ENV_PREFIX}{key}: {section} is not a section")))?;
    }
    let mut value = parse_override_value(raw);
    // a single seed or variant still means a one-element list
    if matches!(last.as_str(), "seeds" | "variants" | "latent") && !value.is_array() {
        value = toml::Value::Array(vec![value]);
    }
    cur.insert(last.clone(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.seeds, vec![50, 100, 150, 500, 1000]);
        assert_eq!(cfg.search.iterations, 25);
        assert_eq!(cfg.search.n_init, 3);
        assert_eq!(cfg.search.n_samples, 250);
        assert_eq!(cfg.search.n_features, 2000);
        assert_eq!(cfg.search.k, 2.0);
        assert_eq!(cfg.jumpstart.episodes, 100);
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_parse() {
        let text = r#"
seeds = [1, 2]
variants = ["StandardBO", "DR"]

[plant]
latent = ["mass", "actuator_gain"]
noise_std = 0.0
ranges.mass = [0.8, 1.2]

[search]
iterations = 4
hyperparams = { mode = "evidence", restarts = 3 }

[dr]
samples = 16
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(
            cfg.variants,
            vec![Method::Search(Variant::StandardBo), Method::DomainRandomisation]
        );
        assert_eq!(cfg.search.hyperparams, HyperparamMode::Evidence { restarts: 3 });
        let plant = cfg.plant.build().unwrap();
        assert_eq!(plant.dim(), 2);
        assert_eq!(plant.latent()[0].upper, 1.2);
        assert_eq!(cfg.dr.samples, 16);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for text in [
            "sedes = [1]",
            "[search]\niterations = -1",
            "[plant]\nlatent = [\"inertia\"]",
            "variants = [\"Nope\"]",
        ] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
        let err = ExperimentConfig::from_toml_str("[search]\niterations = \"many\"").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn validation_rejects_bad_lists() {
        let dup = ExperimentConfig {
            seeds: vec![1, 1],
            ..ExperimentConfig::default()
        };
        assert!(dup.validate().is_err());
        let empty = ExperimentConfig {
            seeds: vec![],
            ..ExperimentConfig::default()
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn env_overrides() {
        let cfg = ExperimentConfig::from_toml_with_overrides(
            "[search]\niterations = 9\n",
            vars(&[
                ("UNCAPS_SEARCH__ITERATIONS", "2"),
                ("UNCAPS_SEEDS", "7,8"),
                ("UNCAPS_VARIANTS", "UncAPS"),
                ("UNCAPS_PLANT__NOISE_STD", "0.25"),
                ("UNCAPS_SEARCH__HYPERPARAMS", "{ mode = \"evidence\", restarts = 2 }"),
                ("HOME", "/root"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.search.iterations, 2);
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.variants, vec![Method::Search(Variant::Uncaps)]);
        assert_eq!(cfg.plant.noise_std, 0.25);
        assert_eq!(cfg.search.hyperparams, HyperparamMode::Evidence { restarts: 2 });

        let bad = ExperimentConfig::from_toml_with_overrides("", vars(&[("UNCAPS_SEARCH__ITERATOINS", "2")]));
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn manifest_reparses_to_same_config() {
        let cfg = ExperimentConfig {
            seeds: vec![3],
            output_dir: Some(PathBuf::from("/tmp/x")),
            ..ExperimentConfig::default()
        };
        let text = cfg.manifest_toml().unwrap();
        assert!(!text.contains("output_dir"));
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.seeds, cfg.seeds);
        assert_eq!(back.search, cfg.search);
        assert_eq!(back.plant, cfg.plant);
        assert_eq!(back.manifest_toml().unwrap(), text);
    }
}
