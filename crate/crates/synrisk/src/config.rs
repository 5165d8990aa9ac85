//! Run configuration: parsing, defaulting and exhaustive validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use synrisk_core::Schema;

use crate::error::{CliError, Result};
use crate::io;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "SYNRISK_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "synrisk-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Synthesize,
    AttributeRisk,
    IdentificationRisk,
    Full,
}

impl Pipeline {
    pub fn synthesizes(self) -> bool {
        matches!(self, Pipeline::Synthesize | Pipeline::Full)
    }

    pub fn attribute(self) -> bool {
        matches!(self, Pipeline::AttributeRisk | Pipeline::Full)
    }

    pub fn identification(self) -> bool {
        matches!(self, Pipeline::IdentificationRisk | Pipeline::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Synthesize => "synthesize",
            Pipeline::AttributeRisk => "attribute-risk",
            Pipeline::IdentificationRisk => "identification-risk",
            Pipeline::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthesizerConfig {
    Mixture {
        #[serde(default = "defaults::classes")]
        classes: usize,
        #[serde(default = "defaults::burn_in")]
        burn_in: usize,
        #[serde(default = "defaults::thin")]
        thin: usize,
        #[serde(default = "defaults::draws")]
        draws: usize,
        #[serde(default = "defaults::m")]
        m: usize,
    },
    Cart {
        /// Synthesis order by variable name; schema order when omitted.
        #[serde(default)]
        order: Option<Vec<String>>,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: usize,
        #[serde(default = "defaults::m")]
        m: usize,
    },
}

impl Default for SynthesizerConfig {
    fn default() -> Self {
        SynthesizerConfig::Mixture {
            classes: defaults::classes(),
            burn_in: defaults::burn_in(),
            thin: defaults::thin(),
            draws: defaults::draws(),
            m: defaults::m(),
        }
    }
}

mod defaults {
    pub fn classes() -> usize {
        20
    }
    pub fn burn_in() -> usize {
        500
    }
    pub fn thin() -> usize {
        5
    }
    pub fn draws() -> usize {
        100
    }
    pub fn m() -> usize {
        5
    }
    pub fn min_leaf() -> usize {
        5
    }
    pub fn cap() -> u64 {
        synrisk_core::attribute::DEFAULT_ENUMERATION_CAP
    }
    pub fn points() -> usize {
        100
    }
    pub fn iterations() -> usize {
        100
    }
    pub fn yes() -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeConfig {
    #[default]
    WorstCase,
    /// Names of synthesized variables the intruder knows for the target.
    KnownSubset(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorConfig {
    #[default]
    Uniform,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x: String,
    pub y: String,
    #[serde(default)]
    pub x_bounds: Option<[f64; 2]>,
    #[serde(default)]
    pub y_bounds: Option<[f64; 2]>,
    /// Square of this half-width around each record's true location.
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default = "defaults::points")]
    pub points_per_axis: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessConfig {
    #[default]
    Neighborhood,
    FullEnumeration,
    /// Label rows over the synthesized variables in schema order.
    Explicit(Vec<Vec<String>>),
    Grid(GridConfig),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSelection {
    #[default]
    All,
    Ids(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributeConfig {
    pub knowledge: KnowledgeConfig,
    pub prior: PriorConfig,
    pub guesses: GuessConfig,
    pub enumeration_cap: u64,
    pub records: RecordSelection,
    pub metadata_known: bool,
    /// Kernel widths for continuous synthesized variables of CART releases.
    pub bandwidths: BTreeMap<String, f64>,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        AttributeConfig {
            knowledge: KnowledgeConfig::default(),
            prior: PriorConfig::default(),
            guesses: GuessConfig::default(),
            enumeration_cap: defaults::cap(),
            records: RecordSelection::default(),
            metadata_known: defaults::yes(),
            bandwidths: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricConfig {
    #[default]
    Absolute,
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusConfig {
    pub radius: f64,
    #[serde(default)]
    pub metric: MetricConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationConfig {
    #[default]
    None,
    Constant(u64),
    /// CSV with columns `target_id,population`.
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationConfig {
    pub in_sample: bool,
    pub population: PopulationConfig,
    pub radii: BTreeMap<String, RadiusConfig>,
    pub iterations: usize,
    pub metadata_known: bool,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        IdentificationConfig {
            in_sample: true,
            population: PopulationConfig::None,
            radii: BTreeMap::new(),
            iterations: defaults::iterations(),
            metadata_known: false,
        }
    }
}

/// Fully defaulted configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub release_manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub summary_only: bool,
    pub synthesizer: SynthesizerConfig,
    pub attribute: AttributeConfig,
    pub identification: IdentificationConfig,
}

impl RunConfig {
    /// SHA-256 of the settings that determine the report body. The output
    /// directory and thread count are left out.
    pub fn hash(&self) -> String {
        let mut view = self.clone();
        view.output_dir = PathBuf::new();
        view.jobs = 0;
        let bytes = serde_json::to_vec(&view).expect("serializable");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

const KEYS: [&str; 12] = [
    "pipeline",
    "seed",
    "data",
    "schema",
    "targets",
    "release_manifest",
    "output_dir",
    "jobs",
    "summary_only",
    "synthesizer",
    "attribute",
    "identification",
];
const PATH_KEYS: [&str; 5] = ["data", "schema", "targets", "release_manifest", "output_dir"];

/// Reads a config document, resolving its relative paths against the
/// document's directory.
pub fn read_document(path: &Path) -> Result<Map<String, Value>> {
    let value: Value = io::read_json(path)?;
    let Value::Object(mut map) = value else {
        return Err(CliError::input(path, "the configuration must be a JSON object"));
    };
    let base = path.parent().unwrap_or(Path::new(""));
    for key in PATH_KEYS {
        resolve_path(map.get_mut(key), base);
    }
    if let Some(Value::Object(id)) = map.get_mut("identification") {
        if let Some(Value::Object(pop)) = id.get_mut("population") {
            resolve_path(pop.get_mut("table"), base);
        }
    }
    Ok(map)
}

/// Reads a section document (scenario or match configuration) and resolves
/// its population table path.
pub fn read_section(path: &Path) -> Result<Value> {
    let mut value: Value = io::read_json(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    if let Some(Value::Object(pop)) = value.get_mut("population") {
        resolve_path(pop.get_mut("table"), base);
    }
    Ok(value)
}

fn resolve_path(value: Option<&mut Value>, base: &Path) {
    if let Some(Value::String(s)) = value {
        let p = Path::new(s.as_str());
        if p.is_relative() {
            *s = base.join(p).to_string_lossy().into_owned();
        }
    }
}

fn field<T: DeserializeOwned>(map: &Map<String, Value>, key: &str, violations: &mut Vec<String>) -> Option<T> {
    match map.get(key) {
        None | Some(Value::Null) => None,
        Some(v) => match serde_json::from_value(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                violations.push(format!("`{key}`: {e}"));
                None
            }
        },
    }
}

/// Turns a config document into a [`RunConfig`], collecting every
/// violation instead of stopping at the first.
pub fn normalize(map: &Map<String, Value>) -> Result<RunConfig> {
    let mut v = Vec::new();
    for key in map.keys() {
        if !KEYS.contains(&key.as_str()) {
            v.push(format!("unknown field `{key}`"));
        }
    }
    let pipeline: Option<Pipeline> = field(map, "pipeline", &mut v);
    let seed: Option<u64> = field(map, "seed", &mut v);
    let data: Option<PathBuf> = field(map, "data", &mut v);
    let schema_path: Option<PathBuf> = field(map, "schema", &mut v);
    let targets: Option<PathBuf> = field(map, "targets", &mut v);
    let release_manifest: Option<PathBuf> = field(map, "release_manifest", &mut v);
    let output_dir: Option<PathBuf> = field(map, "output_dir", &mut v);
    let jobs: Option<usize> = field(map, "jobs", &mut v);
    let summary_only: Option<bool> = field(map, "summary_only", &mut v);
    let synthesizer: Option<SynthesizerConfig> = field(map, "synthesizer", &mut v);
    let attribute: Option<AttributeConfig> = field(map, "attribute", &mut v);
    let identification: Option<IdentificationConfig> = field(map, "identification", &mut v);

    if seed.is_none() && !map.contains_key("seed") {
        v.push("seed required".into());
    }
    if pipeline.is_none() && !map.contains_key("pipeline") {
        v.push("pipeline required".into());
    }
    let synthesizer = synthesizer.unwrap_or_default();
    let attribute = attribute.unwrap_or_default();
    let identification = identification.unwrap_or_default();

    let mut schema = None;
    if let Some(p) = pipeline {
        let mut need = |name: &str, path: &Option<PathBuf>, required: bool| match path {
            Some(path) if !path.is_file() => v.push(format!("{name} file `{}` does not exist", path.display())),
            None if required => v.push(format!("{name} path required for the {} pipeline", p.name())),
            _ => {}
        };
        need("data", &data, p.synthesizes() || p.attribute());
        need("schema", &schema_path, true);
        need("targets", &targets, p.identification());
        need("release_manifest", &release_manifest, !p.synthesizes() && p != Pipeline::Synthesize);
        if let Some(path) = schema_path.as_ref().filter(|p| p.is_file()) {
            match io::load_schema(path) {
                Ok(s) => schema = Some(s),
                Err(e) => v.push(e.to_string()),
            }
        }
        if p.synthesizes() {
            check_synthesizer(&synthesizer, schema.as_deref(), &mut v);
        }
        if p.attribute() {
            check_attribute(&attribute, schema.as_deref(), &mut v);
        }
        if p.identification() {
            check_identification(&identification, schema.as_deref(), &mut v);
        }
    }

    if !v.is_empty() {
        return Err(CliError::Config { violations: v });
    }
    let output_dir = output_dir
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok(RunConfig {
        pipeline: pipeline.expect("checked"),
        seed: seed.expect("checked"),
        data,
        schema: schema_path,
        targets,
        release_manifest,
        output_dir,
        jobs: jobs.unwrap_or(0),
        summary_only: summary_only.unwrap_or(false),
        synthesizer,
        attribute,
        identification,
    })
}

fn check_synthesizer(s: &SynthesizerConfig, schema: Option<&Schema>, v: &mut Vec<String>) {
    match s {
        SynthesizerConfig::Mixture { classes, thin, draws, m, .. } => {
            for (name, value) in [("classes", classes), ("thin", thin), ("draws", draws), ("m", m)] {
                if *value == 0 {
                    v.push(format!("synthesizer.{name} must be at least 1"));
                }
            }
            if let Some(schema) = schema {
                for def in schema.variables().iter().filter(|d| d.synthesized && !d.is_categorical()) {
                    v.push(format!("mixture synthesizer needs categorical variables; `{}` is continuous", def.name));
                }
            }
        }
        SynthesizerConfig::Cart { order, min_leaf, m } => {
            if *min_leaf == 0 {
                v.push("synthesizer.min_leaf must be at least 1".into());
            }
            if *m == 0 {
                v.push("synthesizer.m must be at least 1".into());
            }
            if let (Some(order), Some(schema)) = (order, schema) {
                for name in order {
                    match schema.index_of(name) {
                        Some(j) if schema.variable(j).synthesized => {}
                        _ => v.push(format!("synthesizer.order: `{name}` is not a synthesized variable")),
                    }
                }
            }
        }
    }
}

fn synthesized_name(schema: Option<&Schema>, name: &str, context: &str, v: &mut Vec<String>) {
    if let Some(schema) = schema {
        match schema.index_of(name) {
            Some(j) if schema.variable(j).synthesized => {}
            _ => v.push(format!("{context}: `{name}` is not a synthesized variable")),
        }
    }
}

fn check_attribute(a: &AttributeConfig, schema: Option<&Schema>, v: &mut Vec<String>) {
    if let KnowledgeConfig::KnownSubset(names) = &a.knowledge {
        for name in names {
            synthesized_name(schema, name, "attribute.knowledge.known_subset", v);
        }
    }
    if let PriorConfig::Explicit(p) = &a.prior {
        let total: f64 = p.iter().sum();
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            v.push("attribute.prior.explicit must be non-negative and sum to 1".into());
        }
    }
    if let GuessConfig::Grid(g) = &a.guesses {
        synthesized_name(schema, &g.x, "attribute.guesses.grid.x", v);
        synthesized_name(schema, &g.y, "attribute.guesses.grid.y", v);
        if g.points_per_axis < 2 {
            v.push("attribute.guesses.grid.points_per_axis must be at least 2".into());
        }
        if g.half_width.is_some() && (g.x_bounds.is_some() || g.y_bounds.is_some()) {
            v.push("attribute.guesses.grid: give either half_width or bounds, not both".into());
        }
        if g.x_bounds.is_some() != g.y_bounds.is_some() {
            v.push("attribute.guesses.grid: x_bounds and y_bounds go together".into());
        }
    }
    for (name, &w) in &a.bandwidths {
        synthesized_name(schema, name, "attribute.bandwidths", v);
        if !(w > 0.0 && w.is_finite()) {
            v.push(format!("attribute.bandwidths: `{name}` must be positive"));
        }
    }
    if let RecordSelection::Ids(ids) = &a.records {
        if ids.contains(&0) {
            v.push("attribute.records: record ids start at 1".into());
        }
    }
}

fn check_identification(c: &IdentificationConfig, schema: Option<&Schema>, v: &mut Vec<String>) {
    if c.iterations == 0 {
        v.push("identification.iterations must be at least 1".into());
    }
    match &c.population {
        PopulationConfig::None if !c.in_sample => {
            v.push("identification.population is required when in_sample is false".into())
        }
        PopulationConfig::Table(p) if !p.is_file() => {
            v.push(format!("population table `{}` does not exist", p.display()))
        }
        _ => {}
    }
    for (name, r) in &c.radii {
        if !(r.radius > 0.0 && r.radius.is_finite()) {
            v.push(format!("identification.radii: radius for `{name}` must be positive"));
        }
        if let Some(schema) = schema {
            match schema.index_of(name) {
                Some(j) if schema.variable(j).synthesized && !schema.variable(j).is_categorical() => {}
                _ => v.push(format!("identification.radii: `{name}` is not a continuous synthesized variable")),
            }
        }
    }
    if let Some(schema) = schema {
        for def in schema.variables() {
            if def.synthesized && def.intruder_known && !def.is_categorical() && !c.radii.contains_key(&def.name) {
                v.push(format!("identification.radii: continuous synthesized variable `{}` needs a radius", def.name));
            }
        }
    }
}

/// Reads and validates a config file.
pub fn validate_config(path: &Path) -> Result<RunConfig> {
    normalize(&read_document(path)?)
}
