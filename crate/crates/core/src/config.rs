//! Run configuration and the environment factory.
//!
//! Configs are YAML (JSON is accepted too). A top-level `include` key names
//! other config files, relative to the including file, that are merged in
//! first; keys in the including file win. `key.path=value` overrides are
//! applied last. Relative dataset roots resolve against the config file's
//! directory.
//!
//! Identifiers have the form `<Prefix>[-<task_id>]`:
//!
//! | prefix     | directory under the data root | split      | capacity |
//! |------------|-------------------------------|------------|----------|
//! | `Mini`     | `MiniARC`                     | flat       | 5×5      |
//! | `AGI1`     | `ARC-AGI-1`                   | training   | 30×30    |
//! | `AGI1Eval` | `ARC-AGI-1`                   | evaluation | 30×30    |
//! | `AGI2`     | `ARC-AGI-2`                   | training   | 30×30    |
//! | `AGI2Eval` | `ARC-AGI-2`                   | evaluation | 30×30    |
//!
//! The data root is `$GRIDARC_DATA`, or `data` when unset.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::BenchConfig;
use crate::env::{CapacityProfile, EnvParams, Mode};
use crate::environment::Environment;
use crate::grid::{FULL_COLS, FULL_ROWS, MINI_COLS, MINI_ROWS};
use crate::task::{
    build_task_buffer_lazy, DatasetIndex, DatasetSpec, Split, SubsetRef, TaskBuffer,
    DEFAULT_MAX_DEMO_PAIRS, DEFAULT_MAX_TEST_PAIRS,
};
use crate::wrappers::{ActionKind, ActionSpec, ObsConfig, ObsSpec, OpSubset};
use crate::Error;

pub const DATA_ROOT_VAR: &str = "GRIDARC_DATA";
pub const DEFAULT_CONTEXT_PAIRS: usize = 5;
const MAX_INCLUDE_DEPTH: usize = 16;

fn default_context_pairs() -> usize {
    DEFAULT_CONTEXT_PAIRS
}

/// One entry of the ordered wrapper list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WrapperSpec {
    Point,
    Bbox,
    Mask,
    Answer,
    Input,
    Clipboard,
    Contextual {
        #[serde(default = "default_context_pairs")]
        pairs: usize,
    },
    OpSubset {
        ops: OpSubset,
    },
    Flatten,
    AutoReset,
}

impl WrapperSpec {
    fn key(&self) -> &'static str {
        match self {
            WrapperSpec::Point | WrapperSpec::Bbox | WrapperSpec::Mask => "action",
            WrapperSpec::Answer => "answer",
            WrapperSpec::Input => "input",
            WrapperSpec::Clipboard => "clipboard",
            WrapperSpec::Contextual { .. } => "contextual",
            WrapperSpec::OpSubset { .. } => "op_subset",
            WrapperSpec::Flatten => "flatten",
            WrapperSpec::AutoReset => "auto_reset",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferConfig {
    pub max_demo_pairs: usize,
    pub max_test_pairs: usize,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self { max_demo_pairs: DEFAULT_MAX_DEMO_PAIRS, max_test_pairs: DEFAULT_MAX_TEST_PAIRS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub buffer: BufferConfig,
    #[serde(default)]
    pub env: EnvParams,
    #[serde(default)]
    pub wrappers: Vec<WrapperSpec>,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid config at {path}: {message}")]
    Invalid { path: String, message: String },
    #[error("include nesting deeper than {MAX_INCLUDE_DEPTH} at {0}")]
    IncludeDepth(PathBuf),
    #[error("bad override \"{0}\": expected key.path=value")]
    BadOverride(String),
    #[error("unknown identifier \"{0}\"")]
    UnknownIdentifier(String),
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

impl RunConfig {
    /// Checks cross-field rules that the schema alone cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen: Vec<&str> = Vec::new();
        for (i, w) in self.wrappers.iter().enumerate() {
            let key = w.key();
            if seen.contains(&key) {
                let message = if key == "action" {
                    "more than one action parameterization".to_string()
                } else {
                    format!("duplicate {key} wrapper")
                };
                return Err(invalid(&format!("wrappers[{i}]"), message));
            }
            seen.push(key);
            if let WrapperSpec::Contextual { pairs } = w {
                if *pairs > self.buffer.max_demo_pairs {
                    return Err(invalid(
                        &format!("wrappers[{i}].pairs"),
                        format!("{pairs} exceeds buffer.max_demo_pairs = {}", self.buffer.max_demo_pairs),
                    ));
                }
            }
        }
        if self.flatten() && self.action_kind() == ActionKind::Mask {
            return Err(invalid("wrappers", "mask actions cannot be flattened"));
        }
        self.env.validate().map_err(|e| invalid("env", e.to_string()))?;
        self.bench.validate().map_err(|e| invalid("bench", e.to_string()))?;
        Ok(())
    }

    /// The configured action parameterization; mask when none is listed.
    pub fn action_kind(&self) -> ActionKind {
        self.wrappers
            .iter()
            .find_map(|w| match w {
                WrapperSpec::Point => Some(ActionKind::Point),
                WrapperSpec::Bbox => Some(ActionKind::BBox),
                WrapperSpec::Mask => Some(ActionKind::Mask),
                _ => None,
            })
            .unwrap_or(ActionKind::Mask)
    }

    pub fn obs_config(&self) -> ObsConfig {
        let mut c = ObsConfig::default();
        for w in &self.wrappers {
            match w {
                WrapperSpec::Answer => c.answer = true,
                WrapperSpec::Input => c.input = true,
                WrapperSpec::Clipboard => c.clipboard = true,
                WrapperSpec::Contextual { pairs } => c.contextual = Some(*pairs),
                _ => {}
            }
        }
        c
    }

    pub fn op_subset(&self) -> OpSubset {
        self.wrappers
            .iter()
            .find_map(|w| match w {
                WrapperSpec::OpSubset { ops } => Some(ops.clone()),
                _ => None,
            })
            .unwrap_or_else(OpSubset::all)
    }

    pub fn flatten(&self) -> bool {
        self.wrappers.contains(&WrapperSpec::Flatten)
    }

    pub fn auto_reset(&self) -> bool {
        self.wrappers.contains(&WrapperSpec::AutoReset)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }
}

fn parse_tree(path: &Path, text: &str) -> Result<Value, ConfigError> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    let parsed = if is_json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        serde_yaml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| ConfigError::Syntax { path: path.to_path_buf(), message })
}

/// Recursive object merge; `top` wins on conflicts.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, t) => *slot = t,
    }
}

fn resolve_root(tree: &mut Value, dir: &Path) {
    if let Some(Value::String(root)) = tree.pointer_mut("/dataset/root") {
        let p = Path::new(root.as_str());
        if p.is_relative() {
            *root = dir.join(p).to_string_lossy().into_owned();
        }
    }
}

fn load_tree(path: &Path, depth: usize) -> Result<Value, ConfigError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(ConfigError::IncludeDepth(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let mut tree = parse_tree(path, &text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    resolve_root(&mut tree, dir);
    let includes = match tree.as_object_mut().and_then(|o| o.remove("include")) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::String(s) => Ok(s),
                _ => Err(invalid(&format!("include[{i}]"), "expected a file path")),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(invalid("include", "expected a file path or list of paths")),
    };
    let mut base = Value::Object(Default::default());
    for inc in includes {
        merge(&mut base, load_tree(&dir.join(inc), depth + 1)?);
    }
    merge(&mut base, tree);
    Ok(base)
}

/// Applies one `a.b.c=value` override. The value is read as YAML, so
/// numbers and booleans keep their type.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::BadOverride(assignment.to_string());
    let (key, raw) = assignment.split_once('=').ok_or_else(bad)?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(bad());
    }
    let value: Value = serde_yaml::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    for seg in key.split('.') {
        if !node.is_object() && !node.is_array() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Array(items) => {
                let i: usize = seg.parse().map_err(|_| bad())?;
                items.get_mut(i).ok_or_else(bad)?
            }
            Value::Object(map) => map.entry(seg.to_string()).or_insert(Value::Null),
            _ => unreachable!("coerced above"),
        };
    }
    *node = value;
    Ok(())
}

/// Deserializes and validates a merged tree, reporting the failing field.
pub fn from_tree(tree: Value) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_path_to_error::deserialize(tree).map_err(|e| {
        let path = e.path().to_string();
        invalid(&path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut tree = load_tree(path, 0)?;
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    from_tree(tree)
}

/// Parses config text directly. `format_hint` picks the syntax by file
/// extension (`x.json` or `x.yaml`).
pub fn parse_config(text: &str, format_hint: &Path) -> Result<RunConfig, ConfigError> {
    from_tree(parse_tree(format_hint, text)?)
}

pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_VAR).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

/// Config equivalent of an identifier.
pub fn identifier_config(identifier: &str, data_root: &Path) -> Result<RunConfig, ConfigError> {
    let (prefix, task) = match identifier.split_once('-') {
        Some((p, t)) if !t.is_empty() => (p, Some(t)),
        Some(_) => return Err(ConfigError::UnknownIdentifier(identifier.to_string())),
        None => (identifier, None),
    };
    let (dir, split, capacity, mode) = match prefix {
        "Mini" => ("MiniARC", None, CapacityProfile::Mini, Mode::Train),
        "AGI1" => ("ARC-AGI-1", Some(Split::Train), CapacityProfile::Full, Mode::Train),
        "AGI1Eval" => ("ARC-AGI-1", Some(Split::Evaluation), CapacityProfile::Full, Mode::Eval),
        "AGI2" => ("ARC-AGI-2", Some(Split::Train), CapacityProfile::Full, Mode::Train),
        "AGI2Eval" => ("ARC-AGI-2", Some(Split::Evaluation), CapacityProfile::Full, Mode::Eval),
        _ => return Err(ConfigError::UnknownIdentifier(identifier.to_string())),
    };
    let dataset = DatasetSpec {
        name: dir.to_string(),
        root: data_root.join(dir),
        splits: split.into_iter().collect(),
        subset: task.map(|t| SubsetRef::Ids(vec![t.to_string()])),
        ..DatasetSpec::flat(data_root.join(dir))
    };
    Ok(RunConfig {
        dataset,
        buffer: BufferConfig::default(),
        env: EnvParams { mode, capacity, ..EnvParams::default() },
        wrappers: Vec::new(),
        bench: BenchConfig::default(),
        seed: 0,
    })
}

/// A built environment at either capacity.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Full(Environment<FULL_ROWS, FULL_COLS>),
    Mini(Environment<MINI_ROWS, MINI_COLS>),
}

macro_rules! on_env {
    ($self:expr, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::Full($e) => $body,
            AnyEnv::Mini($e) => $body,
        }
    };
}

impl AnyEnv {
    pub fn params(&self) -> &EnvParams {
        on_env!(self, e => e.params())
    }

    pub fn num_tasks(&self) -> usize {
        on_env!(self, e => e.buffer().num_tasks())
    }

    pub fn task_ids(&self) -> &[String] {
        on_env!(self, e => &e.buffer().task_ids)
    }

    /// `(channels, rows, cols)`.
    pub fn observation_shape(&self) -> (usize, usize, usize) {
        on_env!(self, e => e.observation_shape())
    }

    pub fn action_spec(&self) -> &ActionSpec {
        on_env!(self, e => e.action_spec())
    }

    /// Component sizes of the unflattened action tuple.
    pub fn action_dims(&self) -> Vec<usize> {
        match self {
            AnyEnv::Full(e) => e.action_spec().dims::<FULL_ROWS, FULL_COLS>(),
            AnyEnv::Mini(e) => e.action_spec().dims::<MINI_ROWS, MINI_COLS>(),
        }
    }

    pub fn action_arity(&self) -> usize {
        self.action_dims().len()
    }
}

fn build<const R: usize, const C: usize>(cfg: &RunConfig) -> Result<Environment<R, C>, Error> {
    let index = DatasetIndex::open(&cfg.dataset, R, C)?;
    let buffer: TaskBuffer<R, C> =
        build_task_buffer_lazy(&index, cfg.buffer.max_demo_pairs, cfg.buffer.max_test_pairs)?;
    let actions = ActionSpec::new::<R, C>(cfg.action_kind(), cfg.op_subset(), cfg.flatten())?;
    Environment::new(
        Arc::new(buffer),
        cfg.env,
        ObsSpec::from_config(&cfg.obs_config()),
        actions,
        cfg.auto_reset(),
    )
}

pub fn make_from_config(cfg: &RunConfig) -> Result<AnyEnv, Error> {
    cfg.validate()?;
    Ok(match cfg.env.capacity {
        CapacityProfile::Full => AnyEnv::Full(build(cfg)?),
        CapacityProfile::Mini => AnyEnv::Mini(build(cfg)?),
    })
}

/// Builds from a config file path (`.yaml`, `.yml`, `.json`) or an
/// identifier resolved against [`data_root`].
pub fn make(identifier_or_path: &str) -> Result<(AnyEnv, EnvParams), Error> {
    let p = Path::new(identifier_or_path);
    let is_config = matches!(
        p.extension().and_then(|e| e.to_str()),
        Some("yaml" | "yml" | "json")
    );
    let cfg = if is_config {
        load_config(p, &[])?
    } else {
        identifier_config(identifier_or_path, &data_root())?
    };
    let env = make_from_config(&cfg)?;
    let params = *env.params();
    Ok((env, params))
}
