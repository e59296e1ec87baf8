//! Dataset parsing, subset resolution and the pre-stacked task buffer.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, PaddedGrid, FULL_COLS, FULL_ROWS, NUM_COLORS};
use crate::prng::PrngKey;

/// Default maximum number of demonstration pairs per task.
pub const DEFAULT_MAX_DEMO_PAIRS: usize = 5;
/// Default maximum number of test pairs per task.
pub const DEFAULT_MAX_TEST_PAIRS: usize = 2;

pub type Matrix = Vec<Vec<u8>>;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing key \"{0}\"")]
    MissingKey(&'static str),
    #[error("{section}[{pair}].{field}: ragged matrix, row {row} has length {len}, expected {expected}")]
    RaggedMatrix {
        section: &'static str,
        pair: usize,
        field: &'static str,
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("{section}[{pair}].{field}: color {value} at ({row}, {col}) outside 0..=9")]
    ColorOutOfRange {
        section: &'static str,
        pair: usize,
        field: &'static str,
        row: usize,
        col: usize,
        value: i64,
    },
    #[error("{section}[{pair}].{field}: dimensions {rows}x{cols} outside 1..={max_rows} x 1..={max_cols}")]
    DimsOutOfCapacity {
        section: &'static str,
        pair: usize,
        field: &'static str,
        rows: usize,
        cols: usize,
        max_rows: usize,
        max_cols: usize,
    },
    #[error("\"{0}\" must contain at least one pair")]
    NoPairs(&'static str),
    #[error("dataset directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("no tasks found in {0}")]
    NoTasks(PathBuf),
    #[error("subset references unknown task id \"{0}\"")]
    UnresolvedSubsetId(String),
    #[error("duplicate task id \"{0}\"")]
    DuplicateId(String),
    #[error("unknown parser \"{0}\"")]
    UnknownParser(String),
    #[error("task {task} has {count} {kind} pairs, buffer allows {max}")]
    TooManyPairs {
        task: String,
        kind: &'static str,
        count: usize,
        max: usize,
    },
    #[error("cannot build a buffer from zero tasks")]
    EmptyBuffer,
    #[error("task {task}: {source}")]
    Grid {
        task: String,
        #[source]
        source: GridError,
    },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<TaskError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TaskError {
    fn in_file(self, path: &Path) -> Self {
        TaskError::File { path: path.to_path_buf(), source: Box::new(self) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub input: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTask {
    pub id: String,
    pub train: Vec<Pair>,
    pub test: Vec<Pair>,
}

/// Format-specific task reader.
pub trait TaskParser: Send + Sync {
    /// Parses the contents of one task file. `id` is derived from the file
    /// name by the caller.
    fn parse(&self, id: &str, bytes: &[u8]) -> Result<RawTask, TaskError>;

    /// File extension this parser reads, without the dot.
    fn extension(&self) -> &str {
        "json"
    }
}

/// The canonical ARC JSON layout:
/// `{"train": [{"input": [[..]], "output": [[..]]}, ..], "test": [..]}`.
#[derive(Debug, Clone, Copy)]
pub struct ArcJsonParser {
    pub max_rows: usize,
    pub max_cols: usize,
}

impl Default for ArcJsonParser {
    fn default() -> Self {
        Self { max_rows: FULL_ROWS, max_cols: FULL_COLS }
    }
}

impl ArcJsonParser {
    pub fn with_capacity(max_rows: usize, max_cols: usize) -> Self {
        Self { max_rows, max_cols }
    }
}

/// Looks up a parser by its configuration identifier.
pub fn parser_by_name(
    name: &str,
    max_rows: usize,
    max_cols: usize,
) -> Result<Box<dyn TaskParser>, TaskError> {
    match name {
        "arc-json" | "arc" => Ok(Box::new(ArcJsonParser::with_capacity(max_rows, max_cols))),
        other => Err(TaskError::UnknownParser(other.to_string())),
    }
}

#[derive(Deserialize)]
struct JsonPair {
    input: Option<Vec<Vec<i64>>>,
    output: Option<Vec<Vec<i64>>>,
}

#[derive(Deserialize)]
struct JsonTask {
    train: Option<Vec<JsonPair>>,
    test: Option<Vec<JsonPair>>,
}

impl ArcJsonParser {
    fn matrix(
        &self,
        raw: Vec<Vec<i64>>,
        section: &'static str,
        pair: usize,
        field: &'static str,
    ) -> Result<Matrix, TaskError> {
        let rows = raw.len();
        let cols = raw.first().map_or(0, Vec::len);
        for (r, row) in raw.iter().enumerate() {
            if row.len() != cols {
                return Err(TaskError::RaggedMatrix {
                    section,
                    pair,
                    field,
                    row: r,
                    len: row.len(),
                    expected: cols,
                });
            }
        }
        if rows == 0 || cols == 0 || rows > self.max_rows || cols > self.max_cols {
            return Err(TaskError::DimsOutOfCapacity {
                section,
                pair,
                field,
                rows,
                cols,
                max_rows: self.max_rows,
                max_cols: self.max_cols,
            });
        }
        raw.into_iter()
            .enumerate()
            .map(|(r, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(c, v)| {
                        if (0..NUM_COLORS as i64).contains(&v) {
                            Ok(v as u8)
                        } else {
                            Err(TaskError::ColorOutOfRange {
                                section,
                                pair,
                                field,
                                row: r,
                                col: c,
                                value: v,
                            })
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn pairs(
        &self,
        raw: Option<Vec<JsonPair>>,
        section: &'static str,
    ) -> Result<Vec<Pair>, TaskError> {
        let raw = raw.ok_or(TaskError::MissingKey(section))?;
        if raw.is_empty() {
            return Err(TaskError::NoPairs(section));
        }
        raw.into_iter()
            .enumerate()
            .map(|(i, p)| {
                let input = p.input.ok_or(TaskError::MissingKey("input"))?;
                let output = p.output.ok_or(TaskError::MissingKey("output"))?;
                Ok(Pair {
                    input: self.matrix(input, section, i, "input")?,
                    output: self.matrix(output, section, i, "output")?,
                })
            })
            .collect()
    }
}

impl TaskParser for ArcJsonParser {
    fn parse(&self, id: &str, bytes: &[u8]) -> Result<RawTask, TaskError> {
        let task: JsonTask =
            serde_json::from_slice(bytes).map_err(|e| TaskError::MalformedJson(e.to_string()))?;
        Ok(RawTask {
            id: id.to_string(),
            train: self.pairs(task.train, "train")?,
            test: self.pairs(task.test, "test")?,
        })
    }
}

/// Parses one ARC JSON task with the full 30×30 capacity.
pub fn parse_task_json(id: &str, bytes: &[u8]) -> Result<RawTask, TaskError> {
    ArcJsonParser::default().parse(id, bytes)
}

/// Serializes a task in the ARC JSON layout, compact form.
pub fn write_task_json(task: &RawTask) -> String {
    #[derive(Serialize)]
    struct Out<'a> {
        train: &'a [Pair],
        test: &'a [Pair],
    }
    serde_json::to_string(&Out { train: &task.train, test: &task.test })
        .expect("task serialization cannot fail")
}

/// Dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[serde(alias = "training")]
    Train,
    #[serde(alias = "eval")]
    Evaluation,
}

impl Split {
    /// Directory name under the dataset root.
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "training",
            Split::Evaluation => "evaluation",
        }
    }
}

/// A subset is either a list of ids given inline or the name of a subset
/// file `<root>/subsets/<name>.{json,yaml,yml}` holding such a list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubsetRef {
    Ids(Vec<String>),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default)]
    pub name: String,
    pub root: PathBuf,
    /// Splits to load. Empty means the task files sit directly in `root`.
    #[serde(default)]
    pub splits: Vec<Split>,
    #[serde(default)]
    pub subset: Option<SubsetRef>,
    #[serde(default = "default_parser")]
    pub parser: String,
}

fn default_parser() -> String {
    "arc-json".to_string()
}

impl DatasetSpec {
    pub fn flat(root: impl Into<PathBuf>) -> Self {
        Self {
            name: String::new(),
            root: root.into(),
            splits: Vec::new(),
            subset: None,
            parser: default_parser(),
        }
    }
}

/// Reads a subset file: a JSON or YAML list of task ids.
pub fn read_subset_file(path: &Path) -> Result<Vec<String>, TaskError> {
    let text = fs::read_to_string(path)
        .map_err(|source| TaskError::Io { path: path.to_path_buf(), source })?;
    serde_yaml::from_str::<Vec<String>>(&text)
        .map_err(|e| TaskError::MalformedJson(e.to_string()).in_file(path))
}

fn resolve_subset(spec: &DatasetSpec) -> Result<Option<Vec<String>>, TaskError> {
    match &spec.subset {
        None => Ok(None),
        Some(SubsetRef::Ids(ids)) => Ok(Some(ids.clone())),
        Some(SubsetRef::Named(name)) => {
            let dir = spec.root.join("subsets");
            for ext in ["json", "yaml", "yml"] {
                let p = dir.join(format!("{name}.{ext}"));
                if p.is_file() {
                    return read_subset_file(&p).map(Some);
                }
            }
            Err(TaskError::MissingDirectory(dir.join(format!("{name}.json"))))
        }
    }
}

/// Task files of a dataset, listed and sorted by id but not yet parsed.
pub struct DatasetIndex {
    entries: Vec<(String, PathBuf)>,
    parser: Box<dyn TaskParser>,
}

impl std::fmt::Debug for DatasetIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DatasetIndex").field("entries", &self.entries).finish()
    }
}

impl DatasetIndex {
    /// Lists the dataset's task files, resolves the subset, and sorts by id.
    /// Grid contents are not read.
    pub fn open(spec: &DatasetSpec, max_rows: usize, max_cols: usize) -> Result<Self, TaskError> {
        let parser = parser_by_name(&spec.parser, max_rows, max_cols)?;
        Self::open_with_parser(spec, parser)
    }

    pub fn open_with_parser(
        spec: &DatasetSpec,
        parser: Box<dyn TaskParser>,
    ) -> Result<Self, TaskError> {
        let dirs: Vec<PathBuf> = if spec.splits.is_empty() {
            vec![spec.root.clone()]
        } else {
            let set: BTreeSet<Split> = spec.splits.iter().copied().collect();
            set.into_iter().map(|s| spec.root.join(s.dir_name())).collect()
        };

        let mut by_id: BTreeMap<String, PathBuf> = BTreeMap::new();
        for dir in &dirs {
            if !dir.is_dir() {
                return Err(TaskError::MissingDirectory(dir.clone()));
            }
            let rd = fs::read_dir(dir).map_err(|source| TaskError::Io { path: dir.clone(), source })?;
            for entry in rd {
                let entry = entry.map_err(|source| TaskError::Io { path: dir.clone(), source })?;
                let path = entry.path();
                if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some(parser.extension()) {
                    continue;
                }
                let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                    continue;
                };
                if by_id.insert(id.clone(), path).is_some() {
                    return Err(TaskError::DuplicateId(id));
                }
            }
        }

        let entries: Vec<(String, PathBuf)> = match resolve_subset(spec)? {
            None => by_id.into_iter().collect(),
            Some(ids) => {
                let mut wanted = BTreeSet::new();
                for id in ids {
                    if !by_id.contains_key(&id) {
                        return Err(TaskError::UnresolvedSubsetId(id));
                    }
                    wanted.insert(id);
                }
                by_id.into_iter().filter(|(id, _)| wanted.contains(id)).collect()
            }
        };
        Ok(Self { entries, parser })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn path(&self, i: usize) -> &Path {
        &self.entries[i].1
    }

    /// Parses the `i`-th task on demand.
    pub fn load(&self, i: usize) -> Result<RawTask, TaskError> {
        let (id, path) = &self.entries[i];
        let bytes = fs::read(path).map_err(|source| TaskError::Io { path: path.clone(), source })?;
        self.parser.parse(id, &bytes).map_err(|e| e.in_file(path))
    }

    pub fn load_all(&self) -> Result<Vec<RawTask>, TaskError> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}

/// Eagerly loads every task of a dataset, sorted by id.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Vec<RawTask>, TaskError> {
    DatasetIndex::open(spec, FULL_ROWS, FULL_COLS)?.load_all()
}

/// All tasks padded and stacked into fixed-shape storage.
///
/// Slot `(t, p)` of the demo arrays lives at index `t * max_demo + p`; slots
/// at or beyond `demo_count[t]` hold the empty grid. Test arrays follow the
/// same layout with `max_test`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskBuffer<const R: usize = 30, const C: usize = 30> {
    pub max_demo: usize,
    pub max_test: usize,
    pub demo_inputs: Vec<PaddedGrid<R, C>>,
    pub demo_outputs: Vec<PaddedGrid<R, C>>,
    pub demo_count: Vec<usize>,
    pub test_inputs: Vec<PaddedGrid<R, C>>,
    pub test_outputs: Vec<PaddedGrid<R, C>>,
    pub test_count: Vec<usize>,
    pub task_ids: Vec<String>,
}

impl<const R: usize, const C: usize> TaskBuffer<R, C> {
    fn with_caps(max_demo: usize, max_test: usize) -> Self {
        Self {
            max_demo,
            max_test,
            demo_inputs: Vec::new(),
            demo_outputs: Vec::new(),
            demo_count: Vec::new(),
            test_inputs: Vec::new(),
            test_outputs: Vec::new(),
            test_count: Vec::new(),
            task_ids: Vec::new(),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.task_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_ids.is_empty()
    }

    #[inline]
    pub fn demo_input(&self, task: usize, pair: usize) -> &PaddedGrid<R, C> {
        &self.demo_inputs[task * self.max_demo + pair]
    }

    #[inline]
    pub fn demo_output(&self, task: usize, pair: usize) -> &PaddedGrid<R, C> {
        &self.demo_outputs[task * self.max_demo + pair]
    }

    #[inline]
    pub fn test_input(&self, task: usize, pair: usize) -> &PaddedGrid<R, C> {
        &self.test_inputs[task * self.max_test + pair]
    }

    #[inline]
    pub fn test_output(&self, task: usize, pair: usize) -> &PaddedGrid<R, C> {
        &self.test_outputs[task * self.max_test + pair]
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.task_ids.iter().position(|t| t == id)
    }

    fn push(&mut self, task: &RawTask) -> Result<(), TaskError> {
        if task.train.len() > self.max_demo || task.train.is_empty() {
            return Err(TaskError::TooManyPairs {
                task: task.id.clone(),
                kind: "demonstration",
                count: task.train.len(),
                max: self.max_demo,
            });
        }
        if task.test.len() > self.max_test || task.test.is_empty() {
            return Err(TaskError::TooManyPairs {
                task: task.id.clone(),
                kind: "test",
                count: task.test.len(),
                max: self.max_test,
            });
        }
        let pad = |m: &Matrix| {
            PaddedGrid::<R, C>::from_rows(m)
                .map_err(|source| TaskError::Grid { task: task.id.clone(), source })
        };
        let stack = |pairs: &[Pair],
                     cap: usize,
                     ins: &mut Vec<PaddedGrid<R, C>>,
                     outs: &mut Vec<PaddedGrid<R, C>>|
         -> Result<(), TaskError> {
            for p in pairs {
                ins.push(pad(&p.input)?);
                outs.push(pad(&p.output)?);
            }
            for _ in pairs.len()..cap {
                ins.push(PaddedGrid::empty());
                outs.push(PaddedGrid::empty());
            }
            Ok(())
        };
        stack(&task.train, self.max_demo, &mut self.demo_inputs, &mut self.demo_outputs)?;
        stack(&task.test, self.max_test, &mut self.test_inputs, &mut self.test_outputs)?;
        self.demo_count.push(task.train.len());
        self.test_count.push(task.test.len());
        self.task_ids.push(task.id.clone());
        Ok(())
    }
}

/// Result of parsing every task file under a directory tree.
#[derive(Debug, Default)]
pub struct ValidationReport {
    pub parsed: usize,
    pub failures: Vec<(PathBuf, TaskError)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Parses every file with the parser's extension below `root`, skipping
/// `subsets` directories. Files are visited in sorted path order.
pub fn validate_directory(root: &Path, parser: &dyn TaskParser) -> Result<ValidationReport, TaskError> {
    if !root.is_dir() {
        return Err(TaskError::MissingDirectory(root.to_path_buf()));
    }
    let mut files = Vec::new();
    let mut dirs = vec![root.to_path_buf()];
    while let Some(dir) = dirs.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| TaskError::Io { path: dir.clone(), source: e })? {
            let path = entry.map_err(|e| TaskError::Io { path: dir.clone(), source: e })?.path();
            if path.is_dir() {
                if path.file_name().is_some_and(|n| n != "subsets") {
                    dirs.push(path);
                }
            } else if path.extension().is_some_and(|e| e == parser.extension()) {
                files.push(path);
            }
        }
    }
    if files.is_empty() {
        return Err(TaskError::NoTasks(root.to_path_buf()));
    }
    files.sort();
    let mut report = ValidationReport::default();
    for path in files {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let result = fs::read(&path)
            .map_err(|e| TaskError::Io { path: path.clone(), source: e })
            .and_then(|bytes| parser.parse(&id, &bytes));
        match result {
            Ok(_) => report.parsed += 1,
            Err(e) => report.failures.push((path, e)),
        }
    }
    Ok(report)
}

/// Pads and stacks tasks in the given order.
pub fn build_task_buffer<const R: usize, const C: usize>(
    tasks: &[RawTask],
    max_demo: usize,
    max_test: usize,
) -> Result<TaskBuffer<R, C>, TaskError> {
    if tasks.is_empty() {
        return Err(TaskError::EmptyBuffer);
    }
    let mut buf = TaskBuffer::with_caps(max_demo, max_test);
    for t in tasks {
        buf.push(t)?;
    }
    Ok(buf)
}

/// Builds a buffer straight from a dataset index, parsing one task at a time.
pub fn build_task_buffer_lazy<const R: usize, const C: usize>(
    index: &DatasetIndex,
    max_demo: usize,
    max_test: usize,
) -> Result<TaskBuffer<R, C>, TaskError> {
    if index.is_empty() {
        return Err(TaskError::EmptyBuffer);
    }
    let mut buf = TaskBuffer::with_caps(max_demo, max_test);
    for i in 0..index.len() {
        buf.push(&index.load(i)?)?;
    }
    Ok(buf)
}

/// Uniform task index from one draw of `key`, plus the advanced key.
pub fn sample_task<const R: usize, const C: usize>(
    key: PrngKey,
    buffer: &TaskBuffer<R, C>,
) -> (usize, PrngKey) {
    let (draw, next) = key.split2();
    (draw.uniform_index(buffer.num_tasks()), next)
}
