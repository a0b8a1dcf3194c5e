//! Episode and step data model.
//!
//! An [`Episode`] is one task trajectory: an instruction, the app it runs in,
//! the app's category, and an ordered list of [`Step`]s. Each step carries a
//! closed-vocabulary [`ActionType`] plus free-text arguments and an optional
//! low-level subgoal. Step features are never stored; they are recomputed
//! from the episode by [`crate::model::featurize_step`].
//!
//! This module also owns record ingestion (`parse_episode`), the two-route
//! app-name extraction used for raw records, the app catalog, dataset
//! statistics, and the line-delimited dataset file format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("MissingField: `{0}`")]
    MissingField(String),
    #[error("EmptySteps: episode `{0}` has no steps")]
    EmptySteps(String),
    #[error("UnknownActionType: `{value}` at {field}")]
    UnknownActionType { field: String, value: String },
    #[error("InvalidField: `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error("catalog line {line}: {reason}")]
    Catalog { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<DataError>,
    },
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// The closed action space. Declaration order is the model's class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Click,
    Scroll,
    Type,
    OpenApp,
    NavigateHome,
    NavigateBack,
    LongPress,
    Wait,
    Complete,
}

impl ActionType {
    pub const ALL: [ActionType; 9] = [
        ActionType::Click,
        ActionType::Scroll,
        ActionType::Type,
        ActionType::OpenApp,
        ActionType::NavigateHome,
        ActionType::NavigateBack,
        ActionType::LongPress,
        ActionType::Wait,
        ActionType::Complete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Click => "click",
            ActionType::Scroll => "scroll",
            ActionType::Type => "type",
            ActionType::OpenApp => "open_app",
            ActionType::NavigateHome => "navigate_home",
            ActionType::NavigateBack => "navigate_back",
            ActionType::LongPress => "long_press",
            ActionType::Wait => "wait",
            ActionType::Complete => "complete",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<ActionType> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionType {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Self::ALL.iter().copied().find(|a| a.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Shopping,
    Traveling,
    Office,
    Lives,
    Entertainment,
    Unknown,
}

impl Category {
    /// The five named categories, excluding `Unknown`.
    pub const NAMED: [Category; 5] = [
        Category::Shopping,
        Category::Traveling,
        Category::Office,
        Category::Lives,
        Category::Entertainment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Shopping => "Shopping",
            Category::Traveling => "Traveling",
            Category::Office => "Office",
            Category::Lives => "Lives",
            Category::Entertainment => "Entertainment",
            Category::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_lowercase().as_str() {
            "shopping" => Ok(Category::Shopping),
            "traveling" | "travelling" => Ok(Category::Traveling),
            "office" => Ok(Category::Office),
            "lives" => Ok(Category::Lives),
            "entertainment" => Ok(Category::Entertainment),
            "unknown" => Ok(Category::Unknown),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub subgoal: String,
    pub action_type: ActionType,
    pub action_args: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub instruction: String,
    pub app: String,
    pub category: Category,
    pub steps: Vec<Step>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Display form of an app name: trimmed, internal whitespace collapsed,
/// original casing kept.
pub fn normalize_app_name(app: &str) -> String {
    app.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lookup key for an app name (display form, case-folded).
pub fn app_key(app: &str) -> String {
    normalize_app_name(app).to_lowercase()
}

/// Case-insensitive label ordering used for app columns everywhere
/// (heatmaps, report tables), so "eBay" sorts between "Clock" and "Flipkart".
pub fn label_order(a: &str, b: &str) -> std::cmp::Ordering {
    a.to_lowercase().cmp(&b.to_lowercase()).then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppCatalog {
    entries: BTreeMap<String, Category>,
}

static BUILTIN_CATALOG: LazyLock<AppCatalog> = LazyLock::new(|| {
    AppCatalog::parse(include_str!("../data/catalog.tsv")).expect("builtin catalog is well formed")
});

impl AppCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped catalog of 52 apps over the five named categories.
    pub fn builtin() -> &'static AppCatalog {
        &BUILTIN_CATALOG
    }

    /// Parses `app<TAB>category` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut catalog = AppCatalog::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |reason: String| DataError::Catalog { line: i + 1, reason };
            let (app, cat) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `app<TAB>category`".into()))?;
            let category: Category = cat
                .parse()
                .map_err(|_| err(format!("unknown category `{}`", cat.trim())))?;
            if category == Category::Unknown {
                return Err(err("`Unknown` is not a catalog category".into()));
            }
            if app.trim().is_empty() {
                return Err(err("empty app name".into()));
            }
            catalog.entries.insert(app_key(app), category);
        }
        Ok(catalog)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Adds or replaces one entry. `Unknown` is rejected.
    pub fn insert(&mut self, app: &str, category: Category) -> Result<()> {
        if category == Category::Unknown {
            return Err(DataError::InvalidField {
                field: "category".into(),
                reason: "`Unknown` is not a catalog category".into(),
            });
        }
        self.entries.insert(app_key(app), category);
        Ok(())
    }

    /// Layers `overlay` on top of `self`; overlay entries win.
    pub fn with_overlay(&self, overlay: &AppCatalog) -> AppCatalog {
        let mut merged = self.clone();
        merged
            .entries
            .extend(overlay.entries.iter().map(|(k, v)| (k.clone(), *v)));
        merged
    }

    pub fn lookup(&self, app: &str) -> Category {
        self.entries
            .get(&app_key(app))
            .copied()
            .unwrap_or(Category::Unknown)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries as (case-folded key, category).
    pub fn iter(&self) -> impl Iterator<Item = (&str, Category)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

pub fn categorize_app(app: &str, catalog: &AppCatalog) -> Category {
    catalog.lookup(app)
}

static APP_IN_GOAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bthe\s+(\w+(?:\s+\w+)?)\s+app\b").expect("static regex")
});

fn action_list(record: &Value) -> Option<&Vec<Value>> {
    record
        .get("actions")
        .or_else(|| record.get("steps"))
        .and_then(Value::as_array)
}

fn goal_text(record: &Value) -> Option<&str> {
    record
        .get("goal")
        .or_else(|| record.get("instruction"))
        .and_then(Value::as_str)
}

/// Two-route app-name extraction for raw records.
///
/// An `open_app` action wins: its `app_name` (or `action_args`) is returned
/// with byte-order marks removed. Otherwise the goal is matched against
/// `the <one or two words> app`. Returns `None` when both routes fail; callers
/// drop such episodes.
pub fn extract_app_name(record: &Value) -> Option<String> {
    let strip = |s: &str| s.replace('\u{feff}', "");

    // task_info layout: top-level action_type list plus a single app_name
    if let Some(types) = record.get("action_type").and_then(Value::as_array) {
        if types.iter().any(|t| t.as_str() == Some("open_app")) {
            if let Some(name) = record.get("app_name").and_then(Value::as_str) {
                let name = strip(name);
                if !name.trim().is_empty() {
                    return Some(name);
                }
            }
        }
    }

    if let Some(actions) = action_list(record) {
        for action in actions {
            if action.get("action_type").and_then(Value::as_str) != Some("open_app") {
                continue;
            }
            let name = action
                .get("app_name")
                .or_else(|| action.get("action_args"))
                .and_then(Value::as_str)
                .map(strip);
            if let Some(name) = name.filter(|n| !n.trim().is_empty()) {
                return Some(name);
            }
        }
    }

    let goal = goal_text(record)?;
    APP_IN_GOAL
        .captures(goal)
        .and_then(|c| c.get(1))
        .map(|m| m.as_str().to_string())
}

fn str_field<'a>(record: &'a Value, field: &str) -> Result<Option<&'a str>> {
    match record.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(DataError::InvalidField {
            field: field.into(),
            reason: "expected a string".into(),
        }),
    }
}

fn parse_step(raw: &Value, position: usize) -> Result<Step> {
    let at = |name: &str| format!("steps[{position}].{name}");
    if !raw.is_object() {
        return Err(DataError::InvalidField {
            field: format!("steps[{position}]"),
            reason: "expected an object".into(),
        });
    }
    if let Some(index) = raw.get("index") {
        if index.as_u64() != Some(position as u64) {
            return Err(DataError::InvalidField {
                field: at("index"),
                reason: format!("expected {position}, found {index}"),
            });
        }
    }
    let action_raw = raw
        .get("action_type")
        .and_then(Value::as_str)
        .ok_or_else(|| DataError::MissingField(at("action_type")))?;
    let action_type = action_raw
        .parse::<ActionType>()
        .map_err(|_| DataError::UnknownActionType {
            field: at("action_type"),
            value: action_raw.to_string(),
        })?;
    let subgoal = str_field(raw, "subgoal")
        .map_err(|_| DataError::InvalidField {
            field: at("subgoal"),
            reason: "expected a string".into(),
        })?
        .unwrap_or_default()
        .to_string();
    let args = match raw.get("action_args") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => raw
            .get("app_name")
            .and_then(Value::as_str)
            .map(|s| s.replace('\u{feff}', ""))
            .unwrap_or_default(),
        Some(other) => other.to_string(),
    };
    Ok(Step {
        index: position,
        subgoal,
        action_type,
        action_args: args,
    })
}

/// Validates one structured record into an [`Episode`] using the builtin catalog.
pub fn parse_episode(record: &Value) -> Result<Episode> {
    parse_episode_with(record, AppCatalog::builtin())
}

/// Like [`parse_episode`], with an explicit catalog for records that omit
/// `category`. Records without `app` fall back to [`extract_app_name`].
pub fn parse_episode_with(record: &Value, catalog: &AppCatalog) -> Result<Episode> {
    let episode_id = str_field(record, "episode_id")?
        .ok_or_else(|| DataError::MissingField("episode_id".into()))?
        .to_string();
    let instruction = match str_field(record, "instruction")? {
        Some(s) => s.to_string(),
        None => str_field(record, "goal")?
            .ok_or_else(|| DataError::MissingField("instruction".into()))?
            .to_string(),
    };
    let raw_steps = action_list(record).ok_or_else(|| DataError::MissingField("steps".into()))?;
    if raw_steps.is_empty() {
        return Err(DataError::EmptySteps(episode_id));
    }
    let steps = raw_steps
        .iter()
        .enumerate()
        .map(|(i, s)| parse_step(s, i))
        .collect::<Result<Vec<_>>>()?;

    let app = match str_field(record, "app")? {
        Some(a) if !a.trim().is_empty() => normalize_app_name(a),
        _ => extract_app_name(record)
            .map(|a| normalize_app_name(&a))
            .filter(|a| !a.is_empty())
            .ok_or_else(|| DataError::MissingField("app".into()))?,
    };
    let category = match str_field(record, "category")? {
        Some(c) => c.parse().map_err(|_| DataError::InvalidField {
            field: "category".into(),
            reason: format!("unknown category `{c}`"),
        })?,
        None => catalog.lookup(&app),
    };

    Ok(Episode {
        episode_id,
        instruction,
        app,
        category,
        steps,
    })
}

pub fn episode_to_json(episode: &Episode) -> String {
    serde_json::to_string(episode).expect("episodes always serialize")
}

/// Writes one episode object per line.
pub fn write_dataset<W: Write>(mut out: W, episodes: &[Episode]) -> Result<()> {
    for e in episodes {
        out.write_all(episode_to_json(e).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, episodes: &[Episode]) -> Result<()> {
    write_dataset(BufWriter::new(fs::File::create(path)?), episodes)
}

/// Reads a line-delimited dataset; any malformed line is an error naming the line.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wrap = |e: DataError| DataError::Line {
            line: i + 1,
            source: Box::new(e),
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| wrap(e.into()))?;
        out.push(parse_episode(&value).map_err(wrap)?);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Episode>> {
    read_dataset(BufReader::new(fs::File::open(path)?))
}

/// Outcome of ingesting raw records.
#[derive(Debug, Default)]
pub struct Ingested {
    pub episodes: Vec<Episode>,
    /// Line numbers of records dropped because no app name could be extracted.
    pub skipped_no_app: Vec<usize>,
}

/// Ingests raw line-delimited records, dropping (not failing on) records
/// whose app name cannot be determined. Any other defect is an error.
pub fn ingest_records<R: BufRead>(input: R, catalog: &AppCatalog) -> Result<Ingested> {
    let mut out = Ingested::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wrap = |e: DataError| DataError::Line {
            line: i + 1,
            source: Box::new(e),
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| wrap(e.into()))?;
        match parse_episode_with(&value, catalog) {
            Ok(e) => out.episodes.push(e),
            Err(DataError::MissingField(f)) if f == "app" => out.skipped_no_app.push(i + 1),
            Err(e) => return Err(wrap(e)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub episodes: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_episodes: usize,
    pub n_steps: usize,
    pub n_apps: usize,
    pub n_categories: usize,
    pub per_app: BTreeMap<String, Counts>,
    pub per_category: BTreeMap<Category, Counts>,
}

pub fn dataset_stats(dataset: &[Episode]) -> DatasetStats {
    let mut stats = DatasetStats::default();
    for e in dataset {
        let n = e.steps.len();
        stats.n_episodes += 1;
        stats.n_steps += n;
        for c in [
            stats.per_app.entry(e.app.clone()).or_default(),
            stats.per_category.entry(e.category).or_default(),
        ] {
            c.episodes += 1;
            c.steps += n;
        }
    }
    stats.n_apps = stats.per_app.len();
    stats.n_categories = stats.per_category.len();
    stats
}

/// Distinct app names in case-insensitive label order.
pub fn distinct_apps(dataset: &[Episode]) -> Vec<String> {
    let set: BTreeSet<&str> = dataset.iter().map(|e| e.app.as_str()).collect();
    let mut apps: Vec<String> = set.into_iter().map(str::to_string).collect();
    apps.sort_by(|a, b| label_order(a, b));
    apps
}

/// Distinct categories in declaration order.
pub fn distinct_categories(dataset: &[Episode]) -> Vec<Category> {
    let set: BTreeSet<Category> = dataset.iter().map(|e| e.category).collect();
    set.into_iter().collect()
}
