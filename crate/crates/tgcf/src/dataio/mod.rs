//! Loading, validation and chronological splitting of transaction streams,
//! plus the synthetic drifting-dataset generator.
//!
//! The atomic datum is an [`Event`]: one (user, item, day) interaction.
//! Duplicate triples are collapsed at load time; events are kept totally
//! ordered by (day, user key, item key).

mod synth;

pub use synth::{generate_synthetic, SynthSpec, SynthStats};

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TgcfError};

/// The seven categorical bond features, in schema order.
pub const FEATURE_NAMES: [&str; 7] = [
    "rating",
    "sector",
    "industry",
    "country",
    "currency",
    "grade",
    "seniority",
];

/// Sentinel for missing categorical labels; always index 0 of each vocabulary.
pub const UNK: &str = "UNK";

/// One (user, item, day) interaction, with user/item as dense indices into
/// the owning dataset's key tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Event {
    pub day: u32,
    pub user: u32,
    pub item: u32,
}

/// Bidirectional map between opaque string keys and dense indices.
///
/// Keys are stored sorted, so index order equals lexicographic key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyIndex {
    keys: Vec<String>,
}

impl KeyIndex {
    /// Builds an index from a set of keys (sorted, deduplicated).
    pub fn from_keys<I: IntoIterator<Item = String>>(keys: I) -> Self {
        let set: BTreeSet<String> = keys.into_iter().collect();
        KeyIndex {
            keys: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, idx: u32) -> &str {
        &self.keys[idx as usize]
    }

    pub fn get(&self, key: &str) -> Option<u32> {
        self.keys.binary_search_by(|k| k.as_str().cmp(key)).ok().map(|i| i as u32)
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }
}

/// Item metadata: seven categorical labels plus an availability interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub item_id: String,
    /// Labels in [`FEATURE_NAMES`] order; missing labels are [`UNK`].
    pub labels: [String; 7],
    pub issue_day: u32,
    pub maturity_day: u32,
}

impl ItemMeta {
    pub fn available_on(&self, day: u32) -> bool {
        self.issue_day <= day && day <= self.maturity_day
    }
}

/// Per-feature vocabulary with [`UNK`] pinned at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    labels: Vec<String>,
}

impl Vocab {
    fn build<'a, I: IntoIterator<Item = &'a str>>(labels: I) -> Self {
        let mut set: BTreeSet<&str> = labels.into_iter().filter(|l| *l != UNK).collect();
        set.remove("");
        let mut out = vec![UNK.to_string()];
        out.extend(set.into_iter().map(String::from));
        Vocab { labels: out }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // UNK is always present
    }

    /// Index of a label; unknown labels map to UNK (0), never an error.
    pub fn code(&self, label: &str) -> usize {
        self.labels.iter().position(|l| l == label).unwrap_or(0)
    }

    pub fn label(&self, code: usize) -> &str {
        &self.labels[code]
    }
}

/// Item metadata table with per-feature vocabularies and integer codes.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemCatalog {
    /// One entry per item index of the owning dataset.
    pub meta: Vec<ItemMeta>,
    pub vocabs: [Vocab; 7],
    /// codes[item][feature] is the vocabulary index of that item's label.
    pub codes: Vec<[usize; 7]>,
}

impl ItemCatalog {
    pub fn from_meta(meta: Vec<ItemMeta>) -> Self {
        let vocabs: [Vocab; 7] = std::array::from_fn(|f| {
            Vocab::build(meta.iter().map(|m| m.labels[f].as_str()))
        });
        let codes = meta
            .iter()
            .map(|m| std::array::from_fn(|f| vocabs[f].code(&m.labels[f])))
            .collect();
        ItemCatalog { meta, vocabs, codes }
    }

    pub fn vocab_sizes(&self) -> [usize; 7] {
        std::array::from_fn(|f| self.vocabs[f].len())
    }

    /// Indices of items available (issued, not matured) on `day`, ascending.
    pub fn available_items(&self, day: u32) -> Vec<u32> {
        self.meta
            .iter()
            .enumerate()
            .filter(|(_, m)| m.available_on(day))
            .map(|(i, _)| i as u32)
            .collect()
    }
}

/// Half-open day ranges: train < validation < test, contiguous and disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<u32>,
    pub val: Range<u32>,
    pub test: Range<u32>,
}

/// Events plus the key indices inferred from them.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    /// Sorted by (day, user key, item key); no duplicate triples.
    pub events: Vec<Event>,
    pub users: KeyIndex,
    pub items: KeyIndex,
}

impl EventLog {
    /// Builds a log from raw (day, user key, item key) rows: interns keys,
    /// sorts, collapses duplicates. Returns the number of duplicates dropped.
    pub fn from_rows(rows: Vec<(u32, String, String)>) -> (Self, usize) {
        let users = KeyIndex::from_keys(rows.iter().map(|r| r.1.clone()));
        let items = KeyIndex::from_keys(rows.iter().map(|r| r.2.clone()));
        let mut events: Vec<Event> = rows
            .iter()
            .map(|(day, u, i)| Event {
                day: *day,
                user: users.get(u).unwrap(),
                item: items.get(i).unwrap(),
            })
            .collect();
        // Key indices are sorted, so ordering by index equals ordering by key.
        events.sort_unstable();
        let before = events.len();
        events.dedup();
        let dropped = before - events.len();
        (EventLog { events, users, items }, dropped)
    }

    pub fn last_day(&self) -> Option<u32> {
        self.events.last().map(|e| e.day)
    }

    /// Events with day in `range`, as a slice (events are day-sorted).
    pub fn events_in(&self, range: Range<u32>) -> &[Event] {
        let lo = self.events.partition_point(|e| e.day < range.start);
        let hi = self.events.partition_point(|e| e.day < range.end);
        &self.events[lo..hi]
    }
}

/// A loaded dataset: event log, item catalog, split ranges.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub log: EventLog,
    pub catalog: ItemCatalog,
    pub split: Split,
}

impl Dataset {
    /// Assembles and validates a dataset. Checks that every event lies within
    /// its item's availability window and that the split partitions the
    /// timeline.
    pub fn new(log: EventLog, catalog: ItemCatalog, split: Split) -> Result<Self> {
        if catalog.meta.len() != log.items.len() {
            return Err(TgcfError::Invariant(format!(
                "catalog has {} items, event log has {}",
                catalog.meta.len(),
                log.items.len()
            )));
        }
        for e in &log.events {
            let m = &catalog.meta[e.item as usize];
            if !m.available_on(e.day) {
                return Err(TgcfError::Config(format!(
                    "event (user {}, item {}, day {}) outside availability [{}, {}]",
                    log.users.key(e.user),
                    m.item_id,
                    e.day,
                    m.issue_day,
                    m.maturity_day
                )));
            }
        }
        Ok(Dataset { log, catalog, split })
    }

    pub fn train_events(&self) -> &[Event] {
        self.log.events_in(self.split.train.clone())
    }

    pub fn val_events(&self) -> &[Event] {
        self.log.events_in(self.split.val.clone())
    }

    pub fn test_events(&self) -> &[Event] {
        self.log.events_in(self.split.test.clone())
    }

    pub fn n_users(&self) -> usize {
        self.log.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.log.items.len()
    }
}

/// Summary returned alongside a loaded event log.
#[derive(Debug, Clone, Default)]
pub struct LoadStats {
    pub rows: usize,
    pub duplicates_dropped: usize,
}

/// Loads the events CSV (`day,user_id,item_id`); sorts, dedupes, reports.
pub fn load_events(path: &Path) -> Result<(EventLog, LoadStats)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    {
        let headers = rdr.headers()?;
        let expected = ["day", "user_id", "item_id"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(TgcfError::Parse {
                line: 1,
                msg: format!("expected header `day,user_id,item_id`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // 1-based, after header
        let rec = rec?;
        if rec.len() != 3 {
            return Err(TgcfError::Parse {
                line,
                msg: format!("expected 3 columns, got {}", rec.len()),
            });
        }
        let day: u32 = rec[0].trim().parse().map_err(|_| TgcfError::Parse {
            line,
            msg: format!("day `{}` is not a non-negative integer", &rec[0]),
        })?;
        let user = rec[1].trim().to_string();
        let item = rec[2].trim().to_string();
        if user.is_empty() || item.is_empty() {
            return Err(TgcfError::Parse {
                line,
                msg: "empty user_id or item_id".into(),
            });
        }
        rows.push((day, user, item));
    }
    if rows.is_empty() {
        return Err(TgcfError::EmptyDataset(format!("{} contains no events", path.display())));
    }
    let n_rows = rows.len();
    let (log, dropped) = EventLog::from_rows(rows);
    Ok((
        log,
        LoadStats {
            rows: n_rows,
            duplicates_dropped: dropped,
        },
    ))
}

/// Options controlling item-metadata loading.
#[derive(Debug, Clone)]
pub struct MetaOptions {
    /// Infer availability for items missing from the file (or with empty day
    /// cells) from their observed event days.
    pub infer_missing: bool,
    /// Days added past the last observed day when inferring maturity.
    pub maturity_margin: u32,
}

impl Default for MetaOptions {
    fn default() -> Self {
        MetaOptions {
            infer_missing: true,
            maturity_margin: 30,
        }
    }
}

/// Loads the items CSV and builds the catalog aligned to `log.items`.
///
/// Items absent from the file (or with empty day cells) get availability
/// inferred from their event days when `infer_missing` is set; otherwise a
/// missing-metadata error lists the offending item ids.
pub fn load_item_meta(path: &Path, log: &EventLog, opts: &MetaOptions) -> Result<ItemCatalog> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    {
        let headers = rdr.headers()?;
        let expected = [
            "item_id", "rating", "sector", "industry", "country", "currency", "grade",
            "seniority", "issue_day", "maturity_day",
        ];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(TgcfError::Parse {
                line: 1,
                msg: format!(
                    "expected header `{}`, got `{}`",
                    expected.join(","),
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }

    struct FileRow {
        labels: [String; 7],
        issue: Option<u32>,
        maturity: Option<u32>,
    }
    let mut by_id: std::collections::HashMap<String, FileRow> = std::collections::HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != 10 {
            return Err(TgcfError::Parse {
                line,
                msg: format!("expected 10 columns, got {}", rec.len()),
            });
        }
        let parse_day = |s: &str| -> Result<Option<u32>> {
            let s = s.trim();
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<u32>().map(Some).map_err(|_| TgcfError::Parse {
                    line,
                    msg: format!("day `{s}` is not a non-negative integer"),
                })
            }
        };
        let labels: [String; 7] = std::array::from_fn(|f| {
            let s = rec[f + 1].trim();
            if s.is_empty() { UNK.to_string() } else { s.to_string() }
        });
        let row = FileRow {
            labels,
            issue: parse_day(&rec[8])?,
            maturity: parse_day(&rec[9])?,
        };
        if let (Some(a), Some(b)) = (row.issue, row.maturity) {
            if a > b {
                return Err(TgcfError::Parse {
                    line,
                    msg: format!("issue_day {a} > maturity_day {b}"),
                });
            }
        }
        by_id.insert(rec[0].trim().to_string(), row);
    }

    // First/last observed day per item, for inference.
    let mut first_seen = vec![u32::MAX; log.items.len()];
    let mut last_seen = vec![0u32; log.items.len()];
    for e in &log.events {
        let i = e.item as usize;
        first_seen[i] = first_seen[i].min(e.day);
        last_seen[i] = last_seen[i].max(e.day);
    }

    let mut missing = Vec::new();
    let mut meta = Vec::with_capacity(log.items.len());
    for (idx, key) in log.items.keys().iter().enumerate() {
        let row = by_id.get(key);
        let needs_inference = match row {
            None => true,
            Some(r) => r.issue.is_none() || r.maturity.is_none(),
        };
        if needs_inference && (!opts.infer_missing || first_seen[idx] == u32::MAX) {
            missing.push(key.clone());
            continue;
        }
        let labels = row
            .map(|r| r.labels.clone())
            .unwrap_or_else(|| std::array::from_fn(|_| UNK.to_string()));
        let issue = row
            .and_then(|r| r.issue)
            .unwrap_or(first_seen[idx]);
        let maturity = row
            .and_then(|r| r.maturity)
            .unwrap_or_else(|| last_seen[idx] + opts.maturity_margin);
        meta.push(ItemMeta {
            item_id: key.clone(),
            labels,
            issue_day: issue,
            maturity_day: maturity,
        });
    }
    if !missing.is_empty() {
        let count = missing.len();
        missing.truncate(10);
        return Err(TgcfError::MissingMetadata { count, sample: missing });
    }
    Ok(ItemCatalog::from_meta(meta))
}

/// Splits the timeline into train = [0, train_end), val = [train_end,
/// val_end), test = [val_end, last_day + 1).
pub fn chronological_split(log: &EventLog, train_end_day: u32, val_end_day: u32) -> Result<Split> {
    let last_day = log
        .last_day()
        .ok_or_else(|| TgcfError::EmptyDataset("cannot split an empty event log".into()))?;
    if !(0 < train_end_day && train_end_day < val_end_day && val_end_day <= last_day) {
        return Err(TgcfError::Config(format!(
            "split boundaries must satisfy 0 < train_end ({train_end_day}) < val_end ({val_end_day}) <= last day ({last_day})"
        )));
    }
    let split = Split {
        train: 0..train_end_day,
        val: train_end_day..val_end_day,
        test: val_end_day..last_day + 1,
    };
    for (name, r) in [("train", &split.train), ("validation", &split.val), ("test", &split.test)] {
        if log.events_in(r.clone()).is_empty() {
            return Err(TgcfError::Config(format!("{name} split [{}, {}) contains no events", r.start, r.end)));
        }
    }
    Ok(split)
}
