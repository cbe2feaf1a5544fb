//! Raw dataset parsing, activity filtering, dense indexing and the
//! chronological train/validation/test split.
//!
//! Every rating is treated as an implicit positive; the rating value is parsed
//! only so that malformed lines are detected.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// MovieLens 100K `u.data`: `user<TAB>item<TAB>rating<TAB>timestamp`.
    Ml100k,
    /// MovieLens 1M `ratings.dat`: `user::item::rating::timestamp`.
    Ml1m,
    /// Amazon ratings CSV: `user,item,rating,timestamp`.
    AmazonCsv,
}

impl DatasetFormat {
    fn split_line<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            DatasetFormat::Ml100k => line.split('\t').collect(),
            DatasetFormat::Ml1m => line.split("::").collect(),
            DatasetFormat::AmazonCsv => line.split(',').collect(),
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml100k" => Ok(DatasetFormat::Ml100k),
            "ml1m" => Ok(DatasetFormat::Ml1m),
            "amazon-csv" => Ok(DatasetFormat::AmazonCsv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Ml100k => "ml100k",
            DatasetFormat::Ml1m => "ml1m",
            DatasetFormat::AmazonCsv => "amazon-csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub user_key: String,
    pub item_key: String,
    pub rating: f64,
    pub timestamp: i64,
    pub file_order: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub events: Vec<RawEvent>,
    pub malformed: usize,
}

/// Parses one data line. `None` means the line is malformed.
pub fn parse_line(format: DatasetFormat, line: &str, file_order: u64) -> Option<RawEvent> {
    let line = line.trim_end_matches(['\r', '\n']);
    let fields = format.split_line(line);
    if fields.len() != 4 {
        return None;
    }
    let user_key = fields[0].trim();
    let item_key = fields[1].trim();
    if user_key.is_empty() || item_key.is_empty() {
        return None;
    }
    let rating: f64 = fields[2].trim().parse().ok()?;
    let ts_field = fields[3].trim();
    // Some Amazon dumps write integral timestamps as floats.
    let timestamp = match ts_field.parse::<i64>() {
        Ok(t) => t,
        Err(_) => {
            let t: f64 = ts_field.parse().ok()?;
            if !t.is_finite() || t.fract() != 0.0 {
                return None;
            }
            t as i64
        }
    };
    if timestamp < 0 || !rating.is_finite() {
        return None;
    }
    Some(RawEvent {
        user_key: user_key.to_string(),
        item_key: item_key.to_string(),
        rating,
        timestamp,
        file_order,
    })
}

/// Reads a raw dataset file. Blank lines are skipped silently; every other
/// line that does not parse is counted as malformed.
pub fn parse_dataset(path: &Path, format: DatasetFormat) -> Result<ParseOutcome> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = ParseOutcome::default();
    for (idx, line) in reader.split(b'\n').enumerate() {
        let bytes = line.map_err(|e| Error::io(path, e))?;
        // Amazon exports occasionally contain latin-1 bytes in keys.
        let line = String::from_utf8_lossy(&bytes);
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(format, &line, idx as u64) {
            Some(ev) => out.events.push(ev),
            None => out.malformed += 1,
        }
    }
    if out.events.is_empty() {
        return Err(Error::NoParseableLines {
            path: path.to_path_buf(),
            malformed: out.malformed,
        });
    }
    Ok(out)
}

fn count_keys(events: &[RawEvent]) -> (HashMap<&str, usize>, HashMap<&str, usize>) {
    let mut users: HashMap<&str, usize> = HashMap::new();
    let mut items: HashMap<&str, usize> = HashMap::new();
    for ev in events {
        *users.entry(ev.user_key.as_str()).or_default() += 1;
        *items.entry(ev.item_key.as_str()).or_default() += 1;
    }
    (users, items)
}

fn filter_once(events: Vec<RawEvent>, min_count: usize) -> Vec<RawEvent> {
    let keep: Vec<bool> = {
        let (users, items) = count_keys(&events);
        events
            .iter()
            .map(|ev| {
                users[ev.user_key.as_str()] >= min_count && items[ev.item_key.as_str()] >= min_count
            })
            .collect()
    };
    events
        .into_iter()
        .zip(keep)
        .filter_map(|(ev, k)| k.then_some(ev))
        .collect()
}

/// Drops events whose user or item has fewer than `min_count` interactions.
///
/// Counts are taken once over the input. Survivors are not re-checked, so a
/// user can end up with fewer than `min_count` events after its items were
/// dropped. [`filter_k_core`] iterates to a fixpoint instead.
pub fn filter_min_count(events: Vec<RawEvent>, min_count: usize) -> Result<Vec<RawEvent>> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let out = filter_once(events, min_count);
    if out.is_empty() {
        return Err(Error::Empty(format!(
            "no events survive filtering with min_count={min_count}"
        )));
    }
    Ok(out)
}

/// Iterative variant of [`filter_min_count`]: repeats until every surviving
/// user and item has at least `min_count` events.
pub fn filter_k_core(mut events: Vec<RawEvent>, min_count: usize) -> Result<Vec<RawEvent>> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    loop {
        let before = events.len();
        events = filter_once(events, min_count);
        if events.len() == before || events.is_empty() {
            break;
        }
    }
    if events.is_empty() {
        return Err(Error::Empty(format!(
            "no events survive k-core filtering with min_count={min_count}"
        )));
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub user: u32,
    pub item: u32,
    pub timestamp: i64,
    pub order: u64,
}

/// Chronologically ordered events over `num_users` x `num_items` dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionLog {
    pub events: Vec<Event>,
    pub num_users: usize,
    pub num_items: usize,
}

impl InteractionLog {
    pub fn new(events: Vec<Event>, num_users: usize, num_items: usize) -> Result<Self> {
        for ev in &events {
            check_index("user", ev.user as usize, num_users)?;
            check_index("item", ev.item as usize, num_items)?;
        }
        Ok(Self {
            events,
            num_users,
            num_items,
        })
    }

    pub fn empty(num_users: usize, num_items: usize) -> Self {
        Self {
            events: Vec::new(),
            num_users,
            num_items,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Sub-log over `range` sharing this log's dimensions.
    pub fn slice(&self, range: std::ops::Range<usize>) -> InteractionLog {
        InteractionLog {
            events: self.events[range].to_vec(),
            num_users: self.num_users,
            num_items: self.num_items,
        }
    }

    pub fn concat(&self, other: &InteractionLog) -> InteractionLog {
        let mut events = self.events.clone();
        events.extend_from_slice(&other.events);
        InteractionLog {
            events,
            num_users: self.num_users.max(other.num_users),
            num_items: self.num_items.max(other.num_items),
        }
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index >= size {
        return Err(Error::OutOfRange { what, index, size });
    }
    Ok(())
}

/// External key <-> dense index maps for users and items.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_keys(users: Vec<String>, items: Vec<String>) -> Result<Self> {
        let user_index = index_keys(&users, "user")?;
        let item_index = index_keys(&items, "item")?;
        Ok(Self {
            users,
            items,
            user_index,
            item_index,
        })
    }

    fn intern_user(&mut self, key: &str) -> u32 {
        intern(&mut self.users, &mut self.user_index, key)
    }

    fn intern_item(&mut self, key: &str) -> u32 {
        intern(&mut self.items, &mut self.item_index, key)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_index(&self, key: &str) -> Option<u32> {
        self.user_index.get(key).copied()
    }

    pub fn item_index(&self, key: &str) -> Option<u32> {
        self.item_index.get(key).copied()
    }

    pub fn user_key(&self, idx: u32) -> Option<&str> {
        self.users.get(idx as usize).map(String::as_str)
    }

    pub fn item_key(&self, idx: u32) -> Option<&str> {
        self.items.get(idx as usize).map(String::as_str)
    }

    pub fn user_keys(&self) -> &[String] {
        &self.users
    }

    pub fn item_keys(&self) -> &[String] {
        &self.items
    }

    /// Hex SHA-256 over both key lists; binds checkpoints to a prepared dataset.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("users {}\n", self.users.len()));
        for k in &self.users {
            h.update(k.as_bytes());
            h.update(b"\n");
        }
        h.update(format!("items {}\n", self.items.len()));
        for k in &self.items {
            h.update(k.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

fn intern(keys: &mut Vec<String>, index: &mut HashMap<String, u32>, key: &str) -> u32 {
    if let Some(&i) = index.get(key) {
        return i;
    }
    let i = keys.len() as u32;
    keys.push(key.to_string());
    index.insert(key.to_string(), i);
    i
}

fn index_keys(keys: &[String], what: &str) -> Result<HashMap<String, u32>> {
    let mut map = HashMap::with_capacity(keys.len());
    for (i, k) in keys.iter().enumerate() {
        if map.insert(k.clone(), i as u32).is_some() {
            return Err(Error::Format(format!("duplicate {what} key `{k}`")));
        }
    }
    Ok(map)
}

/// Sorts by (timestamp, file_order) and assigns dense indices in order of
/// first appearance in the sorted stream.
pub fn index_and_sort(mut events: Vec<RawEvent>) -> Result<(InteractionLog, Vocabulary)> {
    if events.is_empty() {
        return Err(Error::Empty("no events to index".into()));
    }
    events.sort_by_key(|e| (e.timestamp, e.file_order));
    let mut vocab = Vocabulary::default();
    let indexed = events
        .iter()
        .map(|ev| Event {
            user: vocab.intern_user(&ev.user_key),
            item: vocab.intern_item(&ev.item_key),
            timestamp: ev.timestamp,
            order: ev.file_order,
        })
        .collect();
    let log = InteractionLog {
        events: indexed,
        num_users: vocab.num_users(),
        num_items: vocab.num_items(),
    };
    Ok((log, vocab))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitLog {
    pub train: InteractionLog,
    pub validation: InteractionLog,
    pub test: InteractionLog,
}

impl SplitLog {
    pub fn num_users(&self) -> usize {
        self.train.num_users
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items
    }

    pub fn total_len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

/// Sizes of the (train, validation, test) prefix/middle/suffix for `n` events.
pub fn split_sizes(n: usize, train_frac: f64, val_frac: f64) -> Result<(usize, usize, usize)> {
    if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::Config(format!(
            "invalid split fractions train={train_frac} validation={val_frac}"
        )));
    }
    let train = (train_frac * n as f64).floor() as usize;
    let val = (val_frac * n as f64).floor() as usize;
    if val_frac > 0.0 && val == 0 {
        return Err(Error::DegenerateSplit(format!(
            "{n} events give an empty validation split"
        )));
    }
    if train + val >= n {
        return Err(Error::DegenerateSplit(format!(
            "{n} events give an empty test split"
        )));
    }
    Ok((train, val, n - train - val))
}

pub fn chronological_split(log: &InteractionLog, train_frac: f64, val_frac: f64) -> Result<SplitLog> {
    let (train, val, _) = split_sizes(log.len(), train_frac, val_frac)?;
    Ok(SplitLog {
        train: log.slice(0..train),
        validation: log.slice(train..train + val),
        test: log.slice(train + val..log.len()),
    })
}

/// A dataset after `prepare`: the canonical sorted log plus its vocabulary.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub log: InteractionLog,
    pub vocab: Vocabulary,
}

pub const EVENTS_FILE: &str = "events.tsv";
pub const USERS_FILE: &str = "users.txt";
pub const ITEMS_FILE: &str = "items.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    SinglePass,
    KCore,
}

#[derive(Debug, Clone)]
pub struct PrepareStats {
    pub lines_parsed: usize,
    pub malformed: usize,
    pub users: usize,
    pub items: usize,
    pub events: usize,
    pub unique_timestamps: usize,
}

/// Parse, filter and index a raw file in one go.
pub fn prepare(
    path: &Path,
    format: DatasetFormat,
    min_count: usize,
    mode: FilterMode,
) -> Result<(PreparedDataset, PrepareStats)> {
    let parsed = parse_dataset(path, format)?;
    let lines_parsed = parsed.events.len();
    let filtered = match mode {
        FilterMode::SinglePass => filter_min_count(parsed.events, min_count)?,
        FilterMode::KCore => filter_k_core(parsed.events, min_count)?,
    };
    let (log, vocab) = index_and_sort(filtered)?;
    let mut ts: Vec<i64> = log.events.iter().map(|e| e.timestamp).collect();
    ts.dedup();
    let stats = PrepareStats {
        lines_parsed,
        malformed: parsed.malformed,
        users: log.num_users,
        items: log.num_items,
        events: log.len(),
        unique_timestamps: ts.len(),
    };
    Ok((PreparedDataset { log, vocab }, stats))
}

impl PreparedDataset {
    /// Writes `events.tsv` (`user_idx<TAB>item_idx<TAB>timestamp`), `users.txt`
    /// and `items.txt` (one key per line, line number = dense index).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let events_path = dir.join(EVENTS_FILE);
        write_lines(&events_path, self.log.events.iter().map(|e| {
            format!("{}\t{}\t{}", e.user, e.item, e.timestamp)
        }))?;
        write_lines(&dir.join(USERS_FILE), self.vocab.user_keys().iter().cloned())?;
        write_lines(&dir.join(ITEMS_FILE), self.vocab.item_keys().iter().cloned())?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let users = read_lines(&dir.join(USERS_FILE))?;
        let items = read_lines(&dir.join(ITEMS_FILE))?;
        let vocab = Vocabulary::from_keys(users, items)?;
        let events_path = dir.join(EVENTS_FILE);
        let mut events = Vec::new();
        for (idx, line) in read_lines(&events_path)?.into_iter().enumerate() {
            let bad = || Error::Format(format!("{}:{}: bad canonical line", events_path.display(), idx + 1));
            let mut parts = line.split('\t');
            let user: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let item: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let timestamp: i64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if parts.next().is_some() {
                return Err(bad());
            }
            events.push(Event {
                user,
                item,
                timestamp,
                order: idx as u64,
            });
        }
        let log = InteractionLog::new(events, vocab.num_users(), vocab.num_items())?;
        Ok(Self { log, vocab })
    }
}

fn write_lines(path: &PathBuf, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_lines(path: &PathBuf) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(user: &str, item: &str, t: i64, order: u64) -> RawEvent {
        RawEvent {
            user_key: user.into(),
            item_key: item.into(),
            rating: 1.0,
            timestamp: t,
            file_order: order,
        }
    }

    #[test]
    fn parses_each_format() {
        let ev = parse_line(DatasetFormat::Ml100k, "196\t242\t3\t881250949", 0).unwrap();
        assert_eq!(ev, RawEvent { user_key: "196".into(), item_key: "242".into(), rating: 3.0, timestamp: 881250949, file_order: 0 });

        let ev = parse_line(DatasetFormat::Ml1m, "1::1193::5::978300760", 4).unwrap();
        assert_eq!((ev.user_key.as_str(), ev.item_key.as_str(), ev.rating, ev.timestamp), ("1", "1193", 5.0, 978300760));

        let ev = parse_line(DatasetFormat::AmazonCsv, "A1,B00X,4.0,1400000000", 2).unwrap();
        assert_eq!((ev.user_key.as_str(), ev.item_key.as_str(), ev.rating, ev.timestamp), ("A1", "B00X", 4.0, 1400000000));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_line(DatasetFormat::Ml100k, "196\t242\t3", 0).is_none());
        assert!(parse_line(DatasetFormat::Ml100k, "196\t242\tx\t1", 0).is_none());
        assert!(parse_line(DatasetFormat::AmazonCsv, "A1,B1,4.0,-5", 0).is_none());
        assert!(parse_line(DatasetFormat::Ml1m, "1\t2\t3\t4", 0).is_none());
    }

    #[test]
    fn unknown_format_tag() {
        assert!(matches!("netflix".parse::<DatasetFormat>(), Err(Error::UnknownFormat(_))));
        assert_eq!("amazon-csv".parse::<DatasetFormat>().unwrap(), DatasetFormat::AmazonCsv);
    }

    #[test]
    fn file_parsing_counts_malformed_and_errors_on_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.data");
        fs::write(&p, "1\t2\t3\t10\ngarbage\n\n2\t2\t5\t11\n").unwrap();
        let out = parse_dataset(&p, DatasetFormat::Ml100k).unwrap();
        assert_eq!(out.events.len(), 2);
        assert_eq!(out.malformed, 1);
        assert_eq!(out.events[1].file_order, 3);

        fs::write(&p, "garbage\n").unwrap();
        assert!(matches!(parse_dataset(&p, DatasetFormat::Ml100k), Err(Error::NoParseableLines { malformed: 1, .. })));
        assert!(matches!(parse_dataset(&dir.path().join("missing"), DatasetFormat::Ml100k), Err(Error::Io { .. })));
    }

    #[test]
    fn single_pass_filter_fixture() {
        // item X: 5 events, two of them from user C who has only 3 events.
        let mut evs = Vec::new();
        let mut order = 0;
        let mut push = |u: &str, i: &str| {
            evs.push(raw(u, i, order as i64, order));
            order += 1;
        };
        // users A, B, D, E: 6 events each over items P..U (each of those gets >= 5)
        for u in ["A", "B", "D", "E", "F"] {
            for i in ["P", "Q", "R", "S", "T", "U"] {
                push(u, i);
            }
        }
        push("A", "X");
        push("B", "X");
        push("D", "X");
        push("C", "X");
        push("C", "X");
        push("C", "P");
        // user G: 4 events, all on popular items
        for i in ["P", "Q", "R", "S"] {
            push("G", i);
        }
        let out = filter_min_count(evs, 5).unwrap();
        let x: Vec<_> = out.iter().filter(|e| e.item_key == "X").map(|e| e.user_key.as_str()).collect();
        assert_eq!(x, vec!["A", "B", "D"]);
        assert!(out.iter().all(|e| e.user_key != "C" && e.user_key != "G"));
        // A now has 7 events, all kept
        assert_eq!(out.iter().filter(|e| e.user_key == "A").count(), 7);
    }

    #[test]
    fn k_core_iterates_to_fixpoint() {
        // u1 has 2 events; dropping u1 leaves item b with 1 event.
        let evs = vec![
            raw("u1", "a", 0, 0),
            raw("u1", "b", 1, 1),
            raw("u2", "a", 2, 2),
            raw("u2", "b", 3, 3),
            raw("u3", "a", 4, 4),
            raw("u3", "c", 5, 5),
            raw("u2", "c", 6, 6),
        ];
        let single = filter_min_count(evs.clone(), 2).unwrap();
        assert_eq!(single.len(), 7);
        let evs2 = vec![
            raw("u1", "a", 0, 0),
            raw("u2", "a", 1, 1),
            raw("u2", "b", 2, 2),
            raw("u3", "b", 3, 3),
        ];
        // single pass: u1 (1 event) and u3 (1 event) dropped; u2's events kept.
        assert_eq!(filter_min_count(evs2.clone(), 2).unwrap().len(), 2);
        // k-core: u2 keeps a and b, but now a and b have one event each.
        assert!(filter_k_core(evs2, 2).is_err());
    }

    #[test]
    fn tie_breaking_and_first_appearance_indexing() {
        let evs = vec![raw("A", "i", 5, 7), raw("B", "j", 5, 3), raw("B", "k", 9, 0)];
        let (log, vocab) = index_and_sort(evs).unwrap();
        assert_eq!(log.events[0].order, 3);
        assert_eq!(vocab.user_index("B"), Some(0));
        assert_eq!(vocab.user_index("A"), Some(1));
        assert_eq!((log.num_users, log.num_items), (2, 3));
        assert!(index_and_sort(vec![]).is_err());
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        assert_eq!(split_sizes(10, 0.8, 0.1).unwrap(), (8, 1, 1));
        assert_eq!(split_sizes(99287, 0.8, 0.1).unwrap(), (79429, 9928, 9930));
        assert!(matches!(split_sizes(9, 0.8, 0.1), Err(Error::DegenerateSplit(_))));
        assert!(split_sizes(10, 0.9, 0.2).is_err());
    }

    #[test]
    fn canonical_dir_roundtrip() {
        let evs = vec![raw("A", "i", 5, 0), raw("B", "j", 3, 1), raw("A", "j", 9, 2)];
        let (log, vocab) = index_and_sort(evs).unwrap();
        let ds = PreparedDataset { log, vocab };
        let dir = tempfile::tempdir().unwrap();
        ds.write_dir(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(EVENTS_FILE)).unwrap();
        assert_eq!(text, "0\t0\t3\n1\t1\t5\n1\t0\t9\n");
        let back = PreparedDataset::read_dir(dir.path()).unwrap();
        assert_eq!(back.vocab, ds.vocab);
        assert_eq!(back.vocab.digest(), ds.vocab.digest());
        let pairs: Vec<_> = back.log.events.iter().map(|e| (e.user, e.item, e.timestamp)).collect();
        let orig: Vec<_> = ds.log.events.iter().map(|e| (e.user, e.item, e.timestamp)).collect();
        assert_eq!(pairs, orig);
    }
}
