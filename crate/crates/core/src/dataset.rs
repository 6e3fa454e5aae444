//! Rating ingestion, the sparse rating matrix and the per-user temporal split.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Rating scale maximum for MovieLens data.
pub const DEFAULT_SCALE: u8 = 5;

pub const DEFAULT_TEST_FRACTION: f64 = 0.10;

const SPLIT_MAGIC: &str = "#erbm-split v1";
pub const TRAIN_FILE: &str = "train.tsv";
pub const TEST_FILE: &str = "test.tsv";

/// A rating with ids exactly as they appear in the source file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RawRating {
    pub user: u64,
    pub item: u64,
    pub rating: u8,
    pub timestamp: i64,
}

/// A rating addressed by dense internal indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RatingRecord {
    pub user: usize,
    pub item: usize,
    pub rating: u8,
    pub timestamp: i64,
}

/// Bidirectional map between external ids and dense 0-based indices.
///
/// Indices follow ascending external id order, so the map is independent of
/// line order in the source file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl IdMap {
    pub fn from_ids(ids: impl IntoIterator<Item = u64>) -> Self {
        let mut external: Vec<u64> = ids.into_iter().collect();
        external.sort_unstable();
        external.dedup();
        let index = external.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        IdMap { external, index }
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn external(&self, index: usize) -> u64 {
        self.external[index]
    }

    pub fn index(&self, external: u64) -> Option<usize> {
        self.index.get(&external).copied()
    }
}

/// Maps a raw rating onto the unit interval.
pub fn normalize(rating: u8, scale: u8) -> Result<f64> {
    if rating == 0 || rating > scale {
        return Err(Error::RatingOutOfScale {
            rating: rating.into(),
            scale,
        });
    }
    Ok(f64::from(rating) / f64::from(scale))
}

pub fn denormalize(value: f64, scale: u8) -> f64 {
    value * f64::from(scale)
}

/// A list of explicit ratings with the id maps needed to write them back out.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingTable {
    records: Vec<RatingRecord>,
    users: IdMap,
    items: IdMap,
    scale: u8,
}

impl RatingTable {
    pub fn from_raw(raw: &[RawRating], scale: u8) -> Result<Self> {
        let users = IdMap::from_ids(raw.iter().map(|r| r.user));
        let items = IdMap::from_ids(raw.iter().map(|r| r.item));
        Self::with_maps(raw, users, items, scale)
    }

    fn with_maps(raw: &[RawRating], users: IdMap, items: IdMap, scale: u8) -> Result<Self> {
        let mut records = Vec::with_capacity(raw.len());
        for r in raw {
            normalize(r.rating, scale)?;
            let user = users.index(r.user).expect("user id in map");
            let item = items.index(r.item).expect("item id in map");
            records.push(RatingRecord {
                user,
                item,
                rating: r.rating,
                timestamp: r.timestamp,
            });
        }
        Ok(RatingTable {
            records,
            users,
            items,
            scale,
        })
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    pub fn to_raw(&self) -> Vec<RawRating> {
        self.records
            .iter()
            .map(|r| RawRating {
                user: self.users.external(r.user),
                item: self.items.external(r.item),
                rating: r.rating,
                timestamp: r.timestamp,
            })
            .collect()
    }

    /// Writes the table as tab-separated `user item rating timestamp` lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in self.to_raw() {
            writeln!(out, "{}\t{}\t{}\t{}", r.user, r.item, r.rating, r.timestamp)?;
        }
        Ok(())
    }
}

/// Reads `user item rating timestamp` lines. Blank lines and lines starting
/// with `#` are skipped.
pub fn read_raw_ratings<R: BufRead>(reader: R, separator: char, scale: u8) -> Result<Vec<RawRating>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(separator).map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let int = |name: &str, s: &str| -> Result<i64> {
            s.parse::<i64>()
                .map_err(|_| Error::parse(lineno, format!("{name} {s:?} is not an integer")))
        };
        let id = |name: &str, s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| Error::parse(lineno, format!("{name} {s:?} is not a non-negative integer")))
        };
        let user = id("user", fields[0])?;
        let item = id("item", fields[1])?;
        let rating = int("rating", fields[2])?;
        let timestamp = int("timestamp", fields[3])?;
        if rating < 1 || rating > i64::from(scale) {
            return Err(Error::parse(
                lineno,
                format!("rating {rating} is outside the scale 1..={scale}"),
            ));
        }
        out.push(RawRating {
            user,
            item,
            rating: rating as u8,
            timestamp,
        });
    }
    Ok(out)
}

/// Parses a MovieLens `u.data`-style stream into a table with dense indices.
pub fn parse_ratings<R: BufRead>(reader: R, separator: char, scale: u8) -> Result<RatingTable> {
    let raw = read_raw_ratings(reader, separator, scale)?;
    RatingTable::from_raw(&raw, scale)
}

pub fn load_ratings(path: &Path, separator: char, scale: u8) -> Result<RatingTable> {
    let file = File::open(path)?;
    parse_ratings(BufReader::new(file), separator, scale)
}

/// Sparse explicit ratings, one sorted row per user. Unrated entries are absent.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingMatrix {
    n_items: usize,
    scale: u8,
    rows: Vec<Vec<(usize, u8)>>,
}

impl RatingMatrix {
    pub fn from_records(
        n_users: usize,
        n_items: usize,
        scale: u8,
        records: &[RatingRecord],
    ) -> Result<Self> {
        let mut rows = vec![Vec::new(); n_users];
        for r in records {
            if r.user >= n_users || r.item >= n_items {
                return Err(Error::Config(format!(
                    "record ({}, {}) outside a {n_users}x{n_items} matrix",
                    r.user, r.item
                )));
            }
            normalize(r.rating, scale)?;
            rows[r.user].push((r.item, r.rating));
        }
        for (user, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(item, _)| item);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateRating { user, item: w[0].0 });
            }
        }
        Ok(RatingMatrix {
            n_items,
            scale,
            rows,
        })
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    pub fn n_ratings(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// The user's ratings, sorted by item.
    pub fn row(&self, user: usize) -> &[(usize, u8)] {
        &self.rows[user]
    }

    pub fn get(&self, user: usize, item: usize) -> Option<u8> {
        let row = &self.rows[user];
        row.binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|pos| row[pos].1)
    }

    pub fn is_rated(&self, user: usize, item: usize) -> bool {
        self.get(user, item).is_some()
    }

    /// The user's ratings divided by the scale maximum.
    pub fn normalized_row(&self, user: usize) -> Vec<(usize, f64)> {
        let scale = f64::from(self.scale);
        self.rows[user]
            .iter()
            .map(|&(i, r)| (i, f64::from(r) / scale))
            .collect()
    }

    /// Number of ratings per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items];
        for row in &self.rows {
            for &(i, _) in row {
                counts[i] += 1;
            }
        }
        counts
    }

    pub fn user_mean(&self, user: usize) -> Option<f64> {
        let row = &self.rows[user];
        if row.is_empty() {
            return None;
        }
        let sum: u64 = row.iter().map(|&(_, r)| u64::from(r)).sum();
        Some(sum as f64 / row.len() as f64)
    }

    pub fn global_mean(&self) -> Option<f64> {
        let n = self.n_ratings();
        if n == 0 {
            return None;
        }
        let sum: u64 = self
            .rows
            .iter()
            .flatten()
            .map(|&(_, r)| u64::from(r))
            .sum();
        Some(sum as f64 / n as f64)
    }
}

/// Train/test partition of a rating table.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: RatingMatrix,
    pub train_table: RatingTable,
    pub test: RatingTable,
    pub test_fraction: f64,
}

impl DatasetSplit {
    pub fn users(&self) -> &IdMap {
        self.train_table.users()
    }

    pub fn items(&self) -> &IdMap {
        self.train_table.items()
    }

    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    pub fn scale(&self) -> u8 {
        self.train.scale()
    }

    /// Test records grouped by user, each group in record order.
    pub fn test_by_user(&self) -> Vec<Vec<RatingRecord>> {
        let mut groups = vec![Vec::new(); self.n_users()];
        for r in self.test.records() {
            groups[r.user].push(*r);
        }
        groups
    }

    /// Assembles a split from already-partitioned raw ratings, building one
    /// id space over both halves.
    pub fn from_parts(
        train: &[RawRating],
        test: &[RawRating],
        test_fraction: f64,
        scale: u8,
    ) -> Result<Self> {
        let users = IdMap::from_ids(train.iter().chain(test).map(|r| r.user));
        let items = IdMap::from_ids(train.iter().chain(test).map(|r| r.item));
        let train_table = RatingTable::with_maps(train, users.clone(), items.clone(), scale)?;
        let test = RatingTable::with_maps(test, users, items, scale)?;
        let matrix = RatingMatrix::from_records(
            train_table.n_users(),
            train_table.n_items(),
            scale,
            train_table.records(),
        )?;
        Ok(DatasetSplit {
            train: matrix,
            train_table,
            test,
            test_fraction,
        })
    }

    pub fn header(&self) -> String {
        format!("{SPLIT_MAGIC} test_fraction={}", self.test_fraction)
    }

    /// Writes `train.tsv` and `test.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, table) in [(TRAIN_FILE, &self.train_table), (TEST_FILE, &self.test)] {
            let mut out = BufWriter::new(File::create(dir.join(name))?);
            writeln!(out, "{}", self.header())?;
            table.write_tsv(&mut out)?;
            out.flush()?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, scale: u8) -> Result<Self> {
        let (train_fraction, train) = read_split_file(&dir.join(TRAIN_FILE), scale)?;
        let (test_fraction, test) = read_split_file(&dir.join(TEST_FILE), scale)?;
        if train_fraction != test_fraction {
            return Err(Error::format(
                "split",
                format!("train and test headers disagree ({train_fraction} vs {test_fraction})"),
            ));
        }
        Self::from_parts(&train, &test, test_fraction, scale)
    }
}

fn read_split_file(path: &Path, scale: u8) -> Result<(f64, Vec<RawRating>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let fraction = parse_split_header(header.trim())?;
    let raw = read_raw_ratings(reader, '\t', scale).map_err(|e| match e {
        // line numbers are relative to the body; shift past the header
        Error::Parse { line, message } => Error::Parse {
            line: line + 1,
            message,
        },
        other => other,
    })?;
    Ok((fraction, raw))
}

fn parse_split_header(header: &str) -> Result<f64> {
    let rest = header
        .strip_prefix(SPLIT_MAGIC)
        .ok_or_else(|| Error::format("split", format!("missing header {SPLIT_MAGIC:?}")))?;
    rest.trim()
        .strip_prefix("test_fraction=")
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| Error::format("split", format!("bad header {header:?}")))
}

/// Number of a user's ratings held out for testing.
///
/// `ceil(fraction * count)`, except that at least one rating always stays in
/// training so the user can still be scored.
pub fn holdout_count(count: usize, fraction: f64) -> usize {
    if count <= 1 {
        return 0;
    }
    // The epsilon keeps products like 0.1 * 30 = 3.0000000000000004 from rounding up.
    let wanted = (count as f64 * fraction - 1e-9).ceil().max(0.0) as usize;
    wanted.min(count - 1)
}

/// Holds out each user's most recent ratings.
///
/// Ratings are ordered by timestamp; among equal timestamps the larger item
/// index counts as more recent.
pub fn temporal_split(table: &RatingTable, test_fraction: f64) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_user: Vec<Vec<RatingRecord>> = vec![Vec::new(); table.n_users()];
    for r in table.records() {
        by_user[r.user].push(*r);
    }

    let mut train = Vec::with_capacity(table.len());
    let mut test = Vec::new();
    for mut records in by_user {
        records.sort_by_key(|r| (r.timestamp, r.item));
        let cut = records.len() - holdout_count(records.len(), test_fraction);
        train.extend_from_slice(&records[..cut]);
        test.extend_from_slice(&records[cut..]);
    }

    let matrix = RatingMatrix::from_records(table.n_users(), table.n_items(), table.scale(), &train)?;
    let subtable = |records: Vec<RatingRecord>| RatingTable {
        records,
        users: table.users.clone(),
        items: table.items.clone(),
        scale: table.scale,
    };
    Ok(DatasetSplit {
        train: matrix,
        train_table: subtable(train),
        test: subtable(test),
        test_fraction,
    })
}
