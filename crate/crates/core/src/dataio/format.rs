//! On-disk formats.
//!
//! Canonical dataset:
//!
//! ```text
//! users=<n> items=<m> pairs=<p>
//! <user_id>\t<item_id>          (p lines, sorted by user then item)
//! ```
//!
//! Popularity sidecar: a header line `item_id\tcount\ti_pop\tis_popular`
//! followed by one row per item id (`is_popular` is `0` or `1`).
//!
//! Key map: one `<id>\t<key>` line per id.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataio::{InteractionDataset, PopularityStats};
use crate::error::{Error, Result};

const POPULARITY_HEADER: &str = "item_id\tcount\ti_pop\tis_popular";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open_lines(path: &Path) -> Result<std::io::Lines<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file).lines())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn write_dataset(path: &Path, data: &InteractionDataset) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "users={} items={} pairs={}",
        data.num_users(),
        data.num_items(),
        data.len()
    )
    .map_err(io)?;
    for &(u, i) in data.pairs() {
        writeln!(w, "{u}\t{i}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a canonical dataset; keys are taken from the decimal ids.
pub fn read_dataset(path: &Path) -> Result<InteractionDataset> {
    let mut lines = open_lines(path)?;
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(path, 1, "missing header line")),
    };
    let mut counts = [None::<usize>; 3];
    for tok in header.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(path, 1, format!("bad header token {tok:?}")))?;
        let slot = match key {
            "users" => 0,
            "items" => 1,
            "pairs" => 2,
            _ => return Err(parse_err(path, 1, format!("unknown header key {key:?}"))),
        };
        counts[slot] = Some(
            value
                .parse()
                .map_err(|_| parse_err(path, 1, format!("bad count {value:?}")))?,
        );
    }
    let [Some(nu), Some(ni), Some(np)] = counts else {
        return Err(parse_err(
            path,
            1,
            "header must carry users=, items= and pairs=",
        ));
    };
    let mut pairs = Vec::with_capacity(np);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (u, i) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, line_no, "expected user_id<TAB>item_id"))?;
        let u: u32 = u
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad user id {u:?}")))?;
        let i: u32 = i
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad item id {i:?}")))?;
        pairs.push((u, i));
    }
    let data = InteractionDataset::from_pairs(nu, ni, pairs)?;
    if data.len() != np {
        return Err(parse_err(
            path,
            1,
            format!("header declares {np} pairs, found {} distinct", data.len()),
        ));
    }
    Ok(data)
}

pub fn write_key_map(path: &Path, keys: &[String]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for (id, key) in keys.iter().enumerate() {
        writeln!(w, "{id}\t{key}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_key_map(path: &Path) -> Result<Vec<String>> {
    let mut keys = Vec::new();
    for (idx, line) in open_lines(path)?.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let (id, key) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, idx + 1, "expected id<TAB>key"))?;
        if id.parse::<usize>().ok() != Some(keys.len()) {
            return Err(parse_err(
                path,
                idx + 1,
                format!("ids must be contiguous, got {id:?}"),
            ));
        }
        keys.push(key.to_string());
    }
    Ok(keys)
}

pub fn write_popularity(path: &Path, stats: &PopularityStats) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{POPULARITY_HEADER}").map_err(io)?;
    for item in 0..stats.num_items() {
        writeln!(
            w,
            "{item}\t{}\t{}\t{}",
            stats.counts[item],
            stats.i_pop[item],
            u8::from(stats.is_popular[item])
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a popularity sidecar. Derived columns are recomputed from the counts
/// and checked against the file.
pub fn read_popularity(path: &Path) -> Result<PopularityStats> {
    let mut lines = open_lines(path)?;
    match lines.next() {
        Some(Ok(h)) if h == POPULARITY_HEADER => {}
        Some(Err(e)) => return Err(Error::io(path, e)),
        _ => return Err(parse_err(path, 1, "missing popularity header")),
    }
    let mut counts = Vec::new();
    let mut flags = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(path, line_no, "expected 4 tab-separated fields"));
        }
        if fields[0].parse::<usize>().ok() != Some(counts.len()) {
            return Err(parse_err(path, line_no, "item ids must be contiguous"));
        }
        counts.push(
            fields[1]
                .parse::<usize>()
                .map_err(|_| parse_err(path, line_no, "bad count"))?,
        );
        flags.push(fields[3] == "1");
    }
    let stats = PopularityStats::from_counts(counts)?;
    if stats.is_popular != flags {
        return Err(parse_err(
            path,
            1,
            "is_popular column disagrees with counts",
        ));
    }
    Ok(stats)
}
