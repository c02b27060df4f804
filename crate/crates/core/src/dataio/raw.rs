use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use crate::dataio::InteractionDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Tsv,
}

impl InputFormat {
    pub fn delimiter(self) -> char {
        match self {
            InputFormat::Csv => ',',
            InputFormat::Tsv => '\t',
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "tsv" => Ok(InputFormat::Tsv),
            other => Err(Error::InvalidArgument(format!(
                "unknown input format {other:?} (expected csv or tsv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    /// Rating / click value; `1.0` when the column is absent.
    pub value: f64,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawInteractions {
    pub records: Vec<RawRecord>,
}

impl RawInteractions {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn load_interactions(path: &Path, format: InputFormat) -> Result<RawInteractions> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(BufReader::new(file), format, path)
}

/// Parses delimited `user,item[,value[,timestamp]]` lines.
///
/// The first data line is treated as a header when its third field is present
/// and not numeric. Blank lines are ignored.
pub fn parse_interactions<R: BufRead>(
    reader: R,
    format: InputFormat,
    path: &Path,
) -> Result<RawInteractions> {
    let delim = format.delimiter();
    let mut records = Vec::new();
    let mut seen_first = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(format!(
                "expected at least 2 non-empty fields, got {:?}",
                line
            )));
        }
        let first = !seen_first;
        seen_first = true;
        let value = match fields.get(2) {
            None | Some(&"") => 1.0,
            Some(s) => match s.parse::<f64>() {
                Ok(v) => v,
                Err(_) if first => continue,
                Err(_) => return Err(parse_err(format!("non-numeric value field {s:?}"))),
            },
        };
        let timestamp = match fields.get(3) {
            None | Some(&"") => None,
            Some(s) => Some(
                s.parse::<i64>()
                    .map_err(|_| parse_err(format!("non-integer timestamp {s:?}")))?,
            ),
        };
        records.push(RawRecord {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            value,
            timestamp,
        });
    }
    Ok(RawInteractions { records })
}

/// Maps every record to a positive interaction, collapsing duplicates.
///
/// Ids follow lexicographic key order so the result does not depend on the
/// order of records in the input.
pub fn binarize(raw: &RawInteractions) -> InteractionDataset {
    let users: BTreeSet<&str> = raw.records.iter().map(|r| r.user.as_str()).collect();
    let items: BTreeSet<&str> = raw.records.iter().map(|r| r.item.as_str()).collect();
    let user_keys: Vec<String> = users.into_iter().map(str::to_string).collect();
    let item_keys: Vec<String> = items.into_iter().map(str::to_string).collect();
    let pairs: Vec<(u32, u32)> = raw
        .records
        .iter()
        .map(|r| {
            let u = user_keys.binary_search(&r.user).expect("user key indexed");
            let i = item_keys.binary_search(&r.item).expect("item key indexed");
            (u as u32, i as u32)
        })
        .collect();
    InteractionDataset::with_keys(user_keys, item_keys, pairs)
        .expect("ids in range by construction")
}
