use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a raw rating file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInteraction {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

impl RawInteraction {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, rating: f64) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            rating,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`, as in MovieLens `u.data`.
    #[serde(rename = "movielens-tab")]
    MovielensTab,
    /// Comma separated with a `user,item,rating[,timestamp]` header.
    #[serde(rename = "csv-generic")]
    CsvGeneric,
}

impl DatasetFormat {
    pub fn id(self) -> &'static str {
        match self {
            DatasetFormat::MovielensTab => "movielens-tab",
            DatasetFormat::CsvGeneric => "csv-generic",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-tab" => Ok(DatasetFormat::MovielensTab),
            "csv-generic" => Ok(DatasetFormat::CsvGeneric),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Vec<RawInteraction>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        DatasetFormat::MovielensTab => parse_movielens(&text, path),
        DatasetFormat::CsvGeneric => parse_csv(&text, path),
    }
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_rating(raw: &str, path: &Path, line: usize) -> Result<f64> {
    let rating: f64 = raw
        .trim()
        .parse()
        .map_err(|_| malformed(path, line, format!("rating `{raw}` is not a number")))?;
    if !rating.is_finite() {
        return Err(malformed(path, line, format!("rating `{raw}` is not finite")));
    }
    Ok(rating)
}

fn parse_timestamp(raw: Option<&str>, path: &Path, line: usize) -> Result<Option<i64>> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => {
            // some exports write timestamps as floats ("881250949.0")
            if let Ok(t) = s.parse::<i64>() {
                return Ok(Some(t));
            }
            match s.parse::<f64>() {
                Ok(t) if t.is_finite() && t.fract() == 0.0 => Ok(Some(t as i64)),
                _ => Err(malformed(path, line, format!("timestamp `{s}` is not an integer"))),
            }
        }
    }
}

pub(crate) fn parse_movielens(text: &str, path: &Path) -> Result<Vec<RawInteraction>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(malformed(
                path,
                line_no,
                format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || item.is_empty() {
            return Err(malformed(path, line_no, "empty user or item id"));
        }
        out.push(RawInteraction {
            user_id: user.to_string(),
            item_id: item.to_string(),
            rating: parse_rating(fields[2], path, line_no)?,
            timestamp: parse_timestamp(fields.get(3).copied(), path, line_no)?,
        });
    }
    Ok(out)
}

pub(crate) fn parse_csv(text: &str, path: &Path) -> Result<Vec<RawInteraction>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if !(names == ["user", "item", "rating"] || names == ["user", "item", "rating", "timestamp"]) {
        return Err(malformed(
            path,
            1,
            format!("expected header `user,item,rating[,timestamp]`, found `{}`", names.join(",")),
        ));
    }
    let width = names.len();

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            malformed(path, line, e.to_string())
        })?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(malformed(
                path,
                line_no,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        if record[0].is_empty() || record[1].is_empty() {
            return Err(malformed(path, line_no, "empty user or item id"));
        }
        out.push(RawInteraction {
            user_id: record[0].to_string(),
            item_id: record[1].to_string(),
            rating: parse_rating(&record[2], path, line_no)?,
            timestamp: parse_timestamp(record.get(3), path, line_no)?,
        });
    }
    Ok(out)
}
