//! Building records, ingestion, threshold filters and partitions.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_YEAR: i32 = 1850;
pub const MAX_YEAR: i32 = 2100;

/// One completed building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingRecord {
    pub id: String,
    pub name: Option<String>,
    pub city: String,
    /// Architectural height in meters.
    pub height: f64,
    pub floors: u32,
    /// Completion year.
    pub year: i32,
}

impl BuildingRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.height.is_finite() && self.height > 0.0) {
            return Err(Error::Argument(format!(
                "{}: height must be positive",
                self.id
            )));
        }
        if self.floors < 1 {
            return Err(Error::Argument(format!(
                "{}: floors must be at least 1",
                self.id
            )));
        }
        if !(MIN_YEAR..=MAX_YEAR).contains(&self.year) {
            return Err(Error::Argument(format!(
                "{}: year {} outside [{MIN_YEAR}, {MAX_YEAR}]",
                self.id, self.year
            )));
        }
        Ok(())
    }
}

/// An immutable, deterministically ordered set of records.
///
/// Records are always sorted by `(year, id)`; that order defines every
/// downstream tie-break.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Catalog {
    records: Vec<BuildingRecord>,
    provenance: String,
}

impl Catalog {
    pub fn new(mut records: Vec<BuildingRecord>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Argument(format!("duplicate id {:?}", r.id)));
            }
        }
        sort_records(&mut records);
        Ok(Self {
            records,
            provenance: provenance.into(),
        })
    }

    /// Builds from records already known to be valid and unique.
    fn from_sorted(records: Vec<BuildingRecord>, provenance: &str) -> Self {
        Self {
            records,
            provenance: provenance.to_string(),
        }
    }

    pub fn records(&self) -> &[BuildingRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BuildingRecord> {
        self.records.iter()
    }

    pub fn heights(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.height).collect()
    }

    pub fn cities(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.city.as_str())
            .collect::<HashSet<_>>()
            .len()
    }

    /// Records completed in `[from, to]`.
    pub fn years(&self, from: i32, to: i32) -> Catalog {
        let kept = self
            .records
            .iter()
            .filter(|r| r.year >= from && r.year <= to)
            .cloned()
            .collect();
        Catalog::from_sorted(kept, &self.provenance)
    }

    /// Records whose height strictly exceeds `threshold`.
    pub fn taller_than(&self, threshold: f64) -> Catalog {
        let kept = self
            .records
            .iter()
            .filter(|r| r.height > threshold)
            .cloned()
            .collect();
        Catalog::from_sorted(kept, &self.provenance)
    }
}

impl<'a> IntoIterator for &'a Catalog {
    type Item = &'a BuildingRecord;
    type IntoIter = std::slice::Iter<'a, BuildingRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

fn sort_records(records: &mut [BuildingRecord]) {
    records.sort_by(|a, b| a.year.cmp(&b.year).then_with(|| a.id.cmp(&b.id)));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Join {
    And,
    Or,
}

/// Height/floor exceedance predicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub min_height: f64,
    pub min_floors: u32,
    pub join: Join,
    /// Strict `>` comparisons when true, `>=` otherwise.
    pub strict: bool,
}

impl FilterSpec {
    /// More than 150 m and more than 40 floors.
    pub const TALL: FilterSpec = FilterSpec {
        min_height: 150.0,
        min_floors: 40,
        join: Join::And,
        strict: true,
    };

    /// More than 225 m or more than 59 floors.
    pub const EXTREME: FilterSpec = FilterSpec {
        min_height: 225.0,
        min_floors: 59,
        join: Join::Or,
        strict: true,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.min_height.is_finite() && self.min_height >= 0.0) {
            return Err(Error::Argument(
                "min_height must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn matches(&self, r: &BuildingRecord) -> bool {
        let (h, f) = if self.strict {
            (r.height > self.min_height, r.floors > self.min_floors)
        } else {
            (r.height >= self.min_height, r.floors >= self.min_floors)
        };
        match self.join {
            Join::And => h && f,
            Join::Or => h || f,
        }
    }
}

pub fn filter(catalog: &Catalog, spec: &FilterSpec) -> Catalog {
    let kept = catalog
        .records
        .iter()
        .filter(|r| spec.matches(r))
        .cloned()
        .collect();
    Catalog::from_sorted(kept, &catalog.provenance)
}

/// Completions per year over `[from, to]`, zero-filled.
pub fn counts_by_year(catalog: &Catalog, from: i32, to: i32) -> Result<Vec<(i32, u64)>> {
    if from > to {
        return Err(Error::Argument(format!("year range {from}..{to} is empty")));
    }
    let mut counts: Vec<(i32, u64)> = (from..=to).map(|y| (y, 0)).collect();
    for r in &catalog.records {
        if r.year >= from && r.year <= to {
            counts[(r.year - from) as usize].1 += 1;
        }
    }
    Ok(counts)
}

/// Splits records completed in or after `from` into six chronological groups.
///
/// Group sizes differ by at most one; the larger groups come first.
pub fn partition_sextiles(catalog: &Catalog, from: i32) -> Result<[Catalog; 6]> {
    let recent: Vec<&BuildingRecord> = catalog.records.iter().filter(|r| r.year >= from).collect();
    let n = recent.len();
    if n < 6 {
        return Err(Error::Argument(format!(
            "need at least 6 records from {from} onward, found {n}"
        )));
    }
    let (base, extra) = (n / 6, n % 6);
    let mut start = 0;
    Ok(std::array::from_fn(|g| {
        let size = base + usize::from(g < extra);
        let group = recent[start..start + size]
            .iter()
            .map(|r| (*r).clone())
            .collect();
        start += size;
        Catalog::from_sorted(group, &catalog.provenance)
    }))
}

/// Groups records by their city string, verbatim.
pub fn group_by_city(catalog: &Catalog) -> BTreeMap<String, Catalog> {
    let mut groups: BTreeMap<String, Vec<BuildingRecord>> = BTreeMap::new();
    for r in &catalog.records {
        groups.entry(r.city.clone()).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(city, recs)| (city, Catalog::from_sorted(recs, &catalog.provenance)))
        .collect()
}

/// Header names used to locate each field in an input CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    /// Optional id column; row numbers are used when absent.
    pub id: Option<String>,
    pub name: Option<String>,
    pub city: String,
    pub height: String,
    pub floors: String,
    pub year: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: None,
            name: Some("name".into()),
            city: "city".into(),
            height: "height_m".into(),
            floors: "floors".into(),
            year: "year".into(),
        }
    }
}

/// Tally of rows read and dropped during ingestion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rows_read: u64,
    pub rows_dropped: u64,
    pub reasons: BTreeMap<String, u64>,
}

impl Diagnostics {
    fn drop_row(&mut self, reason: &str) {
        self.rows_dropped += 1;
        *self.reasons.entry(reason.to_string()).or_default() += 1;
    }
}

/// Reads a UTF-8 CSV with a header row.
///
/// Rows with an empty height, floors or year cell are dropped and tallied.
pub fn parse_catalog<R: Read>(source: R, schema: &ColumnMap) -> Result<(Catalog, Diagnostics)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    let locate = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let id_col = schema.id.as_deref().map(locate).transpose()?;
    let name_col = match schema.name.as_deref() {
        Some(n) => headers.iter().position(|h| h.trim() == n),
        None => None,
    };
    let city_col = locate(&schema.city)?;
    let height_col = locate(&schema.height)?;
    let floors_col = locate(&schema.floors)?;
    let year_col = locate(&schema.year)?;

    let mut diag = Diagnostics::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map_or(0, |p| p.line());
        diag.rows_read += 1;
        let cell = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let (h, f, y) = (cell(height_col), cell(floors_col), cell(year_col));
        if h.is_empty() {
            diag.drop_row("missing_height");
            continue;
        }
        if f.is_empty() {
            diag.drop_row("missing_floors");
            continue;
        }
        if y.is_empty() {
            diag.drop_row("missing_year");
            continue;
        }
        let bad = |what: &str, v: &str| Error::Parse {
            line,
            message: format!("{what} {v:?} is not a number"),
        };
        let height: f64 = h.parse().map_err(|_| bad("height", h))?;
        let floors: u32 = parse_count(f).ok_or_else(|| bad("floors", f))?;
        let year: i32 = parse_count(y)
            .and_then(|v| i32::try_from(v).ok())
            .ok_or_else(|| bad("year", y))?;
        let id = match id_col {
            Some(c) => cell(c).to_string(),
            None => format!("row{line:07}"),
        };
        let name = name_col
            .map(|c| cell(c).to_string())
            .filter(|s| !s.is_empty());
        let record = BuildingRecord {
            id,
            name,
            city: cell(city_col).to_string(),
            height,
            floors,
            year,
        };
        record.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate id {:?}", record.id),
            });
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    sort_records(&mut records);
    Ok((Catalog::from_sorted(records, "csv"), diag))
}

/// Writes records as CSV under the column names of `schema`, readable by
/// [`parse_catalog`] with the same schema. An `id` column is always written.
pub fn write_catalog<W: Write>(catalog: &Catalog, sink: W, schema: &ColumnMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let id = schema.id.as_deref().unwrap_or("id");
    let name = schema.name.as_deref().unwrap_or("name");
    let io = |e: csv::Error| Error::Numeric(format!("writing catalog: {e}"));
    w.write_record([
        id,
        name,
        &schema.city,
        &schema.height,
        &schema.floors,
        &schema.year,
    ])
    .map_err(io)?;
    for r in &catalog.records {
        w.write_record([
            r.id.as_str(),
            r.name.as_deref().unwrap_or(""),
            r.city.as_str(),
            &r.height.to_string(),
            &r.floors.to_string(),
            &r.year.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Numeric(format!("writing catalog: {e}")))
}

/// Accepts "57" as well as "57.0"; rejects fractional counts.
fn parse_count(s: &str) -> Option<u32> {
    if let Ok(v) = s.parse::<u32>() {
        return Some(v);
    }
    let v: f64 = s.parse().ok()?;
    (v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64).then_some(v as u32)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
