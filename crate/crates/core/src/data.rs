//! Observation tables and CSV ingestion with complete-case filtering.

use crate::design::DAYS_PER_YEAR;
use crate::error::{Error, Result};
use crate::model::Covariates;
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// Rows removed because at least one species count was missing.
    pub rows_dropped: usize,
    /// February 29 rows removed to keep the 365-day grid.
    pub leap_days_dropped: usize,
}

/// Complete-case counts of `J` species with their covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    species_names: Vec<String>,
    covariates: Vec<Covariates>,
    /// Row-major `N × J`.
    counts: Vec<u32>,
    pub provenance: Provenance,
}

impl ObservationTable {
    pub fn new(species_names: Vec<String>, covariates: Vec<Covariates>, counts: Vec<u32>) -> Result<Self> {
        let j = species_names.len();
        if j == 0 {
            return Err(Error::Input("observation table needs at least one species".into()));
        }
        if counts.len() != covariates.len() * j {
            return Err(Error::Input(format!(
                "{} counts do not fill {} rows of {j} species",
                counts.len(),
                covariates.len()
            )));
        }
        if let Some(c) = covariates.iter().find(|c| !(1..=DAYS_PER_YEAR).contains(&c.day)) {
            return Err(Error::Input(format!("day {} outside 1..=365", c.day)));
        }
        Ok(Self {
            species_names,
            covariates,
            counts,
            provenance: Provenance::default(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.covariates.len()
    }

    pub fn n_species(&self) -> usize {
        self.species_names.len()
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn covariates(&self) -> &[Covariates] {
        &self.covariates
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let j = self.n_species();
        &self.counts[i * j..(i + 1) * j]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn column(&self, species: usize) -> Vec<u32> {
        (0..self.n_rows()).map(|i| self.row(i)[species]).collect()
    }

    pub fn max_counts(&self) -> Vec<u32> {
        (0..self.n_species())
            .map(|s| self.column(s).into_iter().max().unwrap_or(0))
            .collect()
    }

    /// Distinct years in ascending order.
    pub fn years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.covariates.iter().map(|c| c.year).collect();
        years.sort_unstable();
        years.dedup();
        years
    }

    /// Columns reordered so that new column `k` is old column `order[k]`.
    pub fn reorder_species(&self, order: &[usize]) -> Result<Self> {
        let j = self.n_species();
        let mut check = order.to_vec();
        check.sort_unstable();
        if check != (0..j).collect::<Vec<_>>() {
            return Err(Error::Input(format!("{order:?} is not a permutation of 0..{j}")));
        }
        self.select_species(order)
    }

    /// Table holding only the listed columns, in the listed order.
    pub fn select_species(&self, columns: &[usize]) -> Result<Self> {
        let j = self.n_species();
        if columns.is_empty() || columns.iter().any(|&k| k >= j) {
            return Err(Error::Input(format!("invalid species selection {columns:?} for {j} species")));
        }
        let mut counts = Vec::with_capacity(self.n_rows() * columns.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            counts.extend(columns.iter().map(|&k| row[k]));
        }
        Ok(Self {
            species_names: columns.iter().map(|&k| self.species_names[k].clone()).collect(),
            covariates: self.covariates.clone(),
            counts,
            provenance: self.provenance.clone(),
        })
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.n_rows());
        Self {
            species_names: self.species_names.clone(),
            covariates: self.covariates[..n].to_vec(),
            counts: self.counts[..n * self.n_species()].to_vec(),
            provenance: self.provenance.clone(),
        }
    }

    /// Same covariates, new counts.
    pub fn with_counts(&self, counts: Vec<u32>) -> Result<Self> {
        let mut out = Self::new(self.species_names.clone(), self.covariates.clone(), counts)?;
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    /// Write in the `year,day,<species…>` schema read by [`ingest_csv`].
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let rows: Vec<RawRow> = (0..self.n_rows())
            .map(|i| RawRow {
                covariates: self.covariates[i],
                counts: self.row(i).iter().map(|&c| Some(c)).collect(),
            })
            .collect();
        write_raw_csv(&self.species_names, &rows, out)
    }
}

/// A row that may contain missing counts, as produced by simulators before
/// complete-case filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub covariates: Covariates,
    pub counts: Vec<Option<u32>>,
}

pub fn write_raw_csv(species: &[String], rows: &[RawRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["year".to_string(), "day".to_string()];
    header.extend(species.iter().cloned());
    writer.write_record(&header).map_err(csv_io)?;
    for row in rows {
        let mut record = vec![row.covariates.year.to_string(), row.covariates.day.to_string()];
        record.extend(row.counts.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
        writer.write_record(&record).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Complete-case filtering of raw rows.
pub fn complete_cases(species: Vec<String>, rows: &[RawRow]) -> Result<ObservationTable> {
    let mut covariates = Vec::with_capacity(rows.len());
    let mut counts = Vec::with_capacity(rows.len() * species.len());
    let mut dropped = 0;
    for row in rows {
        if row.counts.iter().all(Option::is_some) {
            covariates.push(row.covariates);
            counts.extend(row.counts.iter().map(|c| c.unwrap()));
        } else {
            dropped += 1;
        }
    }
    let mut table = ObservationTable::new(species, covariates, counts)?;
    table.provenance.rows_dropped = dropped;
    Ok(table)
}

/// Options for [`ingest_csv`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Species columns in model order; empty means every non-covariate column.
    pub species: Vec<String>,
}

/// Day on the 365-day grid, or `None` for February 29.
pub fn day_of_year_365(date: NaiveDate) -> Option<u16> {
    let ordinal = date.ordinal() as u16;
    if !date.leap_year() || ordinal < 60 {
        return Some(ordinal);
    }
    if ordinal == 60 {
        None
    } else {
        Some(ordinal - 1)
    }
}

enum DateColumns {
    Iso(usize),
    YearDay(usize, usize),
}

type CsvFile = (String, csv::Reader<std::fs::File>, Vec<String>, DateColumns);

fn open_csv(path: &Path) -> Result<CsvFile> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: display.clone(),
            line: 0,
            reason: e.to_string(),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: display.clone(),
            line: 1,
            reason: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let dates = match (find("date"), find("year"), find("day")) {
        (Some(d), _, _) => DateColumns::Iso(d),
        (None, Some(y), Some(d)) => DateColumns::YearDay(y, d),
        _ => {
            return Err(Error::Csv {
                path: display,
                line: 1,
                reason: "need a `date` column or `year` and `day` columns".into(),
            })
        }
    };
    Ok((display, reader, header, dates))
}

fn record_error(path: &str, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_string(),
        line: e.position().map(|p| p.line()).unwrap_or(0),
        reason: e.to_string(),
    }
}

/// Covariates of one record; `None` for February 29.
fn parse_covariates(
    record: &csv::StringRecord,
    dates: &DateColumns,
    fail: &dyn Fn(String) -> Error,
) -> Result<Option<Covariates>> {
    match *dates {
        DateColumns::Iso(col) => {
            let raw = record.get(col).unwrap_or("");
            let date =
                NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| fail(format!("malformed date {raw:?}")))?;
            Ok(day_of_year_365(date).map(|day| Covariates::new(date.year(), day)))
        }
        DateColumns::YearDay(ycol, dcol) => {
            let year_raw = record.get(ycol).unwrap_or("");
            let day_raw = record.get(dcol).unwrap_or("");
            let year: i32 = year_raw
                .parse()
                .map_err(|_| fail(format!("malformed year {year_raw:?}")))?;
            let day: u16 = day_raw
                .parse()
                .map_err(|_| fail(format!("malformed day {day_raw:?}")))?;
            if !(1..=DAYS_PER_YEAR).contains(&day) {
                return Err(fail(format!("day {day} outside 1..=365")));
            }
            Ok(Some(Covariates::new(year, day)))
        }
    }
}

/// Read a CSV with a `date` column (ISO-8601) or `year` + `day` columns and one
/// integer column per species. Empty or non-integer count cells are missing and
/// the row is dropped; negative counts and malformed dates are errors.
pub fn ingest_csv(path: impl AsRef<Path>, config: &IngestConfig) -> Result<ObservationTable> {
    let (display, mut reader, header, dates) = open_csv(path.as_ref())?;
    let find = |name: &str| header.iter().position(|h| h == name);
    let species: Vec<String> = if config.species.is_empty() {
        header
            .iter()
            .filter(|h| !matches!(h.as_str(), "date" | "year" | "day"))
            .cloned()
            .collect()
    } else {
        config.species.clone()
    };
    if species.is_empty() {
        return Err(Error::Csv {
            path: display,
            line: 1,
            reason: "no species columns".into(),
        });
    }
    let mut species_cols = Vec::with_capacity(species.len());
    for name in &species {
        species_cols.push(find(name).ok_or_else(|| Error::Csv {
            path: display.clone(),
            line: 1,
            reason: format!("unknown species column {name:?}"),
        })?);
    }

    let mut rows = Vec::new();
    let mut leap_days = 0;
    for record in reader.records() {
        let record = record.map_err(|e| record_error(&display, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fail = |reason: String| Error::Csv {
            path: display.clone(),
            line,
            reason,
        };
        let Some(covariates) = parse_covariates(&record, &dates, &fail)? else {
            leap_days += 1;
            continue;
        };
        let mut counts = Vec::with_capacity(species_cols.len());
        for (&col, name) in species_cols.iter().zip(&species) {
            let raw = record.get(col).unwrap_or("");
            let value = match raw.parse::<i64>() {
                Ok(v) if v < 0 => return Err(fail(format!("negative count {v} for {name}"))),
                Ok(v) => Some(u32::try_from(v).map_err(|_| fail(format!("count {v} too large")))?),
                Err(_) => None,
            };
            counts.push(value);
        }
        rows.push(RawRow { covariates, counts });
    }
    let mut table = complete_cases(species, &rows)?;
    table.provenance.source = display;
    table.provenance.leap_days_dropped = leap_days;
    Ok(table)
}

/// Covariate rows of a CSV in the [`ingest_csv`] layout; other columns are
/// ignored. Returns the rows and the number of February 29 rows skipped.
pub fn read_covariates(path: impl AsRef<Path>) -> Result<(Vec<Covariates>, usize)> {
    let (display, mut reader, _, dates) = open_csv(path.as_ref())?;
    let mut out = Vec::new();
    let mut leap_days = 0;
    for record in reader.records() {
        let record = record.map_err(|e| record_error(&display, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fail = |reason: String| Error::Csv {
            path: display.clone(),
            line,
            reason,
        };
        match parse_covariates(&record, &dates, &fail)? {
            Some(x) => out.push(x),
            None => leap_days += 1,
        }
    }
    Ok((out, leap_days))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn date_column_and_leap_day() {
        let f = write("date,A,B\n2004-02-28,1,2\n2004-02-29,3,4\n2004-03-01,5,6\n2005-03-01,7,8\n");
        let t = ingest_csv(f.path(), &IngestConfig::default()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.provenance.leap_days_dropped, 1);
        assert_eq!(t.provenance.rows_dropped, 0);
        assert_eq!(t.covariates()[0], Covariates::new(2004, 59));
        assert_eq!(t.covariates()[1], Covariates::new(2004, 60));
        assert_eq!(t.covariates()[2], Covariates::new(2005, 60));
        assert_eq!(t.row(1), &[5, 6]);
    }

    #[test]
    fn missing_cells_are_dropped() {
        let f = write("year,day,A,B,C\n2002,1,1,,3\n2002,2,1,2,3\n2002,3,x,2,3\n2002,4,0,0,0\n");
        let cfg = IngestConfig {
            species: vec!["C".into(), "A".into()],
        };
        let t = ingest_csv(f.path(), &cfg).unwrap();
        // row 1 is complete for the selected species C and A
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.provenance.rows_dropped, 1);
        assert_eq!(t.species_names(), &["C".to_string(), "A".to_string()]);
        assert_eq!(t.row(0), &[3, 1]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let f = write("year,day,A\n2002,1,1\n2002,2,-4\n");
        match ingest_csv(f.path(), &IngestConfig::default()) {
            Err(Error::Csv { line, reason, .. }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("negative"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write("date,A\n2002-13-01,1\n");
        assert!(matches!(ingest_csv(f.path(), &IngestConfig::default()), Err(Error::Csv { line: 2, .. })));
        let f = write("year,day,A\n2002,1,1\n");
        let cfg = IngestConfig {
            species: vec!["Z".into()],
        };
        assert!(matches!(ingest_csv(f.path(), &cfg), Err(Error::Csv { line: 1, .. })));
    }

    #[test]
    fn write_then_ingest_round_trip() {
        let t = ObservationTable::new(
            vec!["A".into(), "B".into()],
            vec![Covariates::new(2002, 1), Covariates::new(2003, 365)],
            vec![0, 5, 17, 2],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let f = write(std::str::from_utf8(&buf).unwrap());
        let back = ingest_csv(f.path(), &IngestConfig::default()).unwrap();
        assert_eq!(back.counts(), t.counts());
        assert_eq!(back.covariates(), t.covariates());
        assert_eq!(back.species_names(), t.species_names());
    }

    #[test]
    fn reorder_species_permutes_columns() {
        let t = ObservationTable::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![Covariates::new(2002, 1)],
            vec![1, 2, 3],
        )
        .unwrap();
        let r = t.reorder_species(&[2, 0, 1]).unwrap();
        assert_eq!(r.row(0), &[3, 1, 2]);
        assert_eq!(r.species_names()[0], "C");
        assert!(t.reorder_species(&[0, 0, 1]).is_err());
    }
}
