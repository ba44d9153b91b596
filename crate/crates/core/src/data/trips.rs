use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TRIP_CSV_HEADER: &str = "card_id,origin,destination,entry_hour";

/// One farecard tap: who travelled, between which stations, in which epoch.
///
/// Stations are indices into the owning [`TripDatabase`]'s registry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TripRecord {
    pub user: String,
    pub origin: usize,
    pub destination: usize,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripDatabase {
    records: Vec<TripRecord>,
    stations: Vec<String>,
    epoch_count: usize,
}

impl TripDatabase {
    /// Builds a database from records already resolved against `stations`.
    pub fn new(records: Vec<TripRecord>, stations: Vec<String>, epoch_count: usize) -> Result<Self> {
        if epoch_count == 0 {
            return Err(Error::Config("epoch count must be positive".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if r.origin >= stations.len() || r.destination >= stations.len() {
                return Err(Error::Record {
                    line: i + 1,
                    message: "station outside registry".into(),
                });
            }
            if r.epoch >= epoch_count {
                return Err(Error::Record {
                    line: i + 1,
                    message: format!("epoch {} outside [0, {epoch_count})", r.epoch),
                });
            }
        }
        Ok(Self {
            records,
            stations,
            epoch_count,
        })
    }

    /// Builds a database from string-keyed trips; the registry is the sorted
    /// union of observed stations.
    pub fn from_named<'a, I>(trips: I, epoch_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str, usize)>,
    {
        let trips: Vec<_> = trips.into_iter().collect();
        let stations: Vec<String> = trips
            .iter()
            .flat_map(|&(_, o, d, _)| [o, d])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();
        let lookup: HashMap<&str, usize> = stations.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let records = trips
            .iter()
            .map(|&(u, o, d, t)| TripRecord {
                user: u.to_string(),
                origin: lookup[o],
                destination: lookup[d],
                epoch: t,
            })
            .collect();
        Self::new(records, stations, epoch_count)
    }

    pub fn records(&self) -> &[TripRecord] {
        &self.records
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn epoch_count(&self) -> usize {
        self.epoch_count
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct users in first-seen order.
    pub fn users(&self) -> Vec<String> {
        self.trip_counts().into_iter().map(|(u, _)| u).collect()
    }

    /// Per-user record counts in first-seen order.
    pub fn trip_counts(&self) -> Vec<(String, usize)> {
        let mut order: Vec<(String, usize)> = Vec::new();
        let mut slot: HashMap<&str, usize> = HashMap::new();
        for r in &self.records {
            match slot.get(r.user.as_str()) {
                Some(&i) => order[i].1 += 1,
                None => {
                    slot.insert(r.user.as_str(), order.len());
                    order.push((r.user.clone(), 1));
                }
            }
        }
        order
    }

    /// Number of records per epoch.
    pub fn epoch_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.epoch_count];
        for r in &self.records {
            h[r.epoch] += 1;
        }
        h
    }

    /// Writes the records as trip CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRIP_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{}",
                r.user, self.stations[r.origin], self.stations[r.destination], r.epoch
            )?;
        }
        Ok(())
    }
}

/// What to do with a row that fails validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnBadRecord {
    #[default]
    Abort,
    Skip,
}

#[derive(Debug)]
pub struct ParseOutcome {
    pub database: TripDatabase,
    /// Rows dropped under [`OnBadRecord::Skip`], as record-level errors.
    pub skipped: Vec<Error>,
}

pub fn parse_trip_csv(path: &Path, epoch_count: usize, on_bad: OnBadRecord) -> Result<ParseOutcome> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_trip_reader(file, epoch_count, on_bad)
}

pub fn parse_trip_reader<R: Read>(reader: R, epoch_count: usize, on_bad: OnBadRecord) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows: Vec<(String, String, String, usize)> = Vec::new();
    let mut skipped = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let parsed = rec
            .map_err(|e| Error::Record {
                line,
                message: e.to_string(),
            })
            .and_then(|rec| parse_row(&rec, line, epoch_count));
        match parsed {
            Ok(row) => rows.push(row),
            Err(e) if on_bad == OnBadRecord::Skip => skipped.push(e),
            Err(e) => return Err(e),
        }
    }

    let database = TripDatabase::from_named(
        rows.iter().map(|(u, o, d, t)| (u.as_str(), o.as_str(), d.as_str(), *t)),
        epoch_count,
    )?;
    Ok(ParseOutcome { database, skipped })
}

fn parse_row(rec: &csv::StringRecord, line: usize, epoch_count: usize) -> Result<(String, String, String, usize)> {
    if rec.len() != 4 {
        return Err(Error::Record {
            line,
            message: format!("expected 4 fields, found {}", rec.len()),
        });
    }
    if rec.iter().any(str::is_empty) {
        return Err(Error::Record {
            line,
            message: "empty field".into(),
        });
    }
    let hour: i64 = rec[3].parse().map_err(|_| Error::Record {
        line,
        message: format!("entry_hour `{}` is not an integer", &rec[3]),
    })?;
    if hour < 0 || hour as usize >= epoch_count {
        return Err(Error::Record {
            line,
            message: format!("entry_hour {hour} outside [0, {epoch_count})"),
        });
    }
    Ok((
        rec[0].to_string(),
        rec[1].to_string(),
        rec[2].to_string(),
        hour as usize,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, on_bad: OnBadRecord) -> Result<ParseOutcome> {
        parse_trip_reader(text.as_bytes(), 24, on_bad)
    }

    #[test]
    fn three_rows() {
        let out = parse(
            "card_id,origin,destination,entry_hour\nc1,A,B,8\nc2,A,B,8\nc1,B,A,17\n",
            OnBadRecord::Abort,
        )
        .unwrap();
        assert_eq!(out.database.len(), 3);
        assert_eq!(out.database.stations(), ["A", "B"]);
        assert_eq!(out.database.users(), ["c1", "c2"]);
    }

    #[test]
    fn header_only() {
        let out = parse("card_id,origin,destination,entry_hour\n", OnBadRecord::Abort).unwrap();
        assert!(out.database.is_empty());
        assert!(out.database.stations().is_empty());
    }

    #[test]
    fn diagonal_trip_is_kept() {
        let out = parse("card_id,origin,destination,entry_hour\nc1,A,A,9\n", OnBadRecord::Abort).unwrap();
        assert_eq!(out.database.len(), 1);
        let r = &out.database.records()[0];
        assert_eq!(r.origin, r.destination);
    }

    #[test]
    fn registry_is_sorted() {
        let out = parse(
            "card_id,origin,destination,entry_hour\nc1,Z,B,1\nc1,M,A,2\n",
            OnBadRecord::Abort,
        )
        .unwrap();
        assert_eq!(out.database.stations(), ["A", "B", "M", "Z"]);
    }

    #[test]
    fn bad_rows_abort_with_line_number() {
        let text = "card_id,origin,destination,entry_hour\nc1,A,B,8\nc2,A,B\n";
        match parse(text, OnBadRecord::Abort) {
            Err(Error::Record { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "card_id,origin,destination,entry_hour\nc1,A,B,24\n";
        assert!(matches!(
            parse(text, OnBadRecord::Abort),
            Err(Error::Record { line: 2, .. })
        ));
        let text = "card_id,origin,destination,entry_hour\nc1,A,B,x\n";
        assert!(matches!(
            parse(text, OnBadRecord::Abort),
            Err(Error::Record { line: 2, .. })
        ));
    }

    #[test]
    fn bad_rows_skip() {
        let text = "card_id,origin,destination,entry_hour\nc1,A,B,8\nc2,A,B,-1\nc3,A\nc4,B,A,3\n";
        let out = parse(text, OnBadRecord::Skip).unwrap();
        assert_eq!(out.database.len(), 2);
        assert_eq!(out.skipped.len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let text = "card_id,origin,destination,entry_hour\nc1,A,B,8\nc2,A,B,8\nc1,B,A,17\n";
        let db = parse(text, OnBadRecord::Abort).unwrap().database;
        let mut buf = Vec::new();
        db.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn missing_file() {
        let err = parse_trip_csv(Path::new("/nonexistent/trips.csv"), 24, OnBadRecord::Abort).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
