//! Annotation manifest CSV.
//!
//! Header: `clip_id,path,<8 class columns>,latitude,longitude,hour,day,week,split`.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::classes::{column_names, LabelVector, NUM_CLASSES};

pub const HOURS: u8 = 24;
pub const DAYS: u8 = 7;
pub const WEEKS: u8 = 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validate,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validate => "validate",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validate" => Ok(Split::Validate),
            other => Err(format!("unknown split {other:?} (expected train or validate)")),
        }
    }
}

/// One annotated clip with its spatiotemporal context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub clip_id: String,
    /// Audio file path, relative to the manifest's directory unless absolute.
    pub path: String,
    pub labels: LabelVector,
    pub latitude: f64,
    pub longitude: f64,
    /// 0-23
    pub hour: u8,
    /// 0-6, 0 = Monday
    pub day: u8,
    /// 0-51
    pub week: u8,
    pub split: Split,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.clip_id.is_empty() {
            return Err("empty clip_id".into());
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(format!("latitude {} outside [-90, 90]", self.latitude));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(format!("longitude {} outside [-180, 180]", self.longitude));
        }
        if self.hour >= HOURS {
            return Err(format!("hour {} outside 0-23", self.hour));
        }
        if self.day >= DAYS {
            return Err(format!("day {} outside 0-6", self.day));
        }
        if self.week >= WEEKS {
            return Err(format!("week {} outside 0-51", self.week));
        }
        Ok(())
    }

    pub fn label_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

pub fn header() -> Vec<&'static str> {
    let mut cols = vec!["clip_id", "path"];
    cols.extend(column_names());
    cols.extend(["latitude", "longitude", "hour", "day", "week", "split"]);
    cols
}

fn parse_field<T: FromStr>(row: usize, name: &str, value: &str) -> Result<T, CorpusError> {
    value.trim().parse().map_err(|_| CorpusError::Manifest {
        row,
        message: format!("cannot parse {name} from {value:?}"),
    })
}

/// Week 52 appears in ISO calendars; it is folded into week 51.
fn clamp_week(row: usize, week: u16) -> Result<u8, CorpusError> {
    match week {
        w if w < WEEKS as u16 => Ok(w as u8),
        52 => {
            log::warn!("manifest row {row}: week 52 clamped to 51");
            Ok(WEEKS - 1)
        }
        w => Err(CorpusError::Manifest {
            row,
            message: format!("week {w} outside 0-51"),
        }),
    }
}

/// Parses a manifest. Data rows are numbered from 1 in error messages.
pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| CorpusError::Manifest {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let expected = header();
    let mut index = Vec::with_capacity(expected.len());
    for name in &expected {
        let pos = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| CorpusError::Manifest {
                row: 0,
                message: format!("missing column {name:?}"),
            })?;
        index.push(pos);
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in csv.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CorpusError::Manifest {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |col: usize| row.get(index[col]).unwrap_or("");
        let mut labels = [false; NUM_CLASSES];
        for (c, label) in labels.iter_mut().enumerate() {
            *label = match field(2 + c).trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(CorpusError::Manifest {
                        row: row_no,
                        message: format!("label {} must be 0 or 1, found {other:?}", expected[2 + c]),
                    })
                }
            };
        }
        let week: u16 = parse_field(row_no, "week", field(14))?;
        let record = AnnotationRecord {
            clip_id: field(0).trim().to_string(),
            path: field(1).trim().to_string(),
            labels,
            latitude: parse_field(row_no, "latitude", field(10))?,
            longitude: parse_field(row_no, "longitude", field(11))?,
            hour: parse_field(row_no, "hour", field(12))?,
            day: parse_field(row_no, "day", field(13))?,
            week: clamp_week(row_no, week)?,
            split: field(15)
                .trim()
                .parse()
                .map_err(|message| CorpusError::Manifest { row: row_no, message })?,
        };
        record
            .validate()
            .map_err(|message| CorpusError::Manifest { row: row_no, message })?;
        if !seen.insert(record.clip_id.clone()) {
            return Err(CorpusError::Manifest {
                row: row_no,
                message: format!("duplicate clip_id {:?}", record.clip_id),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, CorpusError> {
    read_manifest(std::fs::File::open(path)?)
}

pub fn write_manifest<W: Write>(writer: W, records: &[AnnotationRecord]) -> Result<(), CorpusError> {
    let mut csv = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| CorpusError::Io(e.into());
    csv.write_record(header()).map_err(to_io)?;
    for r in records {
        let mut fields = vec![r.clip_id.clone(), r.path.clone()];
        fields.extend(r.labels.iter().map(|&l| if l { "1" } else { "0" }.to_string()));
        fields.extend([
            r.latitude.to_string(),
            r.longitude.to_string(),
            r.hour.to_string(),
            r.day.to_string(),
            r.week.to_string(),
            r.split.to_string(),
        ]);
        csv.write_record(&fields).map_err(to_io)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn save_manifest(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    write_manifest(std::io::BufWriter::new(file), records)
}
