//! CSV and JSON file formats.
//!
//! CSV files carry a header row, are UTF-8 with LF line endings and use `.` as
//! the decimal separator.
//!
//! * samples: `sample_id,protected_raw,feature_1,...,feature_k`
//! * lookup: `sample_id,group,prediction`

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::engine::MitigationTrace;
use crate::error::{Error, Result};
use crate::model::{validate_samples, Feature, Group, ProtectedValue, Sample};
use crate::predictor::LookupTable;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(rdr)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn csv_err(origin: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: origin.to_owned(),
        line,
        message: e.to_string(),
    }
}

fn parse_f64(origin: &str, line: u64, column: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: origin.to_owned(),
        line,
        message: format!("column {column:?}: {raw:?} is not a number"),
    })
}

/// Parses a samples CSV. `origin` is only used in error messages.
pub fn parse_samples<R: Read>(rdr: R, origin: &str) -> Result<Vec<Sample>> {
    let mut rdr = csv_reader(rdr);
    let headers = rdr.headers().map_err(|e| csv_err(origin, e))?.clone();

    let mut id_col = None;
    let mut protected_col = None;
    let mut feature_cols: Vec<(usize, usize)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        match h {
            "sample_id" if id_col.is_none() => id_col = Some(i),
            "protected_raw" if protected_col.is_none() => protected_col = Some(i),
            _ => match h.strip_prefix("feature_").and_then(|k| k.parse::<usize>().ok()) {
                Some(k) if k >= 1 && !feature_cols.iter().any(|&(kk, _)| kk == k) => feature_cols.push((k, i)),
                _ => {
                    return Err(Error::UnknownColumn {
                        path: origin.to_owned(),
                        column: h.to_owned(),
                    })
                }
            },
        }
    }
    let missing = |column: &str| Error::MissingColumn {
        path: origin.to_owned(),
        column: column.to_owned(),
    };
    let id_col = id_col.ok_or_else(|| missing("sample_id"))?;
    let protected_col = protected_col.ok_or_else(|| missing("protected_raw"))?;
    feature_cols.sort_unstable();
    for (expect, &(k, _)) in (1..).zip(&feature_cols) {
        if k != expect {
            return Err(missing(&format!("feature_{expect}")));
        }
    }
    if feature_cols.is_empty() {
        return Err(missing("feature_1"));
    }
    let names: Vec<String> = feature_cols.iter().map(|(k, _)| format!("feature_{k}")).collect();

    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(origin, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let features = feature_cols
            .iter()
            .zip(&names)
            .map(|(&(_, col), name)| {
                Ok(Feature {
                    name: name.clone(),
                    value: parse_f64(origin, line, name, &record[col])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            id: record[id_col].to_owned(),
            features,
            protected_raw: ProtectedValue::new(&record[protected_col]),
        });
    }
    validate_samples(&samples)?;
    Ok(samples)
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    parse_samples(open(path)?, &path.display().to_string())
}

pub fn write_samples_to<W: Write>(samples: &[Sample], w: W) -> Result<()> {
    validate_samples(samples)?;
    let mut wtr = csv_writer(w);
    let k = samples.first().map_or(0, |s| s.features.len());
    let mut header = vec!["sample_id".to_owned(), "protected_raw".to_owned()];
    header.extend((1..=k).map(|i| format!("feature_{i}")));
    let err = |e: csv::Error| csv_err("<samples>", e);
    wtr.write_record(&header).map_err(err)?;
    for s in samples {
        let mut row = vec![s.id.clone(), s.protected_raw.0.clone()];
        row.extend(s.features.iter().map(|f| f.value.to_string()));
        wtr.write_record(&row).map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::io("<samples>", e))?;
    Ok(())
}

pub fn write_samples(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_samples_to(samples, create(path)?)
}

/// Parses a lookup CSV with columns `sample_id,group,prediction`.
pub fn parse_lookup<R: Read>(rdr: R, origin: &str) -> Result<LookupTable> {
    let mut rdr = csv_reader(rdr);
    let headers = rdr.headers().map_err(|e| csv_err(origin, e))?.clone();
    let mut cols = [None; 3];
    for (i, h) in headers.iter().enumerate() {
        let slot = match h {
            "sample_id" => 0,
            "group" => 1,
            "prediction" => 2,
            _ => {
                return Err(Error::UnknownColumn {
                    path: origin.to_owned(),
                    column: h.to_owned(),
                })
            }
        };
        if cols[slot].replace(i).is_some() {
            return Err(Error::Parse {
                path: origin.to_owned(),
                line: 1,
                message: format!("duplicate column {h:?}"),
            });
        }
    }
    let mut resolved = [0usize; 3];
    for (slot, name) in ["sample_id", "group", "prediction"].iter().enumerate() {
        resolved[slot] = cols[slot].ok_or_else(|| Error::MissingColumn {
            path: origin.to_owned(),
            column: (*name).to_owned(),
        })?;
    }
    let [id_col, group_col, pred_col] = resolved;

    let mut table = LookupTable::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(origin, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let group = match record[group_col].trim() {
            "0" => Group::Unprivileged,
            "1" => Group::Privileged,
            other => {
                return Err(Error::Parse {
                    path: origin.to_owned(),
                    line,
                    message: format!("group must be 0 or 1, got {other:?}"),
                })
            }
        };
        let prediction = parse_f64(origin, line, "prediction", &record[pred_col])?;
        let id = &record[id_col];
        if table.insert(id, group, prediction).is_some() {
            return Err(Error::Parse {
                path: origin.to_owned(),
                line,
                message: format!("duplicate entry for ({id:?}, {group})"),
            });
        }
    }
    Ok(table)
}

pub fn read_lookup(path: impl AsRef<Path>) -> Result<LookupTable> {
    let path = path.as_ref();
    parse_lookup(open(path)?, &path.display().to_string())
}

pub fn write_lookup_to<W: Write>(table: &LookupTable, w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    let err = |e: csv::Error| csv_err("<lookup>", e);
    wtr.write_record(["sample_id", "group", "prediction"]).map_err(err)?;
    for (id, g, v) in table.rows() {
        wtr.write_record([id, g.to_string(), v.to_string()]).map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::io("<lookup>", e))?;
    Ok(())
}

pub fn write_lookup(table: &LookupTable, path: impl AsRef<Path>) -> Result<()> {
    write_lookup_to(table, create(path.as_ref())?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_all(to_json_string(value)?.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(open(path.as_ref())?)?)
}

pub fn write_trace(trace: &MitigationTrace, path: impl AsRef<Path>) -> Result<()> {
    write_json(trace, path)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<MitigationTrace> {
    read_json(path)
}

pub fn write_report<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    write_json(report, path)
}

pub fn read_report<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    read_json(path)
}

/// `flip_index,di` rows; index 0 is the initial DI.
pub fn write_trajectory_csv<W: Write>(trajectory: &[f64], w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    let err = |e: csv::Error| csv_err("<trajectory>", e);
    wtr.write_record(["flip_index", "di"]).map_err(err)?;
    for (i, di) in trajectory.iter().enumerate() {
        wtr.write_record([i.to_string(), di.to_string()]).map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::io("<trajectory>", e))?;
    Ok(())
}

/// Sample ids, one per line.
pub fn write_id_list<'a, I: IntoIterator<Item = &'a String>>(ids: I, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut seen = HashSet::new();
    for id in ids {
        if seen.insert(id) {
            writeln!(w, "{id}").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
