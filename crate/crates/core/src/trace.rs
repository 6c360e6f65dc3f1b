//! IMU traces and their CSV forms.
//!
//! Trace CSV: header `t,ax,ay,az,gx,gy,gz`, one row per sample, `t` a
//! strictly increasing integer sample index, accelerations in g and angular
//! rates in dps. Labels CSV: header `file,label`, label `worn` or `not_worn`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Sample, Window};

pub const TRACE_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
pub const TRACE_CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub values: [f32; TRACE_CHANNELS],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sample(&self, i: usize) -> Sample {
        let r = &self.rows[i];
        Sample::new(r.t, r.values.to_vec())
    }

    /// Consecutive non-overlapping windows of `window_len` rows; a trailing
    /// partial window is dropped.
    pub fn windows(&self, window_len: usize) -> Vec<Window> {
        self.rows
            .chunks_exact(window_len)
            .map(|chunk| {
                Window::new(
                    chunk
                        .iter()
                        .map(|r| Sample::new(r.t, r.values.to_vec()))
                        .collect(),
                )
            })
            .collect()
    }

    pub fn concat(mut self, other: &Trace) -> Trace {
        let offset = self.rows.last().map_or(0, |r| r.t + 1);
        self.rows.extend(other.rows.iter().map(|r| TraceRow {
            t: r.t + offset,
            values: r.values,
        }));
        self
    }

    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(TRACE_HEADER).map_err(err)?;
        for r in &self.rows {
            let mut rec = Vec::with_capacity(7);
            rec.push(r.t.to_string());
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.to_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn from_csv<R: Read>(input: R) -> Result<Trace> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(rec) => rec.map_err(|e| csv_error(e, 1))?,
            None => {
                return Err(Error::TraceFormat {
                    row: 1,
                    column: "header".into(),
                    message: "empty input".into(),
                })
            }
        };
        let got: Vec<&str> = header.iter().map(str::trim).collect();
        if got != TRACE_HEADER {
            return Err(Error::TraceFormat {
                row: 1,
                column: "header".into(),
                message: format!(
                    "expected `{}`, got `{}`",
                    TRACE_HEADER.join(","),
                    got.join(",")
                ),
            });
        }

        let mut rows = Vec::new();
        let mut last_t: Option<u64> = None;
        for (i, rec) in records.enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| csv_error(e, line))?;
            if rec.len() != TRACE_HEADER.len() {
                return Err(Error::TraceFormat {
                    row: line,
                    column: "*".into(),
                    message: format!("expected {} fields, got {}", TRACE_HEADER.len(), rec.len()),
                });
            }
            let t: u64 = rec[0].trim().parse().map_err(|_| Error::TraceFormat {
                row: line,
                column: "t".into(),
                message: format!("not a non-negative integer: {:?}", &rec[0]),
            })?;
            if let Some(prev) = last_t {
                if t <= prev {
                    return Err(Error::TraceFormat {
                        row: line,
                        column: "t".into(),
                        message: format!("sample index {t} does not increase (previous {prev})"),
                    });
                }
            }
            last_t = Some(t);
            let mut values = [0.0f32; TRACE_CHANNELS];
            for (c, v) in values.iter_mut().enumerate() {
                let field = rec[c + 1].trim();
                *v = field
                    .parse::<f32>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::TraceFormat {
                        row: line,
                        column: TRACE_HEADER[c + 1].into(),
                        message: format!("not a finite number: {field:?}"),
                    })?;
            }
            rows.push(TraceRow { t, values });
        }
        Ok(Trace { rows })
    }
}

fn csv_error(e: csv::Error, line: usize) -> Error {
    let row = e.position().map_or(line, |p| p.line() as usize);
    Error::TraceFormat {
        row,
        column: "*".into(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Worn,
    NotWorn,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Worn => "worn",
            Label::NotWorn => "not_worn",
        }
    }

    /// Class index used by the classifiers: 1 = worn / activate.
    pub fn class(&self) -> usize {
        match self {
            Label::Worn => 1,
            Label::NotWorn => 0,
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "worn" => Ok(Label::Worn),
            "not_worn" => Ok(Label::NotWorn),
            other => Err(Error::Format(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    pub file: String,
    pub label: Label,
}

pub fn write_labels<W: Write>(entries: &[LabelEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["file", "label"]).map_err(err)?;
    for e in entries {
        w.write_record([e.file.as_str(), e.label.as_str()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_labels<R: Read>(input: R) -> Result<Vec<LabelEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Format("labels: empty input".into()))?
        .map_err(|e| Error::Format(format!("labels: {e}")))?;
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["file", "label"] {
        return Err(Error::Format("labels: expected header `file,label`".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Format(format!("labels line {line}: {e}")))?;
        if rec.len() != 2 {
            return Err(Error::Format(format!(
                "labels line {line}: expected 2 fields, got {}",
                rec.len()
            )));
        }
        let file = rec[0].trim();
        if file.is_empty() || file.contains(['/', '\\']) || file == "." || file == ".." {
            return Err(Error::Format(format!(
                "labels line {line}: bad file name {file:?}"
            )));
        }
        let label = rec[1]
            .trim()
            .parse()
            .map_err(|e: Error| Error::Format(format!("labels line {line}: {e}")))?;
        out.push(LabelEntry {
            file: file.to_string(),
            label,
        });
    }
    Ok(out)
}
