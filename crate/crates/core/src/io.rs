//! CSV ingestion and emission.

use std::io::{Read, Write};

use crate::bounds::{LevelSetPoint, LevelSetSample};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Which header names hold the outcome, treatment and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub y: String,
    pub t: String,
    /// `None` takes every other column, in file order.
    pub s: Option<Vec<String>>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            y: "Y".into(),
            t: "T".into(),
            s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub data: Dataset,
    /// Rows skipped under `drop_bad`.
    pub dropped: usize,
}

/// Read a dataset from comma-separated text with a header row.
///
/// A cell that is empty, non-numeric or non-finite rejects its row: the whole
/// load fails unless `drop_bad` is set, in which case the row is skipped and
/// counted. Line numbers count the header as line 1.
pub fn load_csv<R: Read>(reader: R, map: &ColumnMap, drop_bad: bool) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let iy = find(&map.y)?;
    let it = find(&map.t)?;
    let is: Vec<usize> = match &map.s {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&j| j != iy && j != it).collect(),
    };
    let d = is.len();

    let (mut y, mut t, mut s) = (Vec::new(), Vec::new(), Vec::new());
    let mut dropped = 0;
    let mut row = Vec::with_capacity(d + 2);
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        row.clear();
        let parsed = [iy, it].iter().chain(&is).try_for_each(|&j| {
            let cell = rec.get(j).unwrap_or("").trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    row.push(v);
                    Ok(())
                }
                _ => Err(Error::Parse {
                    line,
                    message: format!("column {:?}: cannot use {cell:?} as a finite number", header[j]),
                }),
            }
        });
        match parsed {
            Ok(()) => {
                y.push(row[0]);
                t.push(row[1]);
                s.extend_from_slice(&row[2..]);
            }
            Err(_) if drop_bad => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(Loaded {
        data: Dataset::new(y, t, s, d)?,
        dropped,
    })
}

/// Write `Y,T,S1,...,Sd` with shortest round-trip number formatting.
pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["Y".to_string(), "T".to_string()];
    header.extend((1..=data.d()).map(|j| format!("S{j}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut rec = Vec::with_capacity(data.d() + 2);
    for i in 0..data.n() {
        rec.clear();
        rec.push(data.y()[i].to_string());
        rec.push(data.t()[i].to_string());
        rec.extend(data.s_row(i).iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read level-set points from columns `s_1..s_d, mu, v_1..v_d, g_1..g_d`.
pub fn load_level_set<R: Read>(reader: R) -> Result<LevelSetSample> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let d = (1..).take_while(|j| header.iter().any(|h| *h == format!("s_{j}"))).count();
    let imu = find("mu")?;
    let cols = |p: &str| (1..=d).map(|j| find(&format!("{p}_{j}"))).collect::<Result<Vec<_>>>();
    let (is, iv, ig) = (cols("s")?, cols("v")?, cols("g")?);

    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |j: usize| -> Result<f64> {
            let cell = rec.get(j).unwrap_or("").trim();
            cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                message: format!("column {:?}: cannot use {cell:?} as a finite number", header[j]),
            })
        };
        let many = |idx: &[usize]| idx.iter().map(|&j| num(j)).collect::<Result<Vec<_>>>();
        points.push(LevelSetPoint {
            s: many(&is)?,
            mu: num(imu)?,
            v: many(&iv)?,
            g: many(&ig)?,
        });
    }
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    LevelSetSample::new(points)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match (e.kind(), line) {
        (csv::ErrorKind::Io(_), _) => Error::Io(e.to_string()),
        (_, Some(line)) => Error::Parse {
            line,
            message: e.to_string(),
        },
        _ => Error::Io(e.to_string()),
    }
}
