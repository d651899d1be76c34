//! Plain-text dataset formats: snapshot and trajectory CSV files and grid
//! densities as a JSON header plus a CSV of nodal values.
//!
//! Floats are written in the shortest form that parses back to the same
//! `f64`, so every format round-trips exactly.

use std::io::{Read, Write};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Snapshot, SnapshotSeries, TrajectorySet};
use crate::stationary::GridDensity;

fn coordinate_header(prefix: &[&str], d: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((1..=d).map(|i| format!("x{i}")))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_f64(field: &str, line: usize, name: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {name}: cannot parse {field:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column {name}: non-finite value"),
        });
    }
    Ok(v)
}

fn parse_usize(field: &str, line: usize, name: &str) -> Result<usize> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {name}: cannot parse {field:?} as a non-negative integer"),
    })
}

/// Checks the header and returns the dimension `d`.
fn read_header(header: &csv::StringRecord, prefix: &[&str]) -> Result<usize> {
    let bad = |msg: String| Error::Parse { line: 1, message: msg };
    if header.len() <= prefix.len() {
        return Err(bad(format!("expected columns {} followed by x1..xd", prefix.join(","))));
    }
    let d = header.len() - prefix.len();
    let want = coordinate_header(prefix, d);
    for (got, want) in header.iter().zip(&want) {
        if got.trim() != want {
            return Err(bad(format!("expected column {want:?}, found {got:?}")));
        }
    }
    Ok(d)
}

/// Rows `time,sample_id,x1..xd` sorted by time then sample id.
pub fn write_snapshots_csv<W: Write>(series: &SnapshotSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(coordinate_header(&["time", "sample_id"], series.dim())).map_err(csv_err)?;
    let mut rec = Vec::new();
    for s in &series.snapshots {
        for (i, row) in s.samples.rows().into_iter().enumerate() {
            rec.clear();
            rec.push(format!("{:?}", s.time));
            rec.push(i.to_string());
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshots_csv<R: Read>(input: R) -> Result<SnapshotSeries> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let d = read_header(r.headers().map_err(csv_err)?, &["time", "sample_id"])?;
    let mut snapshots: Vec<(f64, Vec<f64>, usize)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != d + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", d + 2, rec.len()),
            });
        }
        let t = parse_f64(&rec[0], line, "time")?;
        let id = parse_usize(&rec[1], line, "sample_id")?;
        let new_time = snapshots.last().is_none_or(|(last, ..)| *last != t);
        if new_time {
            if let Some((last, ..)) = snapshots.last() {
                if t < *last {
                    return Err(Error::Parse {
                        line,
                        message: "rows must be sorted by time".into(),
                    });
                }
            }
            snapshots.push((t, Vec::new(), 0));
        }
        let (_, values, count) = snapshots.last_mut().expect("pushed above");
        if id != *count {
            return Err(Error::Parse {
                line,
                message: format!("expected sample_id {count}, found {id}"),
            });
        }
        *count += 1;
        for (k, field) in rec.iter().skip(2).enumerate() {
            values.push(parse_f64(field, line, &format!("x{}", k + 1))?);
        }
    }
    if snapshots.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    let snapshots = snapshots
        .into_iter()
        .map(|(time, values, n)| {
            let samples = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Numerical(e.to_string()))?;
            Ok(Snapshot { time, samples })
        })
        .collect::<Result<Vec<_>>>()?;
    SnapshotSeries::new(snapshots)
}

/// Rows `path_id,time,x1..xd` sorted by path then time. The seed is not
/// stored; read sets carry seed 0.
pub fn write_trajectories_csv<W: Write>(trajs: &TrajectorySet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(coordinate_header(&["path_id", "time"], trajs.dim())).map_err(csv_err)?;
    let mut rec = Vec::new();
    for p in 0..trajs.n_paths() {
        for (k, t) in trajs.times.iter().enumerate() {
            rec.clear();
            rec.push(p.to_string());
            rec.push(format!("{t:?}"));
            rec.extend((0..trajs.dim()).map(|i| format!("{:?}", trajs.paths[[p, k, i]])));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories_csv<R: Read>(input: R) -> Result<TrajectorySet> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let d = read_header(r.headers().map_err(csv_err)?, &["path_id", "time"])?;
    let mut times: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    let mut n_paths = 0usize;
    let mut k = 0usize;
    let mut times_known = false;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != d + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", d + 2, rec.len()),
            });
        }
        let id = parse_usize(&rec[0], line, "path_id")?;
        let t = parse_f64(&rec[1], line, "time")?;
        if n_paths == 0 || id != n_paths - 1 {
            if id != n_paths {
                return Err(Error::Parse {
                    line,
                    message: format!("expected path_id {n_paths}, found {id}"),
                });
            }
            if n_paths > 0 {
                times_known = true;
                if k != times.len() {
                    return Err(Error::Parse {
                        line,
                        message: format!("path {} has {k} rows, expected {}", n_paths - 1, times.len()),
                    });
                }
            }
            n_paths += 1;
            k = 0;
        }
        if times_known {
            if k >= times.len() || times[k] != t {
                return Err(Error::Parse {
                    line,
                    message: format!("path {id} deviates from the shared time grid"),
                });
            }
        } else {
            times.push(t);
        }
        k += 1;
        for (i, field) in rec.iter().skip(2).enumerate() {
            values.push(parse_f64(field, line, &format!("x{}", i + 1))?);
        }
    }
    if n_paths == 0 {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    if k != times.len() {
        return Err(Error::Parse {
            line: 0,
            message: format!("path {} has {k} rows, expected {}", n_paths - 1, times.len()),
        });
    }
    let paths =
        Array3::from_shape_vec((n_paths, times.len(), d), values).map_err(|e| Error::Numerical(e.to_string()))?;
    TrajectorySet::new(times, paths, 0)
}

/// Metadata stored next to the CSV of nodal values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
    pub cell_volume: f64,
    /// Name of the CSV file holding the values in row-major order.
    pub values_file: String,
}

pub fn grid_header(density: &GridDensity, values_file: &str) -> GridHeader {
    GridHeader {
        lower: density.lower.clone(),
        upper: density.upper.clone(),
        resolution: density.resolution,
        cell_volume: density.cell_volume,
        values_file: values_file.to_string(),
    }
}

/// One column `value`, one row per node in row-major order.
pub fn write_grid_values_csv<W: Write>(density: &GridDensity, mut out: W) -> Result<()> {
    let mut s = String::with_capacity(density.values.len() * 24 + 6);
    s.push_str("value\n");
    for v in &density.values {
        s.push_str(&format!("{v:?}\n"));
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_grid_density<R: Read>(header: &GridHeader, values: R) -> Result<GridDensity> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(values);
    let h = r.headers().map_err(csv_err)?;
    if h.len() != 1 || h[0].trim() != "value" {
        return Err(Error::Parse {
            line: 1,
            message: "expected a single column named value".into(),
        });
    }
    let mut vals = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        vals.push(parse_f64(&rec[0], line, "value")?);
    }
    let want = header.resolution.checked_pow(header.lower.len() as u32).unwrap_or(usize::MAX);
    if vals.len() != want {
        return Err(Error::invalid(format!(
            "grid of resolution {} in {} dimensions needs {want} values, found {}",
            header.resolution,
            header.lower.len(),
            vals.len()
        )));
    }
    if vals.iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("grid density values must be non-negative"));
    }
    let mut g = GridDensity::from_fn(header.lower.clone(), header.upper.clone(), header.resolution, |_| 0.0)?;
    g.values = vals;
    Ok(g)
}
