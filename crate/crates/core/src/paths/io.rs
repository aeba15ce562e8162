//! CSV persistence for grid paths.
//!
//! A single path is stored as `t,x1,...,xd`, one row per node. Several paths
//! sharing a grid are stored with a leading `path` column holding the replica
//! index. Floats are written in shortest round-trip form, so reading back
//! reproduces node values bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use super::GridPath;
use crate::error::{Error, Result};

pub fn write_paths<W: Write>(writer: W, paths: &[GridPath]) -> Result<()> {
    let first = paths.first().ok_or_else(|| Error::InvalidInput("no paths to write".into()))?;
    let dim = first.dim();
    let multi = paths.len() > 1;
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = Vec::with_capacity(dim + 2);
    if multi {
        header.push("path".into());
    }
    header.push("t".into());
    header.extend((1..=dim).map(|c| format!("x{c}")));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (k, path) in paths.iter().enumerate() {
        if path.dim() != dim {
            return Err(Error::InvalidInput("paths in one file must share a dimension".into()));
        }
        for i in 0..path.len() {
            row.clear();
            if multi {
                row.push(k.to_string());
            }
            row.push(path.time(i).to_string());
            row.extend(path.point(i).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_paths<R: Read>(reader: R) -> Result<Vec<GridPath>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let multi = header.get(0) == Some("path");
    let offset = usize::from(multi);
    if header.get(offset) != Some("t") || header.len() < offset + 2 {
        return Err(Error::InvalidInput(format!(
            "expected header `t,x1,...,xd` (optionally prefixed by `path`), got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let dim = header.len() - offset - 1;
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut current: Option<String> = None;
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let parse = |field: &str| -> Result<f64> {
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("row {}: cannot parse `{field}`", line + 2)))
        };
        let key = if multi { record.get(0).unwrap_or("").to_string() } else { String::new() };
        if current.as_deref() != Some(key.as_str()) {
            groups.push((Vec::new(), Vec::new()));
            current = Some(key);
        }
        let (times, values) = groups.last_mut().expect("group pushed above");
        times.push(parse(&record[offset])?);
        for c in 0..dim {
            values.push(parse(&record[offset + 1 + c])?);
        }
    }
    if groups.is_empty() {
        return Err(Error::InvalidInput("path file has no rows".into()));
    }
    groups.into_iter().map(|(times, values)| assemble(&times, dim, values)).collect()
}

fn assemble(times: &[f64], dim: usize, values: Vec<f64>) -> Result<GridPath> {
    if times.len() < 2 {
        return Err(Error::InvalidInput("a path needs at least two rows".into()));
    }
    let t0 = times[0];
    let n = times.len();
    let exact = times[1] - t0;
    let dt = if times.iter().enumerate().all(|(i, &t)| t0 + i as f64 * exact == t) {
        exact
    } else {
        (times[n - 1] - t0) / (n - 1) as f64
    };
    let tol = 1e-9 * dt.abs().max(1e-300) + 1e-12 * times[n - 1].abs();
    if let Some(i) = times.iter().enumerate().position(|(i, &t)| (t0 + i as f64 * dt - t).abs() > tol) {
        return Err(Error::InvalidInput(format!("time column is not a uniform grid (row {i})")));
    }
    GridPath::new(t0, dt, dim, values)
}

pub fn write_paths_file(path: impl AsRef<Path>, paths: &[GridPath]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_paths(std::io::BufWriter::new(file), paths)
}

pub fn read_paths_file(path: impl AsRef<Path>) -> Result<Vec<GridPath>> {
    let file = std::fs::File::open(path)?;
    read_paths(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_path_layout() {
        let p = GridPath::from_points(0.0, 0.5, &[vec![0.0, 1.0], vec![0.1, -2.5]]).unwrap();
        let mut buf = Vec::new();
        write_paths(&mut buf, std::slice::from_ref(&p)).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "t,x1,x2\n0,0,1\n0.5,0.1,-2.5\n");
        assert_eq!(read_paths(&buf[..]).unwrap(), vec![p]);
    }

    #[test]
    fn rejects_irregular_times() {
        let data = "t,x1\n0,1\n1,2\n3,3\n";
        assert!(matches!(read_paths(data.as_bytes()), Err(Error::InvalidInput(_))));
        assert!(read_paths("s,x1\n0,1\n1,2\n".as_bytes()).is_err());
        assert!(read_paths("t,x1\n0,abc\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn values_survive_a_round_trip(
            values in prop::collection::vec(-1e6f64..1e6, 4..40),
            t0 in -10.0f64..10.0,
            dt in 1e-4f64..1.0,
            count in 1usize..4,
        ) {
            let n = values.len() / 2 * 2;
            let paths: Vec<GridPath> = (0..count)
                .map(|k| GridPath::new(t0, dt, 2, values[..n].iter().map(|v| v * (k as f64 + 1.0)).collect()).unwrap())
                .collect();
            let mut buf = Vec::new();
            write_paths(&mut buf, &paths).unwrap();
            let back = read_paths(&buf[..]).unwrap();
            prop_assert_eq!(back.len(), count);
            for (a, b) in back.iter().zip(&paths) {
                prop_assert_eq!(a.values(), b.values());
                prop_assert_eq!(a.len(), b.len());
                prop_assert!((a.dt() - b.dt()).abs() <= 1e-12 * b.dt());
            }
        }
    }
}
